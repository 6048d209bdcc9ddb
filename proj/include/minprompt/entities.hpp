#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "minprompt/common.hpp"
#include "minprompt/corpus.hpp"

namespace minprompt {

// OntoNotes tag set plus MISC for capitalized spans the recognizer cannot type.
enum class EntityType : std::uint8_t {
  PERSON,
  GPE,
  LOC,
  ORG,
  DATE,
  TIME,
  CARDINAL,
  ORDINAL,
  MONEY,
  PERCENT,
  FAC,
  EVENT,
  PRODUCT,
  NORP,
  QUANTITY,
  LAW,
  LANGUAGE,
  WORK_OF_ART,
  MISC,
};

inline constexpr std::array<std::string_view, 19> kEntityTypeNames = {
    "PERSON", "GPE",     "LOC",  "ORG",     "DATE",     "TIME", "CARDINAL", "ORDINAL",     "MONEY", "PERCENT",
    "FAC",    "EVENT",   "PRODUCT", "NORP", "QUANTITY", "LAW",  "LANGUAGE", "WORK_OF_ART", "MISC"};

inline std::string_view to_string(EntityType t) { return kEntityTypeNames[static_cast<std::size_t>(t)]; }

inline std::optional<EntityType> try_parse_entity_type(std::string_view s) {
  for (std::size_t i = 0; i < kEntityTypeNames.size(); ++i)
    if (kEntityTypeNames[i] == s) return static_cast<EntityType>(i);
  return std::nullopt;
}

inline EntityType parse_entity_type(std::string_view s) {
  if (auto t = try_parse_entity_type(s)) return *t;
  throw ValidationError("unknown entity type '" + std::string(s) + "'");
}

enum class WhFamily { who, where, when, how_many, what };

inline std::string_view to_string(WhFamily f) {
  switch (f) {
    case WhFamily::who: return "who";
    case WhFamily::where: return "where";
    case WhFamily::when: return "when";
    case WhFamily::how_many: return "how many";
    case WhFamily::what: return "what";
  }
  return "what";
}

inline WhFamily wh_family(EntityType t) {
  switch (t) {
    case EntityType::PERSON:
    case EntityType::NORP: return WhFamily::who;
    case EntityType::GPE:
    case EntityType::LOC:
    case EntityType::FAC: return WhFamily::where;
    case EntityType::DATE:
    case EntityType::TIME: return WhFamily::when;
    case EntityType::CARDINAL:
    case EntityType::ORDINAL:
    case EntityType::MONEY:
    case EntityType::PERCENT:
    case EntityType::QUANTITY: return WhFamily::how_many;
    default: return WhFamily::what;
  }
}

// Case-folded (ASCII), whitespace-collapsed form of a surface string. This is
// the entity identity used for graph edges.
inline std::string normalize_key(std::string_view surface) {
  std::string folded = text::collapse_whitespace(surface);
  for (char& c : folded) c = text::to_lower(c);
  return folded;
}

struct EntityMention {
  std::string surface;
  EntityType type = EntityType::MISC;
  Span span;  // byte offsets into the sentence text
  std::string key;

  bool operator==(const EntityMention&) const = default;
};

// The single validator every recognizer mode goes through. `where` prefixes
// error messages.
inline EntityMention make_mention(std::string_view sentence_text, std::size_t start, std::size_t end,
                                  std::string_view surface, std::string_view type, std::string_view where = {}) {
  auto fail = [&](const std::string& msg) {
    throw ValidationError((where.empty() ? std::string() : std::string(where) + ": ") + msg);
  };
  if (start >= end || end > sentence_text.size())
    fail("span [" + std::to_string(start) + "," + std::to_string(end) + ") out of bounds for sentence of " +
         std::to_string(sentence_text.size()) + " bytes");
  if (!text::is_utf8_boundary(sentence_text, start) || !text::is_utf8_boundary(sentence_text, end))
    fail("span does not fall on UTF-8 boundaries");
  if (sentence_text.substr(start, end - start) != surface)
    fail("surface '" + std::string(surface) + "' does not match sentence slice '" +
         std::string(sentence_text.substr(start, end - start)) + "'");
  auto parsed = try_parse_entity_type(type);
  if (!parsed) fail("unknown entity type '" + std::string(type) + "'");
  EntityMention m{std::string(surface), *parsed, {start, end}, normalize_key(surface)};
  if (m.key.empty()) fail("mention normalizes to an empty key");
  return m;
}

// Longest span wins, then leftmost; within equal spans the earlier entry in
// `mentions` wins. Output is ordered by span start.
inline std::vector<EntityMention> resolve_overlaps(std::vector<EntityMention> mentions) {
  std::vector<std::size_t> order(mentions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = mentions[a].span;
    const auto& y = mentions[b].span;
    if (x.size() != y.size()) return x.size() > y.size();
    return x.start < y.start;
  });
  std::vector<EntityMention> kept;
  for (std::size_t i : order) {
    const auto& s = mentions[i].span;
    bool clash = false;
    for (const auto& k : kept)
      if (s.start < k.span.end && k.span.start < s.end) {
        clash = true;
        break;
      }
    if (!clash) kept.push_back(std::move(mentions[i]));
  }
  std::sort(kept.begin(), kept.end(), [](const EntityMention& a, const EntityMention& b) {
    return a.span.start < b.span.start;
  });
  return kept;
}

// ---------------------------------------------------------------------------
// Gazetteer

// Byte trie over gazetteer terms. Matching is case-sensitive and anchored to
// word boundaries on both sides.
class Gazetteer {
 public:
  void add(std::string_view term, EntityType type) {
    term = text::trim(term);
    if (term.empty()) return;
    std::uint32_t node = 0;
    for (char c : term) {
      auto key = std::make_pair(node, c);
      auto it = edges_.find(key);
      if (it == edges_.end()) {
        nodes_.push_back({});
        it = edges_.emplace(key, static_cast<std::uint32_t>(nodes_.size() - 1)).first;
      }
      node = it->second;
    }
    if (!nodes_[node].type) ++size_;
    nodes_[node].type = type;
  }

  std::size_t size() const { return size_; }

  // Longest term starting at `pos` whose end is a word boundary, as (length, type).
  std::optional<std::pair<std::size_t, EntityType>> longest_match(std::string_view s, std::size_t pos) const {
    std::optional<std::pair<std::size_t, EntityType>> best;
    std::uint32_t node = 0;
    for (std::size_t i = pos; i < s.size(); ++i) {
      auto it = edges_.find({node, s[i]});
      if (it == edges_.end()) break;
      node = it->second;
      if (nodes_[node].type) {
        std::size_t end = i + 1;
        bool boundary = end == s.size() || !text::is_word_byte(s[end]) || !text::is_word_byte(s[end - 1]);
        if (boundary) best = {{end - pos, *nodes_[node].type}};
      }
    }
    return best;
  }

  // Tab-separated "term<TAB>TYPE" lines; '#' starts a comment line.
  static Gazetteer load(const std::vector<std::filesystem::path>& paths) {
    Gazetteer g;
    for (const auto& p : paths) g.merge_file(p);
    return g;
  }

  void merge_file(const std::filesystem::path& path) {
    std::istringstream in(detail::read_file(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (text::trim(line).empty() || text::trim(line).front() == '#') continue;
      auto tab = line.rfind('\t');
      if (tab == std::string::npos)
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 'term<TAB>TYPE'");
      auto type = try_parse_entity_type(text::trim(std::string_view(line).substr(tab + 1)));
      if (!type)
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": unknown entity type");
      add(std::string_view(line).substr(0, tab), *type);
    }
  }

 private:
  struct PairHash {
    std::size_t operator()(const std::pair<std::uint32_t, char>& p) const {
      return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(p.first) << 8) ^ static_cast<unsigned char>(p.second));
    }
  };
  struct Node {
    std::optional<EntityType> type;
  };
  std::vector<Node> nodes_{Node{}};
  std::unordered_map<std::pair<std::uint32_t, char>, std::uint32_t, PairHash> edges_;
  std::size_t size_ = 0;
};

// ---------------------------------------------------------------------------
// Built-in recognizer

namespace detail {

struct Token {
  std::size_t start;
  std::size_t end;
};

// Word tokens: runs of word bytes, joined across a single '.', ',', '\'', '&'
// or '-' that sits between two word bytes ("Crypto.com", "1,000", "O'Neal").
// Any other non-space byte becomes a one-byte token.
inline std::vector<Token> word_tokens(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (text::is_space(s[i])) {
      ++i;
      continue;
    }
    if (!text::is_word_byte(s[i])) {
      out.push_back({i, i + 1});
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size()) {
      if (text::is_word_byte(s[j])) {
        ++j;
      } else if ((s[j] == '.' || s[j] == ',' || s[j] == '\'' || s[j] == '&' || s[j] == '-') && j + 1 < s.size() &&
                 text::is_word_byte(s[j + 1]) && text::is_word_byte(s[j - 1])) {
        ++j;
      } else {
        break;
      }
    }
    out.push_back({i, j});
    i = j;
  }
  return out;
}

inline bool is_numeric(std::string_view t) {
  if (t.empty() || !text::is_digit(t.front()) || !text::is_digit(t.back())) return false;
  for (char c : t)
    if (!text::is_digit(c) && c != ',' && c != '.') return false;
  return true;
}

inline bool is_year(std::string_view t) {
  return t.size() == 4 && std::all_of(t.begin(), t.end(), text::is_digit);
}

inline bool is_day(std::string_view t) {
  std::size_t digits = 0;
  while (digits < t.size() && text::is_digit(t[digits])) ++digits;
  if (digits == 0 || digits > 2) return false;
  auto suffix = t.substr(digits);
  if (!suffix.empty() && suffix != "st" && suffix != "nd" && suffix != "rd" && suffix != "th") return false;
  int v = std::stoi(std::string(t.substr(0, digits)));
  return v >= 1 && v <= 31;
}

inline bool is_month(std::string_view t) {
  static const std::set<std::string_view> months = {"January", "February", "March",     "April",   "May",
                                                      "June",    "July",     "August",    "September", "October",
                                                      "November", "December"};
  return months.count(t) != 0;
}

inline bool is_number_word(std::string_view t) {
  static const std::set<std::string, std::less<>> words = {
      "one",     "two",     "three",    "four",     "five",    "six",       "seven",    "eight",    "nine",
      "ten",     "eleven",  "twelve",   "thirteen", "fourteen", "fifteen",  "sixteen",  "seventeen", "eighteen",
      "nineteen", "twenty", "thirty",   "forty",    "fifty",   "sixty",     "seventy",  "eighty",   "ninety",
      "hundred", "thousand", "million", "billion",  "trillion", "dozen"};
  std::string lower(t);
  for (char& c : lower) c = text::to_lower(c);
  // hyphenated compounds such as "twenty-five"
  for (const auto& part : text::split(lower, '-'))
    if (!words.count(part)) return false;
  return true;
}

inline bool is_scale_word(std::string_view t) {
  return t == "thousand" || t == "million" || t == "billion" || t == "trillion";
}

inline bool is_currency_at(std::string_view s, std::size_t pos, std::size_t& len) {
  if (s[pos] == '$') {
    len = 1;
    return true;
  }
  for (std::string_view sym : {"\xE2\x82\xAC", "\xC2\xA3", "\xC2\xA5"}) {  // euro, pound, yen
    if (s.substr(pos, sym.size()) == sym) {
      len = sym.size();
      return true;
    }
  }
  return false;
}

struct Candidate {
  Span span;
  EntityType type;
  int source;  // 0 gazetteer, 1 pattern, 2 capitalization
};

inline std::vector<Candidate> pattern_candidates(std::string_view s, const std::vector<Token>& toks) {
  std::vector<Candidate> out;
  auto tok = [&](std::size_t i) { return s.substr(toks[i].start, toks[i].end - toks[i].start); };
  auto adjacent = [&](std::size_t i) {  // token i+1 follows token i without a gap
    return i + 1 < toks.size() && toks[i + 1].start == toks[i].end;
  };

  for (std::size_t i = 0; i < toks.size(); ++i) {
    std::string_view t = tok(i);

    // month-name dates: "January 5, 1960", "January 1960", "5 January 1960"
    if (is_month(t)) {
      std::size_t first = i, last = i;
      if (i > 0 && is_day(tok(i - 1))) first = i - 1;
      std::size_t j = i + 1;
      if (j < toks.size() && is_day(tok(j)) && first == i) {
        last = j;
        ++j;
        if (j < toks.size() && tok(j) == "," && j + 1 < toks.size() && is_year(tok(j + 1))) last = j + 1;
      } else if (j < toks.size() && is_year(tok(j))) {
        last = j;
      }
      if (first != last) out.push_back({{toks[first].start, toks[last].end}, EntityType::DATE, 1});
      continue;
    }

    // currency followed by a number (and optional scale word)
    std::size_t cur_len = 0;
    if (is_currency_at(s, toks[i].start, cur_len)) {
      std::size_t last = toks.size();
      if (cur_len < toks[i].end - toks[i].start) {
        // multi-byte symbols glue onto the number: "€5"
        if (is_numeric(t.substr(cur_len))) last = i;
      } else if (adjacent(i) && is_numeric(tok(i + 1))) {
        last = i + 1;
      }
      if (last != toks.size()) {
        if (last + 1 < toks.size() && is_scale_word(tok(last + 1))) ++last;
        out.push_back({{toks[i].start, toks[last].end}, EntityType::MONEY, 1});
        i = last;
        continue;
      }
    }

    if (is_numeric(t)) {
      if (adjacent(i) && tok(i + 1) == "%") {
        out.push_back({{toks[i].start, toks[i + 1].end}, EntityType::PERCENT, 1});
      } else if (i + 1 < toks.size() && tok(i + 1) == "percent") {
        out.push_back({{toks[i].start, toks[i + 1].end}, EntityType::PERCENT, 1});
      } else if (is_year(t)) {
        out.push_back({{toks[i].start, toks[i].end}, EntityType::DATE, 1});
      } else {
        out.push_back({{toks[i].start, toks[i].end}, EntityType::CARDINAL, 1});
      }
      continue;
    }

    if (is_number_word(t)) {
      std::size_t last = i;
      while (last + 1 < toks.size() && is_number_word(tok(last + 1))) ++last;
      out.push_back({{toks[i].start, toks[last].end}, EntityType::CARDINAL, 1});
      i = last;
    }
  }
  return out;
}

// Maximal runs of capitalized word tokens. The sentence-initial token is
// dropped from a run since its capital carries no signal.
inline std::vector<Candidate> capitalized_candidates(std::string_view s, const std::vector<Token>& toks) {
  std::vector<Candidate> out;
  auto capitalized = [&](std::size_t i) {
    return text::is_upper(s[toks[i].start]) && text::is_word_byte(s[toks[i].end - 1]);
  };
  std::size_t first_word = 0;
  while (first_word < toks.size() && !text::is_word_byte(s[toks[first_word].start])) ++first_word;
  std::size_t i = 0;
  while (i < toks.size()) {
    if (!capitalized(i)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < toks.size() && capitalized(j + 1)) {
      // only single spaces may separate the run's tokens
      std::string_view gap = s.substr(toks[j].end, toks[j + 1].start - toks[j].end);
      if (gap != " ") break;
      ++j;
    }
    std::size_t lo = (i == first_word) ? i + 1 : i;
    if (lo <= j) out.push_back({{toks[lo].start, toks[j].end}, EntityType::MISC, 2});
    i = j + 1;
  }
  return out;
}

}  // namespace detail

// Deterministic stand-in recognizer: gazetteer hits, typed patterns, and
// capitalized runs, resolved longest-span-first, then leftmost, then by source
// (gazetteer, pattern, capitalization).
inline std::vector<EntityMention> recognize_builtin(std::string_view sentence, const Gazetteer& gazetteer) {
  std::vector<detail::Candidate> cands;
  for (std::size_t pos = 0; pos < sentence.size(); ++pos) {
    if (pos > 0 && text::is_word_byte(sentence[pos - 1]) && text::is_word_byte(sentence[pos])) continue;
    if (text::is_space(sentence[pos])) continue;
    if (auto hit = gazetteer.longest_match(sentence, pos))
      cands.push_back({{pos, pos + hit->first}, hit->second, 0});
  }
  auto toks = detail::word_tokens(sentence);
  for (auto& c : detail::pattern_candidates(sentence, toks)) cands.push_back(c);
  for (auto& c : detail::capitalized_candidates(sentence, toks)) cands.push_back(c);

  std::stable_sort(cands.begin(), cands.end(), [](const detail::Candidate& a, const detail::Candidate& b) {
    if (a.span.size() != b.span.size()) return a.span.size() > b.span.size();
    if (a.span.start != b.span.start) return a.span.start < b.span.start;
    return a.source < b.source;
  });
  std::vector<EntityMention> mentions;
  for (const auto& c : cands) {
    auto surface = sentence.substr(c.span.start, c.span.size());
    mentions.push_back(make_mention(sentence, c.span.start, c.span.end, surface, to_string(c.type)));
  }
  return resolve_overlaps(std::move(mentions));
}

// ---------------------------------------------------------------------------
// Sidecar annotations and the recognizer service

// Mentions per sentence, indexed by sentence id.
using MentionTable = std::vector<std::vector<EntityMention>>;

// Parses one {"sentence_id","start","end","surface","type"} record and
// validates it against the sentence table.
inline std::pair<SentenceId, EntityMention> parse_mention_record(const nlohmann::json& rec,
                                                                 const std::vector<Sentence>& sentences,
                                                                 const std::string& where) {
  if (!rec.is_object()) throw ValidationError(where + ": record is not an object");
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!rec.contains(name)) throw ValidationError(where + ": missing field \"" + name + "\"");
    return rec.at(name);
  };
  const auto& sid = field("sentence_id");
  const auto& start = field("start");
  const auto& end = field("end");
  const auto& surface = field("surface");
  const auto& type = field("type");
  if (!sid.is_number_integer() || !start.is_number_integer() || !end.is_number_integer() || !surface.is_string() ||
      !type.is_string())
    throw ValidationError(where + ": field has the wrong JSON type");
  auto id = sid.get<std::int64_t>();
  if (id < 0 || static_cast<std::uint64_t>(id) >= sentences.size())
    throw ValidationError(where + ": unknown sentence_id " + std::to_string(id));
  auto s = start.get<std::int64_t>(), e = end.get<std::int64_t>();
  if (s < 0 || e < 0) throw ValidationError(where + ": negative offset");
  const auto& sent = sentences[static_cast<std::size_t>(id)];
  return {static_cast<SentenceId>(id),
          make_mention(sent.text, static_cast<std::size_t>(s), static_cast<std::size_t>(e),
                       surface.get<std::string>(), type.get<std::string>(), where)};
}

// Groups validated records by sentence and applies overlap resolution.
inline MentionTable group_mentions(std::vector<std::pair<SentenceId, EntityMention>> records, std::size_t n) {
  MentionTable table(n);
  for (auto& [id, m] : records) table[id].push_back(std::move(m));
  for (auto& v : table) v = resolve_overlaps(std::move(v));
  return table;
}

inline MentionTable load_sidecar(const std::filesystem::path& path, const std::vector<Sentence>& sentences) {
  std::istringstream in(detail::read_file(path));
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::pair<SentenceId, EntityMention>> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    std::string where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(where + ": malformed JSON: " + e.what());
    }
    records.push_back(parse_mention_record(rec, sentences, where));
  }
  return group_mentions(std::move(records), sentences.size());
}

inline nlohmann::json mention_record(SentenceId id, const EntityMention& m) {
  nlohmann::ordered_json j;
  j["sentence_id"] = id;
  j["start"] = m.span.start;
  j["end"] = m.span.end;
  j["surface"] = m.surface;
  j["type"] = std::string(to_string(m.type));
  return j;
}

// Drops mentions whose key is stoplisted.
inline void apply_stoplist(MentionTable& table, const std::unordered_set<std::string>& stoplist) {
  if (stoplist.empty()) return;
  for (auto& v : table)
    std::erase_if(v, [&](const EntityMention& m) { return stoplist.count(m.key) != 0; });
}

inline std::unordered_set<std::string> load_stoplist(const std::filesystem::path& path) {
  std::unordered_set<std::string> out;
  std::istringstream in(detail::read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.insert(normalize_key(t));
  }
  return out;
}

inline MentionTable recognize_all_builtin(const std::vector<Sentence>& sentences, const Gazetteer& gazetteer,
                                          unsigned workers = 1) {
  MentionTable table(sentences.size());
  parallel_for(sentences.size(), workers,
               [&](std::size_t i) { table[i] = recognize_builtin(sentences[i].text, gazetteer); });
  return table;
}

}  // namespace minprompt
