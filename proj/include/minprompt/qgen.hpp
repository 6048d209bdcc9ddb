#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "minprompt/corpus.hpp"
#include "minprompt/entities.hpp"

namespace minprompt {

inline constexpr std::string_view kClozeMask = "[MASK]";

enum class QuestionStyle { cloze, wh };

inline std::string_view to_string(QuestionStyle s) { return s == QuestionStyle::cloze ? "cloze" : "wh"; }

enum class StyleSelection { wh, cloze, both };

inline StyleSelection parse_style_selection(std::string_view s) {
  if (s == "wh") return StyleSelection::wh;
  if (s == "cloze") return StyleSelection::cloze;
  if (s == "both") return StyleSelection::both;
  throw ArgumentError("unknown question style '" + std::string(s) + "' (expected wh, cloze or both)");
}

inline std::string_view to_string(StyleSelection s) {
  switch (s) {
    case StyleSelection::wh: return "wh";
    case StyleSelection::cloze: return "cloze";
    case StyleSelection::both: return "both";
  }
  return "wh";
}

// Fragment order after the wh-component.
enum class WhOrder { wh_b_a, wh_a_b };

inline WhOrder parse_wh_order(std::string_view s) {
  if (s == "wh_b_a") return WhOrder::wh_b_a;
  if (s == "wh_a_b") return WhOrder::wh_a_b;
  throw ArgumentError("unknown wh template order '" + std::string(s) + "' (expected wh_b_a or wh_a_b)");
}

inline std::string_view to_string(WhOrder o) { return o == WhOrder::wh_b_a ? "wh_b_a" : "wh_a_b"; }

struct QaPair {
  std::string question;
  std::string answer;
  std::string context;
  QuestionStyle style = QuestionStyle::wh;
  SentenceId source_sentence_id = 0;
  EntityType answer_type = EntityType::MISC;
  // Byte offset of the chosen answer occurrence inside `context`, when known.
  std::optional<std::size_t> context_offset;
};

struct Provenance {
  std::string dataset_id;
  std::string doc_id;
  SentenceId sentence_id = 0;
  Origin origin = Origin::corpus;
};

struct AugmentedSample {
  std::string input;
  std::string target;
  QaPair qa;
  double lambda_weight = 1.0;
  Provenance provenance;
};

// Wh-bigram distribution per answer entity type.
class WhPriors {
 public:
  using Distribution = std::vector<std::pair<std::string, double>>;

  void set(EntityType type, Distribution dist) { table_[type] = std::move(dist); }

  const Distribution* find(EntityType type) const {
    auto it = table_.find(type);
    return it == table_.end() ? nullptr : &it->second;
  }

  // Positive weights summing to 1 within 1e-9 for every type.
  void validate() const {
    for (const auto& [type, dist] : table_) {
      double sum = 0.0;
      for (const auto& [bigram, p] : dist) {
        if (!(p > 0.0)) throw ValidationError("wh priors: non-positive probability for " + std::string(to_string(type)));
        if (text::trim(bigram).empty()) throw ValidationError("wh priors: empty bigram for " + std::string(to_string(type)));
        sum += p;
      }
      if (dist.empty() || std::abs(sum - 1.0) > 1e-9)
        throw ValidationError("wh priors: probabilities for " + std::string(to_string(type)) + " sum to " +
                              std::to_string(sum));
    }
  }

  // One bigram per type at probability 1.
  static WhPriors defaults() {
    WhPriors p;
    auto one = [&](EntityType t, const char* b) { p.set(t, {{b, 1.0}}); };
    one(EntityType::PERSON, "who was");
    one(EntityType::NORP, "who were");
    one(EntityType::GPE, "where did");
    one(EntityType::LOC, "where did");
    one(EntityType::FAC, "where did");
    one(EntityType::DATE, "when did");
    one(EntityType::TIME, "when did");
    one(EntityType::CARDINAL, "how many");
    one(EntityType::ORDINAL, "how many");
    one(EntityType::QUANTITY, "how many");
    one(EntityType::MONEY, "how much");
    one(EntityType::PERCENT, "how much");
    one(EntityType::ORG, "what is");
    one(EntityType::EVENT, "what is");
    one(EntityType::PRODUCT, "what is");
    one(EntityType::LAW, "what is");
    one(EntityType::LANGUAGE, "what is");
    one(EntityType::WORK_OF_ART, "what is");
    one(EntityType::MISC, "what is");
    return p;
  }

  // "TYPE<TAB>bigram<TAB>probability" per line; '#' comments.
  static WhPriors load(const std::filesystem::path& path) {
    WhPriors p;
    std::istringstream in(detail::read_file(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      auto t = text::trim(line);
      if (t.empty() || t.front() == '#') continue;
      auto cols = text::split(line, '\t');
      std::string where = path.string() + ":" + std::to_string(line_no);
      if (cols.size() != 3) throw ParseError(where + ": expected TYPE<TAB>bigram<TAB>probability");
      auto type = try_parse_entity_type(text::trim(cols[0]));
      if (!type) throw ParseError(where + ": unknown entity type");
      double prob = 0.0;
      try {
        std::size_t used = 0;
        prob = std::stod(cols[2], &used);
        if (text::trim(std::string_view(cols[2]).substr(used)).size() != 0) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ParseError(where + ": bad probability '" + cols[2] + "'");
      }
      p.table_[*type].emplace_back(std::string(text::trim(cols[1])), prob);
    }
    p.validate();
    return p;
  }

 private:
  std::map<EntityType, Distribution> table_;
};

// Per-sample seed from (global seed, sentence id, mention offset).
inline std::uint64_t sample_seed(std::uint64_t global_seed, SentenceId sentence, std::size_t mention_offset) {
  return mix_seed(mix_seed(mix_seed(global_seed) ^ sentence) ^ static_cast<std::uint64_t>(mention_offset));
}

// Inverse-CDF draw. Types missing from the priors fall back to the bare
// wh-family word.
inline std::string sample_wh_bigram(const WhPriors& priors, EntityType type, std::uint64_t seed) {
  const auto* dist = priors.find(type);
  if (dist == nullptr || dist->empty()) return std::string(to_string(wh_family(type)));
  std::mt19937_64 rng(seed);
  double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  double cum = 0.0;
  for (const auto& [bigram, p] : *dist) {
    cum += p;
    if (u < cum) return bigram;
  }
  return dist->back().first;
}

inline void check_answer_span(std::string_view sentence, const EntityMention& answer) {
  if (answer.span.start >= answer.span.end || answer.span.end > sentence.size())
    throw ArgumentError("answer span [" + std::to_string(answer.span.start) + "," + std::to_string(answer.span.end) +
                        ") outside sentence of " + std::to_string(sentence.size()) + " bytes");
}

// [Fragment A] [Answer] [Fragment B]; B loses trailing sentence punctuation.
inline std::pair<std::string, std::string> split_fragments(std::string_view sentence, const EntityMention& answer) {
  check_answer_span(sentence, answer);
  std::string_view a = text::trim(sentence.substr(0, answer.span.start));
  std::string_view b = text::trim(sentence.substr(answer.span.end));
  while (!b.empty() && (b.back() == '.' || b.back() == '!' || b.back() == '?')) b.remove_suffix(1);
  b = text::trim(b);
  return {std::string(a), std::string(b)};
}

struct QaContext {
  std::string text;
  std::optional<std::size_t> answer_offset;
};

inline QaPair generate_cloze(std::string_view sentence, const EntityMention& answer, QaContext context = {},
                             SentenceId source = 0) {
  check_answer_span(sentence, answer);
  QaPair qa;
  qa.question.reserve(sentence.size());
  qa.question.append(sentence.substr(0, answer.span.start));
  qa.question.append(kClozeMask);
  qa.question.append(sentence.substr(answer.span.end));
  qa.answer = answer.surface;
  qa.context = std::move(context.text);
  qa.context_offset = context.answer_offset;
  qa.style = QuestionStyle::cloze;
  qa.source_sentence_id = source;
  qa.answer_type = answer.type;
  return qa;
}

inline QaPair generate_wh(std::string_view sentence, const EntityMention& answer, const std::string& wh_bigram,
                          QaContext context = {}, SentenceId source = 0, WhOrder order = WhOrder::wh_b_a) {
  auto [frag_a, frag_b] = split_fragments(sentence, answer);
  const std::string& first = order == WhOrder::wh_b_a ? frag_b : frag_a;
  const std::string& second = order == WhOrder::wh_b_a ? frag_a : frag_b;
  std::string q = wh_bigram;
  for (const std::string* part : {&first, &second})
    if (!part->empty()) q += " " + *part;
  QaPair qa;
  qa.question = text::collapse_whitespace(q) + "?";
  qa.answer = answer.surface;
  qa.context = std::move(context.text);
  qa.context_offset = context.answer_offset;
  qa.style = QuestionStyle::wh;
  qa.source_sentence_id = source;
  qa.answer_type = answer.type;
  return qa;
}

inline std::string generate_wh_question(std::string_view sentence, const EntityMention& answer, const WhPriors& priors,
                                        std::uint64_t seed, WhOrder order = WhOrder::wh_b_a) {
  return generate_wh(sentence, answer, sample_wh_bigram(priors, answer.type, seed), {}, 0, order).question;
}

// Empty string when the pair satisfies its style's invariants, else the reason.
inline std::string qa_violation(const QaPair& qa, std::string_view source_sentence) {
  if (qa.style == QuestionStyle::cloze) {
    auto first = qa.question.find(kClozeMask);
    if (first == std::string::npos || qa.question.find(kClozeMask, first + 1) != std::string::npos)
      return "cloze question must contain exactly one " + std::string(kClozeMask);
    std::string restored = qa.question;
    restored.replace(first, kClozeMask.size(), qa.answer);
    if (restored != source_sentence) return "cloze question does not reconstruct the source sentence";
    return {};
  }
  if (qa.question.empty() || qa.question.back() != '?') return "wh question must end with '?'";
  if (qa.question.find(qa.answer) != std::string::npos) return "wh question contains the answer";
  return {};
}

namespace detail {

inline bool boundary_match(std::string_view s, std::size_t pos, std::size_t len) {
  bool left = pos == 0 || !text::is_word_byte(s[pos - 1]) || !text::is_word_byte(s[pos]);
  std::size_t end = pos + len;
  bool right = end == s.size() || !text::is_word_byte(s[end]) || !text::is_word_byte(s[end - 1]);
  return left && right;
}

// Position of the answer occurrence to mask: the recorded offset if it still
// points at the answer, else the first word-bounded occurrence.
inline std::optional<std::size_t> locate_answer(const QaPair& qa) {
  if (qa.answer.empty()) return std::nullopt;
  if (qa.context_offset && *qa.context_offset + qa.answer.size() <= qa.context.size() &&
      std::string_view(qa.context).substr(*qa.context_offset, qa.answer.size()) == qa.answer)
    return qa.context_offset;
  for (std::size_t pos = qa.context.find(qa.answer); pos != std::string::npos;
       pos = qa.context.find(qa.answer, pos + 1))
    if (boundary_match(qa.context, pos, qa.answer.size())) return pos;
  return std::nullopt;
}

}  // namespace detail

// Prompt pair: input = "Question: q Answer: <mask> Context: c'" where c' has
// the chosen answer occurrence masked; target = "Question: q Answer: a
// Context: c". Returns nothing (and sets `skip_reason`) when the answer cannot
// be found in a non-empty context.
inline std::optional<AugmentedSample> format_prompt(const QaPair& qa, std::string_view mask_token = "<mask>",
                                                    std::string* skip_reason = nullptr) {
  std::string masked = qa.context;
  if (!qa.context.empty()) {
    auto pos = detail::locate_answer(qa);
    if (!pos) {
      if (skip_reason) *skip_reason = "answer '" + qa.answer + "' not found in context";
      return std::nullopt;
    }
    masked.replace(*pos, qa.answer.size(), mask_token);
  }
  AugmentedSample s;
  s.input = "Question: " + qa.question + " Answer: " + std::string(mask_token) + " Context: " + masked;
  s.target = "Question: " + qa.question + " Answer: " + qa.answer + " Context: " + qa.context;
  s.qa = qa;
  return s;
}

inline nlohmann::ordered_json to_json(const AugmentedSample& s) {
  nlohmann::ordered_json j;
  j["input"] = s.input;
  j["target"] = s.target;
  j["question"] = s.qa.question;
  j["answer"] = s.qa.answer;
  j["context"] = s.qa.context;
  j["style"] = std::string(to_string(s.qa.style));
  j["dataset_id"] = s.provenance.dataset_id;
  j["doc_id"] = s.provenance.doc_id;
  j["sentence_id"] = s.provenance.sentence_id;
  j["lambda"] = s.lambda_weight;
  return j;
}

struct GenerationConfig {
  StyleSelection styles = StyleSelection::wh;
  WhOrder order = WhOrder::wh_b_a;
  std::string mask_token = "<mask>";
  double lambda_weight = 1.0;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

// One selected sentence with what generation needs from the corpus.
struct GenerationSource {
  const Sentence* sentence = nullptr;
  const std::vector<EntityMention>* mentions = nullptr;
  std::string_view context;           // document text the QA pair is answered from
  std::string dataset_id;
  // Offset of the sentence inside `context`, when the sentence comes from it.
  std::optional<std::size_t> sentence_offset;
  // Known answer positions in `context` by entity key (retrieved sentences).
  std::map<std::string, std::size_t> anchors;
};

struct GenerationReport {
  std::size_t generated = 0;
  std::size_t duplicates = 0;
  std::vector<std::string> skipped;  // one reason per skipped candidate
};

// One sample per (selected sentence, mention, style), in sentence order then
// mention offset; exact (input, target) duplicates keep their first copy.
inline std::vector<AugmentedSample> assemble_dataset(const std::vector<GenerationSource>& sources,
                                                     const WhPriors& priors, const GenerationConfig& config,
                                                     GenerationReport* report = nullptr) {
  std::vector<std::vector<AugmentedSample>> per_source(sources.size());
  std::vector<std::vector<std::string>> per_skips(sources.size());
  parallel_for(sources.size(), config.workers, [&](std::size_t i) {
    const auto& src = sources[i];
    const Sentence& sent = *src.sentence;
    for (const auto& m : *src.mentions) {
      QaContext ctx{std::string(src.context), std::nullopt};
      if (src.sentence_offset) {
        ctx.answer_offset = *src.sentence_offset + m.span.start;
      } else if (auto it = src.anchors.find(m.key); it != src.anchors.end()) {
        ctx.answer_offset = it->second;
      }
      std::vector<QaPair> pairs;
      if (config.styles != StyleSelection::wh) pairs.push_back(generate_cloze(sent.text, m, ctx, sent.id));
      if (config.styles != StyleSelection::cloze) {
        auto bigram = sample_wh_bigram(priors, m.type, sample_seed(config.seed, sent.id, m.span.start));
        pairs.push_back(generate_wh(sent.text, m, bigram, ctx, sent.id, config.order));
      }
      for (auto& qa : pairs) {
        std::string where = "sentence " + std::to_string(sent.id) + " mention '" + m.surface + "' (" +
                            std::string(to_string(qa.style)) + "): ";
        if (auto bad = qa_violation(qa, sent.text); !bad.empty()) {
          per_skips[i].push_back(where + bad);
          continue;
        }
        std::string reason;
        auto sample = format_prompt(qa, config.mask_token, &reason);
        if (!sample) {
          per_skips[i].push_back(where + reason);
          continue;
        }
        sample->lambda_weight = config.lambda_weight;
        sample->provenance = {src.dataset_id, sent.doc_id, sent.id, sent.origin};
        per_source[i].push_back(std::move(*sample));
      }
    }
  });

  std::vector<AugmentedSample> out;
  std::set<std::pair<std::string, std::string>> seen;
  GenerationReport local;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    for (auto& s : per_source[i]) {
      if (!seen.emplace(s.input, s.target).second) {
        ++local.duplicates;
        continue;
      }
      out.push_back(std::move(s));
    }
    for (auto& r : per_skips[i]) local.skipped.push_back(std::move(r));
  }
  local.generated = out.size();
  if (report) *report = std::move(local);
  return out;
}

}  // namespace minprompt
