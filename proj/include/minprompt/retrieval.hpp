#pragma once

#include <cmath>
#include <cstring>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "minprompt/corpus.hpp"
#include "minprompt/entities.hpp"

namespace minprompt {

// Okapi BM25 over sentences. Sentence references are positions in the
// indexed sentence vector. Sentences without tokens are not indexed.
class Bm25Index {
 public:
  struct Posting {
    std::uint32_t sentence;
    std::uint32_t tf;
    bool operator==(const Posting&) const = default;
  };

  struct Scored {
    std::uint32_t sentence;
    double score;
  };

  Bm25Index() = default;

  explicit Bm25Index(const std::vector<std::string_view>& texts, double k1 = 1.2, double b = 0.75) : k1_(k1), b_(b) {
    lengths_.assign(texts.size(), 0);
    std::uint64_t total = 0;
    for (std::uint32_t i = 0; i < texts.size(); ++i) {
      auto toks = text::simple_tokens(texts[i]);
      if (toks.empty()) continue;
      lengths_[i] = static_cast<std::uint32_t>(toks.size());
      total += toks.size();
      ++indexed_;
      std::sort(toks.begin(), toks.end());
      for (std::size_t j = 0; j < toks.size();) {
        std::size_t k = j;
        while (k < toks.size() && toks[k] == toks[j]) ++k;
        auto [it, inserted] = vocab_.try_emplace(toks[j], static_cast<std::uint32_t>(postings_.size()));
        if (inserted) {
          terms_.push_back(toks[j]);
          postings_.emplace_back();
        }
        postings_[it->second].push_back({i, static_cast<std::uint32_t>(k - j)});
        j = k;
      }
    }
    avg_len_ = indexed_ == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(indexed_);
  }

  std::size_t size() const { return lengths_.size(); }
  std::size_t indexed_count() const { return indexed_; }
  double avg_len() const { return avg_len_; }
  double k1() const { return k1_; }
  double b() const { return b_; }
  std::uint32_t length(std::uint32_t sentence) const { return lengths_.at(sentence); }

  std::uint32_t doc_freq(std::string_view term) const {
    auto p = find(term);
    return p ? static_cast<std::uint32_t>(p->size()) : 0;
  }

  const std::vector<Posting>* find(std::string_view term) const {
    auto it = vocab_.find(std::string(term));
    return it == vocab_.end() ? nullptr : &postings_[it->second];
  }

  std::uint32_t term_frequency(std::string_view term, std::uint32_t sentence) const {
    auto p = find(term);
    if (!p) return 0;
    auto it = std::lower_bound(p->begin(), p->end(), sentence,
                               [](const Posting& x, std::uint32_t s) { return x.sentence < s; });
    return (it != p->end() && it->sentence == sentence) ? it->tf : 0;
  }

  double idf(std::string_view term) const {
    double n = static_cast<double>(indexed_), df = static_cast<double>(doc_freq(term));
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
  }

  double term_score(double idf, std::uint32_t tf, std::uint32_t len) const {
    double t = static_cast<double>(tf);
    return idf * t * (k1_ + 1.0) / (t + k1_ * (1.0 - b_ + b_ * static_cast<double>(len) / avg_len_));
  }

  // Sum over query tokens (repeats count) of the per-term BM25 contribution.
  double score(const std::vector<std::string>& query, std::uint32_t sentence) const {
    double s = 0.0;
    for (const auto& t : query) {
      auto tf = term_frequency(t, sentence);
      if (tf != 0) s += term_score(idf(t), tf, lengths_.at(sentence));
    }
    return s;
  }

  // Sentences sharing at least one query term, by descending score, ties by
  // ascending position; at most `top_k` (0 = unlimited).
  std::vector<Scored> rank(const std::vector<std::string>& query, std::size_t top_k = 0) const {
    std::unordered_map<std::uint32_t, double> acc;
    for (const auto& t : query) {
      auto p = find(t);
      if (!p) continue;
      double w = idf(t);
      for (const auto& post : *p) acc[post.sentence] += term_score(w, post.tf, lengths_[post.sentence]);
    }
    std::vector<Scored> out;
    out.reserve(acc.size());
    for (auto [s, v] : acc) out.push_back({s, v});
    auto cmp = [](const Scored& a, const Scored& b) {
      return a.score != b.score ? a.score > b.score : a.sentence < b.sentence;
    };
    if (top_k != 0 && top_k < out.size()) {
      std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(top_k), out.end(), cmp);
      out.resize(top_k);
    } else {
      std::sort(out.begin(), out.end(), cmp);
    }
    return out;
  }

  // Binary layout: "MPIDX1\n", u32 version, f64 k1, f64 b, u64 sentences,
  // u32 lengths[], u64 terms, then per term: u32 byte length, bytes, u64
  // postings, (u32 sentence, u32 tf)[]. Little-endian host order.
  void save(std::ostream& out) const {
    out.write(kMagic, sizeof(kMagic) - 1);
    put<std::uint32_t>(out, kVersion);
    put(out, k1_);
    put(out, b_);
    put<std::uint64_t>(out, lengths_.size());
    for (auto l : lengths_) put(out, l);
    put<std::uint64_t>(out, terms_.size());
    for (std::size_t t = 0; t < terms_.size(); ++t) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(terms_[t].size()));
      out.write(terms_[t].data(), static_cast<std::streamsize>(terms_[t].size()));
      put<std::uint64_t>(out, postings_[t].size());
      for (const auto& p : postings_[t]) {
        put(out, p.sentence);
        put(out, p.tf);
      }
    }
    if (!out) throw IoError("failed to write index");
  }

  static Bm25Index load(std::istream& in) {
    char magic[sizeof(kMagic) - 1];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) throw ParseError("not an MPIDX1 index file");
    if (get<std::uint32_t>(in) != kVersion) throw ParseError("unsupported index version");
    Bm25Index idx;
    idx.k1_ = get<double>(in);
    idx.b_ = get<double>(in);
    auto n = get<std::uint64_t>(in);
    idx.lengths_.resize(n);
    std::uint64_t total = 0;
    for (auto& l : idx.lengths_) {
      l = get<std::uint32_t>(in);
      total += l;
      if (l) ++idx.indexed_;
    }
    idx.avg_len_ = idx.indexed_ == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(idx.indexed_);
    auto terms = get<std::uint64_t>(in);
    for (std::uint64_t t = 0; t < terms; ++t) {
      std::string term(get<std::uint32_t>(in), '\0');
      in.read(term.data(), static_cast<std::streamsize>(term.size()));
      std::vector<Posting> posts(get<std::uint64_t>(in));
      for (auto& p : posts) {
        p.sentence = get<std::uint32_t>(in);
        p.tf = get<std::uint32_t>(in);
        if (p.sentence >= n) throw ParseError("index posting out of range");
      }
      idx.vocab_.emplace(term, static_cast<std::uint32_t>(idx.terms_.size()));
      idx.terms_.push_back(std::move(term));
      idx.postings_.push_back(std::move(posts));
    }
    return idx;
  }

  bool operator==(const Bm25Index& o) const {
    return k1_ == o.k1_ && b_ == o.b_ && lengths_ == o.lengths_ && terms_ == o.terms_ && postings_ == o.postings_;
  }

 private:
  static constexpr char kMagic[] = "MPIDX1\n";
  static constexpr std::uint32_t kVersion = 1;

  template <typename T>
  static void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  template <typename T>
  static T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ParseError("truncated index file");
    return v;
  }

  double k1_ = 1.2;
  double b_ = 0.75;
  std::vector<std::uint32_t> lengths_;
  std::size_t indexed_ = 0;
  double avg_len_ = 0.0;
  std::unordered_map<std::string, std::uint32_t> vocab_;
  std::vector<std::string> terms_;
  std::vector<std::vector<Posting>> postings_;
};

struct RetrievalConstraints {
  bool require_answer_entity = true;
  bool exclude_source_context = true;
  int min_extra_shared_entities = 1;
  std::size_t top_k = 50;  // candidates considered before filtering; 0 = all
};

// A support corpus: sentences, their mentions and the lexical index over them.
struct SupportCorpus {
  std::vector<Document> documents;
  std::vector<Sentence> sentences;
  MentionTable mentions;
  Bm25Index index;

  static SupportCorpus build(std::vector<Document> docs, std::vector<Sentence> sentences, MentionTable mentions,
                             double k1 = 1.2, double b = 0.75) {
    std::vector<std::string_view> texts;
    texts.reserve(sentences.size());
    for (const auto& s : sentences) texts.push_back(s.text);
    Bm25Index idx(texts, k1, b);
    return {std::move(docs), std::move(sentences), std::move(mentions), std::move(idx)};
  }
};

struct SupportQuery {
  const Sentence* sentence = nullptr;
  std::vector<std::string> sentence_keys;  // keys of every mention in the query sentence
  const EntityMention* answer = nullptr;
  std::set<std::string> context_keys;      // keys of every mention in the source context
};

// True iff `candidate` (a position in `support`) satisfies the enabled
// constraints for `query`.
inline bool satisfies_constraints(const SupportCorpus& support, std::uint32_t candidate, const SupportQuery& query,
                                  const RetrievalConstraints& c) {
  const auto& cand = support.sentences[candidate];
  const auto& keys = support.mentions[candidate];
  if (cand.text == query.sentence->text) return false;
  if (c.exclude_source_context && cand.doc_id == query.sentence->doc_id) return false;
  const std::string& answer = query.answer->key;
  if (c.require_answer_entity &&
      std::none_of(keys.begin(), keys.end(), [&](const EntityMention& m) { return m.key == answer; }))
    return false;
  if (c.min_extra_shared_entities > 0) {
    std::set<std::string> shared;
    for (const auto& m : keys) {
      if (m.key == answer) continue;
      bool in_query = std::find(query.sentence_keys.begin(), query.sentence_keys.end(), m.key) !=
                      query.sentence_keys.end();
      if (in_query || query.context_keys.count(m.key)) shared.insert(m.key);
    }
    if (static_cast<int>(shared.size()) < c.min_extra_shared_entities) return false;
  }
  return true;
}

// BM25-ranks the support corpus against the query sentence and returns the
// first candidate (descending score, ascending position) meeting the
// constraints.
inline std::optional<std::uint32_t> retrieve_support_sentence(const SupportCorpus& support, const SupportQuery& query,
                                                              const RetrievalConstraints& constraints = {}) {
  auto tokens = text::simple_tokens(query.sentence->text);
  for (const auto& cand : support.index.rank(tokens, constraints.top_k))
    if (satisfies_constraints(support, cand.sentence, query, constraints)) return cand.sentence;
  return std::nullopt;
}

}  // namespace minprompt
