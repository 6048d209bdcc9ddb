#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <queue>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "minprompt/common.hpp"
#include "minprompt/entities.hpp"

namespace minprompt {

struct GraphStats {
  std::uint64_t nodes = 0;
  std::uint64_t edges = 0;
  std::uint64_t entities = 0;
  std::uint64_t max_degree = 0;
  std::uint64_t isolated_nodes = 0;

  bool operator==(const GraphStats&) const = default;
};

// Entity-coreference sentence graph, stored as entity posting lists. Two
// distinct sentences are adjacent iff they share an entity key; the clique
// expansion is never materialized. Storage is O(V + total postings).
class SentenceGraph {
 public:
  SentenceGraph() = default;

  // `postings[k]` lists the sentences mentioning entity `keys[k]`. Lists are
  // sorted and deduplicated here; empty lists are dropped.
  SentenceGraph(std::size_t node_count, std::vector<std::string> keys, std::vector<std::vector<SentenceId>> postings,
                unsigned workers = 1)
      : node_count_(node_count) {
    if (keys.size() != postings.size()) throw ArgumentError("keys and postings differ in length");
    std::vector<std::size_t> order(keys.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });

    for (std::size_t k : order) {
      auto& list = postings[k];
      std::sort(list.begin(), list.end());
      list.erase(std::unique(list.begin(), list.end()), list.end());
      if (list.empty()) continue;
      if (list.back() >= node_count_) throw ArgumentError("posting references sentence beyond node count");
      if (!keys_.empty() && keys_.back() == keys[k]) throw ArgumentError("duplicate entity key '" + keys[k] + "'");
      keys_.push_back(std::move(keys[k]));
      entity_members_.insert(entity_members_.end(), list.begin(), list.end());
      entity_offsets_.push_back(entity_members_.size());
      std::vector<SentenceId>().swap(list);
    }

    // node -> entity index lists, ascending because entities are visited in order
    std::vector<std::uint64_t> counts(node_count_ + 1, 0);
    for (SentenceId s : entity_members_) ++counts[s + 1];
    for (std::size_t v = 0; v < node_count_; ++v) counts[v + 1] += counts[v];
    node_offsets_ = counts;
    node_entities_.resize(entity_members_.size());
    for (std::uint32_t k = 0; k < keys_.size(); ++k)
      for (auto s : members(k)) node_entities_[counts[s]++] = k;

    compute_degrees(workers);
  }

  std::size_t node_count() const { return node_count_; }
  std::size_t entity_count() const { return keys_.size(); }
  std::size_t total_postings() const { return entity_members_.size(); }

  const std::string& entity_key(std::uint32_t k) const { return keys_[k]; }
  const std::vector<std::string>& entity_keys() const { return keys_; }

  std::span<const SentenceId> members(std::uint32_t entity) const {
    return {entity_members_.data() + entity_offsets_[entity], entity_members_.data() + entity_offsets_[entity + 1]};
  }

  std::span<const std::uint32_t> entities_of(SentenceId v) const {
    check(v);
    return {node_entities_.data() + node_offsets_[v], node_entities_.data() + node_offsets_[v + 1]};
  }

  // Posting list for a key, empty if the key is unknown.
  std::span<const SentenceId> postings(std::string_view key) const {
    auto it = std::lower_bound(keys_.begin(), keys_.end(), key);
    if (it == keys_.end() || *it != key) return {};
    return members(static_cast<std::uint32_t>(it - keys_.begin()));
  }

  std::uint32_t degree(SentenceId v) const {
    check(v);
    return degrees_[v];
  }
  const std::vector<std::uint32_t>& degrees() const { return degrees_; }

  std::uint32_t max_degree() const {
    return degrees_.empty() ? 0 : *std::max_element(degrees_.begin(), degrees_.end());
  }

  // Ascending k-way merge of v's posting lists, without v.
  std::vector<SentenceId> neighbors(SentenceId v) const {
    check(v);
    auto ents = entities_of(v);
    std::vector<SentenceId> out;
    if (ents.size() == 1) {
      for (auto u : members(ents[0]))
        if (u != v) out.push_back(u);
      return out;
    }
    using Cursor = std::pair<SentenceId, std::uint32_t>;  // (current id, list index)
    std::priority_queue<Cursor, std::vector<Cursor>, std::greater<>> heap;
    std::vector<std::size_t> pos(ents.size(), 0);
    for (std::uint32_t i = 0; i < ents.size(); ++i) heap.push({members(ents[i])[0], i});
    while (!heap.empty()) {
      auto [id, i] = heap.top();
      heap.pop();
      if (id != v && (out.empty() || out.back() != id)) out.push_back(id);
      auto list = members(ents[i]);
      if (++pos[i] < list.size()) heap.push({list[pos[i]], i});
    }
    return out;
  }

  bool adjacent(SentenceId u, SentenceId v) const {
    if (u == v) return false;
    auto a = entities_of(u), b = entities_of(v);
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
      if (a[i] == b[j]) return true;
      a[i] < b[j] ? ++i : ++j;
    }
    return false;
  }

  // Exact undirected edge count; 64-bit so clique expansions past 2^32 edges
  // are fine.
  std::uint64_t edge_count() const {
    std::uint64_t sum = 0;
    for (auto d : degrees_) sum += d;
    return sum / 2;
  }

  GraphStats stats() const {
    GraphStats s;
    s.nodes = node_count_;
    s.edges = edge_count();
    s.entities = keys_.size();
    s.max_degree = max_degree();
    s.isolated_nodes = static_cast<std::uint64_t>(std::count(degrees_.begin(), degrees_.end(), 0u));
    return s;
  }

  // Debug dump: one {"entity": key, "sentences": [...]} object per line.
  void dump_jsonl(std::ostream& out) const {
    for (std::uint32_t k = 0; k < keys_.size(); ++k) {
      nlohmann::ordered_json j;
      j["entity"] = keys_[k];
      auto m = members(k);
      j["sentences"] = std::vector<SentenceId>(m.begin(), m.end());
      out << j.dump() << '\n';
    }
  }

 private:
  void check(SentenceId v) const {
    if (v >= node_count_)
      throw ArgumentError("sentence id " + std::to_string(v) + " out of range (V=" + std::to_string(node_count_) + ")");
  }

  void compute_degrees(unsigned workers) {
    degrees_.assign(node_count_, 0);
    workers = std::max(1u, workers);
    std::size_t chunks = std::min<std::size_t>(workers, std::max<std::size_t>(1, node_count_));
    std::size_t per = (node_count_ + chunks - 1) / std::max<std::size_t>(chunks, 1);
    parallel_for(chunks, workers, [&](std::size_t c) {
      std::size_t lo = c * per, hi = std::min(node_count_, lo + per);
      std::vector<std::uint32_t> stamp;  // allocated lazily, only for multi-entity nodes
      for (std::size_t v = lo; v < hi; ++v) {
        auto ents = entities_of(static_cast<SentenceId>(v));
        if (ents.empty()) continue;
        if (ents.size() == 1) {
          degrees_[v] = static_cast<std::uint32_t>(members(ents[0]).size() - 1);
          continue;
        }
        if (stamp.empty()) stamp.assign(node_count_, UINT32_MAX);
        std::uint32_t count = 0;
        const auto mark = static_cast<std::uint32_t>(v);
        stamp[v] = mark;
        for (auto k : ents)
          for (auto u : members(k))
            if (stamp[u] != mark) {
              stamp[u] = mark;
              ++count;
            }
        degrees_[v] = count;
      }
    });
  }

  std::size_t node_count_ = 0;
  std::vector<std::string> keys_;
  std::vector<std::uint64_t> entity_offsets_{0};
  std::vector<SentenceId> entity_members_;
  std::vector<std::uint64_t> node_offsets_;
  std::vector<std::uint32_t> node_entities_;
  std::vector<std::uint32_t> degrees_;
};

// Builds the graph from per-sentence mentions (index = sentence id). Repeated
// mentions of a key in one sentence contribute a single posting; stoplisted
// keys are skipped. `scope`, when given, prefixes each key with a per-sentence
// scope label so edges never cross scopes.
inline SentenceGraph build_graph(const MentionTable& mentions, const std::unordered_set<std::string>& stoplist = {},
                                 const std::vector<std::string>* scope = nullptr, unsigned workers = 1) {
  std::unordered_map<std::string, std::uint32_t> index;
  std::vector<std::string> keys;
  std::vector<std::vector<SentenceId>> postings;
  for (std::size_t v = 0; v < mentions.size(); ++v) {
    for (const auto& m : mentions[v]) {
      if (stoplist.count(m.key)) continue;
      std::string key = scope ? (*scope)[v] + '\x1f' + m.key : m.key;
      auto [it, inserted] = index.try_emplace(key, static_cast<std::uint32_t>(keys.size()));
      if (inserted) {
        keys.push_back(key);
        postings.emplace_back();
      }
      auto& list = postings[it->second];
      if (list.empty() || list.back() != v) list.push_back(static_cast<SentenceId>(v));
    }
  }
  return SentenceGraph(mentions.size(), std::move(keys), std::move(postings), workers);
}

}  // namespace minprompt
