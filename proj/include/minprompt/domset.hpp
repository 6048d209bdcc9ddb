#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <algorithm>
#include <string>
#include <vector>

#include <json.hpp>

#include "minprompt/sentgraph.hpp"

namespace minprompt {

enum class DegreeMode {
  residual,  // priority = number of still-uncovered neighbours
  static_degree,  // priority = degree in the full graph, never updated
};

inline std::string_view to_string(DegreeMode m) { return m == DegreeMode::residual ? "residual" : "static"; }

inline DegreeMode parse_degree_mode(std::string_view s) {
  if (s == "residual") return DegreeMode::residual;
  if (s == "static") return DegreeMode::static_degree;
  throw ArgumentError("unknown degree mode '" + std::string(s) + "'");
}

struct GreedyOptions {
  DegreeMode mode = DegreeMode::residual;
  // Scan the whole candidate set on every pop to confirm the popped node has
  // the maximum priority. O(V^2); tests only.
  bool verify_steps = false;
};

struct DominatingSetResult {
  std::vector<SentenceId> selected;  // ascending
  std::uint64_t iterations = 0;
  std::uint64_t max_degree = 0;
  std::uint64_t covered = 0;
  std::uint64_t uncovered_entities = 0;  // entities with no member in `selected`
};

inline double approximation_bound(std::uint64_t max_degree) {
  return std::log(static_cast<double>(std::max<std::uint64_t>(max_degree, 1))) + 2.0;
}

inline double harmonic(std::uint64_t n) {
  double h = 0.0;
  for (std::uint64_t i = n; i >= 1; --i) h += 1.0 / static_cast<double>(i);  // small terms first
  return h;
}

// Greedy dominating set over a max-heap of candidates keyed by residual
// degree. Popping a node selects it; the node and its uncovered neighbours
// become covered and leave the candidate set for good. Priorities are
// refreshed lazily: an entry whose stored key no longer matches is pushed back
// with the current key. Ties go to the smaller sentence id.
inline DominatingSetResult approx_dominating_set(const SentenceGraph& graph, const GreedyOptions& options = {}) {
  const std::size_t n = graph.node_count();
  DominatingSetResult result;
  result.max_degree = graph.max_degree();

  // Per-node state packed together so a neighbour visit touches one line.
  // A covered node has residual kCovered.
  constexpr std::uint32_t kCovered = UINT32_MAX;
  struct NodeState {
    std::uint32_t residual;
    std::uint32_t stamp;
  };
  std::vector<NodeState> state(n);
  for (SentenceId v = 0; v < n; ++v) state[v] = {graph.degree(v), UINT32_MAX};
  auto covered = [&](SentenceId v) { return state[v].residual == kCovered; };

  // Bucket queue keyed by residual degree. Keys only decrease, so stale
  // entries move to lower buckets and each bucket is sorted once, when it
  // becomes the maximum, to give smallest-id-first order.
  auto key_of = [&](SentenceId v) -> std::uint32_t {
    return options.mode == DegreeMode::residual ? state[v].residual : graph.degree(v);
  };
  std::vector<std::vector<SentenceId>> buckets(static_cast<std::size_t>(result.max_degree) + 1);
  for (SentenceId v = 0; v < n; ++v) buckets[key_of(v)].push_back(v);

  // Calls fn(u) once for every neighbour u of v (u != v).
  std::uint32_t round = 0;
  auto for_each_neighbor = [&](SentenceId v, auto&& fn) {
    auto ents = graph.entities_of(v);
    if (ents.size() == 1) {
      for (auto u : graph.members(ents[0]))
        if (u != v) fn(u);
      return;
    }
    const std::uint32_t mark = round++;
    if (round == UINT32_MAX) {
      for (auto& st : state) st.stamp = UINT32_MAX;
      round = 0;
    }
    state[v].stamp = mark;
    for (auto k : ents)
      for (auto u : graph.members(k))
        if (state[u].stamp != mark) {
          state[u].stamp = mark;
          fn(u);
        }
  };

  std::vector<SentenceId> newly;
  for (std::size_t d = buckets.size(); d-- > 0;) {
    auto& bucket = buckets[d];
    std::sort(bucket.begin(), bucket.end());
    for (std::size_t i = 0; i < bucket.size(); ++i) {
      const SentenceId v = bucket[i];
      if (covered(v)) continue;
      if (options.mode == DegreeMode::residual && state[v].residual != d) {
        buckets[state[v].residual].push_back(v);
        continue;
      }
      if (options.verify_steps) {
        for (SentenceId u = 0; u < n; ++u) {
          if (covered(u)) continue;
          std::uint32_t key = key_of(u);
          if (key > d || (key == d && u < v))
            throw std::logic_error("greedy step picked " + std::to_string(v) + " but " + std::to_string(u) +
                                   " has a better key");
        }
      }

      result.selected.push_back(v);
      newly.clear();
      state[v].residual = kCovered;
      newly.push_back(v);
      for_each_neighbor(v, [&](SentenceId u) {
        if (!covered(u)) {
          state[u].residual = kCovered;
          newly.push_back(u);
        }
      });
      result.covered += newly.size();
      if (options.mode != DegreeMode::residual) continue;
      for (SentenceId u : newly)
        for_each_neighbor(u, [&](SentenceId w) {
          if (!covered(w)) --state[w].residual;
        });
    }
    std::vector<SentenceId>().swap(bucket);
  }

  result.iterations = result.selected.size();
  std::sort(result.selected.begin(), result.selected.end());

  std::vector<char> chosen(n, 0);
  for (auto v : result.selected) chosen[v] = 1;
  for (std::uint32_t k = 0; k < graph.entity_count(); ++k) {
    auto m = graph.members(k);
    if (std::none_of(m.begin(), m.end(), [&](SentenceId s) { return chosen[s] != 0; })) ++result.uncovered_entities;
  }
  return result;
}

inline bool is_dominating_set(const SentenceGraph& graph, const std::vector<SentenceId>& candidate) {
  const std::size_t n = graph.node_count();
  std::vector<char> dominated(n, 0);
  for (auto v : candidate) {
    if (v >= n) throw ArgumentError("candidate id " + std::to_string(v) + " out of range (V=" + std::to_string(n) + ")");
    dominated[v] = 1;
    for (auto k : graph.entities_of(v))
      for (auto u : graph.members(k)) dominated[u] = 1;
  }
  return std::all_of(dominated.begin(), dominated.end(), [](char c) { return c != 0; });
}

inline constexpr std::size_t kBruteForceMaxNodes = 25;

// Exact minimum dominating set by enumeration: subsets in increasing size,
// lexicographic within a size; the first dominating one is returned.
inline std::vector<SentenceId> brute_force_dominating_set(const SentenceGraph& graph) {
  const std::size_t n = graph.node_count();
  if (n > kBruteForceMaxNodes)
    throw SizeError("exhaustive search supports at most " + std::to_string(kBruteForceMaxNodes) + " nodes, got " +
                    std::to_string(n));
  if (n == 0) return {};
  const std::uint32_t full = (n == 32) ? UINT32_MAX : ((1u << n) - 1);
  std::vector<std::uint32_t> closed(n);
  for (SentenceId v = 0; v < n; ++v) {
    closed[v] = 1u << v;
    for (auto u : graph.neighbors(v)) closed[v] |= 1u << u;
  }
  std::vector<SentenceId> pick;
  for (std::size_t k = 1; k <= n; ++k) {
    pick.resize(k);
    for (std::size_t i = 0; i < k; ++i) pick[i] = static_cast<SentenceId>(i);
    while (true) {
      std::uint32_t mask = 0;
      for (auto v : pick) mask |= closed[v];
      if (mask == full) return pick;
      // next combination in lexicographic order
      std::size_t i = k;
      while (i > 0 && pick[i - 1] == n - k + i - 1) --i;
      if (i == 0) break;
      ++pick[i - 1];
      for (std::size_t j = i; j < k; ++j) pick[j] = pick[j - 1] + 1;
    }
  }
  return {};  // unreachable: the full vertex set dominates
}

inline nlohmann::ordered_json to_json(const DominatingSetResult& r) {
  nlohmann::ordered_json j;
  j["selected"] = r.selected;
  j["size"] = r.selected.size();
  j["max_degree"] = r.max_degree;
  j["bound"] = approximation_bound(r.max_degree);
  return j;
}

}  // namespace minprompt
