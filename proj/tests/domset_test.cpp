#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "minprompt/domset.hpp"
#include "oracles.hpp"

namespace mp = minprompt;
using Ids = std::vector<mp::SentenceId>;

namespace {

oracle::AdjMatrix from_edges(std::size_t n, const std::vector<std::pair<int, int>>& edges) {
  oracle::AdjMatrix m(n);
  for (auto [u, v] : edges) m.adj[u][v] = m.adj[v][u] = 1;
  return m;
}

mp::SentenceGraph graph(std::size_t n, const std::vector<std::pair<int, int>>& edges) {
  return oracle::graph_from_matrix(from_edges(n, edges));
}

mp::SentenceGraph lakers() {
  // s1..s4 as 0..3: "lakers" on {0,1,2}, "crypto.com arena" on {2,3}.
  return mp::SentenceGraph(4, {"lakers", "crypto.com arena"}, {{0, 1, 2}, {2, 3}});
}

mp::SentenceGraph cycle(std::size_t n) {
  std::vector<std::pair<int, int>> e;
  for (std::size_t i = 0; i < n; ++i) e.emplace_back(static_cast<int>(i), static_cast<int>((i + 1) % n));
  return graph(n, e);
}

mp::GreedyOptions checked() {
  mp::GreedyOptions o;
  o.verify_steps = true;
  return o;
}

}  // namespace

TEST(Greedy, LakersPicksTheHub) {
  auto r = mp::approx_dominating_set(lakers(), checked());
  EXPECT_EQ(r.selected, Ids{2});
  EXPECT_EQ(r.covered, 4u);
  EXPECT_EQ(r.iterations, 1u);
  EXPECT_EQ(r.max_degree, 3u);
  EXPECT_EQ(r.uncovered_entities, 0u);
  EXPECT_EQ(mp::brute_force_dominating_set(lakers()).size(), 1u);
}

TEST(Greedy, EdgelessSelectsEveryNode) {
  auto r = mp::approx_dominating_set(mp::SentenceGraph(3, {}, {}), checked());
  EXPECT_EQ(r.selected, (Ids{0, 1, 2}));
}

TEST(Greedy, PathTieGoesToSmallerId) {
  auto g = graph(4, {{0, 1}, {1, 2}, {2, 3}});
  auto r = mp::approx_dominating_set(g, checked());
  EXPECT_EQ(r.selected, (Ids{1, 3}));
  EXPECT_EQ(oracle::exhaustive_min_size(from_edges(4, {{0, 1}, {1, 2}, {2, 3}})), 2u);
}

TEST(Greedy, EmptyGraph) {
  auto r = mp::approx_dominating_set(mp::SentenceGraph(0, {}, {}));
  EXPECT_TRUE(r.selected.empty());
  EXPECT_EQ(r.covered, 0u);
}

TEST(Greedy, UncoveredEntityDiagnostic) {
  mp::SentenceGraph g(5, {"hub", "x"}, {{0, 1, 2}, {3, 4}});
  auto r = mp::approx_dominating_set(g);
  EXPECT_EQ(r.selected, (Ids{0, 3}));
  EXPECT_EQ(r.uncovered_entities, 0u);
  mp::SentenceGraph h(4, {"a", "b"}, {{0, 1, 2}, {1, 3}});
  auto s = mp::approx_dominating_set(h);
  EXPECT_EQ(s.selected, (Ids{1}));
  EXPECT_EQ(s.uncovered_entities, 0u);
  mp::SentenceGraph k(5, {"a", "b", "c"}, {{0, 1, 2, 3}, {1, 4}, {2, 4}});
  auto t = mp::approx_dominating_set(k);
  EXPECT_EQ(t.selected, (Ids{1}));
  EXPECT_EQ(t.uncovered_entities, 1u);  // "c" = {2,4}: both dominated, neither selected
}

TEST(BruteForce, Examples) {
  EXPECT_EQ(mp::brute_force_dominating_set(graph(6, {{3, 0}, {3, 1}, {3, 2}, {3, 4}, {3, 5}})), Ids{3});
  mp::SentenceGraph k5(5, {"e"}, {{0, 1, 2, 3, 4}});
  EXPECT_EQ(mp::brute_force_dominating_set(k5), Ids{0});
  auto c6 = mp::brute_force_dominating_set(cycle(6));
  EXPECT_EQ(c6.size(), 2u);
  EXPECT_EQ(c6, (Ids{0, 3}));
  oracle::AdjMatrix m(6);
  for (int i = 0; i < 6; ++i) m.adj[i][(i + 1) % 6] = m.adj[(i + 1) % 6][i] = 1;
  EXPECT_EQ(oracle::exhaustive_min_size(m), 2u);
}

TEST(BruteForce, SizeLimit) {
  EXPECT_THROW(mp::brute_force_dominating_set(mp::SentenceGraph(26, {}, {})), mp::SizeError);
  EXPECT_EQ(mp::brute_force_dominating_set(mp::SentenceGraph(0, {}, {})), Ids{});
}

TEST(BruteForce, AgreesWithSubsetEnumeration) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    std::size_t n = 1 + rng() % 12;
    auto m = oracle::random_matrix(n, 0.1 + 0.1 * static_cast<double>(rng() % 8), rng);
    auto g = oracle::graph_from_matrix(m);
    auto bf = mp::brute_force_dominating_set(g);
    ASSERT_TRUE(m.dominates(bf));
    ASSERT_EQ(bf.size(), oracle::exhaustive_min_size(m));
  }
}

TEST(IsDominatingSet, Examples) {
  EXPECT_TRUE(mp::is_dominating_set(lakers(), {2}));
  EXPECT_FALSE(mp::is_dominating_set(lakers(), {3}));
  EXPECT_TRUE(mp::is_dominating_set(mp::SentenceGraph(0, {}, {}), {}));
  EXPECT_THROW(mp::is_dominating_set(lakers(), {4}), mp::ArgumentError);
}

TEST(Bound, Values) {
  EXPECT_DOUBLE_EQ(mp::approximation_bound(1), 2.0);
  EXPECT_DOUBLE_EQ(mp::approximation_bound(0), 2.0);
  EXPECT_NEAR(mp::approximation_bound(3), 3.0986, 1e-4);
  EXPECT_DOUBLE_EQ(mp::approximation_bound(3), std::log(3.0) + 2.0);
}

TEST(Harmonic, BracketedByLogarithm) {
  EXPECT_DOUBLE_EQ(mp::harmonic(1), 1.0);
  EXPECT_DOUBLE_EQ(mp::harmonic(4), 1.0 + 0.5 + 1.0 / 3 + 0.25);
  for (std::uint64_t n : {1ull, 2ull, 3ull, 10ull, 100ull, 1000ull, 12345ull, 100000ull, 1000000ull}) {
    double h = mp::harmonic(n), l = std::log(static_cast<double>(n));
    EXPECT_LT(l, h) << n;
    EXPECT_LE(h, l + 1.0) << n;
  }
}

TEST(GreedyProperty, ValidOnRandomGraphs) {
  std::mt19937_64 rng(11);
  const double ps[] = {0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9};
  for (int t = 0; t < 560; ++t) {
    std::size_t n = 1 + rng() % 64;
    auto m = oracle::random_matrix(n, ps[t % 7], rng);
    auto g = oracle::graph_from_matrix(m);
    auto r = mp::approx_dominating_set(g, checked());
    ASSERT_TRUE(mp::is_dominating_set(g, r.selected));
    ASSERT_TRUE(m.dominates(r.selected));
    ASSERT_EQ(r.covered, n);
    ASSERT_EQ(r.iterations, r.selected.size());
    ASSERT_TRUE(std::is_sorted(r.selected.begin(), r.selected.end()));
    ASSERT_EQ(r.selected, oracle::naive_greedy(m)) << "n=" << n;
  }
}

TEST(GreedyProperty, RandomCliqueUnionsMatchNaiveGreedy) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 200; ++t) {
    std::size_t n = 2 + rng() % 40;
    std::size_t entities = 1 + rng() % 12;
    std::vector<std::string> keys;
    std::vector<std::vector<mp::SentenceId>> postings;
    std::vector<std::set<std::string>> sets(n);
    for (std::size_t k = 0; k < entities; ++k) {
      keys.push_back("k" + std::to_string(k));
      std::vector<mp::SentenceId> p;
      for (mp::SentenceId v = 0; v < n; ++v)
        if (rng() % 5 == 0) {
          p.push_back(v);
          sets[v].insert(keys.back());
        }
      postings.push_back(p);
    }
    mp::SentenceGraph g(n, keys, postings);
    auto r = mp::approx_dominating_set(g, checked());
    ASSERT_EQ(r.selected, oracle::naive_greedy(oracle::AdjMatrix::from_keys(sets)));
  }
}

TEST(GreedyProperty, BoundAgainstOptimum) {
  std::mt19937_64 rng(13);
  int checked_graphs = 0;
  for (int p10 = 1; p10 <= 9; ++p10)
    for (int seed = 0; seed < 40; ++seed) {
      std::size_t n = 1 + rng() % 14;
      auto m = oracle::random_matrix(n, p10 / 10.0, rng);
      auto g = oracle::graph_from_matrix(m);
      auto r = mp::approx_dominating_set(g);
      auto opt = mp::brute_force_dominating_set(g).size();
      ASSERT_LE(static_cast<double>(r.selected.size()),
                mp::approximation_bound(r.max_degree) * static_cast<double>(opt));
      ++checked_graphs;
    }
  EXPECT_EQ(checked_graphs, 360);
}

TEST(GreedyProperty, Deterministic) {
  std::mt19937_64 rng(17);
  auto m = oracle::random_matrix(50, 0.2, rng);
  auto a = mp::approx_dominating_set(oracle::graph_from_matrix(m));
  auto b = mp::approx_dominating_set(oracle::graph_from_matrix(m));
  EXPECT_EQ(a.selected, b.selected);
}

TEST(StaticMode, ValidAndStepChecked) {
  std::mt19937_64 rng(19);
  mp::GreedyOptions o = checked();
  o.mode = mp::DegreeMode::static_degree;
  for (int t = 0; t < 100; ++t) {
    auto m = oracle::random_matrix(1 + rng() % 40, 0.2, rng);
    auto g = oracle::graph_from_matrix(m);
    ASSERT_TRUE(mp::is_dominating_set(g, mp::approx_dominating_set(g, o).selected));
  }
  EXPECT_EQ(mp::parse_degree_mode("static"), mp::DegreeMode::static_degree);
  EXPECT_THROW(mp::parse_degree_mode("dynamic"), mp::Error);
}

TEST(Json, Shape) {
  auto j = mp::to_json(mp::approx_dominating_set(lakers()));
  EXPECT_EQ(j.dump(), R"({"selected":[2],"size":1,"max_degree":3,"bound":3.09861228866811})");
}
