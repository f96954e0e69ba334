#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "grembed/error.hpp"
#include "grembed/fixtures.hpp"
#include "grembed/walks.hpp"

using namespace grembed;

namespace {

// Row-stochastic transition matrix built straight from the neighbor lists.
Matrix oracle_transitions(const Graph& g) {
  const Index n = g.node_count();
  Matrix p = Matrix::Zero(n, n);
  for (NodeIndex u = 0; u < n; ++u) {
    double total = 0.0;
    for (NodeIndex v : g.neighbors(u)) total += g.edge_weight(u, v);
    for (NodeIndex v : g.neighbors(u)) p(u, v) = g.edge_weight(u, v) / total;
  }
  return p;
}

double total_variation(const Vector& a, const Vector& b) { return 0.5 * (a - b).cwiseAbs().sum(); }

// Per-start visit frequencies over steps 1..T.
std::vector<Vector> empirical_visits(const WalkCorpus& corpus, Index n) {
  std::vector<Vector> freq(static_cast<std::size_t>(n), Vector::Zero(n));
  for (const auto& w : corpus.walks)
    for (std::size_t t = 1; t < w.size(); ++t) freq[static_cast<std::size_t>(w[0])](w[t]) += 1.0;
  for (auto& f : freq)
    if (f.sum() > 0) f /= f.sum();
  return freq;
}

Graph five_node() {
  GraphBuilder b;
  b.add_nodes(5);
  for (auto [u, v] : std::vector<NodePair>{{0, 1}, {1, 2}, {2, 0}, {2, 3}, {3, 4}, {1, 3}}) b.add_edge(u, v);
  return b.build();
}

}  // namespace

TEST_CASE("alias table") {
  const std::vector<double> dist{0.1, 0.2, 0.3, 0.4};
  const AliasTable table(dist);
  for (std::size_t i = 0; i < dist.size(); ++i) CHECK(std::abs(table.probability(i) - dist[i]) < 1e-12);

  Rng rng(3);
  std::vector<double> counts(4, 0.0);
  const int draws = 1'000'000;
  for (int i = 0; i < draws; ++i) counts[table.sample(rng)] += 1.0;
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(counts[i] / draws - dist[i]) < 0.005);

  const AliasTable skewed(std::vector<double>{5.0, 0.0, 1.0, 2.0, 0.5});
  CHECK(skewed.probability(1) == 0.0);
  CHECK(std::abs(skewed.probability(0) - 5.0 / 8.5) < 1e-12);
  CHECK_THROWS_AS(AliasTable(std::vector<double>{0.0, 0.0}), ContractError);
  CHECK_THROWS_AS(AliasTable(std::vector<double>{}), ContractError);
}

TEST_CASE("uniform first step on a path") {
  WalkConfig c{.length = 2, .walks_per_node = 100'000, .seed = 5};
  const WalkCorpus corpus = sample_uniform_walks(fixtures::path(3), c);
  double left = 0, total = 0;
  for (const auto& w : corpus.walks) {
    if (w[0] != 1) continue;
    total += 1;
    left += w[1] == 0;
  }
  CHECK(total == 100'000);
  CHECK(std::abs(left / total - 0.5) < 0.01);
}

TEST_CASE("self-looped node walks stay put") {
  GraphBuilder b({.self_loops = true});
  b.add_edge("a", "a");
  const WalkCorpus corpus = sample_uniform_walks(b.build(), {.length = 5, .walks_per_node = 3});
  REQUIRE(corpus.walks.size() == 3);
  for (const auto& w : corpus.walks) CHECK(w == std::vector<NodeIndex>(6, 0));
}

TEST_CASE("isolated nodes are skipped and counted") {
  GraphBuilder b;
  b.add_edge("a", "b");
  b.add_node("lonely");
  const WalkCorpus corpus = sample_uniform_walks(b.build(), {.length = 3, .walks_per_node = 2});
  CHECK(corpus.walks.size() == 4);
  CHECK(corpus.skipped_isolated == 1);
  CHECK(sample_uniform_walks(Graph{}, {}).walks.empty());
}

TEST_CASE("uniform visit law matches matrix powers") {
  for (const Graph& g : {five_node(), fixtures::cycle(5), fixtures::star(4)}) {
    const int T = 6;
    const WalkCorpus corpus = sample_uniform_walks(g, {.length = T, .walks_per_node = 20'000, .seed = 11});
    const auto freq = empirical_visits(corpus, g.node_count());
    const Matrix p = oracle_transitions(g);
    Matrix pt = Matrix::Identity(g.node_count(), g.node_count());
    Matrix law = Matrix::Zero(g.node_count(), g.node_count());
    for (int t = 1; t <= T; ++t) {
      pt = pt * p;
      law += pt / T;
    }
    for (NodeIndex v = 0; v < g.node_count(); ++v) CHECK(total_variation(freq[v], law.row(v).transpose()) < 0.02);
  }
}

TEST_CASE("every walk is a path in the graph") {
  const Graph g = fixtures::karate_club();
  for (const auto& corpus : {sample_uniform_walks(g, {.seed = 1}), sample_node2vec_walks(g, {.p = 0.5, .q = 2.0, .seed = 1})}) {
    CHECK(corpus.walks.size() == 340);
    for (const auto& w : corpus.walks) {
      CHECK(w.size() == 11);
      for (std::size_t i = 1; i < w.size(); ++i) CHECK(g.has_edge(w[i - 1], w[i]));
    }
  }
}

TEST_CASE("node2vec with p = q = 1 matches uniform walks") {
  // Endpoints are independent across walks, so a two-sample chi-square test applies.
  const Graph g = five_node();
  const WalkConfig c{.length = 4, .walks_per_node = 4000, .seed = 21};
  const auto a = sample_uniform_walks(g, c);
  auto c2 = c;
  c2.seed = 22;
  const auto b = sample_node2vec_walks(g, c2);
  Vector ca = Vector::Zero(5), cb = Vector::Zero(5);
  for (const auto& w : a.walks) ca(w.back()) += 1;
  for (const auto& w : b.walks) cb(w.back()) += 1;
  const double na = ca.sum(), nb = cb.sum();
  double chi2 = 0.0;
  for (Index i = 0; i < 5; ++i) {
    const double pooled = (ca(i) + cb(i)) / (na + nb);
    chi2 += std::pow(ca(i) - na * pooled, 2) / (na * pooled) + std::pow(cb(i) - nb * pooled, 2) / (nb * pooled);
  }
  CHECK(chi2 < 13.277);  // chi-square critical value, 4 dof, alpha = 0.01
}

TEST_CASE("node2vec return weight on a triangle") {
  const double p = 4.0;
  const WalkCorpus corpus = sample_node2vec_walks(fixtures::complete(3), {.length = 10, .walks_per_node = 12'000, .p = p, .q = 0.3, .seed = 2});
  double back = 0, steps = 0;
  for (const auto& w : corpus.walks)
    for (std::size_t i = 2; i < w.size(); ++i) {
      steps += 1;
      back += w[i] == w[i - 2];
    }
  CHECK(steps > 100'000);
  // the other neighbor is adjacent to the previous node, so it weighs 1 regardless of q
  CHECK(std::abs(back / steps - (1.0 / p) / (1.0 / p + 1.0)) < 0.01);
}

TEST_CASE("node2vec transitions match normalized alpha") {
  const Graph g = five_node();
  const double q = 0.25;
  const WalkCorpus corpus = sample_node2vec_walks(g, {.length = 10, .walks_per_node = 20'000, .p = 1.0, .q = q, .seed = 8});
  std::map<NodePair, std::map<NodeIndex, double>> counts;
  for (const auto& w : corpus.walks)
    for (std::size_t i = 2; i < w.size(); ++i) counts[{w[i - 2], w[i - 1]}][w[i]] += 1;
  for (const auto& [edge, next] : counts) {
    const auto [t, v] = edge;
    double norm = 0.0;
    std::map<NodeIndex, double> alpha;
    for (NodeIndex x : g.neighbors(v)) {
      alpha[x] = x == t ? 1.0 : (g.has_edge(t, x) ? 1.0 : 1.0 / q);
      norm += alpha[x];
    }
    double total = 0.0;
    for (const auto& [x, c] : next) total += c;
    if (total < 10'000) continue;
    for (NodeIndex x : g.neighbors(v)) {
      const double observed = next.contains(x) ? next.at(x) / total : 0.0;
      CHECK(std::abs(observed - alpha[x] / norm) < 0.01);
    }
  }
}

TEST_CASE("low q walks travel further on a barbell") {
  const Graph g = fixtures::barbell(5, 3);
  auto displacement = [&](double q, std::uint64_t seed) {
    const auto corpus = sample_node2vec_walks(g, {.length = 10, .walks_per_node = 770, .p = 1.0, .q = q, .seed = seed});
    double sum = 0;
    for (const auto& w : corpus.walks) sum += static_cast<double>(bfs_distances(g, w.front())[w.back()]);
    return sum / static_cast<double>(corpus.walks.size());
  };
  CHECK(displacement(0.25, 1) > displacement(4.0, 1));
}

TEST_CASE("metapath walks") {
  // users 0..2, items 3..5
  GraphBuilder b;
  b.add_nodes(6);
  for (auto [u, v] : std::vector<NodePair>{{0, 3}, {0, 4}, {1, 4}, {1, 5}, {2, 5}, {2, 3}, {0, 5}}) b.add_edge(u, v);
  const Graph bip = b.build().with_node_types({0, 0, 0, 1, 1, 1});
  const auto corpus = sample_metapath_walks(bip, {.length = 7, .walks_per_node = 50, .metapath = {0, 1}, .seed = 4});
  CHECK(corpus.walks.size() == 150);
  CHECK(corpus.skipped_type == 3);
  for (const auto& w : corpus.walks) {
    CHECK(w.size() == 8);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(bip.node_type(w[i]) == static_cast<int>(i % 2));
  }

  SUBCASE("single type on a homogeneous graph follows the uniform law") {
    const Graph g = five_node().with_node_types(std::vector<int>(5, 7));
    const int T = 5;
    const auto mp = sample_metapath_walks(g, {.length = T, .walks_per_node = 20'000, .metapath = {7}, .seed = 9});
    const auto freq = empirical_visits(mp, 5);
    const Matrix p = oracle_transitions(g);
    Matrix pt = Matrix::Identity(5, 5), law = Matrix::Zero(5, 5);
    for (int t = 1; t <= T; ++t) {
      pt = pt * p;
      law += pt / T;
    }
    for (NodeIndex v = 0; v < 5; ++v) CHECK(total_variation(freq[v], law.row(v).transpose()) < 0.02);
  }

  SUBCASE("three-type graph matches the type-restricted chain") {
    GraphBuilder tb;
    tb.add_nodes(7);
    for (auto [u, v] : std::vector<NodePair>{{0, 2}, {0, 3}, {1, 3}, {2, 4}, {3, 5}, {3, 4}, {4, 0}, {5, 1}, {2, 6}, {6, 5}, {0, 1}})
      tb.add_edge(u, v);
    const std::vector<int> types{0, 0, 1, 1, 2, 2, 1};
    const Graph g = tb.build().with_node_types(types);
    const std::vector<int> path{0, 1, 2};
    const int T = 6;
    const auto mp = sample_metapath_walks(g, {.length = T, .walks_per_node = 30'000, .metapath = path, .seed = 10});
    // State n is "walk already ended".
    const Index n = g.node_count();
    for (NodeIndex s : {NodeIndex{0}, NodeIndex{1}}) {
      Vector dist = Vector::Zero(n + 1);
      dist(s) = 1.0;
      Vector law = Vector::Zero(n + 1);
      for (int t = 1; t <= T; ++t) {
        const int want = path[static_cast<std::size_t>(t) % path.size()];
        Vector next = Vector::Zero(n + 1);
        next(n) = dist(n);
        for (NodeIndex u = 0; u < n; ++u) {
          std::vector<NodeIndex> ok;
          for (NodeIndex x : g.neighbors(u))
            if (types[x] == want) ok.push_back(x);
          if (ok.empty()) {
            next(n) += dist(u);
            continue;
          }
          for (NodeIndex x : ok) next(x) += dist(u) / static_cast<double>(ok.size());
        }
        dist = next;
        law += dist / T;
      }
      Vector freq = Vector::Zero(n + 1);
      double walks = 0;
      for (const auto& w : mp.walks) {
        if (w[0] != s) continue;
        walks += 1;
        for (int t = 1; t <= T; ++t) freq(static_cast<std::size_t>(t) < w.size() ? w[t] : n) += 1.0;
      }
      freq /= walks * T;
      CHECK(total_variation(freq, law) < 0.02);
    }
  }

  CHECK_THROWS_AS(sample_metapath_walks(bip, {.metapath = {0, 9}}), ContractError);
  CHECK_THROWS_AS(sample_metapath_walks(five_node(), {.metapath = {0}}), ContractError);
}

TEST_CASE("pair extraction") {
  WalkCorpus corpus;
  corpus.config.length = 2;
  corpus.walks = {{0, 1, 2}};
  const auto pairs = extract_pairs(corpus, 1);
  CHECK(std::set<NodePair>(pairs.begin(), pairs.end()) == std::set<NodePair>{{0, 1}, {1, 0}, {1, 2}, {2, 1}});
  CHECK(pairs.size() == 4);
  const auto skip = extract_pairs(corpus, 1, 2);
  CHECK(std::set<NodePair>(skip.begin(), skip.end()) == std::set<NodePair>{{0, 2}, {2, 0}});
  CHECK_THROWS_AS(extract_pairs(corpus, 3), ContractError);
  CHECK_THROWS_AS(extract_pairs(corpus, 0), ContractError);

  const auto sampled = sample_uniform_walks(fixtures::karate_club(), {.length = 8, .walks_per_node = 3, .seed = 6});
  const int w = 3;
  std::map<NodePair, int> recount;
  for (const auto& walk : sampled.walks)
    for (std::size_t i = 0; i < walk.size(); ++i)
      for (std::size_t j = 0; j < walk.size(); ++j)
        if (i != j && (i > j ? i - j : j - i) <= static_cast<std::size_t>(w)) ++recount[{walk[i], walk[j]}];
  std::map<NodePair, int> got;
  for (const auto& pr : extract_pairs(sampled, w)) ++got[pr];
  CHECK(got == recount);
}

TEST_CASE("determinism and worker independence") {
  const Graph g = fixtures::karate_club();
  const WalkConfig c{.length = 10, .walks_per_node = 5, .p = 0.5, .q = 2.0, .seed = 77};
  const auto a = sample_node2vec_walks(g, c);
  CHECK(a.walks == sample_node2vec_walks(g, c).walks);
  auto threaded = c;
  threaded.workers = 3;
  CHECK(a.walks == sample_node2vec_walks(g, threaded).walks);
  auto pre = c;
  pre.precompute = true;
  CHECK(a.walks == sample_node2vec_walks(g, pre).walks);
  auto other = c;
  other.seed = 78;
  CHECK(a.walks != sample_node2vec_walks(g, other).walks);

  std::ostringstream x, y;
  write_corpus(a, x);
  write_corpus(sample_node2vec_walks(g, threaded), y);
  CHECK(x.str() == y.str());
  CHECK(x.str().rfind("# length=10", 0) == 0);
}

TEST_CASE("config validation") {
  const Graph g = fixtures::path(4);
  CHECK_THROWS_AS(sample_uniform_walks(g, {.length = 1}), ContractError);
  CHECK_THROWS_AS(sample_node2vec_walks(g, {.p = 0.0}), ContractError);
  CHECK_THROWS_AS(sample_uniform_walks(g, {.walks_per_node = 0}), ContractError);
}
