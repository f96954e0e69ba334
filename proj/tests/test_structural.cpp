#include <cmath>
#include <numeric>

#include "doctest.h"
#include "grembed/error.hpp"
#include "grembed/fixtures.hpp"
#include "grembed/structural.hpp"
#include "oracles.hpp"

using namespace grembed;

namespace {

double cosine(const Matrix& z, NodeIndex a, NodeIndex b) {
  return z.col(a).dot(z.col(b)) / (z.col(a).norm() * z.col(b).norm());
}

double mean_cosine(const Matrix& z, const std::vector<NodeIndex>& a, const std::vector<NodeIndex>& b) {
  double sum = 0.0;
  int count = 0;
  for (NodeIndex u : a)
    for (NodeIndex v : b)
      if (u != v) {
        sum += cosine(z, u, v);
        ++count;
      }
  return sum / count;
}

double ratio_cost(Index a, Index b) {
  const double x = std::max<Index>(a, 1), y = std::max<Index>(b, 1);
  return std::max(x, y) / std::min(x, y) - 1.0;
}

Matrix dense_laplacian(const Graph& g) {
  Matrix l = Matrix::Zero(g.node_count(), g.node_count());
  for (NodeIndex u = 0; u < g.node_count(); ++u)
    for (NodeIndex v = 0; v < g.node_count(); ++v)
      if (u != v && g.has_edge(u, v)) {
        l(u, v) = -g.edge_weight(u, v);
        l(u, u) += g.edge_weight(u, v);
      }
  return l;
}

// Lloyd's 2-means from the two mutually farthest points.
std::vector<int> two_means(const Matrix& z) {
  Index a = 0, b = 0;
  double far = -1;
  for (Index i = 0; i < z.cols(); ++i)
    for (Index j = i + 1; j < z.cols(); ++j)
      if ((z.col(i) - z.col(j)).squaredNorm() > far) {
        far = (z.col(i) - z.col(j)).squaredNorm();
        a = i;
        b = j;
      }
  Vector ca = z.col(a), cb = z.col(b);
  std::vector<int> label(static_cast<std::size_t>(z.cols()));
  for (int it = 0; it < 100; ++it) {
    for (Index i = 0; i < z.cols(); ++i)
      label[static_cast<std::size_t>(i)] = (z.col(i) - ca).squaredNorm() <= (z.col(i) - cb).squaredNorm() ? 0 : 1;
    Vector sa = Vector::Zero(z.rows()), sb = sa;
    int na = 0, nb = 0;
    for (Index i = 0; i < z.cols(); ++i)
      if (label[static_cast<std::size_t>(i)] == 0) {
        sa += z.col(i);
        ++na;
      } else {
        sb += z.col(i);
        ++nb;
      }
    if (na) ca = sa / na;
    if (nb) cb = sb / nb;
  }
  return label;
}

int cut_edges(const Graph& g, const std::vector<int>& label) {
  int cut = 0;
  for (NodeIndex u = 0; u < g.node_count(); ++u)
    for (NodeIndex v : g.neighbors(u))
      if (u < v && label[static_cast<std::size_t>(u)] != label[static_cast<std::size_t>(v)]) ++cut;
  return cut;
}

}  // namespace

TEST_CASE("ring degree sequences") {
  const Graph g = fixtures::path(5);
  const auto end = ring_degrees(g, 0, 5);
  CHECK(end[0] == std::vector<Index>{1});
  CHECK(end[1] == std::vector<Index>{2});
  CHECK(end[4] == std::vector<Index>{1});
  CHECK(end[5].empty());
  const auto mid = ring_degrees(g, 2, 2);
  CHECK(mid[1] == std::vector<Index>{2, 2});
  CHECK(mid[2] == std::vector<Index>{1, 1});
}

TEST_CASE("DTW matches brute-force path enumeration") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Index> a(1 + uniform_index(rng, 5)), b(1 + uniform_index(rng, 5));
    for (auto& x : a) x = static_cast<Index>(uniform_index(rng, 6));
    for (auto& x : b) x = static_cast<Index>(uniform_index(rng, 6));
    CHECK(dtw_distance(a, b) == doctest::Approx(testing::dtw_brute_force(a, b, ratio_cost)).epsilon(1e-12));
    CHECK(dtw_distance(a, b) == dtw_distance(b, a));
  }
  const std::vector<Index> empty, three{3}, one{1};
  CHECK(dtw_distance(empty, empty) == 0.0);
  CHECK(dtw_distance(empty, three) == 2.0);
  CHECK(dtw_distance(one, empty) == 0.0);
}

TEST_CASE("struc2vec distances on a 5-node path") {
  const Struc2vecDistances d = struc2vec_distances(fixtures::path(5), 2);
  // R_1(0) = [2] and R_1(1) = [1, 2]: the warping path pairs 2 with 1 (cost 1) and 2 with 2 (cost 0).
  CHECK(d.layer(1)(0, 1) == 1.0);
  // R_1(2) = [2, 2] warps onto [2] at zero cost.
  CHECK(d.layer(1)(0, 2) == 0.0);
  // R_2(0) = [2], R_2(1) = [2].
  CHECK(d.layer(2)(0, 1) == 1.0);
  CHECK(d.layer(1)(0, 4) == 0.0);
  CHECK(d.layer(2)(1, 3) == 0.0);
  CHECK_THROWS_AS(d.layer(3), IndexError);
  CHECK_THROWS_AS(struc2vec_distances(fixtures::path(5), 0), ContractError);
}

TEST_CASE("struc2vec distances vanish on automorphic pairs and regular graphs") {
  for (const Graph& g : {fixtures::barbell(5, 3), fixtures::petersen(), fixtures::star(4), fixtures::path(6)}) {
    const auto orbit = testing::automorphism_orbits(g);
    const Struc2vecDistances d = struc2vec_distances(g, 4);
    for (int k = 1; k <= 4; ++k)
      for (NodeIndex u = 0; u < g.node_count(); ++u)
        for (NodeIndex v = 0; v < g.node_count(); ++v) {
          if (orbit[static_cast<std::size_t>(u)] == orbit[static_cast<std::size_t>(v)]) CHECK(d.layer(k)(u, v) == 0.0);
          CHECK(d.layer(k)(u, v) == d.layer(k)(v, u));
          if (k > 1) CHECK(d.layer(k)(u, v) >= d.layer(k - 1)(u, v));
        }
  }
  for (const Graph& g : {fixtures::cycle(7), fixtures::petersen(), fixtures::complete(5)})
    CHECK(struc2vec_distances(g, 3).layer(3).isZero(0.0));
}

TEST_CASE("struc2vec distances are monotone in k") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Graph g = fixtures::random_connected(10, 6, seed);
    const Struc2vecDistances d = struc2vec_distances(g, 5);
    for (int k = 2; k <= 5; ++k) CHECK(((d.layer(k) - d.layer(k - 1)).array() >= 0.0).all());
  }
}

TEST_CASE("struc2vec walks follow the layer weights") {
  // On a regular graph every auxiliary weight is 1, so each step is uniform over the other nodes.
  const Graph g = fixtures::cycle(6);
  const Struc2vecDistances d = struc2vec_distances(g, 3);
  Struc2vecConfig c;
  c.walk_length = 20;
  c.walks_per_node = 500;
  c.seed = 3;
  const WalkCorpus corpus = sample_struc2vec_walks(d, c);
  CHECK(corpus.walks.size() == 6 * 500);
  Matrix counts = Matrix::Zero(6, 6);
  for (const auto& w : corpus.walks) {
    CHECK(w.size() == 21);
    for (std::size_t i = 1; i < w.size(); ++i) counts(w[i - 1], w[i]) += 1;
  }
  CHECK(counts.diagonal().isZero(0.0));
  for (Index u = 0; u < 6; ++u) {
    const Vector row = counts.row(u).transpose() / counts.row(u).sum();
    double tv = 0.0;
    for (Index v = 0; v < 6; ++v) tv += std::abs(row(v) - (u == v ? 0.0 : 0.2));
    CHECK(tv / 2 < 0.02);
  }
  CHECK(sample_struc2vec_walks(d, c).walks == corpus.walks);
}

TEST_CASE("struc2vec separates barbell ends from the path") {
  const Graph g = fixtures::barbell(5, 3);
  const std::vector<NodeIndex> left{0, 1, 2, 3}, right{9, 10, 11, 12}, path{5, 6, 7};
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Struc2vecConfig c;
    c.seed = seed;
    TrainReport report;
    const Matrix z = struc2vec_embed(g, c, &report).z;
    CHECK(report.final_loss < report.initial_loss);
    if (mean_cosine(z, left, left) > mean_cosine(z, left, path) && mean_cosine(z, right, right) > mean_cosine(z, right, path))
      ++wins;
  }
  CHECK(wins >= 8);
}

TEST_CASE("struc2vec places automorphic pairs closer than the median pair") {
  const Graph g = fixtures::barbell(5, 3);
  const auto orbit = testing::automorphism_orbits(g);
  const Matrix z = struc2vec_embed(g, {.seed = 1}).z;
  std::vector<double> all, same;
  for (NodeIndex u = 0; u < g.node_count(); ++u)
    for (NodeIndex v = u + 1; v < g.node_count(); ++v) {
      const double dist = (z.col(u) - z.col(v)).norm();
      all.push_back(dist);
      if (orbit[static_cast<std::size_t>(u)] == orbit[static_cast<std::size_t>(v)]) same.push_back(dist);
    }
  std::nth_element(all.begin(), all.begin() + static_cast<long>(all.size() / 2), all.end());
  const double median = all[all.size() / 2];
  CHECK(std::accumulate(same.begin(), same.end(), 0.0) / static_cast<double>(same.size()) < median);
}

TEST_CASE("struc2vec on a regular graph carries no positional split") {
  // 2-means on the embedding should cut as many cycle edges as a random split of the same sizes.
  const Graph g = fixtures::cycle(20);
  int below = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto label = two_means(struc2vec_embed(g, {.dim = 8, .seed = seed}).z);
    const int observed = cut_edges(g, label);
    Rng rng(seed + 50);
    std::vector<int> shuffled = label;
    int smaller = 0;
    const int trials = 2000;
    for (int t = 0; t < trials; ++t) {
      shuffle(shuffled, rng);
      if (cut_edges(g, shuffled) <= observed) ++smaller;
    }
    // observed cut sits in the lower 1% tail only if the embedding tracks position
    if (static_cast<double>(smaller) / trials < 0.01) ++below;
  }
  CHECK(below <= 1);
}

TEST_CASE("GraphWave heat kernel") {
  for (const Graph& g : {fixtures::barbell(5, 3), fixtures::petersen(), fixtures::random_connected(9, 5, 2)}) {
    const Matrix lap = dense_laplacian(g);
    const WaveletSignatures zero = graphwave_signature(g, {.scale = 0.0});
    CHECK((zero.psi - Matrix::Identity(g.node_count(), g.node_count())).cwiseAbs().maxCoeff() < 1e-12);
    for (double s : {0.1, 0.5, 2.0}) {
      const WaveletSignatures w = graphwave_signature(g, {.scale = s});
      for (NodeIndex v = 0; v < g.node_count(); ++v) CHECK(std::abs(w.psi.col(v).sum() - 1.0) < 1e-9);
      CHECK((w.psi - testing::heat_kernel_series(lap, s)).cwiseAbs().maxCoeff() < 1e-9);
      CHECK(w.char_samples.rows() == 100);
      CHECK(w.t_grid.front() == 0.0);
      CHECK(w.t_grid.back() == 100.0);
      CHECK((w.char_samples.row(0).array() - 1.0).abs().maxCoeff() < 1e-15);
      CHECK(w.char_samples.row(1).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("GraphWave signatures respect structural equivalence on the barbell") {
  const Graph g = fixtures::barbell(5, 3);
  const auto orbit = testing::automorphism_orbits(g);
  const auto classes = testing::degree_refinement_classes(g);
  CHECK(testing::same_partition(orbit, classes));
  const WaveletSignatures w = graphwave_signature(g);
  for (NodeIndex u = 0; u < g.node_count(); ++u)
    for (NodeIndex v = 0; v < g.node_count(); ++v)
      if (orbit[static_cast<std::size_t>(u)] == orbit[static_cast<std::size_t>(v)]) {
        CHECK((w.char_samples.col(u) - w.char_samples.col(v)).cwiseAbs().maxCoeff() < 1e-8);
        Vector a = w.psi.col(u), b = w.psi.col(v);
        std::sort(a.data(), a.data() + a.size());
        std::sort(b.data(), b.data() + b.size());
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-8);
      }

  // grouping signatures that coincide recovers exactly the refinement classes
  std::vector<int> group(static_cast<std::size_t>(g.node_count()), -1);
  int next = 0;
  for (NodeIndex u = 0; u < g.node_count(); ++u) {
    if (group[static_cast<std::size_t>(u)] >= 0) continue;
    group[static_cast<std::size_t>(u)] = next;
    for (NodeIndex v = u + 1; v < g.node_count(); ++v)
      if ((w.char_samples.col(u) - w.char_samples.col(v)).norm() < 1e-6) group[static_cast<std::size_t>(v)] = next;
    ++next;
  }
  CHECK(testing::same_partition(group, classes));
  CHECK(next == 4);
}

TEST_CASE("GraphWave is isomorphism invariant") {
  Rng rng(4);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Graph g = fixtures::random_connected(9, 6, seed);
    std::vector<NodeIndex> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm, rng);
    const Graph h = fixtures::permute(g, perm);
    const WaveletSignatures a = graphwave_signature(g), b = graphwave_signature(h);
    for (NodeIndex v = 0; v < 9; ++v) CHECK((a.char_samples.col(v) - b.char_samples.col(perm[v])).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("GraphWave embedding and errors") {
  const Graph g = fixtures::cycle(5);
  const EmbeddingTable plain = graphwave_embed(g, {.t_grid = {0.0, 1.0, 2.0}});
  CHECK(plain.dim() == 6);
  CHECK(plain.method == "graphwave");
  const EmbeddingTable with_psi = graphwave_embed(g, {.t_grid = {0.0, 1.0, 2.0}}, true);
  CHECK(with_psi.dim() == 11);
  CHECK(with_psi.z.topRows(6) == plain.z);
  CHECK_THROWS_AS(graphwave_signature(g, {.dense_cap = 4}), ResourceError);
  CHECK_THROWS_AS(graphwave_signature(g, {.scale = -1.0}), ContractError);
}
