#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"
#include "grembed/error.hpp"
#include "grembed/fixtures.hpp"
#include "grembed/harness.hpp"
#include "grembed/shallow.hpp"

using namespace grembed;

namespace {

Matrix noise(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * normal(rng);
  return m;
}

// Fraction of (positive, negative) pairs ordered correctly, ties counted as one half.
double auc_brute_force(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0.0;
  for (double p : pos)
    for (double q : neg) wins += p > q ? 1.0 : (p == q ? 0.5 : 0.0);
  return wins / static_cast<double>(pos.size() * neg.size());
}

EmbeddingTable deepwalk(const Graph& g, std::uint64_t seed) {
  ShallowConfig c;
  c.dim = 16;
  c.seed = seed;
  return train_shallow(g, c);
}

}  // namespace

TEST_CASE("reports round-trip through text") {
  EvalReport r;
  r.task = "node_classification";
  r.seeds = {3, 9};
  r.per_seed = {{{"accuracy", 0.75}}, {{"accuracy", 1.0 / 3.0}}};
  r.set_metric("accuracy", (0.75 + 1.0 / 3.0) / 2);
  r.echo("method", "deepwalk");
  r.wall_seconds = 0.5;
  std::ostringstream out;
  write_report(r, out);
  CHECK(out.str().rfind("#version 1\ntask\tnode_classification\nseeds\t3,9\n", 0) == 0);
  std::istringstream in(out.str());
  const EvalReport back = read_report(in);
  CHECK(back.task == r.task);
  CHECK(back.seeds == r.seeds);
  CHECK(back.metric("accuracy") == r.metric("accuracy"));
  CHECK(back.seed_values("accuracy") == r.seed_values("accuracy"));
  CHECK(back.config == r.config);
  CHECK(back.wall_seconds == 0.5);
  CHECK_THROWS_AS(back.metric("auc"), LookupError);
  CHECK(summarize(r).find("accuracy=") != std::string::npos);

  r.set_metric("accuracy", std::nan(""));
  std::ostringstream bad;
  CHECK_THROWS_AS(write_report(r, bad), NumericError);
  std::istringstream no_header("task\tx\n");
  CHECK_THROWS_AS(read_report(no_header), ParseError);
  std::istringstream unknown("#version 1\nwhat\t1\n");
  CHECK_THROWS_AS(read_report(unknown), ParseError);
}

TEST_CASE("stratified splits keep class proportions") {
  std::vector<int> labels;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 10 + 7 * c; ++i) labels.push_back(c);
  labels.push_back(-1);
  for (double f : {0.1, 0.25, 0.5, 0.9})
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto train = stratified_split(labels, f, seed);
      CHECK(train.back() == 0);
      std::map<int, int> count, total;
      for (std::size_t v = 0; v < labels.size(); ++v)
        if (labels[v] >= 0) {
          ++total[labels[v]];
          count[labels[v]] += train[v];
        }
      for (const auto& [c, n] : total) CHECK(std::abs(count[c] - f * n) <= 1.0);
    }
  CHECK_THROWS_AS(stratified_split(labels, 1.0, 0), ContractError);
}

TEST_CASE("classification metrics") {
  const std::vector<int> truth{0, 0, 1, 1, 2}, pred{0, 1, 1, 1, 0};
  CHECK(accuracy(truth, pred) == doctest::Approx(0.6));
  // F1: class 0 = 2/4, class 1 = 4/5, class 2 = 0.
  CHECK(macro_f1(truth, pred) == doctest::Approx((0.5 + 0.8 + 0.0) / 3));
  CHECK(macro_f1(truth, truth) == 1.0);
}

TEST_CASE("node classification on separable and random embeddings") {
  const Index n = 60;
  Matrix z(1, n);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index v = 0; v < n; ++v) {
    labels[static_cast<std::size_t>(v)] = static_cast<int>(v % 2);
    z(0, v) = v % 2 ? 1.0 : -1.0;
  }
  NodeClassificationOptions o;
  o.train_fraction = 0.2;
  const EvalReport sep = node_classification_eval(z, labels, o);
  CHECK(sep.metric("accuracy") == 1.0);
  CHECK(sep.metric("macro_f1") == 1.0);
  CHECK(sep.seeds.size() == 10);

  o.seeds.clear();
  for (std::uint64_t s = 0; s < 20; ++s) o.seeds.push_back(s);
  o.train_fraction = 0.5;
  const EvalReport chance = node_classification_eval(noise(8, n, 5), labels, o);
  CHECK(std::abs(chance.metric("accuracy") - 0.5) <= 0.15);

  // Summary equals the mean of the per-seed values, and workers do not change anything.
  const auto acc = chance.seed_values("accuracy");
  double mean = 0.0;
  for (double a : acc) mean += a / static_cast<double>(acc.size());
  CHECK(chance.metric("accuracy") == doctest::Approx(mean).epsilon(1e-12));
  o.workers = 4;
  const EvalReport threaded = node_classification_eval(noise(8, n, 5), labels, o);
  std::ostringstream a, b;
  write_report(chance, a);
  write_report(threaded, b);
  CHECK(a.str() == b.str());
}

TEST_CASE("node classification split retries") {
  std::vector<int> labels(40, 0);
  labels[7] = 1;
  NodeClassificationOptions o;
  o.train_fraction = 1e-9;
  CHECK_THROWS_AS(node_classification_eval(noise(2, 40, 1), labels, o), ValidationError);

  // A two-member class at 25% is missed about 9 times in 16; retries recover.
  labels[8] = 1;
  o.train_fraction = 0.25;
  o.seeds.clear();
  for (std::uint64_t s = 0; s < 20; ++s) o.seeds.push_back(s);
  const EvalReport r = node_classification_eval(noise(2, 40, 1), labels, o);
  const auto attempts = r.seed_values("split_attempts");
  CHECK(*std::max_element(attempts.begin(), attempts.end()) > 1.0);

  std::vector<int> one_class(40, 0);
  CHECK_THROWS_AS(node_classification_eval(noise(2, 40, 1), one_class, o), ValidationError);
}

TEST_CASE("karate factions from DeepWalk at 10% labels") {
  const Graph g = fixtures::karate_club();
  const auto labels = fixtures::karate_club_factions();
  double total = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    NodeClassificationOptions o;
    o.seeds = {s};
    total += node_classification_eval(deepwalk(g, s).z, labels, o).metric("accuracy");
  }
  CHECK(total / 10 >= 0.9);
}

TEST_CASE("AUC rank formula against pairwise comparison") {
  const std::vector<double> perfect_pos(10, 1.0), perfect_neg(10, 0.0);
  CHECK(auc(perfect_pos, perfect_neg) == 1.0);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const std::size_t p = 1 + uniform_index(rng, 100), q = 1 + uniform_index(rng, 100);
    std::vector<double> pos, neg;
    // Rounded scores force ties.
    for (std::size_t i = 0; i < p; ++i) pos.push_back(std::round(uniform(rng, 0, 10)));
    for (std::size_t i = 0; i < q; ++i) neg.push_back(std::round(uniform(rng, -2, 8)));
    CHECK(auc(pos, neg) == doctest::Approx(auc_brute_force(pos, neg)).epsilon(1e-12));
  }
  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 100);
    std::vector<double> pos, neg;
    for (int i = 0; i < 50; ++i) {
      pos.push_back(uniform01(rng));
      neg.push_back(uniform01(rng));
    }
    mean += auc(pos, neg) / 20;
  }
  CHECK(std::abs(mean - 0.5) <= 0.1);
  CHECK_THROWS_AS(auc({}, perfect_neg), ContractError);
}

TEST_CASE("edge hold-out keeps every node attached") {
  const Graph g = fixtures::karate_club();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const HoldoutSplit s = holdout_edges(g, 0.2, seed);
    CHECK(s.positives.size() == 16);  // round(0.2 * 78)
    CHECK(s.negatives.size() == s.positives.size());
    CHECK(s.residual.node_ids() == g.node_ids());
    CHECK(s.residual.edge_count() == g.edge_count() - 16);
    for (NodeIndex v = 0; v < g.node_count(); ++v) CHECK(s.residual.degree(v) >= 1);
    for (const auto& [u, v] : s.positives) {
      CHECK(g.has_edge(u, v));
      CHECK_FALSE(s.residual.has_edge(u, v));
    }
    for (const auto& [u, v] : s.negatives) {
      CHECK(u != v);
      CHECK_FALSE(g.has_edge(u, v));
    }
  }
  CHECK_THROWS_AS(holdout_edges(fixtures::star(6), 0.2, 0), ConfigError);
  CHECK_THROWS_AS(holdout_edges(g, 0.0, 0), ConfigError);
}

TEST_CASE("link prediction from an oracle embedding") {
  // Two cliques: same-clique pairs score high under the inner product.
  const Graph g = fixtures::barbell(6, 0);
  const EmbedFn oracle = [](const Graph& residual, std::uint64_t) {
    EmbeddingTable t;
    t.node_ids = residual.node_ids();
    t.z = Matrix::Zero(2, residual.node_count());
    for (NodeIndex v = 0; v < residual.node_count(); ++v) t.z(v < 6 ? 0 : 1, v) = 1.0;
    return t;
  };
  LinkPredictionOptions o;
  o.seeds = {1, 2, 3};
  const EvalReport r = link_prediction_eval(g, oracle, o);
  CHECK(r.metric("auc") >= 0.9);
  o.decoder = DecoderKind::bilinear;
  CHECK_THROWS_AS(link_prediction_eval(g, oracle, o), ConfigError);
}

TEST_CASE("karate link prediction with DeepWalk" * doctest::may_fail()) {
  LinkPredictionOptions o;
  const EvalReport r = link_prediction_eval(fixtures::karate_club(), deepwalk, o);
  MESSAGE("mean AUC " << r.metric("auc"));
  CHECK(r.metric("auc") >= 0.7);
}

TEST_CASE("link prediction with the Hadamard classifier") {
  LinkPredictionOptions o;
  o.hadamard = true;
  o.seeds = {0, 1, 2};
  const EvalReport r = link_prediction_eval(fixtures::karate_club(), deepwalk, o);
  CHECK(r.metric("auc") > 0.5);
  CHECK(r.config.back().second == "hadamard_logistic");
}

TEST_CASE("k-means and normalized mutual information") {
  const std::vector<int> a{0, 0, 1, 1}, b{0, 1, 0, 1}, relabeled{5, 5, 2, 2};
  CHECK(normalized_mutual_information(a, a) == doctest::Approx(1.0));
  CHECK(normalized_mutual_information(a, relabeled) == doctest::Approx(1.0));
  CHECK(normalized_mutual_information(a, b) == doctest::Approx(0.0));
  // Entropies and mutual information of a = {0,0,1,1}, c = {0,0,0,1} written out by hand.
  const std::vector<int> c{0, 0, 0, 1};
  const double ha = std::log(2.0), hc = -(0.75 * std::log(0.75) + 0.25 * std::log(0.25));
  const double mi = 0.5 * std::log(0.5 / (0.5 * 0.75)) + 0.25 * std::log(0.25 / (0.5 * 0.75)) +
                    0.25 * std::log(0.25 / (0.5 * 0.25));
  CHECK(normalized_mutual_information(a, c) == doctest::Approx(2 * mi / (ha + hc)).epsilon(1e-12));

  std::vector<int> labels;
  for (int i = 0; i < 12; ++i) labels.push_back(i % 3);
  Matrix onehot = Matrix::Zero(3, 12);
  for (int i = 0; i < 12; ++i) onehot(labels[static_cast<std::size_t>(i)], i) = 1.0;
  CHECK(clustering_eval(onehot, labels, 3).metric("nmi") == doctest::Approx(1.0));

  const KMeansResult same = kmeans(Matrix::Ones(2, 12), 3, 4);
  CHECK(std::all_of(same.assignment.begin(), same.assignment.end(), [](int x) { return x == 0; }));
  CHECK(clustering_eval(Matrix::Ones(2, 12), labels, 3).metric("nmi") == doctest::Approx(0.0));

  Matrix blobs = noise(2, 40, 8, 0.1);
  std::vector<int> side;
  for (Index i = 0; i < 40; ++i) {
    blobs(0, i) += i < 20 ? 5.0 : -5.0;
    side.push_back(i < 20 ? 0 : 1);
  }
  CHECK(clustering_eval(blobs, side, 2, 3).metric("nmi") >= 0.95);
  CHECK_THROWS_AS(clustering_eval(blobs, side, 41), ContractError);
  CHECK_THROWS_AS(clustering_eval(blobs, side, 1), ContractError);
}

TEST_CASE("PCA projection") {
  EmbeddingTable t;
  t.z = noise(2, 15, 3);
  for (int i = 0; i < 15; ++i) t.node_ids.push_back("n" + std::to_string(i));
  const Projection p = export_projection(t);
  for (Index i = 0; i < 15; ++i)
    for (Index j = 0; j < 15; ++j)
      CHECK(std::abs((p.coords.row(i) - p.coords.row(j)).norm() - (t.z.col(i) - t.z.col(j)).norm()) < 1e-9);
  for (Index c = 0; c < 2; ++c) {
    Index arg;
    p.coords.col(c).cwiseAbs().maxCoeff(&arg);
    CHECK(p.coords(arg, c) > 0);
  }
  CHECK(p.explained_variance(0) >= p.explained_variance(1));

  EmbeddingTable rank1 = t;
  const Vector dir = Vector::Ones(4) / 2.0;
  rank1.z = dir * noise(1, 15, 4);
  const Projection r1 = export_projection(rank1);
  CHECK(r1.coords.col(1).isZero());
  CHECK_FALSE(r1.degenerate);

  EmbeddingTable flat = t;
  flat.z = Matrix::Constant(3, 15, 0.1);
  const Projection deg = export_projection(flat);
  CHECK(deg.degenerate);
  CHECK(deg.coords.isZero());

  std::ostringstream out;
  write_projection(p, out);
  CHECK(out.str().rfind("node_id\tx\ty\nn0\t", 0) == 0);
  CHECK_THROWS_AS(export_projection(t, 3), ContractError);
}

TEST_CASE("karate projection separates the factions") {
  const auto labels = fixtures::karate_club_factions();
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Projection p = export_projection(deepwalk(fixtures::karate_club(), seed));
    const auto [within, across] = within_across_distances(p.coords, labels);
    CHECK(within < across);
  }
}
