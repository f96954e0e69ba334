#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"
#include "gradcheck.hpp"
#include "grembed/error.hpp"
#include "grembed/fixtures.hpp"
#include "grembed/shallow.hpp"

using namespace grembed;
using diff::Parameter;
using diff::Tape;
using diff::Var;
using grembed::testing::gradient_relative_error;

namespace {

Matrix random_matrix(Index r, Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -scale, scale);
  return m;
}

Graph two_cliques() { return fixtures::barbell(5, 0); }

}  // namespace

TEST_CASE("decoders") {
  const Vector a{{1.0, 2.0}}, b{{3.0, 4.0}};
  CHECK(decode_inner(a, b) == 11.0);
  CHECK(decode_sq_distance(a, b) == 8.0);
  CHECK(decode_sigmoid(Vector{{1.0, 0.0}}, Vector{{0.0, 3.0}}) == 0.5);

  Matrix same = Matrix::Constant(2, 3, 0.7);
  for (Index j = 0; j < 3; ++j) CHECK(std::abs(decode_softmax(same, 0, j) - 1.0 / 3.0) < 1e-15);

  Rng rng(5);
  const Matrix z = random_matrix(4, 6, rng);
  for (Index i = 0; i < 6; ++i) {
    double total = 0;
    for (Index j = 0; j < 6; ++j) total += decode(DecoderKind::softmax_inner, z, i, j);
    CHECK(std::abs(total - 1.0) < 1e-12);
  }

  const BilinearDecoder identity({Matrix::Identity(4, 4), random_matrix(4, 4, rng)});
  for (Index i = 0; i < 6; ++i)
    for (Index j = 0; j < 6; ++j)
      CHECK(decode(DecoderKind::bilinear, z, i, j, &identity, 0) == decode(DecoderKind::inner_product, z, i, j));
  CHECK_THROWS_AS(identity.decode(z.col(0), z.col(1), 2), LookupError);
  CHECK_THROWS_AS(identity.decode(z.col(0), z.col(1), -1), LookupError);

  const BilinearDecoder diag({random_matrix(3, 3, rng)}, true);
  CHECK(diag.relation(0)(0, 1) == 0.0);
  CHECK(diag.relation(0)(2, 2) != 0.0);
}

TEST_CASE("embedding file round trip") {
  Rng rng(2);
  EmbeddingTable t;
  t.z = random_matrix(3, 4, rng, 1e3);
  t.node_ids = {"a", "b", "node c", "7"};
  std::ostringstream out;
  write_embeddings(t, out);
  CHECK(out.str().rfind("node_id\t3\n", 0) == 0);
  std::istringstream in(out.str());
  const EmbeddingTable back = read_embeddings(in);
  CHECK(back.z == t.z);
  CHECK(back.node_ids == t.node_ids);
  CHECK(back.index_of("7") == 3);
  CHECK_THROWS_AS(back.index_of("zz"), LookupError);

  std::istringstream bad("node_id\t2\na\t1\n");
  CHECK_THROWS_AS(read_embeddings(bad), ParseError);
}

TEST_CASE("closed-form factorization") {
  const auto eye = closed_form_factorization({SimilaritySpec::adjacency(), Matrix::Identity(2, 2)}, 2);
  CHECK(factorization_residual(eye.z, Matrix::Identity(2, 2)) < 1e-24);

  Matrix s(2, 2);
  s << 2, 1, 1, 2;
  const auto one = closed_form_factorization({SimilaritySpec::adjacency(), s}, 1);
  const double expect = std::sqrt(1.5) / std::sqrt(2.0) * std::sqrt(2.0);  // sqrt(3) * (1/sqrt 2)
  CHECK(std::abs(one.z(0, 0) - expect) < 1e-12);
  CHECK(std::abs(one.z(0, 1) - expect) < 1e-12);
  CHECK(std::abs(factorization_residual(one.z, s) - 1.0) < 1e-12);

  Rng rng(9);
  const Matrix b = random_matrix(7, 7, rng);
  const Matrix psd = b * b.transpose();
  double prev = INFINITY;
  for (int d = 1; d <= 7; ++d) {
    const double r = factorization_residual(closed_form_factorization({SimilaritySpec::adjacency(), psd}, d).z, psd);
    CHECK(r <= prev + 1e-9);
    prev = r;
  }
  CHECK(prev < 1e-18 * psd.squaredNorm() + 1e-18);
  CHECK_THROWS_AS(closed_form_factorization({SimilaritySpec::adjacency(), psd}, 8), ContractError);
  CHECK_THROWS_AS(closed_form_factorization({SimilaritySpec::adjacency(), b}, 2), ContractError);
}

TEST_CASE("gradient descent factorization approaches the closed form") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Graph g = fixtures::random_connected(10, 8, seed);
    const Matrix a = adjacency_matrix(g);
    const double closed = factorization_residual(closed_form_factorization({SimilaritySpec::adjacency(), a}, 3).z, a);
    const double gd = factorization_residual(factorize_gd(a, 3, 5000, 0.0, seed), a);
    CHECK(closed <= gd + 1e-9);
    CHECK(gd <= 1.1 * closed + 1e-9);
  }
}

TEST_CASE("negative sampling loss at zero embeddings") {
  Tape t;
  const Var z = t.constant(Matrix::Zero(4, 3));
  const std::vector<NodePair> pairs{{0, 1}, {2, 3}, {1, 1}};
  const std::vector<std::vector<NodeIndex>> negs{{2, 3}, {0, 0}, {1, 3}};
  CHECK(std::abs(negative_sampling_loss(z, z, pairs, negs).scalar() - 3 * 3 * std::log(2.0)) < 1e-12);
  CHECK_THROWS_AS(negative_sampling_loss(z, z, {}, {}), ContractError);
}

TEST_CASE("hierarchical softmax tree") {
  Rng rng(4);
  const std::vector<double> w2{1.0, 1.0};
  const SoftmaxTree t2 = build_softmax_tree(w2);
  t2.validate();
  const Vector z2 = random_matrix(3, 1, rng);
  const Matrix in2 = random_matrix(1, 3, rng);
  const Vector p2 = leaf_probabilities(t2, z2, in2);
  const double s = 1.0 / (1.0 + std::exp(-in2.row(0).dot(z2)));
  CHECK(std::abs(p2(0) - s) < 1e-15);
  CHECK(std::abs(p2(1) - (1.0 - s)) < 1e-15);

  const std::vector<double> w8{3, 1, 4, 1, 5, 9, 2, 6};
  const SoftmaxTree t8 = build_softmax_tree(w8);
  t8.validate();
  CHECK(t8.internal_count == 7);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector p = leaf_probabilities(t8, random_matrix(4, 1, rng, 2.0), random_matrix(7, 4, rng, 2.0));
    CHECK(std::abs(p.sum() - 1.0) < 1e-10);
  }
  const Vector zero = leaf_probabilities(t8, Vector::Zero(4), Matrix::Zero(7, 4));
  for (Index leaf = 0; leaf < 8; ++leaf) CHECK(zero(leaf) == std::ldexp(1.0, -static_cast<int>(t8.paths[leaf].size())));
  // heaviest node sits on the leftmost path
  CHECK(t8.codes[5] == std::vector<int>{1, 1, 1});

  const std::vector<double> w5{1, 2, 3, 4, 5};
  const SoftmaxTree t5 = build_softmax_tree(w5);
  t5.validate();
  const Vector z5 = leaf_probabilities(t5, Vector::Zero(2), Matrix::Zero(4, 2));
  CHECK(std::abs(z5.sum() - 1.0) < 1e-15);

  SoftmaxTree broken = t8;
  broken.codes[0][0] = -broken.codes[0][0];
  CHECK_THROWS_AS(broken.validate(), ContractError);
  SoftmaxTree short_path = t8;
  short_path.paths[1].pop_back();
  short_path.codes[1].pop_back();
  CHECK_THROWS_AS(short_path.validate(), ContractError);

  // loss on one pair equals -log of the leaf probability
  Parameter z(random_matrix(8, 4, rng)), inner(random_matrix(7, 4, rng));
  Tape tape;
  const std::vector<NodePair> pair{{2, 6}};
  const double loss = hierarchical_softmax_loss(tape.parameter(z), tape.parameter(inner), pair, t8).scalar();
  const double p = leaf_probabilities(t8, z.value.row(2).transpose(), inner.value)(6);
  CHECK(std::abs(loss + std::log(p)) < 1e-12);
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(17);
  const SoftmaxTree tree = build_softmax_tree(std::vector<double>{2, 1, 3, 1, 1});
  for (int trial = 0; trial < 5; ++trial) {
    Parameter z(random_matrix(5, 3, rng));
    Parameter ctx(random_matrix(5, 3, rng));
    Parameter inner(random_matrix(4, 3, rng));
    Parameter rel(random_matrix(3, 3, rng));
    const std::vector<NodePair> pairs{{0, 1}, {1, 2}, {3, 0}, {4, 4}, {2, 3}};
    const std::vector<double> w{1.0, 0.5, 2.0, 1.0, 0.25};
    const std::vector<std::vector<NodeIndex>> negs{{2, 3}, {4, 0}, {1, 1}, {0, 2}, {2, 4}};
    using B = grembed::testing::LossBuilder;
    const std::vector<std::pair<const char*, B>> cases = {
        {"le", [&](Tape& t) { return le_loss(t.parameter(z), pairs, w); }},
        {"mse", [&](Tape& t) { return mse_loss(t.parameter(z), pairs, w); }},
        {"softmax", [&](Tape& t) { return softmax_cross_entropy_loss(t.parameter(z), t.parameter(ctx), pairs); }},
        {"softmax shared", [&](Tape& t) {
           Var zz = t.parameter(z);
           return softmax_cross_entropy_loss(zz, zz, pairs);
         }},
        {"negative sampling", [&](Tape& t) { return negative_sampling_loss(t.parameter(z), t.parameter(ctx), pairs, negs); }},
        {"negative sampling shared", [&](Tape& t) {
           Var zz = t.parameter(z);
           return negative_sampling_loss(zz, zz, pairs, negs);
         }},
        {"hierarchical softmax", [&](Tape& t) { return hierarchical_softmax_loss(t.parameter(z), t.parameter(inner), pairs, tree); }},
        {"bilinear", [&](Tape& t) {
           Var zz = t.parameter(z);
           const std::vector<Index> a{0, 1, 2}, b{3, 4, 0};
           return diff::reduce_sum(diff::square(bilinear_scores(diff::gather_rows(zz, a), t.parameter(rel), diff::gather_rows(zz, b))));
         }},
    };
    for (const auto& [name, build] : cases) {
      CAPTURE(name);
      CHECK(gradient_relative_error({&z, &ctx, &inner, &rel}, build) < 1e-5);
    }
  }
}

TEST_CASE("analytic skip-gram step equals a tape gradient step") {
  Rng rng(23);
  const double lr = 0.3;
  for (auto loss : {SkipGramLoss::negative_sampling, SkipGramLoss::hierarchical_softmax})
    for (bool separate : {false, true}) {
      if (loss == SkipGramLoss::hierarchical_softmax && separate) continue;
      SkipGramData data;
      data.node_count = 6;
      data.pairs = {{0, 1}};
      data.frequencies = {5, 4, 3, 2, 1, 1};
      SkipGramOptions opt{.dim = 3, .negatives = 3, .loss = loss, .separate_context = separate, .seed = 1};
      const Matrix init = random_matrix(3, 6, rng);
      for (const NodePair pair : {NodePair{2, 4}, NodePair{3, 3}, NodePair{0, 5}}) {
        SkipGramTrainer trainer(data, opt, &init);
        // nudge context and inner tables off zero so every term is active
        if (separate) const_cast<Matrix&>(trainer.context()) = random_matrix(3, 6, rng);
        if (loss == SkipGramLoss::hierarchical_softmax) const_cast<Matrix&>(trainer.inner()) = random_matrix(5, 3, rng);
        const std::vector<NodeIndex> negs{pair.first, 1, 1};

        Parameter z(trainer.embeddings().transpose());
        Parameter ctx(trainer.context().transpose());
        Parameter inner(trainer.inner());
        {
          Tape t;
          Var zz = t.parameter(z);
          const std::vector<NodePair> one{pair};
          Var l;
          if (loss == SkipGramLoss::hierarchical_softmax) {
            l = hierarchical_softmax_loss(zz, t.parameter(inner), one, trainer.tree());
          } else {
            l = negative_sampling_loss(zz, separate ? t.parameter(ctx) : zz, one, {negs});
          }
          t.backward(l);
        }
        trainer.step(pair.first, pair.second, negs, lr);
        CHECK((trainer.embeddings().transpose() - (z.value - lr * z.grad)).cwiseAbs().maxCoeff() < 1e-13);
        if (separate) CHECK((trainer.context().transpose() - (ctx.value - lr * ctx.grad)).cwiseAbs().maxCoeff() < 1e-13);
        if (loss == SkipGramLoss::hierarchical_softmax)
          CHECK((trainer.inner() - (inner.value - lr * inner.grad)).cwiseAbs().maxCoeff() < 1e-13);
      }
    }
}

TEST_CASE("Laplacian eigenmaps loss vanishes on equal embeddings") {
  Tape t;
  const Var z = t.constant(Matrix::Constant(4, 2, 1.3));
  const std::vector<NodePair> pairs{{0, 1}, {1, 2}, {2, 3}};
  const std::vector<double> w{1.0, 5.0, 0.5};
  CHECK(le_loss(z, pairs, w).scalar() == 0.0);
}

TEST_CASE("first-order LINE recurrence on a single edge") {
  SkipGramData data;
  data.node_count = 2;
  data.pairs = {{0, 1}, {1, 0}};
  SkipGramTrainer trainer(data, {.dim = 4, .negatives = 1, .seed = 3});
  for (int s = 0; s < 1000; ++s) trainer.step(s % 2, 1 - s % 2, {}, 0.5);
  const Matrix& z = trainer.embeddings();
  CHECK(decode_sigmoid(z.col(0), z.col(1)) > 0.9);
}

TEST_CASE("graph factorization on a single edge") {
  GraphBuilder b;
  b.add_edge("a", "b");
  for (int d : {1, 2}) {
    ShallowConfig c{.method = ShallowMethod::graph_factorization, .dim = d, .gf_edges_only = true, .seed = 4};
    const EmbeddingTable t = train_shallow(b.build(), c);
    CHECK(std::abs(t.z.col(0).dot(t.z.col(1)) - 1.0) < 0.05);
  }
}

// Mean pair loss can never go below the empirical conditional entropy of context given center.
double pair_entropy_floor(const SkipGramData& data) {
  std::map<NodePair, double> joint;
  std::map<NodeIndex, double> center;
  for (const auto& p : data.pairs) {
    joint[p] += 1;
    center[p.first] += 1;
  }
  double h = 0;
  for (const auto& [p, c] : joint) h -= c * std::log(c / center[p.first]);
  return h / static_cast<double>(data.pairs.size());
}

TEST_CASE("DeepWalk on the karate club") {
  const ShallowConfig c{.method = ShallowMethod::deepwalk, .seed = 7};
  TrainReport report;
  const EmbeddingTable t = train_shallow(fixtures::karate_club(), c, &report);
  CHECK(t.dim() == 16);
  CHECK(t.size() == 34);
  CHECK(t.get("loss") == "hierarchical_softmax");
  const double floor = pair_entropy_floor(skipgram_data(fixtures::karate_club(), c));
  CHECK(report.final_loss >= floor - 1e-9);
  CHECK(report.final_loss - floor < 0.05 * (report.initial_loss - floor));
}

// At the default window the entropy floor sits about 21% below the initial loss, so this example is out of
// reach for hierarchical softmax; it is kept visible rather than tuned away.
TEST_CASE("DeepWalk loss drops by 30 percent at defaults" * doctest::may_fail()) {
  TrainReport report;
  train_shallow(fixtures::karate_club(), {.method = ShallowMethod::deepwalk, .seed = 7}, &report);
  CHECK(report.final_loss <= 0.7 * report.initial_loss);
}

TEST_CASE("DeepWalk with negative sampling drops by 30 percent") {
  ShallowConfig c{.method = ShallowMethod::deepwalk, .seed = 7};
  c.loss = SkipGramLoss::negative_sampling;
  TrainReport report;
  train_shallow(fixtures::karate_club(), c, &report);
  CHECK(report.final_loss <= 0.7 * report.initial_loss);
}

TEST_CASE("negative sampling separates two cliques") {
  TrainReport report;
  const Graph g = two_cliques();
  const EmbeddingTable t = train_shallow(g, {.method = ShallowMethod::node2vec, .dim = 8, .seed = 5}, &report);
  CHECK(report.final_loss < report.initial_loss);
  double intra = 0, inter = 0;
  int ni = 0, nx = 0;
  for (NodeIndex i = 0; i < 10; ++i)
    for (NodeIndex j = i + 1; j < 10; ++j) {
      const double dot = t.z.col(i).dot(t.z.col(j));
      if ((i < 5) == (j < 5)) {
        intra += dot;
        ++ni;
      } else {
        inter += dot;
        ++nx;
      }
    }
  CHECK(intra / ni > inter / nx);
}

TEST_CASE("every method lowers its own loss") {
  const Graph g = fixtures::karate_club();
  for (auto m : {ShallowMethod::laplacian_eigenmaps, ShallowMethod::graph_factorization, ShallowMethod::grarep,
                 ShallowMethod::hope, ShallowMethod::deepwalk, ShallowMethod::node2vec, ShallowMethod::line1,
                 ShallowMethod::line2}) {
    CAPTURE(to_string(m));
    TrainReport report;
    ShallowConfig c{.method = m, .dim = 8, .q = 0.5, .seed = 11};
    if (!is_skipgram(m)) c.iterations = 400;
    const EmbeddingTable t = train_shallow(g, c, &report);
    CHECK(t.z.allFinite());
    CHECK(t.dim() == 8);
    CHECK(report.final_loss <= report.initial_loss);
  }
}

TEST_CASE("Laplacian eigenmaps finds the Fiedler direction") {
  const Graph g = two_cliques();
  TrainReport report;
  const EmbeddingTable t = train_shallow(g, {.method = ShallowMethod::laplacian_eigenmaps, .dim = 1, .iterations = 2000, .seed = 2}, &report);
  // unit variance, zero mean
  CHECK(std::abs(t.z.row(0).mean()) < 1e-10);
  CHECK(std::abs(t.z.row(0).squaredNorm() / 10 - 1.0) < 1e-10);
  // the bottom nontrivial eigenvector splits the two cliques
  for (NodeIndex v = 1; v < 5; ++v) CHECK((t.z(0, v) > 0) == (t.z(0, 0) > 0));
  for (NodeIndex v = 5; v < 10; ++v) CHECK((t.z(0, v) > 0) != (t.z(0, 0) > 0));
}

TEST_CASE("training is deterministic and warm starts are honored") {
  const Graph g = fixtures::karate_club();
  const ShallowConfig c{.method = ShallowMethod::node2vec, .dim = 4, .p = 0.5, .q = 2, .epochs = 2, .seed = 99};
  const auto a = train_shallow(g, c);
  CHECK(a.z == train_shallow(g, c).z);
  auto threaded = c;
  threaded.workers = 2;
  CHECK(a.z == train_shallow(g, threaded).z);

  auto frozen = c;
  frozen.epochs = 0;
  Rng rng(1);
  const Matrix init = random_matrix(4, 34, rng);
  CHECK(train_shallow(g, frozen, nullptr, &init).z == init);
  const Matrix wrong = Matrix::Zero(3, 34);
  CHECK_THROWS_AS(train_shallow(g, c, nullptr, &wrong), ShapeError);
  CHECK_THROWS_AS(parse_method("sdne"), ConfigError);
}
