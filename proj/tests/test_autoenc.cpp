#include <numeric>

#include "doctest.h"
#include "gradcheck.hpp"
#include "grembed/autoenc.hpp"
#include "grembed/error.hpp"
#include "grembed/fixtures.hpp"

using namespace grembed;

namespace {

AutoencoderConfig config_for(Index n, std::vector<Index> rest, std::uint64_t seed = 3) {
  AutoencoderConfig c;
  c.layer_dims = {n};
  c.layer_dims.insert(c.layer_dims.end(), rest.begin(), rest.end());
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("nodes with identical similarity rows share an embedding") {
  const Graph g = fixtures::star(4);
  const EmbeddingTable t = train_autoencoder(g, config_for(5, {3, 2}));
  for (NodeIndex v = 2; v < 5; ++v) CHECK(t.z.col(v) == t.z.col(1));
  CHECK(t.z.col(0) != t.z.col(1));
}

TEST_CASE("a full-width linear autoencoder reconstructs") {
  const Graph g = fixtures::random_connected(10, 6, 1);
  auto c = config_for(10, {10});
  c.hidden = c.output = nn::Activation::identity;
  c.epochs = 600;
  TrainReport r;
  train_autoencoder(g, c, &r);
  CHECK(r.final_loss < 1e-3 * r.initial_loss);
}

TEST_CASE("a bottleneck autoencoder halves its loss") {
  const Graph g = fixtures::random_connected(10, 6, 2);
  TrainReport r;
  const EmbeddingTable t = train_autoencoder(g, config_for(10, {4}), &r);
  CHECK(t.dim() == 4);
  CHECK(r.loss_trace.size() == 201);
  CHECK(r.final_loss < 0.5 * r.initial_loss);
  CHECK(t.get("method") == "sdne");
}

TEST_CASE("encode_vector replays the trained encoder") {
  const Graph g = fixtures::random_connected(8, 5, 4);
  auto c = config_for(8, {6, 3});
  c.le_weight = 0.1;
  Autoencoder model;
  const EmbeddingTable t = train_autoencoder(g, c, nullptr, &model);

  const Matrix s = build_similarity(g, c.similarity).values;
  diff::Tape tape;
  const Matrix z = model.encoder.forward(tape, tape.constant(s)).value();
  CHECK((z.transpose() - t.z).cwiseAbs().maxCoeff() < 1e-12);
  for (Index v = 0; v < 8; ++v) CHECK(encode_vector(model, s.row(v).transpose()) == t.z.col(v));

  CHECK(encode_vector(model, Vector::Ones(8)).size() == 3);
  CHECK_THROWS_AS(encode_vector(model, Vector::Ones(7)), ShapeError);

  for (auto& layer : model.encoder.layers) layer.bias.value.setZero();
  CHECK(encode_vector(model, Vector::Zero(8)) == Vector::Zero(3));
}

TEST_CASE("combined reconstruction and Laplacian loss gradient") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CAPTURE(seed);
    const Graph g = fixtures::random_connected(6, 4, seed);
    const Matrix s = build_similarity(g, SimilaritySpec::adjacency()).values;
    for (auto act : {nn::Activation::tanh, nn::Activation::sigmoid}) {
      auto c = config_for(6, {4, 2}, seed);
      c.hidden = act;
      Autoencoder model = make_autoencoder(c, 6);
      std::vector<diff::Parameter*> params = model.encoder.parameters();
      for (auto* p : model.decoder.parameters()) params.push_back(p);
      const double err = grembed::testing::gradient_relative_error(
          params, [&](diff::Tape& t) { return autoencoder_loss(t, model, s, 0.7); });
      CHECK(err < 1e-5);
    }
  }
}

TEST_CASE("embeddings follow their similarity rows under relabeling") {
  const Graph g = fixtures::random_connected(9, 6, 8);
  std::vector<NodeIndex> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(5);
  shuffle(perm, rng);
  const Graph h = fixtures::permute(g, perm);
  auto c = config_for(9, {5, 3});
  c.le_weight = 0.2;
  c.epochs = 50;
  Autoencoder model;
  const EmbeddingTable a = train_autoencoder(g, c, nullptr, &model);
  const Matrix sh = build_similarity(h, c.similarity).values;
  // relabel the encoder inputs the same way; then relabeled rows land on the original embeddings
  const Matrix w = model.encoder.layers[0].weight.value;
  for (NodeIndex i = 0; i < 9; ++i) model.encoder.layers[0].weight.value.row(perm[i]) = w.row(i);
  for (NodeIndex v = 0; v < 9; ++v)
    CHECK((encode_vector(model, sh.row(perm[v]).transpose()) - a.z.col(v)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("autoencoder configuration errors") {
  const Graph g = fixtures::random_connected(6, 2, 0);
  CHECK_THROWS_AS(train_autoencoder(g, config_for(5, {2})), ContractError);
  CHECK_THROWS_AS(train_autoencoder(g, config_for(6, {7})), ContractError);
  CHECK_THROWS_AS(train_autoencoder(g, config_for(6, {})), ContractError);
  auto c = config_for(6, {3});
  c.le_weight = -1;
  CHECK_THROWS_AS(train_autoencoder(g, c), ContractError);
  c.le_weight = 0;
  c.lr = 1e300;
  c.optimizer = diff::OptimizerConfig::Kind::sgd;
  CHECK_THROWS_AS(train_autoencoder(g, c), NumericError);
}

TEST_CASE("DNGR variant trains on PMI rows") {
  const Graph g = fixtures::karate_club();
  auto c = config_for(34, {16, 4});
  c.similarity = SimilaritySpec::rw_pmi(10, 10, 3, 1);
  TrainReport r;
  const EmbeddingTable t = train_autoencoder(g, c, &r);
  CHECK(t.get("method") == "dngr");
  CHECK(r.final_loss < r.initial_loss);
}
