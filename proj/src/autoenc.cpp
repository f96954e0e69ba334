#include "grembed/autoenc.hpp"

#include <cmath>
#include <sstream>

#include "grembed/error.hpp"

namespace grembed {

using diff::Tape;
using diff::Var;

Autoencoder make_autoencoder(const AutoencoderConfig& config, Index node_count) {
  const auto& dims = config.layer_dims;
  if (dims.size() < 2) throw ContractError("autoencoder needs at least an input and an output width");
  if (dims.front() != node_count) throw ContractError("first autoencoder width must equal the node count");
  for (std::size_t k = 1; k < dims.size(); ++k)
    if (dims[k] < 1 || dims[k] > dims[k - 1]) throw ContractError("autoencoder widths must be positive and non-increasing");

  Rng rng(derive_seed(config.seed, 1));
  Autoencoder model{config, {}, {}};
  model.encoder = nn::Mlp(dims, config.hidden, config.output, rng);
  const std::vector<Index> back(dims.rbegin(), dims.rend());
  model.decoder = nn::Mlp(back, config.hidden, config.output, rng);
  return model;
}

Var autoencoder_loss(Tape& tape, Autoencoder& model, const Matrix& s, double le_weight) {
  if (s.cols() != model.encoder.in_dim()) throw ShapeError("similarity rows do not match the encoder input");
  const Var x = tape.constant(s);
  const Var z = model.encoder.forward(tape, x);
  Var loss = diff::reduce_sum(diff::square(model.decoder.forward(tape, z) - x));
  if (le_weight == 0.0) return loss;

  std::vector<NodePair> pairs;
  std::vector<double> weights;
  for (Index i = 0; i < s.rows(); ++i)
    for (Index j = 0; j < s.rows(); ++j)
      if (i != j && s(i, j) != 0.0) {
        pairs.emplace_back(i, j);
        weights.push_back(s(i, j));
      }
  if (pairs.empty()) return loss;
  return loss + le_weight * le_loss(z, pairs, weights);
}

EmbeddingTable train_autoencoder(const Graph& g, const AutoencoderConfig& config, TrainReport* report,
                                 Autoencoder* model_out) {
  if (config.le_weight < 0) throw ContractError("le_weight must be nonnegative");
  if (config.epochs < 0) throw ContractError("epochs must be nonnegative");
  const Matrix s = build_similarity(g, config.similarity).values;
  Autoencoder model = make_autoencoder(config, g.node_count());

  std::vector<diff::Parameter*> params = model.encoder.parameters();
  for (auto* p : model.decoder.parameters()) params.push_back(p);
  diff::Optimizer opt({.kind = config.optimizer, .lr = config.lr}, params);

  TrainReport local;
  TrainReport& rep = report ? *report : local;
  rep = {};
  for (int epoch = 0; epoch <= config.epochs; ++epoch) {
    Tape tape;
    const Var loss = autoencoder_loss(tape, model, s, config.le_weight);
    const double value = loss.scalar();
    if (!std::isfinite(value)) throw NumericError("non-finite autoencoder loss at epoch " + std::to_string(epoch));
    rep.loss_trace.push_back(value);
    if (epoch == config.epochs) break;
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
  }
  rep.initial_loss = rep.loss_trace.front();
  rep.final_loss = rep.loss_trace.back();
  rep.pair_count = static_cast<std::size_t>(g.node_count());

  EmbeddingTable table;
  table.z.resize(config.layer_dims.back(), g.node_count());
  for (Index v = 0; v < g.node_count(); ++v) table.z.col(v) = encode_vector(model, s.row(v).transpose());
  table.node_ids = g.node_ids();
  table.method = config.similarity.kind == SimilaritySpec::Kind::rw_pmi ? "dngr" : "sdne";
  table.set("method", table.method);
  std::ostringstream dims;
  for (std::size_t k = 0; k < config.layer_dims.size(); ++k) dims << (k ? "," : "") << config.layer_dims[k];
  table.set("layer_dims", dims.str());
  table.set("similarity", to_string(config.similarity));
  table.set("le_weight", std::to_string(config.le_weight));
  table.set("activation", nn::to_string(config.hidden));
  table.set("epochs", std::to_string(config.epochs));
  table.set("seed", std::to_string(config.seed));
  if (model_out) *model_out = std::move(model);
  return table;
}

Vector encode_vector(const Autoencoder& model, const Vector& s) {
  if (s.size() != model.encoder.in_dim()) throw ShapeError("similarity row length must equal the node count");
  return model.encoder.evaluate(s.transpose()).transpose();
}

}  // namespace grembed
