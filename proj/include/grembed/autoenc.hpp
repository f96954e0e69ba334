#pragma once

#include <cstdint>
#include <vector>

#include "grembed/diff.hpp"
#include "grembed/embedding.hpp"
#include "grembed/graph.hpp"
#include "grembed/nn.hpp"
#include "grembed/shallow.hpp"
#include "grembed/similarity.hpp"

namespace grembed {

struct AutoencoderConfig {
  /// Encoder widths from |V| down to d; the decoder mirrors them.
  std::vector<Index> layer_dims;
  /// Adjacency rows (SDNE) or positive PMI rows (DNGR).
  SimilaritySpec similarity = SimilaritySpec::adjacency();
  /// Weight of the Laplacian term over pairs with nonzero similarity.
  double le_weight = 0.0;
  nn::Activation hidden = nn::Activation::relu;
  nn::Activation output = nn::Activation::identity;
  int epochs = 200;
  double lr = 0.01;
  diff::OptimizerConfig::Kind optimizer = diff::OptimizerConfig::Kind::adam;
  std::uint64_t seed = 42;
};

struct Autoencoder {
  AutoencoderConfig config;
  nn::Mlp encoder;
  nn::Mlp decoder;
};

/// Fresh encoder/decoder pair for `config`; throws ContractError for bad layer widths.
Autoencoder make_autoencoder(const AutoencoderConfig& config, Index node_count);

/// sum_i ||dec(enc(s_i)) - s_i||^2 + le_weight * sum_{S_ij != 0} S_ij ||z_i - z_j||^2 with rows of `s` as inputs.
diff::Var autoencoder_loss(diff::Tape& tape, Autoencoder& model, const Matrix& s, double le_weight);

/// Trains on the rows of the configured similarity. `model` receives the trained network when given.
EmbeddingTable train_autoencoder(const Graph& g, const AutoencoderConfig& config, TrainReport* report = nullptr,
                                 Autoencoder* model = nullptr);

/// Encoder forward pass for one similarity row.
Vector encode_vector(const Autoencoder& model, const Vector& s);

}  // namespace grembed
