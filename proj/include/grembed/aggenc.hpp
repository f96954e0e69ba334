#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grembed/diff.hpp"
#include "grembed/embedding.hpp"
#include "grembed/graph.hpp"
#include "grembed/nn.hpp"
#include "grembed/shallow.hpp"

namespace grembed {

/// `mean` averages neighbors; `weighted_mean` is the GCN propagation over N(v) plus a self-loop with
/// weights w_uv / sqrt(d~_u d~_v), d~ = weighted degree + 1; `maxpool_mlp` is an elementwise max of
/// relu(h_u P + p) with a hidden width equal to the layer output.
enum class Aggregator { mean, weighted_mean, maxpool_mlp };
/// `concat` feeds [h_v, h_N] to W; `weighted_sum` feeds self_weight * h_v + (1 - self_weight) * h_N.
enum class Combiner { concat, weighted_sum };

Aggregator parse_aggregator(const std::string& name);
Combiner parse_combiner(const std::string& name);
std::string to_string(Aggregator a);
std::string to_string(Combiner c);

struct AggConfig {
  /// dims[0] is the attribute width, dims[k] the output width of layer k; K = dims.size() - 1.
  std::vector<Index> dims;
  Aggregator aggregator = Aggregator::mean;
  Combiner combiner = Combiner::concat;
  double self_weight = 0.5;
  nn::Activation activation = nn::Activation::relu;
  /// l2-normalize each node state after every layer.
  bool normalize = true;
  /// Column-network gate between consecutive layers (needs equal widths).
  bool interpolate = false;
  /// Fixed fan-out; nodes with more neighbors keep a uniform sample without replacement.
  std::optional<int> neighbor_sample_size;
  std::uint64_t seed = 42;

  int depth() const { return static_cast<int>(dims.size()) - 1; }

  static AggConfig gcn(std::vector<Index> dims);
  static AggConfig sage_mean(std::vector<Index> dims);
  static AggConfig sage_pool(std::vector<Index> dims);
  static AggConfig column_network(std::vector<Index> dims);
};

struct AggLayer {
  diff::Parameter weight;
  diff::Parameter pool_weight, pool_bias;
  diff::Parameter gate_weight, gate_bias;
};

class AggEncoder {
 public:
  AggEncoder() = default;
  /// Glorot-initialized layers; throws ContractError/ShapeError for invalid configurations.
  explicit AggEncoder(AggConfig config);

  /// Node-major states through all K layers; `x` is |V| x dims[0]. Sampling draws from `sample_seed`.
  diff::Var forward(diff::Tape& tape, const Graph& g, const diff::Var& x, std::uint64_t sample_seed);
  /// Aggregated neighbor state h^k_N for layer k (1-based) from node-major states h.
  diff::Var aggregate(diff::Tape& tape, const Graph& g, const diff::Var& h, int k, std::uint64_t sample_seed);
  /// d x |V| embeddings, sampling with config().seed.
  Matrix encode(const Graph& g, const Matrix& attributes) const;

  std::vector<diff::Parameter*> parameters();
  std::size_t parameter_count() const;
  const AggConfig& config() const { return config_; }
  std::vector<AggLayer>& layers() { return layers_; }
  const std::vector<AggLayer>& layers() const { return layers_; }

 private:
  AggConfig config_;
  std::vector<AggLayer> layers_;
};

/// Degree scalar (1 x |V|) or one-hot identity (|V| x |V|) stand-ins for missing attributes.
enum class FallbackAttributes { degree, one_hot };
Matrix fallback_attributes(const Graph& g, FallbackAttributes kind);

/// Runs the encoder over g with its attributes, or `fallback` when g has none.
EmbeddingTable encode_all(const Graph& g, const AggEncoder& encoder,
                          FallbackAttributes fallback = FallbackAttributes::one_hot);

/// alpha * h_k + (1 - alpha) * h_prev, elementwise.
diff::Var column_interpolate(const diff::Var& h_k, const diff::Var& h_prev, const diff::Var& alpha);
/// sigmoid([h_prev, h_nb] W + b).
diff::Var interpolation_gate(const diff::Var& h_prev, const diff::Var& h_nb, const diff::Var& weight,
                             const diff::Var& bias);

/// Cross-entropy over the nodes in `rows` of node-major z. One theta column gives the binary
/// sigmoid form with labels in {0, 1}; C >= 2 columns give a row softmax over labels in [0, C).
diff::Var supervised_loss(const diff::Var& z, std::span<const int> labels, std::span<const Index> rows,
                          const diff::Var& theta);
/// |V| x C class probabilities for d x |V| embeddings (C = 2 for a single theta column).
Matrix class_probabilities(const Matrix& z, const Matrix& theta);
std::vector<int> predict_classes(const Matrix& z, const Matrix& theta);

enum class SupervisedMode { replace_decoder, joint };

struct SupervisedConfig {
  SupervisedMode mode = SupervisedMode::replace_decoder;
  /// Weight of the supervised term in joint mode.
  double supervised_weight = 1.0;
  int epochs = 200;
  double lr = 0.01;
  /// Negatives per edge for the unsupervised edge loss.
  int negatives = 5;
  std::uint64_t seed = 42;
};

struct SupervisedModel {
  AggEncoder encoder;
  diff::Parameter theta;
  TrainReport report;
};

/// Trains encoder and head end to end on the labeled nodes (label >= 0). Joint mode adds the
/// unsupervised edge loss: mean over edges of -log s(z_u.z_v) - sum_K log s(-z_u.z_n).
SupervisedModel train_supervised(const Graph& g, const Matrix& attributes, std::span<const int> labels,
                                 const AggConfig& config, const SupervisedConfig& train);
/// The edge loss alone, with the same streams as joint mode.
SupervisedModel train_unsupervised(const Graph& g, const Matrix& attributes, const AggConfig& config,
                                   const SupervisedConfig& train);

// Checkpoints ---------------------------------------------------------------------

struct AggCheckpoint {
  AggEncoder encoder;
  std::optional<Matrix> theta;
};

void save_checkpoint(const AggEncoder& encoder, const Matrix* theta, std::ostream& out);
/// Throws ParseError for malformed files and ShapeError when parameters do not fit the dimension chain.
AggCheckpoint load_checkpoint(std::istream& in);
void save_checkpoint_file(const AggEncoder& encoder, const Matrix* theta, const std::string& path);
AggCheckpoint load_checkpoint_file(const std::string& path);

}  // namespace grembed
