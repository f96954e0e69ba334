#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "grembed/diff.hpp"
#include "grembed/embedding.hpp"
#include "grembed/graph.hpp"
#include "grembed/nn.hpp"

namespace grembed {

// Fixed-point GNN -------------------------------------------------------------------

struct FixedPointConfig {
  /// Width of x; 0 when the graph carries no attributes.
  Index attribute_dim = 0;
  Index state_dim = 8;
  Index hidden = 16;
  /// Readout width; 0 keeps z = h.
  Index output_dim = 0;
  double contraction_scale = 0.9;
  double tol = 1e-6;
  int max_iters = 1000;
  std::uint64_t seed = 42;
};

struct FixedPointGnn {
  FixedPointConfig config;
  /// h(h_j, x_i, x_j) on the row [h_j, x_i, x_j]; tanh throughout.
  nn::Mlp transition;
  nn::Mlp readout;
};

FixedPointGnn make_fixed_point_gnn(const FixedPointConfig& config);

/// Lipschitz bound of one sweep in the max-over-nodes 2-norm: product of layer spectral norms
/// times the maximum degree.
double contraction_bound(const FixedPointGnn& model, const Graph& g);
/// Rescales the transition weights uniformly so contraction_bound <= contraction_scale.
void enforce_contraction(FixedPointGnn& model, const Graph& g);

/// One sweep h_i <- sum_{j in N(i)} h(h_j, x_i, x_j). x and h are node-major.
Matrix fixed_point_step(const FixedPointGnn& model, const Graph& g, const Matrix& x, const Matrix& h);

struct FixedPointResult {
  EmbeddingTable table;
  /// |V| x state_dim.
  Matrix state;
  int iterations = 0;
  /// max_i ||h_i^k - h_i^{k-1}||_2 per sweep.
  std::vector<double> residuals;
};

/// Enforces the contraction, then sweeps until the residual drops below tol. `x` is m x |V|.
/// Without `h0` the start is x zero-padded to the state width, or uniform(-0.1, 0.1) noise when
/// there are no attributes. Throws ConvergenceError at max_iters.
FixedPointResult gnn_fixed_point(const Graph& g, const Matrix& x, FixedPointGnn& model, const Matrix* h0 = nullptr);

// Gated GNN -------------------------------------------------------------------------

struct GgnnParams {
  /// Message map h_j -> h_j W.
  diff::Parameter message;
  nn::GruCell gru;
  Index state_dim() const { return message.rows(); }
};

GgnnParams make_ggnn(Index state_dim, std::uint64_t seed);

/// K rounds of h_i <- GRU(h_i, sum_{j in N(i)} h_j W) from zero-padded x (m x |V|, m <= state_dim).
EmbeddingTable ggnn_forward(const Graph& g, const Matrix& x, int rounds, const GgnnParams& params);

// MPNN ------------------------------------------------------------------------------

enum class MessageKind { linear, mlp };
enum class UpdateKind { gru, mlp };

struct MpnnConfig {
  Index input_dim = 1;
  Index state_dim = 8;
  /// Message width; the linear message map is state_dim x message_dim.
  Index message_dim = 8;
  int rounds = 2;
  /// `linear`: q = h_j W; `mlp`: q = MLP([h_i, h_j]).
  MessageKind message = MessageKind::mlp;
  /// `gru`: GRU(h_i, m_i); `mlp`: MLP([h_i, m_i]).
  UpdateKind update = UpdateKind::gru;
  Index hidden = 16;
  /// One message map per edge type; untyped edges use type 0.
  int edge_types = 1;
  nn::Activation activation = nn::Activation::tanh;
  Index output_dim = 0;
  std::uint64_t seed = 42;
};

class Mpnn {
 public:
  Mpnn() = default;
  explicit Mpnn(MpnnConfig config);

  /// Node-major states after K rounds (and the readout); x is |V| x input_dim.
  diff::Var forward(diff::Tape& tape, const Graph& g, const diff::Var& x);
  /// d x |V| for attributes m x |V|.
  Matrix encode(const Graph& g, const Matrix& x) const;
  std::vector<diff::Parameter*> parameters();
  const MpnnConfig& config() const { return config_; }

  std::vector<diff::Parameter> linear_message;
  std::vector<nn::Mlp> mlp_message;
  nn::GruCell gru;
  nn::Mlp update_mlp;
  nn::Mlp readout;

 private:
  MpnnConfig config_;
};

EmbeddingTable mpnn_forward(const Graph& g, const Matrix& x, const Mpnn& model);

/// Same text layout as the aggregation-encoder checkpoint, magic "grembed-mpnn".
void save_mpnn_checkpoint(const Mpnn& model, std::ostream& out);
/// Throws ParseError for malformed files and ShapeError when parameters do not fit the config.
Mpnn load_mpnn_checkpoint(std::istream& in);
void save_mpnn_checkpoint_file(const Mpnn& model, const std::string& path);
Mpnn load_mpnn_checkpoint_file(const std::string& path);

/// Zero-pads node-major x to `width` columns; ShapeError when x is wider.
diff::Var pad_columns(const diff::Var& x, Index width);

}  // namespace grembed
