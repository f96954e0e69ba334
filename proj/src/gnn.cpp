#include "grembed/gnn.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/SVD>

#include "checkpoint_io.hpp"
#include "grembed/error.hpp"

namespace grembed {

using diff::Parameter;
using diff::Tape;
using diff::Var;

namespace {

constexpr std::uint64_t kGnnWeights = 0x6e6e;
constexpr std::uint64_t kGnnInit = 0x1417;

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
}

double max_row_norm(const Matrix& m) { return m.rows() == 0 ? 0.0 : m.rowwise().norm().maxCoeff(); }

struct EdgeLists {
  std::vector<Index> dst, src;
  std::vector<int> type;
};

/// Messages flow j -> i for every CSR entry (i, j), in CSR order.
EdgeLists edge_lists(const Graph& g) {
  EdgeLists e;
  for (NodeIndex i = 0; i < g.node_count(); ++i) {
    const auto nb = g.neighbors(i);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      e.dst.push_back(i);
      e.src.push_back(nb[k]);
      e.type.push_back(g.has_edge_types() ? std::max(0, g.neighbor_edge_types(i)[k]) : 0);
    }
  }
  return e;
}

SparseMatrix binary_adjacency(const Graph& g) {
  std::vector<Eigen::Triplet<double>> t;
  for (NodeIndex i = 0; i < g.node_count(); ++i)
    for (NodeIndex j : g.neighbors(i)) t.emplace_back(i, j, 1.0);
  SparseMatrix a(g.node_count(), g.node_count());
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

EmbeddingTable table_for(const Graph& g, Matrix z, const std::string& method) {
  EmbeddingTable t;
  t.z = std::move(z);
  t.node_ids = g.node_ids();
  t.method = method;
  t.set("method", method);
  return t;
}

std::string str(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

}  // namespace

Var pad_columns(const Var& x, Index width) {
  if (x.cols() > width) throw ShapeError("attributes are wider than the state");
  if (x.cols() == width) return x;
  return diff::concat_cols({x, x.tape().constant(Matrix::Zero(x.rows(), width - x.cols()))});
}

// Fixed point -----------------------------------------------------------------------

FixedPointGnn make_fixed_point_gnn(const FixedPointConfig& c) {
  if (c.state_dim < 1 || c.hidden < 1 || c.attribute_dim < 0 || c.output_dim < 0)
    throw ContractError("fixed-point GNN widths must be positive");
  if (!(c.contraction_scale > 0 && c.contraction_scale < 1)) throw ContractError("contraction_scale must lie in (0, 1)");
  if (!(c.tol > 0)) throw ContractError("tol must be positive");
  if (c.max_iters < 1) throw ContractError("max_iters must be positive");
  Rng rng(derive_seed(c.seed, kGnnWeights));
  FixedPointGnn m;
  m.config = c;
  m.transition = nn::Mlp({c.state_dim + 2 * c.attribute_dim, c.hidden, c.state_dim}, nn::Activation::tanh,
                         nn::Activation::tanh, rng);
  if (c.output_dim > 0) m.readout = nn::Mlp({c.state_dim, c.output_dim}, nn::Activation::identity, nn::Activation::identity, rng);
  return m;
}

double contraction_bound(const FixedPointGnn& model, const Graph& g) {
  const auto& layers = model.transition.layers;
  // only the h_j block of the first layer acts on the state
  double bound = spectral_norm(layers.front().weight.value.topRows(model.config.state_dim));
  for (std::size_t l = 1; l < layers.size(); ++l) bound *= spectral_norm(layers[l].weight.value);
  return bound * static_cast<double>(g.max_degree());
}

void enforce_contraction(FixedPointGnn& model, const Graph& g) {
  const double bound = contraction_bound(model, g);
  if (bound <= model.config.contraction_scale) return;
  const double per_layer =
      std::pow(model.config.contraction_scale / bound, 1.0 / static_cast<double>(model.transition.layers.size()));
  for (auto& l : model.transition.layers) l.weight.value *= per_layer;
}

Matrix fixed_point_step(const FixedPointGnn& model, const Graph& g, const Matrix& x, const Matrix& h) {
  const Index s = model.config.state_dim;
  const Index m = model.config.attribute_dim;
  if (h.rows() != g.node_count() || h.cols() != s) throw ShapeError("fixed-point state has the wrong shape");
  if (x.rows() != g.node_count() || x.cols() != m) throw ShapeError("fixed-point attributes have the wrong shape");
  const EdgeLists e = edge_lists(g);
  Matrix out = Matrix::Zero(g.node_count(), s);
  if (e.dst.empty()) return out;
  Matrix in(static_cast<Index>(e.dst.size()), s + 2 * m);
  for (std::size_t k = 0; k < e.dst.size(); ++k) {
    const auto r = static_cast<Index>(k);
    in.row(r).head(s) = h.row(e.src[k]);
    in.row(r).segment(s, m) = x.row(e.dst[k]);
    in.row(r).tail(m) = x.row(e.src[k]);
  }
  const Matrix msg = model.transition.evaluate(in);
  for (std::size_t k = 0; k < e.dst.size(); ++k) out.row(e.dst[k]) += msg.row(static_cast<Index>(k));
  return out;
}

FixedPointResult gnn_fixed_point(const Graph& g, const Matrix& x, FixedPointGnn& model, const Matrix* h0) {
  const FixedPointConfig& c = model.config;
  const Index n = g.node_count();
  if (x.cols() != n || x.rows() != c.attribute_dim) throw ShapeError("attributes must be attribute_dim x |V|");
  enforce_contraction(model, g);
  const Matrix xr = x.transpose();

  Matrix h;
  if (h0) {
    if (h0->rows() != n || h0->cols() != c.state_dim) throw ShapeError("initial state must be |V| x state_dim");
    h = *h0;
  } else if (c.attribute_dim > 0 && c.attribute_dim <= c.state_dim) {
    h = Matrix::Zero(n, c.state_dim);
    h.leftCols(c.attribute_dim) = xr;
  } else {
    Rng rng(derive_seed(c.seed, kGnnInit));
    h.resize(n, c.state_dim);
    for (Index i = 0; i < h.size(); ++i) h.data()[i] = uniform(rng, -0.1, 0.1);
  }

  FixedPointResult result;
  for (int k = 1; k <= c.max_iters; ++k) {
    Matrix next = fixed_point_step(model, g, xr, h);
    const double r = max_row_norm(next - h);
    if (!std::isfinite(r)) throw NumericError("non-finite fixed-point state at iteration " + std::to_string(k));
    result.residuals.push_back(r);
    h = std::move(next);
    if (r < c.tol) {
      result.iterations = k;
      break;
    }
  }
  if (result.iterations == 0)
    throw ConvergenceError("fixed-point iteration did not converge in " + std::to_string(c.max_iters) + " sweeps",
                           result.residuals.back());

  result.state = h;
  const Matrix z = c.output_dim > 0 ? model.readout.evaluate(h) : h;
  result.table = table_for(g, z.transpose(), "gnn_fixed_point");
  result.table.set("state_dim", std::to_string(c.state_dim));
  result.table.set("iterations", std::to_string(result.iterations));
  result.table.set("tol", str(c.tol));
  result.table.set("contraction_scale", str(c.contraction_scale));
  result.table.set("seed", std::to_string(c.seed));
  return result;
}

// Gated GNN --------------------------------------------------------------------------

GgnnParams make_ggnn(Index state_dim, std::uint64_t seed) {
  if (state_dim < 1) throw ContractError("state width must be positive");
  Rng rng(derive_seed(seed, kGnnWeights));
  GgnnParams p;
  p.message = Parameter(nn::glorot(state_dim, state_dim, rng));
  p.gru = nn::GruCell(state_dim, state_dim, rng);
  return p;
}

EmbeddingTable ggnn_forward(const Graph& g, const Matrix& x, int rounds, const GgnnParams& params) {
  if (rounds < 0) throw ContractError("rounds must be nonnegative");
  if (x.cols() != g.node_count()) throw ShapeError("attributes must have one column per node");
  if (params.message.rows() != params.message.cols() || params.gru.state_dim() != params.state_dim() ||
      params.gru.input_dim() != params.state_dim())
    throw ShapeError("gated GNN parameters do not share the state width");
  GgnnParams p = params;
  const SparseMatrix a = binary_adjacency(g);
  Tape tape;
  Var h = pad_columns(tape.constant(x.transpose()), p.state_dim());
  for (int k = 0; k < rounds; ++k) {
    const Var m = diff::spmm(a, diff::matmul(h, tape.parameter(p.message)));
    h = p.gru.forward(tape, h, m);
  }
  EmbeddingTable t = table_for(g, h.value().transpose(), "ggnn");
  t.set("rounds", std::to_string(rounds));
  return t;
}

// MPNN -------------------------------------------------------------------------------

Mpnn::Mpnn(MpnnConfig config) : config_(config) {
  const MpnnConfig& c = config_;
  if (c.input_dim < 0 || c.state_dim < 1 || c.message_dim < 1 || c.hidden < 1 || c.output_dim < 0)
    throw ContractError("MPNN widths must be positive");
  if (c.input_dim > c.state_dim) throw ShapeError("attributes are wider than the state");
  if (c.rounds < 0) throw ContractError("rounds must be nonnegative");
  if (c.edge_types < 1) throw ContractError("at least one edge type is required");
  Rng rng(derive_seed(c.seed, kGnnWeights));
  for (int t = 0; t < c.edge_types; ++t) {
    if (c.message == MessageKind::linear)
      linear_message.emplace_back(nn::glorot(c.state_dim, c.message_dim, rng));
    else
      mlp_message.emplace_back(std::vector<Index>{2 * c.state_dim, c.hidden, c.message_dim}, c.activation, c.activation, rng);
  }
  if (c.update == UpdateKind::gru)
    gru = nn::GruCell(c.message_dim, c.state_dim, rng);
  else
    update_mlp = nn::Mlp({c.state_dim + c.message_dim, c.hidden, c.state_dim}, c.activation, c.activation, rng);
  if (c.output_dim > 0) readout = nn::Mlp({c.state_dim, c.output_dim}, nn::Activation::identity, nn::Activation::identity, rng);
}

Var Mpnn::forward(Tape& tape, const Graph& g, const Var& x) {
  const MpnnConfig& c = config_;
  const Index n = g.node_count();
  if (x.rows() != n || x.cols() != c.input_dim) throw ShapeError("MPNN input must be |V| x input_dim");
  const EdgeLists e = edge_lists(g);
  std::vector<std::vector<Index>> src(static_cast<std::size_t>(c.edge_types)), dst(src.size());
  for (std::size_t k = 0; k < e.dst.size(); ++k) {
    if (e.type[k] >= c.edge_types) throw LookupError("edge type " + std::to_string(e.type[k]) + " has no message map");
    src[static_cast<std::size_t>(e.type[k])].push_back(e.src[k]);
    dst[static_cast<std::size_t>(e.type[k])].push_back(e.dst[k]);
  }

  Var h = pad_columns(x, c.state_dim);
  for (int round = 0; round < c.rounds; ++round) {
    Var m = tape.constant(Matrix::Zero(n, c.message_dim));
    bool first = true;
    for (std::size_t t = 0; t < src.size(); ++t) {
      if (src[t].empty()) continue;
      Var msg;
      if (c.message == MessageKind::linear) {
        msg = diff::gather_rows(diff::matmul(h, tape.parameter(linear_message[t])), src[t]);
      } else {
        msg = mlp_message[t].forward(tape, diff::concat_cols({diff::gather_rows(h, dst[t]), diff::gather_rows(h, src[t])}));
      }
      const Var agg = diff::scatter_add_rows(msg, dst[t], n);
      m = first ? agg : m + agg;
      first = false;
    }
    h = c.update == UpdateKind::gru ? gru.forward(tape, h, m) : update_mlp.forward(tape, diff::concat_cols({h, m}));
  }
  return c.output_dim > 0 ? readout.forward(tape, h) : h;
}

Matrix Mpnn::encode(const Graph& g, const Matrix& x) const {
  Mpnn copy = *this;
  Tape tape;
  return copy.forward(tape, g, tape.constant(x.transpose())).value().transpose();
}

std::vector<Parameter*> Mpnn::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : linear_message) out.push_back(&p);
  for (auto& mlp : mlp_message)
    for (auto* p : mlp.parameters()) out.push_back(p);
  if (config_.update == UpdateKind::gru)
    for (auto* p : gru.parameters()) out.push_back(p);
  else
    for (auto* p : update_mlp.parameters()) out.push_back(p);
  if (config_.output_dim > 0)
    for (auto* p : readout.parameters()) out.push_back(p);
  return out;
}

EmbeddingTable mpnn_forward(const Graph& g, const Matrix& x, const Mpnn& model) {
  const MpnnConfig& c = model.config();
  EmbeddingTable t = table_for(g, model.encode(g, x), "mpnn");
  t.set("rounds", std::to_string(c.rounds));
  t.set("message", c.message == MessageKind::linear ? "linear" : "mlp");
  t.set("update", c.update == UpdateKind::gru ? "gru" : "mlp");
  t.set("edge_types", std::to_string(c.edge_types));
  t.set("seed", std::to_string(c.seed));
  return t;
}

// MPNN checkpoints -------------------------------------------------------------------

namespace {

constexpr const char* kMpnnMagic = "grembed-mpnn";
constexpr int kMpnnVersion = 1;

void name_mlp(checkpoint::NamedParameters& out, const std::string& prefix, nn::Mlp& mlp) {
  for (std::size_t k = 0; k < mlp.layers.size(); ++k) {
    const std::string p = prefix + ".layer" + std::to_string(k + 1) + ".";
    out.emplace_back(p + "weight", &mlp.layers[k].weight);
    if (mlp.layers[k].has_bias) out.emplace_back(p + "bias", &mlp.layers[k].bias);
  }
}

checkpoint::NamedParameters named_parameters(Mpnn& m) {
  checkpoint::NamedParameters out;
  const MpnnConfig& c = m.config();
  for (std::size_t t = 0; t < m.linear_message.size(); ++t)
    out.emplace_back("message" + std::to_string(t) + ".weight", &m.linear_message[t]);
  for (std::size_t t = 0; t < m.mlp_message.size(); ++t) name_mlp(out, "message" + std::to_string(t), m.mlp_message[t]);
  if (c.update == UpdateKind::gru) {
    nn::GruCell& u = m.gru;
    const std::pair<const char*, Parameter*> gates[] = {{"wz", &u.wz}, {"uz", &u.uz}, {"bz", &u.bz},
                                                        {"wr", &u.wr}, {"ur", &u.ur}, {"br", &u.br},
                                                        {"wh", &u.wh}, {"uh", &u.uh}, {"bh", &u.bh}};
    for (const auto& [name, p] : gates) out.emplace_back(std::string("gru.") + name, p);
  } else {
    name_mlp(out, "update", m.update_mlp);
  }
  if (c.output_dim > 0) name_mlp(out, "readout", m.readout);
  return out;
}

const char* to_string(MessageKind k) { return k == MessageKind::linear ? "linear" : "mlp"; }
const char* to_string(UpdateKind k) { return k == UpdateKind::gru ? "gru" : "mlp"; }

}  // namespace

void save_mpnn_checkpoint(const Mpnn& model, std::ostream& out) {
  const MpnnConfig& c = model.config();
  checkpoint::write_header(out, kMpnnMagic, kMpnnVersion);
  out << "input_dim " << c.input_dim << '\n';
  out << "state_dim " << c.state_dim << '\n';
  out << "message_dim " << c.message_dim << '\n';
  out << "rounds " << c.rounds << '\n';
  out << "message " << to_string(c.message) << '\n';
  out << "update " << to_string(c.update) << '\n';
  out << "hidden " << c.hidden << '\n';
  out << "edge_types " << c.edge_types << '\n';
  out << "activation " << nn::to_string(c.activation) << '\n';
  out << "output_dim " << c.output_dim << '\n';
  out << "seed " << c.seed << '\n';
  Mpnn copy = model;
  for (const auto& [name, p] : named_parameters(copy)) checkpoint::write_param(out, name, p->value);
  out << "end\n";
}

Mpnn load_mpnn_checkpoint(std::istream& in) {
  checkpoint::LineReader r(in);
  r.header(kMpnnMagic, kMpnnVersion, "an MPNN checkpoint");
  MpnnConfig c;
  c.input_dim = r.field<Index>("input_dim");
  c.state_dim = r.field<Index>("state_dim");
  c.message_dim = r.field<Index>("message_dim");
  c.rounds = r.field<int>("rounds");
  const auto message = r.field<std::string>("message");
  if (message != "linear" && message != "mlp") throw ParseError("unknown message kind '" + message + "'", r.line());
  c.message = message == "linear" ? MessageKind::linear : MessageKind::mlp;
  const auto update = r.field<std::string>("update");
  if (update != "gru" && update != "mlp") throw ParseError("unknown update kind '" + update + "'", r.line());
  c.update = update == "gru" ? UpdateKind::gru : UpdateKind::mlp;
  c.hidden = r.field<Index>("hidden");
  c.edge_types = r.field<int>("edge_types");
  c.activation = nn::parse_activation(r.field<std::string>("activation"));
  c.output_dim = r.field<Index>("output_dim");
  c.seed = r.field<std::uint64_t>("seed");
  Mpnn m(c);
  for (const auto& [name, p] : named_parameters(m)) {
    r.param(name, p->value, true);
    p->zero_grad();
  }
  r.end();
  return m;
}

void save_mpnn_checkpoint_file(const Mpnn& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ResourceError("cannot write " + path);
  save_mpnn_checkpoint(model, out);
}

Mpnn load_mpnn_checkpoint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  return load_mpnn_checkpoint(in);
}

}  // namespace grembed
