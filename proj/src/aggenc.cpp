#include "grembed/aggenc.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "checkpoint_io.hpp"
#include "grembed/error.hpp"
#include "grembed/walks.hpp"

namespace grembed {

using diff::Parameter;
using diff::Tape;
using diff::Var;

namespace {

enum : std::uint64_t { kWeights = 0xa66, kTheta = 0x7e7a, kSample = 0x5a, kNegative = 0x4e };

Index neighbor_width(const AggConfig& c, int k) {
  return c.aggregator == Aggregator::maxpool_mlp ? c.dims[static_cast<std::size_t>(k)]
                                                 : c.dims[static_cast<std::size_t>(k - 1)];
}

Index combine_width(const AggConfig& c, int k) {
  const Index in = c.dims[static_cast<std::size_t>(k - 1)];
  return c.combiner == Combiner::concat ? in + neighbor_width(c, k) : in;
}

void validate(const AggConfig& c) {
  if (c.dims.empty()) throw ContractError("aggregation encoder needs at least the attribute width");
  for (Index d : c.dims)
    if (d < 1) throw ContractError("aggregation widths must be positive");
  if (c.neighbor_sample_size && *c.neighbor_sample_size < 1) throw ContractError("neighbor sample size must be >= 1");
  if (c.self_weight < 0 || c.self_weight > 1) throw ContractError("self_weight must lie in [0, 1]");
  for (int k = 1; k <= c.depth(); ++k) {
    const Index in = c.dims[static_cast<std::size_t>(k - 1)];
    const Index out = c.dims[static_cast<std::size_t>(k)];
    if (c.combiner == Combiner::weighted_sum && neighbor_width(c, k) != in)
      throw ShapeError("weighted_sum needs the neighbor state as wide as the self state at layer " + std::to_string(k));
    if (c.interpolate && in != out)
      throw ShapeError("interpolation needs equal widths at layer " + std::to_string(k));
  }
}

/// Neighbor indices and weights of v, subsampled to the fan-out when configured.
void sampled_neighbors(const Graph& g, NodeIndex v, const std::optional<int>& fanout, std::uint64_t seed, int k,
                       std::vector<NodeIndex>& nb, std::vector<double>& w) {
  const auto all = g.neighbors(v);
  const auto all_w = g.neighbor_weights(v);
  nb.assign(all.begin(), all.end());
  w.assign(all_w.begin(), all_w.end());
  if (!fanout || static_cast<Index>(nb.size()) <= *fanout) return;
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(v) + 1));
  const auto keep = static_cast<std::size_t>(*fanout);
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t j = i + uniform_index(rng, nb.size() - i);
    std::swap(nb[i], nb[j]);
    std::swap(w[i], w[j]);
  }
  nb.resize(keep);
  w.resize(keep);
}

Matrix column_of(std::span<const double> v) {
  Matrix m(static_cast<Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Index>(i), 0) = v[i];
  return m;
}

}  // namespace

Aggregator parse_aggregator(const std::string& name) {
  if (name == "mean") return Aggregator::mean;
  if (name == "weighted_mean" || name == "gcn") return Aggregator::weighted_mean;
  if (name == "maxpool" || name == "maxpool_mlp") return Aggregator::maxpool_mlp;
  throw ConfigError("unknown aggregator '" + name + "'");
}

Combiner parse_combiner(const std::string& name) {
  if (name == "concat") return Combiner::concat;
  if (name == "weighted_sum" || name == "sum") return Combiner::weighted_sum;
  throw ConfigError("unknown combiner '" + name + "'");
}

std::string to_string(Aggregator a) {
  switch (a) {
    case Aggregator::mean: return "mean";
    case Aggregator::weighted_mean: return "weighted_mean";
    case Aggregator::maxpool_mlp: return "maxpool_mlp";
  }
  return "mean";
}

std::string to_string(Combiner c) { return c == Combiner::concat ? "concat" : "weighted_sum"; }

AggConfig AggConfig::gcn(std::vector<Index> dims) {
  AggConfig c;
  c.dims = std::move(dims);
  c.aggregator = Aggregator::weighted_mean;
  c.combiner = Combiner::weighted_sum;
  c.self_weight = 0.0;
  c.normalize = false;
  return c;
}

AggConfig AggConfig::sage_mean(std::vector<Index> dims) {
  AggConfig c;
  c.dims = std::move(dims);
  return c;
}

AggConfig AggConfig::sage_pool(std::vector<Index> dims) {
  AggConfig c;
  c.dims = std::move(dims);
  c.aggregator = Aggregator::maxpool_mlp;
  return c;
}

AggConfig AggConfig::column_network(std::vector<Index> dims) {
  AggConfig c;
  c.dims = std::move(dims);
  c.combiner = Combiner::weighted_sum;
  c.normalize = false;
  c.interpolate = true;
  return c;
}

// AggEncoder ------------------------------------------------------------------------

AggEncoder::AggEncoder(AggConfig config) : config_(std::move(config)) {
  validate(config_);
  Rng rng(derive_seed(config_.seed, kWeights));
  for (int k = 1; k <= config_.depth(); ++k) {
    const Index in = config_.dims[static_cast<std::size_t>(k - 1)];
    const Index out = config_.dims[static_cast<std::size_t>(k)];
    AggLayer layer;
    layer.weight = Parameter(nn::glorot(combine_width(config_, k), out, rng));
    if (config_.aggregator == Aggregator::maxpool_mlp) {
      layer.pool_weight = Parameter(nn::glorot(in, out, rng));
      layer.pool_bias = Parameter(Matrix::Zero(1, out));
    }
    if (config_.interpolate) {
      layer.gate_weight = Parameter(nn::glorot(in + neighbor_width(config_, k), out, rng));
      layer.gate_bias = Parameter(Matrix::Zero(1, out));
    }
    layers_.push_back(std::move(layer));
  }
}

Var AggEncoder::aggregate(Tape& tape, const Graph& g, const Var& h, int k, std::uint64_t sample_seed) {
  if (k < 1 || k > config_.depth()) throw IndexError("aggregation layer out of range");
  const Index n = g.node_count();
  if (h.rows() != n) throw ShapeError("one state row per node required");
  std::vector<NodeIndex> nb;
  std::vector<double> w;

  if (config_.aggregator == Aggregator::maxpool_mlp) {
    AggLayer& layer = layers_[static_cast<std::size_t>(k - 1)];
    const Var pooled = diff::relu(
        diff::add_row_broadcast(diff::matmul(h, tape.parameter(layer.pool_weight)), tape.parameter(layer.pool_bias)));
    std::vector<std::vector<Index>> groups(static_cast<std::size_t>(n));
    for (NodeIndex v = 0; v < n; ++v) {
      sampled_neighbors(g, v, config_.neighbor_sample_size, sample_seed, k, nb, w);
      groups[static_cast<std::size_t>(v)].assign(nb.begin(), nb.end());
    }
    return diff::segment_max_rows(pooled, groups);
  }

  std::vector<Eigen::Triplet<double>> entries;
  for (NodeIndex v = 0; v < n; ++v) {
    sampled_neighbors(g, v, config_.neighbor_sample_size, sample_seed, k, nb, w);
    if (config_.aggregator == Aggregator::mean) {
      for (NodeIndex u : nb) entries.emplace_back(v, u, 1.0 / static_cast<double>(nb.size()));
    } else {
      const double dv = g.weighted_degree(v) + 1.0;
      entries.emplace_back(v, v, 1.0 / dv);
      for (std::size_t i = 0; i < nb.size(); ++i)
        entries.emplace_back(v, nb[i], w[i] / std::sqrt(dv * (g.weighted_degree(nb[i]) + 1.0)));
    }
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(entries.begin(), entries.end());
  return diff::spmm(m, h);
}

Var AggEncoder::forward(Tape& tape, const Graph& g, const Var& x, std::uint64_t sample_seed) {
  if (x.rows() != g.node_count()) throw ShapeError("one attribute row per node required");
  if (x.cols() != config_.dims.front())
    throw ShapeError("attribute width " + std::to_string(x.cols()) + " does not match the encoder input " +
                     std::to_string(config_.dims.front()));
  Var h = x;
  for (int k = 1; k <= config_.depth(); ++k) {
    AggLayer& layer = layers_[static_cast<std::size_t>(k - 1)];
    const Var nb = aggregate(tape, g, h, k, sample_seed);
    const Var combined = config_.combiner == Combiner::concat
                             ? diff::concat_cols({h, nb})
                             : config_.self_weight * h + (1.0 - config_.self_weight) * nb;
    Var next = nn::activate(diff::matmul(combined, tape.parameter(layer.weight)), config_.activation);
    if (config_.interpolate) {
      const Var alpha = interpolation_gate(h, nb, tape.parameter(layer.gate_weight), tape.parameter(layer.gate_bias));
      next = column_interpolate(next, h, alpha);
    }
    if (config_.normalize) next = diff::l2_normalize_rows(next);
    h = next;
  }
  return h;
}

Matrix AggEncoder::encode(const Graph& g, const Matrix& attributes) const {
  AggEncoder copy = *this;
  Tape tape;
  return copy.forward(tape, g, tape.constant(attributes.transpose()), config_.seed).value().transpose();
}

std::vector<Parameter*> AggEncoder::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    if (config_.aggregator == Aggregator::maxpool_mlp) {
      out.push_back(&l.pool_weight);
      out.push_back(&l.pool_bias);
    }
    if (config_.interpolate) {
      out.push_back(&l.gate_weight);
      out.push_back(&l.gate_bias);
    }
  }
  return out;
}

std::size_t AggEncoder::parameter_count() const {
  std::size_t total = 0;
  for (auto* p : const_cast<AggEncoder*>(this)->parameters()) total += static_cast<std::size_t>(p->size());
  return total;
}

Matrix fallback_attributes(const Graph& g, FallbackAttributes kind) {
  const Index n = g.node_count();
  if (kind == FallbackAttributes::one_hot) return Matrix::Identity(n, n);
  Matrix x(1, n);
  for (NodeIndex v = 0; v < n; ++v) x(0, v) = g.weighted_degree(v);
  return x;
}

EmbeddingTable encode_all(const Graph& g, const AggEncoder& encoder, FallbackAttributes fallback) {
  const Matrix x = g.has_attributes() ? g.attributes() : fallback_attributes(g, fallback);
  EmbeddingTable table;
  table.z = encoder.encode(g, x);
  table.node_ids = g.node_ids();
  const AggConfig& c = encoder.config();
  table.method = "aggregation";
  table.set("method", table.method);
  table.set("depth", std::to_string(c.depth()));
  table.set("aggregator", to_string(c.aggregator));
  table.set("combiner", to_string(c.combiner));
  table.set("activation", nn::to_string(c.activation));
  table.set("normalize", c.normalize ? "l2" : "none");
  table.set("interpolate", c.interpolate ? "1" : "0");
  if (c.neighbor_sample_size) table.set("neighbor_sample_size", std::to_string(*c.neighbor_sample_size));
  if (!g.has_attributes()) table.set("attributes", fallback == FallbackAttributes::one_hot ? "one_hot" : "degree");
  table.set("seed", std::to_string(c.seed));
  return table;
}

Var column_interpolate(const Var& h_k, const Var& h_prev, const Var& alpha) {
  if (h_k.rows() != h_prev.rows() || h_k.cols() != h_prev.cols() || alpha.rows() != h_k.rows() ||
      alpha.cols() != h_k.cols())
    throw ShapeError("interpolation operands must share a shape");
  return diff::mul(alpha, h_k) + diff::mul(diff::one_minus(alpha), h_prev);
}

Var interpolation_gate(const Var& h_prev, const Var& h_nb, const Var& weight, const Var& bias) {
  return diff::sigmoid(diff::add_row_broadcast(diff::matmul(diff::concat_cols({h_prev, h_nb}), weight), bias));
}

// Supervised head ---------------------------------------------------------------------

Var supervised_loss(const Var& z, std::span<const int> labels, std::span<const Index> rows, const Var& theta) {
  if (rows.empty()) throw ContractError("supervised loss needs at least one labeled node");
  if (static_cast<Index>(labels.size()) != z.rows()) throw ShapeError("one label per node required");
  if (theta.rows() != z.cols()) throw ShapeError("theta must have one row per embedding dimension");
  const Index classes = theta.cols() == 1 ? 2 : theta.cols();
  for (Index r : rows) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= classes) throw ValidationError("label " + std::to_string(y) + " outside the class set");
  }
  const Var scores = diff::matmul(diff::gather_rows(z, rows), theta);
  if (theta.cols() == 1) {
    std::vector<double> sign;
    for (Index r : rows) sign.push_back(labels[static_cast<std::size_t>(r)] == 1 ? 1.0 : -1.0);
    return -diff::reduce_sum(diff::log_sigmoid(diff::mul(scores, z.tape().constant(column_of(sign)))));
  }
  Matrix pick = Matrix::Zero(scores.rows(), scores.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) pick(static_cast<Index>(i), labels[static_cast<std::size_t>(rows[i])]) = 1;
  return -diff::reduce_sum(diff::mul(diff::log(diff::softmax_rows(scores)), z.tape().constant(std::move(pick))));
}

Matrix class_probabilities(const Matrix& z, const Matrix& theta) {
  if (theta.rows() != z.rows()) throw ShapeError("theta must have one row per embedding dimension");
  const Matrix scores = z.transpose() * theta;
  if (theta.cols() == 1) {
    Matrix p(scores.rows(), 2);
    p.col(1) = (1.0 / (1.0 + (-scores.col(0).array()).exp())).matrix();
    p.col(0) = (1.0 - p.col(1).array()).matrix();
    return p;
  }
  Matrix p = scores;
  for (Index i = 0; i < p.rows(); ++i) {
    p.row(i).array() = (p.row(i).array() - p.row(i).maxCoeff()).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

std::vector<int> predict_classes(const Matrix& z, const Matrix& theta) {
  const Matrix p = class_probabilities(z, theta);
  std::vector<int> out(static_cast<std::size_t>(p.rows()));
  for (Index i = 0; i < p.rows(); ++i) {
    Index best;
    p.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

namespace {

SupervisedModel train(const Graph& g, const Matrix& attributes, std::span<const int> labels, bool supervised,
                      bool edge_loss, double supervised_weight, const AggConfig& config, const SupervisedConfig& tc) {
  if (tc.epochs < 0) throw ContractError("epochs must be nonnegative");
  if (attributes.cols() != g.node_count()) throw ShapeError("one attribute column per node required");
  SupervisedModel model;
  model.encoder = AggEncoder(config);
  const Index d = config.dims.back();

  std::vector<Index> rows;
  if (supervised) {
    if (static_cast<Index>(labels.size()) != g.node_count()) throw ShapeError("one label per node required");
    int top = 0;
    for (std::size_t v = 0; v < labels.size(); ++v)
      if (labels[v] >= 0) {
        rows.push_back(static_cast<Index>(v));
        top = std::max(top, labels[v]);
      }
    if (rows.empty()) throw ContractError("supervised training needs at least one labeled node");
    Rng rng(derive_seed(tc.seed, kTheta));
    model.theta = Parameter(nn::glorot(d, top <= 1 ? 1 : top + 1, rng));
  }

  std::vector<NodePair> edges;
  std::optional<AliasTable> noise;
  if (edge_loss) {
    std::vector<double> law(static_cast<std::size_t>(g.node_count()));
    for (NodeIndex u = 0; u < g.node_count(); ++u) {
      law[static_cast<std::size_t>(u)] = std::pow(g.weighted_degree(u), 0.75);
      for (NodeIndex v : g.neighbors(u))
        if (u != v) edges.emplace_back(u, v);
    }
    if (edges.empty()) throw ContractError("the edge loss needs at least one edge");
    if (tc.negatives < 1) throw ContractError("the edge loss needs K >= 1");
    noise.emplace(law);
  }

  std::vector<Parameter*> params = model.encoder.parameters();
  if (supervised) params.push_back(&model.theta);
  diff::Optimizer opt({.kind = diff::OptimizerConfig::Kind::adam, .lr = tc.lr}, params);

  const Matrix xt = attributes.transpose();
  auto& trace = model.report.loss_trace;
  for (int epoch = 0; epoch <= tc.epochs; ++epoch) {
    Tape tape;
    const auto e = static_cast<std::uint64_t>(epoch);
    const Var z = model.encoder.forward(tape, g, tape.constant(xt), derive_seed(tc.seed, kSample, e));
    Var loss;
    if (edge_loss) {
      Rng rng(derive_seed(tc.seed, kNegative, e));
      const auto negs = draw_negatives(edges.size(), tc.negatives, *noise, rng);
      loss = (1.0 / static_cast<double>(edges.size())) * negative_sampling_loss(z, z, edges, negs);
    }
    if (supervised) {
      const Var sup = supervised_loss(z, labels, rows, tape.parameter(model.theta));
      loss = edge_loss ? loss + supervised_weight * sup : sup;
    }
    const double value = loss.scalar();
    if (!std::isfinite(value)) throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
    trace.push_back(value);
    if (epoch == tc.epochs) break;
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
  }
  model.report.initial_loss = trace.front();
  model.report.final_loss = trace.back();
  model.report.pair_count = edge_loss ? edges.size() : rows.size();
  return model;
}

}  // namespace

SupervisedModel train_supervised(const Graph& g, const Matrix& attributes, std::span<const int> labels,
                                 const AggConfig& config, const SupervisedConfig& tc) {
  const bool joint = tc.mode == SupervisedMode::joint;
  return train(g, attributes, labels, true, joint, joint ? tc.supervised_weight : 1.0, config, tc);
}

SupervisedModel train_unsupervised(const Graph& g, const Matrix& attributes, const AggConfig& config,
                                   const SupervisedConfig& tc) {
  return train(g, attributes, {}, false, true, 0.0, config, tc);
}

// Checkpoints -------------------------------------------------------------------------

namespace {

constexpr const char* kMagic = "grembed-aggenc";
constexpr int kVersion = 1;

checkpoint::NamedParameters named_parameters(AggEncoder& enc) {
  checkpoint::NamedParameters out;
  const AggConfig& c = enc.config();
  for (std::size_t k = 0; k < enc.layers().size(); ++k) {
    AggLayer& l = enc.layers()[k];
    const std::string p = "layer" + std::to_string(k + 1) + ".";
    out.emplace_back(p + "weight", &l.weight);
    if (c.aggregator == Aggregator::maxpool_mlp) {
      out.emplace_back(p + "pool_weight", &l.pool_weight);
      out.emplace_back(p + "pool_bias", &l.pool_bias);
    }
    if (c.interpolate) {
      out.emplace_back(p + "gate_weight", &l.gate_weight);
      out.emplace_back(p + "gate_bias", &l.gate_bias);
    }
  }
  return out;
}

}  // namespace

void save_checkpoint(const AggEncoder& encoder, const Matrix* theta, std::ostream& out) {
  const AggConfig& c = encoder.config();
  checkpoint::write_header(out, kMagic, kVersion);
  out << "dims";
  for (Index d : c.dims) out << ' ' << d;
  out << '\n';
  out << "aggregator " << to_string(c.aggregator) << '\n';
  out << "combiner " << to_string(c.combiner) << '\n';
  out << "self_weight " << c.self_weight << '\n';
  out << "activation " << nn::to_string(c.activation) << '\n';
  out << "normalize " << c.normalize << '\n';
  out << "interpolate " << c.interpolate << '\n';
  out << "neighbor_sample_size " << c.neighbor_sample_size.value_or(0) << '\n';
  out << "seed " << c.seed << '\n';
  AggEncoder copy = encoder;
  for (const auto& [name, p] : named_parameters(copy)) checkpoint::write_param(out, name, p->value);
  if (theta) checkpoint::write_param(out, "theta", *theta);
  out << "end\n";
}

AggCheckpoint load_checkpoint(std::istream& in) {
  checkpoint::LineReader r(in);
  r.header(kMagic, kVersion, "an aggregation checkpoint");
  AggConfig c;
  c.dims = r.list("dims");
  c.aggregator = parse_aggregator(r.field<std::string>("aggregator"));
  c.combiner = parse_combiner(r.field<std::string>("combiner"));
  c.self_weight = r.field<double>("self_weight");
  c.activation = nn::parse_activation(r.field<std::string>("activation"));
  c.normalize = r.field<int>("normalize") != 0;
  c.interpolate = r.field<int>("interpolate") != 0;
  if (const int s = r.field<int>("neighbor_sample_size"); s > 0) c.neighbor_sample_size = s;
  c.seed = r.field<std::uint64_t>("seed");

  AggCheckpoint ck;
  ck.encoder = AggEncoder(c);
  for (const auto& [name, p] : named_parameters(ck.encoder)) r.param(name, p->value, true);
  auto s = r.next("end");
  std::string tag;
  s >> tag;
  if (tag == "param") {
    std::string name;
    Index rows = 0, cols = 0;
    if (!(s >> name >> rows >> cols) || name != "theta") throw ParseError("unexpected parameter", r.line());
    if (rows != c.dims.back()) throw ShapeError("theta does not match the embedding width");
    Matrix theta;
    r.values(theta, rows, cols);
    ck.theta = std::move(theta);
    r.end();
  } else if (tag != "end") {
    throw ParseError("expected 'end'", r.line());
  }
  for (auto* p : ck.encoder.parameters()) p->zero_grad();
  return ck;
}

void save_checkpoint_file(const AggEncoder& encoder, const Matrix* theta, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ResourceError("cannot write " + path);
  save_checkpoint(encoder, theta, out);
}

AggCheckpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  return load_checkpoint(in);
}

}  // namespace grembed
