#include "grembed/shallow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "grembed/error.hpp"

namespace grembed {

namespace {

// Stream tags for derive_seed(seed, tag, kTrainerStream); walks use b = 0.
constexpr std::uint64_t kTrainerStream = 0x7a11;
enum : std::uint64_t { kInit = 1, kShuffle = 2, kEval = 3, kBlock = 16 };

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

Matrix uniform_init(Index d, Index n, std::uint64_t seed) {
  Rng rng(seed);
  Matrix z(d, n);
  const double r = 0.5 / static_cast<double>(d);
  for (Index v = 0; v < n; ++v)
    for (Index k = 0; k < d; ++k) z(k, v) = uniform(rng, -r, r);
  return z;
}

template <typename T>
std::string str(const T& v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

std::uint64_t stream(std::uint64_t seed, std::uint64_t tag) { return derive_seed(seed, tag, kTrainerStream); }

}  // namespace

// SkipGramTrainer ---------------------------------------------------------------------

SkipGramTrainer::SkipGramTrainer(SkipGramData data, SkipGramOptions options, const Matrix* init)
    : data_(std::move(data)), opt_(options), separate_(options.separate_context), rng_(stream(options.seed, kShuffle)) {
  const Index n = data_.node_count;
  const Index d = opt_.dim;
  if (n < 1) throw ContractError("skip-gram training needs at least one node");
  if (d < 1) throw ContractError("embedding dimension must be positive");
  if (data_.pairs.empty()) throw ContractError("skip-gram training needs at least one pair");
  if (opt_.epochs < 0) throw ContractError("epochs must be nonnegative");
  if (opt_.loss == SkipGramLoss::negative_sampling && opt_.negatives < 1)
    throw ContractError("negative sampling needs K >= 1");
  for (const auto& [i, j] : data_.pairs)
    if (i < 0 || j < 0 || i >= n || j >= n) throw IndexError("training pair outside the node range");
  if (data_.frequencies.empty()) data_.frequencies.assign(static_cast<std::size_t>(n), 1.0);
  if (static_cast<Index>(data_.frequencies.size()) != n) throw ShapeError("one frequency per node required");
  if (!data_.tree_weights.empty() && static_cast<Index>(data_.tree_weights.size()) != n)
    throw ShapeError("one tree weight per node required");

  if (init) {
    if (init->rows() != d || init->cols() != n) throw ShapeError("warm-start matrix has the wrong shape");
    z_ = *init;
  } else {
    z_ = uniform_init(d, n, stream(opt_.seed, kInit));
  }
  if (separate_) ctx_ = Matrix::Zero(d, n);

  if (opt_.loss == SkipGramLoss::hierarchical_softmax) {
    tree_ = build_softmax_tree(data_.tree_weights.empty() ? data_.frequencies : data_.tree_weights);
    inner_ = Matrix::Zero(tree_.internal_count, d);
  } else {
    std::vector<double> noise(data_.frequencies.size());
    for (std::size_t v = 0; v < noise.size(); ++v) noise[v] = std::pow(std::max(0.0, data_.frequencies[v]), 0.75);
    noise_ = AliasTable(noise);
    Rng eval(stream(opt_.seed, kEval));
    eval_negatives_ = draw_negatives(data_.pairs.size(), opt_.negatives, noise_, eval);
  }

  std::size_t per_epoch = data_.pairs.size();
  if (!data_.pair_weights.empty()) {
    if (data_.pair_weights.size() != data_.pairs.size()) throw ShapeError("one weight per pair required");
    pair_sampler_ = AliasTable(data_.pair_weights);
    per_epoch = data_.samples_per_epoch > 0 ? data_.samples_per_epoch : data_.pairs.size();
  }
  order_.resize(data_.pairs.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  total_steps_ = std::max<std::size_t>(1, per_epoch * static_cast<std::size_t>(opt_.epochs));
}

double SkipGramTrainer::current_lr() const {
  const double frac = 1.0 - static_cast<double>(steps_) / static_cast<double>(total_steps_);
  return opt_.lr * std::max(1e-4, frac);
}

void SkipGramTrainer::step(NodeIndex i, NodeIndex j, std::span<const NodeIndex> negatives, double lr) {
  Matrix& ctx = separate_ ? ctx_ : z_;
  const Vector zi = z_.col(i);
  Vector gi = Vector::Zero(zi.size());
  // Every gradient is taken at the pre-step values, then applied.
  if (opt_.loss == SkipGramLoss::hierarchical_softmax) {
    const auto& path = tree_.paths[static_cast<std::size_t>(j)];
    const auto& code = tree_.codes[static_cast<std::size_t>(j)];
    std::vector<std::pair<Index, Vector>> updates;
    updates.reserve(path.size());
    for (std::size_t k = 0; k < path.size(); ++k) {
      const double c = code[k];
      const double g = -c * (1.0 - sigmoid(c * inner_.row(path[k]).dot(zi)));
      gi += g * inner_.row(path[k]).transpose();
      updates.emplace_back(path[k], g * zi);
    }
    if (penalty_) penalty_(i, zi, gi);
    for (const auto& [node, g] : updates) inner_.row(node) -= lr * g.transpose();
    z_.col(i) -= lr * gi;
    return;
  }

  std::vector<std::pair<NodeIndex, Vector>> updates;
  updates.reserve(negatives.size() + 1);
  const Vector cj = ctx.col(j);
  const double gp = sigmoid(zi.dot(cj)) - 1.0;
  gi += gp * cj;
  updates.emplace_back(j, gp * zi);
  for (NodeIndex n : negatives) {
    const Vector cn = ctx.col(n);
    const double gn = sigmoid(zi.dot(cn));
    gi += gn * cn;
    updates.emplace_back(n, gn * zi);
  }
  if (penalty_) penalty_(i, zi, gi);
  for (const auto& [node, g] : updates) ctx.col(node) -= lr * g;
  z_.col(i) -= lr * gi;
}

void SkipGramTrainer::run_epoch() {
  const auto k = static_cast<std::size_t>(opt_.negatives);
  std::vector<NodeIndex> negs(opt_.loss == SkipGramLoss::negative_sampling ? k : 0);
  auto one = [&](const NodePair& pair) {
    for (auto& n : negs) n = static_cast<NodeIndex>(noise_.sample(rng_));
    step(pair.first, pair.second, negs, current_lr());
    ++steps_;
  };
  if (!data_.pair_weights.empty()) {
    const std::size_t samples = data_.samples_per_epoch > 0 ? data_.samples_per_epoch : data_.pairs.size();
    for (std::size_t s = 0; s < samples; ++s) one(data_.pairs[pair_sampler_.sample(rng_)]);
  } else {
    shuffle(order_, rng_);
    for (std::size_t idx : order_) one(data_.pairs[idx]);
  }
  ++epoch_;
  if (!z_.allFinite() || (separate_ && !ctx_.allFinite()) || !inner_.allFinite())
    throw NumericError("non-finite embeddings after epoch " + std::to_string(epoch_) + " (step " +
                       std::to_string(steps_) + ", lr " + str(current_lr()) + ")");
}

void SkipGramTrainer::train() {
  while (epoch_ < opt_.epochs) run_epoch();
}

double SkipGramTrainer::pair_loss() const {
  const Matrix& ctx = context();
  double total = 0.0;
  for (std::size_t p = 0; p < data_.pairs.size(); ++p) {
    const auto [i, j] = data_.pairs[p];
    const auto zi = z_.col(i);
    if (opt_.loss == SkipGramLoss::hierarchical_softmax) {
      const auto& path = tree_.paths[static_cast<std::size_t>(j)];
      const auto& code = tree_.codes[static_cast<std::size_t>(j)];
      for (std::size_t k = 0; k < path.size(); ++k) total -= log_sigmoid(code[k] * inner_.row(path[k]).dot(zi));
    } else {
      total -= log_sigmoid(zi.dot(ctx.col(j)));
      for (NodeIndex n : eval_negatives_[p]) total -= log_sigmoid(-zi.dot(ctx.col(n)));
    }
  }
  const double mean = total / static_cast<double>(data_.pairs.size());
  if (!std::isfinite(mean)) throw NumericError("non-finite pair loss after epoch " + std::to_string(epoch_));
  return mean;
}

// Methods -------------------------------------------------------------------------------

ShallowMethod parse_method(const std::string& name) {
  if (name == "laplacian_eigenmaps" || name == "le") return ShallowMethod::laplacian_eigenmaps;
  if (name == "graph_factorization" || name == "gf") return ShallowMethod::graph_factorization;
  if (name == "grarep") return ShallowMethod::grarep;
  if (name == "hope") return ShallowMethod::hope;
  if (name == "deepwalk") return ShallowMethod::deepwalk;
  if (name == "node2vec") return ShallowMethod::node2vec;
  if (name == "line1") return ShallowMethod::line1;
  if (name == "line2") return ShallowMethod::line2;
  throw ConfigError("unknown method: " + name);
}

std::string to_string(ShallowMethod method) {
  switch (method) {
    case ShallowMethod::laplacian_eigenmaps: return "laplacian_eigenmaps";
    case ShallowMethod::graph_factorization: return "graph_factorization";
    case ShallowMethod::grarep: return "grarep";
    case ShallowMethod::hope: return "hope";
    case ShallowMethod::deepwalk: return "deepwalk";
    case ShallowMethod::node2vec: return "node2vec";
    case ShallowMethod::line1: return "line1";
    case ShallowMethod::line2: return "line2";
  }
  return "?";
}

bool is_skipgram(ShallowMethod method) {
  return method == ShallowMethod::deepwalk || method == ShallowMethod::node2vec || method == ShallowMethod::line1 ||
         method == ShallowMethod::line2;
}

SkipGramOptions skipgram_options(const ShallowConfig& c) {
  SkipGramOptions o;
  o.dim = c.dim;
  o.lr = c.lr;
  o.epochs = c.epochs;
  o.negatives = c.negatives;
  o.loss = c.loss.value_or(c.method == ShallowMethod::deepwalk ? SkipGramLoss::hierarchical_softmax
                                                                : SkipGramLoss::negative_sampling);
  o.separate_context = o.loss == SkipGramLoss::negative_sampling && c.method != ShallowMethod::line1;
  o.seed = c.seed;
  return o;
}

SkipGramData skipgram_data(const Graph& g, const ShallowConfig& c, Index* skipped_isolated) {
  SkipGramData data;
  data.node_count = g.node_count();
  data.frequencies.assign(static_cast<std::size_t>(g.node_count()), 0.0);
  data.tree_weights.resize(static_cast<std::size_t>(g.node_count()));
  for (NodeIndex v = 0; v < g.node_count(); ++v) data.tree_weights[static_cast<std::size_t>(v)] = g.weighted_degree(v);
  if (c.method == ShallowMethod::line1 || c.method == ShallowMethod::line2) {
    Index isolated = 0;
    for (NodeIndex u = 0; u < g.node_count(); ++u) {
      if (g.degree(u) == 0) ++isolated;
      data.frequencies[static_cast<std::size_t>(u)] = g.weighted_degree(u);
      const auto nb = g.neighbors(u);
      const auto w = g.neighbor_weights(u);
      for (std::size_t k = 0; k < nb.size(); ++k) {
        data.pairs.emplace_back(u, nb[k]);
        data.pair_weights.push_back(w[k]);
      }
    }
    data.samples_per_epoch = data.pairs.size() * static_cast<std::size_t>(c.walks_per_node) *
                             static_cast<std::size_t>(c.walk_length);
    if (skipped_isolated) *skipped_isolated = isolated;
    return data;
  }
  if (c.method != ShallowMethod::deepwalk && c.method != ShallowMethod::node2vec)
    throw ContractError("skip-gram data requested for a factorization method");

  WalkConfig wc;
  wc.length = c.walk_length;
  wc.walks_per_node = c.walks_per_node;
  wc.p = c.method == ShallowMethod::node2vec ? c.p : 1.0;
  wc.q = c.method == ShallowMethod::node2vec ? c.q : 1.0;
  wc.seed = c.seed;
  wc.workers = c.workers;
  const WalkCorpus corpus =
      c.method == ShallowMethod::node2vec ? sample_node2vec_walks(g, wc) : sample_uniform_walks(g, wc);
  for (const auto& w : corpus.walks)
    for (NodeIndex v : w) data.frequencies[static_cast<std::size_t>(v)] += 1.0;
  data.pairs = extract_pairs(corpus, c.window, c.skip);
  if (skipped_isolated) *skipped_isolated = corpus.skipped_isolated;
  return data;
}

// Factorization family ------------------------------------------------------------------

double factorization_residual(const Matrix& z, const Matrix& s) { return (z.transpose() * z - s).squaredNorm(); }

Matrix factorize_gd(const Matrix& s, int dim, int iterations, double lr, std::uint64_t seed, std::vector<double>* trace,
                    const Matrix* mask) {
  const Index n = s.rows();
  if (s.cols() != n) throw ShapeError("similarity matrix must be square");
  if (dim < 1) throw ContractError("embedding dimension must be positive");
  if (mask && (mask->rows() != n || mask->cols() != n)) throw ShapeError("mask must match S");
  if (lr <= 0.0) lr = 0.05 / std::max(1.0, s.cwiseAbs().rowwise().sum().maxCoeff());
  Matrix z = uniform_init(dim, n, seed);
  auto residual = [&](const Matrix& zz) {
    Matrix r = zz.transpose() * zz - s;
    if (mask) r = r.cwiseProduct(*mask);
    return r;
  };
  const int every = std::max(1, iterations / 100);
  for (int t = 0; t <= iterations; ++t) {
    const Matrix r = residual(z);
    if (trace && (t % every == 0 || t == iterations)) trace->push_back(r.squaredNorm());
    if (!r.allFinite()) throw NumericError("non-finite factorization loss at iteration " + std::to_string(t));
    if (t == iterations) break;
    // d/dZ sum_ij M_ij (z_i.z_j - S_ij)^2 = 2 Z (R + R^T)
    z -= lr * 2.0 * z * (r + r.transpose());
  }
  return z;
}

EmbeddingTable closed_form_factorization(const SimilarityMatrix& sim, int dim) {
  const Matrix& s = sim.values;
  const Index n = s.rows();
  if (s.cols() != n) throw ShapeError("similarity matrix must be square");
  if (dim < 1 || dim > n) throw ContractError("closed-form dimension must lie in [1, |V|]");
  if (n > kDefaultDenseCap) throw ResourceError("similarity matrix exceeds the dense cap");
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, s.cwiseAbs().maxCoeff()))
    throw ContractError("closed-form factorization needs a symmetric S");
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (s + s.transpose()));
  if (eig.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  // Eigen sorts ascending; take the top `dim`.
  EmbeddingTable table;
  table.z.resize(dim, n);
  Index clipped = 0;
  for (Index k = 0; k < dim; ++k) {
    const Index idx = n - 1 - k;
    double lambda = eig.eigenvalues()(idx);
    if (lambda < 0.0) {
      lambda = 0.0;
      ++clipped;
    }
    Vector u = eig.eigenvectors().col(idx);
    Index arg;
    u.cwiseAbs().maxCoeff(&arg);
    if (u(arg) < 0) u = -u;
    table.z.row(k) = std::sqrt(lambda) * u.transpose();
  }
  table.method = "closed_form";
  table.set("dim", std::to_string(dim));
  table.set("similarity", to_string(sim.spec));
  table.set("clipped_eigenvalues", std::to_string(clipped));
  table.set("min_eigenvalue", str(eig.eigenvalues()(0)));
  return table;
}

namespace {

// Centers each dimension and rescales to identity covariance (zero-variance directions stay zero).
void whiten(Matrix& z) {
  const Index n = z.cols();
  z.colwise() -= z.rowwise().mean();
  const Matrix cov = z * z.transpose() / static_cast<double>(n);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const double top = std::max(eig.eigenvalues().maxCoeff(), 0.0);
  Vector inv = Vector::Zero(cov.rows());
  for (Index k = 0; k < cov.rows(); ++k)
    if (eig.eigenvalues()(k) > 1e-12 * std::max(top, 1e-300)) inv(k) = 1.0 / std::sqrt(eig.eigenvalues()(k));
  z = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose() * z;
}

Matrix train_laplacian_eigenmaps(const Graph& g, const ShallowConfig& c, TrainReport& report, const Matrix* init) {
  if (g.directed()) throw UnsupportedError("Laplacian eigenmaps needs an undirected graph");
  const Index n = g.node_count();
  const Matrix l = laplacian(g);
  // The pair sum over both orientations equals 2 tr(Z L Z^T).
  auto loss = [&](const Matrix& z) { return 2.0 * (z * l * z.transpose()).trace(); };
  Matrix z = init ? *init : uniform_init(c.dim, n, stream(c.seed, kInit));
  whiten(z);
  double max_wdeg = 0.0;
  for (NodeIndex v = 0; v < n; ++v) max_wdeg = std::max(max_wdeg, g.weighted_degree(v));
  // lambda_max(L) <= 2 max degree, so I - 4 lr L stays positive definite.
  const double lr = c.factorization_lr > 0 ? c.factorization_lr : 0.9 / (8.0 * std::max(1.0, max_wdeg));
  const int iters = c.iterations > 0 ? c.iterations : 300;
  report.initial_loss = loss(z);
  report.loss_trace.push_back(report.initial_loss);
  for (int t = 1; t <= iters; ++t) {
    z -= lr * 4.0 * z * l;
    whiten(z);
    if (!z.allFinite()) throw NumericError("non-finite Laplacian eigenmaps state at iteration " + std::to_string(t));
    if (t % std::max(1, iters / 100) == 0 || t == iters) report.loss_trace.push_back(loss(z));
  }
  report.final_loss = loss(z);
  return z;
}

Matrix train_factorization(const Matrix& s, int dim, const ShallowConfig& c, std::uint64_t seed, TrainReport& report,
                           const Matrix* mask) {
  std::vector<double> trace;
  const Matrix z = factorize_gd(s, dim, c.iterations > 0 ? c.iterations : 5000, c.factorization_lr, seed, &trace, mask);
  report.initial_loss += trace.front();
  report.final_loss += trace.back();
  if (report.loss_trace.size() < trace.size()) report.loss_trace.resize(trace.size(), 0.0);
  for (std::size_t t = 0; t < trace.size(); ++t) report.loss_trace[t] += trace[t];
  return z;
}

}  // namespace

EmbeddingTable train_shallow(const Graph& g, const ShallowConfig& c, TrainReport* report_out, const Matrix* init) {
  if (g.empty()) throw ContractError("cannot embed an empty graph");
  if (c.dim < 1) throw ContractError("embedding dimension must be positive");
  const Index n = g.node_count();
  TrainReport report;
  EmbeddingTable table;
  table.node_ids = g.node_ids();
  table.method = to_string(c.method);
  table.set("method", table.method);
  table.set("dim", std::to_string(c.dim));
  table.set("seed", std::to_string(c.seed));

  if (is_skipgram(c.method)) {
    SkipGramData data = skipgram_data(g, c, &report.skipped_isolated);
    report.pair_count = data.pairs.size();
    const SkipGramOptions opt = skipgram_options(c);
    SkipGramTrainer trainer(std::move(data), opt, init);
    report.initial_loss = trainer.pair_loss();
    report.loss_trace.push_back(report.initial_loss);
    while (trainer.epochs_done() < opt.epochs) {
      trainer.run_epoch();
      report.loss_trace.push_back(trainer.pair_loss());
    }
    report.final_loss = report.loss_trace.back();
    table.z = trainer.embeddings();
    table.set("loss", opt.loss == SkipGramLoss::hierarchical_softmax ? "hierarchical_softmax" : "negative_sampling");
    table.set("lr", str(c.lr));
    table.set("epochs", std::to_string(c.epochs));
    if (c.method == ShallowMethod::line1 || c.method == ShallowMethod::line2) {
      table.set("objective", "negative_sampling_approximation");
    } else {
      table.set("walk_length", std::to_string(c.walk_length));
      table.set("walks_per_node", std::to_string(c.walks_per_node));
      table.set("window", std::to_string(c.window));
      if (c.skip) table.set("skip", std::to_string(*c.skip));
    }
    if (opt.loss == SkipGramLoss::negative_sampling) table.set("negatives", std::to_string(c.negatives));
    if (c.method == ShallowMethod::node2vec) {
      table.set("p", str(c.p));
      table.set("q", str(c.q));
    }
    table.set("skipped_isolated", std::to_string(report.skipped_isolated));
  } else {
    if (c.dim > n) throw ContractError("embedding dimension exceeds the node count");
    switch (c.method) {
      case ShallowMethod::laplacian_eigenmaps:
        table.z = train_laplacian_eigenmaps(g, c, report, init);
        break;
      case ShallowMethod::graph_factorization: {
        const Matrix a = adjacency_matrix(g);
        Matrix mask;
        if (c.gf_edges_only) mask = (a.array() != 0.0).cast<double>();
        table.z = train_factorization(a, c.dim, c, stream(c.seed, kInit), report, c.gf_edges_only ? &mask : nullptr);
        table.set("pairs", c.gf_edges_only ? "edges" : "all");
        break;
      }
      case ShallowMethod::grarep: {
        if (c.grarep_kmax < 1 || c.grarep_kmax > c.dim) throw ContractError("grarep kmax must lie in [1, dim]");
        table.z.resize(c.dim, n);
        Index row = 0;
        for (int k = 1; k <= c.grarep_kmax; ++k) {
          const int block = c.dim / c.grarep_kmax + (k <= c.dim % c.grarep_kmax ? 1 : 0);
          table.z.middleRows(row, block) =
              train_factorization(adjacency_power(g, k), block, c, stream(c.seed, kBlock + static_cast<std::uint64_t>(k)),
                                  report, nullptr);
          row += block;
        }
        table.set("kmax", std::to_string(c.grarep_kmax));
        break;
      }
      case ShallowMethod::hope: {
        Matrix s = build_similarity(g, c.hope_similarity).values;
        s = 0.5 * (s + s.transpose());
        table.z = train_factorization(s, c.dim, c, stream(c.seed, kInit), report, nullptr);
        table.set("similarity", to_string(c.hope_similarity));
        break;
      }
      default:
        throw ContractError("unhandled method");
    }
    table.set("iterations", std::to_string(c.iterations));
  }
  if (!table.z.allFinite()) throw NumericError("training produced non-finite embeddings");
  if (report_out) *report_out = std::move(report);
  return table;
}

}  // namespace grembed
