#include "grembed/structural.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include <Eigen/Eigenvalues>

#include "grembed/error.hpp"

namespace grembed {

// struc2vec --------------------------------------------------------------------------

std::vector<std::vector<Index>> ring_degrees(const Graph& g, NodeIndex v, int k_max) {
  if (k_max < 0) throw ContractError("k_max must be nonnegative");
  std::vector<std::vector<Index>> rings(static_cast<std::size_t>(k_max) + 1);
  std::vector<int> hop(static_cast<std::size_t>(g.node_count()), -1);
  std::vector<NodeIndex> frontier{v};
  hop[static_cast<std::size_t>(v)] = 0;
  for (int k = 0; k <= k_max && !frontier.empty(); ++k) {
    std::vector<NodeIndex> next;
    for (NodeIndex u : frontier) {
      rings[static_cast<std::size_t>(k)].push_back(g.degree(u));
      for (NodeIndex w : g.neighbors(u))
        if (hop[static_cast<std::size_t>(w)] < 0) {
          hop[static_cast<std::size_t>(w)] = k + 1;
          next.push_back(w);
        }
    }
    std::sort(rings[static_cast<std::size_t>(k)].begin(), rings[static_cast<std::size_t>(k)].end());
    frontier = std::move(next);
  }
  return rings;
}

namespace {

double ground_cost(Index a, Index b) {
  const double x = static_cast<double>(std::max<Index>(a, 1));
  const double y = static_cast<double>(std::max<Index>(b, 1));
  return std::max(x, y) / std::min(x, y) - 1.0;
}

}  // namespace

double dtw_distance(std::span<const Index> a, std::span<const Index> b) {
  if (a.empty() && b.empty()) return 0.0;
  static const Index placeholder[] = {1};
  if (a.empty()) a = placeholder;
  if (b.empty()) b = placeholder;
  const std::size_t n = a.size(), m = b.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j)
      cur[j] = ground_cost(a[i - 1], b[j - 1]) + std::min({prev[j], cur[j - 1], prev[j - 1]});
    std::swap(prev, cur);
  }
  return prev[m];
}

const Matrix& Struc2vecDistances::layer(int k) const {
  if (k < 1 || k > k_max) throw IndexError("struc2vec layer " + std::to_string(k) + " out of range");
  return layers[static_cast<std::size_t>(k - 1)];
}

Struc2vecDistances struc2vec_distances(const Graph& g, int k_max) {
  if (k_max < 1) throw ContractError("k_max must be at least 1");
  const Index n = g.node_count();
  std::vector<std::vector<std::vector<Index>>> rings(static_cast<std::size_t>(n));
  for (NodeIndex v = 0; v < n; ++v) rings[static_cast<std::size_t>(v)] = ring_degrees(g, v, k_max);

  Struc2vecDistances d;
  d.k_max = k_max;
  Matrix w = Matrix::Zero(n, n);
  for (int k = 1; k <= k_max; ++k) {
    for (NodeIndex u = 0; u < n; ++u)
      for (NodeIndex v = u + 1; v < n; ++v) {
        w(u, v) += dtw_distance(rings[static_cast<std::size_t>(u)][static_cast<std::size_t>(k)],
                                rings[static_cast<std::size_t>(v)][static_cast<std::size_t>(k)]);
        w(v, u) = w(u, v);
      }
    d.layers.push_back(w);
  }
  return d;
}

WalkCorpus sample_struc2vec_walks(const Struc2vecDistances& d, const Struc2vecConfig& c) {
  if (d.layers.empty()) throw ContractError("struc2vec distances are empty");
  if (c.walk_length < 0 || c.walks_per_node < 0) throw ContractError("walk length and count must be nonnegative");
  if (c.layer_change < 0.0 || c.layer_change > 1.0) throw ContractError("layer change probability must lie in [0, 1]");
  const Index n = d.layers.front().rows();
  if (n < 2) throw ContractError("struc2vec needs at least two nodes");

  // tables[k][u] draws v with weight exp(-w_k(u, v)), v != u
  std::vector<std::vector<AliasTable>> tables(d.layers.size());
  std::vector<double> weights(static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < d.layers.size(); ++k)
    for (NodeIndex u = 0; u < n; ++u) {
      for (NodeIndex v = 0; v < n; ++v) weights[static_cast<std::size_t>(v)] = v == u ? 0.0 : std::exp(-d.layers[k](u, v));
      tables[k].emplace_back(weights);
    }

  WalkCorpus corpus;
  corpus.config.length = c.walk_length;
  corpus.config.walks_per_node = c.walks_per_node;
  corpus.config.seed = c.seed;
  const int top = d.k_max - 1;
  for (NodeIndex start = 0; start < n; ++start)
    for (int r = 0; r < c.walks_per_node; ++r) {
      Rng rng(derive_seed(c.seed, static_cast<std::uint64_t>(start) + 1, static_cast<std::uint64_t>(r)));
      std::vector<NodeIndex> walk{start};
      NodeIndex u = start;
      int layer = 0;
      for (int step = 0; step < c.walk_length; ++step) {
        if (top > 0 && uniform01(rng) < c.layer_change) {
          if (layer == 0)
            layer = 1;
          else if (layer == top)
            layer = top - 1;
          else
            layer += uniform01(rng) < 0.5 ? 1 : -1;
        }
        u = static_cast<NodeIndex>(tables[static_cast<std::size_t>(layer)][static_cast<std::size_t>(u)].sample(rng));
        walk.push_back(u);
      }
      corpus.walks.push_back(std::move(walk));
    }
  return corpus;
}

EmbeddingTable struc2vec_embed(const Graph& g, const Struc2vecConfig& c, TrainReport* report) {
  const Struc2vecDistances d = struc2vec_distances(g, c.k_max);
  const WalkCorpus corpus = sample_struc2vec_walks(d, c);

  SkipGramData data;
  data.node_count = g.node_count();
  data.frequencies.assign(static_cast<std::size_t>(g.node_count()), 0.0);
  for (const auto& w : corpus.walks)
    for (NodeIndex v : w) data.frequencies[static_cast<std::size_t>(v)] += 1.0;
  data.pairs = extract_pairs(corpus, c.window);

  SkipGramOptions opt;
  opt.dim = c.dim;
  opt.lr = c.lr;
  opt.epochs = c.epochs;
  opt.negatives = c.negatives;
  opt.loss = SkipGramLoss::negative_sampling;
  opt.separate_context = true;
  opt.seed = c.seed;

  TrainReport local;
  local.pair_count = data.pairs.size();
  SkipGramTrainer trainer(std::move(data), opt);
  local.initial_loss = trainer.pair_loss();
  local.loss_trace.push_back(local.initial_loss);
  while (trainer.epochs_done() < opt.epochs) {
    trainer.run_epoch();
    local.loss_trace.push_back(trainer.pair_loss());
  }
  local.final_loss = local.loss_trace.back();
  if (report) *report = local;

  EmbeddingTable t;
  t.z = trainer.embeddings();
  t.node_ids = g.node_ids();
  t.method = "struc2vec";
  t.set("k_max", std::to_string(c.k_max));
  t.set("layer_change", std::to_string(c.layer_change));
  t.set("walk_length", std::to_string(c.walk_length));
  t.set("walks_per_node", std::to_string(c.walks_per_node));
  t.set("window", std::to_string(c.window));
  t.set("dim", std::to_string(c.dim));
  t.set("seed", std::to_string(c.seed));
  return t;
}

// GraphWave --------------------------------------------------------------------------

std::vector<double> default_t_grid() {
  std::vector<double> t(50);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 100.0 * static_cast<double>(i) / 49.0;
  return t;
}

WaveletSignatures graphwave_signature(const Graph& g, const GraphWaveConfig& c) {
  const Index n = g.node_count();
  if (n == 0) throw ContractError("graph is empty");
  if (n > c.dense_cap) throw ResourceError("GraphWave needs a dense eigendecomposition; |V| exceeds the dense cap");
  if (!(c.scale >= 0.0)) throw ContractError("heat-kernel scale must be nonnegative");

  Matrix lap = Matrix::Zero(n, n);
  for (NodeIndex u = 0; u < n; ++u) {
    const auto nb = g.neighbors(u);
    const auto w = g.neighbor_weights(u);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      lap(u, nb[k]) -= w[k];
      lap(u, u) += w[k];
    }
  }
  if (g.directed()) lap = 0.5 * (lap + lap.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Matrix> eig(lap);
  if (eig.info() != Eigen::Success) throw NumericError("Laplacian eigendecomposition failed");

  WaveletSignatures s;
  s.eigenvalues = eig.eigenvalues();
  const Matrix& u = eig.eigenvectors();
  const Vector heat = (-c.scale * s.eigenvalues.array()).exp().matrix();
  s.psi = u * heat.asDiagonal() * u.transpose();
  s.t_grid = c.t_grid.empty() ? default_t_grid() : c.t_grid;

  const auto nt = static_cast<Index>(s.t_grid.size());
  s.char_samples.resize(2 * nt, n);
  for (NodeIndex v = 0; v < n; ++v)
    for (Index i = 0; i < nt; ++i) {
      std::complex<double> phi = 0.0;
      for (Index j = 0; j < n; ++j) phi += std::polar(1.0, s.t_grid[static_cast<std::size_t>(i)] * s.psi(j, v));
      phi /= static_cast<double>(n);
      s.char_samples(2 * i, v) = phi.real();
      s.char_samples(2 * i + 1, v) = phi.imag();
    }
  return s;
}

EmbeddingTable graphwave_embed(const Graph& g, const GraphWaveConfig& c, bool include_psi) {
  WaveletSignatures s = graphwave_signature(g, c);
  EmbeddingTable t;
  if (include_psi) {
    t.z.resize(s.char_samples.rows() + s.psi.rows(), g.node_count());
    t.z << s.char_samples, s.psi;
  } else {
    t.z = std::move(s.char_samples);
  }
  t.node_ids = g.node_ids();
  t.method = "graphwave";
  t.set("scale", std::to_string(c.scale));
  t.set("t_points", std::to_string(s.t_grid.size()));
  t.set("psi", include_psi ? "1" : "0");
  return t;
}

}  // namespace grembed
