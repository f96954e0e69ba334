#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "grembed/embedding.hpp"
#include "grembed/graph.hpp"
#include "grembed/shallow.hpp"
#include "grembed/walks.hpp"

namespace grembed {

// struc2vec --------------------------------------------------------------------------

/// Sorted (ascending) degrees of the nodes exactly k hops from v, for k = 0..k_max.
std::vector<std::vector<Index>> ring_degrees(const Graph& g, NodeIndex v, int k_max);

/// Dynamic time warping with ground cost max(a,b)/min(a,b) - 1; degrees below 1 count as 1.
/// Two empty sequences are at distance 0; a single empty one is replaced by [1].
double dtw_distance(std::span<const Index> a, std::span<const Index> b);

struct Struc2vecDistances {
  int k_max = 0;
  /// layers[k-1](u, v) = w_k(u, v); symmetric with a zero diagonal.
  std::vector<Matrix> layers;

  const Matrix& layer(int k) const;
};

/// w_k = w_{k-1} + dtw(R_k(u), R_k(v)) with w_0 = 0, for k = 1..k_max.
Struc2vecDistances struc2vec_distances(const Graph& g, int k_max);

struct Struc2vecConfig {
  int k_max = 3;
  /// Probability of moving one layer up or down before each step.
  double layer_change = 0.3;
  int walk_length = 10;
  int walks_per_node = 10;
  int window = 5;
  int dim = 16;
  int negatives = 5;
  double lr = 0.025;
  int epochs = 5;
  std::uint64_t seed = 42;
};

/// Walks on the multilayer auxiliary graph, reported as original node indices. Within layer k a
/// step from u picks v != u with probability proportional to exp(-w_k(u, v)); walks start in layer 1.
WalkCorpus sample_struc2vec_walks(const Struc2vecDistances& d, const Struc2vecConfig& config);

/// Negative-sampling skip-gram over the auxiliary walks.
EmbeddingTable struc2vec_embed(const Graph& g, const Struc2vecConfig& config, TrainReport* report = nullptr);

// GraphWave --------------------------------------------------------------------------

/// 50 evenly spaced points on [0, 100].
std::vector<double> default_t_grid();

struct GraphWaveConfig {
  /// Heat-kernel scale s in g(lambda) = exp(-s lambda).
  double scale = 0.5;
  /// Empty picks default_t_grid().
  std::vector<double> t_grid;
  Index dense_cap = kDefaultDenseCap;
};

struct WaveletSignatures {
  /// Laplacian spectrum, ascending.
  Vector eigenvalues;
  /// |V| x |V|; column v is psi_v = U G U^T e_v.
  Matrix psi;
  std::vector<double> t_grid;
  /// 2 n_t x |V|; rows 2i and 2i+1 are Re and Im of (1/|V|) sum_j exp(i t_i psi_v[j]).
  Matrix char_samples;
};

/// Exact dense eigendecomposition of L = D - A (weighted degrees). ResourceError above the dense
/// cap, NumericError when the solver fails.
WaveletSignatures graphwave_signature(const Graph& g, const GraphWaveConfig& config = {});

/// Embedding whose columns are the characteristic-function samples, optionally followed by psi.
EmbeddingTable graphwave_embed(const Graph& g, const GraphWaveConfig& config = {}, bool include_psi = false);

}  // namespace grembed
