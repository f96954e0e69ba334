#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "grembed/diff.hpp"
#include "grembed/embedding.hpp"
#include "grembed/graph.hpp"
#include "grembed/shallow.hpp"

namespace grembed {

// Coarsening -------------------------------------------------------------------------

enum class CoarseningScheme { heavy_edge_matching };

struct CoarseningMap {
  Graph fine;
  /// Weighted; supernode ids join the member ids with '+'.
  Graph coarse;
  /// fine node -> supernode.
  std::vector<NodeIndex> fine_to_coarse;
  int level = 1;

  /// Fine members of each supernode, ascending.
  std::vector<std::vector<NodeIndex>> members() const;
};

/// Greedy maximal matching by descending weight (ties by (min, max) endpoint index). Matched pairs
/// merge, the rest copy through, and parallel edges sum. Supernodes are numbered by smallest member.
CoarseningMap coarsen(const Graph& g, CoarseningScheme scheme = CoarseningScheme::heavy_edge_matching, int level = 1);

/// Up to `levels` successive coarsenings; stops early once no edge can be matched.
std::vector<CoarseningMap> coarsen_levels(const Graph& g, int levels);

/// Column v of the result is column fine_to_coarse[v] of the d x |coarse| matrix.
Matrix prolong(const CoarseningMap& map, const Matrix& coarse_z);

// HARP -------------------------------------------------------------------------------

struct HarpReport {
  /// Coarsest first; the last entry is the finest graph.
  std::vector<TrainReport> levels;
  std::vector<Index> node_counts;
  int epochs_per_level = 0;
};

/// Trains `base` on the coarsest graph and warm-starts every finer level from the prolonged
/// embedding. Each level gets max(1, epochs / levels) epochs; levels = 0 is plain training. The
/// finest level uses base.seed, coarser level l uses derive_seed(base.seed, l).
EmbeddingTable harp_train(const Graph& g, const ShallowConfig& base, int levels, HarpReport* report = nullptr);

// OhmNet -----------------------------------------------------------------------------

struct LayerHierarchy {
  std::vector<std::string> names;
  std::vector<Graph> layers;
  /// Parent layer index, -1 for roots.
  std::vector<int> parent;
  /// Shared entity ids: the union of node ids across layers, in first-seen order.
  std::vector<std::string> entities;
  /// layer_entity[l][v] is the entity of node v of layer l.
  std::vector<std::vector<Index>> layer_entity;

  std::size_t size() const { return layers.size(); }
  /// Parent-child pairs when any parent link exists, otherwise every pair of layers.
  std::vector<std::pair<int, int>> tied_pairs() const;
  /// Node of layer l representing `entity`, or -1.
  NodeIndex node_of(int layer, Index entity) const;
};

/// Validates parents (known, acyclic) and builds the entity map. A layer given as an empty graph
/// with children becomes the union of its children's edges.
LayerHierarchy make_hierarchy(std::vector<std::string> names, std::vector<Graph> layers, std::vector<int> parent);

/// Lines `layer_id<TAB>parent_id|-[<TAB>edge_file]`. Without a file column a layer reads
/// `<layer_id>.edges` next to the hierarchy file; when that is missing too, it must have children.
LayerHierarchy load_hierarchy_file(const std::string& path, LoadOptions options = {});

/// Two 24-node layers over the same ids: one 3-block SBM and a second draw from the same model.
LayerHierarchy toy_two_layer(std::uint64_t seed = 7);

/// sum_l base[l] + lambda * sum over tied pairs and shared nodes of ||z_a - z_b||^2, or of
/// sqrt(||z_a - z_b||^2 + 1e-12) with squared = false. Embeddings are node-major, one per layer;
/// LookupError when a layer's embedding lacks rows for its nodes.
diff::Var ohmnet_loss(const std::vector<diff::Var>& base_losses, const std::vector<diff::Var>& embeddings,
                      const LayerHierarchy& hierarchy, double lambda, bool squared = true);

/// Gap: sum over tied pairs and shared nodes of ||z_a - z_b|| for d x |V_l| tables.
double ohmnet_gap(const LayerHierarchy& hierarchy, const std::vector<Matrix>& z);

struct OhmnetConfig {
  ShallowConfig base;
  double lambda = 1.0;
  bool squared = true;
};

struct OhmnetResult {
  std::vector<EmbeddingTable> layers;
  std::vector<TrainReport> reports;
  double gap = 0.0;
};

/// One skip-gram trainer per layer, epochs interleaved layer by layer, with the tying penalty added
/// to every center-node update. Every layer uses base.seed, so lambda = 0 reproduces independent
/// train_shallow runs exactly.
OhmnetResult ohmnet_train(const LayerHierarchy& hierarchy, const OhmnetConfig& config);

}  // namespace grembed
