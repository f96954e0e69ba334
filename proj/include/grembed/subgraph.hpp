#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "grembed/aggenc.hpp"
#include "grembed/diff.hpp"
#include "grembed/embedding.hpp"
#include "grembed/gnn.hpp"
#include "grembed/graph.hpp"
#include "grembed/nn.hpp"

namespace grembed {

// Subgraphs and datasets -------------------------------------------------------------

struct SubgraphSpec {
  std::shared_ptr<const Graph> parent;
  /// Distinct nodes of the parent.
  std::vector<NodeIndex> nodes;
  /// -1 when unlabeled.
  int label = -1;
  std::string id;

  /// S = V of a standalone graph.
  static SubgraphSpec whole(std::shared_ptr<const Graph> graph, int label = -1, std::string id = {});
  /// ContractError for an empty or repeated node set, IndexError for nodes outside the parent.
  void validate() const;
};

/// G[S] with nodes in the order of spec.nodes; attributes follow when present.
Graph induced_subgraph(const SubgraphSpec& spec);

struct GraphDataset {
  std::vector<std::string> ids;
  std::vector<Graph> graphs;
  std::vector<int> labels;

  std::size_t size() const { return graphs.size(); }
  std::vector<SubgraphSpec> specs() const;
};

/// Blocks headed `#graph <id> <label>`, then `u v [w]` edge lines (a lone `u` adds an isolated
/// node), separated by blank lines.
GraphDataset read_graph_dataset(std::istream& in, LoadOptions options = {});
GraphDataset read_graph_dataset_file(const std::string& path, LoadOptions options = {});
void write_graph_dataset(const GraphDataset& data, std::ostream& out);

/// `count` graphs, alternating cycles (label 1) and paths (label 0) with sizes drawn uniformly
/// from [min_nodes, max_nodes] and node labels shuffled.
GraphDataset cycles_vs_paths(std::size_t count, Index min_nodes, Index max_nodes, std::uint64_t seed);

// Pooling ------------------------------------------------------------------------------

enum class PoolKind { sum, fuzzy_histogram, ordered_concat, coarsen_maxpool, supernode, constant };

PoolKind parse_pool_kind(const std::string& name);
std::string to_string(PoolKind kind);

struct PoolingSpec {
  PoolKind kind = PoolKind::sum;
  int bins = 5;
  /// ordered_concat width in nodes.
  int m = 8;
  /// coarsen_maxpool rounds.
  int levels = 1;

  void validate() const;
  Index output_dim(Index d) const;
};

/// Partition of the nodes of a graph into nonempty groups.
using ClusterFn = std::function<std::vector<std::vector<NodeIndex>>(const Graph&)>;
/// Heavy-edge matching groups.
std::vector<std::vector<NodeIndex>> heavy_edge_clusters(const Graph& g);
/// Supernode graph of a partition: summed weights, internal edges dropped. ContractError unless
/// `groups` is a partition into nonempty sets.
Graph quotient_graph(const Graph& g, const std::vector<std::vector<NodeIndex>>& groups);

// Tape forms on node-major states; each returns one row.
diff::Var sum_pool(const diff::Var& z, std::span<const Index> rows);
/// Per dimension, Gaussian memberships (sigma = bin spacing, normalized over bins) in `bins`
/// centers on [-r, r], r = max |z| over the rows (1 when all zero), summed over rows. Output is
/// dimension-major, d * bins wide. Gradients flow through r as well.
diff::Var fuzzy_histogram_pool(const diff::Var& z, std::span<const Index> rows, int bins);
/// The first m rows by (degree in g descending, index ascending), concatenated and zero-padded.
diff::Var ordered_concat_pool(const diff::Var& z, const Graph& g, std::span<const Index> rows, int m);

// Matrix forms on d x |V| tables.
/// LookupError when a node of S has no row in the table.
Vector sum_pool(const EmbeddingTable& z, const SubgraphSpec& spec);
Vector sum_pool(const Matrix& z, std::span<const NodeIndex> nodes);
Vector fuzzy_histogram_pool(const Matrix& z, std::span<const NodeIndex> nodes, int bins);
Vector ordered_concat_pool(const Graph& g, const Matrix& z, std::span<const NodeIndex> nodes, int m);

/// g plus one node joined to every node of S. Its attribute column is zero; its id is
/// "__supernode__" (suffixed with '_' until unused).
Graph add_supernode(const Graph& g, std::span<const NodeIndex> nodes);

/// Any node encoder: d x |V| embeddings for a graph (attributes travel with the graph).
using NodeEncoderFn = std::function<Matrix(const Graph&)>;
/// Encoder output at the super-node of g augmented over S.
Vector supernode_pool(const Graph& g, std::span<const NodeIndex> nodes, const NodeEncoderFn& encoder);

/// Each level encodes with the next encoder, clusters, and max-pools within clusters; the final
/// graph's nodes that contain S are max-pooled. x is m x |V|; default clustering is heavy-edge.
Vector coarsen_maxpool(const Graph& g, const Matrix& x, const std::vector<AggEncoder>& encoders,
                       std::span<const NodeIndex> nodes, const ClusterFn& cluster = {});

// Edge-message encoder ------------------------------------------------------------------

struct EdgeMessageConfig {
  Index input_dim = 1;
  /// Width of the directed edge states eta.
  Index edge_dim = 8;
  Index output_dim = 8;
  int rounds = 2;
  nn::Activation activation = nn::Activation::relu;
  std::uint64_t seed = 42;
};

/// eta^k_ij = act([x_i, sum_{l in N(i), l != j} eta^{k-1}_li] W_k) from eta^0 = 0, then
/// z_i = act([x_i, sum_{l in N(i)} eta^K_il] W_V). No biases.
class EdgeMessageEncoder {
 public:
  EdgeMessageEncoder() = default;
  explicit EdgeMessageEncoder(EdgeMessageConfig config);

  /// Node-major |V| x output_dim for x |V| x input_dim.
  diff::Var forward(diff::Tape& tape, const Graph& g, const diff::Var& x);
  Matrix encode(const Graph& g, const Matrix& x) const;
  std::vector<diff::Parameter*> parameters();
  const EdgeMessageConfig& config() const { return config_; }

  /// One (input_dim + edge_dim) x edge_dim map per round.
  std::vector<diff::Parameter> edge_weights;
  /// (input_dim + edge_dim) x output_dim.
  diff::Parameter node_weight;

 private:
  EdgeMessageConfig config_;
};

EmbeddingTable edge_message_encode(const Graph& g, const Matrix& x, const EdgeMessageEncoder& encoder);

// Classification -------------------------------------------------------------------------

enum class SubgraphEncoderKind { mpnn, edge_message };

struct SubgraphClassifierConfig {
  SubgraphEncoderKind encoder = SubgraphEncoderKind::mpnn;
  /// input_dim is taken from the data.
  MpnnConfig mpnn;
  EdgeMessageConfig edge_message;
  PoolingSpec pooling;
  int epochs = 200;
  double lr = 0.01;
  std::uint64_t seed = 42;
};

/// Encoder, per-level aggregation encoders for coarsen_maxpool, and a linear head on [z_S, 1].
class SubgraphClassifier {
 public:
  SubgraphClassifier() = default;
  SubgraphClassifier(const SubgraphClassifierConfig& config, Index input_dim, int classes);

  /// B x (pooled width) for a batch of specs.
  diff::Var pooled(diff::Tape& tape, std::span<const SubgraphSpec> items);
  /// Cross-entropy of the head over labeled items.
  diff::Var loss(diff::Tape& tape, std::span<const SubgraphSpec> items);
  Matrix embed(std::span<const SubgraphSpec> items) const;
  std::vector<int> predict(std::span<const SubgraphSpec> items) const;
  std::vector<diff::Parameter*> parameters();

  const SubgraphClassifierConfig& config() const { return config_; }
  int classes() const { return classes_; }

  Mpnn mpnn;
  EdgeMessageEncoder edge_message;
  std::vector<AggEncoder> level_encoders;
  /// (pooled width + 1) x C, or a single column for two classes.
  diff::Parameter theta;

 private:
  SubgraphClassifierConfig config_;
  Index input_dim_ = 0;
  int classes_ = 0;
};

struct SubgraphTrainResult {
  SubgraphClassifier model;
  double train_accuracy = 0.0;
  std::vector<double> loss_trace;
  /// Accuracy of the parameters before each update, then after the last one.
  std::vector<double> accuracy_trace;
};

/// Full-batch Adam on the labeled items. ValidationError when fewer than two classes appear.
/// Items without attributes use the weighted-degree scalar.
SubgraphTrainResult classify_subgraphs(std::span<const SubgraphSpec> items, const SubgraphClassifierConfig& config);

}  // namespace grembed
