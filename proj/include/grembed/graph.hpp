#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "grembed/types.hpp"

namespace grembed {

struct LoadOptions {
  bool directed = false;
  bool weighted = false;
  bool self_loops = false;
};

/// Immutable compressed-sparse-row graph.
///
/// Undirected graphs store both orientations of every edge. Neighbor lists are
/// sorted ascending and duplicate-free. Node attributes, when present, form an
/// m x |V| matrix (one column per node).
class Graph {
 public:
  Graph() = default;

  Index node_count() const { return static_cast<Index>(node_ids_.size()); }
  /// Undirected graphs count each edge once (a self-loop counts once).
  Index edge_count() const;
  bool directed() const { return directed_; }
  bool weighted() const { return weighted_; }
  bool empty() const { return node_ids_.empty(); }

  std::span<const NodeIndex> neighbors(NodeIndex v) const;
  std::span<const double> neighbor_weights(NodeIndex v) const;
  std::span<const int> neighbor_edge_types(NodeIndex v) const;
  /// Position of v's first neighbor in the flat CSR arrays.
  Index offset(NodeIndex v) const { return offsets_[static_cast<std::size_t>(v)]; }

  Index degree(NodeIndex v) const;
  double weighted_degree(NodeIndex v) const;
  Index max_degree() const;

  bool has_edge(NodeIndex u, NodeIndex v) const;
  /// 0 when the edge is absent.
  double edge_weight(NodeIndex u, NodeIndex v) const;
  /// CSR slot of edge u->v, or -1.
  Index edge_slot(NodeIndex u, NodeIndex v) const;

  const std::vector<Index>& csr_offsets() const { return offsets_; }
  const std::vector<NodeIndex>& csr_targets() const { return targets_; }
  const std::vector<double>& edge_weights() const { return weights_; }

  const std::string& node_id(NodeIndex v) const { return node_ids_[static_cast<std::size_t>(v)]; }
  const std::vector<std::string>& node_ids() const { return node_ids_; }
  std::optional<NodeIndex> find(const std::string& id) const;
  NodeIndex index_of(const std::string& id) const;

  bool has_attributes() const { return attributes_.size() > 0; }
  /// m x |V|.
  const Matrix& attributes() const { return attributes_; }
  bool has_node_types() const { return !node_types_.empty(); }
  int node_type(NodeIndex v) const { return node_types_[static_cast<std::size_t>(v)]; }
  const std::vector<int>& node_types() const { return node_types_; }
  bool has_edge_types() const { return !edge_types_.empty(); }

  /// Copies carrying extra annotations; the structure is shared by value.
  Graph with_attributes(Matrix attributes) const;
  Graph with_node_types(std::vector<int> types) const;

 private:
  friend class GraphBuilder;

  std::vector<Index> offsets_{0};
  std::vector<NodeIndex> targets_;
  std::vector<double> weights_;
  std::vector<int> edge_types_;
  std::vector<std::string> node_ids_;
  std::unordered_map<std::string, NodeIndex> id_lookup_;
  std::vector<int> node_types_;
  Matrix attributes_;
  bool directed_ = false;
  bool weighted_ = false;
};

/// Accumulates nodes and edges, then freezes them into a Graph.
class GraphBuilder {
 public:
  explicit GraphBuilder(LoadOptions options = {}) : options_(options) {}

  /// Returns the index of `id`, creating it on first sight.
  NodeIndex add_node(const std::string& id);
  /// Adds `count` nodes named "0".."count-1" (offset by the current count).
  void add_nodes(Index count);
  void add_edge(NodeIndex u, NodeIndex v, double weight = 1.0, int edge_type = -1);
  void add_edge(const std::string& u, const std::string& v, double weight = 1.0, int edge_type = -1);
  Index node_count() const { return static_cast<Index>(ids_.size()); }

  Graph build() const;

 private:
  struct PendingEdge {
    NodeIndex u, v;
    double w;
    int type;
  };
  LoadOptions options_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, NodeIndex> lookup_;
  std::vector<PendingEdge> edges_;
};

// Text formats -------------------------------------------------------------

Graph load_edge_list(std::istream& in, LoadOptions options = {});
Graph load_edge_list_file(const std::string& path, LoadOptions options = {});
void export_edge_list(const Graph& g, std::ostream& out);

/// Header `id,f1..fm`; returns the graph with an m x |V| attribute matrix.
Graph load_attributes(const Graph& g, std::istream& in);
/// `id<TAB>label`. Unlabeled nodes get -1. Integer labels are kept as-is,
/// other labels are numbered in sorted order.
std::vector<int> load_labels(const Graph& g, std::istream& in);
std::vector<int> load_labels_file(const Graph& g, const std::string& path);

// Dense graph math -----------------------------------------------------------

Matrix adjacency_matrix(const Graph& g, Index dense_cap = kDefaultDenseCap);
/// L = D - A with weighted degrees.
Matrix laplacian(const Graph& g, Index dense_cap = kDefaultDenseCap);
Matrix adjacency_power(const Graph& g, int k, Index dense_cap = kDefaultDenseCap);
/// Row-stochastic P with P(u,v) proportional to w(u,v); zero rows for isolated nodes.
Matrix transition_matrix(const Graph& g, Index dense_cap = kDefaultDenseCap);
SparseMatrix sparse_adjacency(const Graph& g);

/// Hop distances from v; -1 for unreachable nodes.
std::vector<Index> bfs_distances(const Graph& g, NodeIndex v);
/// Nodes at exact hop distance k from v, ascending.
std::vector<NodeIndex> hop_ring(const Graph& g, NodeIndex v, int k);

void check_dense_cap(const Graph& g, Index dense_cap);

}  // namespace grembed
