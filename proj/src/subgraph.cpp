#include "grembed/subgraph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "grembed/error.hpp"
#include "grembed/multiscale.hpp"
#include "grembed/rng.hpp"

namespace grembed {

using diff::Parameter;
using diff::Tape;
using diff::Var;

namespace {

enum Stream : std::uint64_t { kEncoder = 1, kHead = 2, kLevel = 3, kEdgeRound = 4, kEdgeNode = 5 };

void check_nodes(const Graph& g, std::span<const NodeIndex> nodes) {
  if (nodes.empty()) throw ContractError("a subgraph needs at least one node");
  std::vector<char> seen(static_cast<std::size_t>(g.node_count()), 0);
  for (NodeIndex v : nodes) {
    if (v < 0 || v >= g.node_count()) throw IndexError("node " + std::to_string(v) + " is outside the graph");
    if (seen[static_cast<std::size_t>(v)]++) throw ContractError("node " + g.node_id(v) + " repeated in the subgraph");
  }
}

std::vector<Index> to_rows(std::span<const NodeIndex> nodes) { return {nodes.begin(), nodes.end()}; }

/// Copies g's edges into b with node index shifted by `offset`.
void copy_edges(const Graph& g, GraphBuilder& b, Index offset) {
  for (NodeIndex u = 0; u < g.node_count(); ++u) {
    const auto nb = g.neighbors(u);
    const auto w = g.neighbor_weights(u);
    const auto types = g.neighbor_edge_types(u);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      if (!g.directed() && nb[k] < u) continue;
      b.add_edge(u + offset, nb[k] + offset, w[k], types.empty() ? -1 : types[k]);
    }
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

// Subgraphs and datasets ----------------------------------------------------------------

SubgraphSpec SubgraphSpec::whole(std::shared_ptr<const Graph> graph, int label, std::string id) {
  if (!graph) throw ContractError("subgraph parent is null");
  SubgraphSpec s;
  s.nodes.resize(static_cast<std::size_t>(graph->node_count()));
  std::iota(s.nodes.begin(), s.nodes.end(), NodeIndex{0});
  s.parent = std::move(graph);
  s.label = label;
  s.id = std::move(id);
  return s;
}

void SubgraphSpec::validate() const {
  if (!parent) throw ContractError("subgraph parent is null");
  check_nodes(*parent, nodes);
}

Graph induced_subgraph(const SubgraphSpec& spec) {
  spec.validate();
  const Graph& g = *spec.parent;
  GraphBuilder b({.directed = g.directed(), .weighted = g.weighted(), .self_loops = true});
  std::unordered_map<NodeIndex, NodeIndex> pos;
  for (NodeIndex v : spec.nodes) pos[v] = b.add_node(g.node_id(v));
  for (NodeIndex u : spec.nodes) {
    const auto nb = g.neighbors(u);
    const auto w = g.neighbor_weights(u);
    const auto types = g.neighbor_edge_types(u);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const auto it = pos.find(nb[k]);
      if (it == pos.end()) continue;
      if (!g.directed() && it->second < pos[u]) continue;
      b.add_edge(pos[u], it->second, w[k], types.empty() ? -1 : types[k]);
    }
  }
  Graph out = b.build();
  if (g.has_attributes()) {
    Matrix x(g.attributes().rows(), static_cast<Index>(spec.nodes.size()));
    for (std::size_t i = 0; i < spec.nodes.size(); ++i) x.col(static_cast<Index>(i)) = g.attributes().col(spec.nodes[i]);
    out = out.with_attributes(std::move(x));
  }
  return out;
}

std::vector<SubgraphSpec> GraphDataset::specs() const {
  std::vector<SubgraphSpec> out;
  out.reserve(graphs.size());
  for (std::size_t i = 0; i < graphs.size(); ++i)
    out.push_back(SubgraphSpec::whole(std::make_shared<const Graph>(graphs[i]), labels[i], ids[i]));
  return out;
}

GraphDataset read_graph_dataset(std::istream& in, LoadOptions options) {
  GraphDataset data;
  std::optional<GraphBuilder> builder;
  int header_line = 0;
  auto finish = [&] {
    if (!builder) return;
    if (builder->node_count() == 0) throw ParseError("graph '" + data.ids.back() + "' has no nodes", header_line);
    data.graphs.push_back(builder->build());
    builder.reset();
  };

  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty()) {
      finish();
      continue;
    }
    std::istringstream fields(line);
    std::vector<std::string> f;
    for (std::string t; fields >> t;) f.push_back(t);
    if (f[0] == "#graph") {
      if (f.size() != 3) throw ParseError("expected '#graph <id> <label>'", lineno);
      finish();
      int label = 0;
      try {
        std::size_t used = 0;
        label = std::stoi(f[2], &used);
        if (used != f[2].size()) throw std::invalid_argument(f[2]);
      } catch (const std::exception&) {
        throw ParseError("graph label must be an integer", lineno);
      }
      data.ids.push_back(f[1]);
      data.labels.push_back(label);
      builder.emplace(options);
      header_line = lineno;
      continue;
    }
    if (f[0][0] == '#') continue;
    if (!builder) throw ParseError("edge line outside a '#graph' block", lineno);
    if (f.size() == 1) {
      builder->add_node(f[0]);
    } else if (f.size() <= 3) {
      double w = 1.0;
      if (f.size() == 3) {
        try {
          w = std::stod(f[2]);
        } catch (const std::exception&) {
          throw ParseError("edge weight must be a number", lineno);
        }
      }
      builder->add_edge(f[0], f[1], w);
    } else {
      throw ParseError("expected 'u v [w]'", lineno);
    }
  }
  finish();
  return data;
}

GraphDataset read_graph_dataset_file(const std::string& path, LoadOptions options) {
  std::ifstream in(path);
  if (!in) throw ResourceError("cannot open " + path);
  return read_graph_dataset(in, options);
}

void write_graph_dataset(const GraphDataset& data, std::ostream& out) {
  const auto precision = out.precision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Graph& g = data.graphs[i];
    if (i > 0) out << '\n';
    out << "#graph " << data.ids[i] << ' ' << data.labels[i] << '\n';
    // Node lines first keep the index order on reload.
    for (NodeIndex u = 0; u < g.node_count(); ++u) out << g.node_id(u) << '\n';
    for (NodeIndex u = 0; u < g.node_count(); ++u) {
      const auto nb = g.neighbors(u);
      const auto w = g.neighbor_weights(u);
      for (std::size_t k = 0; k < nb.size(); ++k) {
        if (!g.directed() && nb[k] < u) continue;
        out << g.node_id(u) << ' ' << g.node_id(nb[k]);
        if (g.weighted()) out << ' ' << w[k];
        out << '\n';
      }
    }
  }
  out.precision(precision);
}

GraphDataset cycles_vs_paths(std::size_t count, Index min_nodes, Index max_nodes, std::uint64_t seed) {
  if (min_nodes < 3 || max_nodes < min_nodes) throw ContractError("cycles need 3 <= min_nodes <= max_nodes");
  Rng rng(seed);
  GraphDataset data;
  for (std::size_t i = 0; i < count; ++i) {
    const bool cycle = i % 2 == 0;
    const Index n = min_nodes + static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(max_nodes - min_nodes + 1)));
    std::vector<NodeIndex> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), NodeIndex{0});
    shuffle(perm, rng);
    GraphBuilder b;
    b.add_nodes(n);
    for (Index k = 0; k + 1 < n; ++k) b.add_edge(perm[static_cast<std::size_t>(k)], perm[static_cast<std::size_t>(k + 1)]);
    if (cycle) b.add_edge(perm.back(), perm.front());
    data.ids.push_back((cycle ? "cycle" : "path") + std::to_string(i));
    data.graphs.push_back(b.build());
    data.labels.push_back(cycle ? 1 : 0);
  }
  return data;
}

// Pooling ---------------------------------------------------------------------------------

PoolKind parse_pool_kind(const std::string& name) {
  if (name == "sum") return PoolKind::sum;
  if (name == "fuzzy_histogram" || name == "fuzzy") return PoolKind::fuzzy_histogram;
  if (name == "ordered_concat" || name == "concat") return PoolKind::ordered_concat;
  if (name == "coarsen_maxpool" || name == "coarsen") return PoolKind::coarsen_maxpool;
  if (name == "supernode") return PoolKind::supernode;
  if (name == "constant") return PoolKind::constant;
  throw ConfigError("unknown pooling '" + name + "'");
}

std::string to_string(PoolKind kind) {
  switch (kind) {
    case PoolKind::sum: return "sum";
    case PoolKind::fuzzy_histogram: return "fuzzy_histogram";
    case PoolKind::ordered_concat: return "ordered_concat";
    case PoolKind::coarsen_maxpool: return "coarsen_maxpool";
    case PoolKind::supernode: return "supernode";
    case PoolKind::constant: return "constant";
  }
  return "sum";
}

void PoolingSpec::validate() const {
  if (bins < 2) throw ContractError("fuzzy histograms need bins >= 2");
  if (m < 1) throw ContractError("ordered concatenation needs m >= 1");
  if (levels < 1) throw ContractError("coarsening needs levels >= 1");
}

Index PoolingSpec::output_dim(Index d) const {
  if (kind == PoolKind::fuzzy_histogram) return d * bins;
  if (kind == PoolKind::ordered_concat) return d * m;
  return d;
}

std::vector<std::vector<NodeIndex>> heavy_edge_clusters(const Graph& g) { return coarsen(g).members(); }

Graph quotient_graph(const Graph& g, const std::vector<std::vector<NodeIndex>>& groups) {
  std::vector<NodeIndex> owner(static_cast<std::size_t>(g.node_count()), -1);
  for (std::size_t c = 0; c < groups.size(); ++c) {
    if (groups[c].empty()) throw ContractError("cluster " + std::to_string(c) + " is empty");
    for (NodeIndex v : groups[c]) {
      if (v < 0 || v >= g.node_count()) throw ContractError("cluster member outside the graph");
      if (owner[static_cast<std::size_t>(v)] >= 0) throw ContractError("node " + g.node_id(v) + " is in two clusters");
      owner[static_cast<std::size_t>(v)] = static_cast<NodeIndex>(c);
    }
  }
  for (NodeIndex v = 0; v < g.node_count(); ++v)
    if (owner[static_cast<std::size_t>(v)] < 0) throw ContractError("node " + g.node_id(v) + " is in no cluster");

  GraphBuilder b({.directed = g.directed(), .weighted = true, .self_loops = false});
  for (const auto& members : groups) {
    std::string id;
    for (NodeIndex v : members) id += (id.empty() ? "" : "+") + g.node_id(v);
    b.add_node(id);
  }
  for (NodeIndex u = 0; u < g.node_count(); ++u) {
    const auto nb = g.neighbors(u);
    const auto w = g.neighbor_weights(u);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const NodeIndex cu = owner[static_cast<std::size_t>(u)], cv = owner[static_cast<std::size_t>(nb[k])];
      if (cu == cv || (!g.directed() && nb[k] < u)) continue;
      b.add_edge(cu, cv, w[k]);
    }
  }
  return b.build();
}

Var sum_pool(const Var& z, std::span<const Index> rows) {
  if (rows.empty()) throw ContractError("a subgraph needs at least one node");
  return diff::sum_rows(diff::gather_rows(z, rows));
}

Var fuzzy_histogram_pool(const Var& z, std::span<const Index> rows, int bins) {
  if (rows.empty()) throw ContractError("a subgraph needs at least one node");
  if (bins < 2) throw ContractError("fuzzy histograms need bins >= 2");
  Tape& tape = z.tape();
  const Var zs = diff::gather_rows(z, rows);
  // Values are scaled by 1/r onto fixed centers in [-1, 1]; r stays on the tape.
  Var inv_r = tape.constant(Matrix::Ones(1, 1));
  if (zs.value().cwiseAbs().maxCoeff() > 0.0) {
    auto all = [](Index n) {
      std::vector<Index> out(static_cast<std::size_t>(n));
      std::iota(out.begin(), out.end(), Index{0});
      return std::vector<std::vector<Index>>{out};
    };
    const Var col_max = diff::segment_max_rows(diff::abs(zs), all(zs.rows()));
    const Var r = diff::segment_max_rows(diff::transpose(col_max), all(zs.cols()));
    inv_r = diff::exp(-diff::log(r));
  }
  const double spacing = 2.0 / (bins - 1);
  Matrix neg_centers(1, bins);
  for (int b = 0; b < bins; ++b) neg_centers(0, b) = 1.0 - b * spacing;
  const Var shift = tape.constant(neg_centers);
  const Var spread = tape.constant(Matrix::Ones(1, bins));
  const double inv = -1.0 / (2.0 * spacing * spacing);

  std::vector<Var> parts;
  for (Index j = 0; j < z.cols(); ++j) {
    Matrix pick = Matrix::Zero(z.cols(), 1);
    pick(j, 0) = 1.0;
    const Var col = diff::matmul(diff::matmul(zs, tape.constant(std::move(pick))), inv_r);
    const Var dev = diff::add_row_broadcast(diff::matmul(col, spread), shift);
    parts.push_back(diff::sum_rows(diff::softmax_rows(diff::scale(diff::square(dev), inv))));
  }
  return diff::concat_cols(parts);
}

Var ordered_concat_pool(const Var& z, const Graph& g, std::span<const Index> rows, int m) {
  if (rows.empty()) throw ContractError("a subgraph needs at least one node");
  if (m < 1) throw ContractError("ordered concatenation needs m >= 1");
  std::vector<Index> order(rows.begin(), rows.end());
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    const Index da = g.degree(a), db = g.degree(b);
    return da != db ? da > db : a < b;
  });
  const std::size_t take = std::min(order.size(), static_cast<std::size_t>(m));
  std::vector<Var> parts;
  for (std::size_t i = 0; i < take; ++i) {
    const Index row = order[i];
    parts.push_back(diff::gather_rows(z, std::span<const Index>(&row, 1)));
  }
  if (take < static_cast<std::size_t>(m))
    parts.push_back(z.tape().constant(Matrix::Zero(1, z.cols() * (m - static_cast<Index>(take)))));
  return diff::concat_cols(parts);
}

Vector sum_pool(const EmbeddingTable& z, const SubgraphSpec& spec) {
  spec.validate();
  Vector out = Vector::Zero(z.dim());
  for (NodeIndex v : spec.nodes) out += z.z.col(z.index_of(spec.parent->node_id(v)));
  return out;
}

Vector sum_pool(const Matrix& z, std::span<const NodeIndex> nodes) {
  Tape tape;
  return sum_pool(tape.constant(z.transpose()), to_rows(nodes)).value().transpose();
}

Vector fuzzy_histogram_pool(const Matrix& z, std::span<const NodeIndex> nodes, int bins) {
  Tape tape;
  return fuzzy_histogram_pool(tape.constant(z.transpose()), to_rows(nodes), bins).value().transpose();
}

Vector ordered_concat_pool(const Graph& g, const Matrix& z, std::span<const NodeIndex> nodes, int m) {
  if (z.cols() != g.node_count()) throw ShapeError("embeddings need one column per node");
  check_nodes(g, nodes);
  Tape tape;
  return ordered_concat_pool(tape.constant(z.transpose()), g, to_rows(nodes), m).value().transpose();
}

Graph add_supernode(const Graph& g, std::span<const NodeIndex> nodes) {
  check_nodes(g, nodes);
  GraphBuilder b({.directed = g.directed(), .weighted = g.weighted(), .self_loops = true});
  for (NodeIndex v = 0; v < g.node_count(); ++v) b.add_node(g.node_id(v));
  std::string id = "__supernode__";
  while (g.find(id)) id += '_';
  const NodeIndex super = b.add_node(id);
  copy_edges(g, b, 0);
  const int type = g.has_edge_types() ? 0 : -1;
  for (NodeIndex v : nodes) {
    b.add_edge(super, v, 1.0, type);
    if (g.directed()) b.add_edge(v, super, 1.0, type);
  }
  Graph out = b.build();
  if (g.has_attributes()) {
    Matrix x = Matrix::Zero(g.attributes().rows(), g.node_count() + 1);
    x.leftCols(g.node_count()) = g.attributes();
    out = out.with_attributes(std::move(x));
  }
  return out;
}

Vector supernode_pool(const Graph& g, std::span<const NodeIndex> nodes, const NodeEncoderFn& encoder) {
  const Graph augmented = add_supernode(g, nodes);
  const Matrix z = encoder(augmented);
  if (z.cols() != augmented.node_count()) throw ShapeError("encoder must return one column per node");
  return z.col(g.node_count());
}

namespace {

/// Alternates cluster, max-pool and (between levels) re-encoding, then max-pools each item.
/// `h` holds the level-one encoder output; returns one row per item.
Var coarsen_pool(Tape& tape, Graph g, Var h, std::vector<std::vector<Index>> items, int levels,
                 std::span<AggEncoder> later, const ClusterFn& cluster, std::uint64_t seed) {
  for (int level = 0; level < levels; ++level) {
    const auto groups = cluster ? cluster(g) : heavy_edge_clusters(g);
    const Graph coarse = quotient_graph(g, groups);
    std::vector<Index> owner(static_cast<std::size_t>(g.node_count()));
    std::vector<std::vector<Index>> rows(groups.size());
    for (std::size_t c = 0; c < groups.size(); ++c)
      for (NodeIndex v : groups[c]) {
        owner[static_cast<std::size_t>(v)] = static_cast<Index>(c);
        rows[c].push_back(v);
      }
    h = diff::segment_max_rows(h, rows);
    for (auto& item : items) {
      for (Index& r : item) r = owner[static_cast<std::size_t>(r)];
      std::sort(item.begin(), item.end());
      item.erase(std::unique(item.begin(), item.end()), item.end());
    }
    g = coarse;
    if (level + 1 < levels) h = later[static_cast<std::size_t>(level)].forward(tape, g, h, seed);
  }
  return diff::segment_max_rows(h, items);
}

}  // namespace

Vector coarsen_maxpool(const Graph& g, const Matrix& x, const std::vector<AggEncoder>& encoders,
                       std::span<const NodeIndex> nodes, const ClusterFn& cluster) {
  if (encoders.empty()) throw ContractError("coarsening needs levels >= 1");
  check_nodes(g, nodes);
  if (x.cols() != g.node_count()) throw ShapeError("attributes need one column per node");
  std::vector<AggEncoder> copies = encoders;
  Tape tape;
  const std::uint64_t seed = copies.front().config().seed;
  const Var h = copies.front().forward(tape, g, tape.constant(x.transpose()), seed);
  const Var out = coarsen_pool(tape, g, h, {to_rows(nodes)}, static_cast<int>(copies.size()),
                               std::span<AggEncoder>(copies).subspan(1), cluster, seed);
  return out.value().transpose();
}

// Edge-message encoder ----------------------------------------------------------------------

EdgeMessageEncoder::EdgeMessageEncoder(EdgeMessageConfig config) : config_(config) {
  const EdgeMessageConfig& c = config_;
  if (c.input_dim < 1 || c.edge_dim < 1 || c.output_dim < 1) throw ShapeError("edge-message widths must be positive");
  if (c.rounds < 0) throw ContractError("edge-message rounds must be >= 0");
  for (int k = 0; k < c.rounds; ++k) {
    Rng rng(derive_seed(c.seed, kEdgeRound, static_cast<std::uint64_t>(k)));
    edge_weights.emplace_back(nn::glorot(c.input_dim + c.edge_dim, c.edge_dim, rng));
  }
  Rng rng(derive_seed(c.seed, kEdgeNode));
  node_weight = Parameter(nn::glorot(c.input_dim + c.edge_dim, c.output_dim, rng));
}

Var EdgeMessageEncoder::forward(Tape& tape, const Graph& g, const Var& x) {
  const EdgeMessageConfig& c = config_;
  const Index n = g.node_count();
  if (g.directed()) throw UnsupportedError("edge-message encoding needs an undirected graph");
  if (x.rows() != n || x.cols() != c.input_dim) throw ShapeError("edge-message input must be |V| x input_dim");
  if (static_cast<int>(edge_weights.size()) != c.rounds) throw ShapeError("one edge map per round required");

  // Directed edge e = (src -> dst) carries eta_{src,dst}; rev[e] is (dst -> src).
  std::vector<Index> src, dst, rev;
  for (NodeIndex u = 0; u < n; ++u)
    for (NodeIndex v : g.neighbors(u)) {
      src.push_back(u);
      dst.push_back(v);
    }
  for (std::size_t e = 0; e < src.size(); ++e) rev.push_back(g.edge_slot(dst[e], src[e]));
  const auto edges = static_cast<Index>(src.size());

  Var out_sum = tape.constant(Matrix::Zero(n, c.edge_dim));
  if (edges > 0) {
    const Var x_src = diff::gather_rows(x, src);
    Var eta = tape.constant(Matrix::Zero(edges, c.edge_dim));
    for (int k = 0; k < c.rounds; ++k) {
      const Var into = diff::scatter_add_rows(eta, dst, n);
      const Var agg = diff::gather_rows(into, src) - diff::gather_rows(eta, rev);
      eta = nn::activate(diff::matmul(diff::concat_cols({x_src, agg}), tape.parameter(edge_weights[static_cast<std::size_t>(k)])),
                         c.activation);
    }
    out_sum = diff::scatter_add_rows(eta, src, n);
  }
  return nn::activate(diff::matmul(diff::concat_cols({x, out_sum}), tape.parameter(node_weight)), c.activation);
}

Matrix EdgeMessageEncoder::encode(const Graph& g, const Matrix& x) const {
  EdgeMessageEncoder copy = *this;
  Tape tape;
  return copy.forward(tape, g, tape.constant(x.transpose())).value().transpose();
}

std::vector<Parameter*> EdgeMessageEncoder::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : edge_weights) out.push_back(&p);
  out.push_back(&node_weight);
  return out;
}

EmbeddingTable edge_message_encode(const Graph& g, const Matrix& x, const EdgeMessageEncoder& encoder) {
  EmbeddingTable t;
  t.z = encoder.encode(g, x);
  t.node_ids = g.node_ids();
  t.method = "edge_message";
  t.set("method", t.method);
  t.set("rounds", std::to_string(encoder.config().rounds));
  t.set("activation", nn::to_string(encoder.config().activation));
  return t;
}

// Classification ------------------------------------------------------------------------------

namespace {

/// Disjoint union of the items' parents (one copy per item for super-node pooling).
struct Batch {
  Graph g;
  /// Node-major attributes.
  Matrix x;
  std::vector<std::vector<Index>> rows;
};

Matrix item_attributes(const Graph& g) {
  return g.has_attributes() ? g.attributes() : fallback_attributes(g, FallbackAttributes::degree);
}

Batch make_batch(std::span<const SubgraphSpec> items, bool supernode, Index input_dim) {
  if (items.empty()) throw ContractError("no subgraphs to encode");
  struct Copy {
    Graph g;
    Matrix x;
  };
  std::vector<Copy> copies;
  std::map<const Graph*, std::size_t> shared;
  std::vector<std::pair<std::size_t, std::vector<Index>>> where;
  bool directed = false;
  for (const SubgraphSpec& s : items) {
    s.validate();
    directed |= s.parent->directed();
    Matrix x = item_attributes(*s.parent);
    if (x.rows() != input_dim) throw ShapeError("subgraph attributes must have width " + std::to_string(input_dim));
    if (supernode) {
      Matrix xs = Matrix::Zero(x.rows(), x.cols() + 1);
      xs.leftCols(x.cols()) = x;
      copies.push_back({add_supernode(*s.parent, s.nodes), std::move(xs)});
      where.emplace_back(copies.size() - 1, std::vector<Index>{s.parent->node_count()});
      continue;
    }
    auto [it, fresh] = shared.emplace(s.parent.get(), copies.size());
    if (fresh) copies.push_back({*s.parent, std::move(x)});
    where.emplace_back(it->second, to_rows(s.nodes));
  }

  GraphBuilder b({.directed = directed, .weighted = true, .self_loops = true});
  std::vector<Index> offset;
  Index total = 0;
  for (const Copy& c : copies) {
    offset.push_back(total);
    total += c.g.node_count();
  }
  Batch batch;
  batch.x.resize(total, input_dim);
  for (std::size_t k = 0; k < copies.size(); ++k) {
    const Graph& g = copies[k].g;
    if (g.directed() != directed) throw UnsupportedError("cannot batch directed and undirected graphs together");
    for (NodeIndex v = 0; v < g.node_count(); ++v) b.add_node(std::to_string(k) + ":" + g.node_id(v));
    batch.x.middleRows(offset[k], g.node_count()) = copies[k].x.transpose();
  }
  for (std::size_t k = 0; k < copies.size(); ++k) copy_edges(copies[k].g, b, offset[k]);
  batch.g = b.build();
  for (auto& [k, rows] : where) {
    for (Index& r : rows) r += offset[k];
    batch.rows.push_back(std::move(rows));
  }
  return batch;
}

std::vector<int> labels_of(std::span<const SubgraphSpec> items) {
  std::vector<int> out;
  for (const auto& s : items) out.push_back(s.label);
  return out;
}

}  // namespace

SubgraphClassifier::SubgraphClassifier(const SubgraphClassifierConfig& config, Index input_dim, int classes)
    : config_(config), input_dim_(input_dim), classes_(classes) {
  config_.pooling.validate();
  if (classes < 2) throw ValidationError("subgraph classification needs at least two classes");
  if (config_.epochs < 0) throw ContractError("epochs must be >= 0");
  Index d = 0;
  if (config_.encoder == SubgraphEncoderKind::mpnn) {
    MpnnConfig mc = config_.mpnn;
    mc.input_dim = input_dim;
    mc.seed = derive_seed(config_.seed, kEncoder);
    mpnn = Mpnn(mc);
    config_.mpnn = mc;
    d = mc.output_dim > 0 ? mc.output_dim : mc.state_dim;
  } else {
    EdgeMessageConfig ec = config_.edge_message;
    ec.input_dim = input_dim;
    ec.seed = derive_seed(config_.seed, kEncoder);
    edge_message = EdgeMessageEncoder(ec);
    config_.edge_message = ec;
    d = ec.output_dim;
  }
  if (config_.pooling.kind == PoolKind::coarsen_maxpool)
    for (int l = 1; l < config_.pooling.levels; ++l) {
      AggConfig ac = AggConfig::sage_mean({d, d});
      ac.seed = derive_seed(config_.seed, kLevel, static_cast<std::uint64_t>(l));
      level_encoders.emplace_back(ac);
    }
  Rng rng(derive_seed(config_.seed, kHead));
  theta = Parameter(nn::glorot(config_.pooling.output_dim(d) + 1, classes == 2 ? 1 : classes, rng));
}

namespace {

Var pooled_batch(SubgraphClassifier& model, Tape& tape, const Batch& batch) {
  const SubgraphClassifierConfig& c = model.config();
  const Var x = tape.constant(batch.x);
  const Var h = c.encoder == SubgraphEncoderKind::mpnn ? model.mpnn.forward(tape, batch.g, x)
                                                       : model.edge_message.forward(tape, batch.g, x);
  const PoolingSpec& p = c.pooling;
  const auto count = static_cast<Index>(batch.rows.size());
  switch (p.kind) {
    case PoolKind::sum: {
      std::vector<Index> all, item;
      for (std::size_t i = 0; i < batch.rows.size(); ++i)
        for (Index r : batch.rows[i]) {
          all.push_back(r);
          item.push_back(static_cast<Index>(i));
        }
      return diff::scatter_add_rows(diff::gather_rows(h, all), item, count);
    }
    case PoolKind::supernode: {
      std::vector<Index> super;
      for (const auto& rows : batch.rows) super.push_back(rows.front());
      return diff::gather_rows(h, super);
    }
    case PoolKind::constant:
      return tape.constant(Matrix::Zero(count, h.cols()));
    case PoolKind::coarsen_maxpool:
      return coarsen_pool(tape, batch.g, h, batch.rows, p.levels, model.level_encoders, {}, c.seed);
    case PoolKind::fuzzy_histogram:
    case PoolKind::ordered_concat: {
      std::vector<Var> rows;
      for (const auto& item : batch.rows)
        rows.push_back(p.kind == PoolKind::fuzzy_histogram ? fuzzy_histogram_pool(h, item, p.bins)
                                                           : ordered_concat_pool(h, batch.g, item, p.m));
      return diff::concat_rows(rows);
    }
  }
  throw ContractError("unknown pooling");
}

Var features(Tape& tape, const Var& pooled) {
  return diff::concat_cols({pooled, tape.constant(Matrix::Ones(pooled.rows(), 1))});
}

bool uses_supernode(const SubgraphClassifier& model) { return model.config().pooling.kind == PoolKind::supernode; }

}  // namespace

Var SubgraphClassifier::pooled(Tape& tape, std::span<const SubgraphSpec> items) {
  return pooled_batch(*this, tape, make_batch(items, uses_supernode(*this), input_dim_));
}

Var SubgraphClassifier::loss(Tape& tape, std::span<const SubgraphSpec> items) {
  const std::vector<int> labels = labels_of(items);
  std::vector<Index> rows;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) rows.push_back(static_cast<Index>(i));
  const Var z = features(tape, pooled(tape, items));
  return (1.0 / static_cast<double>(std::max<std::size_t>(rows.size(), 1))) *
         supervised_loss(z, labels, rows, tape.parameter(theta));
}

Matrix SubgraphClassifier::embed(std::span<const SubgraphSpec> items) const {
  SubgraphClassifier copy = *this;
  Tape tape;
  return copy.pooled(tape, items).value();
}

std::vector<int> SubgraphClassifier::predict(std::span<const SubgraphSpec> items) const {
  Matrix f = embed(items);
  f.conservativeResize(Eigen::NoChange, f.cols() + 1);
  f.col(f.cols() - 1).setOnes();
  return predict_classes(f.transpose(), theta.value);
}

std::vector<Parameter*> SubgraphClassifier::parameters() {
  std::vector<Parameter*> out = config_.encoder == SubgraphEncoderKind::mpnn ? mpnn.parameters() : edge_message.parameters();
  for (auto& enc : level_encoders)
    for (auto* p : enc.parameters()) out.push_back(p);
  out.push_back(&theta);
  return out;
}

SubgraphTrainResult classify_subgraphs(std::span<const SubgraphSpec> items, const SubgraphClassifierConfig& config) {
  std::vector<SubgraphSpec> labeled;
  int top = -1;
  std::vector<char> seen;
  for (const auto& s : items) {
    if (s.label < 0) continue;
    labeled.push_back(s);
    top = std::max(top, s.label);
    if (seen.size() <= static_cast<std::size_t>(s.label)) seen.resize(static_cast<std::size_t>(s.label) + 1, 0);
    seen[static_cast<std::size_t>(s.label)] = 1;
  }
  if (std::count(seen.begin(), seen.end(), 1) < 2) throw ValidationError("subgraph classification needs two or more classes");
  const Index input_dim = item_attributes(*labeled.front().parent).rows();

  SubgraphTrainResult result;
  result.model = SubgraphClassifier(config, input_dim, top + 1);
  SubgraphClassifier& model = result.model;
  const Batch batch = make_batch(labeled, uses_supernode(model), input_dim);
  const std::vector<int> labels = labels_of(labeled);
  std::vector<Index> rows(labeled.size());
  std::iota(rows.begin(), rows.end(), Index{0});
  const double inv = 1.0 / static_cast<double>(rows.size());

  diff::Optimizer opt({.kind = diff::OptimizerConfig::Kind::adam, .lr = config.lr}, model.parameters());
  for (int epoch = 0; epoch <= config.epochs; ++epoch) {
    Tape tape;
    const Var z = features(tape, pooled_batch(model, tape, batch));
    const Var loss = inv * supervised_loss(z, labels, rows, tape.parameter(model.theta));
    const double value = loss.scalar();
    if (!std::isfinite(value)) throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
    const std::vector<int> predicted = predict_classes(z.value().transpose(), model.theta.value);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
    result.loss_trace.push_back(value);
    result.accuracy_trace.push_back(static_cast<double>(hits) * inv);
    if (epoch == config.epochs) break;
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
  }
  result.train_accuracy = result.accuracy_trace.back();
  return result;
}

}  // namespace grembed
