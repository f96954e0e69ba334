#include "grembed/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "grembed/error.hpp"

namespace grembed {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

// Graph ------------------------------------------------------------------------

Index Graph::edge_count() const {
  const auto slots = static_cast<Index>(targets_.size());
  if (directed_) return slots;
  Index loops = 0;
  for (NodeIndex v = 0; v < node_count(); ++v) {
    if (has_edge(v, v)) ++loops;
  }
  return (slots - loops) / 2 + loops;
}

std::span<const NodeIndex> Graph::neighbors(NodeIndex v) const {
  const auto b = static_cast<std::size_t>(offsets_[static_cast<std::size_t>(v)]);
  const auto e = static_cast<std::size_t>(offsets_[static_cast<std::size_t>(v) + 1]);
  return {targets_.data() + b, e - b};
}

std::span<const double> Graph::neighbor_weights(NodeIndex v) const {
  const auto b = static_cast<std::size_t>(offsets_[static_cast<std::size_t>(v)]);
  const auto e = static_cast<std::size_t>(offsets_[static_cast<std::size_t>(v) + 1]);
  return {weights_.data() + b, e - b};
}

std::span<const int> Graph::neighbor_edge_types(NodeIndex v) const {
  if (edge_types_.empty()) return {};
  const auto b = static_cast<std::size_t>(offsets_[static_cast<std::size_t>(v)]);
  const auto e = static_cast<std::size_t>(offsets_[static_cast<std::size_t>(v) + 1]);
  return {edge_types_.data() + b, e - b};
}

Index Graph::degree(NodeIndex v) const {
  return offsets_[static_cast<std::size_t>(v) + 1] - offsets_[static_cast<std::size_t>(v)];
}

double Graph::weighted_degree(NodeIndex v) const {
  double s = 0.0;
  for (double w : neighbor_weights(v)) s += w;
  return s;
}

Index Graph::max_degree() const {
  Index m = 0;
  for (NodeIndex v = 0; v < node_count(); ++v) m = std::max(m, degree(v));
  return m;
}

Index Graph::edge_slot(NodeIndex u, NodeIndex v) const {
  const auto nb = neighbors(u);
  const auto it = std::lower_bound(nb.begin(), nb.end(), v);
  if (it == nb.end() || *it != v) return -1;
  return offsets_[static_cast<std::size_t>(u)] + (it - nb.begin());
}

bool Graph::has_edge(NodeIndex u, NodeIndex v) const { return edge_slot(u, v) >= 0; }

double Graph::edge_weight(NodeIndex u, NodeIndex v) const {
  const Index s = edge_slot(u, v);
  return s < 0 ? 0.0 : weights_[static_cast<std::size_t>(s)];
}

std::optional<NodeIndex> Graph::find(const std::string& id) const {
  const auto it = id_lookup_.find(id);
  if (it == id_lookup_.end()) return std::nullopt;
  return it->second;
}

NodeIndex Graph::index_of(const std::string& id) const {
  auto v = find(id);
  if (!v) throw LookupError("unknown node id '" + id + "'");
  return *v;
}

Graph Graph::with_attributes(Matrix attributes) const {
  if (attributes.cols() != node_count()) {
    throw ShapeError("attribute matrix has " + std::to_string(attributes.cols()) + " columns, graph has " +
                     std::to_string(node_count()) + " nodes");
  }
  Graph g = *this;
  g.attributes_ = std::move(attributes);
  return g;
}

Graph Graph::with_node_types(std::vector<int> types) const {
  if (static_cast<Index>(types.size()) != node_count()) throw ShapeError("node type count does not match node count");
  Graph g = *this;
  g.node_types_ = std::move(types);
  return g;
}

// GraphBuilder -----------------------------------------------------------------

NodeIndex GraphBuilder::add_node(const std::string& id) {
  auto [it, inserted] = lookup_.try_emplace(id, static_cast<NodeIndex>(ids_.size()));
  if (inserted) ids_.push_back(id);
  return it->second;
}

void GraphBuilder::add_nodes(Index count) {
  const Index base = node_count();
  for (Index i = 0; i < count; ++i) add_node(std::to_string(base + i));
}

void GraphBuilder::add_edge(NodeIndex u, NodeIndex v, double weight, int edge_type) {
  if (u < 0 || v < 0 || u >= node_count() || v >= node_count()) throw IndexError("edge endpoint out of range");
  if (!(weight >= 0.0) || !std::isfinite(weight)) throw ValidationError("edge weight must be finite and >= 0");
  if (u == v && !options_.self_loops) throw ValidationError("self-loop on node '" + ids_[u] + "' (enable self_loops)");
  edges_.push_back({u, v, weight, edge_type});
}

void GraphBuilder::add_edge(const std::string& u, const std::string& v, double weight, int edge_type) {
  const NodeIndex a = add_node(u);
  const NodeIndex b = add_node(v);
  add_edge(a, b, weight, edge_type);
}

Graph GraphBuilder::build() const {
  const auto n = static_cast<std::size_t>(ids_.size());
  // (target, weight, type) per source; duplicates merged below.
  std::vector<std::map<NodeIndex, std::pair<double, int>>> rows(n);
  auto put = [&](NodeIndex a, NodeIndex b, double w, int t) {
    auto [it, inserted] = rows[static_cast<std::size_t>(a)].try_emplace(b, w, t);
    if (!inserted && options_.weighted) it->second.first += w;
  };
  for (const auto& e : edges_) {
    const double w = options_.weighted ? e.w : 1.0;
    put(e.u, e.v, w, e.type);
    if (!options_.directed && e.u != e.v) put(e.v, e.u, w, e.type);
  }

  Graph g;
  g.directed_ = options_.directed;
  g.weighted_ = options_.weighted;
  g.node_ids_ = ids_;
  g.id_lookup_ = lookup_;
  g.offsets_.assign(n + 1, 0);
  bool any_type = false;
  for (const auto& e : edges_) any_type |= e.type >= 0;
  for (std::size_t v = 0; v < n; ++v) {
    for (const auto& [t, wt] : rows[v]) {
      g.targets_.push_back(t);
      g.weights_.push_back(wt.first);
      if (any_type) g.edge_types_.push_back(std::max(wt.second, 0));
    }
    g.offsets_[v + 1] = static_cast<Index>(g.targets_.size());
  }
  return g;
}

// Text formats -------------------------------------------------------------------

Graph load_edge_list(std::istream& in, LoadOptions options) {
  GraphBuilder builder(options);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto f = split_fields(t);
    if (f.size() < 2 || f.size() > 3) throw ParseError("expected 'src dst [weight]'", lineno);
    double w = 1.0;
    if (f.size() == 3) {
      if (!parse_double(f[2], w)) throw ParseError("bad weight '" + f[2] + "'", lineno);
      if (options.weighted && w < 0.0) {
        throw ValidationError("negative weight " + f[2] + " on line " + std::to_string(lineno));
      }
    }
    if (f[0] == f[1] && !options.self_loops) {
      throw ValidationError("self-loop on line " + std::to_string(lineno) + " (enable self_loops)");
    }
    builder.add_edge(f[0], f[1], options.weighted ? w : 1.0);
  }
  return builder.build();
}

Graph load_edge_list_file(const std::string& path, LoadOptions options) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open edge list '" + path + "'");
  return load_edge_list(in, options);
}

void export_edge_list(const Graph& g, std::ostream& out) {
  out.precision(17);
  for (NodeIndex u = 0; u < g.node_count(); ++u) {
    const auto nb = g.neighbors(u);
    const auto w = g.neighbor_weights(u);
    for (std::size_t i = 0; i < nb.size(); ++i) {
      const NodeIndex v = nb[i];
      if (!g.directed() && v < u) continue;
      out << g.node_id(u) << '\t' << g.node_id(v);
      if (g.weighted()) out << '\t' << w[i];
      out << '\n';
    }
  }
}

Graph load_attributes(const Graph& g, std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  Index m = -1;
  Matrix x;
  std::vector<bool> seen(static_cast<std::size_t>(g.node_count()), false);
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(t);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(trim(tok));
    if (m < 0) {
      if (f.size() < 2 || f[0] != "id") throw ParseError("attribute header must be 'id,f1..fm'", lineno);
      m = static_cast<Index>(f.size()) - 1;
      x = Matrix::Zero(m, g.node_count());
      continue;
    }
    if (static_cast<Index>(f.size()) != m + 1) throw ParseError("expected " + std::to_string(m + 1) + " fields", lineno);
    const auto v = g.find(f[0]);
    if (!v) throw ValidationError("attribute row for unknown node '" + f[0] + "' on line " + std::to_string(lineno));
    for (Index j = 0; j < m; ++j) {
      double val = 0.0;
      if (!parse_double(f[static_cast<std::size_t>(j + 1)], val)) throw ParseError("bad attribute value", lineno);
      x(j, *v) = val;
    }
    seen[static_cast<std::size_t>(*v)] = true;
  }
  if (m < 0) throw ParseError("empty attribute file");
  for (std::size_t v = 0; v < seen.size(); ++v) {
    if (!seen[v]) throw ValidationError("no attributes for node '" + g.node_id(static_cast<NodeIndex>(v)) + "'");
  }
  return g.with_attributes(std::move(x));
}

std::vector<int> load_labels(const Graph& g, std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::pair<NodeIndex, std::string>> raw;
  bool all_int = true;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto f = split_fields(t);
    if (f.size() != 2) throw ParseError("expected 'id<TAB>label'", lineno);
    const auto v = g.find(f[0]);
    if (!v) throw ValidationError("label for unknown node '" + f[0] + "' on line " + std::to_string(lineno));
    int parsed = 0;
    auto [ptr, ec] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), parsed);
    all_int &= ec == std::errc() && ptr == f[1].data() + f[1].size() && parsed >= 0;
    raw.emplace_back(*v, f[1]);
  }
  std::vector<int> labels(static_cast<std::size_t>(g.node_count()), -1);
  std::map<std::string, int> names;
  if (!all_int) {
    for (const auto& [v, s] : raw) names.emplace(s, 0);
    int next = 0;
    for (auto& [s, id] : names) id = next++;
  }
  for (const auto& [v, s] : raw) labels[static_cast<std::size_t>(v)] = all_int ? std::stoi(s) : names[s];
  return labels;
}

std::vector<int> load_labels_file(const Graph& g, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open label file '" + path + "'");
  return load_labels(g, in);
}

// Dense math -----------------------------------------------------------------------

void check_dense_cap(const Graph& g, Index dense_cap) {
  if (g.node_count() > dense_cap) {
    throw ResourceError("graph has " + std::to_string(g.node_count()) + " nodes, dense cap is " +
                        std::to_string(dense_cap));
  }
}

Matrix adjacency_matrix(const Graph& g, Index dense_cap) {
  check_dense_cap(g, dense_cap);
  Matrix a = Matrix::Zero(g.node_count(), g.node_count());
  for (NodeIndex u = 0; u < g.node_count(); ++u) {
    const auto nb = g.neighbors(u);
    const auto w = g.neighbor_weights(u);
    for (std::size_t i = 0; i < nb.size(); ++i) a(u, nb[i]) = w[i];
  }
  return a;
}

Matrix laplacian(const Graph& g, Index dense_cap) {
  if (g.directed()) throw UnsupportedError("laplacian requires an undirected graph");
  Matrix l = -adjacency_matrix(g, dense_cap);
  for (NodeIndex v = 0; v < g.node_count(); ++v) l(v, v) += g.weighted_degree(v);
  return l;
}

Matrix adjacency_power(const Graph& g, int k, Index dense_cap) {
  if (k < 1) throw ContractError("adjacency_power requires k >= 1");
  const Matrix a = adjacency_matrix(g, dense_cap);
  Matrix p = a;
  for (int i = 1; i < k; ++i) p = (p * a).eval();
  return p;
}

Matrix transition_matrix(const Graph& g, Index dense_cap) {
  Matrix p = adjacency_matrix(g, dense_cap);
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    const double s = p.row(v).sum();
    if (s > 0.0) p.row(v) /= s;
  }
  return p;
}

SparseMatrix sparse_adjacency(const Graph& g) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(g.csr_targets().size());
  for (NodeIndex u = 0; u < g.node_count(); ++u) {
    const auto nb = g.neighbors(u);
    const auto w = g.neighbor_weights(u);
    for (std::size_t i = 0; i < nb.size(); ++i) t.emplace_back(u, nb[i], w[i]);
  }
  SparseMatrix a(g.node_count(), g.node_count());
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

std::vector<Index> bfs_distances(const Graph& g, NodeIndex v) {
  if (v < 0 || v >= g.node_count()) throw IndexError("node index " + std::to_string(v) + " out of range");
  std::vector<Index> dist(static_cast<std::size_t>(g.node_count()), -1);
  std::deque<NodeIndex> queue{v};
  dist[static_cast<std::size_t>(v)] = 0;
  while (!queue.empty()) {
    const NodeIndex u = queue.front();
    queue.pop_front();
    for (NodeIndex w : g.neighbors(u)) {
      if (dist[static_cast<std::size_t>(w)] < 0) {
        dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(u)] + 1;
        queue.push_back(w);
      }
    }
  }
  return dist;
}

std::vector<NodeIndex> hop_ring(const Graph& g, NodeIndex v, int k) {
  if (k < 0) throw ContractError("hop count must be >= 0");
  const auto dist = bfs_distances(g, v);
  std::vector<NodeIndex> ring;
  for (std::size_t u = 0; u < dist.size(); ++u) {
    if (dist[u] == k) ring.push_back(static_cast<NodeIndex>(u));
  }
  return ring;
}

}  // namespace grembed
