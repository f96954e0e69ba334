#include "grembed/multiscale.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <tuple>

#include "grembed/error.hpp"
#include "grembed/fixtures.hpp"

namespace grembed {

// Coarsening -------------------------------------------------------------------------

std::vector<std::vector<NodeIndex>> CoarseningMap::members() const {
  std::vector<std::vector<NodeIndex>> out(static_cast<std::size_t>(coarse.node_count()));
  for (std::size_t v = 0; v < fine_to_coarse.size(); ++v)
    out[static_cast<std::size_t>(fine_to_coarse[v])].push_back(static_cast<NodeIndex>(v));
  return out;
}

CoarseningMap coarsen(const Graph& g, CoarseningScheme scheme, int level) {
  if (scheme != CoarseningScheme::heavy_edge_matching) throw UnsupportedError("unknown coarsening scheme");
  if (g.empty()) throw ContractError("cannot coarsen an empty graph");
  if (g.directed()) throw UnsupportedError("coarsening needs an undirected graph");
  const Index n = g.node_count();

  std::vector<std::tuple<double, NodeIndex, NodeIndex>> edges;
  for (NodeIndex u = 0; u < n; ++u) {
    const auto nb = g.neighbors(u);
    const auto w = g.neighbor_weights(u);
    for (std::size_t k = 0; k < nb.size(); ++k)
      if (u < nb[k]) edges.emplace_back(w[k], u, nb[k]);
  }
  std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    return std::tie(std::get<1>(a), std::get<2>(a)) < std::tie(std::get<1>(b), std::get<2>(b));
  });
  std::vector<NodeIndex> mate(static_cast<std::size_t>(n), -1);
  for (const auto& [w, u, v] : edges)
    if (mate[static_cast<std::size_t>(u)] < 0 && mate[static_cast<std::size_t>(v)] < 0) {
      mate[static_cast<std::size_t>(u)] = v;
      mate[static_cast<std::size_t>(v)] = u;
    }

  CoarseningMap map;
  map.fine = g;
  map.level = level;
  map.fine_to_coarse.assign(static_cast<std::size_t>(n), -1);
  GraphBuilder b(LoadOptions{.directed = false, .weighted = true, .self_loops = false});
  for (NodeIndex v = 0; v < n; ++v) {
    if (map.fine_to_coarse[static_cast<std::size_t>(v)] >= 0) continue;
    const NodeIndex m = mate[static_cast<std::size_t>(v)];
    const NodeIndex c = b.add_node(m < 0 ? g.node_id(v) : g.node_id(v) + "+" + g.node_id(m));
    map.fine_to_coarse[static_cast<std::size_t>(v)] = c;
    if (m >= 0) map.fine_to_coarse[static_cast<std::size_t>(m)] = c;
  }
  for (const auto& [w, u, v] : edges) {
    const NodeIndex cu = map.fine_to_coarse[static_cast<std::size_t>(u)];
    const NodeIndex cv = map.fine_to_coarse[static_cast<std::size_t>(v)];
    if (cu != cv) b.add_edge(cu, cv, w);
  }
  map.coarse = b.build();
  return map;
}

std::vector<CoarseningMap> coarsen_levels(const Graph& g, int levels) {
  if (levels < 0) throw ContractError("levels must be nonnegative");
  std::vector<CoarseningMap> out;
  const Graph* current = &g;
  for (int l = 1; l <= levels; ++l) {
    CoarseningMap m = coarsen(*current, CoarseningScheme::heavy_edge_matching, l);
    if (m.coarse.node_count() == current->node_count()) break;
    out.push_back(std::move(m));
    current = &out.back().coarse;
  }
  return out;
}

Matrix prolong(const CoarseningMap& map, const Matrix& coarse_z) {
  if (coarse_z.cols() != map.coarse.node_count()) throw ShapeError("coarse embedding does not match the coarse graph");
  Matrix z(coarse_z.rows(), static_cast<Index>(map.fine_to_coarse.size()));
  for (std::size_t v = 0; v < map.fine_to_coarse.size(); ++v)
    z.col(static_cast<Index>(v)) = coarse_z.col(map.fine_to_coarse[v]);
  return z;
}

// HARP -------------------------------------------------------------------------------

EmbeddingTable harp_train(const Graph& g, const ShallowConfig& base, int levels, HarpReport* report) {
  if (!is_skipgram(base.method)) throw ContractError("HARP needs a walk or LINE base method");
  const std::vector<CoarseningMap> maps = coarsen_levels(g, levels);
  const auto depth = static_cast<int>(maps.size());

  HarpReport local;
  local.epochs_per_level = depth == 0 ? base.epochs : std::max(1, base.epochs / depth);
  auto graph_at = [&](int l) -> const Graph& { return l == 0 ? g : maps[static_cast<std::size_t>(l - 1)].coarse; };

  Matrix z;
  EmbeddingTable table;
  for (int l = depth; l >= 0; --l) {
    ShallowConfig c = base;
    c.epochs = local.epochs_per_level;
    if (l > 0) c.seed = derive_seed(base.seed, static_cast<std::uint64_t>(l));
    TrainReport r;
    if (l == depth) {
      table = train_shallow(graph_at(l), c, &r);
    } else {
      const Matrix init = prolong(maps[static_cast<std::size_t>(l)], z);
      table = train_shallow(graph_at(l), c, &r, &init);
    }
    z = table.z;
    local.levels.push_back(std::move(r));
    local.node_counts.push_back(graph_at(l).node_count());
  }
  table.set("harp_levels", std::to_string(depth));
  table.set("epochs", std::to_string(local.epochs_per_level));
  if (report) *report = std::move(local);
  return table;
}

// OhmNet -----------------------------------------------------------------------------

std::vector<std::pair<int, int>> LayerHierarchy::tied_pairs() const {
  std::vector<std::pair<int, int>> out;
  const bool hierarchical = std::any_of(parent.begin(), parent.end(), [](int p) { return p >= 0; });
  const auto n = static_cast<int>(layers.size());
  for (int a = 0; a < n; ++a)
    if (hierarchical) {
      if (parent[static_cast<std::size_t>(a)] >= 0) out.emplace_back(parent[static_cast<std::size_t>(a)], a);
    } else {
      for (int b = a + 1; b < n; ++b) out.emplace_back(a, b);
    }
  return out;
}

NodeIndex LayerHierarchy::node_of(int layer, Index entity) const {
  const auto& ids = layer_entity[static_cast<std::size_t>(layer)];
  const auto it = std::find(ids.begin(), ids.end(), entity);
  return it == ids.end() ? -1 : static_cast<NodeIndex>(it - ids.begin());
}

LayerHierarchy make_hierarchy(std::vector<std::string> names, std::vector<Graph> layers, std::vector<int> parent) {
  const std::size_t n = layers.size();
  if (n == 0) throw ContractError("a hierarchy needs at least one layer");
  if (names.size() != n || parent.size() != n) throw ShapeError("layer names, graphs and parents differ in length");
  for (std::size_t l = 0; l < n; ++l) {
    const int p = parent[l];
    if (p < -1 || p >= static_cast<int>(n) || p == static_cast<int>(l))
      throw ValidationError("layer '" + names[l] + "' has an invalid parent");
  }
  // depth-first cycle check along parent links
  for (std::size_t l = 0; l < n; ++l) {
    std::size_t steps = 0;
    for (int p = parent[l]; p >= 0; p = parent[static_cast<std::size_t>(p)])
      if (++steps > n) throw ValidationError("parent links of layer '" + names[l] + "' form a cycle");
  }
  // empty parents become the union of their children, deepest first
  std::vector<std::size_t> depth(n, 0);
  for (std::size_t l = 0; l < n; ++l)
    for (int p = parent[l]; p >= 0; p = parent[static_cast<std::size_t>(p)]) ++depth[l];
  std::vector<std::size_t> order(n);
  for (std::size_t l = 0; l < n; ++l) order[l] = l;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return depth[a] > depth[b]; });
  for (std::size_t l : order) {
    if (!layers[l].empty()) continue;
    std::vector<std::size_t> children;
    for (std::size_t c = 0; c < n; ++c)
      if (parent[c] == static_cast<int>(l)) children.push_back(c);
    if (children.empty()) throw ValidationError("layer '" + names[l] + "' has no nodes and no children");
    const Graph& first = layers[children.front()];
    GraphBuilder b(LoadOptions{.directed = first.directed(), .weighted = first.weighted(), .self_loops = true});
    for (std::size_t c : children) {
      const Graph& child = layers[c];
      for (NodeIndex u = 0; u < child.node_count(); ++u) b.add_node(child.node_id(u));
      for (NodeIndex u = 0; u < child.node_count(); ++u) {
        const auto nb = child.neighbors(u);
        const auto w = child.neighbor_weights(u);
        for (std::size_t k = 0; k < nb.size(); ++k)
          if (child.directed() || u <= nb[k]) b.add_edge(child.node_id(u), child.node_id(nb[k]), w[k]);
      }
    }
    layers[l] = b.build();
  }

  LayerHierarchy h;
  h.names = std::move(names);
  h.layers = std::move(layers);
  h.parent = std::move(parent);
  std::map<std::string, Index> entity;
  for (const Graph& layer : h.layers) {
    std::vector<Index> ids;
    for (NodeIndex v = 0; v < layer.node_count(); ++v) {
      const auto [it, inserted] = entity.try_emplace(layer.node_id(v), static_cast<Index>(h.entities.size()));
      if (inserted) h.entities.push_back(layer.node_id(v));
      ids.push_back(it->second);
    }
    h.layer_entity.push_back(std::move(ids));
  }
  return h;
}

LayerHierarchy load_hierarchy_file(const std::string& path, LoadOptions options) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open hierarchy file " + path);
  const std::filesystem::path dir = std::filesystem::path(path).parent_path();
  std::vector<std::string> names, parents, files;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream s(line);
    std::vector<std::string> f;
    for (std::string x; s >> x;) f.push_back(x);
    if (f.empty()) continue;
    if (f.size() < 2 || f.size() > 3) throw ParseError("expected 'layer parent|- [edge_file]'", lineno);
    if (std::find(names.begin(), names.end(), f[0]) != names.end())
      throw ValidationError("layer '" + f[0] + "' is listed twice");
    names.push_back(f[0]);
    parents.push_back(f[1]);
    files.push_back(f.size() == 3 ? f[2] : "");
  }
  std::vector<int> parent;
  for (const auto& p : parents) {
    if (p == "-") {
      parent.push_back(-1);
      continue;
    }
    const auto it = std::find(names.begin(), names.end(), p);
    if (it == names.end()) throw LookupError("unknown parent layer '" + p + "'");
    parent.push_back(static_cast<int>(it - names.begin()));
  }
  std::vector<Graph> layers;
  for (std::size_t l = 0; l < names.size(); ++l) {
    const std::filesystem::path file = files[l].empty() ? dir / (names[l] + ".edges") : dir / files[l];
    if (std::filesystem::exists(file)) {
      layers.push_back(load_edge_list_file(file.string(), options));
    } else if (!files[l].empty()) {
      throw ConfigError("cannot open layer file " + file.string());
    } else {
      layers.emplace_back();
    }
  }
  return make_hierarchy(std::move(names), std::move(layers), std::move(parent));
}

LayerHierarchy toy_two_layer(std::uint64_t seed) {
  const std::vector<Index> sizes{8, 8, 8};
  return make_hierarchy({"a", "b"},
                        {fixtures::stochastic_block_model(sizes, 0.6, 0.05, derive_seed(seed, 1)),
                         fixtures::stochastic_block_model(sizes, 0.6, 0.05, derive_seed(seed, 2))},
                        {-1, -1});
}

namespace {

/// Row pairs (index in a, index in b) of entities shared by layers a and b.
std::pair<std::vector<Index>, std::vector<Index>> shared_rows(const LayerHierarchy& h, int a, int b) {
  std::map<Index, Index> in_b;
  const auto& eb = h.layer_entity[static_cast<std::size_t>(b)];
  for (std::size_t v = 0; v < eb.size(); ++v) in_b.emplace(eb[v], static_cast<Index>(v));
  std::pair<std::vector<Index>, std::vector<Index>> rows;
  const auto& ea = h.layer_entity[static_cast<std::size_t>(a)];
  for (std::size_t v = 0; v < ea.size(); ++v)
    if (const auto it = in_b.find(ea[v]); it != in_b.end()) {
      rows.first.push_back(static_cast<Index>(v));
      rows.second.push_back(it->second);
    }
  return rows;
}

}  // namespace

diff::Var ohmnet_loss(const std::vector<diff::Var>& base_losses, const std::vector<diff::Var>& embeddings,
                      const LayerHierarchy& h, double lambda, bool squared) {
  if (base_losses.size() != h.size() || embeddings.size() != h.size())
    throw ShapeError("one base loss and one embedding per layer are required");
  for (std::size_t l = 0; l < h.size(); ++l)
    if (embeddings[l].rows() < h.layers[l].node_count())
      throw LookupError("layer '" + h.names[l] + "' has no embedding for some of its nodes");
  diff::Var total = base_losses.front();
  for (std::size_t l = 1; l < base_losses.size(); ++l) total = total + base_losses[l];
  if (lambda == 0.0) return total;
  for (const auto& [a, b] : h.tied_pairs()) {
    const auto [ra, rb] = shared_rows(h, a, b);
    if (ra.empty()) continue;
    const diff::Var gap = diff::gather_rows(embeddings[static_cast<std::size_t>(a)], ra) -
                          diff::gather_rows(embeddings[static_cast<std::size_t>(b)], rb);
    const diff::Var per_node = diff::sum_cols(diff::square(gap));
    const diff::Var penalty = squared ? diff::reduce_sum(per_node) : diff::reduce_sum(diff::sqrt_eps(per_node, 1e-12));
    total = total + diff::scale(penalty, lambda);
  }
  return total;
}

double ohmnet_gap(const LayerHierarchy& h, const std::vector<Matrix>& z) {
  if (z.size() != h.size()) throw ShapeError("one embedding table per layer is required");
  double gap = 0.0;
  for (const auto& [a, b] : h.tied_pairs()) {
    const auto [ra, rb] = shared_rows(h, a, b);
    for (std::size_t k = 0; k < ra.size(); ++k)
      gap += (z[static_cast<std::size_t>(a)].col(ra[k]) - z[static_cast<std::size_t>(b)].col(rb[k])).norm();
  }
  return gap;
}

OhmnetResult ohmnet_train(const LayerHierarchy& h, const OhmnetConfig& config) {
  const ShallowConfig& base = config.base;
  if (!is_skipgram(base.method)) throw ContractError("OhmNet needs a walk or LINE base method");
  if (config.lambda < 0.0) throw ContractError("lambda must be nonnegative");
  const std::size_t n = h.size();

  OhmnetResult result;
  result.reports.resize(n);
  std::vector<std::unique_ptr<SkipGramTrainer>> trainers;
  const SkipGramOptions opt = skipgram_options(base);
  for (std::size_t l = 0; l < n; ++l) {
    if (h.layers[l].empty()) throw ContractError("layer '" + h.names[l] + "' is empty");
    TrainReport& r = result.reports[l];
    SkipGramData data = skipgram_data(h.layers[l], base, &r.skipped_isolated);
    r.pair_count = data.pairs.size();
    trainers.push_back(std::make_unique<SkipGramTrainer>(std::move(data), opt));
    r.initial_loss = trainers.back()->pair_loss();
    r.loss_trace.push_back(r.initial_loss);
  }

  if (config.lambda > 0.0) {
    // partners[l][v]: (layer, node) pairs tied to node v of layer l
    std::vector<std::vector<std::vector<std::pair<std::size_t, NodeIndex>>>> partners(n);
    for (std::size_t l = 0; l < n; ++l) partners[l].resize(static_cast<std::size_t>(h.layers[l].node_count()));
    for (const auto& [a, b] : h.tied_pairs()) {
      const auto [ra, rb] = shared_rows(h, a, b);
      for (std::size_t k = 0; k < ra.size(); ++k) {
        partners[static_cast<std::size_t>(a)][static_cast<std::size_t>(ra[k])].emplace_back(b, rb[k]);
        partners[static_cast<std::size_t>(b)][static_cast<std::size_t>(rb[k])].emplace_back(a, ra[k]);
      }
    }
    for (std::size_t l = 0; l < n; ++l)
      trainers[l]->set_penalty([&trainers, list = std::move(partners[l]), lambda = config.lambda,
                                squared = config.squared](NodeIndex v, const Vector& zv, Vector& grad) {
        for (const auto& [m, u] : list[static_cast<std::size_t>(v)]) {
          const Vector d = zv - trainers[m]->embeddings().col(u);
          if (squared) {
            grad += 2.0 * lambda * d;
          } else {
            const double norm = std::sqrt(d.squaredNorm() + 1e-12);
            grad += (lambda / norm) * d;
          }
        }
      });
  }

  for (int e = 0; e < opt.epochs; ++e)
    for (std::size_t l = 0; l < n; ++l) {
      trainers[l]->run_epoch();
      result.reports[l].loss_trace.push_back(trainers[l]->pair_loss());
    }

  std::vector<Matrix> z;
  for (std::size_t l = 0; l < n; ++l) {
    result.reports[l].final_loss = result.reports[l].loss_trace.back();
    EmbeddingTable t;
    t.z = trainers[l]->embeddings();
    t.node_ids = h.layers[l].node_ids();
    t.method = "ohmnet";
    t.set("layer", h.names[l]);
    t.set("base", to_string(base.method));
    t.set("lambda", std::to_string(config.lambda));
    t.set("norm", config.squared ? "squared" : "plain");
    t.set("dim", std::to_string(base.dim));
    t.set("seed", std::to_string(base.seed));
    z.push_back(t.z);
    result.layers.push_back(std::move(t));
  }
  result.gap = ohmnet_gap(h, z);
  return result;
}

}  // namespace grembed
