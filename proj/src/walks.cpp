#include "grembed/walks.hpp"

#include <algorithm>
#include <ostream>
#include <thread>
#include <unordered_map>

#include "grembed/error.hpp"

namespace grembed {

AliasTable::AliasTable(std::span<const double> weights) {
  const std::size_t n = weights.size();
  if (n == 0) throw ContractError("alias table needs at least one outcome");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ContractError("alias weights must be finite and nonnegative");
    total += w;
  }
  if (total <= 0.0) throw ContractError("alias weights sum to zero");

  prob_.assign(n, 0.0);
  alias_.assign(n, 0);
  std::vector<double> scaled(n);
  std::vector<std::uint32_t> small, large;
  for (std::size_t i = 0; i < n; ++i) {
    scaled[i] = weights[i] * static_cast<double>(n) / total;
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
  }
  while (!small.empty() && !large.empty()) {
    const auto s = small.back();
    small.pop_back();
    const auto l = large.back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (auto i : large) prob_[i] = 1.0, alias_[i] = i;
  for (auto i : small) prob_[i] = 1.0, alias_[i] = i;
}

std::size_t AliasTable::sample(Rng& rng) const {
  const double u = uniform01(rng) * static_cast<double>(prob_.size());
  const auto i = std::min(static_cast<std::size_t>(u), prob_.size() - 1);
  return (u - static_cast<double>(i)) < prob_[i] ? i : alias_[i];
}

double AliasTable::probability(std::size_t i) const {
  double mass = prob_[i];
  for (std::size_t j = 0; j < prob_.size(); ++j)
    if (alias_[j] == i && j != i) mass += 1.0 - prob_[j];
  return mass / static_cast<double>(prob_.size());
}

namespace {

void validate(const WalkConfig& c) {
  if (c.length < 2) throw ContractError("walk length must be at least 2");
  if (c.walks_per_node < 1) throw ContractError("walks_per_node must be at least 1");
  if (!(c.p > 0.0) || !(c.q > 0.0)) throw ContractError("p and q must be positive");
  if (c.workers < 1) throw ContractError("workers must be at least 1");
}

std::vector<AliasTable> node_tables(const Graph& g) {
  std::vector<AliasTable> tables(static_cast<std::size_t>(g.node_count()));
  if (!g.weighted()) return tables;
  for (NodeIndex v = 0; v < g.node_count(); ++v)
    if (g.degree(v) > 0) tables[static_cast<std::size_t>(v)] = AliasTable(g.neighbor_weights(v));
  return tables;
}

/// One first-order step; -1 at a dead end.
NodeIndex first_order_step(const Graph& g, const std::vector<AliasTable>& tables, NodeIndex v, Rng& rng) {
  const auto nb = g.neighbors(v);
  if (nb.empty()) return -1;
  if (g.weighted()) return nb[tables[static_cast<std::size_t>(v)].sample(rng)];
  return nb[uniform_index(rng, nb.size())];
}

AliasTable second_order_table(const Graph& g, NodeIndex prev, NodeIndex cur, double p, double q) {
  const auto nb = g.neighbors(cur);
  const auto w = g.neighbor_weights(cur);
  std::vector<double> alpha(nb.size());
  for (std::size_t i = 0; i < nb.size(); ++i) {
    const NodeIndex x = nb[i];
    const double a = x == prev ? 1.0 / p : (g.has_edge(prev, x) ? 1.0 : 1.0 / q);
    alpha[i] = a * w[i];
  }
  return AliasTable(alpha);
}

// Each start node owns the stream derive_seed(seed, v), so the corpus does
// not depend on how start nodes are split across workers.
template <typename Walker, typename MakeWalker>
WalkCorpus drive(const Graph& g, const WalkConfig& config, MakeWalker make_walker) {
  WalkCorpus corpus;
  corpus.config = config;
  const Index n = g.node_count();
  enum : char { kOk, kIsolated, kType };
  std::vector<std::vector<std::vector<NodeIndex>>> per_node(static_cast<std::size_t>(n));
  std::vector<char> status(static_cast<std::size_t>(n), kOk);

  auto work = [&](Index first, Index stride) {
    Walker walker = make_walker();
    for (NodeIndex v = first; v < n; v += stride) {
      const auto sv = static_cast<std::size_t>(v);
      if (g.degree(v) == 0) {
        status[sv] = kIsolated;
        continue;
      }
      if (!walker.accepts(v)) {
        status[sv] = kType;
        continue;
      }
      Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(v)));
      per_node[sv].reserve(static_cast<std::size_t>(config.walks_per_node));
      for (int r = 0; r < config.walks_per_node; ++r) per_node[sv].push_back(walker.walk(v, rng));
    }
  };

  const Index workers = std::min<Index>(config.workers, std::max<Index>(n, 1));
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> threads;
    for (Index w = 0; w < workers; ++w) threads.emplace_back(work, w, workers);
  }

  for (NodeIndex v = 0; v < n; ++v) {
    const auto sv = static_cast<std::size_t>(v);
    if (status[sv] == kIsolated) ++corpus.skipped_isolated;
    if (status[sv] == kType) ++corpus.skipped_type;
    for (auto& walk : per_node[sv]) corpus.walks.push_back(std::move(walk));
  }
  return corpus;
}

struct UniformWalker {
  const Graph& g;
  const WalkConfig& c;
  const std::vector<AliasTable>& tables;

  bool accepts(NodeIndex) const { return true; }
  std::vector<NodeIndex> walk(NodeIndex start, Rng& rng) const {
    std::vector<NodeIndex> w{start};
    w.reserve(static_cast<std::size_t>(c.length) + 1);
    for (int t = 0; t < c.length; ++t) {
      const NodeIndex next = first_order_step(g, tables, w.back(), rng);
      if (next < 0) break;
      w.push_back(next);
    }
    return w;
  }
};

struct Node2VecWalker {
  const Graph& g;
  const WalkConfig& c;
  const std::vector<AliasTable>& tables;
  const std::vector<AliasTable>* precomputed;
  std::unordered_map<Index, AliasTable> cache;

  bool accepts(NodeIndex) const { return true; }

  const AliasTable& table(NodeIndex prev, NodeIndex cur) {
    const Index slot = g.edge_slot(prev, cur);
    if (precomputed) return (*precomputed)[static_cast<std::size_t>(slot)];
    auto it = cache.find(slot);
    if (it == cache.end()) it = cache.emplace(slot, second_order_table(g, prev, cur, c.p, c.q)).first;
    return it->second;
  }

  std::vector<NodeIndex> walk(NodeIndex start, Rng& rng) {
    std::vector<NodeIndex> w{start};
    w.reserve(static_cast<std::size_t>(c.length) + 1);
    const NodeIndex first = first_order_step(g, tables, start, rng);
    if (first < 0) return w;
    w.push_back(first);
    for (int t = 1; t < c.length; ++t) {
      const NodeIndex prev = w[w.size() - 2];
      const NodeIndex cur = w.back();
      if (g.degree(cur) == 0) break;
      w.push_back(g.neighbors(cur)[table(prev, cur).sample(rng)]);
    }
    return w;
  }
};

struct MetapathWalker {
  const Graph& g;
  const WalkConfig& c;
  std::vector<NodeIndex> candidates;
  std::vector<double> weights;

  bool accepts(NodeIndex v) const { return g.node_type(v) == c.metapath.front(); }

  std::vector<NodeIndex> walk(NodeIndex start, Rng& rng) {
    std::vector<NodeIndex> w{start};
    w.reserve(static_cast<std::size_t>(c.length) + 1);
    const auto len = c.metapath.size();
    for (int t = 0; t < c.length; ++t) {
      const int want = c.metapath[static_cast<std::size_t>(t + 1) % len];
      const NodeIndex cur = w.back();
      const auto nb = g.neighbors(cur);
      const auto nw = g.neighbor_weights(cur);
      candidates.clear();
      weights.clear();
      double total = 0.0;
      for (std::size_t i = 0; i < nb.size(); ++i) {
        if (g.node_type(nb[i]) != want) continue;
        candidates.push_back(nb[i]);
        weights.push_back(nw[i]);
        total += nw[i];
      }
      if (candidates.empty()) break;
      if (!g.weighted()) {
        w.push_back(candidates[uniform_index(rng, candidates.size())]);
        continue;
      }
      double u = uniform01(rng) * total;
      std::size_t pick = 0;
      while (pick + 1 < candidates.size() && u >= weights[pick]) u -= weights[pick++];
      w.push_back(candidates[pick]);
    }
    return w;
  }
};

}  // namespace

WalkCorpus sample_uniform_walks(const Graph& g, const WalkConfig& config) {
  validate(config);
  const auto tables = node_tables(g);
  return drive<UniformWalker>(g, config, [&] { return UniformWalker{g, config, tables}; });
}

WalkCorpus sample_node2vec_walks(const Graph& g, const WalkConfig& config) {
  validate(config);
  const auto tables = node_tables(g);
  std::vector<AliasTable> all;
  if (config.precompute) {
    all.resize(g.csr_targets().size());
    for (NodeIndex u = 0; u < g.node_count(); ++u)
      for (NodeIndex v : g.neighbors(u))
        if (g.degree(v) > 0) all[static_cast<std::size_t>(g.edge_slot(u, v))] = second_order_table(g, u, v, config.p, config.q);
  }
  const auto* pre = config.precompute ? &all : nullptr;
  return drive<Node2VecWalker>(g, config, [&] { return Node2VecWalker{g, config, tables, pre, {}}; });
}

WalkCorpus sample_metapath_walks(const Graph& g, const WalkConfig& config) {
  validate(config);
  if (config.metapath.empty()) throw ContractError("metapath walks need a nonempty metapath");
  if (!g.has_node_types()) throw ContractError("metapath walks need node types");
  for (int t : config.metapath)
    if (std::find(g.node_types().begin(), g.node_types().end(), t) == g.node_types().end())
      throw ContractError("metapath type " + std::to_string(t) + " does not occur in the graph");
  return drive<MetapathWalker>(g, config, [&] { return MetapathWalker{g, config, {}, {}}; });
}

std::vector<NodePair> extract_pairs(const WalkCorpus& corpus, int window, std::optional<int> skip) {
  if (window < 1) throw ContractError("window must be at least 1");
  // A walk of `length` steps has length + 1 nodes, so window == length is the widest useful window.
  if (window > corpus.config.length) throw ContractError("window exceeds walk length");
  if (skip && (*skip < 1 || *skip > corpus.config.length)) throw ContractError("skip must lie in [1, length]");
  const int lo = skip ? *skip : 1;
  const int hi = skip ? *skip : window;
  std::vector<NodePair> pairs;
  for (const auto& walk : corpus.walks) {
    const auto len = static_cast<int>(walk.size());
    for (int i = 0; i < len; ++i)
      for (int d = lo; d <= hi && i + d < len; ++d) {
        pairs.emplace_back(walk[static_cast<std::size_t>(i)], walk[static_cast<std::size_t>(i + d)]);
        pairs.emplace_back(walk[static_cast<std::size_t>(i + d)], walk[static_cast<std::size_t>(i)]);
      }
  }
  return pairs;
}

void write_corpus(const WalkCorpus& corpus, std::ostream& out) {
  const auto& c = corpus.config;
  out << "# length=" << c.length << " walks_per_node=" << c.walks_per_node << " p=" << c.p << " q=" << c.q
      << " seed=" << c.seed;
  if (!c.metapath.empty()) {
    out << " metapath=";
    for (std::size_t i = 0; i < c.metapath.size(); ++i) out << (i ? "," : "") << c.metapath[i];
  }
  out << " skipped_isolated=" << corpus.skipped_isolated << '\n';
  for (const auto& walk : corpus.walks) {
    for (std::size_t i = 0; i < walk.size(); ++i) out << (i ? " " : "") << walk[i];
    out << '\n';
  }
}

}  // namespace grembed
