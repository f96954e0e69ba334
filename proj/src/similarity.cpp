#include "grembed/similarity.hpp"

#include <algorithm>
#include <cmath>

#include "grembed/error.hpp"
#include "grembed/walks.hpp"

namespace grembed {

namespace {

int parse_int_suffix(const std::string& text, std::size_t colon) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1) throw ConfigError("bad similarity parameter: " + text);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("bad similarity parameter: " + text);
  }
}

Matrix jaccard_matrix(const Graph& g) {
  const Index n = g.node_count();
  Matrix s = Matrix::Zero(n, n);
  for (NodeIndex i = 0; i < n; ++i) {
    const auto a = g.neighbors(i);
    for (NodeIndex j = i; j < n; ++j) {
      const auto b = g.neighbors(j);
      std::size_t inter = 0;
      auto x = a.begin();
      auto y = b.begin();
      while (x != a.end() && y != b.end()) {
        if (*x < *y) {
          ++x;
        } else if (*y < *x) {
          ++y;
        } else {
          ++inter, ++x, ++y;
        }
      }
      const std::size_t uni = a.size() + b.size() - inter;
      if (uni > 0) s(i, j) = s(j, i) = static_cast<double>(inter) / static_cast<double>(uni);
    }
  }
  return s;
}

Matrix visit_matrix(const Graph& g, int length, Index dense_cap) {
  if (length < 1) throw ContractError("walk length must be at least 1");
  const Matrix p = transition_matrix(g, dense_cap);
  Matrix pt = p;
  Matrix acc = p;
  for (int t = 2; t <= length; ++t) {
    pt = pt * p;
    acc += pt;
  }
  return acc / static_cast<double>(length);
}

}  // namespace

SimilaritySpec parse_similarity(const std::string& text) {
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const bool has_arg = colon != std::string::npos;
  if (head == "adjacency" && !has_arg) return SimilaritySpec::adjacency();
  if (head == "jaccard" && !has_arg) return SimilaritySpec::jaccard();
  if (head == "power" && has_arg) return SimilaritySpec::power(parse_int_suffix(text, colon));
  if (head == "rw_visit" && has_arg) return SimilaritySpec::rw_visit(parse_int_suffix(text, colon));
  if (head == "rw_pmi" && has_arg) {
    const int t = parse_int_suffix(text, colon);
    return SimilaritySpec::rw_pmi(t, 10, t, 0);
  }
  throw ConfigError("unknown similarity: " + text);
}

std::string to_string(const SimilaritySpec& spec) {
  using K = SimilaritySpec::Kind;
  switch (spec.kind) {
    case K::adjacency: return "adjacency";
    case K::adjacency_power: return "power:" + std::to_string(spec.k);
    case K::jaccard_neighborhood: return "jaccard";
    case K::rw_visit: return "rw_visit:" + std::to_string(spec.length);
    case K::rw_pmi: return "rw_pmi:" + std::to_string(spec.length);
  }
  return "?";
}

SimilarityMatrix build_similarity(const Graph& g, const SimilaritySpec& spec, Index dense_cap) {
  check_dense_cap(g, dense_cap);
  using K = SimilaritySpec::Kind;
  switch (spec.kind) {
    case K::adjacency: return {spec, adjacency_matrix(g, dense_cap)};
    case K::adjacency_power: return {spec, adjacency_power(g, spec.k, dense_cap)};
    case K::jaccard_neighborhood: return {spec, jaccard_matrix(g)};
    case K::rw_visit: return {spec, visit_matrix(g, spec.length, dense_cap)};
    case K::rw_pmi: return pmi_similarity(g, spec.length, spec.walks_per_node, spec.window, spec.seed, dense_cap);
  }
  throw ContractError("unknown similarity kind");
}

Vector walk_visit_distribution(const Graph& g, NodeIndex v, int length) {
  if (v < 0 || v >= g.node_count()) throw IndexError("node index out of range");
  if (g.degree(v) == 0) throw DomainError("walk visit distribution of an isolated node");
  if (length < 1) throw ContractError("walk length must be at least 1");
  // Propagate only the row of interest: O(T |E|) instead of dense powers.
  const Index n = g.node_count();
  Vector cur = Vector::Zero(n);
  cur(v) = 1.0;
  Vector acc = Vector::Zero(n);
  for (int t = 1; t <= length; ++t) {
    Vector next = Vector::Zero(n);
    for (NodeIndex u = 0; u < n; ++u) {
      if (cur(u) == 0.0) continue;
      const double wd = g.weighted_degree(u);
      if (wd <= 0.0) continue;
      const auto nb = g.neighbors(u);
      const auto w = g.neighbor_weights(u);
      for (std::size_t i = 0; i < nb.size(); ++i) next(nb[i]) += cur(u) * w[i] / wd;
    }
    cur = std::move(next);
    acc += cur;
  }
  return acc / static_cast<double>(length);
}

SimilarityMatrix pmi_similarity(const Graph& g, int length, int walks_per_node, int window, std::uint64_t seed,
                                Index dense_cap) {
  check_dense_cap(g, dense_cap);
  WalkConfig config;
  config.length = length;
  config.walks_per_node = walks_per_node;
  config.seed = seed;
  const WalkCorpus corpus = sample_uniform_walks(g, config);
  const auto pairs = extract_pairs(corpus, window);
  if (pairs.empty()) throw ContractError("PMI needs a nonempty walk corpus");

  const Index n = g.node_count();
  Matrix counts = Matrix::Zero(n, n);
  for (const auto& [a, b] : pairs) counts(a, b) += 1.0;
  const Vector marginal = counts.rowwise().sum();
  const double total = static_cast<double>(pairs.size());
  Matrix s = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (counts(i, j) > 0.0) s(i, j) = std::max(0.0, std::log(counts(i, j) * total / (marginal(i) * marginal(j))));
  return {SimilaritySpec::rw_pmi(length, walks_per_node, window, seed), std::move(s)};
}

}  // namespace grembed
