#pragma once

// Brute-force oracles for structural equivalence and spectral quantities. Each one avoids the
// code path it checks.

#include <algorithm>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "grembed/graph.hpp"

namespace grembed::testing {

/// Orbit id per node under the full automorphism group, by backtracking over all label maps.
inline std::vector<int> automorphism_orbits(const Graph& g) {
  const Index n = g.node_count();
  std::vector<int> orbit(static_cast<std::size_t>(n));
  for (Index v = 0; v < n; ++v) orbit[static_cast<std::size_t>(v)] = static_cast<int>(v);
  std::vector<NodeIndex> image(static_cast<std::size_t>(n), -1);
  std::vector<bool> used(static_cast<std::size_t>(n), false);

  auto merge = [&](NodeIndex a, NodeIndex b) {
    const int from = orbit[static_cast<std::size_t>(b)], to = orbit[static_cast<std::size_t>(a)];
    if (from == to) return;
    for (auto& o : orbit)
      if (o == from) o = to;
  };
  std::function<void(NodeIndex)> extend = [&](NodeIndex v) {
    if (v == n) {
      for (NodeIndex u = 0; u < n; ++u) merge(u, image[static_cast<std::size_t>(u)]);
      return;
    }
    for (NodeIndex c = 0; c < n; ++c) {
      if (used[static_cast<std::size_t>(c)] || g.degree(c) != g.degree(v)) continue;
      bool ok = true;
      for (NodeIndex u = 0; u < v && ok; ++u)
        ok = g.has_edge(u, v) == g.has_edge(image[static_cast<std::size_t>(u)], c);
      if (!ok) continue;
      image[static_cast<std::size_t>(v)] = c;
      used[static_cast<std::size_t>(c)] = true;
      extend(v + 1);
      used[static_cast<std::size_t>(c)] = false;
    }
  };
  extend(0);
  // canonical ids in first-appearance order
  std::map<int, int> ids;
  for (auto& o : orbit) o = ids.emplace(o, static_cast<int>(ids.size())).first->second;
  return orbit;
}

/// Colour refinement run for |V| rounds: a node's class is its degree, then the multiset of its
/// neighbours' classes, and so on.
inline std::vector<int> degree_refinement_classes(const Graph& g) {
  const Index n = g.node_count();
  std::vector<int> colour(static_cast<std::size_t>(n), 0);
  for (Index round = 0; round < n; ++round) {
    std::map<std::pair<int, std::vector<int>>, int> ids;
    std::vector<int> next(colour.size());
    for (NodeIndex v = 0; v < n; ++v) {
      std::vector<int> nb;
      for (NodeIndex u : g.neighbors(v)) nb.push_back(colour[static_cast<std::size_t>(u)]);
      std::sort(nb.begin(), nb.end());
      const auto key = std::make_pair(colour[static_cast<std::size_t>(v)], nb);
      next[static_cast<std::size_t>(v)] = ids.emplace(key, static_cast<int>(ids.size())).first->second;
    }
    colour = std::move(next);
  }
  std::map<int, int> ids;
  for (auto& c : colour) c = ids.emplace(c, static_cast<int>(ids.size())).first->second;
  return colour;
}

/// True when two labelings induce the same partition.
inline bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
  return true;
}

/// Minimum over every monotone warping path, enumerated explicitly.
inline double dtw_brute_force(std::span<const Index> a, std::span<const Index> b,
                              const std::function<double(Index, Index)>& cost) {
  std::function<double(std::size_t, std::size_t)> best = [&](std::size_t i, std::size_t j) -> double {
    const double here = cost(a[i], b[j]);
    if (i + 1 == a.size() && j + 1 == b.size()) return here;
    double tail = 1e300;
    if (i + 1 < a.size()) tail = std::min(tail, best(i + 1, j));
    if (j + 1 < b.size()) tail = std::min(tail, best(i, j + 1));
    if (i + 1 < a.size() && j + 1 < b.size()) tail = std::min(tail, best(i + 1, j + 1));
    return here + tail;
  };
  return best(0, 0);
}

/// exp(-s L) by scaling and squaring of a truncated Taylor series.
inline Matrix heat_kernel_series(const Matrix& lap, double s) {
  const Matrix a = -s * lap;
  int squarings = 0;
  double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  while (norm > 0.5) {
    norm /= 2;
    ++squarings;
  }
  const Matrix scaled = a / std::pow(2.0, squarings);
  Matrix term = Matrix::Identity(a.rows(), a.cols()), sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * scaled / static_cast<double>(k);
    sum += term;
  }
  for (int k = 0; k < squarings; ++k) sum = sum * sum;
  return sum;
}

}  // namespace grembed::testing
