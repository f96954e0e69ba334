#pragma once

#include <cstdint>
#include <string>

#include "grembed/graph.hpp"

namespace grembed {

struct SimilaritySpec {
  enum class Kind { adjacency, adjacency_power, jaccard_neighborhood, rw_visit, rw_pmi };

  Kind kind = Kind::adjacency;
  int k = 1;
  int length = 2;
  int walks_per_node = 10;
  int window = 2;
  std::uint64_t seed = 0;

  static SimilaritySpec adjacency() { return {}; }
  static SimilaritySpec power(int k) { return {.kind = Kind::adjacency_power, .k = k}; }
  static SimilaritySpec jaccard() { return {.kind = Kind::jaccard_neighborhood}; }
  static SimilaritySpec rw_visit(int length) { return {.kind = Kind::rw_visit, .length = length}; }
  static SimilaritySpec rw_pmi(int length, int walks_per_node, int window, std::uint64_t seed) {
    return {.kind = Kind::rw_pmi, .length = length, .walks_per_node = walks_per_node, .window = window, .seed = seed};
  }
};

/// Accepts `adjacency`, `power:K`, `jaccard`, `rw_visit:T` and `rw_pmi:T`.
SimilaritySpec parse_similarity(const std::string& text);
std::string to_string(const SimilaritySpec& spec);

struct SimilarityMatrix {
  SimilaritySpec spec;
  /// S(i, j) = s_G(v_i, v_j).
  Matrix values;
};

SimilarityMatrix build_similarity(const Graph& g, const SimilaritySpec& spec, Index dense_cap = kDefaultDenseCap);

/// (1/T) sum_{t=1..T} of row v of P^t.
Vector walk_visit_distribution(const Graph& g, NodeIndex v, int length);

/// Positive PMI of windowed co-occurrence counts from uniform walks.
SimilarityMatrix pmi_similarity(const Graph& g, int length, int walks_per_node, int window, std::uint64_t seed,
                                Index dense_cap = kDefaultDenseCap);

}  // namespace grembed
