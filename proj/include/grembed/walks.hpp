#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "grembed/graph.hpp"
#include "grembed/rng.hpp"

namespace grembed {

/// Vose alias table: O(1) draws from a fixed categorical distribution.
class AliasTable {
 public:
  AliasTable() = default;
  /// Unnormalized nonnegative weights with a positive sum.
  explicit AliasTable(std::span<const double> weights);

  std::size_t size() const { return prob_.size(); }
  std::size_t sample(Rng& rng) const;
  /// Probability of outcome i implied by the table.
  double probability(std::size_t i) const;

 private:
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
};

struct WalkConfig {
  /// Steps per walk; a full walk holds length + 1 nodes.
  int length = 10;
  int walks_per_node = 10;
  double p = 1.0;
  double q = 1.0;
  std::vector<int> metapath;
  std::uint64_t seed = 0;
  int workers = 1;
  /// Build every second-order table up front instead of on first use.
  bool precompute = false;
};

struct WalkCorpus {
  WalkConfig config;
  /// Ordered by start node, then by walk number.
  std::vector<std::vector<NodeIndex>> walks;
  std::vector<NodePair> pairs;
  Index skipped_isolated = 0;
  Index skipped_type = 0;
};

WalkCorpus sample_uniform_walks(const Graph& g, const WalkConfig& config);
WalkCorpus sample_node2vec_walks(const Graph& g, const WalkConfig& config);
WalkCorpus sample_metapath_walks(const Graph& g, const WalkConfig& config);

/// (walk[i], walk[i+d]) and its reverse for 1 <= d <= window, or only d == skip when set.
std::vector<NodePair> extract_pairs(const WalkCorpus& corpus, int window, std::optional<int> skip = std::nullopt);

void write_corpus(const WalkCorpus& corpus, std::ostream& out);

}  // namespace grembed
