#include "grembed/fixtures.hpp"

#include <array>
#include <string>

#include "grembed/error.hpp"
#include "grembed/rng.hpp"

namespace grembed::fixtures {

namespace {

constexpr std::array<std::array<int, 2>, 78> kKarateEdges = {{
    {0, 1},   {0, 2},   {0, 3},   {0, 4},   {0, 5},   {0, 6},   {0, 7},   {0, 8},   {0, 10},  {0, 11},
    {0, 12},  {0, 13},  {0, 17},  {0, 19},  {0, 21},  {0, 31},  {1, 2},   {1, 3},   {1, 7},   {1, 13},
    {1, 17},  {1, 19},  {1, 21},  {1, 30},  {2, 3},   {2, 7},   {2, 8},   {2, 9},   {2, 13},  {2, 27},
    {2, 28},  {2, 32},  {3, 7},   {3, 12},  {3, 13},  {4, 6},   {4, 10},  {5, 6},   {5, 10},  {5, 16},
    {6, 16},  {8, 30},  {8, 32},  {8, 33},  {9, 33},  {13, 33}, {14, 32}, {14, 33}, {15, 32}, {15, 33},
    {18, 32}, {18, 33}, {19, 33}, {20, 32}, {20, 33}, {22, 32}, {22, 33}, {23, 25}, {23, 27}, {23, 29},
    {23, 32}, {23, 33}, {24, 25}, {24, 27}, {24, 31}, {25, 31}, {26, 29}, {26, 33}, {27, 33}, {28, 31},
    {28, 33}, {29, 32}, {29, 33}, {30, 32}, {30, 33}, {31, 32}, {31, 33}, {32, 33},
}};

constexpr std::array<int, 34> kKarateFactions = {0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 1, 0,
                                                 0, 1, 0, 1, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};

GraphBuilder numbered(Index n) {
  GraphBuilder b;
  b.add_nodes(n);
  return b;
}

}  // namespace

Graph path(Index n) {
  auto b = numbered(n);
  for (Index i = 0; i + 1 < n; ++i) b.add_edge(i, i + 1);
  return b.build();
}

Graph cycle(Index n) {
  auto b = numbered(n);
  for (Index i = 0; i < n; ++i) b.add_edge(i, (i + 1) % n);
  return b.build();
}

Graph complete(Index n) {
  auto b = numbered(n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) b.add_edge(i, j);
  return b.build();
}

Graph star(Index leaves) {
  auto b = numbered(leaves + 1);
  for (Index i = 1; i <= leaves; ++i) b.add_edge(0, i);
  return b.build();
}

Graph barbell(Index m, Index path_len) {
  if (m < 2) throw ContractError("barbell cliques need at least 2 nodes");
  const Index n = 2 * m + path_len;
  auto b = numbered(n);
  for (Index i = 0; i < m; ++i)
    for (Index j = i + 1; j < m; ++j) {
      b.add_edge(i, j);
      b.add_edge(m + path_len + i, m + path_len + j);
    }
  // Chain: last node of clique 1 -> path -> first node of clique 2.
  NodeIndex prev = m - 1;
  for (Index p = 0; p < path_len; ++p) {
    b.add_edge(prev, m + p);
    prev = m + p;
  }
  b.add_edge(prev, m + path_len);
  return b.build();
}

Graph petersen() {
  auto b = numbered(10);
  for (Index i = 0; i < 5; ++i) {
    b.add_edge(i, (i + 1) % 5);
    b.add_edge(i, i + 5);
    b.add_edge(5 + i, 5 + (i + 2) % 5);
  }
  return b.build();
}

Graph karate_club() {
  auto b = numbered(34);
  for (const auto& e : kKarateEdges) b.add_edge(e[0], e[1]);
  return b.build();
}

std::vector<int> karate_club_factions() { return {kKarateFactions.begin(), kKarateFactions.end()}; }

std::vector<int> sbm_blocks(const std::vector<Index>& block_sizes) {
  std::vector<int> blocks;
  for (std::size_t b = 0; b < block_sizes.size(); ++b)
    for (Index i = 0; i < block_sizes[b]; ++i) blocks.push_back(static_cast<int>(b));
  return blocks;
}

Graph stochastic_block_model(const std::vector<Index>& block_sizes, double p_in, double p_out, std::uint64_t seed) {
  const auto blocks = sbm_blocks(block_sizes);
  const auto n = static_cast<Index>(blocks.size());
  Rng rng(seed);
  auto b = numbered(n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const double p = blocks[static_cast<std::size_t>(i)] == blocks[static_cast<std::size_t>(j)] ? p_in : p_out;
      if (uniform01(rng) < p) b.add_edge(i, j);
    }
  return b.build();
}

Graph erdos_renyi(Index n, double p, std::uint64_t seed) {
  Rng rng(seed);
  auto b = numbered(n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (uniform01(rng) < p) b.add_edge(i, j);
  return b.build();
}

Graph random_connected(Index n, Index extra_edges, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<NodeIndex> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  shuffle(order, rng);
  auto b = numbered(n);
  for (Index i = 0; i + 1 < n; ++i) b.add_edge(order[i], order[i + 1]);
  for (Index e = 0; e < extra_edges; ++e) {
    const auto u = static_cast<NodeIndex>(uniform_index(rng, static_cast<std::size_t>(n)));
    const auto v = static_cast<NodeIndex>(uniform_index(rng, static_cast<std::size_t>(n)));
    if (u != v) b.add_edge(u, v);
  }
  return b.build();
}

Graph permute(const Graph& g, const std::vector<NodeIndex>& perm) {
  const Index n = g.node_count();
  if (static_cast<Index>(perm.size()) != n) throw ShapeError("permutation size mismatch");
  std::vector<NodeIndex> inverse(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) inverse[static_cast<std::size_t>(perm[i])] = i;
  GraphBuilder b({g.directed(), g.weighted(), true});
  for (Index j = 0; j < n; ++j) b.add_node(g.node_id(inverse[static_cast<std::size_t>(j)]));
  for (NodeIndex u = 0; u < n; ++u) {
    const auto nb = g.neighbors(u);
    const auto w = g.neighbor_weights(u);
    const auto t = g.neighbor_edge_types(u);
    for (std::size_t i = 0; i < nb.size(); ++i) {
      if (!g.directed() && nb[i] < u) continue;
      b.add_edge(perm[static_cast<std::size_t>(u)], perm[static_cast<std::size_t>(nb[i])], w[i],
                 t.empty() ? -1 : t[i]);
    }
  }
  Graph out = b.build();
  if (g.has_attributes()) {
    Matrix x(g.attributes().rows(), n);
    for (Index i = 0; i < n; ++i) x.col(perm[static_cast<std::size_t>(i)]) = g.attributes().col(i);
    out = out.with_attributes(std::move(x));
  }
  if (g.has_node_types()) {
    std::vector<int> types(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) types[static_cast<std::size_t>(perm[i])] = g.node_type(i);
    out = out.with_node_types(std::move(types));
  }
  return out;
}

}  // namespace grembed::fixtures
