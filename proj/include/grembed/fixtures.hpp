#pragma once

#include <cstdint>
#include <vector>

#include "grembed/graph.hpp"

namespace grembed::fixtures {

Graph path(Index n);
Graph cycle(Index n);
Graph complete(Index n);
Graph star(Index leaves);
/// Two K_m cliques joined through a path of `path_len` extra nodes.
/// Nodes 0..m-1 form the first clique, the path follows, then the second clique.
Graph barbell(Index m, Index path_len);
Graph petersen();
/// Zachary's karate club (34 nodes, 78 edges).
Graph karate_club();
/// Faction split of the karate club, aligned with karate_club() indices.
std::vector<int> karate_club_factions();
/// Undirected stochastic block model; node i belongs to block `blocks[i]`.
Graph stochastic_block_model(const std::vector<Index>& block_sizes, double p_in, double p_out, std::uint64_t seed);
std::vector<int> sbm_blocks(const std::vector<Index>& block_sizes);
Graph erdos_renyi(Index n, double p, std::uint64_t seed);
/// Random graph built from a spanning path plus extra random edges; always connected.
Graph random_connected(Index n, Index extra_edges, std::uint64_t seed);
/// Relabels nodes by `perm` (new index of old node i is perm[i]); ids follow their nodes.
Graph permute(const Graph& g, const std::vector<NodeIndex>& perm);

}  // namespace grembed::fixtures
