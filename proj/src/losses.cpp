#include <algorithm>
#include <map>
#include <numeric>

#include "grembed/error.hpp"
#include "grembed/shallow.hpp"

namespace grembed {

using diff::Var;

void SoftmaxTree::validate() const {
  const Index leaves = leaf_count();
  if (leaves == 0) throw ContractError("softmax tree has no leaves");
  if (static_cast<Index>(codes.size()) != leaves) throw ContractError("softmax tree paths and codes differ in length");
  if (internal_count != leaves - 1) throw ContractError("softmax tree must have |V| - 1 internal nodes");
  if (leaves == 1) {
    if (!paths[0].empty()) throw ContractError("single-leaf tree must have an empty path");
    return;
  }
  // child[(node, code)] is either an internal node id (>= 0) or -(leaf + 1).
  std::map<std::pair<Index, int>, Index> child;
  for (Index leaf = 0; leaf < leaves; ++leaf) {
    const auto& path = paths[static_cast<std::size_t>(leaf)];
    const auto& code = codes[static_cast<std::size_t>(leaf)];
    if (path.empty() || path.size() != code.size()) throw ContractError("malformed softmax tree path");
    if (path[0] != paths[0][0]) throw ContractError("softmax tree paths must share a root");
    for (std::size_t k = 0; k < path.size(); ++k) {
      if (path[k] < 0 || path[k] >= internal_count) throw ContractError("softmax tree node out of range");
      if (code[k] != 1 && code[k] != -1) throw ContractError("softmax tree codes must be +1 or -1");
      const Index next = k + 1 < path.size() ? path[k + 1] : -(leaf + 1);
      const auto [it, fresh] = child.emplace(std::make_pair(path[k], code[k]), next);
      if (!fresh && it->second != next) throw ContractError("softmax tree paths are not a prefix code");
    }
  }
  if (static_cast<Index>(child.size()) != 2 * internal_count) throw ContractError("softmax tree is not full");
}

SoftmaxTree build_softmax_tree(std::span<const double> weights) {
  const auto n = static_cast<Index>(weights.size());
  if (n == 0) throw ContractError("softmax tree needs at least one node");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return weights[a] > weights[b]; });

  SoftmaxTree tree;
  tree.paths.resize(static_cast<std::size_t>(n));
  tree.codes.resize(static_cast<std::size_t>(n));
  std::vector<Index> path;
  std::vector<int> code;
  auto build = [&](auto&& self, Index lo, Index hi) -> void {
    if (hi - lo == 1) {
      const auto leaf = static_cast<std::size_t>(order[static_cast<std::size_t>(lo)]);
      tree.paths[leaf] = path;
      tree.codes[leaf] = code;
      return;
    }
    const Index id = tree.internal_count++;
    const Index mid = lo + (hi - lo + 1) / 2;
    path.push_back(id);
    code.push_back(1);
    self(self, lo, mid);
    code.back() = -1;
    self(self, mid, hi);
    path.pop_back();
    code.pop_back();
  };
  build(build, 0, n);
  return tree;
}

Vector leaf_probabilities(const SoftmaxTree& tree, const Vector& z, const Matrix& inner) {
  Vector p(tree.leaf_count());
  for (Index leaf = 0; leaf < tree.leaf_count(); ++leaf) {
    double prob = 1.0;
    const auto& path = tree.paths[static_cast<std::size_t>(leaf)];
    const auto& code = tree.codes[static_cast<std::size_t>(leaf)];
    for (std::size_t k = 0; k < path.size(); ++k)
      prob /= 1.0 + std::exp(-code[k] * inner.row(path[k]).dot(z));
    p(leaf) = prob;
  }
  return p;
}

namespace {

void require_pairs(std::span<const NodePair> pairs) {
  if (pairs.empty()) throw ContractError("loss needs at least one pair");
}

void split(std::span<const NodePair> pairs, std::vector<Index>& a, std::vector<Index>& b) {
  a.reserve(pairs.size());
  b.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    a.push_back(i);
    b.push_back(j);
  }
}

Matrix column(std::span<const double> values) {
  Matrix m(static_cast<Index>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) m(static_cast<Index>(i), 0) = values[i];
  return m;
}

}  // namespace

Var le_loss(const Var& z, std::span<const NodePair> pairs, std::span<const double> weights) {
  require_pairs(pairs);
  if (weights.size() != pairs.size()) throw ShapeError("one weight per pair required");
  std::vector<Index> a, b;
  split(pairs, a, b);
  const Var d = diff::squared_distance(diff::gather_rows(z, a), diff::gather_rows(z, b));
  return diff::reduce_sum(diff::mul(d, z.tape().constant(column(weights))));
}

Var mse_loss(const Var& z, std::span<const NodePair> pairs, std::span<const double> targets) {
  require_pairs(pairs);
  if (targets.size() != pairs.size()) throw ShapeError("one target per pair required");
  std::vector<Index> a, b;
  split(pairs, a, b);
  const Var dec = diff::dot_rows(diff::gather_rows(z, a), diff::gather_rows(z, b));
  return diff::reduce_sum(diff::square(dec - z.tape().constant(column(targets))));
}

Var softmax_cross_entropy_loss(const Var& z, const Var& context, std::span<const NodePair> pairs) {
  require_pairs(pairs);
  std::vector<Index> a, b;
  split(pairs, a, b);
  const Var scores = diff::matmul(diff::gather_rows(z, a), diff::transpose(context));
  Matrix pick = Matrix::Zero(scores.rows(), scores.cols());
  for (std::size_t p = 0; p < b.size(); ++p) pick(static_cast<Index>(p), b[p]) = 1.0;
  const Var logp = diff::log(diff::softmax_rows(scores));
  return -diff::reduce_sum(diff::mul(logp, z.tape().constant(std::move(pick))));
}

Var negative_sampling_loss(const Var& z, const Var& context, std::span<const NodePair> pairs,
                           const std::vector<std::vector<NodeIndex>>& negatives) {
  require_pairs(pairs);
  if (negatives.size() != pairs.size()) throw ShapeError("one negative list per pair required");
  std::vector<Index> a, b;
  split(pairs, a, b);
  const Var pos = diff::dot_rows(diff::gather_rows(z, a), diff::gather_rows(context, b));
  Var loss = -diff::reduce_sum(diff::log_sigmoid(pos));

  std::vector<Index> na, nb;
  for (std::size_t p = 0; p < pairs.size(); ++p)
    for (NodeIndex n : negatives[p]) {
      na.push_back(pairs[p].first);
      nb.push_back(n);
    }
  if (na.empty()) return loss;
  const Var neg = diff::dot_rows(diff::gather_rows(z, na), diff::gather_rows(context, nb));
  return loss - diff::reduce_sum(diff::log_sigmoid(-neg));
}

std::vector<std::vector<NodeIndex>> draw_negatives(std::size_t pair_count, int k, const AliasTable& noise, Rng& rng) {
  if (k < 1) throw ContractError("negative sampling needs K >= 1");
  std::vector<std::vector<NodeIndex>> out(pair_count, std::vector<NodeIndex>(static_cast<std::size_t>(k)));
  for (auto& row : out)
    for (auto& n : row) n = static_cast<NodeIndex>(noise.sample(rng));
  return out;
}

Var hierarchical_softmax_loss(const Var& z, const Var& inner, std::span<const NodePair> pairs, const SoftmaxTree& tree) {
  require_pairs(pairs);
  tree.validate();
  if (inner.rows() != tree.internal_count) throw ShapeError("one inner vector per internal tree node required");
  std::vector<Index> rows, nodes;
  std::vector<double> signs;
  for (const auto& [i, j] : pairs) {
    if (j < 0 || j >= tree.leaf_count()) throw IndexError("context node outside the tree");
    const auto& path = tree.paths[static_cast<std::size_t>(j)];
    const auto& code = tree.codes[static_cast<std::size_t>(j)];
    for (std::size_t k = 0; k < path.size(); ++k) {
      rows.push_back(i);
      nodes.push_back(path[k]);
      signs.push_back(code[k]);
    }
  }
  if (rows.empty()) return z.tape().constant(Matrix::Zero(1, 1));
  const Var s = diff::dot_rows(diff::gather_rows(z, rows), diff::gather_rows(inner, nodes));
  return -diff::reduce_sum(diff::log_sigmoid(diff::mul(s, z.tape().constant(column(signs)))));
}

Var bilinear_scores(const Var& zi, const Var& a, const Var& zj) { return diff::dot_rows(diff::matmul(zi, a), zj); }

}  // namespace grembed
