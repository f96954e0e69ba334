#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grembed/diff.hpp"
#include "grembed/embedding.hpp"
#include "grembed/graph.hpp"
#include "grembed/similarity.hpp"
#include "grembed/walks.hpp"

namespace grembed {

// Hierarchical softmax tree --------------------------------------------------------

/// Full binary tree with one leaf per node. Going left at internal node n has
/// probability sigmoid(z . w_n), right has sigmoid(-z . w_n).
struct SoftmaxTree {
  Index internal_count = 0;
  /// Internal nodes from the root down to each leaf.
  std::vector<std::vector<Index>> paths;
  /// +1 for a left turn, -1 for a right turn.
  std::vector<std::vector<int>> codes;

  Index leaf_count() const { return static_cast<Index>(paths.size()); }
  /// Throws ContractError unless the paths form a complete prefix code.
  void validate() const;
};

/// Balanced tree over nodes sorted by `weights` descending (ties by index).
SoftmaxTree build_softmax_tree(std::span<const double> weights);

/// Exact leaf probabilities for embedding `z` and internal vectors `inner` (internal_count x d).
Vector leaf_probabilities(const SoftmaxTree& tree, const Vector& z, const Matrix& inner);

// Tape losses ----------------------------------------------------------------------
// Embedding vars are node-major (|V| x d), the transpose of EmbeddingTable::z.

/// sum_pairs s_ij ||z_i - z_j||^2.
diff::Var le_loss(const diff::Var& z, std::span<const NodePair> pairs, std::span<const double> weights);
/// sum_pairs (z_i . z_j - s_ij)^2.
diff::Var mse_loss(const diff::Var& z, std::span<const NodePair> pairs, std::span<const double> targets);
/// sum_pairs -log softmax_j(z_i . context^T), the full normalizer.
diff::Var softmax_cross_entropy_loss(const diff::Var& z, const diff::Var& context, std::span<const NodePair> pairs);
/// sum_pairs [-log s(z_i . c_j) - sum_k log s(-z_i . c_{n_k})] with negatives[p] listing pair p's noise nodes.
diff::Var negative_sampling_loss(const diff::Var& z, const diff::Var& context, std::span<const NodePair> pairs,
                                 const std::vector<std::vector<NodeIndex>>& negatives);
/// Draws k negatives per pair from `noise`.
std::vector<std::vector<NodeIndex>> draw_negatives(std::size_t pair_count, int k, const AliasTable& noise, Rng& rng);
diff::Var hierarchical_softmax_loss(const diff::Var& z, const diff::Var& inner, std::span<const NodePair> pairs,
                                    const SoftmaxTree& tree);
/// Row-wise z_i^T A z_j for row-aligned zi, zj.
diff::Var bilinear_scores(const diff::Var& zi, const diff::Var& a, const diff::Var& zj);

// Skip-gram trainer ------------------------------------------------------------------

enum class SkipGramLoss { negative_sampling, hierarchical_softmax };

struct SkipGramOptions {
  int dim = 16;
  double lr = 0.025;
  int epochs = 5;
  int negatives = 5;
  SkipGramLoss loss = SkipGramLoss::negative_sampling;
  /// Separate zero-initialized context vectors; otherwise one shared table (LINE first order).
  bool separate_context = false;
  std::uint64_t seed = 42;
};

struct SkipGramData {
  Index node_count = 0;
  std::vector<NodePair> pairs;
  /// When set, each epoch draws `samples_per_epoch` pairs proportional to these weights instead of
  /// sweeping a shuffled `pairs`.
  std::vector<double> pair_weights;
  std::size_t samples_per_epoch = 0;
  /// Unnormalized node frequencies; the noise law is freq^0.75.
  std::vector<double> frequencies;
  /// Hierarchical softmax leaf order (descending); falls back to `frequencies` when empty.
  std::vector<double> tree_weights;
};

/// Adds the gradient of a per-node penalty for node v at embedding z_v into grad.
using NodePenalty = std::function<void(NodeIndex v, const Vector& z_v, Vector& grad)>;

/// Per-pair SGD over a lookup table with linear learning-rate decay.
class SkipGramTrainer {
 public:
  /// `init` (d x |V|) replaces the random uniform(-0.5/d, 0.5/d) start.
  SkipGramTrainer(SkipGramData data, SkipGramOptions options, const Matrix* init = nullptr);

  void run_epoch();
  void train();
  int epochs_done() const { return epoch_; }
  /// Mean pair loss over the training pairs; negatives are fixed per trainer.
  double pair_loss() const;

  /// One exact gradient step on pair (i, j). Negatives are ignored for hierarchical softmax.
  void step(NodeIndex i, NodeIndex j, std::span<const NodeIndex> negatives, double lr);
  void set_penalty(NodePenalty penalty) { penalty_ = std::move(penalty); }

  /// d x |V|.
  const Matrix& embeddings() const { return z_; }
  Matrix& embeddings() { return z_; }
  const Matrix& context() const { return separate_ ? ctx_ : z_; }
  /// internal_count x d.
  const Matrix& inner() const { return inner_; }
  const SoftmaxTree& tree() const { return tree_; }
  const SkipGramData& data() const { return data_; }

 private:
  double current_lr() const;

  SkipGramData data_;
  SkipGramOptions opt_;
  Matrix z_, ctx_, inner_;
  bool separate_ = false;
  SoftmaxTree tree_;
  AliasTable noise_;
  AliasTable pair_sampler_;
  std::vector<std::vector<NodeIndex>> eval_negatives_;
  std::vector<std::size_t> order_;
  NodePenalty penalty_;
  Rng rng_;
  int epoch_ = 0;
  std::size_t steps_ = 0;
  std::size_t total_steps_ = 1;
};

// Shallow trainers -------------------------------------------------------------------

enum class ShallowMethod { laplacian_eigenmaps, graph_factorization, grarep, hope, deepwalk, node2vec, line1, line2 };

ShallowMethod parse_method(const std::string& name);
std::string to_string(ShallowMethod method);
bool is_skipgram(ShallowMethod method);

struct ShallowConfig {
  ShallowMethod method = ShallowMethod::deepwalk;
  int dim = 16;
  int walk_length = 10;
  int walks_per_node = 10;
  int window = 5;
  /// Walklet mode: keep only pairs exactly this many steps apart.
  std::optional<int> skip;
  double p = 1.0;
  double q = 1.0;
  int negatives = 5;
  double lr = 0.025;
  int epochs = 5;
  /// Defaults to hierarchical softmax for DeepWalk, negative sampling otherwise.
  std::optional<SkipGramLoss> loss;
  int grarep_kmax = 3;
  SimilaritySpec hope_similarity = SimilaritySpec::jaccard();
  /// Full-batch gradient steps for LE/GF/GraRep/HOPE; 0 picks the method default.
  int iterations = 0;
  /// Step size for the factorization family; 0 picks 0.05 / max(1, max row sum of |S|).
  double factorization_lr = 0.0;
  /// Graph factorization pair set: every ordered pair (the matrix form) or only edges.
  bool gf_edges_only = false;
  std::uint64_t seed = 42;
  int workers = 1;
};

struct TrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> loss_trace;
  Index skipped_isolated = 0;
  std::size_t pair_count = 0;
};

/// Optional warm start (d x |V|) used by HARP.
EmbeddingTable train_shallow(const Graph& g, const ShallowConfig& config, TrainReport* report = nullptr,
                             const Matrix* init = nullptr);

/// Training pairs and frequencies for a walk or LINE method, exactly as train_shallow builds them.
SkipGramData skipgram_data(const Graph& g, const ShallowConfig& config, Index* skipped_isolated = nullptr);
SkipGramOptions skipgram_options(const ShallowConfig& config);

/// Z from the top-d eigenpairs of symmetric S; negative eigenvalues are clipped to zero.
EmbeddingTable closed_form_factorization(const SimilarityMatrix& s, int dim);
/// ||Z^T Z - S||_F^2.
double factorization_residual(const Matrix& z, const Matrix& s);

/// Full-batch gradient descent on sum_ij M_ij (z_i . z_j - S_ij)^2, M all ones unless `mask` is given.
/// lr <= 0 picks 0.05 / max(1, max row sum of |S|). Returns d x |V|.
Matrix factorize_gd(const Matrix& s, int dim, int iterations, double lr, std::uint64_t seed,
                    std::vector<double>* trace = nullptr, const Matrix* mask = nullptr);

}  // namespace grembed
