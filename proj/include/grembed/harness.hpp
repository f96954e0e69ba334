#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "grembed/embedding.hpp"
#include "grembed/graph.hpp"

namespace grembed {

// Reports -----------------------------------------------------------------------------

struct EvalReport {
  std::string task;
  /// Summary metrics (means over seeds).
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::uint64_t> seeds;
  /// per_seed[i] holds the metrics of seeds[i].
  std::vector<std::vector<std::pair<std::string, double>>> per_seed;
  std::vector<std::pair<std::string, std::string>> config;
  /// Negative when not measured.
  double wall_seconds = -1.0;

  /// LookupError for unknown names.
  double metric(const std::string& name) const;
  std::vector<double> seed_values(const std::string& name) const;
  void set_metric(const std::string& name, double value);
  void echo(const std::string& key, const std::string& value);
};

/// `#version 1`, then `key<TAB>value` lines: task, seeds, metric.<m>, seed.<s>.<m>, config.<k> and
/// wall_seconds (only when measured). NumericError for non-finite metrics.
void write_report(const EvalReport& report, std::ostream& out);
EvalReport read_report(std::istream& in);
/// One line per summary metric, for people.
std::string summarize(const EvalReport& report);

// Node classification --------------------------------------------------------------------

/// Per class, floor(fraction * n_c) training nodes plus one more with probability equal to the
/// fractional part. Nodes with label < 0 are never used.
std::vector<char> stratified_split(std::span<const int> labels, double train_fraction, std::uint64_t seed);

struct LogisticRegression {
  /// (d + 1) x C; the last row is the bias.
  Matrix weights;
  int classes = 0;

  /// One label per column of x (d x n).
  std::vector<int> predict(const Matrix& x) const;
};

struct LogisticOptions {
  double l2 = 1e-4;
  int iterations = 500;
  double lr = 0.05;
};

/// Multinomial logistic regression on columns of x, full-batch Adam from zero weights. Labels
/// lie in [0, classes).
LogisticRegression fit_logistic(const Matrix& x, std::span<const int> labels, int classes, const LogisticOptions& options = {});

double accuracy(std::span<const int> truth, std::span<const int> predicted);
/// Mean F1 over the classes that occur in either sequence.
double macro_f1(std::span<const int> truth, std::span<const int> predicted);

struct NodeClassificationOptions {
  double train_fraction = 0.1;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  LogisticOptions logistic;
  /// Seeds evaluated concurrently.
  int workers = 1;
};

/// z is d x |V|; labels has one entry per column (-1 = unlabeled). A split whose training part
/// misses a class is redrawn from derive_seed(seed, attempt); ValidationError after 10 attempts.
EvalReport node_classification_eval(const Matrix& z, std::span<const int> labels, const NodeClassificationOptions& options = {});

// Link prediction ------------------------------------------------------------------------

struct HoldoutSplit {
  /// Same nodes, held-out edges removed.
  Graph residual;
  std::vector<NodePair> positives;
  /// Non-edges of the original graph, as many as positives.
  std::vector<NodePair> negatives;
};

/// Removes round(fraction * |E|) edges in random order, skipping any that would leave an endpoint
/// with degree 0. ConfigError when not enough edges can be removed or too few non-edges exist.
HoldoutSplit holdout_edges(const Graph& g, double fraction, std::uint64_t seed);

/// Rank-sum AUC with ties counted as one half.
double auc(std::span<const double> positive, std::span<const double> negative);

using EmbedFn = std::function<EmbeddingTable(const Graph& residual, std::uint64_t seed)>;

struct LinkPredictionOptions {
  double holdout_fraction = 0.2;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  /// Scores by the decoder; sq_distance is negated so larger means more likely.
  DecoderKind decoder = DecoderKind::inner_product;
  /// Logistic regression on z_u * z_v (elementwise) trained on residual edges and sampled non-edges.
  bool hadamard = false;
  int workers = 1;
};

EvalReport link_prediction_eval(const Graph& g, const EmbedFn& embed, const LinkPredictionOptions& options = {});

// Clustering -------------------------------------------------------------------------------

struct KMeansResult {
  std::vector<int> assignment;
  /// d x k.
  Matrix centers;
  double inertia = 0.0;
};

/// k-means++ seeding and Lloyd iterations, best of `restarts` by inertia. Distance ties go to the
/// lower cluster index. ContractError unless 1 <= k <= n.
KMeansResult kmeans(const Matrix& z, int k, std::uint64_t seed, int restarts = 10, int max_iters = 300);

/// 2 I(a; b) / (H(a) + H(b)); 1 when both entropies are zero.
double normalized_mutual_information(std::span<const int> a, std::span<const int> b);

EvalReport clustering_eval(const Matrix& z, std::span<const int> labels, int k, std::uint64_t seed = 42);

// Projection --------------------------------------------------------------------------------

struct Projection {
  std::vector<std::string> node_ids;
  /// n x dims.
  Matrix coords;
  Vector explained_variance;
  /// Set when the embeddings have no variance; coords are then zero.
  bool degenerate = false;
};

/// PCA on the embedding covariance. Each component's largest-magnitude coordinate is made
/// positive; components with eigenvalue below 1e-12 of the largest are zeroed. ContractError
/// unless 2 <= dims <= d.
Projection export_projection(const EmbeddingTable& z, int dims = 2);
/// Header `node_id<TAB>x<TAB>y...`, one row per node.
void write_projection(const Projection& p, std::ostream& out);

/// Mean pairwise Euclidean distance within and across groups of the rows of `coords`.
std::pair<double, double> within_across_distances(const Matrix& coords, std::span<const int> groups);

// CLI ---------------------------------------------------------------------------------------

/// Exit 0 on success, 2 on configuration or input errors, 3 on runtime failures.
int cli_main(int argc, const char* const* argv);

}  // namespace grembed
