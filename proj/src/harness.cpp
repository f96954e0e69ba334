#include "grembed/harness.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>

#include "grembed/diff.hpp"
#include "grembed/error.hpp"
#include "grembed/rng.hpp"

namespace grembed {

namespace {

/// Runs fn(i) for i < count on up to `workers` threads; results must go to per-index slots.
template <typename Fn>
void for_each_seed(std::size_t count, int workers, Fn&& fn) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < count; i += threads) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

// Reports ---------------------------------------------------------------------------------

double EvalReport::metric(const std::string& name) const {
  for (const auto& [k, v] : metrics)
    if (k == name) return v;
  throw LookupError("report has no metric '" + name + "'");
}

std::vector<double> EvalReport::seed_values(const std::string& name) const {
  std::vector<double> out;
  for (const auto& row : per_seed)
    for (const auto& [k, v] : row)
      if (k == name) out.push_back(v);
  return out;
}

void EvalReport::set_metric(const std::string& name, double value) {
  for (auto& [k, v] : metrics)
    if (k == name) {
      v = value;
      return;
    }
  metrics.emplace_back(name, value);
}

void EvalReport::echo(const std::string& key, const std::string& value) {
  for (auto& [k, v] : config)
    if (k == key) {
      v = value;
      return;
    }
  config.emplace_back(key, value);
}

void write_report(const EvalReport& r, std::ostream& out) {
  auto check = [](const std::string& name, double v) {
    if (!std::isfinite(v)) throw NumericError("metric '" + name + "' is not finite");
  };
  out << "#version 1\n";
  out << "task\t" << r.task << '\n';
  out << "seeds\t";
  for (std::size_t i = 0; i < r.seeds.size(); ++i) out << (i ? "," : "") << r.seeds[i];
  out << '\n';
  for (const auto& [k, v] : r.metrics) {
    check(k, v);
    out << "metric." << k << '\t' << format_double(v) << '\n';
  }
  for (std::size_t i = 0; i < r.per_seed.size(); ++i)
    for (const auto& [k, v] : r.per_seed[i]) {
      check(k, v);
      out << "seed." << r.seeds.at(i) << '.' << k << '\t' << format_double(v) << '\n';
    }
  for (const auto& [k, v] : r.config) out << "config." << k << '\t' << v << '\n';
  if (r.wall_seconds >= 0.0) out << "wall_seconds\t" << format_double(r.wall_seconds) << '\n';
}

EvalReport read_report(std::istream& in) {
  EvalReport r;
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line) || line != "#version 1") throw ParseError("expected '#version 1'", 1);
  ++lineno;
  std::map<std::uint64_t, std::size_t> slot;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("expected 'key<TAB>value'", lineno);
    const std::string key = line.substr(0, tab), value = line.substr(tab + 1);
    auto number = [&] {
      try {
        return std::stod(value);
      } catch (const std::exception&) {
        throw ParseError("value of '" + key + "' is not a number", lineno);
      }
    };
    if (key == "task") {
      r.task = value;
    } else if (key == "seeds") {
      std::istringstream items(value);
      for (std::string s; std::getline(items, s, ',');) {
        slot[std::stoull(s)] = r.seeds.size();
        r.seeds.push_back(std::stoull(s));
      }
      r.per_seed.resize(r.seeds.size());
    } else if (key.rfind("metric.", 0) == 0) {
      r.metrics.emplace_back(key.substr(7), number());
    } else if (key.rfind("seed.", 0) == 0) {
      const auto dot = key.find('.', 5);
      if (dot == std::string::npos) throw ParseError("malformed per-seed key", lineno);
      const auto it = slot.find(std::stoull(key.substr(5, dot - 5)));
      if (it == slot.end()) throw ParseError("per-seed value for an unlisted seed", lineno);
      r.per_seed[it->second].emplace_back(key.substr(dot + 1), number());
    } else if (key.rfind("config.", 0) == 0) {
      r.config.emplace_back(key.substr(7), value);
    } else if (key == "wall_seconds") {
      r.wall_seconds = number();
    } else {
      throw ParseError("unknown report key '" + key + "'", lineno);
    }
  }
  return r;
}

std::string summarize(const EvalReport& r) {
  std::ostringstream os;
  os << r.task << ':';
  for (const auto& [k, v] : r.metrics) os << ' ' << k << '=' << v;
  if (!r.seeds.empty()) os << " (" << r.seeds.size() << (r.seeds.size() == 1 ? " seed)" : " seeds)");
  return os.str();
}

// Node classification -------------------------------------------------------------------------

std::vector<char> stratified_split(std::span<const int> labels, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ContractError("train fraction must lie in (0, 1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t v = 0; v < labels.size(); ++v)
    if (labels[v] >= 0) by_class[labels[v]].push_back(v);
  Rng rng(seed);
  std::vector<char> train(labels.size(), 0);
  for (auto& [c, members] : by_class) {
    shuffle(members, rng);
    const double want = train_fraction * static_cast<double>(members.size());
    auto take = static_cast<std::size_t>(std::floor(want));
    if (uniform01(rng) < want - std::floor(want)) ++take;
    for (std::size_t i = 0; i < take; ++i) train[members[i]] = 1;
  }
  return train;
}

std::vector<int> LogisticRegression::predict(const Matrix& x) const {
  if (x.rows() + 1 != weights.rows()) throw ShapeError("feature width does not match the model");
  const Matrix scores = (x.transpose() * weights.topRows(x.rows())).rowwise() + weights.bottomRows(1).row(0);
  std::vector<int> out(static_cast<std::size_t>(x.cols()));
  for (Index i = 0; i < scores.rows(); ++i) {
    Index best;
    scores.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

LogisticRegression fit_logistic(const Matrix& x, std::span<const int> labels, int classes, const LogisticOptions& o) {
  if (static_cast<Index>(labels.size()) != x.cols()) throw ShapeError("one label per column required");
  if (classes < 2) throw ValidationError("logistic regression needs at least two classes");
  if (x.cols() == 0) throw ContractError("logistic regression needs training samples");
  const Index n = x.cols(), d = x.rows();
  Matrix features(n, d + 1);
  features.leftCols(d) = x.transpose();
  features.col(d).setOnes();
  Matrix pick = Matrix::Zero(n, classes);
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= classes) throw ValidationError("label " + std::to_string(y) + " outside the class set");
    pick(i, y) = 1.0;
  }
  Matrix penalty_mask = Matrix::Ones(d + 1, classes);
  penalty_mask.row(d).setZero();

  diff::Parameter w(Matrix::Zero(d + 1, classes));
  diff::Optimizer opt({.kind = diff::OptimizerConfig::Kind::adam, .lr = o.lr}, {&w});
  for (int it = 0; it < o.iterations; ++it) {
    diff::Tape tape;
    const diff::Var wv = tape.parameter(w);
    const diff::Var logp = diff::log(diff::softmax_rows(diff::matmul(tape.constant(features), wv)));
    diff::Var loss = (-1.0 / static_cast<double>(n)) * diff::reduce_sum(diff::mul(logp, tape.constant(pick)));
    if (o.l2 > 0.0) loss = loss + o.l2 * diff::reduce_sum(diff::square(diff::mul(wv, tape.constant(penalty_mask))));
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
  }
  return {w.value, classes};
}

double accuracy(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw ShapeError("label sequences differ in length");
  if (truth.empty()) throw ContractError("accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == predicted[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double macro_f1(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw ShapeError("label sequences differ in length");
  if (truth.empty()) throw ContractError("F1 of an empty set");
  std::set<int> classes(truth.begin(), truth.end());
  classes.insert(predicted.begin(), predicted.end());
  double total = 0.0;
  for (int c : classes) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      tp += truth[i] == c && predicted[i] == c;
      fp += truth[i] != c && predicted[i] == c;
      fn += truth[i] == c && predicted[i] != c;
    }
    total += tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
  }
  return total / static_cast<double>(classes.size());
}

EvalReport node_classification_eval(const Matrix& z, std::span<const int> labels, const NodeClassificationOptions& o) {
  if (static_cast<Index>(labels.size()) != z.cols()) throw ShapeError("one label per embedding column required");
  std::set<int> present;
  for (int y : labels)
    if (y >= 0) present.insert(y);
  if (present.size() < 2) throw ValidationError("node classification needs at least two classes");
  if (o.seeds.empty()) throw ContractError("at least one seed is required");
  const int classes = *present.rbegin() + 1;

  EvalReport report;
  report.task = "node_classification";
  report.seeds = o.seeds;
  report.per_seed.resize(o.seeds.size());
  for_each_seed(o.seeds.size(), o.workers, [&](std::size_t s) {
    std::vector<char> train;
    int attempt = 0;
    for (;; ++attempt) {
      if (attempt == 10) throw ValidationError("no split with every class in training after 10 attempts");
      train = stratified_split(labels, o.train_fraction, attempt == 0 ? o.seeds[s] : derive_seed(o.seeds[s], attempt));
      std::set<int> seen;
      for (std::size_t v = 0; v < labels.size(); ++v)
        if (train[v]) seen.insert(labels[v]);
      if (seen == present) break;
    }
    std::vector<Index> tr, te;
    for (std::size_t v = 0; v < labels.size(); ++v)
      if (labels[v] >= 0) (train[v] ? tr : te).push_back(static_cast<Index>(v));
    if (te.empty()) throw ConfigError("the split leaves no evaluation nodes");
    auto take = [&](const std::vector<Index>& idx, Matrix& x, std::vector<int>& y) {
      x.resize(z.rows(), static_cast<Index>(idx.size()));
      for (std::size_t i = 0; i < idx.size(); ++i) {
        x.col(static_cast<Index>(i)) = z.col(idx[i]);
        y.push_back(labels[static_cast<std::size_t>(idx[i])]);
      }
    };
    Matrix xtr, xte;
    std::vector<int> ytr, yte;
    take(tr, xtr, ytr);
    take(te, xte, yte);
    const LogisticRegression model = fit_logistic(xtr, ytr, classes, o.logistic);
    const std::vector<int> pred = model.predict(xte);
    report.per_seed[s] = {{"accuracy", accuracy(yte, pred)},
                          {"macro_f1", macro_f1(yte, pred)},
                          {"train_nodes", static_cast<double>(tr.size())},
                          {"split_attempts", static_cast<double>(attempt + 1)}};
  });
  const auto acc = report.seed_values("accuracy"), f1 = report.seed_values("macro_f1");
  report.set_metric("accuracy", mean_of(acc));
  report.set_metric("accuracy_std", std_of(acc));
  report.set_metric("macro_f1", mean_of(f1));
  report.echo("train_fraction", format_double(o.train_fraction));
  report.echo("classes", std::to_string(present.size()));
  report.echo("nodes", std::to_string(z.cols()));
  return report;
}

// Link prediction -------------------------------------------------------------------------------

HoldoutSplit holdout_edges(const Graph& g, double fraction, std::uint64_t seed) {
  if (g.directed()) throw UnsupportedError("edge hold-out needs an undirected graph");
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("hold-out fraction must lie in (0, 1)");
  std::vector<NodePair> edges;
  for (NodeIndex u = 0; u < g.node_count(); ++u)
    for (NodeIndex v : g.neighbors(u))
      if (u < v) edges.emplace_back(u, v);
  const auto target = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(edges.size())));
  if (target == 0) throw ConfigError("hold-out fraction removes no edges");

  Rng rng(seed);
  std::vector<NodePair> order = edges;
  shuffle(order, rng);
  std::vector<Index> degree(static_cast<std::size_t>(g.node_count()));
  for (NodeIndex v = 0; v < g.node_count(); ++v) degree[static_cast<std::size_t>(v)] = g.degree(v) - (g.has_edge(v, v) ? 1 : 0);
  std::set<NodePair> removed;
  HoldoutSplit split;
  for (const auto& [u, v] : order) {
    if (split.positives.size() == target) break;
    auto& du = degree[static_cast<std::size_t>(u)];
    auto& dv = degree[static_cast<std::size_t>(v)];
    if (du <= 1 || dv <= 1) continue;
    --du;
    --dv;
    removed.insert({u, v});
    split.positives.emplace_back(u, v);
  }
  if (split.positives.size() < target)
    throw ConfigError("only " + std::to_string(split.positives.size()) + " of " + std::to_string(target) +
                      " edges can be held out without isolating a node");

  const auto n = static_cast<std::size_t>(g.node_count());
  const std::size_t non_edges = n * (n - 1) / 2 - edges.size();
  if (non_edges < target) throw ConfigError("not enough non-edges to match the held-out edges");
  std::set<NodePair> chosen;
  while (split.negatives.size() < target) {
    auto u = static_cast<NodeIndex>(uniform_index(rng, n)), v = static_cast<NodeIndex>(uniform_index(rng, n));
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    if (g.has_edge(u, v) || !chosen.insert({u, v}).second) continue;
    split.negatives.emplace_back(u, v);
  }

  GraphBuilder b({.directed = false, .weighted = g.weighted(), .self_loops = true});
  for (NodeIndex v = 0; v < g.node_count(); ++v) b.add_node(g.node_id(v));
  for (NodeIndex u = 0; u < g.node_count(); ++u) {
    const auto nb = g.neighbors(u);
    const auto w = g.neighbor_weights(u);
    const auto types = g.neighbor_edge_types(u);
    for (std::size_t k = 0; k < nb.size(); ++k)
      if (u <= nb[k] && !removed.count({u, nb[k]})) b.add_edge(u, nb[k], w[k], types.empty() ? -1 : types[k]);
  }
  split.residual = b.build();
  if (g.has_attributes()) split.residual = split.residual.with_attributes(g.attributes());
  return split;
}

double auc(std::span<const double> positive, std::span<const double> negative) {
  if (positive.empty() || negative.empty()) throw ContractError("AUC needs positive and negative scores");
  std::vector<std::pair<double, bool>> all;
  for (double s : positive) all.emplace_back(s, true);
  for (double s : negative) all.emplace_back(s, false);
  for (const auto& [s, _] : all)
    if (std::isnan(s)) throw NumericError("AUC score is NaN");
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (all[k].second) rank_sum += mid;
    i = j;
  }
  const auto p = static_cast<double>(positive.size()), q = static_cast<double>(negative.size());
  return (rank_sum - p * (p + 1) / 2) / (p * q);
}

EvalReport link_prediction_eval(const Graph& g, const EmbedFn& embed, const LinkPredictionOptions& o) {
  if (o.seeds.empty()) throw ContractError("at least one seed is required");
  if (o.decoder == DecoderKind::bilinear) throw ConfigError("link scoring does not support the bilinear decoder");
  EvalReport report;
  report.task = "link_prediction";
  report.seeds = o.seeds;
  report.per_seed.resize(o.seeds.size());
  for_each_seed(o.seeds.size(), o.workers, [&](std::size_t s) {
    const std::uint64_t seed = o.seeds[s];
    const HoldoutSplit split = holdout_edges(g, o.holdout_fraction, seed);
    const EmbeddingTable table = embed(split.residual, seed);
    std::vector<Index> column(static_cast<std::size_t>(g.node_count()));
    for (NodeIndex v = 0; v < g.node_count(); ++v) column[static_cast<std::size_t>(v)] = table.index_of(g.node_id(v));
    auto col = [&](NodeIndex v) { return column[static_cast<std::size_t>(v)]; };

    std::function<double(NodeIndex, NodeIndex)> score;
    LogisticRegression model;
    if (o.hadamard) {
      // Residual edges against fresh non-edges that avoid the evaluation negatives.
      std::set<NodePair> avoid(split.negatives.begin(), split.negatives.end());
      std::vector<NodePair> pos, neg;
      for (NodeIndex u = 0; u < g.node_count(); ++u)
        for (NodeIndex v : split.residual.neighbors(u))
          if (u < v) pos.emplace_back(u, v);
      Rng rng(derive_seed(seed, 1));
      const auto n = static_cast<std::size_t>(g.node_count());
      for (std::size_t tries = 0; neg.size() < pos.size() && tries < 100 * pos.size() + 1000; ++tries) {
        auto u = static_cast<NodeIndex>(uniform_index(rng, n)), v = static_cast<NodeIndex>(uniform_index(rng, n));
        if (u == v) continue;
        if (u > v) std::swap(u, v);
        if (g.has_edge(u, v) || avoid.count({u, v})) continue;
        avoid.insert({u, v});
        neg.emplace_back(u, v);
      }
      Matrix x(table.dim(), static_cast<Index>(pos.size() + neg.size()));
      std::vector<int> y;
      Index c = 0;
      for (const auto* list : {&pos, &neg})
        for (const auto& [u, v] : *list) {
          x.col(c++) = table.z.col(col(u)).cwiseProduct(table.z.col(col(v)));
          y.push_back(list == &pos ? 1 : 0);
        }
      model = fit_logistic(x, y, 2);
      score = [&](NodeIndex u, NodeIndex v) {
        const Vector f = table.z.col(col(u)).cwiseProduct(table.z.col(col(v)));
        const Vector diff = model.weights.col(1) - model.weights.col(0);
        return f.dot(diff.head(f.size())) + diff(f.size());
      };
    } else {
      score = [&](NodeIndex u, NodeIndex v) {
        const double d = decode(o.decoder, table.z, col(u), col(v));
        return o.decoder == DecoderKind::sq_distance ? -d : d;
      };
    }
    std::vector<double> ps, ns;
    for (const auto& [u, v] : split.positives) ps.push_back(score(u, v));
    for (const auto& [u, v] : split.negatives) ns.push_back(score(u, v));
    report.per_seed[s] = {{"auc", auc(ps, ns)}, {"held_out", static_cast<double>(ps.size())}};
  });
  const auto a = report.seed_values("auc");
  report.set_metric("auc", mean_of(a));
  report.set_metric("auc_std", std_of(a));
  report.echo("holdout_fraction", format_double(o.holdout_fraction));
  report.echo("scoring", o.hadamard ? "hadamard_logistic" : "decoder");
  return report;
}

// Clustering ------------------------------------------------------------------------------------

KMeansResult kmeans(const Matrix& z, int k, std::uint64_t seed, int restarts, int max_iters) {
  const Index n = z.cols();
  if (k < 1 || k > n) throw ContractError("k-means needs 1 <= k <= number of points");
  if (restarts < 1) throw ContractError("k-means needs at least one restart");

  auto assign = [&](const Matrix& centers, std::vector<int>& a) {
    double inertia = 0.0;
    for (Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int c = 0; c < k; ++c) {
        const double d = (z.col(i) - centers.col(c)).squaredNorm();
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      a[static_cast<std::size_t>(i)] = arg;
      inertia += best;
    }
    return inertia;
  };

  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    Matrix centers(z.rows(), k);
    centers.col(0) = z.col(static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(n))));
    std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    for (int c = 1; c < k; ++c) {
      double total = 0.0;
      for (Index i = 0; i < n; ++i) {
        auto& di = d2[static_cast<std::size_t>(i)];
        di = std::min(di, (z.col(i) - centers.col(c - 1)).squaredNorm());
        total += di;
      }
      Index pick = static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(n)));
      if (total > 0.0) {
        double u = uniform01(rng) * total;
        for (pick = 0; pick + 1 < n; ++pick) {
          u -= d2[static_cast<std::size_t>(pick)];
          if (u < 0.0) break;
        }
      }
      centers.col(c) = z.col(pick);
    }

    std::vector<int> a(static_cast<std::size_t>(n), -1), prev;
    double inertia = 0.0;
    for (int it = 0; it < max_iters; ++it) {
      prev = a;
      inertia = assign(centers, a);
      if (a == prev) break;
      Matrix sums = Matrix::Zero(z.rows(), k);
      std::vector<Index> counts(static_cast<std::size_t>(k), 0);
      for (Index i = 0; i < n; ++i) {
        sums.col(a[static_cast<std::size_t>(i)]) += z.col(i);
        ++counts[static_cast<std::size_t>(a[static_cast<std::size_t>(i)])];
      }
      for (int c = 0; c < k; ++c)
        if (counts[static_cast<std::size_t>(c)] > 0) centers.col(c) = sums.col(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
    if (inertia < best.inertia) best = {a, centers, inertia};
  }
  return best;
}

double normalized_mutual_information(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ShapeError("label sequences differ in length");
  if (a.empty()) throw ContractError("NMI of an empty set");
  const auto n = static_cast<double>(a.size());
  std::map<int, double> pa, pb;
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pa[a[i]] += 1;
    pb[b[i]] += 1;
    joint[{a[i], b[i]}] += 1;
  }
  auto entropy = [&](const std::map<int, double>& p) {
    double h = 0.0;
    for (const auto& [_, c] : p) h -= c / n * std::log(c / n);
    return h;
  };
  const double ha = entropy(pa), hb = entropy(pb);
  if (ha + hb == 0.0) return 1.0;
  double mi = 0.0;
  for (const auto& [key, c] : joint) mi += c / n * std::log(c * n / (pa[key.first] * pb[key.second]));
  return std::clamp(2.0 * mi / (ha + hb), 0.0, 1.0);
}

EvalReport clustering_eval(const Matrix& z, std::span<const int> labels, int k, std::uint64_t seed) {
  if (static_cast<Index>(labels.size()) != z.cols()) throw ShapeError("one label per embedding column required");
  if (k < 2) throw ContractError("clustering needs k >= 2");
  if (k > z.cols()) throw ContractError("k exceeds the number of nodes");
  const KMeansResult km = kmeans(z, k, seed);
  std::vector<int> truth, found;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) {
      truth.push_back(labels[i]);
      found.push_back(km.assignment[i]);
    }
  if (truth.empty()) throw ValidationError("clustering evaluation needs labeled nodes");
  EvalReport report;
  report.task = "clustering";
  report.seeds = {seed};
  const double nmi = normalized_mutual_information(truth, found);
  report.per_seed = {{{"nmi", nmi}, {"inertia", km.inertia}}};
  report.set_metric("nmi", nmi);
  report.set_metric("inertia", km.inertia);
  report.echo("k", std::to_string(k));
  report.echo("restarts", "10");
  return report;
}

// Projection ------------------------------------------------------------------------------------

Projection export_projection(const EmbeddingTable& table, int dims) {
  const Index d = table.dim(), n = table.size();
  if (dims < 2 || dims > d) throw ContractError("projection needs 2 <= dims <= embedding dimension");
  if (n == 0) throw ContractError("nothing to project");
  Projection p;
  p.node_ids = table.node_ids;
  const Matrix x = table.z.transpose().rowwise() - table.z.transpose().colwise().mean();
  const Matrix cov = n > 1 ? Matrix(x.transpose() * x / static_cast<double>(n - 1)) : Matrix::Zero(d, d);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("covariance eigendecomposition failed");
  const Vector values = eig.eigenvalues().reverse();
  const Matrix vectors = eig.eigenvectors().rowwise().reverse();
  p.explained_variance = values.head(dims).cwiseMax(0.0);
  p.coords = Matrix::Zero(n, dims);
  const double scale = std::max(1.0, table.z.cwiseAbs2().colwise().sum().mean());
  if (values(0) <= 1e-12 * scale) {
    p.degenerate = true;
    p.explained_variance.setZero();
    return p;
  }
  for (int c = 0; c < dims; ++c) {
    if (values(c) < 1e-12 * values(0)) continue;
    Vector coord = x * vectors.col(c);
    Index arg;
    coord.cwiseAbs().maxCoeff(&arg);
    if (coord(arg) < 0) coord = -coord;
    p.coords.col(c) = coord;
  }
  return p;
}

void write_projection(const Projection& p, std::ostream& out) {
  const auto precision = out.precision(17);
  out << "node_id";
  static const char* names[] = {"x", "y", "z"};
  for (Index c = 0; c < p.coords.cols(); ++c) out << '\t' << (c < 3 ? std::string(names[c]) : "c" + std::to_string(c + 1));
  out << '\n';
  for (Index i = 0; i < p.coords.rows(); ++i) {
    out << p.node_ids[static_cast<std::size_t>(i)];
    for (Index c = 0; c < p.coords.cols(); ++c) out << '\t' << p.coords(i, c);
    out << '\n';
  }
  out.precision(precision);
}

std::pair<double, double> within_across_distances(const Matrix& coords, std::span<const int> groups) {
  if (static_cast<Index>(groups.size()) != coords.rows()) throw ShapeError("one group per row required");
  double within = 0, across = 0;
  std::size_t nw = 0, na = 0;
  for (Index i = 0; i < coords.rows(); ++i)
    for (Index j = i + 1; j < coords.rows(); ++j) {
      const double dist = (coords.row(i) - coords.row(j)).norm();
      if (groups[static_cast<std::size_t>(i)] == groups[static_cast<std::size_t>(j)]) {
        within += dist;
        ++nw;
      } else {
        across += dist;
        ++na;
      }
    }
  if (nw == 0 || na == 0) throw ContractError("need pairs both within and across groups");
  return {within / static_cast<double>(nw), across / static_cast<double>(na)};
}

}  // namespace grembed
