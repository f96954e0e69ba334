#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "grembed/aggenc.hpp"
#include "grembed/autoenc.hpp"
#include "grembed/error.hpp"
#include "grembed/harness.hpp"
#include "grembed/multiscale.hpp"
#include "grembed/shallow.hpp"
#include "grembed/structural.hpp"
#include "grembed/subgraph.hpp"
#include "grembed/walks.hpp"

namespace grembed {
namespace {

namespace fs = std::filesystem;

// Options excluded from the config echo so that reports do not depend on where outputs go.
const std::set<std::string> kUnechoed{"help", "config", "report", "out", "out-dir"};

struct Common {
  std::uint64_t seed = 42;
  bool deterministic = false;
  int workers = 1;
  std::string report_path;
};

struct GraphInput {
  std::string path;
  LoadOptions load;
  std::string attributes;

  Graph load_graph() const {
    Graph g = load_edge_list_file(path, load);
    if (attributes.empty()) return g;
    std::ifstream in(attributes);
    if (!in) throw ResourceError("cannot open attribute file: " + attributes);
    return load_attributes(g, in);
  }
};

struct ShallowFlags {
  std::string method = "deepwalk";
  ShallowConfig config;
  std::string loss;
  std::optional<int> epochs;
  std::optional<double> lr;

  ShallowConfig resolve(std::uint64_t seed) const {
    ShallowConfig c = config;
    c.method = parse_method(method);
    c.seed = seed;
    if (epochs) c.epochs = *epochs;
    if (lr) c.lr = *lr;
    if (loss == "ns")
      c.loss = SkipGramLoss::negative_sampling;
    else if (loss == "hs")
      c.loss = SkipGramLoss::hierarchical_softmax;
    else if (!loss.empty())
      throw ConfigError("unknown loss: " + loss);
    return c;
  }
};

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ResourceError("cannot write " + path);
  return out;
}

std::string number(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Random seed")->envname("GREMBED_SEED");
  sub->add_flag("--deterministic", c.deterministic, "Single-threaded run; omits wall time from the report");
  sub->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--report", c.report_path, "Report file (default: stdout)");
}

void add_graph_input(CLI::App* sub, GraphInput& in, bool attributes = false) {
  sub->add_option("--input", in.path, "Edge list")->required()->check(CLI::ExistingFile);
  sub->add_flag("--directed", in.load.directed);
  sub->add_flag("--weighted", in.load.weighted);
  sub->add_flag("--self-loops", in.load.self_loops);
  if (attributes) sub->add_option("--attributes", in.attributes, "Node attribute file")->check(CLI::ExistingFile);
}

void add_shallow(CLI::App* sub, ShallowFlags& f) {
  ShallowConfig& c = f.config;
  sub->add_option("--method", f.method, "Shallow method");
  sub->add_option("--dim", c.dim)->check(CLI::PositiveNumber);
  sub->add_option("--walk-length", c.walk_length);
  sub->add_option("--walks-per-node", c.walks_per_node);
  sub->add_option("--window", c.window);
  sub->add_option("--p", c.p);
  sub->add_option("--q", c.q);
  sub->add_option("--negatives", c.negatives);
  sub->add_option("--loss", f.loss, "Skip-gram loss: ns or hs")->check(CLI::IsMember({"ns", "hs"}));
  sub->add_option("--epochs", f.epochs);
  sub->add_option("--lr", f.lr);
  sub->add_option("--grarep-kmax", c.grarep_kmax);
  sub->add_option("--iterations", c.iterations, "Gradient steps for the factorization methods");
}

void echo_options(const CLI::App* sub, EvalReport& report) {
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (kUnechoed.contains(name)) continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& results = opt->results();
      for (std::size_t i = 0; i < results.size(); ++i) value += (i ? "," : "") + results[i];
    }
    if (value.empty()) value = opt->get_default_str();
    if (value.empty()) continue;
    report.echo(name, value);
  }
}

std::vector<std::uint64_t> seed_list(std::uint64_t base, int count) {
  if (count < 1) throw ConfigError("--seeds must be at least 1");
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(count));
  std::iota(seeds.begin(), seeds.end(), base);
  return seeds;
}

std::vector<int> labels_for_table(const EmbeddingTable& table, const std::string& path) {
  GraphBuilder b;
  for (const auto& id : table.node_ids) b.add_node(id);
  return load_labels_file(b.build(), path);
}

void add_train_report(EvalReport& r, const TrainReport& t, const std::string& prefix = "") {
  r.set_metric(prefix + "initial_loss", t.initial_loss);
  r.set_metric(prefix + "final_loss", t.final_loss);
}

// Subcommands ---------------------------------------------------------------------------------

struct EmbedArgs {
  GraphInput input;
  ShallowFlags shallow;
  int hidden = 0;
  std::string out;
};

EvalReport run_embed(const EmbedArgs& a, const Common& c) {
  const Graph g = a.input.load_graph();
  const std::string& m = a.shallow.method;
  ShallowConfig base = a.shallow.config;
  EvalReport r;
  r.task = "embed";
  EmbeddingTable z;
  TrainReport t;
  if (m == "sdne" || m == "dngr") {
    AutoencoderConfig ac;
    ac.layer_dims = {g.node_count()};
    if (a.hidden > 0) ac.layer_dims.push_back(a.hidden);
    ac.layer_dims.push_back(base.dim);
    ac.similarity = m == "sdne" ? SimilaritySpec::adjacency()
                                : SimilaritySpec::rw_pmi(base.walk_length, base.walks_per_node, base.window, c.seed);
    if (m == "sdne") ac.le_weight = 1.0;
    if (a.shallow.epochs) ac.epochs = *a.shallow.epochs;
    if (a.shallow.lr) ac.lr = *a.shallow.lr;
    ac.seed = c.seed;
    z = train_autoencoder(g, ac, &t);
  } else if (m == "gcn" || m == "sage") {
    const Matrix x = g.has_attributes() ? g.attributes() : fallback_attributes(g, FallbackAttributes::one_hot);
    std::vector<Index> dims{x.rows()};
    if (a.hidden > 0) dims.push_back(a.hidden);
    dims.push_back(base.dim);
    AggConfig ag = m == "gcn" ? AggConfig::gcn(dims) : AggConfig::sage_mean(dims);
    ag.seed = c.seed;
    SupervisedConfig sc;
    sc.negatives = base.negatives;
    if (a.shallow.epochs) sc.epochs = *a.shallow.epochs;
    if (a.shallow.lr) sc.lr = *a.shallow.lr;
    sc.seed = c.seed;
    SupervisedModel model = train_unsupervised(g, x, ag, sc);
    z = encode_all(g, model.encoder, FallbackAttributes::one_hot);
    z.method = m;
    t = model.report;
  } else {
    ShallowConfig sc = a.shallow.resolve(c.seed);
    sc.workers = c.workers;
    z = train_shallow(g, sc, &t);
  }
  write_embeddings_file(z, a.out);
  add_train_report(r, t);
  r.set_metric("nodes", static_cast<double>(z.size()));
  r.set_metric("dim", static_cast<double>(z.dim()));
  return r;
}

struct WalkArgs {
  GraphInput input;
  std::string kind = "uniform";
  WalkConfig config;
  std::string types;
  std::string out;
};

EvalReport run_walk(const WalkArgs& a, const Common& c) {
  Graph g = a.input.load_graph();
  if (!a.types.empty()) g = g.with_node_types(load_labels_file(g, a.types));
  WalkConfig wc = a.config;
  wc.seed = c.seed;
  wc.workers = c.workers;
  WalkCorpus corpus;
  if (a.kind == "uniform")
    corpus = sample_uniform_walks(g, wc);
  else if (a.kind == "node2vec")
    corpus = sample_node2vec_walks(g, wc);
  else
    corpus = sample_metapath_walks(g, wc);
  auto out = open_output(a.out);
  write_corpus(corpus, out);
  EvalReport r;
  r.task = "walk";
  r.set_metric("walks", static_cast<double>(corpus.walks.size()));
  r.set_metric("skipped_isolated", static_cast<double>(corpus.skipped_isolated));
  r.set_metric("skipped_type", static_cast<double>(corpus.skipped_type));
  return r;
}

struct RolesArgs {
  GraphInput input;
  std::string method = "graphwave";
  std::vector<double> scales{0.5};
  bool psi = false;
  Struc2vecConfig struc2vec;
  std::string out;
};

// Columns equal within tol, grouped greedily in node order.
Index distinct_columns(const Matrix& m, double tol) {
  std::vector<Index> reps;
  for (Index v = 0; v < m.cols(); ++v) {
    bool found = false;
    for (Index u : reps)
      if ((m.col(u) - m.col(v)).cwiseAbs().maxCoeff() <= tol) {
        found = true;
        break;
      }
    if (!found) reps.push_back(v);
  }
  return static_cast<Index>(reps.size());
}

std::string scaled_path(const std::string& out, double scale) {
  fs::path p(out);
  return (p.parent_path() / (p.stem().string() + ".s" + number(scale) + p.extension().string())).string();
}

EvalReport run_roles(const RolesArgs& a, const Common& c) {
  const Graph g = a.input.load_graph();
  EvalReport r;
  r.task = "roles";
  if (a.method == "struc2vec") {
    Struc2vecConfig sc = a.struc2vec;
    sc.seed = c.seed;
    TrainReport t;
    write_embeddings_file(struc2vec_embed(g, sc, &t), a.out);
    add_train_report(r, t);
    return r;
  }
  if (a.scales.empty()) throw ConfigError("--scale needs at least one value");
  for (double s : a.scales) {
    if (!(s > 0.0)) throw ConfigError("--scale values must be positive");
    GraphWaveConfig gc;
    gc.scale = s;
    const EmbeddingTable z = graphwave_embed(g, gc, a.psi);
    write_embeddings_file(z, a.scales.size() == 1 ? a.out : scaled_path(a.out, s));
    const std::string suffix = a.scales.size() == 1 ? "" : ".s" + number(s);
    r.set_metric("classes" + suffix, static_cast<double>(distinct_columns(z.z, 1e-8)));
  }
  return r;
}

struct SubgraphArgs {
  std::string input;
  LoadOptions load;
  std::string encoder = "mpnn";
  std::string pool = "sum";
  SubgraphClassifierConfig config;
  int rounds = 2;
  Index state_dim = 8;
  std::string out;
};

EvalReport run_subgraph(const SubgraphArgs& a, const Common& c) {
  const GraphDataset data = read_graph_dataset_file(a.input, a.load);
  SubgraphClassifierConfig cfg = a.config;
  if (a.encoder == "mpnn")
    cfg.encoder = SubgraphEncoderKind::mpnn;
  else
    cfg.encoder = SubgraphEncoderKind::edge_message;
  cfg.pooling.kind = parse_pool_kind(a.pool);
  cfg.mpnn.rounds = a.rounds;
  cfg.mpnn.state_dim = a.state_dim;
  cfg.edge_message.rounds = a.rounds;
  cfg.edge_message.edge_dim = a.state_dim;
  cfg.edge_message.output_dim = a.state_dim;
  cfg.seed = c.seed;
  cfg.mpnn.seed = c.seed;
  cfg.edge_message.seed = c.seed;
  const std::vector<SubgraphSpec> specs = data.specs();
  const SubgraphTrainResult result = classify_subgraphs(specs, cfg);
  if (!a.out.empty()) {
    const std::vector<int> predicted = result.model.predict(specs);
    auto out = open_output(a.out);
    out << "graph_id\tlabel\tpredicted\n";
    for (std::size_t i = 0; i < specs.size(); ++i)
      out << data.ids[i] << '\t' << data.labels[i] << '\t' << predicted[i] << '\n';
  }
  EvalReport r;
  r.task = "subgraph";
  r.set_metric("train_accuracy", result.train_accuracy);
  r.set_metric("final_loss", result.loss_trace.empty() ? 0.0 : result.loss_trace.back());
  r.set_metric("graphs", static_cast<double>(data.size()));
  return r;
}

struct EvalNodesArgs {
  std::string embeddings;
  std::string labels;
  NodeClassificationOptions options;
  int seeds = 10;
};

EvalReport run_eval_nodes(const EvalNodesArgs& a, const Common& c) {
  const EmbeddingTable z = read_embeddings_file(a.embeddings);
  const std::vector<int> labels = labels_for_table(z, a.labels);
  NodeClassificationOptions o = a.options;
  o.seeds = seed_list(c.seed, a.seeds);
  o.workers = c.workers;
  return node_classification_eval(z.z, labels, o);
}

struct EvalLinksArgs {
  GraphInput input;
  ShallowFlags shallow;
  LinkPredictionOptions options;
  std::string decoder = "inner_product";
  int seeds = 10;
};

EvalReport run_eval_links(const EvalLinksArgs& a, const Common& c) {
  const Graph g = a.input.load_graph();
  const ShallowConfig base = a.shallow.resolve(c.seed);
  LinkPredictionOptions o = a.options;
  o.decoder = parse_decoder(a.decoder);
  o.seeds = seed_list(c.seed, a.seeds);
  o.workers = c.workers;
  const EmbedFn embed = [&base](const Graph& residual, std::uint64_t seed) {
    ShallowConfig sc = base;
    sc.seed = seed;
    return train_shallow(residual, sc);
  };
  return link_prediction_eval(g, embed, o);
}

struct EvalClusterArgs {
  std::string embeddings;
  std::string labels;
  int k = 0;
};

EvalReport run_eval_cluster(const EvalClusterArgs& a, const Common& c) {
  const EmbeddingTable z = read_embeddings_file(a.embeddings);
  const std::vector<int> labels = labels_for_table(z, a.labels);
  int k = a.k;
  if (k == 0) {
    std::set<int> present;
    for (int l : labels)
      if (l >= 0) present.insert(l);
    k = static_cast<int>(present.size());
  }
  return clustering_eval(z.z, labels, k, c.seed);
}

struct ProjectArgs {
  std::string embeddings;
  std::string labels;
  int dims = 2;
  std::string out;
};

EvalReport run_project(const ProjectArgs& a, const Common&) {
  const EmbeddingTable z = read_embeddings_file(a.embeddings);
  const Projection p = export_projection(z, a.dims);
  auto out = open_output(a.out);
  write_projection(p, out);
  EvalReport r;
  r.task = "project";
  for (Index i = 0; i < p.explained_variance.size(); ++i)
    r.set_metric("explained_variance." + std::to_string(i), p.explained_variance[i]);
  r.set_metric("degenerate", p.degenerate ? 1.0 : 0.0);
  if (p.degenerate) std::cerr << "warning: embeddings have no variance; projection is all zeros\n";
  if (!a.labels.empty()) {
    const auto [within, across] = within_across_distances(p.coords, labels_for_table(z, a.labels));
    r.set_metric("within_distance", within);
    r.set_metric("across_distance", across);
  }
  return r;
}

struct HarpArgs {
  GraphInput input;
  ShallowFlags shallow;
  int levels = 1;
  std::string out;
};

EvalReport run_harp(const HarpArgs& a, const Common& c) {
  const Graph g = a.input.load_graph();
  ShallowConfig sc = a.shallow.resolve(c.seed);
  sc.workers = c.workers;
  HarpReport hr;
  write_embeddings_file(harp_train(g, sc, a.levels, &hr), a.out);
  EvalReport r;
  r.task = "harp";
  r.set_metric("levels", static_cast<double>(hr.levels.size()));
  for (std::size_t l = 0; l < hr.levels.size(); ++l) {
    const std::string prefix = "level" + std::to_string(l) + ".";
    r.set_metric(prefix + "nodes", static_cast<double>(hr.node_counts[l]));
    add_train_report(r, hr.levels[l], prefix);
  }
  return r;
}

struct OhmnetArgs {
  std::string hierarchy;
  LoadOptions load;
  ShallowFlags shallow;
  double lambda = 1.0;
  bool unsquared = false;
  std::string out_dir;
};

EvalReport run_ohmnet(const OhmnetArgs& a, const Common& c) {
  const LayerHierarchy h = load_hierarchy_file(a.hierarchy, a.load);
  OhmnetConfig oc;
  oc.base = a.shallow.resolve(c.seed);
  oc.lambda = a.lambda;
  oc.squared = !a.unsquared;
  const OhmnetResult result = ohmnet_train(h, oc);
  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  if (ec) throw ResourceError("cannot create " + a.out_dir + ": " + ec.message());
  EvalReport r;
  r.task = "ohmnet";
  r.set_metric("gap", result.gap);
  for (std::size_t l = 0; l < h.size(); ++l) {
    write_embeddings_file(result.layers[l], (fs::path(a.out_dir) / (h.names[l] + ".tsv")).string());
    add_train_report(r, result.reports[l], h.names[l] + ".");
  }
  return r;
}

int usage_error(const CLI::App& app, const CLI::ParseError& e) {
  const CLI::App* target = &app;
  for (const CLI::App* sub : app.get_subcommands()) target = sub;
  std::cerr << "error: " << e.what() << "\n\n" << target->help();
  return 2;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  const auto start = std::chrono::steady_clock::now();
  CLI::App app{"Graph representation learning toolkit", "grembed"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Config file; [subcommand] sections, flags win");
  app.get_formatter()->column_width(32);

  Common common;
  std::function<EvalReport()> run;
  auto bind = [&](CLI::App* sub, auto& args, auto fn) {
    add_common(sub, common);
    sub->callback([&run, &args, &common, fn] { run = [&args, &common, fn] { return fn(args, common); }; });
  };

  EmbedArgs embed;
  CLI::App* s = app.add_subcommand("embed", "Train node embeddings");
  add_graph_input(s, embed.input, true);
  add_shallow(s, embed.shallow);
  s->get_option("--method")->description("deepwalk, node2vec, line1, line2, le, gf, grarep, hope, sdne, dngr, gcn, sage");
  s->add_option("--hidden", embed.hidden, "Hidden width for sdne, dngr, gcn and sage (0: none)");
  s->add_option("--out", embed.out, "Embedding TSV")->required();
  bind(s, embed, run_embed);

  WalkArgs walk;
  s = app.add_subcommand("walk", "Sample a random-walk corpus");
  add_graph_input(s, walk.input);
  s->add_option("--kind", walk.kind)->check(CLI::IsMember({"uniform", "node2vec", "metapath"}));
  s->add_option("--length", walk.config.length);
  s->add_option("--walks-per-node", walk.config.walks_per_node);
  s->add_option("--p", walk.config.p);
  s->add_option("--q", walk.config.q);
  s->add_option("--metapath", walk.config.metapath, "Node types, comma separated")->delimiter(',');
  s->add_option("--types", walk.types, "Node type file (id, type)")->check(CLI::ExistingFile);
  s->add_option("--out", walk.out, "Corpus file")->required();
  bind(s, walk, run_walk);

  RolesArgs roles;
  s = app.add_subcommand("roles", "Structural role embeddings");
  add_graph_input(s, roles.input);
  s->add_option("--method", roles.method)->check(CLI::IsMember({"graphwave", "struc2vec"}));
  s->add_option("--scale", roles.scales, "Heat-kernel scales, comma separated")->delimiter(',');
  s->add_flag("--psi", roles.psi, "Append the wavelet coefficients");
  s->add_option("--k-max", roles.struc2vec.k_max);
  s->add_option("--layer-change", roles.struc2vec.layer_change);
  s->add_option("--dim", roles.struc2vec.dim);
  s->add_option("--walk-length", roles.struc2vec.walk_length);
  s->add_option("--walks-per-node", roles.struc2vec.walks_per_node);
  s->add_option("--window", roles.struc2vec.window);
  s->add_option("--negatives", roles.struc2vec.negatives);
  s->add_option("--lr", roles.struc2vec.lr);
  s->add_option("--epochs", roles.struc2vec.epochs);
  s->add_option("--out", roles.out, "Embedding TSV")->required();
  bind(s, roles, run_roles);

  SubgraphArgs sg;
  s = app.add_subcommand("subgraph", "Train a graph classifier on a dataset file");
  s->add_option("--input", sg.input, "Graph dataset")->required()->check(CLI::ExistingFile);
  s->add_flag("--weighted", sg.load.weighted);
  s->add_option("--encoder", sg.encoder)->check(CLI::IsMember({"mpnn", "edge_message"}));
  s->add_option("--pool", sg.pool, "sum, fuzzy_histogram, ordered_concat, coarsen_maxpool, supernode, constant");
  s->add_option("--bins", sg.config.pooling.bins);
  s->add_option("--m", sg.config.pooling.m, "ordered_concat width");
  s->add_option("--levels", sg.config.pooling.levels, "coarsen_maxpool levels");
  s->add_option("--rounds", sg.rounds);
  s->add_option("--state-dim", sg.state_dim);
  s->add_option("--epochs", sg.config.epochs);
  s->add_option("--lr", sg.config.lr);
  s->add_option("--out", sg.out, "Prediction TSV");
  bind(s, sg, run_subgraph);

  EvalNodesArgs en;
  s = app.add_subcommand("eval-nodes", "Node classification with logistic regression");
  s->add_option("--embeddings", en.embeddings)->required()->check(CLI::ExistingFile);
  s->add_option("--labels", en.labels)->required()->check(CLI::ExistingFile);
  s->add_option("--train-fraction", en.options.train_fraction)->check(CLI::Range(0.0, 1.0));
  s->add_option("--seeds", en.seeds, "Number of splits (seeds seed, seed+1, ...)");
  s->add_option("--l2", en.options.logistic.l2);
  s->add_option("--iterations", en.options.logistic.iterations);
  bind(s, en, run_eval_nodes);

  EvalLinksArgs el;
  s = app.add_subcommand("eval-links", "Link prediction on held-out edges");
  add_graph_input(s, el.input);
  add_shallow(s, el.shallow);
  s->add_option("--holdout", el.options.holdout_fraction)->check(CLI::Range(0.0, 1.0));
  s->add_option("--seeds", el.seeds, "Number of splits (seeds seed, seed+1, ...)");
  s->add_option("--decoder", el.decoder);
  s->add_flag("--hadamard", el.options.hadamard, "Logistic regression on Hadamard pair features");
  bind(s, el, run_eval_links);

  EvalClusterArgs ec;
  s = app.add_subcommand("eval-cluster", "k-means clustering scored by NMI");
  s->add_option("--embeddings", ec.embeddings)->required()->check(CLI::ExistingFile);
  s->add_option("--labels", ec.labels)->required()->check(CLI::ExistingFile);
  s->add_option("--k", ec.k, "Clusters (0: number of label classes)");
  bind(s, ec, run_eval_cluster);

  ProjectArgs pr;
  s = app.add_subcommand("project", "PCA projection for plotting");
  s->add_option("--embeddings", pr.embeddings)->required()->check(CLI::ExistingFile);
  s->add_option("--labels", pr.labels, "Optional groups for distance summaries")->check(CLI::ExistingFile);
  s->add_option("--dims", pr.dims);
  s->add_option("--out", pr.out, "Projection TSV")->required();
  bind(s, pr, run_project);

  HarpArgs harp;
  s = app.add_subcommand("harp", "Multilevel training from coarsened graphs");
  add_graph_input(s, harp.input);
  add_shallow(s, harp.shallow);
  s->add_option("--levels", harp.levels);
  s->add_option("--out", harp.out, "Embedding TSV")->required();
  bind(s, harp, run_harp);

  OhmnetArgs oh;
  s = app.add_subcommand("ohmnet", "Tied embeddings over a layer hierarchy");
  s->add_option("--hierarchy", oh.hierarchy)->required()->check(CLI::ExistingFile);
  s->add_flag("--directed", oh.load.directed);
  s->add_flag("--weighted", oh.load.weighted);
  add_shallow(s, oh.shallow);
  s->add_option("--lambda", oh.lambda);
  s->add_flag("--unsquared", oh.unsquared, "Unsquared distance penalty");
  s->add_option("--out-dir", oh.out_dir, "One embedding TSV per layer")->required();
  bind(s, oh, run_ohmnet);

  for (CLI::App* sub : app.get_subcommands([](CLI::App*) { return true; }))
    for (CLI::Option* opt : sub->get_options()) opt->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    for (const CLI::App* sub : app.get_subcommands()) target = sub;
    std::cout << target->help();
    return 0;
  } catch (const CLI::ParseError& e) {
    return usage_error(app, e);
  }

  try {
    if (common.deterministic && common.workers > 1)
      throw ConfigError("--workers > 1 cannot be combined with --deterministic");
    EvalReport report = run();
    const CLI::App* sub = app.get_subcommands().front();
    if (report.seeds.empty()) report.seeds = {common.seed};
    report.echo("command", sub->get_name());
    report.echo("seed", std::to_string(common.seed));
    echo_options(sub, report);
    if (!common.deterministic)
      report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (common.report_path.empty()) {
      write_report(report, std::cout);
      std::cout.flush();
    } else {
      auto out = open_output(common.report_path);
      write_report(report, out);
    }
    std::string summary = summarize(report);
    if (!summary.ends_with('\n')) summary += '\n';
    std::cerr << summary;
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ResourceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const UnsupportedError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const LookupError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace grembed
