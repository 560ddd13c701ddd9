// gnexplain: generate data, train, evaluate and explain graph networks.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <nlohmann/json.hpp>
#include <openssl/opensslv.h>

#include "gnx/gnx.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Records what a run read and wrote; serialized without timestamps.
class Manifest {
 public:
  Manifest(std::vector<std::string> argv, std::uint64_t seed) : argv_(std::move(argv)), seed_(seed) {}

  void input(const std::string& path) { inputs_[path] = gnx::sha256_hex(read_bytes(path)); }
  void input_text(const std::string& name, const std::string& text) { inputs_[name] = gnx::sha256_hex(text); }

  /// Writes an artifact and records its hash.
  void write(const std::string& path, const std::string& text) {
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    gnx::write_text_file(path, text);
    outputs_[path] = gnx::sha256_hex(text);
  }

  void note(const std::string& key, json value) { extra_[key] = std::move(value); }

  void save(const std::string& path) const {
    json j;
    j["command"] = argv_;
    j["seed"] = seed_;
    j["versions"] = {{"gnexplain", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                     {"openssl", OPENSSL_VERSION_TEXT}};
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    if (!extra_.empty()) j["details"] = extra_;
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    gnx::write_text_file(path, j.dump(2) + "\n");
  }

  static std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw gnx::DataError("cannot read " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

 private:
  std::vector<std::string> argv_;
  std::uint64_t seed_;
  std::map<std::string, std::string> inputs_, outputs_;
  json extra_ = json::object();
};

struct Options {
  std::uint64_t seed = 0;
  std::string out;
  int threads = 1;
  // data
  std::size_t count = 1000;
  std::size_t max_nodes = 30;
  bool heldout = false;
  std::string data, val, csv, model, graph;
  std::vector<std::string> smiles;
  std::string smiles_file;
  // training
  std::string pool;
  std::optional<std::size_t> layers, width, epochs;
  std::optional<double> lr, l1, dropout;
  // explanation
  std::size_t node = 0;
  std::string method = "lrp";
  std::string lrp_rule = "eps";
  double eps = 1e-16;
  double alpha = 1.0;
  bool signed_z = false;
  std::string maxpool_rule = "naive";
  double p = 2.0;
  double delta = 0.1;
  bool signed_sa = false;
  std::string svg, json_out, dot;
  bool feature_table = false;
};

std::string manifest_path(const Options& o) { return o.out.empty() ? "manifest.json" : (fs::path(o.out) / "manifest.json").string(); }

std::string artifact(const Options& o, const std::string& explicit_path, const std::string& name) {
  if (!explicit_path.empty()) return explicit_path;
  if (o.out.empty()) return {};
  return (fs::path(o.out) / name).string();
}

gnx::TrainConfig apply_overrides(gnx::TrainConfig c, const Options& o) {
  c.seed = o.seed;
  if (!o.pool.empty()) c.pool = gnx::parse_reduce(o.pool);
  if (o.layers) c.layers = *o.layers;
  if (o.width) c.width = *o.width;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.lr) c.lr = *o.lr;
  if (o.l1) c.l1_weight = *o.l1;
  if (o.dropout) c.dropout = *o.dropout;
  gnx::validate(c);
  return c;
}

json metrics_json(const gnx::Metrics& m) {
  json epochs = json::array();
  for (const gnx::EpochMetrics& e : m.epochs)
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", gnx::round9(e.train_loss)}, {"val_metric", gnx::round9(e.val_metric)}});
  return {{"epochs", epochs}, {"best_epoch", m.best_epoch}, {"best_val_metric", gnx::round9(m.best_val_metric)}};
}

void log_epoch(const gnx::EpochMetrics& e) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "epoch %zu  loss %.6f  val %.6f  (%.1fs)", e.epoch, e.train_loss, e.val_metric, e.seconds);
  std::cerr << buf << '\n';
}

gnx::MaxPoolStrategy pool_strategy(const Options& o) {
  gnx::MaxPoolStrategy s;
  if (o.maxpool_rule == "naive") s = gnx::NaivePool{};
  else if (o.maxpool_rule == "lp") s = gnx::LpNormPool{o.p};
  else if (o.maxpool_rule == "search") s = gnx::SearchPool{o.delta};
  else throw UsageError("unknown --maxpool-rule '" + o.maxpool_rule + "'");
  gnx::validate(s);
  return s;
}

gnx::Explanation explain(const gnx::GnModel& m, const gnx::Graph& g, const gnx::Target& t, const Options& o) {
  if (o.method == "sa") return gnx::sensitivity_analysis(m, g, t, o.signed_sa);
  if (o.method == "gbp") return gnx::guided_backprop(m, g, t);
  if (o.method != "lrp") throw UsageError("unknown --method '" + o.method + "'");
  gnx::BackwardMode rule;
  if (o.lrp_rule == "eps") rule = gnx::LrpEpsilon{o.eps, o.signed_z};
  else if (o.lrp_rule == "alphabeta") rule = gnx::LrpAlphaBeta{o.alpha, 1.0 - o.alpha};
  else throw UsageError("unknown --lrp-rule '" + o.lrp_rule + "'");
  gnx::validate(rule);
  return gnx::lrp(m, g, t, rule, pool_strategy(o));
}

/// Writes the requested renderings and prints a one-line summary.
void emit_explanation(const gnx::Graph& g, const gnx::Explanation& e, gnx::RenderSpec spec, const Options& o,
                      Manifest& man) {
  spec.layout_seed = o.seed;
  spec.feature_table = o.feature_table;
  const std::string js = artifact(o, o.json_out, "explanation.json");
  const std::string sv = artifact(o, o.svg, "explanation.svg");
  const std::string dt = artifact(o, o.dot, "explanation.dot");
  if (!js.empty()) man.write(js, gnx::to_feature_json(e));
  if (!sv.empty()) man.write(sv, gnx::to_svg(g, e, spec));
  if (!dt.empty()) man.write(dt, gnx::to_dot(g, e, spec));
  std::printf("method %s  output %.6g  attribution sum %.6g", e.method.c_str(), e.output, e.total());
  if (e.bias_sink) std::printf("  bias sink %.6g  residual %.3g", *e.bias_sink, e.output - e.total() - *e.bias_sink);
  std::printf("\n");
}

gnx::Checkpoint load_model(const Options& o, gnx::Task expected, Manifest& man) {
  if (o.model.empty()) throw UsageError("--model is required");
  man.input(o.model);
  gnx::Checkpoint c = gnx::load_checkpoint(o.model);
  if (c.config.task != expected)
    throw gnx::DataError(o.model + " is a " + gnx::to_string(c.config.task) + " checkpoint");
  return c;
}

void require(const std::string& v, const char* flag) {
  if (v.empty()) throw UsageError(std::string(flag) + " is required");
}

// --- infection -------------------------------------------------------------

void infection_generate(const Options& o, Manifest& man) {
  require(o.out, "--out");
  gnx::infection::Config cfg = o.heldout ? gnx::infection::Config::eval(o.count, o.seed)
                                         : gnx::infection::Config::train(o.count, o.seed);
  cfg.max_nodes = o.max_nodes;
  gnx::infection::validate(cfg);
  gnx::Sha256 h;
  for (std::size_t i = 0; i < cfg.n_graphs; ++i) {
    const std::string text = gnx::dump_graph(gnx::infection::dataset_graph(cfg, i));
    h.update(text).update("\n");
    man.write((fs::path(o.out) / gnx::graph_file_name(i)).string(), text + "\n");
  }
  const json index{{"seed", cfg.seed}, {"config", gnx::infection::to_json(cfg)}, {"count", cfg.n_graphs},
                   {"content_hash", h.hex()}};
  man.note("dataset", index);
  std::printf("%zu graphs  content hash %s\n", cfg.n_graphs, h.hex().c_str());
}

std::vector<gnx::Graph> read_graph_dir(const std::string& dir, Manifest& man) {
  const fs::path manifest = fs::path(dir) / "manifest.json";
  if (!fs::exists(manifest)) throw gnx::DataError(dir + " has no manifest.json");
  const json m = gnx::read_json_file(manifest.string());
  const json& info = m.contains("count") ? m : m.at("details").at("dataset");
  const std::size_t count = info.at("count").get<std::size_t>();
  std::vector<gnx::Graph> out;
  gnx::Sha256 h;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string path = (fs::path(dir) / gnx::graph_file_name(i)).string();
    out.push_back(gnx::load_graph(path));
    h.update(Manifest::read_bytes(path));
  }
  man.input_text(dir, h.hex());
  return out;
}

void infection_train(const Options& o, Manifest& man) {
  require(o.data, "--data");
  require(o.out, "--out");
  const gnx::TrainConfig cfg = apply_overrides(gnx::TrainConfig::infection(), o);
  std::vector<gnx::Graph> graphs = read_graph_dir(o.data, man);
  gnx::Dataset train_set, val_set;
  if (!o.val.empty()) {
    train_set.graphs = std::move(graphs);
    val_set.graphs = read_graph_dir(o.val, man);
  } else {
    const std::size_t n_val = graphs.size() / 10;
    train_set.graphs.assign(graphs.begin(), graphs.end() - static_cast<std::ptrdiff_t>(n_val));
    val_set.graphs.assign(graphs.end() - static_cast<std::ptrdiff_t>(n_val), graphs.end());
  }
  const gnx::TrainResult r = gnx::train(cfg, train_set, val_set, log_epoch);
  const gnx::Graph& g = train_set.graphs.front();
  const gnx::ModelSpec spec = gnx::model_spec(cfg, g.edge_dim(), g.node_dim(), g.global_dim());
  man.write((fs::path(o.out) / "model.json").string(), gnx::checkpoint_to_json(cfg, spec, r.model).dump(2) + "\n");
  man.write((fs::path(o.out) / "metrics.json").string(), metrics_json(r.metrics).dump(2) + "\n");
  std::printf("best epoch %zu  validation accuracy %.4f\n", r.metrics.best_epoch, r.metrics.best_val_metric);
}

void infection_eval(const Options& o, Manifest& man) {
  require(o.data, "--data");
  const gnx::Checkpoint c = load_model(o, gnx::Task::Infection, man);
  const std::vector<gnx::Graph> graphs = read_graph_dir(o.data, man);
  const double acc = gnx::node_accuracy(c.model, graphs);
  if (!o.out.empty())
    man.write((fs::path(o.out) / "eval.json").string(),
              json{{"graphs", graphs.size()}, {"node_accuracy", gnx::round9(acc)}}.dump(2) + "\n");
  std::printf("%zu graphs  node accuracy %.4f\n", graphs.size(), acc);
}

void infection_explain(const Options& o, Manifest& man) {
  require(o.graph, "--graph");
  const gnx::Checkpoint c = load_model(o, gnx::Task::Infection, man);
  man.input(o.graph);
  const gnx::Graph g = gnx::load_graph(o.graph);
  if (o.node >= g.num_nodes()) throw gnx::DataError("--node " + std::to_string(o.node) + " is not in the graph");
  const gnx::Explanation e = explain(c.model, g, gnx::Target::node_logit(o.node), o);
  gnx::RenderSpec spec;
  spec.node_feature_names = gnx::infection::node_feature_names();
  spec.edge_feature_names = gnx::infection::edge_feature_names();
  emit_explanation(g, e, spec, o, man);
}

// --- solubility ------------------------------------------------------------

void solubility_ingest(const Options& o, Manifest& man) {
  require(o.csv, "--csv");
  require(o.out, "--out");
  man.input(o.csv);
  const gnx::chem::EsolData data = gnx::chem::load_esol(o.csv);
  const gnx::Split split = gnx::random_split(data.records.size(), o.seed);
  json records = json::array();
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& r = data.records[i];
    records.push_back({{"smiles", r.smiles}, {"target", r.log_solubility}});
    const gnx::Graph g = gnx::chem::featurize_smiles(r.smiles);
    man.write((fs::path(o.out) / "graphs" / gnx::graph_file_name(i)).string(), gnx::dump_graph(g) + "\n");
  }
  const json j{{"records", records},
               {"skipped", data.skipped},
               {"split", {{"train", split.train}, {"val", split.val}, {"test", split.test}}}};
  man.write((fs::path(o.out) / "dataset.json").string(), j.dump(1) + "\n");
  std::printf("%zu molecules (%zu skipped)  train %zu  val %zu  test %zu\n", data.records.size(), data.skipped,
              split.train.size(), split.val.size(), split.test.size());
}

struct Molecules {
  std::vector<std::string> smiles;
  gnx::Dataset all;
  gnx::Split split;
};

Molecules read_ingested(const std::string& dir, Manifest& man) {
  const std::string path = (fs::path(dir) / "dataset.json").string();
  man.input(path);
  const json j = gnx::read_json_file(path);
  Molecules m;
  for (const auto& r : j.at("records")) {
    m.smiles.push_back(r.at("smiles").get<std::string>());
    m.all.graphs.push_back(gnx::chem::featurize_smiles(m.smiles.back()));
    m.all.targets.push_back(r.at("target").get<double>());
  }
  const auto& s = j.at("split");
  m.split = {s.at("train").get<std::vector<std::size_t>>(), s.at("val").get<std::vector<std::size_t>>(),
             s.at("test").get<std::vector<std::size_t>>()};
  return m;
}

void solubility_train(const Options& o, Manifest& man) {
  require(o.data, "--data");
  require(o.out, "--out");
  const gnx::TrainConfig cfg = apply_overrides(gnx::TrainConfig::solubility(), o);
  const Molecules m = read_ingested(o.data, man);
  const gnx::Dataset train_set = gnx::subset(m.all, m.split.train), val_set = gnx::subset(m.all, m.split.val),
                     test_set = gnx::subset(m.all, m.split.test);
  const gnx::TrainResult r = gnx::train(cfg, train_set, val_set, log_epoch);
  const gnx::Graph& g = train_set.graphs.front();
  const gnx::ModelSpec spec = gnx::model_spec(cfg, g.edge_dim(), g.node_dim(), g.global_dim());
  json metrics = metrics_json(r.metrics);
  const double test_rmse = gnx::rmse(r.model, test_set);
  metrics["test_rmse"] = gnx::round9(test_rmse);
  man.write((fs::path(o.out) / "model.json").string(), gnx::checkpoint_to_json(cfg, spec, r.model).dump(2) + "\n");
  man.write((fs::path(o.out) / "metrics.json").string(), metrics.dump(2) + "\n");
  std::printf("best epoch %zu  validation RMSE %.4f  test RMSE %.4f\n", r.metrics.best_epoch,
              r.metrics.best_val_metric, test_rmse);
}

std::vector<std::string> smiles_inputs(const Options& o, Manifest& man) {
  std::vector<std::string> all = o.smiles;
  if (!o.smiles_file.empty()) {
    man.input(o.smiles_file);
    std::ifstream in(o.smiles_file);
    if (!in) throw gnx::DataError("cannot open " + o.smiles_file);
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty() && line.front() != '#') all.push_back(line);
    }
  }
  if (all.empty()) throw UsageError("give at least one --smiles or a --smiles-file");
  return all;
}

void solubility_predict(const Options& o, Manifest& man) {
  const gnx::Checkpoint c = load_model(o, gnx::Task::Solubility, man);
  const std::vector<std::string> all = smiles_inputs(o, man);
  // With several inputs (an ablation sequence) a third column gives the change from the first.
  std::string table;
  double first = 0.0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const double y = gnx::predict(gnx::chem::featurize_smiles(all[i]), c.model).front();
    if (i == 0) first = y;
    char buf[64];
    if (all.size() == 1) std::snprintf(buf, sizeof buf, ",%.6f\n", y);
    else std::snprintf(buf, sizeof buf, ",%.6f,%+.6f\n", y, y - first);
    table += all[i] + buf;
  }
  std::fputs(table.c_str(), stdout);
  if (!o.out.empty()) man.write((fs::path(o.out) / "predictions.csv").string(), table);
}

void solubility_explain(const Options& o, Manifest& man) {
  const gnx::Checkpoint c = load_model(o, gnx::Task::Solubility, man);
  if (o.smiles.size() != 1) throw UsageError("solubility-explain takes exactly one --smiles");
  man.input_text("smiles", o.smiles.front());
  const gnx::Graph g = gnx::chem::featurize_smiles(o.smiles.front());
  const gnx::Explanation e = explain(c.model, g, gnx::Target::global_scalar(), o);
  gnx::RenderSpec spec;
  spec.node_feature_names = gnx::chem::node_feature_names();
  spec.edge_feature_names = gnx::chem::edge_feature_names();
  emit_explanation(g, e, spec, o, man);
}

// --- selftest --------------------------------------------------------------

bool selftest(const Options& o, Manifest& man) {
  std::vector<gnx::selftest::Check> checks = gnx::selftest::run(o.seed);
  if (!o.model.empty()) {
    man.input(o.model);
    const gnx::Checkpoint c = gnx::load_checkpoint(o.model);
    const gnx::Graph g = c.config.task == gnx::Task::Infection
                             ? gnx::infection::dataset_graph(gnx::infection::Config::train(1, o.seed), 0)
                             : gnx::chem::featurize_smiles("OCc1ccccc1");
    const gnx::Target t = c.config.task == gnx::Task::Infection ? gnx::Target::node_logit(0)
                                                                : gnx::Target::global_scalar();
    const gnx::Explanation e = gnx::lrp(c.model, g, t);
    const double err = gnx::selftest::conservation_error(e);
    // the default rule conserves only positive outputs
    const bool ok = !(e.output > 0.0) || err <= 1e-6;
    checks.push_back({"checkpoint LRP conservation", ok, gnx::selftest::fmt("rel error %.3g", err)});
  }
  const std::string text = gnx::selftest::report(checks);
  std::fputs(text.c_str(), stdout);
  if (!o.out.empty()) man.write((fs::path(o.out) / "selftest.txt").string(), text);
  return gnx::selftest::all_pass(checks);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph network training and explanation tool"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", kVersion);
  Options o;

  auto common = [&](CLI::App* c) {
    c->add_option("--seed", o.seed, "random seed");
    c->add_option("--out", o.out, "output directory");
    c->add_option("--threads", o.threads, "worker cap")->check(CLI::PositiveNumber);
  };
  auto training = [&](CLI::App* c) {
    c->add_option("--pool", o.pool, "aggregation")->check(CLI::IsMember({"sum", "mean", "max"}));
    c->add_option("--layers", o.layers);
    c->add_option("--width", o.width);
    c->add_option("--epochs", o.epochs);
    c->add_option("--lr", o.lr);
    c->add_option("--l1", o.l1);
    c->add_option("--dropout", o.dropout);
  };
  auto explaining = [&](CLI::App* c) {
    c->add_option("--method", o.method)->check(CLI::IsMember({"sa", "gbp", "lrp"}));
    c->add_option("--lrp-rule", o.lrp_rule)->check(CLI::IsMember({"eps", "alphabeta"}));
    c->add_option("--eps", o.eps);
    c->add_option("--alpha", o.alpha);
    c->add_flag("--signed-z", o.signed_z, "epsilon rule over signed contributions");
    c->add_option("--maxpool-rule", o.maxpool_rule)->check(CLI::IsMember({"naive", "lp", "search"}));
    c->add_option("--p", o.p);
    c->add_option("--delta", o.delta);
    c->add_flag("--signed", o.signed_sa, "signed gradient instead of squared (sa)");
    c->add_option("--svg", o.svg);
    c->add_option("--json", o.json_out);
    c->add_option("--dot", o.dot);
    c->add_flag("--feature-table", o.feature_table);
    c->add_option("--model", o.model)->required();
  };

  std::map<std::string, std::function<void(Manifest&)>> handlers;
  bool selftest_ok = true;

  auto* gen = app.add_subcommand("infection-generate", "write a synthetic infection dataset");
  common(gen);
  gen->add_option("--count", o.count);
  gen->add_option("--max-nodes", o.max_nodes);
  gen->add_flag("--heldout", o.heldout, "draw sick/immune rates from the held-out levels");
  handlers["infection-generate"] = [&](Manifest& m) { infection_generate(o, m); };

  auto* itrain = app.add_subcommand("infection-train", "train a node classifier");
  common(itrain);
  training(itrain);
  itrain->add_option("--data", o.data)->required();
  itrain->add_option("--val", o.val);
  handlers["infection-train"] = [&](Manifest& m) { infection_train(o, m); };

  auto* ieval = app.add_subcommand("infection-eval", "node accuracy on a dataset");
  common(ieval);
  ieval->add_option("--model", o.model)->required();
  ieval->add_option("--data", o.data)->required();
  handlers["infection-eval"] = [&](Manifest& m) { infection_eval(o, m); };

  auto* iexp = app.add_subcommand("infection-explain", "explain one node prediction");
  common(iexp);
  explaining(iexp);
  iexp->add_option("--graph", o.graph)->required();
  iexp->add_option("--node", o.node);
  handlers["infection-explain"] = [&](Manifest& m) { infection_explain(o, m); };

  auto* ingest = app.add_subcommand("solubility-ingest", "parse a solubility CSV and fix the split");
  common(ingest);
  ingest->add_option("--csv", o.csv)->required();
  handlers["solubility-ingest"] = [&](Manifest& m) { solubility_ingest(o, m); };

  auto* strain = app.add_subcommand("solubility-train", "train a solubility regressor");
  common(strain);
  training(strain);
  strain->add_option("--data", o.data, "directory written by solubility-ingest")->required();
  handlers["solubility-train"] = [&](Manifest& m) { solubility_train(o, m); };

  auto* spred = app.add_subcommand("solubility-predict", "predict log-solubility");
  common(spred);
  spred->add_option("--model", o.model)->required();
  spred->add_option("--smiles", o.smiles);
  spred->add_option("--smiles-file", o.smiles_file);
  handlers["solubility-predict"] = [&](Manifest& m) { solubility_predict(o, m); };

  auto* sexp = app.add_subcommand("solubility-explain", "explain one molecule's prediction");
  common(sexp);
  explaining(sexp);
  sexp->add_option("--smiles", o.smiles)->required();
  handlers["solubility-explain"] = [&](Manifest& m) { solubility_explain(o, m); };

  auto* st = app.add_subcommand("selftest", "built-in consistency checks");
  common(st);
  st->add_option("--model", o.model, "also check a checkpoint");
  handlers["selftest"] = [&](Manifest& m) { selftest_ok = selftest(o, m); };

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  std::vector<std::string> args{"gnexplain"};
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    Eigen::setNbThreads(o.threads);
    Manifest man(args, o.seed);
    handlers.at(name)(man);
    man.save(manifest_path(o));
    return selftest_ok ? 0 : 3;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const gnx::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const gnx::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  }
}
