#include "cli.hpp"

#include "stadv/attack.hpp"
#include "stadv/defense.hpp"
#include "stadv/parallel.hpp"
#include "stadv/plot.hpp"
#include "stadv/theory_bound.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

namespace stadv::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string out = "out";
  std::uint64_t seed = 7;
  unsigned jobs = 0;
};

struct DataPaths {
  std::string speeds;
  std::string graph;
};

struct GenDataOpts {
  Index nodes = 30;
  Index steps = 2000;
};

struct ModelOpts {
  Index history = 12;
  Index horizon = 12;
  Index hidden = 16;
  Index graph_layers = 2;
  Index temporal_channels = 4;
  double level_clip = 0.15;
  std::string activation = "relu";
};

struct TrainOpts {
  std::string name = "target";
  int epochs = 40;
  double lr = 0.3;
  std::size_t batch = 64;
  std::size_t max_batches = 0;
};

struct AttackOpts {
  std::string model;
  std::string surrogate;
  std::string setting = "grey";
  std::string method = "stpgd";
  std::string selector = "tdns";
  double epsilon = 0.5;
  double alpha = 0.1;
  int iterations = 5;
  double eta_fraction = 0.10;
  double momentum = 1.0;
  std::size_t max_windows = 0;
  bool domain_clip = false;
  std::string tag;
};

struct DefendOpts {
  std::string strategy = "at";
  int epochs = 15;
  double lr = 0.3;
  std::size_t batch = 64;
  double mix_ratio = 0.5;
  std::string eval_setting = "white";
  std::string eval_selector = "random";
};

struct BoundOpts {
  std::size_t trials = 200;
  std::string activation = "relu";
  Index max_nodes = 10;
  Index max_layers = 3;
  Index max_width = 6;
};

struct PlotOpts {
  std::vector<std::string> reports;
  std::vector<double> x;
  std::string x_label = "sweep";
};

void ensure_dirs(const Common& c) {
  for (const char* d : {"checkpoints", "reports", "plots", "logs", "data"}) {
    std::error_code ec;
    fs::create_directories(fs::path(c.out) / d, ec);
    if (ec) throw std::runtime_error("cannot create " + (fs::path(c.out) / d).string() + ": " + ec.message());
  }
}

std::string path_in(const Common& c, const char* dir, const std::string& file) {
  return (fs::path(c.out) / dir / file).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path);
}

template <typename F>
auto usage(F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

// Reads key=value lines; '#' starts a comment.
std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto l = s.find_first_not_of(" \t\r");
      const auto r = s.find_last_not_of(" \t\r");
      return l == std::string::npos ? std::string() : s.substr(l, r - l + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

// Config entries become `--key=value` tokens placed before the user's own
// flags, skipping keys the user already passed, so flags always win.
std::vector<std::string> merge_config(const std::vector<std::string>& args) {
  std::string config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
  }
  if (config.empty() || args.size() < 2) return args;
  auto given = [&](const std::string& key) {
    for (const auto& a : args) {
      if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0) return true;
    }
    return false;
  };
  std::vector<std::string> merged(args.begin(), args.begin() + 2);
  for (const auto& [k, v] : read_config(config)) {
    if (!given(k)) merged.push_back("--" + k + "=" + v);
  }
  merged.insert(merged.end(), args.begin() + 2, args.end());
  return merged;
}

// Echoes every option of the chosen subcommand as key=value.
std::string effective_config(const CLI::App& sub) {
  std::ostringstream o;
  o << "command=" << sub.get_name() << '\n';
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
    const std::string& key = opt->get_lnames().front();
    if (key == "config") continue;
    std::string value;
    if (opt->get_type_size() == 0) {
      value = opt->count() > 0 ? "true" : "false";
    } else if (opt->count() > 0) {
      const auto& res = opt->results();
      for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
    } else {
      value = opt->get_default_str();
    }
    o << key << '=' << value << '\n';
  }
  return o.str();
}

struct Loaded {
  SpeedSeries series;
  TrafficNetwork graph;
};

Loaded load_data(const Common& c, const DataPaths& d) {
  const std::string speeds = d.speeds.empty() ? path_in(c, "data", "speeds.csv") : d.speeds;
  const std::string graph = d.graph.empty() ? path_in(c, "data", "graph.csv") : d.graph;
  Loaded l;
  l.series = load_speed_csv(speeds);
  l.graph = load_graph_csv(graph, l.series.n);
  return l;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

// Rechecks the attack contract on every returned window.
void check_invariants(const AttackRun& run, const DatasetSplit& split, const AttackConfig& cfg, Index n) {
  const Index eta = cfg.victims(n);
  for (std::size_t i = 0; i < run.results.size(); ++i) {
    const StateWindow& clean = split.all()[run.indices[i]];
    const AttackResult& r = run.results[i];
    const RowMatrixXd d = r.adversarial.inputs - clean.inputs;
    const std::string where = "window " + std::to_string(run.indices[i]);
    if (r.mask.count() > eta) throw InvariantViolation(where + ": victim count exceeds budget");
    if (d.cwiseAbs().maxCoeff() > cfg.epsilon + 1e-12) throw InvariantViolation(where + ": perturbation exceeds epsilon");
    const Index c = clean.features;
    for (Index node = 0; node < n; ++node) {
      if (r.mask.selected[static_cast<std::size_t>(node)]) continue;
      if ((r.adversarial.inputs.middleCols(node * c, c).array() != clean.inputs.middleCols(node * c, c).array()).any()) {
        throw InvariantViolation(where + ": non-victim node " + std::to_string(node) + " changed");
      }
    }
  }
}

int cmd_gen_data(const Common& c, const GenDataOpts& o, std::ostream& out) {
  if (o.nodes < 2 || o.steps < 1) throw UsageError("gen-data: need nodes >= 2 and steps >= 1");
  const SyntheticData d = generate_synthetic(o.nodes, o.steps, c.seed);
  const std::string speeds = path_in(c, "data", "speeds.csv");
  const std::string graph = path_in(c, "data", "graph.csv");
  write_speed_csv(speeds, d.series);
  write_graph_csv(graph, d.graph);
  out << "wrote " << speeds << " (" << o.steps << " x " << o.nodes << ")\n";
  out << "wrote " << graph << " (" << d.graph.edges().size() / 2 << " edges)\n";
  return kOk;
}

ModelConfig model_config(const ModelOpts& m, Index nodes) {
  ModelConfig mc;
  mc.nodes = nodes;
  mc.history = m.history;
  mc.horizon = m.horizon;
  mc.hidden = m.hidden;
  mc.graph_layers = m.graph_layers;
  mc.temporal_channels = m.temporal_channels;
  mc.level_clip = m.level_clip;
  mc.activation = usage([&] { return parse_activation(m.activation); });
  return mc;
}

int cmd_train(const Common& c, const DataPaths& dp, const ModelOpts& mo, const TrainOpts& t, std::ostream& out) {
  if (t.epochs < 1 || !(t.lr > 0) || t.batch < 1) throw UsageError("train: need epochs >= 1, lr > 0, batch >= 1");
  const Loaded data = load_data(c, dp);
  const ModelConfig mc = model_config(mo, data.series.n);
  const DatasetSplit split = prepare_dataset(data.series, mc.history, mc.horizon);
  TrainConfig tc;
  tc.epochs = t.epochs;
  tc.learning_rate = t.lr;
  tc.batch_size = t.batch;
  tc.max_batches_per_epoch = t.max_batches;
  tc.seed = c.seed;
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train(usage([&] { return make_model(mc, data.graph, c.seed); }), split, tc);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string ckpt = path_in(c, "checkpoints", t.name + ".ckpt");
  save_checkpoint(ckpt, r.model);
  std::ostringstream log;
  log << "epoch,train_mae,validation_mae\n" << std::setprecision(10);
  for (std::size_t e = 0; e < r.loss_history.size(); ++e) {
    log << e + 1 << ',' << r.loss_history[e] << ','
        << (e < r.validation_history.size() ? r.validation_history[e] : 0.0) << '\n';
  }
  write_text(path_in(c, "logs", "train_" + t.name + ".csv"), log.str());
  const RowMatrixXd truth = stack_labels(split.test());
  const double model_mae = mean_absolute_error(predict_all(r.model, split.test(), split.normalizer()), truth);
  const double persist_mae = mean_absolute_error(persistence_forecast(split.test(), split.normalizer()), truth);
  out << "trained " << t.name << " in " << fixed(secs, 1) << "s; test MAE " << fixed(model_mae)
      << " (persistence " << fixed(persist_mae) << ")\n";
  out << "wrote " << ckpt << '\n';
  return kOk;
}

STModel load_model(const Common& c, const std::string& given, const char* fallback, const Loaded& data) {
  const std::string path = given.empty() ? path_in(c, "checkpoints", fallback) : given;
  STModel m = load_checkpoint(path);
  if (m.config.nodes != data.series.n) {
    throw UsageError(path + " was trained on " + std::to_string(m.config.nodes) + " nodes, data has " +
                     std::to_string(data.series.n));
  }
  return m;
}

AttackConfig attack_config(const AttackOpts& a, std::uint64_t seed, Index n) {
  if (!(a.eta_fraction > 0 && a.eta_fraction <= 1)) throw UsageError("eta-fraction must be in (0, 1]");
  AttackConfig cfg;
  cfg.epsilon = a.epsilon;
  cfg.alpha = a.alpha;
  cfg.iterations = a.iterations;
  cfg.momentum = a.momentum;
  cfg.budget = victim_budget(n, a.eta_fraction);
  cfg.seed = seed;
  cfg.domain_clip = a.domain_clip;
  usage([&] {
    cfg.validate(n);
    return 0;
  });
  return cfg;
}

template <typename T>
std::vector<T> expand_choice(const std::string& value, const std::vector<T>& all, T (*parse)(const std::string&)) {
  if (value == "all") return all;
  return {usage([&] { return parse(value); })};
}

int cmd_attack(const Common& c, const DataPaths& dp, const AttackOpts& a, std::ostream& out) {
  const Loaded data = load_data(c, dp);
  const Index n = data.series.n;
  const AttackSetting setting = usage([&] { return parse_setting(a.setting); });
  const auto methods = expand_choice(a.method, {AttackMethod::kStpgd, AttackMethod::kStmim}, parse_method);
  const auto selectors =
      expand_choice(a.selector,
                    {SelectorKind::kTdns, SelectorKind::kRandom, SelectorKind::kDegree, SelectorKind::kBetweenness,
                     SelectorKind::kPagerank},
                    parse_selector);
  const AttackConfig base = attack_config(a, c.seed, n);
  const STModel target = load_model(c, a.model, "target.ckpt", data);
  std::optional<STModel> surrogate;
  if (setting == AttackSetting::kBlack) {
    if (a.surrogate.empty() && !fs::exists(path_in(c, "checkpoints", "surrogate.ckpt"))) {
      throw UsageError("black-box attack needs --surrogate (or checkpoints/surrogate.ckpt from `train --name surrogate`)");
    }
    surrogate = load_model(c, a.surrogate, "surrogate.ckpt", data);
  }
  const DatasetSplit split = prepare_dataset(data.series, target.config.history, target.config.horizon);
  RunOptions ro;
  ro.max_windows = a.max_windows;
  if (surrogate) ro.surrogate = &*surrogate;

  const std::string tag = a.tag.empty() ? "attack_" + a.setting + "_" + a.method + "_" + a.selector : a.tag;
  std::map<std::string, MetricsReport> reports;
  for (AttackMethod m : methods) {
    for (SelectorKind s : selectors) {
      AttackConfig cfg = base;
      cfg.method = m;
      cfg.selector = s;
      const std::string name = to_string(m) + "-" + to_string(s);
      const auto t0 = std::chrono::steady_clock::now();
      const AttackRun run = run_attack(setting, target, data.graph, split, cfg, ro);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      check_invariants(run, split, cfg, n);
      reports[name] = run.report;
      write_text(path_in(c, "reports", tag + "_" + name + ".json"), attack_summary_json(cfg, setting, run) + "\n");
      write_perturbation_csv(path_in(c, "reports", tag + "_" + name + "_perturbation.csv"), run.results.front());
      out << name << ": clean G-MAE " << fixed(run.report.clean_g_mae) << ", attacked G-MAE " << fixed(run.report.g_mae)
          << ", L-MAE " << fixed(run.report.l_mae) << ", degradation " << fixed(run.report.degradation_pct.value_or(0), 2)
          << "% (" << run.results.size() << " windows, " << fixed(secs, 1) << "s)\n";
    }
  }
  const auto rows = compare(reports);
  const std::string csv = path_in(c, "reports", tag + ".csv");
  write_text(csv, render_csv(rows));
  out << render_table(rows) << "wrote " << csv << '\n';
  return kOk;
}

int cmd_defend(const Common& c, const DataPaths& dp, const DefendOpts& d, const AttackOpts& a, std::ostream& out) {
  if (d.epochs < 1 || !(d.lr > 0) || d.batch < 1) throw UsageError("defend: need epochs >= 1, lr > 0, batch >= 1");
  if (!(d.mix_ratio >= 0 && d.mix_ratio <= 1)) throw UsageError("defend: mix-ratio must be in [0, 1]");
  const Loaded data = load_data(c, dp);
  const Index n = data.series.n;
  DefenseConfig dc;
  dc.strategy = usage([&] { return parse_strategy(d.strategy); });
  dc.inner = attack_config(a, c.seed, n);
  dc.mix_ratio = d.mix_ratio;
  dc.train.epochs = d.epochs;
  dc.train.learning_rate = d.lr;
  dc.train.batch_size = d.batch;
  dc.train.seed = c.seed;
  AttackConfig eval = dc.inner;
  eval.selector = usage([&] { return parse_selector(d.eval_selector); });
  const AttackSetting setting = usage([&] { return parse_setting(d.eval_setting); });
  if (setting == AttackSetting::kBlack) throw UsageError("defend: eval-setting must be grey or white");

  const STModel base = load_model(c, a.model, "target.ckpt", data);
  const DatasetSplit split = prepare_dataset(data.series, base.config.history, base.config.horizon);
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = defend(base, data.graph, split, dc);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string ckpt = path_in(c, "checkpoints", d.strategy + ".ckpt");
  save_checkpoint(ckpt, r.model);

  RunOptions ro;
  ro.max_windows = a.max_windows;
  std::map<std::string, MetricsReport> reports;
  for (const auto& [name, model] : {std::pair<std::string, const STModel*>{"none", &base}, {d.strategy, &r.model}}) {
    const AttackRun run = run_attack(setting, *model, data.graph, split, eval, ro);
    check_invariants(run, split, eval, n);
    reports[name] = run.report;
    out << name << ": clean G-MAE " << fixed(run.report.clean_g_mae) << ", attacked G-MAE " << fixed(run.report.g_mae)
        << '\n';
  }
  const double reduction = 100.0 * (1.0 - reports[d.strategy].g_mae / reports["none"].g_mae);
  out << d.strategy << " trained in " << fixed(secs, 1) << "s; attacked G-MAE reduced by " << fixed(reduction, 2)
      << "% under " << d.eval_setting << "-box " << to_string(eval.method) << "-" << d.eval_selector << '\n';
  const std::string csv = path_in(c, "reports", "defend_" + d.strategy + ".csv");
  write_text(csv, render_csv(compare(reports)));
  out << "wrote " << ckpt << "\nwrote " << csv << '\n';
  return kOk;
}

int cmd_verify_bound(const Common& c, const DataPaths& dp, const BoundOpts& b, const AttackOpts& a, bool on_graph,
                     std::ostream& out) {
  if (b.trials < 1) throw UsageError("verify-bound: trials must be >= 1");
  const Activation act = usage([&] { return parse_activation(b.activation); });
  BoundReport report;
  try {
    if (on_graph) {
      const std::string graph_path = dp.graph.empty() ? path_in(c, "data", "graph.csv") : dp.graph;
      if (b.max_nodes < 1) throw UsageError("verify-bound: --nodes must be >= 1");
      const TrafficNetwork g = load_graph_csv(graph_path, b.max_nodes);
      std::vector<Index> dims(static_cast<std::size_t>(b.max_layers) + 1, b.max_width);
      const ProofModel pm = make_proof_model(g, dims, c.seed, false, act);
      const Index eta = victim_budget(g.node_count(), a.eta_fraction);
      report = usage([&] { return verify_bound(pm, a.epsilon, eta, b.trials, c.seed); });
    } else {
      RandomBoundOptions ro;
      ro.max_nodes = b.max_nodes;
      ro.max_layers = b.max_layers;
      ro.max_width = b.max_width;
      ro.activation = act;
      report = usage([&] { return verify_bound_randomized(b.trials, c.seed, ro); });
    }
  } catch (const BoundViolation& v) {
    throw InvariantViolation(v.what());
  }
  const std::string path = path_in(c, "reports", "bound.json");
  write_text(path, report.to_json() + "\n");
  out << "trials " << report.trials << ", worst trial bound " << report.bound_value << " (lambda " << report.lambda
      << ", C " << report.C << ", L " << report.L << ", eps " << report.epsilon << ", eta " << report.eta << ")\n";
  out << "max gap/bound ratio " << report.max_ratio << '\n';
  out << (report.max_ratio <= 1.0 ? "PASS" : "FAIL") << ": bound held on every trial\nwrote " << path << '\n';
  return kOk;
}

int cmd_plot(const Common& c, const PlotOpts& p, std::ostream& out) {
  if (p.reports.empty()) throw UsageError("plot: no reports given");
  if (!p.x.empty() && p.x.size() != p.reports.size()) throw UsageError("plot: --x needs one value per report");
  std::vector<SweepPoint> points;
  for (std::size_t i = 0; i < p.reports.size(); ++i) {
    std::ifstream in(p.reports[i]);
    if (!in) throw std::runtime_error("cannot open report " + p.reports[i]);
    std::stringstream ss;
    ss << in.rdbuf();
    SweepPoint sp;
    sp.rows = parse_report_csv(ss.str());
    if (sp.rows.empty()) throw std::runtime_error("plot: empty report " + p.reports[i]);
    if (!p.x.empty()) {
      sp.x = p.x[i];
    } else {
      sp.x = trailing_number(fs::path(p.reports[i]).stem().string()).value_or(static_cast<double>(i));
    }
    points.push_back(std::move(sp));
  }
  for (const auto& [metric, chart] : sweep_charts(std::move(points), p.x_label)) {
    const std::string path = path_in(c, "plots", metric + ".svg");
    write_text(path, render_svg(chart));
    out << "wrote " << path << '\n';
  }
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Adversarial attacks and defenses for spatiotemporal traffic forecasting"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  Common common;
  DataPaths dp;
  GenDataOpts gen;
  ModelOpts mo;
  TrainOpts to;
  AttackOpts ao;
  DefendOpts dop;
  BoundOpts bo;
  PlotOpts po;
  bool bound_on_graph = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", common.out, "Output directory");
    sub->add_option("--seed", common.seed, "Seed for every random stream");
    sub->add_option("--jobs", common.jobs, "Worker threads (0 = all cores)");
    sub->add_option("--config", "key=value file; flags override it");
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--speeds", dp.speeds, "Speed CSV (default <out>/data/speeds.csv)");
    sub->add_option("--graph", dp.graph, "Graph CSV (default <out>/data/graph.csv)");
  };
  auto add_attack = [&](CLI::App* sub) {
    sub->add_option("--model", ao.model, "Target checkpoint (default <out>/checkpoints/target.ckpt)");
    sub->add_option("--epsilon", ao.epsilon, "L-infinity budget in normalized units");
    sub->add_option("--alpha", ao.alpha, "Step size");
    sub->add_option("--iterations", ao.iterations, "Attack iterations K");
    sub->add_option("--eta-fraction", ao.eta_fraction, "Victim budget as a fraction of nodes");
    sub->add_option("--momentum", ao.momentum, "Momentum decay (stmim)");
    sub->add_option("--max-windows", ao.max_windows, "Attack only the first N test windows (0 = all)");
    sub->add_flag("--domain-clip", ao.domain_clip, "Keep adversarial inputs in [0, 1]");
  };

  CLI::App* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic speed series and sensor graph");
  add_common(gen_cmd);
  gen_cmd->add_option("--nodes", gen.nodes, "Sensors");
  gen_cmd->add_option("--steps", gen.steps, "5-minute steps");

  CLI::App* train_cmd = app.add_subcommand("train", "Train a forecaster");
  add_common(train_cmd);
  add_data(train_cmd);
  train_cmd->add_option("--name", to.name, "Checkpoint name");
  train_cmd->add_option("--epochs", to.epochs, "Epochs");
  train_cmd->add_option("--lr", to.lr, "Learning rate");
  train_cmd->add_option("--batch", to.batch, "Batch size");
  train_cmd->add_option("--max-batches", to.max_batches, "Batches per epoch (0 = all)");
  train_cmd->add_option("--history", mo.history, "Input steps T");
  train_cmd->add_option("--horizon", mo.horizon, "Forecast steps tau");
  train_cmd->add_option("--hidden", mo.hidden, "Hidden width");
  train_cmd->add_option("--graph-layers", mo.graph_layers, "Graph convolution layers");
  train_cmd->add_option("--temporal-channels", mo.temporal_channels, "Temporal convolution channels");
  train_cmd->add_option("--level-clip", mo.level_clip, "Gated clip of a node's gap to its neighbours (0 disables)");
  train_cmd->add_option("--activation", mo.activation, "relu, tanh or sigmoid");

  CLI::App* attack_cmd = app.add_subcommand("attack", "Attack a trained forecaster");
  add_common(attack_cmd);
  add_data(attack_cmd);
  add_attack(attack_cmd);
  attack_cmd->add_option("--surrogate", ao.surrogate, "Surrogate checkpoint for black-box attacks");
  attack_cmd->add_option("--setting", ao.setting, "grey, white or black");
  attack_cmd->add_option("--method", ao.method, "stpgd, stmim or all");
  attack_cmd->add_option("--selector", ao.selector, "tdns, random, degree, betweenness, pagerank or all");
  attack_cmd->add_option("--tag", ao.tag, "Report file stem");

  CLI::App* defend_cmd = app.add_subcommand("defend", "Fine-tune a forecaster with a defense and evaluate it");
  add_common(defend_cmd);
  add_data(defend_cmd);
  add_attack(defend_cmd);
  defend_cmd->add_option("--strategy", dop.strategy, "at, mixup or at-tdns");
  defend_cmd->add_option("--epochs", dop.epochs, "Fine-tuning epochs");
  defend_cmd->add_option("--lr", dop.lr, "Learning rate");
  defend_cmd->add_option("--batch", dop.batch, "Batch size");
  defend_cmd->add_option("--mix-ratio", dop.mix_ratio, "Adversarial fraction per batch (mixup)");
  defend_cmd->add_option("--eval-setting", dop.eval_setting, "Evaluation attack setting: white or grey");
  defend_cmd->add_option("--eval-selector", dop.eval_selector, "Evaluation attack selector");

  CLI::App* bound_cmd = app.add_subcommand("verify-bound", "Check the worst-case embedding-gap bound numerically");
  add_common(bound_cmd);
  bound_cmd->add_option("--trials", bo.trials, "Random trials");
  bound_cmd->add_option("--activation", bo.activation, "relu, tanh or sigmoid");
  bound_cmd->add_option("--nodes", bo.max_nodes, "Max nodes per random graph (node count with --on-graph)");
  bound_cmd->add_option("--layers", bo.max_layers, "Max layers");
  bound_cmd->add_option("--width", bo.max_width, "Max layer width");
  bound_cmd->add_flag("--on-graph", bound_on_graph, "Use the graph CSV instead of random graphs");
  bound_cmd->add_option("--graph", dp.graph, "Graph CSV for --on-graph");
  bound_cmd->add_option("--epsilon", ao.epsilon, "Budget for --on-graph");
  bound_cmd->add_option("--eta-fraction", ao.eta_fraction, "Victim fraction for --on-graph");

  CLI::App* plot_cmd = app.add_subcommand("plot", "Render report CSVs as SVG sweep charts");
  add_common(plot_cmd);
  plot_cmd->add_option("--reports", po.reports, "Report CSVs, one per sweep point")->required();
  plot_cmd->add_option("--x", po.x, "Sweep values (default: number at the end of each file name)")->delimiter(',');
  plot_cmd->add_option("--x-label", po.x_label, "Sweep axis label");

  try {
    args = merge_config(args);
    std::vector<const char*> cargs;
    for (const auto& a : args) cargs.push_back(a.c_str());
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    max_jobs() = common.jobs;
    ensure_dirs(common);
    write_text(path_in(common, "logs", sub->get_name() + ".config"), effective_config(*sub));
    if (sub == gen_cmd) return cmd_gen_data(common, gen, out);
    if (sub == train_cmd) return cmd_train(common, dp, mo, to, out);
    if (sub == attack_cmd) return cmd_attack(common, dp, ao, out);
    if (sub == defend_cmd) return cmd_defend(common, dp, dop, ao, out);
    if (sub == bound_cmd) return cmd_verify_bound(common, dp, bo, ao, bound_on_graph, out);
    return cmd_plot(common, po, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const InvariantViolation& e) {
    err << "violation: " << e.what() << '\n';
    return kViolation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace stadv::cli
