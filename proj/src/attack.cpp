#include "stadv/attack.hpp"

#include "stadv/random.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace stadv {

namespace {

RowMatrixXd sign_of(const RowMatrixXd& g) {
  return g.unaryExpr([](double v) { return double((v > 0) - (v < 0)); });
}

}  // namespace

std::string to_string(AttackMethod m) { return m == AttackMethod::kStpgd ? "stpgd" : "stmim"; }

std::string to_string(SelectorKind s) {
  switch (s) {
    case SelectorKind::kTdns: return "tdns";
    case SelectorKind::kRandom: return "random";
    case SelectorKind::kDegree: return "degree";
    case SelectorKind::kBetweenness: return "betweenness";
    case SelectorKind::kPagerank: return "pagerank";
  }
  return "?";
}

std::string to_string(AttackSetting s) {
  switch (s) {
    case AttackSetting::kGrey: return "grey";
    case AttackSetting::kWhite: return "white";
    case AttackSetting::kBlack: return "black";
  }
  return "?";
}

AttackMethod parse_method(const std::string& s) {
  if (s == "stpgd") return AttackMethod::kStpgd;
  if (s == "stmim") return AttackMethod::kStmim;
  throw std::invalid_argument("unknown method '" + s + "' (stpgd, stmim)");
}

SelectorKind parse_selector(const std::string& s) {
  if (s == "tdns") return SelectorKind::kTdns;
  if (s == "random") return SelectorKind::kRandom;
  if (s == "degree") return SelectorKind::kDegree;
  if (s == "betweenness") return SelectorKind::kBetweenness;
  if (s == "pagerank") return SelectorKind::kPagerank;
  throw std::invalid_argument("unknown selector '" + s + "' (tdns, random, degree, betweenness, pagerank)");
}

AttackSetting parse_setting(const std::string& s) {
  if (s == "grey") return AttackSetting::kGrey;
  if (s == "white") return AttackSetting::kWhite;
  if (s == "black") return AttackSetting::kBlack;
  throw std::invalid_argument("unknown setting '" + s + "' (grey, white, black)");
}

void AttackConfig::validate(Index n) const {
  if (!(epsilon >= 0) || !std::isfinite(epsilon)) throw std::invalid_argument("attack: epsilon must be >= 0");
  if (!(alpha > 0) || !std::isfinite(alpha)) throw std::invalid_argument("attack: alpha must be > 0");
  if (iterations < 1) throw std::invalid_argument("attack: iterations must be >= 1");
  if (!(momentum >= 0)) throw std::invalid_argument("attack: momentum must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("attack: batch size must be >= 1");
  const Index eta = victims(n);
  if (eta < 1 || eta > n) {
    throw std::invalid_argument("attack: victim budget " + std::to_string(eta) + " outside [1, " + std::to_string(n) + "]");
  }
}

std::vector<PerturbResult> perturb(const InputGradientFn& objective, std::span<const RowMatrixXd> start,
                                   std::span<const RowMatrixXd> labels, std::span<const RowMatrixXd> masks,
                                   const AttackConfig& cfg) {
  if (start.size() != labels.size() || start.size() != masks.size()) {
    throw std::invalid_argument("perturb: batch parts differ in count");
  }
  std::vector<RowMatrixXd> x(start.begin(), start.end());
  std::vector<RowMatrixXd> velocity;
  if (cfg.method == AttackMethod::kStmim) {
    for (const auto& s : start) velocity.push_back(RowMatrixXd::Zero(s.rows(), s.cols()));
  }
  std::vector<PerturbResult> out(x.size());
  for (int k = 0; k <= cfg.iterations; ++k) {
    InputGradients g;
    try {
      g = objective(x, labels);
    } catch (const std::domain_error& e) {
      throw std::domain_error("attack iteration " + std::to_string(k) + ": " + e.what());
    }
    for (std::size_t b = 0; b < x.size(); ++b) {
      if (!std::isfinite(g.losses[b])) {
        throw std::domain_error("attack iteration " + std::to_string(k) + ": non-finite loss");
      }
      if (k > 0) out[b].log.push_back(g.losses[b]);
    }
    if (k == cfg.iterations) break;
    for (std::size_t b = 0; b < x.size(); ++b) {
      const RowMatrixXd* dir = &g.grads[b];
      if (cfg.method == AttackMethod::kStmim) {
        const double l1 = g.grads[b].lpNorm<1>();
        velocity[b] *= cfg.momentum;
        if (l1 > 0) {
          velocity[b] += g.grads[b] / l1;
        } else {
          velocity[b] += g.grads[b];
        }
        dir = &velocity[b];
      }
      RowMatrixXd next = clip_ball(x[b] + cfg.alpha * sign_of(*dir).cwiseProduct(masks[b]), start[b], cfg.epsilon);
      if (cfg.domain_clip) next = next.cwiseMax(0.0).cwiseMin(1.0);
      x[b] = std::move(next);
    }
  }
  for (std::size_t b = 0; b < x.size(); ++b) out[b].inputs = std::move(x[b]);
  return out;
}

namespace {

std::vector<VictimMask> choose_masks(const InputGradientFn& objective, const TrafficNetwork& graph,
                                     std::span<const StateWindow> views, std::span<const RowMatrixXd> labels,
                                     std::span<const std::uint64_t> keys, const AttackConfig& cfg) {
  const Index n = graph.node_count();
  const Index eta = cfg.victims(n);
  switch (cfg.selector) {
    case SelectorKind::kTdns: {
      std::vector<RowMatrixXd> xs;
      xs.reserve(views.size());
      for (const auto& v : views) xs.push_back(v.inputs);
      SaliencyConfig sc{cfg.epsilon, cfg.alpha, cfg.iterations, cfg.accumulate_saliency};
      const SaliencyVector s = tdns_saliency(objective, xs, labels, views.front().features, sc);
      return std::vector<VictimMask>(views.size(), select_topk(s.per_node, eta));
    }
    case SelectorKind::kRandom: {
      std::vector<VictimMask> m;
      m.reserve(views.size());
      for (std::uint64_t key : keys) m.push_back(select_random(n, eta, derive_seed(cfg.seed, "attack.victims", key)));
      return m;
    }
    case SelectorKind::kDegree: return std::vector<VictimMask>(views.size(), select_degree(graph, eta));
    case SelectorKind::kBetweenness: return std::vector<VictimMask>(views.size(), select_betweenness(graph, eta));
    case SelectorKind::kPagerank: return std::vector<VictimMask>(views.size(), select_pagerank(graph, eta));
  }
  return {};
}

}  // namespace

std::vector<AttackResult> attack_batch(const InputGradientFn& objective, const TrafficNetwork& graph,
                                       std::span<const StateWindow> views, std::span<const RowMatrixXd> labels,
                                       std::span<const StateWindow> truth, std::span<const std::uint64_t> keys,
                                       const AttackConfig& cfg) {
  const std::size_t count = views.size();
  if (labels.size() != count || truth.size() != count || keys.size() != count) {
    throw std::invalid_argument("attack_batch: views, labels, truth and keys differ in count");
  }
  cfg.validate(graph.node_count());
  std::vector<AttackResult> results;
  results.reserve(count);
  for (std::size_t at = 0; at < count; at += cfg.batch_size) {
    const std::size_t len = std::min(cfg.batch_size, count - at);
    const auto v = views.subspan(at, len);
    const auto y = labels.subspan(at, len);
    const auto h = truth.subspan(at, len);
    for (std::size_t b = 0; b < len; ++b) {
      if (v[b].inputs.rows() != h[b].inputs.rows() || v[b].inputs.cols() != h[b].inputs.cols()) {
        throw std::invalid_argument("attack_batch: view and true window shapes differ");
      }
      if (v[b].nodes() != graph.node_count()) throw std::invalid_argument("attack_batch: window/graph node mismatch");
    }
    const auto masks = choose_masks(objective, graph, v, y, keys.subspan(at, len), cfg);
    std::vector<RowMatrixXd> start, expanded;
    start.reserve(len);
    expanded.reserve(len);
    for (std::size_t b = 0; b < len; ++b) {
      start.push_back(v[b].inputs);
      expanded.push_back(masks[b].expand(v[b].history(), v[b].features));
    }
    auto moved = perturb(objective, start, y, expanded, cfg);
    for (std::size_t b = 0; b < len; ++b) {
      AttackResult r;
      r.mask = masks[b];
      r.iteration_log = std::move(moved[b].log);
      // Computed from the attacker's view, applied to the true window.
      RowMatrixXd delta = (moved[b].inputs - start[b]).cwiseProduct(expanded[b]);
      r.adversarial = h[b];
      r.adversarial.inputs = h[b].inputs + delta;
      if (cfg.domain_clip) {
        r.adversarial.inputs = r.adversarial.inputs.cwiseMax(0.0).cwiseMin(1.0);
        delta = r.adversarial.inputs - h[b].inputs;
      }
      r.perturbation = std::move(delta);
      results.push_back(std::move(r));
    }
  }
  return results;
}

AttackResult stpgd(const STModel& model, const StateWindow& window, const RowMatrixXd& labels,
                   const VictimMask& mask, AttackConfig cfg) {
  cfg.method = AttackMethod::kStpgd;
  cfg.validate(model.config.nodes);
  if (mask.size() != window.nodes()) throw std::invalid_argument("stpgd: mask size differs from node count");
  const RowMatrixXd m = mask.expand(window.history(), window.features);
  auto r = perturb(mae_input_gradient(model), std::span(&window.inputs, 1), std::span(&labels, 1), std::span(&m, 1), cfg);
  AttackResult out;
  out.mask = mask;
  out.adversarial = window;
  out.adversarial.inputs = r.front().inputs;
  out.perturbation = r.front().inputs - window.inputs;
  out.iteration_log = std::move(r.front().log);
  return out;
}

AttackResult stmim(const STModel& model, const StateWindow& window, const RowMatrixXd& labels,
                   const VictimMask& mask, AttackConfig cfg) {
  cfg.method = AttackMethod::kStmim;
  cfg.validate(model.config.nodes);
  if (mask.size() != window.nodes()) throw std::invalid_argument("stmim: mask size differs from node count");
  const RowMatrixXd m = mask.expand(window.history(), window.features);
  auto r = perturb(mae_input_gradient(model), std::span(&window.inputs, 1), std::span(&labels, 1), std::span(&m, 1), cfg);
  AttackResult out;
  out.mask = mask;
  out.adversarial = window;
  out.adversarial.inputs = r.front().inputs;
  out.perturbation = r.front().inputs - window.inputs;
  out.iteration_log = std::move(r.front().log);
  return out;
}

AttackResult greybox_attack(const STModel& target, const STModel& estimator, const STModel& labeler,
                            const TrafficNetwork& graph, const StateWindow& previous, const StateWindow& truth,
                            const AttackConfig& cfg, std::uint64_t key) {
  const StateWindow view = estimate_current_state(estimator, previous);
  const RowMatrixXd y = surrogate_label(labeler, view.inputs, cfg.epsilon, derive_seed(cfg.seed, "delta", key),
                                        cfg.label_noise_fraction);
  return attack_batch(mae_input_gradient(target), graph, std::span(&view, 1), std::span(&y, 1), std::span(&truth, 1),
                      std::span(&key, 1), cfg)
      .front();
}

AttackResult whitebox_attack(const STModel& target, const TrafficNetwork& graph, const StateWindow& window,
                             const RowMatrixXd& labels, const AttackConfig& cfg, std::uint64_t key) {
  return attack_batch(mae_input_gradient(target), graph, std::span(&window, 1), std::span(&labels, 1),
                      std::span(&window, 1), std::span(&key, 1), cfg)
      .front();
}

AttackResult blackbox_attack(const STModel& surrogate, const TrafficNetwork& graph, const StateWindow& previous,
                             const StateWindow& truth, const AttackConfig& cfg, std::uint64_t key) {
  return greybox_attack(surrogate, surrogate, surrogate, graph, previous, truth, cfg, key);
}

AttackRun run_attack(AttackSetting setting, const STModel& target, const TrafficNetwork& graph,
                     const DatasetSplit& split, const AttackConfig& cfg, const RunOptions& opts) {
  cfg.validate(graph.node_count());
  if (setting == AttackSetting::kBlack && opts.surrogate == nullptr) {
    throw std::invalid_argument("black-box attack needs a surrogate model");
  }
  const STModel& attacker = setting == AttackSetting::kBlack ? *opts.surrogate : target;
  const Normalizer& norm = split.normalizer();
  const WindowSpan all = split.all();
  const Index T = target.config.history;

  AttackRun run;
  const std::size_t first = split.test_offset();
  std::size_t count = all.size() - first;
  if (opts.max_windows > 0) count = std::min(count, opts.max_windows);
  if (count == 0) throw std::invalid_argument("run_attack: empty test split");
  for (std::size_t i = 0; i < count; ++i) run.indices.push_back(first + i);

  std::vector<StateWindow> views, truth;
  std::vector<RowMatrixXd> labels;
  std::vector<std::uint64_t> keys;
  views.reserve(count);
  truth.reserve(count);
  labels.reserve(count);
  for (std::size_t idx : run.indices) {
    truth.push_back(all[idx]);
    keys.push_back(idx);
  }
  if (setting == AttackSetting::kWhite) {
    views = truth;
    for (const auto& w : truth) labels.push_back(norm.normalize(w.labels));
  } else {
    // The attacker never reads the true current window or its labels here.
    for (std::size_t idx : run.indices) {
      if (opts.estimator) {
        views.push_back(opts.estimator(idx));
      } else {
        const StateWindow* prev = split.previous(idx, T);
        if (prev == nullptr) throw std::runtime_error("grey-box: no window precedes index " + std::to_string(idx));
        views.push_back(estimate_current_state(attacker, *prev));
      }
    }
    for (std::size_t i = 0; i < count; ++i) {
      if (opts.labeler) {
        labels.push_back(opts.labeler(views[i], run.indices[i]));
      } else {
        labels.push_back(surrogate_label(attacker, views[i].inputs, cfg.epsilon,
                                         derive_seed(cfg.seed, "delta", keys[i]), cfg.label_noise_fraction));
      }
    }
  }

  run.results = attack_batch(mae_input_gradient(attacker), graph, views, labels, truth, keys, cfg);

  std::vector<RowMatrixXd> clean_in, adv_in;
  clean_in.reserve(count);
  adv_in.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    clean_in.push_back(truth[i].inputs);
    adv_in.push_back(run.results[i].adversarial.inputs);
  }
  const auto clean = predict_batch(target, clean_in);
  const auto attacked = predict_batch(target, adv_in);
  const Index tau = target.config.horizon;
  const Index n = target.config.nodes;
  run.clean.resize(static_cast<Index>(count) * tau, n);
  run.attacked.resize(static_cast<Index>(count) * tau, n);
  run.truth.resize(static_cast<Index>(count) * tau, n);
  for (std::size_t i = 0; i < count; ++i) {
    const Index r = static_cast<Index>(i) * tau;
    run.clean.middleRows(r, tau) = norm.denormalize(clean[i]);
    run.attacked.middleRows(r, tau) = norm.denormalize(attacked[i]);
    run.truth.middleRows(r, tau) = truth[i].labels;
  }
  run.report = evaluate_attack(run.clean, run.attacked, run.truth, tau);
  return run;
}

void write_perturbation_csv(const std::string& path, const AttackResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const Index c = result.adversarial.features;
  out << (c == 1 ? "step,node,delta\n" : "step,node,feature,delta\n");
  out.precision(17);
  const RowMatrixXd& d = result.perturbation;
  for (Index t = 0; t < d.rows(); ++t) {
    for (Index node : result.mask.nodes()) {
      for (Index f = 0; f < c; ++f) {
        out << t << ',' << node << ',';
        if (c > 1) out << f << ',';
        out << d(t, node * c + f) << '\n';
      }
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string attack_summary_json(const AttackConfig& cfg, AttackSetting setting, const AttackRun& run) {
  nlohmann::ordered_json j;
  j["setting"] = to_string(setting);
  j["method"] = to_string(cfg.method);
  j["selector"] = to_string(cfg.selector);
  j["epsilon"] = cfg.epsilon;
  j["alpha"] = cfg.alpha;
  j["iterations"] = cfg.iterations;
  j["momentum"] = cfg.momentum;
  j["seed"] = cfg.seed;
  j["domain_clip"] = cfg.domain_clip;
  j["windows"] = run.results.size();
  const MetricsReport& r = run.report;
  j["metrics"] = {{"clean_g_mae", r.clean_g_mae}, {"g_mae", r.g_mae}, {"l_mae", r.l_mae},
                  {"g_rmse", r.g_rmse},           {"l_rmse", r.l_rmse}};
  if (r.degradation_pct) j["metrics"]["degradation_pct"] = *r.degradation_pct;
  if (!run.results.empty()) {
    double final_loss = 0.0;
    for (const auto& a : run.results) final_loss += a.iteration_log.empty() ? 0.0 : a.iteration_log.back();
    j["mean_final_loss"] = final_loss / static_cast<double>(run.results.size());
    j["first_window_mask"] = run.results.front().mask.nodes();
  }
  return j.dump(2);
}

}  // namespace stadv
