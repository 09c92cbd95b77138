#pragma once

// Masked iterative attacks on traffic windows and their grey-, white- and
// black-box orchestrations.

#include "stadv/forecaster.hpp"
#include "stadv/metrics.hpp"
#include "stadv/victim_selection.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stadv {

enum class AttackMethod { kStpgd, kStmim };
enum class SelectorKind { kTdns, kRandom, kDegree, kBetweenness, kPagerank };
enum class AttackSetting { kGrey, kWhite, kBlack };

std::string to_string(AttackMethod m);
std::string to_string(SelectorKind s);
std::string to_string(AttackSetting s);
AttackMethod parse_method(const std::string& s);
SelectorKind parse_selector(const std::string& s);
AttackSetting parse_setting(const std::string& s);

struct AttackConfig {
  double epsilon = 0.5;  // L-infinity budget, normalized units
  double alpha = 0.1;
  int iterations = 5;
  Index budget = 0;  // victims per window; 0 means ceil(0.1 n)
  SelectorKind selector = SelectorKind::kTdns;
  AttackMethod method = AttackMethod::kStpgd;
  double momentum = 1.0;
  std::uint64_t seed = 0;
  std::size_t batch_size = 64;  // windows fused per saliency estimate
  bool domain_clip = false;     // also project adversarial inputs onto [0,1]
  bool accumulate_saliency = false;
  double label_noise_fraction = 0.1;

  Index victims(Index n) const { return budget > 0 ? budget : victim_budget(n); }
  void validate(Index n) const;
};

struct AttackResult {
  StateWindow adversarial;
  VictimMask mask;
  RowMatrixXd perturbation;  // T x (n*c)
  std::vector<double> iteration_log;
};

// Elementwise clamp of x into [ref - eps, ref + eps].
template <typename A, typename B>
auto clip_ball(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& ref, double eps) {
  return x.cwiseMax((ref.array() - eps).matrix()).cwiseMin((ref.array() + eps).matrix());
}

struct PerturbResult {
  RowMatrixXd inputs;
  std::vector<double> log;  // loss after each step
};

// Masked sign-gradient iterations from `start` (also the ball centre) using
// cfg.method; masks are T x (n*c) 0/1 matrices.
std::vector<PerturbResult> perturb(const InputGradientFn& objective, std::span<const RowMatrixXd> start,
                                   std::span<const RowMatrixXd> labels, std::span<const RowMatrixXd> masks,
                                   const AttackConfig& cfg);

// Single-window attacks; `labels` are normalized tau x n.
AttackResult stpgd(const STModel& model, const StateWindow& window, const RowMatrixXd& labels,
                   const VictimMask& mask, AttackConfig cfg);
AttackResult stmim(const STModel& model, const StateWindow& window, const RowMatrixXd& labels,
                   const VictimMask& mask, AttackConfig cfg);

// Batch pipeline shared by every setting. `views` are the windows the
// attacker sees (estimated or true), `labels` its normalized targets,
// `truth` the windows the perturbation is finally composed onto, `keys`
// stable per-window identifiers for random streams.
std::vector<AttackResult> attack_batch(const InputGradientFn& objective, const TrafficNetwork& graph,
                                       std::span<const StateWindow> views, std::span<const RowMatrixXd> labels,
                                       std::span<const StateWindow> truth, std::span<const std::uint64_t> keys,
                                       const AttackConfig& cfg);

// Estimates the current window from `previous` with `estimator`, labels it
// with `labeler` plus uniform noise, attacks `target` and composes the
// perturbation onto `truth`. `truth` is used for nothing else.
AttackResult greybox_attack(const STModel& target, const STModel& estimator, const STModel& labeler,
                            const TrafficNetwork& graph, const StateWindow& previous, const StateWindow& truth,
                            const AttackConfig& cfg, std::uint64_t key = 0);
AttackResult whitebox_attack(const STModel& target, const TrafficNetwork& graph, const StateWindow& window,
                             const RowMatrixXd& labels, const AttackConfig& cfg, std::uint64_t key = 0);
// Grey-box attack computed entirely on the surrogate.
AttackResult blackbox_attack(const STModel& surrogate, const TrafficNetwork& graph, const StateWindow& previous,
                             const StateWindow& truth, const AttackConfig& cfg, std::uint64_t key = 0);

// Hooks for the grey-box path; defaults use the pre-trained models.
using StateEstimator = std::function<StateWindow(std::size_t index)>;
using LabelSource = std::function<RowMatrixXd(const StateWindow& view, std::size_t index)>;

struct AttackRun {
  std::vector<std::size_t> indices;  // into split.all()
  std::vector<AttackResult> results;
  RowMatrixXd clean;     // stacked target forecasts on true windows, raw units
  RowMatrixXd attacked;  // stacked target forecasts on adversarial windows
  RowMatrixXd truth;     // stacked labels
  MetricsReport report;
};

struct RunOptions {
  std::size_t max_windows = 0;           // 0 = whole test split
  const STModel* surrogate = nullptr;    // black-box only
  StateEstimator estimator;              // grey/black-box override
  LabelSource labeler;                   // grey/black-box override
};

// Attacks every test window of `split` and evaluates on `target`.
AttackRun run_attack(AttackSetting setting, const STModel& target, const TrafficNetwork& graph,
                     const DatasetSplit& split, const AttackConfig& cfg, const RunOptions& opts = {});

// step,node,delta rows for every victim entry; multi-feature windows add a
// feature column before delta.
void write_perturbation_csv(const std::string& path, const AttackResult& result);
std::string attack_summary_json(const AttackConfig& cfg, AttackSetting setting, const AttackRun& run);

}  // namespace stadv
