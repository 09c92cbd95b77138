#include "stadv/defense.hpp"

#include "stadv/random.hpp"

#include <numeric>
#include <stdexcept>

namespace stadv {

std::string to_string(DefenseStrategy s) {
  switch (s) {
    case DefenseStrategy::kAt: return "at";
    case DefenseStrategy::kMixup: return "mixup";
    case DefenseStrategy::kAtTdns: return "at-tdns";
  }
  return "?";
}

DefenseStrategy parse_strategy(const std::string& s) {
  if (s == "at") return DefenseStrategy::kAt;
  if (s == "mixup") return DefenseStrategy::kMixup;
  if (s == "at-tdns") return DefenseStrategy::kAtTdns;
  throw std::invalid_argument("unknown strategy '" + s + "' (at, mixup, at-tdns)");
}

BatchTransform defense_transform(const DefenseConfig& cfg, const TrafficNetwork& graph, const Normalizer& norm) {
  if (!(cfg.mix_ratio >= 0 && cfg.mix_ratio <= 1)) throw std::invalid_argument("defense: mix ratio must be in [0, 1]");
  AttackConfig inner = cfg.inner;
  inner.selector = cfg.strategy == DefenseStrategy::kAtTdns ? SelectorKind::kTdns : SelectorKind::kRandom;
  inner.validate(graph.node_count());
  const DefenseStrategy strategy = cfg.strategy;
  const double ratio = strategy == DefenseStrategy::kMixup ? cfg.mix_ratio : 1.0;
  return [inner, strategy, ratio, &graph, norm](const STModel& model, WindowSpan batch, std::uint64_t seed) {
    std::vector<StateWindow> out(batch.begin(), batch.end());
    // Positions to replace; the Bernoulli draws use their own stream so the
    // victim draws match plain AT whenever a window is selected.
    std::vector<std::size_t> chosen;
    if (strategy == DefenseStrategy::kMixup) {
      Rng rng = make_rng(seed, "mixup");
      std::bernoulli_distribution coin(ratio);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (coin(rng)) chosen.push_back(i);
      }
    } else {
      chosen.resize(batch.size());
      std::iota(chosen.begin(), chosen.end(), 0);
    }
    if (chosen.empty()) return out;
    std::vector<StateWindow> windows;
    std::vector<RowMatrixXd> labels;
    std::vector<std::uint64_t> keys;
    for (std::size_t i : chosen) {
      windows.push_back(batch[i]);
      labels.push_back(norm.normalize(batch[i].labels));
      keys.push_back(i);
    }
    AttackConfig a = inner;
    a.seed = seed;
    a.batch_size = windows.size();  // one saliency estimate per training batch
    auto results = attack_batch(mae_input_gradient(model), graph, windows, labels, windows, keys, a);
    for (std::size_t k = 0; k < chosen.size(); ++k) out[chosen[k]] = std::move(results[k].adversarial);
    return out;
  };
}

TrainResult adversarial_train(STModel model, const TrafficNetwork& graph, const DatasetSplit& split,
                              DefenseConfig cfg) {
  cfg.strategy = DefenseStrategy::kAt;
  return defend(std::move(model), graph, split, cfg);
}

TrainResult mixup_train(STModel model, const TrafficNetwork& graph, const DatasetSplit& split, DefenseConfig cfg) {
  cfg.strategy = DefenseStrategy::kMixup;
  return defend(std::move(model), graph, split, cfg);
}

TrainResult at_tdns_train(STModel model, const TrafficNetwork& graph, const DatasetSplit& split, DefenseConfig cfg) {
  cfg.strategy = DefenseStrategy::kAtTdns;
  return defend(std::move(model), graph, split, cfg);
}

TrainResult defend(STModel model, const TrafficNetwork& graph, const DatasetSplit& split, const DefenseConfig& cfg) {
  if (graph.node_count() != model.config.nodes) throw std::invalid_argument("defend: graph/model node mismatch");
  TrainResult r = train(std::move(model), split, cfg.train, defense_transform(cfg, graph, split.normalizer()));
  r.model.defense = to_string(cfg.strategy);
  return r;
}

}  // namespace stadv
