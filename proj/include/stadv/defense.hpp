#pragma once

// Adversarial training: every batch is re-attacked against the current
// weights (white-box, labels known) before the gradient step.

#include "stadv/attack.hpp"
#include "stadv/forecaster.hpp"

#include <string>

namespace stadv {

enum class DefenseStrategy { kAt, kMixup, kAtTdns };

std::string to_string(DefenseStrategy s);
DefenseStrategy parse_strategy(const std::string& s);

struct DefenseConfig {
  DefenseStrategy strategy = DefenseStrategy::kAt;
  AttackConfig inner;       // selector is forced by the strategy
  double mix_ratio = 0.5;   // Mixup: probability a window is replaced by its adversarial version
  TrainConfig train;
};

// Batch transform implementing the strategy's inner maximization; `graph`
// must outlive it.
BatchTransform defense_transform(const DefenseConfig& cfg, const TrafficNetwork& graph, const Normalizer& norm);

// Each continues training from `model`; the result is tagged with the strategy.
TrainResult adversarial_train(STModel model, const TrafficNetwork& graph, const DatasetSplit& split,
                              DefenseConfig cfg);
TrainResult mixup_train(STModel model, const TrafficNetwork& graph, const DatasetSplit& split, DefenseConfig cfg);
TrainResult at_tdns_train(STModel model, const TrafficNetwork& graph, const DatasetSplit& split, DefenseConfig cfg);
TrainResult defend(STModel model, const TrafficNetwork& graph, const DatasetSplit& split, const DefenseConfig& cfg);

}  // namespace stadv
