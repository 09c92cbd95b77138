#pragma once

// Victim-node selection: gradient saliency over a batch of windows and the
// topology baselines (random, degree, betweenness, PageRank).

#include "stadv/forecaster.hpp"
#include "stadv/traffic_data.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace stadv {

struct SaliencyVector {
  Eigen::VectorXd per_node;     // n, non-negative
  RowMatrixXd fused_gradient;   // T x (n*c), batch-averaged raw gradient
};

struct SaliencyConfig {
  double epsilon = 0.5;
  double alpha = 0.1;
  int iterations = 5;
  // Sum the gradient over every iterate instead of reading it at the last one.
  bool accumulate_iterates = false;
};

// Unmasked sign-gradient ascent around each window, gradient read at the
// final iterate, averaged over the batch, rectified, then reduced to a
// per-node L2 norm over the time and feature axes.
SaliencyVector tdns_saliency(const InputGradientFn& objective, std::span<const RowMatrixXd> inputs,
                             std::span<const RowMatrixXd> labels, Index features,
                             const SaliencyConfig& cfg = {});

// Per-node L2 norm of ReLU(g) over time and features; g is T x (n*c).
Eigen::VectorXd node_saliency(const RowMatrixXd& fused_gradient, Index features);

struct VictimMask {
  std::vector<bool> selected;
  Index budget = 0;

  Index size() const { return static_cast<Index>(selected.size()); }
  Index count() const;
  std::vector<Index> nodes() const;
  // Expands to a T x (n*c) 0/1 matrix constant over time.
  RowMatrixXd expand(Index steps, Index features) const;
};

// ceil(fraction * n), at least 1.
Index victim_budget(Index n, double fraction = 0.10);

// Top-eta by score, lowest index first among scores within `tolerance` of
// the best remaining one.
VictimMask select_topk(const Eigen::VectorXd& scores, Index eta, double tolerance = 0.0);
VictimMask select_random(Index n, Index eta, std::uint64_t seed);
VictimMask select_degree(const TrafficNetwork& graph, Index eta);

// Unweighted shortest-path betweenness (Brandes), undirected pair counting.
Eigen::VectorXd betweenness_centrality(const TrafficNetwork& graph);
VictimMask select_betweenness(const TrafficNetwork& graph, Index eta);

// Power iteration on the row-stochastic transition with uniform teleport;
// dangling nodes spread their mass uniformly.
Eigen::VectorXd pagerank(const TrafficNetwork& graph, double damping = 0.85, int iterations = 200);
VictimMask select_pagerank(const TrafficNetwork& graph, Index eta, double damping = 0.85,
                           int iterations = 200);

// Relative tolerance used when ranking floating-point centralities.
inline constexpr double kCentralityTolerance = 1e-9;

}  // namespace stadv
