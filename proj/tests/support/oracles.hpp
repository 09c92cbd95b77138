#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance runner. Each one is deliberately naive.

#include "stadv/traffic_data.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace stadv::oracle {

RowMatrixXd naive_matmul(const RowMatrixXd& a, const RowMatrixXd& b);

// Sum over unordered pairs s < t of (shortest s-t paths through v) / (all
// shortest s-t paths), with every shortest path enumerated explicitly.
Eigen::VectorXd brute_force_betweenness(const TrafficNetwork& graph);

// Stationary vector of the damped walk from a dense linear solve.
Eigen::VectorXd dense_pagerank(const TrafficNetwork& graph, double damping = 0.85);

// Indices sorted by score descending, lowest index first among scores equal
// within the relative tolerance of the best remaining one.
std::vector<Index> ranking(const Eigen::VectorXd& scores, double tolerance);

double naive_mae(const RowMatrixXd& a, const RowMatrixXd& b);
double naive_rmse(const RowMatrixXd& a, const RowMatrixXd& b);

// Erdos-Renyi graph with weights in (0,1]; when `connected` is set a random
// spanning tree is added first.
TrafficNetwork random_graph(Index n, double p, std::uint64_t seed, bool connected = true);

struct GradientCase {
  std::string name;
  double max_relative_error = 0.0;
  Index checked = 0;
};

// Finite-difference check of every differentiable tape primitive on random
// operands drawn from `seed`.
std::vector<GradientCase> primitive_gradient_cases(std::uint64_t seed);

// Finite-difference check of the forecaster MAE loss with respect to every
// parameter and the inputs, on a small random model.
GradientCase forecaster_gradient_case(std::uint64_t seed);

}  // namespace stadv::oracle
