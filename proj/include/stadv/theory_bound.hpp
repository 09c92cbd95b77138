#pragma once

// Worst-case embedding gap of a pure graph-convolution stack
//   Z^(k+1) = act(E Z^(k) W^(k)),   Z^(0) = node features,
// under perturbations of at most eta nodes with per-node L2 norm <= eps:
//   ||Z^(L) - Z'^(L)||_F^2 <= (lambda beta C)^(2L) eps^2 eta,
// with lambda the largest layer spectral norm, beta the activation's
// Lipschitz constant and C the largest neighbourhood size.

#include "stadv/forecaster.hpp"
#include "stadv/traffic_data.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stadv {

struct ProofModel {
  Eigen::MatrixXd aggregation;          // e_ij, n x n, |e_ij| <= 1
  std::vector<Eigen::MatrixXd> weights;  // W^(k): d_k x d_(k+1)
  Activation activation = Activation::kRelu;
  double beta = 1.0;

  Index nodes() const { return aggregation.rows(); }
  Index layers() const { return static_cast<Index>(weights.size()); }
  Index input_dim() const { return weights.empty() ? 0 : weights.front().rows(); }
  // C: the largest number of nonzero aggregation weights in a row.
  Index max_neighbors() const;
  void validate() const;
};

// Aggregation from the graph's edge weights; the diagonal is 1 when
// `self_loops` is set and 0 otherwise. Weights are Gaussian with standard
// deviation 1/sqrt(fan-in), drawn from the "bound.weights" stream.
ProofModel make_proof_model(const TrafficNetwork& graph, const std::vector<Index>& dims, std::uint64_t seed,
                            bool self_loops = false, Activation act = Activation::kRelu);

// Z^(L) for node features x (n x d_0).
Eigen::MatrixXd proof_forward(const ProofModel& pm, const Eigen::MatrixXd& x);

// Largest singular value by power iteration on W^T W.
double spectral_norm(const Eigen::MatrixXd& w, int iterations = 200, double tolerance = 1e-10);

double theorem_bound(double lambda, double beta, double C, Index L, double eps, double eta);

// Squared Frobenius distance of the L-th layer embeddings. Throws unless
// adv differs from clean on at most eta nodes, each by L2 norm <= eps.
double embedding_gap(const ProofModel& pm, const Eigen::MatrixXd& clean, const Eigen::MatrixXd& adv, double eps,
                     Index eta);

struct BoundReport {
  double lambda = 0.0;
  double beta = 1.0;
  Index C = 0;
  Index L = 0;
  double epsilon = 0.0;
  Index eta = 0;
  double bound_value = 0.0;
  std::vector<double> empirical_gaps;
  std::vector<double> ratios;
  double max_ratio = 0.0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;

  std::string to_json() const;
};

class BoundViolation : public std::runtime_error {
 public:
  BoundViolation(std::size_t trial, std::uint64_t trial_seed, const std::string& details);
  std::size_t trial() const { return trial_; }
  std::uint64_t trial_seed() const { return trial_seed_; }

 private:
  std::size_t trial_;
  std::uint64_t trial_seed_;
};

// A gap counts as a violation only beyond floating-point slack on the bound.
bool exceeds_bound(double gap, double bound);

// Random clean features in [0,1], random victim sets of size <= eta and
// per-node perturbations with L2 norm <= eps, all on one fixed model.
BoundReport verify_bound(const ProofModel& pm, double eps, Index eta, std::size_t trials, std::uint64_t seed);

struct RandomBoundOptions {
  Index max_nodes = 10;
  Index max_layers = 3;
  Index max_width = 6;
  Activation activation = Activation::kRelu;
};

// Every trial draws its own graph (n <= max_nodes, signed e_ij in [-1,1],
// optional self-loops), depth, widths, weights, eps and eta. The report's
// scalar fields describe the trial with the largest gap/bound ratio.
BoundReport verify_bound_randomized(std::size_t trials, std::uint64_t seed, const RandomBoundOptions& opts = {});

}  // namespace stadv
