#include "stadv/theory_bound.hpp"

#include "stadv/parallel.hpp"
#include "stadv/random.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stadv {

namespace {

Eigen::MatrixXd activate(const Eigen::MatrixXd& x, Activation a) {
  switch (a) {
    case Activation::kRelu: return x.cwiseMax(0.0);
    case Activation::kTanh: return x.array().tanh().matrix();
    case Activation::kSigmoid: return (1.0 / (1.0 + (-x.array()).exp())).matrix();
  }
  return x;
}

Eigen::MatrixXd gaussian(Rng& rng, Index rows, Index cols, double sd) {
  std::normal_distribution<double> nd(0.0, sd);
  Eigen::MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  }
  return m;
}

std::string matrix_text(const Eigen::MatrixXd& m) {
  std::ostringstream out;
  out.precision(17);
  out << '[';
  for (Index i = 0; i < m.rows(); ++i) {
    out << (i ? "; " : "");
    for (Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << m(i, j);
  }
  out << ']';
  return out.str();
}

struct Trial {
  double gap = 0.0;
  double bound = 0.0;
  double lambda = 0.0;
  double beta = 1.0;
  Index C = 0;
  Index L = 0;
  double eps = 0.0;
  Index eta = 0;
};

// Perturbs `count` random nodes of x by vectors of L2 norm <= eps. Half the
// draws sit on the sphere, where the bound is hardest to satisfy.
Eigen::MatrixXd perturb_nodes(Rng& rng, const Eigen::MatrixXd& x, double eps, Index count) {
  const Index n = x.rows();
  const Index d = x.cols();
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd adv = x;
  for (Index k = 0; k < count; ++k) {
    Eigen::RowVectorXd dir(d);
    for (Index j = 0; j < d; ++j) dir(j) = nd(rng);
    const double norm = dir.norm();
    if (norm == 0.0) continue;
    const double radius = u(rng) < 0.5 ? eps : eps * std::pow(u(rng), 1.0 / static_cast<double>(d));
    // Scale slightly inside the ball so rounding cannot push it past eps.
    adv.row(order[static_cast<std::size_t>(k)]) += dir * (radius * (1.0 - 1e-15) / norm);
  }
  return adv;
}

double layer_lambda(const ProofModel& pm) {
  double lambda = 0.0;
  for (const auto& w : pm.weights) lambda = std::max(lambda, spectral_norm(w));
  return lambda;
}

}  // namespace

Index ProofModel::max_neighbors() const {
  Index c = 0;
  for (Index i = 0; i < aggregation.rows(); ++i) {
    c = std::max<Index>(c, (aggregation.row(i).array() != 0.0).count());
  }
  return c;
}

void ProofModel::validate() const {
  if (aggregation.rows() != aggregation.cols() || aggregation.rows() == 0) {
    throw std::invalid_argument("ProofModel: aggregation must be square and non-empty");
  }
  if (!aggregation.allFinite() || aggregation.cwiseAbs().maxCoeff() > 1.0) {
    throw std::invalid_argument("ProofModel: aggregation weights must satisfy |e_ij| <= 1");
  }
  if (weights.empty()) throw std::invalid_argument("ProofModel: need at least one layer");
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (!weights[k].allFinite()) throw std::invalid_argument("ProofModel: non-finite weights");
    if (k > 0 && weights[k].rows() != weights[k - 1].cols()) {
      throw std::invalid_argument("ProofModel: layer " + std::to_string(k) + " width mismatch");
    }
  }
  if (!(beta > 0)) throw std::invalid_argument("ProofModel: beta must be positive");
}

ProofModel make_proof_model(const TrafficNetwork& graph, const std::vector<Index>& dims, std::uint64_t seed,
                            bool self_loops, Activation act) {
  if (dims.size() < 2) throw std::invalid_argument("make_proof_model: need at least input and output widths");
  ProofModel pm;
  pm.aggregation = graph.adjacency();
  if (self_loops) pm.aggregation.diagonal().setOnes();
  pm.activation = act;
  Rng rng = make_rng(seed, "bound.weights");
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    pm.weights.push_back(gaussian(rng, dims[k], dims[k + 1], 1.0 / std::sqrt(static_cast<double>(dims[k]))));
  }
  pm.validate();
  return pm;
}

Eigen::MatrixXd proof_forward(const ProofModel& pm, const Eigen::MatrixXd& x) {
  if (x.rows() != pm.nodes() || x.cols() != pm.input_dim()) {
    throw std::invalid_argument("proof_forward: features must be " + std::to_string(pm.nodes()) + " x " +
                                std::to_string(pm.input_dim()));
  }
  Eigen::MatrixXd z = x;
  for (const auto& w : pm.weights) z = activate(pm.aggregation * z * w, pm.activation);
  return z;
}

double spectral_norm(const Eigen::MatrixXd& w, int iterations, double tolerance) {
  if (!w.allFinite()) throw std::invalid_argument("spectral_norm: non-finite matrix");
  if (w.size() == 0 || w.isZero(0.0)) return 0.0;
  const Eigen::MatrixXd gram = w.transpose() * w;
  // A fixed pseudo-random start is almost surely not orthogonal to the top
  // singular direction.
  Rng rng = make_rng(0x5eed, "spectral");
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd v(gram.rows());
  for (Index i = 0; i < v.size(); ++i) v(i) = nd(rng);
  v.normalize();
  double estimate = v.dot(gram * v);
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd next = gram * v;
    const double norm = next.norm();
    if (norm == 0.0) break;
    v = next / norm;
    const double updated = v.dot(gram * v);
    const bool done = std::abs(updated - estimate) <= tolerance * std::max(1.0, std::abs(updated));
    estimate = updated;
    if (done) break;
  }
  return std::sqrt(std::max(0.0, estimate));
}

double theorem_bound(double lambda, double beta, double C, Index L, double eps, double eta) {
  if (lambda < 0 || beta < 0 || C < 0 || eps < 0 || eta < 0) {
    throw std::invalid_argument("theorem_bound: arguments must be non-negative");
  }
  if (L < 1) throw std::invalid_argument("theorem_bound: L must be >= 1");
  return std::pow(lambda * beta * C, 2.0 * static_cast<double>(L)) * eps * eps * eta;
}

double embedding_gap(const ProofModel& pm, const Eigen::MatrixXd& clean, const Eigen::MatrixXd& adv, double eps,
                     Index eta) {
  if (clean.rows() != adv.rows() || clean.cols() != adv.cols()) {
    throw std::invalid_argument("embedding_gap: clean and adversarial shapes differ");
  }
  Index changed = 0;
  for (Index i = 0; i < clean.rows(); ++i) {
    const double d = (adv.row(i) - clean.row(i)).norm();
    if (d == 0.0) continue;
    ++changed;
    if (d > eps * (1.0 + 1e-12)) {
      throw std::invalid_argument("embedding_gap: node " + std::to_string(i) + " moved by " + std::to_string(d) +
                                  " > eps");
    }
  }
  if (changed > eta) {
    throw std::invalid_argument("embedding_gap: " + std::to_string(changed) + " nodes perturbed, budget " +
                                std::to_string(eta));
  }
  return (proof_forward(pm, adv) - proof_forward(pm, clean)).squaredNorm();
}

BoundViolation::BoundViolation(std::size_t trial, std::uint64_t trial_seed, const std::string& details)
    : std::runtime_error("bound violated in trial " + std::to_string(trial) + " (seed " + std::to_string(trial_seed) +
                         "): " + details),
      trial_(trial),
      trial_seed_(trial_seed) {}

bool exceeds_bound(double gap, double bound) { return gap > bound * (1.0 + 1e-12) + 1e-15; }

std::string BoundReport::to_json() const {
  nlohmann::ordered_json j;
  j["lambda"] = lambda;
  j["beta"] = beta;
  j["C"] = C;
  j["L"] = L;
  j["epsilon"] = epsilon;
  j["eta"] = eta;
  j["bound_value"] = bound_value;
  j["trials"] = trials;
  j["seed"] = seed;
  j["max_ratio"] = max_ratio;
  j["empirical_gaps"] = empirical_gaps;
  return j.dump(2);
}

BoundReport verify_bound(const ProofModel& pm, double eps, Index eta, std::size_t trials, std::uint64_t seed) {
  pm.validate();
  if (!(eps >= 0)) throw std::invalid_argument("verify_bound: eps must be >= 0");
  if (eta < 1 || eta > pm.nodes()) throw std::invalid_argument("verify_bound: eta must be in [1, n]");
  if (trials < 1) throw std::invalid_argument("verify_bound: trials must be >= 1");
  BoundReport r;
  r.lambda = layer_lambda(pm);
  r.beta = pm.beta;
  r.C = pm.max_neighbors();
  r.L = pm.layers();
  r.epsilon = eps;
  r.eta = eta;
  r.bound_value = theorem_bound(r.lambda, r.beta, static_cast<double>(r.C), r.L, eps, static_cast<double>(eta));
  r.trials = trials;
  r.seed = seed;
  r.empirical_gaps.assign(trials, 0.0);
  r.ratios.assign(trials, 0.0);
  std::vector<std::string> failures(trials);
  parallel_for(trials, [&](std::size_t t) {
    const std::uint64_t ts = derive_seed(seed, "bound.trial", t);
    Rng rng = make_rng(ts, "trial");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd x(pm.nodes(), pm.input_dim());
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
    std::uniform_int_distribution<Index> k(1, eta);
    const Eigen::MatrixXd adv = perturb_nodes(rng, x, eps, k(rng));
    const double gap = embedding_gap(pm, x, adv, eps, eta);
    r.empirical_gaps[t] = gap;
    r.ratios[t] = r.bound_value > 0 ? gap / r.bound_value : 0.0;
    if (exceeds_bound(gap, r.bound_value)) {
      failures[t] = "gap " + std::to_string(gap) + " > bound " + std::to_string(r.bound_value) +
                    "; clean=" + matrix_text(x) + " adv=" + matrix_text(adv);
    }
  });
  for (std::size_t t = 0; t < trials; ++t) {
    if (!failures[t].empty()) throw BoundViolation(t, derive_seed(seed, "bound.trial", t), failures[t]);
  }
  r.max_ratio = *std::max_element(r.ratios.begin(), r.ratios.end());
  return r;
}

BoundReport verify_bound_randomized(std::size_t trials, std::uint64_t seed, const RandomBoundOptions& opts) {
  if (trials < 1) throw std::invalid_argument("verify_bound: trials must be >= 1");
  if (opts.max_nodes < 1 || opts.max_layers < 1 || opts.max_width < 1) {
    throw std::invalid_argument("verify_bound: limits must be >= 1");
  }
  std::vector<Trial> results(trials);
  std::vector<std::string> failures(trials);
  parallel_for(trials, [&](std::size_t t) {
    const std::uint64_t ts = derive_seed(seed, "bound.trial", t);
    Rng rng = make_rng(ts, "trial");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<Index> pick_n(1, opts.max_nodes);
    std::uniform_int_distribution<Index> pick_l(1, opts.max_layers);
    std::uniform_int_distribution<Index> pick_w(1, opts.max_width);
    const Index n = pick_n(rng);
    const bool self_loops = u(rng) < 0.5;
    const double density = u(rng);
    ProofModel pm;
    pm.activation = opts.activation;
    pm.aggregation = Eigen::MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        if (u(rng) < density) pm.aggregation(i, j) = pm.aggregation(j, i) = 2.0 * u(rng) - 1.0;
      }
      if (self_loops) pm.aggregation(i, i) = 2.0 * u(rng) - 1.0;
    }
    const Index L = pick_l(rng);
    Index width = pick_w(rng);
    const double scale = 0.25 + 1.75 * u(rng);
    for (Index k = 0; k < L; ++k) {
      const Index next = pick_w(rng);
      pm.weights.push_back(gaussian(rng, width, next, scale / std::sqrt(static_cast<double>(width))));
      width = next;
    }
    // One trial in ten uses a zero budget.
    const double eps = u(rng) < 0.1 ? 0.0 : u(rng);
    std::uniform_int_distribution<Index> pick_eta(1, n);
    const Index eta = pick_eta(rng);

    Trial& tr = results[t];
    tr.lambda = layer_lambda(pm);
    tr.beta = pm.beta;
    tr.C = pm.max_neighbors();
    tr.L = L;
    tr.eps = eps;
    tr.eta = eta;
    tr.bound = theorem_bound(tr.lambda, tr.beta, static_cast<double>(tr.C), L, eps, static_cast<double>(eta));
    Eigen::MatrixXd x(n, pm.input_dim());
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = 2.0 * u(rng) - 1.0;
    std::uniform_int_distribution<Index> pick_k(1, eta);
    const Eigen::MatrixXd adv = perturb_nodes(rng, x, eps, pick_k(rng));
    tr.gap = embedding_gap(pm, x, adv, eps, eta);
    if (exceeds_bound(tr.gap, tr.bound)) {
      failures[t] = "gap " + std::to_string(tr.gap) + " > bound " + std::to_string(tr.bound) + " (n=" +
                    std::to_string(n) + ", L=" + std::to_string(L) + ", C=" + std::to_string(tr.C) +
                    ", lambda=" + std::to_string(tr.lambda) + "); E=" + matrix_text(pm.aggregation) +
                    " clean=" + matrix_text(x) + " adv=" + matrix_text(adv);
    }
  });
  for (std::size_t t = 0; t < trials; ++t) {
    if (!failures[t].empty()) throw BoundViolation(t, derive_seed(seed, "bound.trial", t), failures[t]);
  }
  BoundReport r;
  r.trials = trials;
  r.seed = seed;
  std::size_t worst = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const double ratio = results[t].bound > 0 ? results[t].gap / results[t].bound : 0.0;
    r.empirical_gaps.push_back(results[t].gap);
    r.ratios.push_back(ratio);
    if (ratio > r.ratios[worst]) worst = t;
  }
  const Trial& w = results[worst];
  r.lambda = w.lambda;
  r.beta = w.beta;
  r.C = w.C;
  r.L = w.L;
  r.epsilon = w.eps;
  r.eta = w.eta;
  r.bound_value = w.bound;
  r.max_ratio = r.ratios[worst];
  return r;
}

}  // namespace stadv
