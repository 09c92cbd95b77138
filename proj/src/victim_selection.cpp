#include "stadv/victim_selection.hpp"

#include "stadv/random.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace stadv {

namespace {

void check_eta(Index n, Index eta) {
  if (eta < 1 || eta > n) {
    throw std::invalid_argument("victim budget " + std::to_string(eta) + " outside [1, " + std::to_string(n) + "]");
  }
}

RowMatrixXd sign_of(const RowMatrixXd& g) {
  return g.unaryExpr([](double v) { return double((v > 0) - (v < 0)); });
}

}  // namespace

Eigen::VectorXd node_saliency(const RowMatrixXd& fused_gradient, Index features) {
  if (features < 1 || fused_gradient.cols() % features != 0) {
    throw std::invalid_argument("node_saliency: columns not divisible by feature count");
  }
  const Index n = fused_gradient.cols() / features;
  const RowMatrixXd rect = fused_gradient.cwiseMax(0.0);
  Eigen::VectorXd s(n);
  for (Index i = 0; i < n; ++i) s(i) = rect.middleCols(i * features, features).norm();
  return s;
}

SaliencyVector tdns_saliency(const InputGradientFn& objective, std::span<const RowMatrixXd> inputs,
                             std::span<const RowMatrixXd> labels, Index features, const SaliencyConfig& cfg) {
  if (inputs.empty()) throw std::invalid_argument("tdns_saliency: empty batch");
  if (inputs.size() != labels.size()) throw std::invalid_argument("tdns_saliency: inputs and labels differ in count");
  if (!(cfg.epsilon >= 0) || !(cfg.alpha > 0) || cfg.iterations < 1) {
    throw std::invalid_argument("tdns_saliency: need epsilon >= 0, alpha > 0, iterations >= 1");
  }
  const Index rows = inputs.front().rows();
  const Index cols = inputs.front().cols();
  for (const auto& x : inputs) {
    if (x.rows() != rows || x.cols() != cols) throw std::invalid_argument("tdns_saliency: window shapes differ");
  }
  std::vector<RowMatrixXd> x(inputs.begin(), inputs.end());
  std::vector<RowMatrixXd> total(inputs.size(), RowMatrixXd::Zero(rows, cols));
  for (int k = 0; k <= cfg.iterations; ++k) {
    const InputGradients g = objective(x, labels);
    if (g.grads.size() != x.size()) throw std::invalid_argument("tdns_saliency: objective returned wrong count");
    if (cfg.accumulate_iterates || k == cfg.iterations) {
      for (std::size_t b = 0; b < x.size(); ++b) total[b] += g.grads[b];
    }
    if (k == cfg.iterations) break;
    for (std::size_t b = 0; b < x.size(); ++b) {
      const RowMatrixXd& ref = inputs[b];
      x[b] = (x[b] + cfg.alpha * sign_of(g.grads[b]))
                 .cwiseMax((ref.array() - cfg.epsilon).matrix())
                 .cwiseMin((ref.array() + cfg.epsilon).matrix());
    }
  }
  SaliencyVector out;
  out.fused_gradient = RowMatrixXd::Zero(rows, cols);
  for (const auto& t : total) out.fused_gradient += t;
  out.fused_gradient /= static_cast<double>(inputs.size());
  out.per_node = node_saliency(out.fused_gradient, features);
  return out;
}

Index VictimMask::count() const { return static_cast<Index>(std::count(selected.begin(), selected.end(), true)); }

std::vector<Index> VictimMask::nodes() const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (selected[i]) out.push_back(static_cast<Index>(i));
  }
  return out;
}

RowMatrixXd VictimMask::expand(Index steps, Index features) const {
  RowMatrixXd m = RowMatrixXd::Zero(steps, size() * features);
  for (Index i = 0; i < size(); ++i) {
    if (selected[static_cast<std::size_t>(i)]) m.middleCols(i * features, features).setOnes();
  }
  return m;
}

Index victim_budget(Index n, double fraction) {
  if (n < 1) throw std::invalid_argument("victim_budget: empty graph");
  if (!(fraction > 0) || fraction > 1) throw std::invalid_argument("victim_budget: fraction must be in (0, 1]");
  // Guard against 0.1*30 landing a hair above 3.
  const double raw = fraction * static_cast<double>(n);
  const Index k = static_cast<Index>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  return std::clamp<Index>(k, 1, n);
}

VictimMask select_topk(const Eigen::VectorXd& scores, Index eta, double tolerance) {
  const Index n = scores.size();
  check_eta(n, eta);
  if (!scores.allFinite()) throw std::invalid_argument("select_topk: non-finite score");
  VictimMask m{std::vector<bool>(static_cast<std::size_t>(n), false), eta};
  for (Index picked = 0; picked < eta; ++picked) {
    double best = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < n; ++i) {
      if (!m.selected[static_cast<std::size_t>(i)]) best = std::max(best, scores(i));
    }
    const double floor = best - tolerance * std::max(1.0, std::abs(best));
    for (Index i = 0; i < n; ++i) {
      if (!m.selected[static_cast<std::size_t>(i)] && scores(i) >= floor) {
        m.selected[static_cast<std::size_t>(i)] = true;
        break;
      }
    }
  }
  return m;
}

VictimMask select_random(Index n, Index eta, std::uint64_t seed) {
  check_eta(n, eta);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, "victims");
  // Partial Fisher-Yates: the first eta slots are a uniform sample.
  for (Index i = 0; i < eta; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
  }
  VictimMask m{std::vector<bool>(static_cast<std::size_t>(n), false), eta};
  for (Index i = 0; i < eta; ++i) m.selected[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;
  return m;
}

VictimMask select_degree(const TrafficNetwork& graph, Index eta) {
  Eigen::VectorXd deg(graph.node_count());
  for (Index i = 0; i < graph.node_count(); ++i) deg(i) = static_cast<double>(graph.degrees()[static_cast<std::size_t>(i)]);
  return select_topk(deg, eta);
}

Eigen::VectorXd betweenness_centrality(const TrafficNetwork& graph) {
  const Index n = graph.node_count();
  const auto& adj = graph.neighbors();
  Eigen::VectorXd cb = Eigen::VectorXd::Zero(n);
  std::vector<Index> stack;
  std::vector<std::vector<Index>> pred(static_cast<std::size_t>(n));
  std::vector<double> sigma(static_cast<std::size_t>(n)), delta(static_cast<std::size_t>(n));
  std::vector<Index> dist(static_cast<std::size_t>(n));
  for (Index s = 0; s < n; ++s) {
    stack.clear();
    for (auto& p : pred) p.clear();
    std::fill(sigma.begin(), sigma.end(), 0.0);
    std::fill(delta.begin(), delta.end(), 0.0);
    std::fill(dist.begin(), dist.end(), -1);
    sigma[static_cast<std::size_t>(s)] = 1.0;
    dist[static_cast<std::size_t>(s)] = 0;
    std::deque<Index> queue{s};
    while (!queue.empty()) {
      const Index v = queue.front();
      queue.pop_front();
      stack.push_back(v);
      for (const auto& [w, weight] : adj[static_cast<std::size_t>(v)]) {
        (void)weight;
        auto& dw = dist[static_cast<std::size_t>(w)];
        if (dw < 0) {
          dw = dist[static_cast<std::size_t>(v)] + 1;
          queue.push_back(w);
        }
        if (dw == dist[static_cast<std::size_t>(v)] + 1) {
          sigma[static_cast<std::size_t>(w)] += sigma[static_cast<std::size_t>(v)];
          pred[static_cast<std::size_t>(w)].push_back(v);
        }
      }
    }
    while (!stack.empty()) {
      const Index w = stack.back();
      stack.pop_back();
      for (Index v : pred[static_cast<std::size_t>(w)]) {
        delta[static_cast<std::size_t>(v)] += sigma[static_cast<std::size_t>(v)] / sigma[static_cast<std::size_t>(w)] *
                                              (1.0 + delta[static_cast<std::size_t>(w)]);
      }
      if (w != s) cb(w) += delta[static_cast<std::size_t>(w)];
    }
  }
  // Every unordered pair was counted from both endpoints.
  return cb / 2.0;
}

VictimMask select_betweenness(const TrafficNetwork& graph, Index eta) {
  return select_topk(betweenness_centrality(graph), eta, kCentralityTolerance);
}

Eigen::VectorXd pagerank(const TrafficNetwork& graph, double damping, int iterations) {
  const Index n = graph.node_count();
  if (n < 1) throw std::invalid_argument("pagerank: empty graph");
  if (!(damping >= 0 && damping <= 1)) throw std::invalid_argument("pagerank: damping must be in [0, 1]");
  if (iterations < 1) throw std::invalid_argument("pagerank: iterations must be >= 1");
  const auto& adj = graph.neighbors();
  const double uniform = 1.0 / static_cast<double>(n);
  Eigen::VectorXd r = Eigen::VectorXd::Constant(n, uniform);
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd next = Eigen::VectorXd::Zero(n);
    double dangling = 0.0;
    for (Index v = 0; v < n; ++v) {
      const auto& nb = adj[static_cast<std::size_t>(v)];
      if (nb.empty()) {
        dangling += r(v);
        continue;
      }
      const double share = r(v) / static_cast<double>(nb.size());
      for (const auto& [w, weight] : nb) {
        (void)weight;
        next(w) += share;
      }
    }
    r = (damping * (next.array() + dangling * uniform) + (1.0 - damping) * uniform).matrix();
  }
  return r;
}

VictimMask select_pagerank(const TrafficNetwork& graph, Index eta, double damping, int iterations) {
  return select_topk(pagerank(graph, damping, iterations), eta, kCentralityTolerance);
}

}  // namespace stadv
