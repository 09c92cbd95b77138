#include "oracles.hpp"

#include "stadv/random.hpp"
#include "stadv/victim_selection.hpp"

#include <gtest/gtest.h>

namespace stadv {
namespace {

std::vector<Index> nodes_of(const VictimMask& m) { return m.nodes(); }

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

TrafficNetwork star(Index n) {
  std::vector<Edge> e;
  for (Index i = 1; i < n; ++i) e.push_back({0, i, 1.0});
  return TrafficNetwork(n, e);
}

TrafficNetwork ring(Index n) {
  std::vector<Edge> e;
  for (Index i = 0; i < n; ++i) e.push_back({i, (i + 1) % n, 1.0});
  return TrafficNetwork(n, e);
}

TrafficNetwork complete(Index n) {
  std::vector<Edge> e;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) e.push_back({i, j, 1.0});
  }
  return TrafficNetwork(n, e);
}

// Objective with a fixed per-sample gradient, independent of the inputs.
InputGradientFn constant_gradient(std::vector<RowMatrixXd> grads) {
  return [grads](std::span<const RowMatrixXd> xs, std::span<const RowMatrixXd>) {
    InputGradients out;
    for (std::size_t b = 0; b < xs.size(); ++b) {
      out.losses.push_back(0.0);
      out.grads.push_back(grads[b % grads.size()]);
    }
    return out;
  };
}

TEST(Saliency, LocalisedLoss) {
  RowMatrixXd g = RowMatrixXd::Zero(12, 4);
  g.col(0).setConstant(0.3);
  const std::vector<RowMatrixXd> xs(3, RowMatrixXd::Constant(12, 4, 0.5));
  const std::vector<RowMatrixXd> ys(3, RowMatrixXd::Zero(12, 4));
  const SaliencyVector s = tdns_saliency(constant_gradient({g}), xs, ys, 1);
  EXPECT_GT(s.per_node(0), 0.0);
  EXPECT_EQ(s.per_node.tail(3).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Saliency, OpposingSamplesCancel) {
  RowMatrixXd a = RowMatrixXd::Zero(1, 2), b = RowMatrixXd::Zero(1, 2);
  a(0, 1) = 1.0;
  b(0, 1) = -1.0;
  const std::vector<RowMatrixXd> xs(2, RowMatrixXd::Zero(1, 2));
  const SaliencyVector s = tdns_saliency(constant_gradient({a, b}), xs, xs, 1);
  EXPECT_EQ(s.fused_gradient(0, 1), 0.0);
  EXPECT_EQ(s.per_node(1), 0.0);
}

STModel mean_model(double w, Index T) {
  ModelConfig mc;
  mc.nodes = 1;
  mc.history = T;
  mc.horizon = 1;
  mc.temporal_layers = 0;
  mc.hidden = 1;
  mc.graph_layers = 0;
  mc.skip = false;
  mc.relative_inputs = false;
  mc.level_skip = false;
  STModel m = make_zero_model(mc, TrafficNetwork(1, {}));
  m.param("readout.w").setConstant(1.0 / static_cast<double>(T));
  m.param("head.w").setConstant(w);
  return m;
}

TEST(Saliency, SingleNodeLinearClosedForm) {
  const Index T = 8;
  const std::vector<RowMatrixXd> xs{RowMatrixXd::Constant(T, 1, 0.5), RowMatrixXd::Constant(T, 1, 0.2)};
  // Labels far below any reachable forecast keep the MAE sign fixed.
  const std::vector<RowMatrixXd> ys(2, RowMatrixXd::Constant(1, 1, -100.0));
  for (double w : {0.5, 2.0}) {
    const STModel m = mean_model(w, T);
    const SaliencyVector s = tdns_saliency(mae_input_gradient(m), xs, ys, 1);
    EXPECT_LT((s.fused_gradient.array() - w / T).abs().maxCoeff(), 1e-14);
    EXPECT_NEAR(s.per_node(0), w / T * std::sqrt(static_cast<double>(T)), 1e-14);
  }
}

TEST(Saliency, BatchOrderAndLossScale) {
  const TrafficNetwork g = oracle::random_graph(5, 0.5, 2);
  ModelConfig mc;
  mc.nodes = 5;
  const STModel m = make_model(mc, g, 3);
  Rng rng = make_rng(4, "test");
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<RowMatrixXd> xs, ys;
  for (int b = 0; b < 4; ++b) {
    xs.push_back(RowMatrixXd::NullaryExpr(12, 5, [&] { return u(rng); }));
    ys.push_back(RowMatrixXd::NullaryExpr(12, 5, [&] { return u(rng); }));
  }
  const SaliencyVector s = tdns_saliency(mae_input_gradient(m), xs, ys, 1);
  std::vector<RowMatrixXd> rx(xs.rbegin(), xs.rend()), ry(ys.rbegin(), ys.rend());
  const SaliencyVector r = tdns_saliency(mae_input_gradient(m), rx, ry, 1);
  EXPECT_LT((s.per_node - r.per_node).cwiseAbs().maxCoeff(), 1e-15);

  const InputGradientFn base = mae_input_gradient(m);
  const InputGradientFn scaled = [&](std::span<const RowMatrixXd> x, std::span<const RowMatrixXd> y) {
    InputGradients out = base(x, y);
    for (auto& gr : out.grads) gr *= 7.0;
    return out;
  };
  const SaliencyVector k = tdns_saliency(scaled, xs, ys, 1);
  EXPECT_LT((k.per_node - 7.0 * s.per_node).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(nodes_of(select_topk(k.per_node, 2)), nodes_of(select_topk(s.per_node, 2)));
}

TEST(Saliency, AccumulateAddsEveryIterate) {
  RowMatrixXd g = RowMatrixXd::Constant(2, 2, 1.0);
  const std::vector<RowMatrixXd> xs(1, RowMatrixXd::Zero(2, 2));
  SaliencyConfig cfg;
  cfg.accumulate_iterates = true;
  const SaliencyVector s = tdns_saliency(constant_gradient({g}), xs, xs, 1, cfg);
  EXPECT_DOUBLE_EQ(s.fused_gradient(0, 0), 6.0);  // K + 1 evaluations
}

TEST(Saliency, RejectsBadInputs) {
  const std::vector<RowMatrixXd> none;
  const std::vector<RowMatrixXd> one(1, RowMatrixXd::Zero(2, 2));
  const auto f = constant_gradient({RowMatrixXd::Zero(2, 2)});
  EXPECT_THROW(tdns_saliency(f, none, none, 1), std::invalid_argument);
  SaliencyConfig bad;
  bad.alpha = 0;
  EXPECT_THROW(tdns_saliency(f, one, one, 1, bad), std::invalid_argument);
  EXPECT_THROW(node_saliency(RowMatrixXd::Zero(2, 3), 2), std::invalid_argument);
}

TEST(TopK, Examples) {
  EXPECT_EQ(nodes_of(select_topk(vec({0.1, 0.9, 0.5}), 1)), std::vector<Index>{1});
  EXPECT_EQ(nodes_of(select_topk(vec({0.1, 0.9, 0.5}), 3)), (std::vector<Index>{0, 1, 2}));
  EXPECT_EQ(nodes_of(select_topk(vec({0.5, 0.5, 0.1}), 1)), std::vector<Index>{0});
  EXPECT_THROW(select_topk(vec({1, 2}), 0), std::invalid_argument);
  EXPECT_THROW(select_topk(vec({1, 2}), 3), std::invalid_argument);
}

TEST(Random, DeterminismAndFullBudget) {
  EXPECT_EQ(select_random(10, 10, 1).count(), 10);
  EXPECT_EQ(select_random(10, 10, 99).count(), 10);
  EXPECT_EQ(select_random(20, 3, 5).selected, select_random(20, 3, 5).selected);
  EXPECT_EQ(select_random(20, 3, 5).count(), 3);
  EXPECT_THROW(select_random(3, 4, 1), std::invalid_argument);
}

TEST(Random, UniformFrequencies) {
  std::vector<int> hits(10, 0);
  for (std::uint64_t s = 0; s < 10000; ++s) hits[static_cast<std::size_t>(select_random(10, 1, s).nodes()[0])]++;
  for (int h : hits) {
    EXPECT_GE(h, 900);
    EXPECT_LE(h, 1100);
  }
}

TEST(Degree, Examples) {
  EXPECT_EQ(nodes_of(select_degree(star(5), 1)), std::vector<Index>{0});
  EXPECT_EQ(nodes_of(select_degree(ring(6), 2)), (std::vector<Index>{0, 1}));
  for (std::uint64_t s = 0; s < 20; ++s) {
    const TrafficNetwork g = oracle::random_graph(8, 0.3, s, false);
    Eigen::VectorXd deg(8);
    for (Index i = 0; i < 8; ++i) deg(i) = static_cast<double>(g.degrees()[static_cast<std::size_t>(i)]);
    // Stable sort by descending degree is the oracle.
    std::vector<Index> order(8);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return deg(a) > deg(b); });
    for (Index eta = 1; eta <= 8; ++eta) {
      std::vector<Index> expect(order.begin(), order.begin() + eta);
      std::sort(expect.begin(), expect.end());
      EXPECT_EQ(nodes_of(select_degree(g, eta)), expect);
    }
  }
}

TEST(Betweenness, Examples) {
  const TrafficNetwork path(3, {{0, 1, 1.0}, {1, 2, 1.0}});
  EXPECT_EQ(nodes_of(select_betweenness(path, 1)), std::vector<Index>{1});
  EXPECT_DOUBLE_EQ(betweenness_centrality(path)(1), 1.0);
  EXPECT_EQ(betweenness_centrality(complete(4)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(nodes_of(select_betweenness(complete(4), 2)), (std::vector<Index>{0, 1}));
}

TEST(Betweenness, MatchesPathEnumeration) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Index n = 2 + static_cast<Index>(s % 7);
    const TrafficNetwork g = oracle::random_graph(n, 0.3, s, s % 3 != 0);
    const Eigen::VectorXd fast = betweenness_centrality(g);
    const Eigen::VectorXd slow = oracle::brute_force_betweenness(g);
    EXPECT_LT((fast - slow).cwiseAbs().maxCoeff(), 1e-12) << s;
    const auto order = oracle::ranking(slow, kCentralityTolerance);
    for (Index eta = 1; eta <= n; ++eta) {
      std::vector<Index> expect(order.begin(), order.begin() + eta);
      std::sort(expect.begin(), expect.end());
      EXPECT_EQ(nodes_of(select_betweenness(g, eta)), expect) << s << " eta " << eta;
    }
  }
}

TEST(PageRank, Examples) {
  const Eigen::VectorXd tri = pagerank(ring(3));
  EXPECT_LT((tri.array() - 1.0 / 3.0).abs().maxCoeff(), 1e-15);
  EXPECT_EQ(nodes_of(select_pagerank(ring(3), 1)), std::vector<Index>{0});
  const Eigen::VectorXd s = pagerank(star(5));
  for (Index i = 1; i < 5; ++i) EXPECT_GT(s(0), s(i));
  EXPECT_NEAR(s.sum(), 1.0, 1e-12);
}

TEST(PageRank, MatchesLinearSolve) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Index n = s % 2 ? 6 : 2 + static_cast<Index>(s % 7);
    const TrafficNetwork g = oracle::random_graph(n, 0.3, s, s % 3 != 0);
    const Eigen::VectorXd fast = pagerank(g);
    const Eigen::VectorXd exact = oracle::dense_pagerank(g);
    EXPECT_LT((fast - exact).cwiseAbs().maxCoeff(), 1e-8) << s;
    const auto order = oracle::ranking(exact, kCentralityTolerance);
    for (Index eta = 1; eta <= n; ++eta) {
      std::vector<Index> expect(order.begin(), order.begin() + eta);
      std::sort(expect.begin(), expect.end());
      EXPECT_EQ(nodes_of(select_pagerank(g, eta)), expect) << s << " eta " << eta;
    }
  }
}

TEST(PageRank, IsolatedNodesShareMass) {
  const Eigen::VectorXd r = pagerank(TrafficNetwork(4, {}));
  EXPECT_LT((r.array() - 0.25).abs().maxCoeff(), 1e-15);
}

TEST(Budget, TenPercentRoundedUp) {
  EXPECT_EQ(victim_budget(30), 3);
  EXPECT_EQ(victim_budget(31), 4);
  EXPECT_EQ(victim_budget(5), 1);
  EXPECT_EQ(victim_budget(325), 33);
}

TEST(Mask, ExpandIsConstantOverTime) {
  VictimMask m{{false, true, false}, 1};
  const RowMatrixXd e = m.expand(4, 2);
  EXPECT_EQ(e.rows(), 4);
  EXPECT_EQ(e.cols(), 6);
  for (Index t = 0; t < 4; ++t) {
    EXPECT_EQ(e.row(t), (Eigen::RowVectorXd(6) << 0, 0, 1, 1, 0, 0).finished());
  }
}

}  // namespace
}  // namespace stadv
