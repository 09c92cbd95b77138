#include "oracles.hpp"

#include "stadv/random.hpp"
#include "stadv/theory_bound.hpp"

#include "json.hpp"

#include <gtest/gtest.h>

namespace stadv {
namespace {

TEST(SpectralNorm, Examples) {
  EXPECT_NEAR(spectral_norm(Eigen::MatrixXd::Identity(3, 3)), 1.0, 1e-12);
  EXPECT_NEAR(spectral_norm(Eigen::Vector2d(2.0, 0.5).asDiagonal().toDenseMatrix()), 2.0, 1e-12);
  EXPECT_EQ(spectral_norm(Eigen::MatrixXd::Zero(4, 3)), 0.0);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Ones(2, 2);
  bad(0, 1) = std::nan("");
  EXPECT_THROW(spectral_norm(bad), std::invalid_argument);
}

TEST(SpectralNorm, MatchesGramEigenSolve) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng rng = make_rng(s, "test.spectral");
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::MatrixXd w(5, 5);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = nd(rng);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w.transpose() * w);
    EXPECT_NEAR(spectral_norm(w), std::sqrt(es.eigenvalues().maxCoeff()), 1e-8) << s;
  }
}

TEST(TheoremBound, Arithmetic) {
  EXPECT_DOUBLE_EQ(theorem_bound(1, 1, 1, 1, 0.5, 10), 2.5);
  EXPECT_EQ(theorem_bound(3, 1, 4, 2, 0.0, 5), 0.0);
  EXPECT_NEAR(theorem_bound(2, 1, 3, 2, 0.1, 4), 51.84, 1e-12);
  EXPECT_THROW(theorem_bound(1, 1, 1, 0, 0.5, 1), std::invalid_argument);
  EXPECT_THROW(theorem_bound(-1, 1, 1, 1, 0.5, 1), std::invalid_argument);
}

TEST(TheoremBound, Monotone) {
  const double base = theorem_bound(1.5, 1, 2, 2, 0.3, 3);
  EXPECT_GE(theorem_bound(1.6, 1, 2, 2, 0.3, 3), base);
  EXPECT_GE(theorem_bound(1.5, 1.1, 2, 2, 0.3, 3), base);
  EXPECT_GE(theorem_bound(1.5, 1, 3, 2, 0.3, 3), base);
  EXPECT_GE(theorem_bound(1.5, 1, 2, 2, 0.4, 3), base);
  EXPECT_GE(theorem_bound(1.5, 1, 2, 2, 0.3, 4), base);
  EXPECT_GE(theorem_bound(1.5, 1, 2, 3, 0.3, 3), base);  // lambda*beta*C >= 1
}

TEST(ProofModel, ForwardMatchesPerNodeLoop) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Index n = 2 + static_cast<Index>(s % 5);
    const TrafficNetwork g = oracle::random_graph(n, 0.5, s);
    const ProofModel pm = make_proof_model(g, {3, 4, 2}, s, s % 2 == 0);
    Rng rng = make_rng(s, "test.x");
    std::uniform_real_distribution<double> u(-1, 1);
    Eigen::MatrixXd x(n, 3);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
    Eigen::MatrixXd z = x;
    for (const auto& w : pm.weights) {
      Eigen::MatrixXd next = Eigen::MatrixXd::Zero(n, w.cols());
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
          const double e = pm.aggregation(i, j);
          for (Index c = 0; c < w.cols(); ++c) {
            for (Index k = 0; k < w.rows(); ++k) next(i, c) += e * z(j, k) * w(k, c);
          }
        }
      }
      z = next.cwiseMax(0.0);
    }
    EXPECT_LT((proof_forward(pm, x) - z).cwiseAbs().maxCoeff(), 1e-12) << s;
  }
}

TEST(ProofModel, NeighbourCountAndValidation) {
  const TrafficNetwork star(4, {{0, 1, 1.0}, {0, 2, 0.5}, {0, 3, 1.0}});
  EXPECT_EQ(make_proof_model(star, {2, 2}, 1).max_neighbors(), 3);
  EXPECT_EQ(make_proof_model(star, {2, 2}, 1, true).max_neighbors(), 4);
  ProofModel pm = make_proof_model(star, {2, 2}, 1);
  pm.aggregation(0, 1) = 1.5;
  EXPECT_THROW(pm.validate(), std::invalid_argument);
  EXPECT_THROW(make_proof_model(star, {2}, 1), std::invalid_argument);
}

TEST(EmbeddingGap, Examples) {
  const TrafficNetwork g = oracle::random_graph(5, 0.5, 3);
  const ProofModel pm = make_proof_model(g, {3, 3, 3}, 4);
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(5, 3, 0.5);
  EXPECT_EQ(embedding_gap(pm, x, x, 0.5, 1), 0.0);
  Eigen::MatrixXd adv = x;
  adv.row(2) += Eigen::RowVector3d(0.1, -0.2, 0.05);
  EXPECT_EQ(embedding_gap(pm, x, adv, 0.5, 1), embedding_gap(pm, adv, x, 0.5, 1));
  // Too large, then too many nodes.
  EXPECT_THROW(embedding_gap(pm, x, adv, 0.1, 1), std::invalid_argument);
  adv.row(3) += Eigen::RowVector3d(0.1, 0, 0);
  EXPECT_THROW(embedding_gap(pm, x, adv, 0.5, 1), std::invalid_argument);
}

TEST(EmbeddingGap, SingleNodeLinearRegion) {
  ProofModel pm;
  pm.aggregation = Eigen::MatrixXd::Ones(1, 1);
  pm.weights = {Eigen::MatrixXd::Constant(1, 1, 1.7)};
  const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 1, 0.8);
  const Eigen::MatrixXd adv = Eigen::MatrixXd::Constant(1, 1, 1.1);
  EXPECT_NEAR(embedding_gap(pm, x, adv, 0.5, 1), (1.7 * 0.3) * (1.7 * 0.3), 1e-15);
}

TEST(VerifyBound, FixedModelHolds) {
  const ProofModel pm = make_proof_model(oracle::random_graph(8, 0.4, 2), {4, 5, 3}, 2);
  const BoundReport r = verify_bound(pm, 0.5, 2, 200, 7);
  EXPECT_EQ(r.empirical_gaps.size(), 200u);
  EXPECT_LE(r.max_ratio, 1.0);
  EXPECT_GT(r.max_ratio, 0.0);
  EXPECT_EQ(r.C, pm.max_neighbors());
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j["trials"], 200);
  EXPECT_DOUBLE_EQ(j["bound_value"].get<double>(), r.bound_value);
}

TEST(VerifyBound, ZeroBudgetGivesZeroGaps) {
  const ProofModel pm = make_proof_model(oracle::random_graph(6, 0.5, 1), {3, 3}, 1);
  const BoundReport r = verify_bound(pm, 0.0, 3, 50, 1);
  for (double g : r.empirical_gaps) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(r.max_ratio, 0.0);
}

TEST(VerifyBound, RandomizedGraphsHold) {
  for (Activation a : {Activation::kRelu, Activation::kTanh, Activation::kSigmoid}) {
    RandomBoundOptions opts;
    opts.activation = a;
    const BoundReport r = verify_bound_randomized(1000, 3, opts);
    EXPECT_LE(r.max_ratio, 1.0) << to_string(a);
    EXPECT_EQ(r.ratios.size(), 1000u);
  }
}

TEST(VerifyBound, UnderstatedLipschitzConstantIsCaught) {
  // A bound computed with a wrong beta must be reported with its trial seed.
  ProofModel pm = make_proof_model(oracle::random_graph(6, 0.6, 4), {3, 3, 3}, 4, true);
  pm.beta = 1e-3;
  try {
    verify_bound(pm, 0.5, 2, 20, 11);
    FAIL() << "expected a violation";
  } catch (const BoundViolation& v) {
    EXPECT_EQ(v.trial_seed(), derive_seed(11, "bound.trial", v.trial()));
    EXPECT_NE(std::string(v.what()).find("clean="), std::string::npos);
  }
}

TEST(VerifyBound, RejectsBadArguments) {
  const ProofModel pm = make_proof_model(oracle::random_graph(4, 0.5, 1), {2, 2}, 1);
  EXPECT_THROW(verify_bound(pm, -0.1, 1, 5, 1), std::invalid_argument);
  EXPECT_THROW(verify_bound(pm, 0.5, 0, 5, 1), std::invalid_argument);
  EXPECT_THROW(verify_bound(pm, 0.5, 5, 5, 1), std::invalid_argument);
  EXPECT_THROW(verify_bound(pm, 0.5, 1, 0, 1), std::invalid_argument);
}

}  // namespace
}  // namespace stadv
