#include <gpsp/error_bound.hpp>

#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "coverage_oracle.hpp"
#include "test_util.hpp"

namespace gpsp {
namespace {

using testing::normal_vector;
using testing::uniform_matrix;

// 1/2 log det(I + K_S / s2) by dense LU, no greedy bookkeeping.
double logdet_gain(const MatrixXd& X, const std::vector<Eigen::Index>& subset, const Hyperparameters& h) {
  MatrixXd S(X.rows(), static_cast<Eigen::Index>(subset.size()));
  for (std::size_t k = 0; k < subset.size(); ++k) S.col(static_cast<Eigen::Index>(k)) = X.col(subset[k]);
  MatrixXd A = gram_matrix(S, h) / (h.noise_std * h.noise_std);
  A.diagonal().array() += 1.0;
  return 0.5 * std::log(A.fullPivLu().determinant());
}

GPModel random_model(Rng& rng, Eigen::Index d, Eigen::Index m, Eigen::Index n, double noise) {
  TrainingSet data{uniform_matrix(rng, d, m, -1.0, 1.0), uniform_matrix(rng, m, n, -1.0, 1.0), VectorXd::Constant(n, noise)};
  std::vector<Hyperparameters> hs;
  for (Eigen::Index i = 0; i < n; ++i) hs.push_back(Hyperparameters::isotropic(d, 1.0 + 0.5 * static_cast<double>(i), 0.6, noise));
  return GPModel::fit(data, hs);
}

TEST(DeltaSc, Examples) {
  EXPECT_NEAR(delta_sc_from_delta(0.95, 1), 0.05, 1e-15);
  EXPECT_NEAR(delta_sc_from_delta(0.81, 2), 0.1, 1e-15);
  // independent route: cube root instead of expm1/log
  EXPECT_NEAR(delta_sc_from_delta(0.9, 3), 1.0 - std::cbrt(0.9), 1e-15);
  EXPECT_NEAR(delta_sc_from_delta(0.9, 3), 0.034511, 1e-6);
}

TEST(DeltaSc, ComposesBackToDelta) {
  for (double d : {0.5, 0.9, 0.99})
    for (int n = 1; n <= 6; ++n) EXPECT_NEAR(std::pow(1.0 - delta_sc_from_delta(d, n), n), d, 1e-14);
}

TEST(DeltaSc, RejectsOutOfRange) {
  EXPECT_THROW(delta_sc_from_delta(0.0, 1), ContractViolation);
  EXPECT_THROW(delta_sc_from_delta(1.0, 1), ContractViolation);
  EXPECT_THROW(delta_sc_from_delta(1.5, 1), ContractViolation);
}

TEST(InformationGain, SinglePointUnitNoise) {
  const MatrixXd X = MatrixXd::Zero(1, 1);
  const auto g = information_gain(X, Hyperparameters::isotropic(1, 1.0, 1.0, 1.0), 1);
  EXPECT_NEAR(g.gamma, 0.5 * std::log(2.0), 1e-15);
  EXPECT_NEAR(g.gamma, 0.346574, 1e-6);
}

TEST(InformationGain, VanishesUnderHugeNoise) {
  Rng rng(3);
  const MatrixXd X = uniform_matrix(rng, 2, 30, -1.0, 1.0);
  double prev = std::numeric_limits<double>::infinity();
  for (double sn : {1.0, 1e2, 1e4, 1e6}) {
    const double g = information_gain(X, Hyperparameters::isotropic(2, 1.0, 0.5, sn), 10).gamma;
    EXPECT_LT(g, prev);
    prev = g;
  }
  EXPECT_LT(prev, 1e-10);
}

TEST(InformationGain, GreedyMatchesLogDetOfItsSelection) {
  Rng rng(4);
  const MatrixXd X = uniform_matrix(rng, 3, 40, -1.0, 1.0);
  const auto h = Hyperparameters::isotropic(3, 1.3, 0.7, 0.2);
  const auto g = information_gain(X, h, 12);
  EXPECT_NEAR(g.gamma, logdet_gain(X, g.chosen, h), 1e-9);
}

TEST(InformationGain, GreedyWithinOneMinusInverseEOfExhaustive) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd X = uniform_matrix(rng, 2, 10, -1.0, 1.0);
    const auto h = Hyperparameters::isotropic(2, 1.0, 0.5, 0.3);
    double best = 0.0;
    for (Eigen::Index a = 0; a < 10; ++a)
      for (Eigen::Index b = a + 1; b < 10; ++b)
        for (Eigen::Index c = b + 1; c < 10; ++c) best = std::max(best, logdet_gain(X, {a, b, c}, h));
    const double greedy = information_gain(X, h, 3).gamma;
    EXPECT_GE(greedy, (1.0 - std::exp(-1.0)) * best);
    EXPECT_LE(greedy, best + 1e-12);
  }
}

TEST(InformationGain, NondecreasingInBudget) {
  Rng rng(6);
  const MatrixXd X = uniform_matrix(rng, 3, 50, -1.0, 1.0);
  const auto h = Hyperparameters::isotropic(3, 1.0, 0.4, 0.1);
  double prev = 0.0;
  for (Eigen::Index b = 0; b <= 50; b += 5) {
    const double g = information_gain(X, h, b).gamma;
    EXPECT_GE(g, prev);
    prev = g;
  }
}

TEST(InformationGain, TiesGoToLowestIndex) {
  // all candidates identical: every step is a tie
  const MatrixXd X = MatrixXd::Zero(2, 4);
  const auto g = information_gain(X, Hyperparameters::isotropic(2, 1.0, 1.0, 0.5), 3);
  EXPECT_EQ(g.chosen, (std::vector<Eigen::Index>{0, 1, 2}));
}

TEST(InformationGain, OrderInvariantWithoutTies) {
  Rng rng(7);
  const MatrixXd X = uniform_matrix(rng, 2, 25, -1.0, 1.0);
  const auto h = Hyperparameters::isotropic(2, 1.0, 0.5, 0.1);
  std::vector<Eigen::Index> perm(25);
  std::iota(perm.begin(), perm.end(), 0);
  // the first pick is always a tie under a stationary kernel: keep column 0 in place
  std::shuffle(perm.begin() + 1, perm.end(), rng);
  MatrixXd Y(2, 25);
  for (Eigen::Index k = 0; k < 25; ++k) Y.col(k) = X.col(perm[static_cast<std::size_t>(k)]);
  EXPECT_NEAR(information_gain(X, h, 8).gamma, information_gain(Y, h, 8).gamma, 1e-10);
}

TEST(InformationGain, Contracts) {
  const auto h = Hyperparameters::isotropic(1, 1.0, 1.0, 0.1);
  EXPECT_THROW(information_gain(MatrixXd(1, 0), h, 0), ContractViolation);
  EXPECT_THROW(information_gain(MatrixXd::Zero(1, 3), h, 4), ContractViolation);
  EXPECT_THROW(information_gain(MatrixXd::Zero(1, 3), Hyperparameters::isotropic(1, 1.0, 1.0, 0.0), 1), ContractViolation);
}

TEST(RkhsNorm, ZeroTargets) {
  Rng rng(8);
  const TrainingSet data{uniform_matrix(rng, 2, 6, -1.0, 1.0), MatrixXd::Zero(6, 1), VectorXd::Constant(1, 0.1)};
  EXPECT_EQ(rkhs_norm_estimate(GPModel::fit(data, {Hyperparameters::isotropic(2, 1.0, 0.5, 0.1)}), 0), 0.0);
}

TEST(RkhsNorm, SinglePointInterpolant) {
  const TrainingSet data{MatrixXd::Zero(1, 1), MatrixXd::Constant(1, 1, 2.0), VectorXd::Zero(1)};
  EXPECT_NEAR(rkhs_norm_estimate(GPModel::fit(data, {Hyperparameters::isotropic(1, 1.0, 1.0, 0.0)}), 0), 2.0, 1e-6);
}

TEST(RkhsNorm, MatchesDenseSolve) {
  Rng rng(9);
  const MatrixXd X = uniform_matrix(rng, 2, 15, -1.0, 1.0);
  const VectorXd y = normal_vector(rng, 15);
  const auto h = Hyperparameters::isotropic(2, 1.2, 0.5, 0.3);
  const GPModel model = GPModel::fit({X, y, VectorXd::Constant(1, 0.3)}, {h});
  const MatrixXd K = gram_matrix(X, h);
  MatrixXd A = K;
  A.diagonal().array() += 0.09;
  const VectorXd w = A.fullPivLu().solve(y);
  EXPECT_NEAR(rkhs_norm_estimate(model, 0), std::sqrt(w.dot(K * w)), 1e-8);
}

TEST(RkhsNorm, UserBoundIsAFloor) {
  const TrainingSet data{MatrixXd::Zero(1, 1), MatrixXd::Constant(1, 1, 2.0), VectorXd::Zero(1)};
  const GPModel model = GPModel::fit(data, {Hyperparameters::isotropic(1, 1.0, 1.0, 0.0)});
  EXPECT_DOUBLE_EQ(rkhs_norm_estimate(model, 0, 5.0), 5.0);
  EXPECT_NEAR(rkhs_norm_estimate(model, 0, 0.5), 2.0, 1e-6);
  EXPECT_THROW(rkhs_norm_estimate(model, 0, -1.0), ContractViolation);
}

TEST(DeltaVector, Examples) {
  const VectorXd one = VectorXd::Ones(1), zero = VectorXd::Zero(1);
  EXPECT_NEAR(delta_vector(one, zero, 720, 0.95)(0), std::sqrt(2.0), 1e-15);
  // (m + 1) / delta_sc = e with n = 1: delta_sc = (m + 1) / e
  const double dsc = 1.0 / std::exp(1.0);  // m = 0
  EXPECT_NEAR(delta_vector(zero, one, 0, 1.0 - dsc)(0), std::sqrt(300.0), 1e-9);
  EXPECT_NEAR(delta_vector(zero, one, 0, 1.0 - dsc)(0), 17.320508, 1e-6);
}

TEST(DeltaVector, MatchesFormulaAndIsMonotone) {
  const double dsc = 1.0 - std::pow(0.95, 0.5);
  const VectorXd norms = (VectorXd(2) << 1.5, 0.3).finished(), gammas = (VectorXd(2) << 4.0, 7.5).finished();
  const VectorXd D = delta_vector(norms, gammas, 720, 0.95);
  for (int j = 0; j < 2; ++j) {
    const double l = std::log(721.0 / dsc);
    EXPECT_NEAR(D(j), std::sqrt(2 * norms(j) * norms(j) + 300 * gammas(j) * l * l * l), 1e-10 * D(j));
  }
  EXPECT_GE(delta_vector(norms * 2.0, gammas, 720, 0.95)(0), D(0));
  EXPECT_GE(delta_vector(norms, gammas * 2.0, 720, 0.95)(0), D(0));
  EXPECT_GE(delta_vector(norms, gammas, 721, 0.95)(0), D(0));
}

TEST(PointwiseBound, ZeroDeltaAndScalarReduction) {
  Rng rng(10);
  const GPModel model = random_model(rng, 3, 20, 1, 0.1);
  const Box box = Box::uniform(3, -1.0, 1.0);
  const VectorXd q = VectorXd::Constant(3, 0.2);
  EXPECT_EQ(pointwise_bound(model, VectorXd::Zero(1), q, box), 0.0);
  EXPECT_NEAR(pointwise_bound(model, VectorXd::Constant(1, 3.0), q, box), 3.0 * std::sqrt(model.predict_var(0, q)), 1e-14);
}

TEST(PointwiseBound, MatchesRecomputation) {
  Rng rng(11);
  const GPModel model = random_model(rng, 3, 25, 3, 0.05);
  const Box box = Box::uniform(3, -1.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    const VectorXd q = testing::uniform_vector(rng, 3, -1.0, 1.0);
    const VectorXd D = testing::uniform_vector(rng, 3, 0.0, 5.0);
    double s = 0.0;
    for (Eigen::Index i = 0; i < 3; ++i) s += D(i) * D(i) * model.predict_var(i, q);
    EXPECT_NEAR(pointwise_bound(model, D, q, box), std::sqrt(s), 1e-12);
  }
}

TEST(PointwiseBound, OutsideDomainThrows) {
  Rng rng(12);
  const GPModel model = random_model(rng, 2, 5, 1, 0.1);
  EXPECT_THROW(pointwise_bound(model, VectorXd::Ones(1), VectorXd::Constant(2, 1.5), Box::uniform(2, -1.0, 1.0)), DomainViolation);
}

TEST(DeltaBar, ZeroDeltaGivesZero) {
  Rng rng(13);
  const GPModel model = random_model(rng, 3, 10, 1, 0.1);
  ModelErrorBound out;
  compute_delta_bar(model, VectorXd::Zero(1), DomainSpec::uniform(1, -1, 1, -1, 1, 0.0), uniform_counts(3, 5), out);
  EXPECT_EQ(out.delta_bar, 0.0);
}

TEST(DeltaBar, PriorModelIsConstant) {
  const std::vector<Hyperparameters> hs{Hyperparameters::isotropic(6, 2.0, 1.0, 0.1), Hyperparameters::isotropic(6, 0.5, 1.0, 0.1)};
  const GPModel model = GPModel::prior(6, hs);
  const VectorXd D = (VectorXd(2) << 3.0, 4.0).finished();
  ModelErrorBound out;
  compute_delta_bar(model, D, DomainSpec::uniform(2, -1, 1, -2, 2, 0.0), uniform_counts(6, 3), out);
  EXPECT_NEAR(out.delta_bar, std::sqrt(9.0 * 2.0 + 16.0 * 0.5), 1e-14);
}

TEST(DeltaBar, GridSupersetNeverDecreases) {
  Rng rng(14);
  const GPModel model = random_model(rng, 3, 30, 1, 0.05);
  const auto dom = DomainSpec::uniform(1, -1, 1, -1, 1, 0.0);
  ModelErrorBound a, b;
  // 9 nodes per axis contain every node of the 5-node grid
  compute_delta_bar(model, VectorXd::Ones(1), dom, uniform_counts(3, 5), a);
  compute_delta_bar(model, VectorXd::Ones(1), dom, uniform_counts(3, 9), b);
  EXPECT_GE(b.delta_bar, a.delta_bar);
  EXPECT_NEAR(pointwise_bound(model, VectorXd::Ones(1), b.argmax, dom.model_domain()), b.delta_bar, 1e-14);
}

TEST(DeltaBar, RejectsSingleNodeAxes) {
  Rng rng(15);
  const GPModel model = random_model(rng, 3, 5, 1, 0.1);
  ModelErrorBound out;
  EXPECT_THROW(compute_delta_bar(model, VectorXd::Ones(1), DomainSpec::uniform(1, -1, 1, -1, 1, 0.0), {1, 5, 5}, out),
               ContractViolation);
}

TEST(ErrorBound, EndToEndAndReportRoundTrip) {
  Rng rng(16);
  const GPModel model = random_model(rng, 3, 30, 1, 0.05);
  BoundConfig cfg;
  cfg.grid_resolution = 6;
  cfg.gamma_resolution = 5;
  const auto b = compute_error_bound(model, DomainSpec::uniform(1, -1, 1, -1, 1, 0.0), cfg);
  EXPECT_NEAR(b.delta_sc, 0.05, 1e-15);
  EXPECT_GT(b.gammas(0), 0.0);
  EXPECT_NEAR(b.delta_vec(0), delta_vector(b.rkhs_norms, b.gammas, 30, 0.95)(0), 1e-12);
  std::stringstream ss;
  write_bound_report(ss, b);
  const auto r = read_bound_report(ss);
  EXPECT_EQ(r.delta_bar, b.delta_bar);
  EXPECT_EQ(r.delta_vec, b.delta_vec);
  EXPECT_EQ(r.grid_counts, b.grid_counts);
  EXPECT_EQ(r.m, 30);
}

TEST(ErrorBound, CoverageOnKnownNormFunctions) {
  int covered = 0;
  const int reps = 40;
  for (int r = 0; r < reps; ++r) covered += testing::coverage_replication(sub_seed(2024, "coverage-" + std::to_string(r)), 0.9);
  EXPECT_GE(static_cast<double>(covered) / reps, 0.9);
}

}  // namespace
}  // namespace gpsp
