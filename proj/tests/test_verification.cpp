#include <gpsp/verification.hpp>

#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

namespace gpsp {
namespace {

using testing::uniform_vector;

const GainSet kPaperGains = GainSet::scalar(0.9, 1.0, 0.5);
const DomainSpec kPaperDomain = DomainSpec::uniform(1, -2.0, 2.0, -2.55, 4.55, 0.1);
constexpr double kPaperDeltaBar = 0.045;
const GainCaps kCaps{0.9, 0.254};

State scalar_state(double x1, double x2) { return {VectorXd::Constant(1, x1), VectorXd::Constant(1, x2)}; }

PassivityCertificate paper_certificate(double delta_bar = kPaperDeltaBar) {
  return certify(delta_bar, 0.95, kPaperGains, kPaperDomain, kCaps);
}

// z' Lambda z written out for scalar gains, z = (x2; x1).
double quad_lambda(double x1, double x2, double kd, double kp, double c) {
  return (kd - c) * x2 * x2 + c * kd * x1 * x2 + c * kp * x1 * x1;
}

TEST(VdotNumeric, HandComputed) {
  // (Kp x1 + c x2) x2 + (x2 + c x1) a with Kp=1, c=0.5
  EXPECT_DOUBLE_EQ(vdot_numeric(scalar_state(1.0, 2.0), VectorXd::Constant(1, -1.0), kPaperGains), 4.0 - 2.5);
  EXPECT_DOUBLE_EQ(vdot_numeric(State::zero(1), VectorXd::Constant(1, 3.0), kPaperGains), 0.0);
  EXPECT_DOUBLE_EQ(vdot_numeric(scalar_state(2.0, 0.0), VectorXd::Constant(1, 1.0), kPaperGains), 1.0);
}

TEST(VdotNumeric, MatchesDirectionalDerivativeOfStorage) {
  Rng rng(3);
  const GainSet g(testing::random_spd(rng, 2, 1.5, 3.0), testing::random_spd(rng, 2, 1.0, 2.0), 0.4);
  for (int t = 0; t < 20; ++t) {
    const State x(uniform_vector(rng, 2, -2, 2), uniform_vector(rng, 2, -2, 2));
    const VectorXd a = uniform_vector(rng, 2, -3, 3);
    const double h = 1e-6;
    const State xp(x.x1 + h * x.x2, x.x2 + h * a), xm(x.x1 - h * x.x2, x.x2 - h * a);
    const double fd = (storage_value(xp, g) - storage_value(xm, g)) / (2 * h);
    EXPECT_NEAR(vdot_numeric(x, a, g), fd, 1e-7);
  }
}

TEST(VdotNumeric, PerfectCompensationIdentity) {
  // Exact compensation leaves xdot2 = u_ex - Kd x2 - Kp x1, so V' = y'u_ex - z' Lambda z.
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const double x1 = uniform_vector(rng, 1, -2, 2)(0), x2 = uniform_vector(rng, 1, -2, 2)(0);
    const double uex = uniform_vector(rng, 1, -0.1, 0.1)(0);
    const double a = uex - 0.9 * x2 - 1.0 * x1;
    const double lhs = vdot_numeric(scalar_state(x1, x2), VectorXd::Constant(1, a), kPaperGains);
    const double rhs = (0.5 * x1 + x2) * uex - quad_lambda(x1, x2, 0.9, 1.0, 0.5);
    EXPECT_NEAR(lhs, rhs, 1e-10);
  }
}

TEST(VdotNumeric, PerfectCompensationAlongTrajectory) {
  const DuffingOscillator sys;
  const PerfectCompensator<DuffingOscillator> model(sys);
  const auto tr = simulate(sys, model, kPaperGains, sine_input(1, 0.1, 1.3), scalar_state(1.2, -0.7), 5.0, 0.01);
  const MatrixXd L = lambda_matrix(kPaperGains);
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const State& x = tr.states[k];
    const VectorXd z = x.velocity_first();
    const double expected = passive_output(x, 0.5).dot(tr.u_ex[k]) - z.dot(L * z);
    EXPECT_NEAR(vdot_numeric(x, tr.xdot2[k], kPaperGains), expected, 1e-10) << "k=" << k;
  }
}

TEST(VdotFiniteDifference, AgreesWithAnalyticRate) {
  const DuffingOscillator sys;
  const PerfectCompensator<DuffingOscillator> model(sys);
  // u_ex is held over each step, so a nonzero input makes xdot2 jump at the samples
  const auto tr = simulate(sys, model, kPaperGains, zero_input(1), scalar_state(1.5, 1.5), 2.0, 1e-3);
  for (std::size_t k = 1; k + 1 < tr.size(); k += 37)
    EXPECT_NEAR(vdot_finite_difference(tr, k), vdot_numeric(tr.states[k], tr.xdot2[k], kPaperGains), 1e-4);
  EXPECT_THROW(vdot_finite_difference(tr, 0), ContractViolation);
  EXPECT_THROW(vdot_finite_difference(tr, tr.size() - 1), ContractViolation);
}

TEST(EnergyBalance, IntegralOfSupplyMinusDissipation) {
  // V(T) - V(0) against a trapezoid integral of y'u_ex - z' Lambda z built from recorded states.
  const DuffingOscillator sys;
  const PerfectCompensator<DuffingOscillator> model(sys);
  const auto tr = simulate(sys, model, kPaperGains, sine_input(1, 0.1, 0.8), scalar_state(-1.0, 1.4), 5.0, 1e-3);
  // the input is held over [t_k, t_{k+1}], so both ends use u_ex[k]
  auto rate = [&](std::size_t k, double uex) {
    const double x1 = tr.states[k].x1(0), x2 = tr.states[k].x2(0);
    return (0.5 * x1 + x2) * uex - quad_lambda(x1, x2, 0.9, 1.0, 0.5);
  };
  double integral = 0.0;
  for (std::size_t k = 0; k + 1 < tr.size(); ++k)
    integral += 0.5 * (rate(k, tr.u_ex[k](0)) + rate(k + 1, tr.u_ex[k](0))) * (tr.times[k + 1] - tr.times[k]);
  EXPECT_NEAR(tr.V.back() - tr.V.front(), integral, 1e-5);
}

TEST(Audit, PerfectCompensatorHasNoViolations) {
  const DuffingOscillator sys;
  const PerfectCompensator<DuffingOscillator> model(sys);
  const auto cert = paper_certificate();
  ASSERT_TRUE(cert.verdict);
  const auto grid = samples_from_grid(sys, model, kPaperGains, kPaperDomain.states, {41, 41});
  const auto rep = semipassivity_audit(grid, cert, kPaperDomain, {1e-9, false});
  EXPECT_EQ(rep.samples, 41 * 41);
  EXPECT_EQ(rep.unresolved, 0);
  EXPECT_GT(rep.checked, 0);
  EXPECT_EQ(rep.dissipation_violations, 0);
  EXPECT_EQ(rep.h_violations, 0);
  EXPECT_TRUE(rep.verdict);

  const auto tr = simulate(sys, model, kPaperGains, zero_input(1), scalar_state(-1.5, 1.5), 10.0, 0.01);
  const auto trep = semipassivity_audit(samples_from_trajectory(tr), cert, kPaperDomain);
  EXPECT_EQ(trep.violating_samples, 0);
  EXPECT_TRUE(trep.verdict);
}

TEST(Audit, CountsPartitionTheSamples) {
  const DuffingOscillator sys;
  const PerfectCompensator<DuffingOscillator> model(sys);
  const auto grid = samples_from_grid(sys, model, kPaperGains, kPaperDomain.states, {30, 30});
  const auto rep = semipassivity_audit(grid, paper_certificate(), kPaperDomain, {1e-3, false}, true);
  EXPECT_EQ(rep.unresolved + rep.excluded + rep.inside_ball + rep.checked, rep.samples);
  ASSERT_EQ(rep.records.size(), grid.size());
  long inside = 0;
  for (const auto& r : rep.records)
    if (!r.unresolved && !r.outside_domain && r.inside_ball) {
      ++inside;
      EXPECT_LE(r.x.norm(), rep.radius);
    }
  EXPECT_EQ(inside, rep.inside_ball);
}

TEST(Audit, AdversarialOffsetFails) {
  const DuffingOscillator sys;
  const PerfectCompensator<DuffingOscillator> base(sys);
  const OffsetModel<PerfectCompensator<DuffingOscillator>> model(base, VectorXd::Constant(1, 10.0 * kPaperDeltaBar));
  const auto grid = samples_from_grid(sys, model, kPaperGains, kPaperDomain.states, {41, 41});
  const auto rep = semipassivity_audit(grid, paper_certificate(), kPaperDomain, {1e-3, false});
  EXPECT_GT(rep.violation_fraction, rep.allowed_fraction);
  EXPECT_FALSE(rep.verdict);
}

TEST(Audit, ViolationsShrinkAsToleranceGrows) {
  const DuffingOscillator sys;
  const PerfectCompensator<DuffingOscillator> base(sys);
  const OffsetModel<PerfectCompensator<DuffingOscillator>> model(base, VectorXd::Constant(1, 0.3));
  const auto grid = samples_from_grid(sys, model, kPaperGains, kPaperDomain.states, {25, 25});
  long prev = std::numeric_limits<long>::max();
  for (double tol : {0.0, 1e-3, 1e-2, 0.1, 1.0, 10.0}) {
    const auto rep = semipassivity_audit(grid, paper_certificate(), kPaperDomain, {tol, false});
    EXPECT_LE(rep.violating_samples, prev) << "tol=" << tol;
    prev = rep.violating_samples;
  }
  EXPECT_EQ(prev, 0);
}

TEST(Audit, HandBuiltSamples) {
  const auto cert = paper_certificate();
  const double r = cert.radius;
  std::vector<AuditSample> s;
  // inside the ball: never checked
  s.push_back({scalar_state(0.1, 0.1), VectorXd::Constant(1, 0.0), VectorXd::Zero(1)});
  // outside the ball with strongly decreasing storage: passes
  s.push_back({scalar_state(1.0, 1.0), VectorXd::Constant(1, -2.0), VectorXd::Zero(1)});
  // outside the ball with increasing storage: violates
  s.push_back({scalar_state(1.0, 1.0), VectorXd::Constant(1, 2.0), VectorXd::Zero(1)});
  // xdot2 outside D_xdot: excluded
  s.push_back({scalar_state(1.0, 1.0), VectorXd::Constant(1, 9.0), VectorXd::Zero(1)});
  // unresolved
  s.push_back({scalar_state(1.0, 1.0), VectorXd::Constant(1, 2.0), VectorXd::Zero(1), false});
  ASSERT_LT(0.1 * std::sqrt(2.0), r);
  const auto rep = semipassivity_audit(s, cert, kPaperDomain, {1e-3, false}, true);
  EXPECT_EQ(rep.inside_ball, 1);
  EXPECT_EQ(rep.checked, 2);
  EXPECT_EQ(rep.excluded, 1);
  EXPECT_EQ(rep.unresolved, 1);
  EXPECT_EQ(rep.dissipation_violations, 1);
  EXPECT_DOUBLE_EQ(rep.violation_fraction, 0.5);
  EXPECT_FALSE(rep.verdict);
  // recompute the violating record's margin
  const double vdot = (1.0 + 0.5) * 1.0 + (1.0 + 0.5) * 2.0;
  const double h = cert.lambda_min * 2.0 - kPaperDeltaBar * 1.5;
  EXPECT_NEAR(rep.max_dissipation_violation, vdot - (-h + 1e-3), 1e-12);
  EXPECT_DOUBLE_EQ(rep.xdot_containment, 0.8);  // only the 9 is outside
}

TEST(Audit, RejectsBadInputs) {
  auto cert = paper_certificate();
  EXPECT_THROW(semipassivity_audit({}, cert, kPaperDomain, {-1.0, true}), ContractViolation);
  cert.delta = 1.0;
  EXPECT_THROW(semipassivity_audit({}, cert, kPaperDomain), ContractViolation);
}

TEST(Audit, EmptySampleSet) {
  const auto rep = semipassivity_audit({}, paper_certificate(), kPaperDomain);
  EXPECT_EQ(rep.samples, 0);
  EXPECT_DOUBLE_EQ(rep.violation_fraction, 0.0);
  EXPECT_DOUBLE_EQ(rep.xdot_containment, 1.0);
  EXPECT_TRUE(rep.verdict);
}

TEST(Containment, AllZeroAccelerations) {
  Trajectory tr;
  for (int k = 0; k < 100; ++k) {
    tr.times.push_back(0.01 * k);
    tr.states.push_back(State::zero(1));
    tr.xdot2.push_back(VectorXd::Zero(1));
  }
  EXPECT_DOUBLE_EQ(xdot_containment_check(tr, kPaperDomain), 1.0);
  tr.xdot2[42](0) = 100.0;
  EXPECT_DOUBLE_EQ(xdot_containment_check(tr, kPaperDomain), 0.99);
  EXPECT_DOUBLE_EQ(xdot_containment_check(Trajectory{}, kPaperDomain), 1.0);
}

TEST(Containment, RequiredContainmentGatesVerdict) {
  std::vector<AuditSample> s{{scalar_state(1.0, 1.0), VectorXd::Constant(1, -2.0), VectorXd::Zero(1)},
                             {scalar_state(0.0, 0.0), VectorXd::Constant(1, 100.0), VectorXd::Zero(1)}};
  EXPECT_FALSE(semipassivity_audit(s, paper_certificate(), kPaperDomain, {1e-3, true}).verdict);
  EXPECT_TRUE(semipassivity_audit(s, paper_certificate(), kPaperDomain, {1e-3, false}).verdict);
}

class ModelErrorFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const auto gen = generate_training_data(DuffingOscillator{}, kPaperDomain, 60, VectorXd::Constant(1, 1e-3), 7);
    data_ = gen.data;
    const VectorXd ell = (VectorXd(3) << 3.0, 1.5, 1.5).finished();
    model_ = GPModel::fit(data_, {Hyperparameters(25.0, ell, 1e-3)});
  }
  static inline TrainingSet data_;
  static inline GPModel model_;
};

TEST_F(ModelErrorFixture, MaxErrorMatchesRecomputation) {
  const DuffingOscillator sys;
  const Box box = kPaperDomain.model_domain();
  const MatrixXd Q = random_queries(box, 200, 11);
  const auto rep = model_error_empirical(model_, sys, VectorXd::Constant(1, 1.0), kPaperDeltaBar, Q, box);
  double max_err = 0.0;
  long above = 0;
  for (Eigen::Index j = 0; j < Q.cols(); ++j) {
    const double a = Q(0, j), x1 = Q(1, j), x2 = Q(2, j);
    const double truth = duffing_f_inverse(scalar_state(x1, x2), a) + a;
    const double err = std::abs(model_.predict_mean(Q.col(j))(0) - truth);
    max_err = std::max(max_err, err);
    above += err > kPaperDeltaBar;
  }
  EXPECT_EQ(rep.points, 200);
  EXPECT_DOUBLE_EQ(rep.max_error, max_err);
  EXPECT_EQ(rep.above_delta_bar, above);
}

TEST_F(ModelErrorFixture, CoverageMonotoneInDelta) {
  const DuffingOscillator sys;
  const Box box = kPaperDomain.model_domain();
  const MatrixXd Q = random_queries(box, 200, 12);
  double prev = -1.0;
  for (double D : {0.0, 0.1, 1.0, 10.0, 1e6}) {
    const auto rep = model_error_empirical(model_, sys, VectorXd::Constant(1, D), kPaperDeltaBar, Q, box);
    EXPECT_GE(rep.coverage, prev);
    prev = rep.coverage;
  }
  EXPECT_DOUBLE_EQ(prev, 1.0);
  EXPECT_DOUBLE_EQ(model_error_empirical(model_, sys, VectorXd::Zero(1), kPaperDeltaBar, Q, box).coverage, 0.0);
}

TEST_F(ModelErrorFixture, TrainingNodesHaveSmallError) {
  const DuffingOscillator sys;
  const Box box = kPaperDomain.model_domain();
  const auto rep = model_error_empirical(model_, sys, VectorXd::Constant(1, 3.0), kPaperDeltaBar, data_.inputs, box);
  EXPECT_LT(rep.max_error, 0.01);
}

TEST_F(ModelErrorFixture, RejectsBadQueries) {
  const DuffingOscillator sys;
  const Box box = kPaperDomain.model_domain();
  EXPECT_THROW(model_error_empirical(model_, sys, VectorXd::Ones(1), 0.1, MatrixXd::Zero(2, 3), box), ContractViolation);
  EXPECT_THROW(model_error_empirical(model_, sys, VectorXd::Ones(1), 0.1, MatrixXd::Constant(3, 1, 50.0), box),
               DomainViolation);
}

TEST(RandomQueries, DeterministicAndInsideBox) {
  const Box box = kPaperDomain.model_domain();
  const MatrixXd a = random_queries(box, 50, 4), b = random_queries(box, 50, 4), c = random_queries(box, 50, 5);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  for (Eigen::Index j = 0; j < a.cols(); ++j) EXPECT_TRUE(box.contains(a.col(j)));
}

TEST(AuditReportIo, KeysAndCsv) {
  const DuffingOscillator sys;
  const PerfectCompensator<DuffingOscillator> model(sys);
  const auto grid = samples_from_grid(sys, model, kPaperGains, kPaperDomain.states, {5, 5});
  const auto rep = semipassivity_audit(grid, paper_certificate(), kPaperDomain, {1e-3, false}, true);
  std::ostringstream os;
  write_audit_report(os, rep);
  std::istringstream is(os.str());
  const auto parsed = Report::parse(is);
  EXPECT_EQ(parsed.text("samples"), "25");
  EXPECT_EQ(parsed.text("verdict"), "true");
  std::ostringstream csv;
  write_audit_csv(csv, rep);
  std::istringstream in(csv.str());
  std::string line;
  long lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 26);
}

TEST(AuditDeterminism, RepeatedRunsIdentical) {
  const DuffingOscillator sys;
  const PerfectCompensator<DuffingOscillator> base(sys);
  const OffsetModel<PerfectCompensator<DuffingOscillator>> model(base, VectorXd::Constant(1, 0.2));
  auto run = [&] {
    const auto tr = simulate(sys, model, kPaperGains, sine_input(1, 0.1, 1.0), scalar_state(1.5, 1.5), 3.0, 0.01);
    return semipassivity_audit(samples_from_trajectory(tr), paper_certificate(), kPaperDomain, {}, true);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.violating_samples, b.violating_samples);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) EXPECT_EQ(a.records[k].Vdot, b.records[k].Vdot);
}

}  // namespace
}  // namespace gpsp
