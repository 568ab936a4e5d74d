#include <gtest/gtest.h>

#include <chrono>

#include "support.hpp"

using namespace hylb;
using testing_support::vec;

TEST(BouncingBall, RejectsNonPhysicalParameters) {
  BouncingBallParams p;
  p.restitution = 1.0;
  EXPECT_THROW(bouncing_ball(p), Error);
  p.restitution = 0.5;
  p.a = 0.0;
  EXPECT_THROW(bouncing_ball(p), Error);
}

TEST(BouncingBall, FirstImpactMatchesBallisticRoot) {
  const auto ball = bouncing_ball();
  const auto arc = solve(ball.system, ball.params.x0, ball.sim).arc;
  ASSERT_GE(arc.jumps(), 1);
  const double oracle = testing_support::ballistic_impact(9.0, 0.8, 9.8);
  EXPECT_NEAR(arc.phases[1].t.front(), oracle, 1e-6);
  EXPECT_NEAR(ball.impact_time(ball.params.x0), oracle, 1e-15);
}

TEST(BouncingBall, EachImpactKeepsRestitutionSquaredOfTheEnergy) {
  const auto ball = bouncing_ball();
  SimConfig cfg = ball.sim;
  cfg.horizon = 8.0;
  const auto arc = solve(ball.system, ball.params.x0, cfg).arc;
  ASSERT_GE(arc.jumps(), 5);
  const double s2 = ball.params.restitution * ball.params.restitution;
  for (std::size_t j = 1; j < 6; ++j) {
    const double before = ball.energy(arc.phases[j - 1].x.back());
    const double after = ball.energy(arc.phases[j].x.front());
    EXPECT_NEAR(after, s2 * before, 1e-6 * before) << j;
  }
}

TEST(BouncingBall, ImpactTimesFormAGeometricSeries) {
  const auto ball = bouncing_ball();
  const auto arc = solve(ball.system, ball.params.x0, ball.sim).arc;
  ASSERT_GE(arc.jumps(), 4);
  const double a = ball.params.a, s = ball.params.restitution;
  // After the first impact at speed v the flight times are 2 v s^k / a.
  const double v = std::abs(arc.phases[0].x.back()[2]);
  for (std::size_t j = 2; j < 5; ++j) {
    const double flight = arc.phases[j].t.front() - arc.phases[j - 1].t.front();
    EXPECT_NEAR(flight, 2 * v * std::pow(s, static_cast<double>(j - 1)) / a, 1e-6) << j;
  }
}

TEST(BouncingBall, RestsAfterAccumulation) {
  const auto ball = bouncing_ball();
  const auto rep = solve(ball.system, ball.params.x0, ball.sim);
  EXPECT_EQ(rep.arc.termination, Termination::HorizonReached);
  EXPECT_FALSE(rep.arc.snapped_jumps.empty());
  const Vector xf = rep.arc.final_state();
  EXPECT_EQ(xf[1], 0.0);
  EXPECT_EQ(xf[2], 0.0);
  // The Zeno time of the ballistic series.
  const double v = std::sqrt(0.8 * 0.8 + 2 * 9.8 * 9.0);
  const double t_zeno = testing_support::ballistic_impact(9.0, 0.8, 9.8) + 2 * v * 0.8 / (9.8 * (1 - 0.8));
  const int last = *rep.arc.snapped_jumps.rbegin();
  EXPECT_NEAR(rep.arc.phases[static_cast<std::size_t>(last)].t.front(), t_zeno, 0.05);
}

TEST(BouncingBall, RasPassesWithinASecond) {
  const auto ball = bouncing_ball();
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = check_ras(ball.system, ball.spec, 1, 1, ball.sim);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(rep.verdict, Verdict::Pass);
  EXPECT_LT(secs, 1.0);
}

TEST(BouncingBall, BarrierPositiveAtStartNegativeOnUnsafe) {
  const auto ball = bouncing_ball();
  const auto& B = *ball.cert.B;
  EXPECT_GT(B(ball.params.x0), 0.0);
  std::mt19937_64 rng(6);
  for (int k = 0; k < 500; ++k) {
    const Vector x = testing_support::random_point(rng, testing_support::box({-5, 10, -15}, {25, 11, 15}));
    EXPECT_LT(B(x), 0.0);
  }
}

TEST(MooreGreitzer, EquilibriumSolvesTheSteadyState) {
  const MooreGreitzerParams p;
  for (double gamma : {0.5, 0.64, 0.8, 1.0}) {
    const Vector x = mg_equilibrium(gamma, p);
    EXPECT_NEAR(psi_c(x[0], p), x[1], 1e-12) << gamma;
    EXPECT_NEAR(x[0], gamma * std::sqrt(x[1]), 1e-12) << gamma;
  }
  const Vector x = mg_equilibrium(0.64, p);
  EXPECT_NEAR(x[0], 0.51951, 1e-5);
  EXPECT_NEAR(x[1], 0.658913, 1e-6);
  EXPECT_THROW(mg_equilibrium(0.4, p), Error);
}

TEST(MooreGreitzer, CompressorSlopeMatchesDifferences) {
  const MooreGreitzerParams p;
  for (double phi : {0.1, 0.25, 0.45, 0.7}) {
    const double fd = (psi_c(phi + 1e-6, p) - psi_c(phi - 1e-6, p)) / 2e-6;
    EXPECT_NEAR(psi_c_prime(phi, p), fd, 1e-8);
  }
}

TEST(MooreGreitzer, NegativePressureRiseIsADomainViolation) {
  const auto mg = moore_greitzer();
  try {
    mg.plant.input_matrix(vec({0.5, -0.1}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DomainViolation);
  }
}

TEST(MooreGreitzer, CostIsSquaredStateSpeed) {
  const auto mg = moore_greitzer();
  const double lc = mg.params.lc;
  std::mt19937_64 rng(8);
  for (int k = 0; k < 200; ++k) {
    const Vector x = testing_support::random_point(rng, mg.params.operating_box);
    const Vector u = testing_support::random_point(rng, mg.plant.input_box);
    const double phi = x[0], psi = x[1], v = u[0], gamma = u[1];
    const double oracle = v * v + 2 * v * (psi_c(phi) - psi) / lc + gamma * gamma +
                          std::pow(phi - gamma * std::sqrt(psi), 2) / std::pow(4 * lc, 2);
    EXPECT_NEAR(mg.cost(x)(u), oracle, 1e-12);
  }
}

TEST(MooreGreitzer, ShippedGradientsAwayFromTheKink) {
  const auto mg = moore_greitzer();
  std::mt19937_64 rng(5);
  std::vector<Vector> probes;
  while (probes.size() < 500) {
    const Vector x = testing_support::random_point(rng, mg.params.operating_box);
    const Vector d = (x - mg.params.unsafe_center).cwiseAbs();
    if (std::abs(d[0] - d[1]) < 1e-3 || mg.h(x) < 0.01) continue;
    probes.push_back(x);
  }
  EXPECT_LE(grad_check(mg.cert.V, probes), 1e-6);
  EXPECT_LE(grad_check(*mg.cert.B, probes), 1e-6);
  EXPECT_EQ((*mg.cert.B)(mg.params.unsafe_center), -kInf);
}

class MooreGreitzerLoop : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    mg_ = new MooreGreitzer(moore_greitzer());
    run_ = new ClosedLoopRun(run_moore_greitzer(*mg_));
  }
  static void TearDownTestSuite() {
    delete run_;
    delete mg_;
  }
  static MooreGreitzer* mg_;
  static ClosedLoopRun* run_;
};

MooreGreitzer* MooreGreitzerLoop::mg_ = nullptr;
ClosedLoopRun* MooreGreitzerLoop::run_ = nullptr;

TEST_F(MooreGreitzerLoop, ReachesHorizonWithoutEnteringTheUnsafeBox) {
  EXPECT_EQ(run_->report.arc.termination, Termination::HorizonReached);
  run_->report.arc.for_each_sample([](int, double, const Vector& z) {
    EXPECT_FALSE(contains(mg_->unsafe(), z.head(2), 0.0)) << z.transpose();
  });
}

TEST_F(MooreGreitzerLoop, SettlesNearTheSetPoint) {
  const Vector xf = run_->report.arc.final_state().head(2);
  EXPECT_LE((xf - mg_->params.zeta).norm(), 0.01);
}

TEST_F(MooreGreitzerLoop, InputsRespectBoxAndRateLimit) {
  ASSERT_EQ(run_->log.size(), 201u);
  const double max_step = mg_->params.gamma_rate * mg_->params.period;
  for (const auto& rec : run_->log) {
    const Vector& u = rec.decision.u;
    EXPECT_LE(std::abs(u[0]), mg_->params.v_max + 1e-15);
    EXPECT_GE(u[1], mg_->params.gamma_min);
    EXPECT_LE(u[1], mg_->params.gamma_max);
    EXPECT_LE(std::abs(u[1] - rec.u_prev[1]), max_step + 1e-12);
  }
}

TEST_F(MooreGreitzerLoop, LogReplaysTheAppliedInputs) {
  const auto& arc = run_->report.arc;
  for (std::size_t j = 1; j < arc.phases.size(); ++j) {
    EXPECT_EQ(arc.phases[j].x.front().segment(2, 2), run_->log[j - 1].decision.u) << j;
  }
}

TEST_F(MooreGreitzerLoop, BarrierRowHoldsWheneverItIsImposed) {
  for (const auto& rec : run_->log) {
    if (rec.decision.level != kHold) {
      EXPECT_GE(rec.decision.b_slack, -1e-9) << rec.index;
    }
  }
}
