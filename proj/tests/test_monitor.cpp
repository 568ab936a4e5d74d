#include <gtest/gtest.h>

#include "support.hpp"

using namespace hylb;
using testing_support::vec;

namespace {

SimConfig quick(double horizon, double step = 1e-3) {
  SimConfig cfg;
  cfg.horizon = horizon;
  cfg.step = step;
  return cfg;
}

/// Ballistic energy sublevel set {z^2/2 + a y <= e, y >= 0}, x free. Implicit
/// predicates see no membership tolerance, so the slack is built in.
SetRegion energy_sublevel(double a, double e) {
  const double zmax = std::sqrt(2.0 * e);
  return SetRegion::implicit(
      [a, e](const Vector& x) { return x[1] >= -1e-9 && 0.5 * x[2] * x[2] + a * x[1] <= e * (1 + 1e-6); },
      testing_support::box({-5, 0, -zmax}, {5, e / a, zmax}));
}

SetRegion ball_target(double y_hi, double z_lim) {
  return SetRegion::box(vec({-kInf, 0.0, -z_lim}), vec({kInf, y_hi, z_lim}));
}

}  // namespace

TEST(ForwardInvariance, ContractionSublevelSetPasses) {
  const auto sys = testing_support::linear_flow(2, -1.0);
  const auto K = SetRegion::ball(vec({0, 0}), 1.0);  // {|x|^2 <= 1}
  const auto rep = check_forward_invariance(sys, K, 30, quick(3.0, 1e-2));
  EXPECT_EQ(rep.verdict, Verdict::Pass);
  EXPECT_GT(rep.stats.samples, 0u);
}

TEST(ForwardInvariance, ExpandingFlowEscapesAtLogRatio) {
  const auto sys = testing_support::linear_flow(1, 1.0);
  const auto K = SetRegion::ball(vec({0}), 0.1);
  SimConfig cfg = quick(10.0);
  cfg.seed = 4;
  const auto rep = check_forward_invariance(sys, K, 5, cfg);
  ASSERT_EQ(rep.verdict, Verdict::Fail);
  ASSERT_FALSE(rep.counterexamples.empty());
  const auto& c = rep.counterexamples.front();
  ASSERT_TRUE(c.origin);
  const double oracle = std::log(0.1 / std::abs((*c.origin)[0]));
  EXPECT_NEAR(c.witness.t, oracle, 2e-3);
}

TEST(ForwardInvariance, BouncingBallEnergyNeverIncreases) {
  const auto ball = bouncing_ball();
  SimConfig cfg = ball.sim;
  cfg.horizon = 5.0;
  cfg.seed = 2;
  const auto rep = check_forward_invariance(ball.system, energy_sublevel(9.8, 0.98), 20, cfg);
  EXPECT_EQ(rep.verdict, Verdict::Pass) << report_to_json(rep).dump();
}

TEST(Ras, BouncingBallSpecPasses) {
  const auto ball = bouncing_ball();
  const auto rep = check_ras(ball.system, ball.spec, 1, 1, ball.sim);
  EXPECT_EQ(rep.verdict, Verdict::Pass);
  ASSERT_TRUE(rep.stats.settle_time);
  EXPECT_GT(*rep.stats.settle_time, 0.0);
  EXPECT_LT(*rep.stats.settle_time, ball.spec.settle_deadline);
}

TEST(Ras, LowerUnsafeCeilingFailsAtTheStart) {
  const auto ball = bouncing_ball();
  RASSpec spec = ball.spec;
  spec.unsafe = SetRegion::box(vec({-kInf, 8.0, -kInf}), vec({kInf, kInf, kInf}));
  const auto rep = check_ras(ball.system, spec, 1, 1, ball.sim);
  ASSERT_EQ(rep.verdict, Verdict::Fail);
  EXPECT_EQ(rep.counterexamples.front().condition, "unsafe");
  EXPECT_EQ(rep.counterexamples.front().witness.t, 0.0);
}

TEST(Ras, VacuousTargetSettlesImmediately) {
  const auto ball = bouncing_ball();
  RASSpec spec = ball.spec;
  spec.target = SetRegion::box(ball.system.bounds);
  const auto rep = check_ras(ball.system, spec, 1, 1, ball.sim);
  EXPECT_EQ(rep.verdict, Verdict::Pass);
  EXPECT_EQ(*rep.stats.settle_time, 0.0);
}

TEST(Ras, MonotoneInUnsafeAndTarget) {
  const auto ball = bouncing_ball();
  RASSpec spec = ball.spec;
  spec.settle_deadline = 5.0;
  spec.target = ball_target(0.01, kInf);
  const auto small = check_ras(ball.system, spec, 1, 1, ball.sim);
  spec.target = ball_target(10.0, kInf);
  const auto large = check_ras(ball.system, spec, 1, 1, ball.sim);
  EXPECT_EQ(small.verdict, Verdict::Fail);
  EXPECT_EQ(large.verdict, Verdict::Pass);

  std::vector<Verdict> by_ceiling;
  for (double ceiling : {11.0, 10.0, 9.5, 9.0, 8.0}) {
    spec.unsafe = SetRegion::box(vec({-kInf, ceiling, -kInf}), vec({kInf, kInf, kInf}));
    by_ceiling.push_back(check_ras(ball.system, spec, 1, 1, ball.sim).verdict);
  }
  for (std::size_t k = 1; k < by_ceiling.size(); ++k) {
    if (by_ceiling[k - 1] == Verdict::Fail) {
      EXPECT_EQ(by_ceiling[k], Verdict::Fail);
    }
  }
  EXPECT_EQ(by_ceiling.back(), Verdict::Fail);
}

TEST(Ras, PassImpliesInvarianceAfterSettling) {
  const auto ball = bouncing_ball();
  const auto rep = check_ras(ball.system, ball.spec, 1, 1, ball.sim);
  ASSERT_EQ(rep.verdict, Verdict::Pass);
  const auto arc = solve(ball.system, ball.params.x0, ball.sim).arc;
  arc.for_each_sample([&](int j, double t, const Vector& x) {
    if (t + j >= *rep.stats.settle_time) {
      EXPECT_TRUE(contains(ball.spec.target, x, ball.sim.event_tol));
    }
  });
}

TEST(Ras, WarnsWhenTargetMeetsUnsafe) {
  const auto ball = bouncing_ball();
  RASSpec spec = ball.spec;
  spec.target = ball_target(11.0, 15.0);
  const auto rep = check_ras(ball.system, spec, 1, 1, ball.sim);
  EXPECT_TRUE(std::any_of(rep.notes.begin(), rep.notes.end(),
                          [](const std::string& n) { return n.find("warning") != std::string::npos; }));
}

TEST(StabilitySafety, ContractionKeepsFullOffset) {
  const auto sys = testing_support::linear_flow(2, -1.0);
  StabSafeSpec spec{std::vector<Vector>{vec({1, 1})}, SetRegion::ball(vec({20, 20}), 1.0),
                    SetRegion::ball(vec({0, 0}), 0.0), {0.25, 0.5, 1.0}, 10};
  const auto rep = check_stability_safety(sys, spec, 16, quick(5.0, 1e-2));
  EXPECT_EQ(rep.verdict, Verdict::Pass);
  for (double eps : spec.eps_levels) {
    const auto* c = rep.find("stability@" + std::to_string(eps));
    ASSERT_NE(c, nullptr);
    EXPECT_GE(c->values.at("delta_eps"), eps * (1 - 1e-7));
  }
}

TEST(StabilitySafety, ExpansionFailsAtSmallestEps) {
  const auto sys = testing_support::linear_flow(1, 1.0, 5.0);
  StabSafeSpec spec{std::vector<Vector>{vec({0})}, SetRegion::ball(vec({4}), 0.1), SetRegion::ball(vec({0}), 0.0),
                    {0.1, 0.5}, 10};
  const auto rep = check_stability_safety(sys, spec, 8, quick(10.0, 1e-2));
  EXPECT_EQ(rep.verdict, Verdict::Fail);
  EXPECT_EQ(rep.find("stability@" + std::to_string(0.1))->verdict, Verdict::Fail);
}

TEST(StabilitySafety, BouncingBallPasses) {
  const auto ball = bouncing_ball();
  SimConfig cfg = ball.sim;
  cfg.workers = 4;
  const auto rep = check_stability_safety(ball.system, ball.stability, 1, cfg);
  EXPECT_EQ(rep.verdict, Verdict::Pass) << report_to_json(rep).dump();
  EXPECT_GT(rep.stats.values.at("rho"), 0.0);
}

TEST(InvariantCore, InvariantSetKeepsEveryGridPoint) {
  const auto ball = bouncing_ball();
  SimConfig cfg = ball.sim;
  cfg.horizon = 3.0;
  auto I = energy_sublevel(9.8, 0.98);
  const auto core = estimate_invariant_core(ball.system, I, std::vector<int>{1, 9, 9}, 1, cfg);
  EXPECT_EQ(core.verdict, Verdict::Pass);
  EXPECT_GT(core.grid_points_in_set, 0u);
  EXPECT_EQ(core.points.size(), core.grid_points_in_set);
}

TEST(InvariantCore, BallisticSurvivorsMatchReboundOracle) {
  const auto ball = bouncing_ball();
  const double a = ball.params.a, s = ball.params.restitution;
  SimConfig cfg = ball.sim;
  cfg.horizon = 3.0;
  const auto I = ball_target(0.1, 2.0);
  const auto core = estimate_invariant_core(ball.system, I, std::vector<int>{1, 21, 21}, 1, cfg);
  ASSERT_EQ(core.verdict, Verdict::Pass);
  // Rising states peak at y + z^2/2a; falling ones first land, then rebound to
  // s^2 times that height.
  auto margin = [&](const Vector& x) {
    const double peak = x[1] + x[2] * x[2] / (2 * a);
    return x[2] > 0 ? peak - 0.1 : s * s * peak - 0.1;
  };
  std::size_t kept = 0;
  for (const auto& p : grid_points(testing_support::box({0, 0, -2}, {0, 0.1, 2}), {1, 21, 21})) {
    const bool survived = std::any_of(core.points.begin(), core.points.end(),
                                      [&](const Vector& q) { return (q - p).norm() < 1e-12; });
    kept += survived;
    if (margin(p) > 1e-3) {
      EXPECT_FALSE(survived) << p.transpose();
    }
    if (margin(p) < -1e-3) {
      EXPECT_TRUE(survived) << p.transpose();
    }
  }
  EXPECT_EQ(kept, core.points.size());
}

TEST(InvariantCore, ResimulationStaysInside) {
  const auto ball = bouncing_ball();
  SimConfig cfg = ball.sim;
  cfg.horizon = 3.0;
  const auto I = ball_target(0.1, 2.0);
  const auto core = estimate_invariant_core(ball.system, I, std::vector<int>{1, 15, 15}, 1, cfg);
  SimConfig fresh = cfg;
  fresh.disturbance.seed = 777;
  std::size_t ok = 0;
  for (const auto& p : core.points) {
    bool inside = true;
    solve(ball.system, p, fresh).arc.for_each_sample([&](int, double, const Vector& x) {
      inside = inside && contains(I, x, 2 * cfg.event_tol);
    });
    ok += inside;
  }
  EXPECT_GE(static_cast<double>(ok), 0.99 * static_cast<double>(core.points.size()));
}

TEST(InvariantCore, TargetOutsideFlowAndJumpSetsIsInconclusive) {
  const auto ball = bouncing_ball();
  const auto below = SetRegion::box(vec({0, -0.9, -1}), vec({0, -0.5, 1}));
  const auto core = estimate_invariant_core(ball.system, below, 5, 1, ball.sim);
  EXPECT_EQ(core.verdict, Verdict::Inconclusive);
  EXPECT_EQ(core.no_solution_points, core.points.size());
}
