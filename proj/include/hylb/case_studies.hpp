#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "hylb/certificates.hpp"
#include "hylb/controller.hpp"
#include "hylb/monitor.hpp"

namespace hylb {

// ---------------------------------------------------------------- bouncing ball

struct BouncingBallParams {
  double a = 9.8;             // gravity
  double restitution = 0.8;   // varsigma
  Vector x0 = Vector::Zero(3);
  double unsafe_height = 10.0;
  double target_height = 0.1;
  double settle_deadline = 100.0;

  BouncingBallParams() { x0 << 0.0, 9.0, 0.8; }
};

struct BouncingBall {
  BouncingBallParams params;
  HybridSystem system;
  CertificatePair cert;
  RASSpec spec;
  StabSafeSpec stability;
  AxisBox operating_box;
  SimConfig sim;

  double energy(const Vector& x) const { return 0.5 * x[2] * x[2] + params.a * x[1]; }

  /// Time until y = 0 along the ballistic parabola from x.
  double impact_time(const Vector& x) const {
    const double y = x[1], z = x[2];
    return (z + std::sqrt(z * z + 2.0 * params.a * y)) / params.a;
  }
};

inline double sigmoid5(double x) { return 1.0 / (1.0 + std::exp(-5.0 * x)); }

/// State (x, y, z): horizontal position, height, vertical velocity.
inline BouncingBall bouncing_ball(const BouncingBallParams& params = {}) {
  const double a = params.a, s = params.restitution;
  if (!(a > 0.0)) throw Error(ErrorCode::InvalidArgument, "gravity must be positive");
  if (!(s > 0.0 && s < 1.0)) throw Error(ErrorCode::InvalidArgument, "restitution must lie in (0, 1)");
  BouncingBall ball;
  ball.params = params;

  Vector lo(3), hi(3);
  lo << -kInf, 0.0, -kInf;
  hi << kInf, kInf, kInf;
  const SetRegion C = SetRegion::box(lo, hi);
  // y = 0 with strictly falling z; the small offset keeps the resting state
  // (y, z) = (0, 0) out of D.
  lo << -kInf, 0.0, -kInf;
  hi << kInf, 0.0, -1e-8;
  const SetRegion D = SetRegion::box(lo, hi);

  FlowMap f = [a](const Vector& x) {
    Vector dx(3);
    if (x[1] <= 0.0 && x[2] == 0.0) {
      dx << 1.0, 0.0, 0.0;  // at rest on the ground
    } else {
      dx << 1.0, x[2], -a;
    }
    return dx;
  };
  JumpMap g = [s](const Vector& x) {
    Vector next(3);
    next << x[0], 0.0, -s * x[2];
    return std::vector<Vector>{next};
  };
  AxisBox bounds{Vector(3), Vector(3)};
  bounds.lo << -1e3, -1.0, -20.0;
  bounds.hi << 1e3, 12.0, 20.0;
  ball.system = make_system(3, C, std::move(f), D, std::move(g), bounds);

  ball.operating_box = AxisBox{Vector(3), Vector(3)};
  ball.operating_box.lo << -5.0, 0.0, -15.0;
  ball.operating_box.hi << 25.0, 11.0, 15.0;

  const double k = (1.0 - s * s) / (std::numbers::pi * (1.0 + s * s));
  ball.cert.V.value = [a, k](const Vector& x) {
    return (1.0 + k * std::atan(x[2])) * (0.5 * x[2] * x[2] + a * x[1]);
  };
  ball.cert.V.grad = [a, k](const Vector& x) {
    const double z = x[2];
    const double w = 1.0 + k * std::atan(z);
    const double E = 0.5 * z * z + a * x[1];
    Vector g(3);
    g << 0.0, a * w, k * E / (1.0 + z * z) + w * z;
    return g;
  };
  ball.cert.B = ScalarField{
      [a](const Vector& x) { return 0.5 * sigmoid5(x[0]) - x[1] - x[2] * x[2] / (2.0 * a) + 9.5; },
      [a](const Vector& x) {
        const double sg = sigmoid5(x[0]);
        Vector g(3);
        g << 2.5 * sg * (1.0 - sg), -1.0, -x[2] / a;
        return g;
      }};
  lo << -kInf, -2.0, -16.0;
  hi << kInf, 13.0, 16.0;
  ball.cert.region = SetRegion::box(lo, hi);

  lo << -kInf, params.unsafe_height, -kInf;
  hi << kInf, kInf, kInf;
  const SetRegion U = SetRegion::box(lo, hi);
  lo << -kInf, 0.0, -kInf;
  hi << kInf, params.target_height, kInf;
  const SetRegion I = SetRegion::box(lo, hi);
  lo << -kInf, 0.0, 0.0;
  hi << kInf, 0.0, 0.0;
  const SetRegion A = SetRegion::box(lo, hi);

  ball.spec = RASSpec{std::vector<Vector>{params.x0}, U, I, params.settle_deadline};
  ball.stability = StabSafeSpec{std::vector<Vector>{params.x0}, U, A, {0.5, 1.0, 2.0}, 10};

  ball.sim.step = 1e-3;
  ball.sim.horizon = 20.0;
  ball.sim.max_jumps = 10000;
  ball.sim.zeno_snap = [](const Vector& x) {
    Vector r = x;
    r[1] = 0.0;
    r[2] = 0.0;
    return r;
  };
  return ball;
}

// ------------------------------------------------------------- Moore-Greitzer

struct MooreGreitzerParams {
  double lc = 8.0;
  double iota = 0.18;
  double theta = 0.25;
  double a_coef = 1.67 * 0.18;
  Vector zeta = Vector::Zero(2);
  double r = 0.003;
  Vector unsafe_center = Vector::Zero(2);
  double unsafe_half_width = 0.003;
  double sigma = 0.07;
  double gamma0 = 0.64;
  double period = 0.5;
  double v_max = 0.05;
  double gamma_min = 0.5;
  double gamma_max = 1.0;
  double gamma_rate = 0.01;
  double horizon = 100.0;
  AxisBox operating_box{Vector(2), Vector(2)};

  MooreGreitzerParams() {
    zeta << 0.4519, 0.6513;
    unsafe_center << 0.5, 0.653;
    operating_box.lo << 0.2, 0.2;
    operating_box.hi << 0.9, 1.2;
  }
};

/// Cubic compressor characteristic.
inline double psi_c(double phi, const MooreGreitzerParams& p = {}) {
  const double s = phi / p.theta - 1.0;
  return p.a_coef + p.iota * (1.0 + 1.5 * s - 0.5 * s * s * s);
}

inline double psi_c_prime(double phi, const MooreGreitzerParams& p = {}) {
  const double s = phi / p.theta - 1.0;
  return p.iota * (1.5 - 1.5 * s * s) / p.theta;
}

inline double checked_sqrt(double psi) {
  if (psi < 0.0) throw Error(ErrorCode::DomainViolation, "square root of negative Psi");
  return std::sqrt(psi);
}

/// Equilibrium (Phi, Psi) of the uncontrolled plant at throttle gamma.
inline Vector mg_equilibrium(double gamma, const MooreGreitzerParams& p = {}) {
  if (!(gamma >= 0.5 && gamma <= 1.0)) throw Error(ErrorCode::InvalidArgument, "gamma must lie in [0.5, 1]");
  Eigen::Vector2d x(p.theta, psi_c(p.theta, p));
  auto residual = [&](const Eigen::Vector2d& y) {
    return Eigen::Vector2d(psi_c(y[0], p) - y[1], y[0] - gamma * checked_sqrt(y[1]));
  };
  Eigen::Vector2d F = residual(x);
  for (int it = 0; it < 100; ++it) {
    if (F.lpNorm<Eigen::Infinity>() <= 1e-12) return x;
    Eigen::Matrix2d J;
    J << psi_c_prime(x[0], p), -1.0, 1.0, -gamma / (2.0 * std::sqrt(x[1]));
    const Eigen::Vector2d step = J.fullPivLu().solve(-F);
    double lambda = 1.0;
    for (int k = 0; k < 30; ++k, lambda *= 0.5) {
      const Eigen::Vector2d trial = x + lambda * step;
      if (trial[1] <= 0.0) continue;
      const Eigen::Vector2d Ft = residual(trial);
      if (Ft.norm() < F.norm() || k == 29) {
        x = trial;
        F = Ft;
        break;
      }
    }
  }
  if (F.lpNorm<Eigen::Infinity>() <= 1e-12) return x;
  throw Error(ErrorCode::NoConvergence, "equilibrium iteration did not converge in 100 steps");
}

struct MooreGreitzer {
  MooreGreitzerParams params;
  ControlledPlant plant;
  CertificatePair cert;
  RASSpec spec;
  SampleHoldConfig hold;
  CostModel cost;
  PolicyOptions policy;

  SetRegion unsafe() const { return spec.unsafe; }

  /// h = |x - c|_inf - r; non-positive on the protected box.
  double h(const Vector& x) const {
    return (x - params.unsafe_center).lpNorm<Eigen::Infinity>() - params.unsafe_half_width;
  }

  DecisionFn decision_fn() const {
    return [m = *this](const Vector& x, const Vector& u_prev) {
      return qp_decide(x, m.cert.V, *m.cert.B, m.plant, m.hold, m.cost, u_prev, m.hold.period, m.policy);
    };
  }
};

/// Affine-in-input plant: x = (Phi, Psi), u = (v, gamma).
inline MooreGreitzer moore_greitzer(const MooreGreitzerParams& params = {}) {
  MooreGreitzer mg;
  mg.params = params;
  const double lc = params.lc;
  const MooreGreitzerParams p = params;

  mg.plant.dim_x = 2;
  mg.plant.dim_u = 2;
  mg.plant.drift = [p, lc](const Vector& x) {
    Vector d(2);
    d << (psi_c(x[0], p) - x[1]) / lc, x[0] / (16.0 * lc);
    return d;
  };
  mg.plant.input_matrix = [lc](const Vector& x) {
    const double root = checked_sqrt(x[1]);
    Matrix G(2, 2);
    G << 1.0, 0.0, 0.0, -root / (16.0 * lc);
    return G;
  };
  mg.plant.input_box = AxisBox{Vector(2), Vector(2)};
  mg.plant.input_box.lo << -params.v_max, params.gamma_min;
  mg.plant.input_box.hi << params.v_max, params.gamma_max;
  mg.plant.state_box = params.operating_box;

  const Vector zeta = params.zeta;
  mg.cert.V = ScalarField{[zeta](const Vector& x) { return (x - zeta).squaredNorm(); },
                          [zeta](const Vector& x) { return Vector(2.0 * (x - zeta)); }};
  const Vector c = params.unsafe_center;
  const double r = params.unsafe_half_width;
  mg.cert.B = ScalarField{
      [c, r](const Vector& x) {
        const double hh = (x - c).lpNorm<Eigen::Infinity>() - r;
        if (hh <= 0.0) return -kInf;
        return -std::log(hh / (1.0 + hh));
      },
      [c, r](const Vector& x) {
        const Vector d = x - c;
        Eigen::Index i = 0;
        const double m = d.cwiseAbs().maxCoeff(&i);
        const double hh = m - r;
        Vector g = Vector::Zero(2);
        if (hh <= 0.0) return g;
        g[i] = (d[i] < 0.0 ? 1.0 : -1.0) / (hh * (1.0 + hh));
        return g;
      }};
  mg.cert.region = SetRegion::box(params.operating_box);

  const SetRegion U = SetRegion::box(c.array() - r, c.array() + r);
  mg.spec = RASSpec{std::vector<Vector>{mg_equilibrium(params.gamma0, params)}, U, SetRegion::ball(zeta, params.r),
                    params.horizon};

  mg.hold.period = params.period;
  mg.hold.sigma = params.sigma;
  mg.hold.rate_limits = {std::nullopt, params.gamma_rate};

  mg.cost = [p, lc](const Vector& x) {
    const double phi = x[0], psi = x[1];
    const double k = 16.0 * lc * lc;
    QuadraticCost q;
    q.H = Matrix::Zero(2, 2);
    q.H(0, 0) = 2.0;
    q.H(1, 1) = 2.0 + 2.0 * psi / k;
    q.g = Vector(2);
    const double root = checked_sqrt(psi);
    q.g << 2.0 * (psi_c(phi, p) - psi) / lc, -2.0 * phi * root / k;
    q.c0 = phi * phi / k;
    return q;
  };
  mg.policy.barrier = BarrierKind::Reciprocal;
  mg.policy.alpha = 1.0;
  mg.policy.fallback = LadderFallback::PredictV;
  return mg;
}

/// Closed loop from the equilibrium at gamma0 with v = 0.
inline ClosedLoopRun run_moore_greitzer(const MooreGreitzer& mg, SimConfig sim = {}) {
  sim.horizon = mg.params.horizon;
  sim.max_jumps = std::max(sim.max_jumps, static_cast<int>(mg.params.horizon / mg.params.period) + 10);
  const Vector x0 = mg_equilibrium(mg.params.gamma0, mg.params);
  Vector u0(2);
  u0 << 0.0, mg.params.gamma0;
  return run_closed_loop(mg.plant, mg.decision_fn(), mg.hold, x0, u0, sim);
}

}  // namespace hylb
