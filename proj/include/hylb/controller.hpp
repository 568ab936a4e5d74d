#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hylb/certificates.hpp"
#include "hylb/simulator.hpp"

namespace hylb {

/// a . u <= b
struct LinearConstraint {
  Vector a;
  double b = 0.0;
};

/// 0.5 u'Hu + g'u + c0.
struct QuadraticCost {
  Matrix H;
  Vector g;
  double c0 = 0.0;

  double operator()(const Vector& u) const { return 0.5 * u.dot(H * u) + g.dot(u) + c0; }
};

struct QPProblem {
  QuadraticCost cost;
  std::vector<LinearConstraint> rows;
  AxisBox box;
};

namespace detail {

/// Rows plus the finite faces of the box.
inline std::vector<LinearConstraint> all_constraints(const QPProblem& qp) {
  std::vector<LinearConstraint> out = qp.rows;
  const int m = static_cast<int>(qp.cost.g.size());
  for (int i = 0; i < m && qp.box.dim() == m; ++i) {
    Vector e = Vector::Zero(m);
    e[i] = 1.0;
    if (std::isfinite(qp.box.hi[i])) out.push_back({e, qp.box.hi[i]});
    if (std::isfinite(qp.box.lo[i])) out.push_back({-e, -qp.box.lo[i]});
  }
  return out;
}

inline double violation(const LinearConstraint& c, const Vector& u) { return c.a.dot(u) - c.b; }

inline bool feasible(const std::vector<LinearConstraint>& cons, const Vector& u) {
  for (const auto& c : cons) {
    if (violation(c, u) > 1e-11 * (1.0 + std::abs(c.b))) return false;
  }
  return true;
}

}  // namespace detail

/// Exact minimizer for dim u <= 2 by enumerating active sets: the free
/// optimum, each single active constraint, each vertex. Empty polytope gives
/// nullopt.
inline std::optional<Vector> solve_qp(const QPProblem& qp) {
  const auto m = qp.cost.g.size();
  if (m < 1 || m > 2) throw Error(ErrorCode::InvalidArgument, "solve_qp supports 1 or 2 decision variables");
  if (qp.cost.H.rows() != m || qp.cost.H.cols() != m) throw Error(ErrorCode::DimensionMismatch, "cost matrix size");
  const auto cons = detail::all_constraints(qp);
  const Matrix& H = qp.cost.H;
  const Vector& g = qp.cost.g;

  std::vector<Vector> cands;
  cands.push_back(H.ldlt().solve(-g));
  for (const auto& c : cons) {
    if (c.a.norm() == 0.0) continue;
    Matrix K = Matrix::Zero(m + 1, m + 1);
    K.topLeftCorner(m, m) = H;
    K.block(0, m, m, 1) = c.a;
    K.block(m, 0, 1, m) = c.a.transpose();
    Vector rhs(m + 1);
    rhs << -g, c.b;
    cands.push_back(K.fullPivLu().solve(rhs).head(m));
  }
  if (m == 2) {
    for (std::size_t i = 0; i < cons.size(); ++i) {
      for (std::size_t k = i + 1; k < cons.size(); ++k) {
        Eigen::Matrix2d A;
        A.row(0) = cons[i].a.transpose();
        A.row(1) = cons[k].a.transpose();
        if (std::abs(A.determinant()) <= 1e-14 * cons[i].a.norm() * cons[k].a.norm()) continue;
        cands.push_back(A.inverse() * Eigen::Vector2d(cons[i].b, cons[k].b));
      }
    }
  }
  std::optional<Vector> best;
  double best_cost = kInf;
  for (auto& u : cands) {
    if (!u.allFinite() || !detail::feasible(cons, u)) continue;
    const double c = qp.cost(u);
    if (c < best_cost) {
      best_cost = c;
      best = std::move(u);
    }
  }
  return best;
}

/// max(primal infeasibility, min over active subsets of the stationarity and
/// multiplier-sign residual). Multipliers come from least squares.
inline double kkt_residual(const QPProblem& qp, const Vector& u) {
  const auto cons = detail::all_constraints(qp);
  const Vector grad = qp.cost.H * u + qp.cost.g;
  double primal = 0.0;
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < cons.size(); ++i) {
    const double v = detail::violation(cons[i], u);
    primal = std::max(primal, v);
    if (std::abs(v) <= 1e-9 * (1.0 + std::abs(cons[i].b))) active.push_back(i);
  }
  double best = grad.lpNorm<Eigen::Infinity>();
  const auto m = static_cast<std::size_t>(u.size());
  auto try_set = [&](const std::vector<std::size_t>& s) {
    Matrix At(u.size(), static_cast<Eigen::Index>(s.size()));
    for (std::size_t k = 0; k < s.size(); ++k) At.col(static_cast<Eigen::Index>(k)) = cons[s[k]].a;
    const Vector lambda = At.colPivHouseholderQr().solve(-grad);
    const double stat = (At * lambda + grad).lpNorm<Eigen::Infinity>();
    const double sign = std::max(0.0, -lambda.minCoeff());
    best = std::min(best, std::max(stat, sign));
  };
  for (std::size_t i = 0; i < active.size(); ++i) {
    try_set({active[i]});
    if (m < 2) continue;
    for (std::size_t k = i + 1; k < active.size(); ++k) try_set({active[i], active[k]});
  }
  return std::max(primal, best);
}

struct ControlledPlant {
  int dim_x = 0;
  int dim_u = 0;
  FlowMap drift;
  std::function<Matrix(const Vector&)> input_matrix;
  AxisBox input_box;
  AxisBox state_box;  // operating box, used as simulation bounds

  Vector dynamics(const Vector& x, const Vector& u) const { return drift(x) + input_matrix(x) * u; }
};

struct SampleHoldConfig {
  double period = 0.5;
  double sigma = 0.07;
  std::vector<std::optional<double>> rate_limits;
};

/// u = policy(x, u_prev)
using Policy = std::function<Vector(const Vector&, const Vector&)>;

/// State z = (x, u, tau): u held and tau advancing during flow, decisions at
/// tau = period.
inline HybridSystem augment_sample_hold(const ControlledPlant& plant, Policy policy, const SampleHoldConfig& cfg) {
  if (!(cfg.period > 0.0)) throw Error(ErrorCode::InvalidArgument, "period must be > 0");
  const int nx = plant.dim_x, nu = plant.dim_u, n = nx + nu + 1;
  Vector lo = Vector::Constant(n, -kInf), hi = Vector::Constant(n, kInf);
  lo[n - 1] = 0.0;
  hi[n - 1] = cfg.period;
  const SetRegion C = SetRegion::box(lo, hi);
  lo[n - 1] = cfg.period;
  const SetRegion D = SetRegion::box(lo, hi);

  AxisBox bounds{Vector(n), Vector(n)};
  bounds.lo << plant.state_box.lo, plant.input_box.lo, 0.0;
  bounds.hi << plant.state_box.hi, plant.input_box.hi, cfg.period;

  FlowMap flow = [plant](const Vector& z) {
    Vector dz = Vector::Zero(z.size());
    dz.head(plant.dim_x) = plant.dynamics(z.head(plant.dim_x), z.segment(plant.dim_x, plant.dim_u));
    dz[z.size() - 1] = 1.0;
    return dz;
  };
  JumpMap jump = [nx, nu, policy = std::move(policy)](const Vector& z) {
    Vector next = z;
    next.segment(nx, nu) = policy(z.head(nx), z.segment(nx, nu));
    next[z.size() - 1] = 0.0;
    return std::vector<Vector>{next};
  };
  return make_system(n, C, std::move(flow), D, std::move(jump), std::move(bounds));
}

/// Zeroing rows keep L_fB + L_gB u >= sigma. Reciprocal rows keep
/// L_fB + L_gB u <= alpha / B - sigma, for barriers that grow toward the
/// unsafe set.
enum class BarrierKind { Zeroing, Reciprocal };

/// Rows [V-row, B-row] of the admissible control set at x.
inline std::vector<LinearConstraint> admissible_constraints(const Vector& x, const ScalarField& V, const ScalarField& B,
                                                            const ControlledPlant& plant, double sigma,
                                                            BarrierKind kind = BarrierKind::Zeroing,
                                                            double alpha = 1.0) {
  const Vector f0 = plant.drift(x);
  const Matrix G = plant.input_matrix(x);
  const Vector gv = V.gradient(x), gb = B.gradient(x);
  const double lfv = gv.dot(f0), lfb = gb.dot(f0);
  const Vector lgv = G.transpose() * gv, lgb = G.transpose() * gb;
  std::vector<LinearConstraint> rows;
  rows.push_back({lgv, -sigma - lfv - V(x)});
  if (kind == BarrierKind::Zeroing) {
    rows.push_back({-lgb, lfb - sigma});
  } else {
    rows.push_back({lgb, alpha / B(x) - sigma - lfb});
  }
  return rows;
}

/// What to do once the sigma halvings are exhausted.
enum class LadderFallback {
  MinimizeCost,  // drop the V-row, minimize the cost under the B-row
  PredictV,      // drop the V-row, minimize the one-hold prediction of V under the B-row
};

struct PolicyOptions {
  BarrierKind barrier = BarrierKind::Zeroing;
  double alpha = 1.0;
  int max_halvings = 8;
  LadderFallback fallback = LadderFallback::MinimizeCost;
};

using CostModel = std::function<QuadraticCost(const Vector&)>;

/// Fallback levels: 0 nominal, 1..max_halvings relaxed sigma, then
/// kDropVRow (B-row at sigma), kDropVRowUnmargined (B-row at 0), kHold.
struct PolicyDecision {
  Vector u;
  int level = 0;
  double sigma = 0.0;
  double v_slack = 0.0;  // b - a.u of the V-row at the applied sigma
  double b_slack = 0.0;
  double cost = 0.0;
};

inline constexpr int kDropVRow = 100;
inline constexpr int kDropVRowUnmargined = 101;
inline constexpr int kHold = 102;

inline std::string level_name(int level) {
  if (level == 0) return "nominal";
  if (level == kDropVRow) return "drop_v_row";
  if (level == kDropVRowUnmargined) return "drop_v_row_unmargined";
  if (level == kHold) return "hold";
  return "relaxed_" + std::to_string(level);
}

/// Per-decision input box: the plant box narrowed by rate limits around u_prev.
inline AxisBox decision_box(const ControlledPlant& plant, const SampleHoldConfig& cfg, const Vector& u_prev,
                            double dt) {
  AxisBox box = plant.input_box;
  for (int i = 0; i < plant.dim_u && i < static_cast<int>(cfg.rate_limits.size()); ++i) {
    if (!cfg.rate_limits[i]) continue;
    box.lo[i] = std::max(box.lo[i], u_prev[i] - *cfg.rate_limits[i] * dt);
    box.hi[i] = std::min(box.hi[i], u_prev[i] + *cfg.rate_limits[i] * dt);
  }
  return box;
}

inline Matrix hessian_fd(const ScalarField& V, const Vector& x, double h = 1e-5) {
  const auto n = x.size();
  Matrix H(n, n);
  Vector p = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    p[i] = x[i] + h;
    const Vector up = V.gradient(p);
    p[i] = x[i] - h;
    const Vector down = V.gradient(p);
    p[i] = x[i];
    H.col(i) = (up - down) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

/// CLF-CBF QP with the infeasibility ladder.
inline PolicyDecision qp_decide(const Vector& x, const ScalarField& V, const ScalarField& B,
                                const ControlledPlant& plant, const SampleHoldConfig& cfg, const CostModel& cost_model,
                                const Vector& u_prev, double dt, const PolicyOptions& opts = {}) {
  const AxisBox box = decision_box(plant, cfg, u_prev, dt);
  const QuadraticCost cost = cost_model(x);
  auto finish = [&](Vector u, int level, double sigma) {
    PolicyDecision d;
    const auto rows = admissible_constraints(x, V, B, plant, sigma, opts.barrier, opts.alpha);
    d.v_slack = rows[0].b - rows[0].a.dot(u);
    d.b_slack = rows[1].b - rows[1].a.dot(u);
    d.cost = cost(u);
    d.u = std::move(u);
    d.level = level;
    d.sigma = sigma;
    return d;
  };

  double sigma = cfg.sigma;
  for (int k = 0; k <= opts.max_halvings; ++k) {
    const auto rows = admissible_constraints(x, V, B, plant, sigma, opts.barrier, opts.alpha);
    if (auto u = solve_qp({cost, rows, box})) return finish(std::move(*u), k, sigma);
    sigma *= 0.5;
  }

  QuadraticCost fallback_cost = cost;
  if (opts.fallback == LadderFallback::PredictV) {
    // V(x + T(f0 + G u)) to second order, exact for quadratic V.
    const Matrix G = plant.input_matrix(x);
    const Vector f0 = plant.drift(x);
    const Matrix HV = hessian_fd(V, x);
    const Vector gv = V.gradient(x);
    fallback_cost.H = dt * dt * G.transpose() * HV * G;
    fallback_cost.H.diagonal().array() += 1e-12;
    fallback_cost.g = dt * G.transpose() * gv + dt * dt * G.transpose() * HV * f0;
    fallback_cost.c0 = V(x) + dt * gv.dot(f0) + 0.5 * dt * dt * f0.dot(HV * f0);
  }
  int level = kDropVRow;
  for (double s : {cfg.sigma, 0.0}) {
    const auto rows = admissible_constraints(x, V, B, plant, s, opts.barrier, opts.alpha);
    if (auto u = solve_qp({fallback_cost, {rows[1]}, box})) return finish(std::move(*u), level, s);
    level = kDropVRowUnmargined;
  }

  // Hold: rate-limited inputs keep their value, the others go to zero.
  Vector u = Vector::Zero(plant.dim_u);
  for (int i = 0; i < plant.dim_u; ++i) {
    const bool limited = i < static_cast<int>(cfg.rate_limits.size()) && cfg.rate_limits[i];
    u[i] = std::clamp(limited ? u_prev[i] : 0.0, plant.input_box.lo[i], plant.input_box.hi[i]);
  }
  return finish(std::move(u), kHold, 0.0);
}

inline Vector qp_policy(const Vector& x, const ScalarField& V, const ScalarField& B, const ControlledPlant& plant,
                        const SampleHoldConfig& cfg, const CostModel& cost_model, const Vector& u_prev, double dt,
                        const PolicyOptions& opts = {}) {
  return qp_decide(x, V, B, plant, cfg, cost_model, u_prev, dt, opts).u;
}

using DecisionFn = std::function<PolicyDecision(const Vector& x, const Vector& u_prev)>;

struct DecisionRecord {
  int index = 0;
  double t = 0.0;
  Vector x;
  Vector u_prev;
  PolicyDecision decision;
};

struct ClosedLoopRun {
  HybridSystem system;
  SolveReport report;
  std::vector<DecisionRecord> log;
};

/// Simulates the sample-and-hold loop from (x0, u0), deciding at t = 0. The
/// log replays each decision at its departure state; decisions are pure, so
/// the replay matches the applied input.
inline ClosedLoopRun run_closed_loop(const ControlledPlant& plant, const DecisionFn& decide,
                                     const SampleHoldConfig& cfg, const Vector& x0, const Vector& u0,
                                     const SimConfig& sim) {
  ClosedLoopRun run;
  run.system = augment_sample_hold(plant, [decide](const Vector& x, const Vector& up) { return decide(x, up).u; }, cfg);
  Vector z0(plant.dim_x + plant.dim_u + 1);
  z0 << x0, u0, cfg.period;
  run.report = solve(run.system, z0, sim);
  const auto& arc = run.report.arc;
  for (std::size_t j = 1; j < arc.phases.size(); ++j) {
    const Vector& z = arc.phases[j - 1].x.back();
    DecisionRecord rec;
    rec.index = static_cast<int>(j - 1);
    rec.t = arc.phases[j - 1].t.back();
    rec.x = z.head(plant.dim_x);
    rec.u_prev = z.segment(plant.dim_x, plant.dim_u);
    rec.decision = decide(rec.x, rec.u_prev);
    run.log.push_back(std::move(rec));
  }
  return run;
}

}  // namespace hylb
