#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "hylb/hybrid.hpp"
#include "hylb/report.hpp"

namespace hylb {

enum class Priority { JumpFirst, FlowFirst };

struct SimConfig {
  double step = 1e-3;
  double horizon = 10.0;  // flow time
  int max_jumps = 1000;
  double event_tol = kMembershipTol;
  Priority priority = Priority::JumpFirst;
  Disturbance disturbance;
  double zeno_gap = 1e-6;
  /// Applied to the post-jump state when consecutive jumps are closer than
  /// zeno_gap. Without it such a run ends with ZenoAccumulation.
  std::function<Vector(const Vector&)> zeno_snap;
  std::uint64_t seed = 0;  // initial-point sampling in batch and monitor sweeps
  int workers = 1;
};

struct SolveReport {
  HybridArc arc;
  double flow_time = 0.0;
  int jump_count = 0;
  bool zeno_snapped = false;
};

namespace detail {

inline Vector rk4_step(const FlowMap& f, const Vector& x, double h, const Vector& d) {
  const Vector k1 = f(x) + d;
  const Vector k2 = f(x + 0.5 * h * k1) + d;
  const Vector k3 = f(x + 0.5 * h * k2) + d;
  const Vector k4 = f(x + h * k3) + d;
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline void validate(const SimConfig& cfg) {
  if (!(cfg.step > 0.0)) throw Error(ErrorCode::InvalidArgument, "step must be > 0");
  if (!(cfg.event_tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "event_tol must be > 0");
  if (!(cfg.event_tol < cfg.step)) throw Error(ErrorCode::InvalidArgument, "event_tol must be < step");
  if (!(cfg.horizon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "horizon must be >= 0");
  if (cfg.max_jumps < 0) throw Error(ErrorCode::InvalidArgument, "max_jumps must be >= 0");
  if (!(cfg.zeno_gap > 0.0)) throw Error(ErrorCode::InvalidArgument, "zeno_gap must be > 0");
}

}  // namespace detail

/// One maximal (or truncated) solution of H_delta from x0.
inline SolveReport solve(const HybridSystem& sys, const Vector& x0, const SimConfig& cfg) {
  detail::validate(cfg);
  if (x0.size() != sys.dim) throw Error(ErrorCode::DimensionMismatch, "initial state dimension differs from system");
  const double tol = cfg.event_tol;
  const SetRegion bounds = SetRegion::box(sys.bounds);
  if (!x0.allFinite() || !contains(bounds, x0, tol)) {
    throw Error(ErrorCode::BadInitialCondition, "initial state outside the simulation bounds");
  }
  if (!contains(sys.flow_set, x0, tol) && !contains(sys.jump_set, x0, tol)) {
    throw Error(ErrorCode::BadInitialCondition, "initial state outside the flow and jump sets");
  }

  DisturbanceSource noise(cfg.disturbance, sys.dim, sys.delta);
  SolveReport rep;
  HybridArc& arc = rep.arc;
  arc.phases.push_back(Phase{{0.0}, {x0}});

  enum class Exit { None, LeftSets, Bounds };
  Exit pending = Exit::None;  // flow was stopped at the edge of C or of the bounds

  double t = 0.0;
  int j = 0;
  Vector x = x0;
  double last_jump = -kInf;
  const double horizon_slack = 1e-12 * std::max(1.0, cfg.horizon);

  auto stops_flow = [&](const Vector& y) -> Exit {
    if (!contains(bounds, y, tol)) return Exit::Bounds;
    if (!contains(sys.flow_set, y, tol)) return Exit::LeftSets;
    return Exit::None;
  };

  for (;;) {
    const bool in_c = pending == Exit::None && contains(sys.flow_set, x, tol);
    const bool in_d = contains(sys.jump_set, x, tol);

    if (in_d && (cfg.priority == Priority::JumpFirst || !in_c)) {
      if (j >= cfg.max_jumps) {
        arc.termination = Termination::HorizonReached;
        break;
      }
      const auto candidates = sys.jump(x);
      if (candidates.empty()) throw Error(ErrorCode::InvalidArgument, "jump map returned no candidate on D");
      Vector next = candidates.front() + noise.draw({t, j});
      bool snapped = false;
      if (t - last_jump < cfg.zeno_gap) {
        if (!cfg.zeno_snap) {
          arc.termination = Termination::ZenoAccumulation;
          break;
        }
        next = cfg.zeno_snap(next);
        snapped = true;
      }
      ++j;
      last_jump = t;
      x = std::move(next);
      arc.phases.push_back(Phase{{t}, {x}});
      if (snapped) {
        arc.snapped_jumps.insert(j);
        rep.zeno_snapped = true;
      }
      pending = Exit::None;
      continue;
    }
    if (pending == Exit::Bounds) {
      arc.termination = Termination::EscapedBounds;
      break;
    }
    if (!in_c) {
      arc.termination = Termination::LeftFlowAndJumpSets;
      break;
    }
    if (cfg.horizon - t <= horizon_slack) {
      arc.termination = Termination::HorizonReached;
      break;
    }

    const double remaining = cfg.horizon - t;
    const double dt = remaining <= cfg.step * (1.0 + 1e-9) ? remaining : cfg.step;
    const Vector d = noise.draw({t, j});
    Vector xn = detail::rk4_step(sys.flow, x, dt, d);

    const bool watch_d = cfg.priority == Priority::JumpFirst;
    auto event = [&](const Vector& y) {
      return stops_flow(y) != Exit::None || (watch_d && contains(sys.jump_set, y, tol));
    };

    if (!event(xn)) {
      t += dt;
      x = std::move(xn);
      arc.phases.back().t.push_back(t);
      arc.phases.back().x.push_back(x);
      continue;
    }

    // Bisection on the step fraction until the bracketing states are within
    // half the event tolerance of each other.
    double lo = 0.0, hi = dt;
    Vector x_lo = x, x_hi = xn;
    for (int it = 0; it < 200 && (x_hi - x_lo).norm() > 0.5 * tol; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      Vector xm = detail::rk4_step(sys.flow, x, mid, d);
      if (event(xm)) {
        hi = mid;
        x_hi = std::move(xm);
      } else {
        lo = mid;
        x_lo = std::move(xm);
      }
    }

    const Exit kind = stops_flow(x_hi);
    if (kind == Exit::None) {
      // Entered D while still in C: the jump happens from x_hi.
      t += hi;
      x = std::move(x_hi);
    } else {
      // Left C or the bounds: keep the last admissible state.
      pending = kind;
      if (lo > 0.0) {
        t += lo;
        x = std::move(x_lo);
      } else {
        continue;
      }
    }
    if (t > arc.phases.back().t.back()) {
      arc.phases.back().t.push_back(t);
      arc.phases.back().x.push_back(x);
    }
  }

  rep.flow_time = t;
  rep.jump_count = arc.jumps();
  return rep;
}

struct BatchItem {
  std::optional<SolveReport> report;
  std::optional<ErrorCode> error;
  std::string message;
};

namespace detail {

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const auto w = static_cast<std::size_t>(std::max(1, workers));
  if (w == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t k = 0; k < std::min(w, n); ++k) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

}  // namespace detail

/// Sample i uses disturbance seed cfg.disturbance.seed + i.
inline std::vector<BatchItem> solve_batch(const HybridSystem& sys, const std::vector<Vector>& samples,
                                          const SimConfig& cfg) {
  std::vector<BatchItem> out(samples.size());
  detail::parallel_for(samples.size(), cfg.workers, [&](std::size_t i) {
    SimConfig c = cfg;
    c.disturbance.seed = cfg.disturbance.seed + i;
    try {
      out[i].report = solve(sys, samples[i], c);
    } catch (const Error& e) {
      out[i].error = e.code();
      out[i].message = e.what();
    }
  });
  return out;
}

/// Uniform rejection samples of a set inside box; falls back to the box
/// centre region when the set is thin. Singletons return the point.
inline std::vector<Vector> sample_set(const SetRegion& set, const AxisBox& limits, std::size_t n, std::uint64_t seed) {
  if (const auto* b = set.as<Ball>(); b && b->radius == 0.0) return std::vector<Vector>(n, b->center);
  auto bb = bounding_box(set);
  AxisBox box = bb ? clip(*bb, limits) : limits;
  if (is_empty(box) || !box.bounded()) throw Error(ErrorCode::InvalidArgument, "set has no bounded sampling box");
  std::mt19937_64 rng(mix_seed(seed, 17));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vector> out;
  out.reserve(n);
  const std::size_t max_tries = 2000 * std::max<std::size_t>(n, 1);
  for (std::size_t tries = 0; out.size() < n && tries < max_tries; ++tries) {
    Vector p(box.dim());
    for (int i = 0; i < box.dim(); ++i) p[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * u(rng);
    if (contains(set, p, 0.0)) out.push_back(std::move(p));
  }
  return out;
}

/// Point cloud of R^delta_{<=T}(X0): every stored sample with t + j <= T.
inline std::vector<Vector> reachable_sample(const HybridSystem& sys, const SetRegion& x0_set, double T, int n_init,
                                            int n_dist, const SimConfig& cfg) {
  if (n_init < 1 || n_dist < 1) throw Error(ErrorCode::InvalidArgument, "n_init and n_dist must be >= 1");
  const auto inits = sample_set(x0_set, sys.bounds, static_cast<std::size_t>(n_init), cfg.seed);
  std::vector<Vector> cloud;
  if (T <= 0.0) return inits;
  for (std::size_t i = 0; i < inits.size(); ++i) {
    for (int k = 0; k < n_dist; ++k) {
      SimConfig c = cfg;
      c.horizon = std::min(cfg.horizon, T);
      c.max_jumps = std::min(cfg.max_jumps, static_cast<int>(std::floor(T)));
      c.disturbance.seed = mix_seed(cfg.disturbance.seed + i, static_cast<std::uint64_t>(k));
      const auto rep = solve(sys, inits[i], c);
      rep.arc.for_each_sample([&](int j, double t, const Vector& x) {
        if (t + j <= T) cloud.push_back(x);
      });
    }
  }
  return cloud;
}

namespace detail {

/// Distance from x to the piecewise-linear phase restricted to [a, b].
inline double window_distance(const Phase& p, const Vector& x, double a, double b) {
  double best = kInf;
  const auto& ts = p.t;
  if (ts.size() == 1) {
    if (ts[0] >= a && ts[0] <= b) best = (p.x[0] - x).norm();
    return best;
  }
  auto k = static_cast<std::size_t>(std::upper_bound(ts.begin(), ts.end(), a) - ts.begin());
  k = k == 0 ? 0 : k - 1;
  for (; k + 1 < ts.size() && ts[k] <= b; ++k) {
    const double s0 = std::max(ts[k], a), s1 = std::min(ts[k + 1], b);
    if (s0 > s1) continue;
    const double span = ts[k + 1] - ts[k];
    const Vector p0 = p.x[k] + (s0 - ts[k]) / span * (p.x[k + 1] - p.x[k]);
    const Vector p1 = p.x[k] + (s1 - ts[k]) / span * (p.x[k + 1] - p.x[k]);
    const Vector seg = p1 - p0;
    const double len2 = seg.squaredNorm();
    double w = len2 > 0.0 ? std::clamp((x - p0).dot(seg) / len2, 0.0, 1.0) : 0.0;
    best = std::min(best, (p0 + w * seg - x).norm());
  }
  return best;
}

inline bool one_sided_close(const HybridArc& a, const HybridArc& b, double tau, double eps) {
  for (std::size_t j = 0; j < a.phases.size(); ++j) {
    const auto& pa = a.phases[j];
    for (std::size_t k = 0; k < pa.size(); ++k) {
      if (pa.t[k] + static_cast<double>(j) > tau) break;
      if (j >= b.phases.size()) return false;
      if (!(window_distance(b.phases[j], pa.x[k], pa.t[k] - eps, pa.t[k] + eps) < eps)) return false;
    }
  }
  return true;
}

}  // namespace detail

/// (tau, eps)-closeness over stored samples, matched against the interpolant of
/// the other arc inside the time window of half-width eps.
inline bool closeness(const HybridArc& a, const HybridArc& b, double tau, double eps) {
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "eps must be > 0");
  return detail::one_sided_close(a, b, tau, eps) && detail::one_sided_close(b, a, tau, eps);
}

/// psi = phi + (1 - (t+j)/T)(x_new - phi(0,0)), truncated at total time T.
/// When a jump carries t + j across T, the departure before it stands in for T.
inline HybridArc construct_perturbed(const HybridArc& phi, const Vector& x_new, double T) {
  if (!(T > 0.0)) throw Error(ErrorCode::InvalidArgument, "T must be > 0");
  if (total_time(phi.final_time()) < T) throw Error(ErrorCode::HorizonTooShort, "arc ends before total time T");
  // The schedule ends at the last domain time with t + j <= T. A jump can
  // carry t + j across T, in which case that is the departure before it.
  double t_end_total = 0.0;
  for (std::size_t j = 0; j < phi.phases.size(); ++j) {
    const double tj = static_cast<double>(j);
    if (phi.phases[j].t.front() + tj > T) break;
    t_end_total = std::max(t_end_total, std::min(phi.phases[j].t.back() + tj, T));
  }
  if (!(t_end_total > 0.0)) throw Error(ErrorCode::HorizonTooShort, "arc has no flow before total time T");
  const Vector offset = x_new - phi.initial();
  const double snap = 1e-9 * std::max(1.0, T);  // a stored sample this close to the end is the end
  HybridArc psi;
  psi.termination = Termination::HorizonReached;
  for (std::size_t j = 0; j < phi.phases.size(); ++j) {
    const double tj = static_cast<double>(j);
    const auto& p = phi.phases[j];
    const double t_end = t_end_total - tj;  // phase-local end time
    if (p.t.front() > t_end + snap) break;
    Phase q;
    for (std::size_t k = 0; k < p.size() && p.t[k] <= t_end + snap; ++k) {
      const bool last = p.t[k] >= t_end - snap;
      q.t.push_back(p.t[k]);
      q.x.push_back(last ? p.x[k] : Vector(p.x[k] + ((t_end - p.t[k]) / t_end_total) * offset));
      if (last) break;
    }
    if (q.t.back() < t_end - snap && p.t.back() >= t_end) {
      q.t.push_back(t_end);
      q.x.push_back(arc_eval(phi, t_end, static_cast<int>(j)));
    }
    psi.phases.push_back(std::move(q));
    if (phi.snapped_jumps.count(static_cast<int>(j))) psi.snapped_jumps.insert(static_cast<int>(j));
  }
  return psi;
}

/// Largest |F(q) - F(p)| / |q - p| over random q within radius of the points.
inline double estimate_lipschitz(const FlowMap& F, const std::vector<Vector>& points, double radius, int probes,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 99));
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  double best = 0.0;
  for (const auto& p : points) {
    const Vector fp = F(p);
    for (int k = 0; k < probes; ++k) {
      Vector dir(p.size());
      for (Eigen::Index i = 0; i < p.size(); ++i) dir[i] = normal(rng);
      if (dir.norm() == 0.0) continue;
      const Vector q = p + dir.normalized() * radius * unif(rng);
      best = std::max(best, (F(q) - fp).norm() / (q - p).norm());
    }
  }
  return best;
}

inline double estimate_lipschitz(const JumpMap& G, const std::vector<Vector>& points, double radius, int probes,
                                 std::uint64_t seed) {
  return estimate_lipschitz([&](const Vector& x) { return G(x).front(); }, points, radius, probes, seed);
}

namespace detail {

/// Positive amount by which x lies outside the set, or 1 when the set has no
/// distance.
inline double outside_margin(const SetRegion& s, const Vector& x) {
  if (supports_distance(s)) return dist_to_set(x, s);
  return 1.0;
}

}  // namespace detail

/// Checks the arc against the inclusion dynamics of sys (with its delta).
inline CheckReport verify_solution(const HybridSystem& sys, const HybridArc& arc, double slope_tol,
                                   double event_tol = kMembershipTol) {
  CheckReport rep;
  rep.condition = "solution";
  if (const auto issues = structural_issues(arc); !issues.empty()) {
    rep.verdict = Verdict::Fail;
    rep.notes = issues;
    rep.counterexamples.push_back({"structure", 1.0, Witness{-1, 0, 0.0, Vector::Zero(std::max(arc.dim(), 1))}, {}});
    return rep;
  }
  const double allow = sys.delta + slope_tol;
  bool seen_a = false, seen_b = false, seen_c = false;
  double worst = -kInf;

  for (std::size_t j = 0; j < arc.phases.size(); ++j) {
    const auto& p = arc.phases[j];
    const int jj = static_cast<int>(j);
    for (std::size_t k = 1; k + 1 < p.size(); ++k) {
      ++rep.stats.samples;
      if (!contains(sys.flow_set, p.x[k], event_tol)) {
        const double m = detail::outside_margin(sys.flow_set, p.x[k]) - event_tol;
        worst = std::max(worst, m);
        if (!seen_a) rep.record({"flow_set", m, Witness{-1, jj, p.t[k], p.x[k]}, {}});
        seen_a = true;
      }
    }
    for (std::size_t k = 0; k + 1 < p.size(); ++k) {
      const double dt = p.t[k + 1] - p.t[k];
      const Vector slope = (p.x[k + 1] - p.x[k]) / dt;
      const Vector mid = 0.5 * (p.x[k] + p.x[k + 1]);
      // Finite differences over very short steps lose digits to cancellation.
      const double roundoff = 8e-16 * (p.x[k].lpNorm<Eigen::Infinity>() + p.x[k + 1].lpNorm<Eigen::Infinity>() + 1.0) / dt;
      const double m = (slope - sys.flow(mid)).norm() - allow - roundoff;
      worst = std::max(worst, m);
      if (m > 0.0 && !seen_b) {
        rep.record({"flow_slope", m, Witness{-1, jj, p.t[k], p.x[k]}, {}});
        seen_b = true;
      }
    }
    if (j == 0 || arc.snapped_jumps.count(jj)) continue;
    const Vector& dep = arc.phases[j - 1].x.back();
    const Vector& land = p.x.front();
    double m = 0.0;
    if (!contains(sys.jump_set, dep, event_tol)) {
      m = detail::outside_margin(sys.jump_set, dep) - event_tol;
    } else {
      double best = kInf;
      for (const auto& g : sys.jump(dep)) best = std::min(best, (land - g).norm());
      m = best - allow;
    }
    worst = std::max(worst, m);
    if (m > 0.0 && !seen_c) {
      rep.record({"jump", m, Witness{-1, jj, p.t.front(), land}, {}});
      seen_c = true;
    }
  }
  rep.stats.worst_margin = worst;
  return rep;
}

}  // namespace hylb
