#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hylb/simulator.hpp"

namespace hylb {

/// Initial condition set: a region to sample or an explicit point list.
using InitialSet = std::variant<SetRegion, std::vector<Vector>>;

struct RASSpec {
  InitialSet x0;
  SetRegion unsafe;
  SetRegion target;
  double settle_deadline = 100.0;  // total hybrid time
};

struct StabSafeSpec {
  InitialSet x0;
  SetRegion unsafe;
  SetRegion attractor;
  std::vector<double> eps_levels{0.5, 1.0};
  int bisection_steps = 10;
};

struct InvariantCore {
  std::vector<Vector> points;
  std::size_t grid_points_in_set = 0;
  std::size_t no_solution_points = 0;  // grid points of I outside C and D
  bool empty = false;
  Verdict verdict = Verdict::Pass;
};

namespace detail {

inline std::vector<Vector> initial_points(const InitialSet& x0, const HybridSystem& sys, std::size_t n,
                                          std::uint64_t seed) {
  if (const auto* pts = std::get_if<std::vector<Vector>>(&x0)) return *pts;
  return sample_set(std::get<SetRegion>(x0), sys.bounds, n, seed);
}

inline bool has_solution(const HybridSystem& sys, const Vector& x, double tol) {
  return contains(SetRegion::box(sys.bounds), x, tol) &&
         (contains(sys.flow_set, x, tol) || contains(sys.jump_set, x, tol));
}

/// Depth of x inside a set: -signed distance when available, else 0.
inline double depth(const SetRegion& s, const Vector& x) {
  if (!supports_distance(s)) return 0.0;
  return std::max(-signed_distance(x, s), 0.0);
}

struct Run {
  std::size_t origin = 0;
  SolveReport rep;
};

/// n_dist realizations per initial point, seeds partitioned by (point, draw).
inline std::vector<Run> simulate_all(const HybridSystem& sys, const std::vector<Vector>& inits, int n_dist,
                                     const SimConfig& cfg, std::vector<std::string>& notes) {
  const auto draws = static_cast<std::size_t>(std::max(1, n_dist));
  std::vector<std::optional<Run>> slots(inits.size() * draws);
  std::vector<std::string> errors(slots.size());
  parallel_for(slots.size(), cfg.workers, [&](std::size_t s) {
    const std::size_t i = s / draws, k = s % draws;
    SimConfig c = cfg;
    c.disturbance.seed = mix_seed(cfg.disturbance.seed + i, k);
    try {
      slots[s] = Run{i, solve(sys, inits[i], c)};
    } catch (const Error& e) {
      errors[s] = e.what();
    }
  });
  std::vector<Run> runs;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    if (slots[s]) {
      runs.push_back(std::move(*slots[s]));
    } else {
      notes.push_back("initial point " + std::to_string(s / draws) + " skipped: " + errors[s]);
    }
  }
  return runs;
}

inline Witness witness_at(int arc, int j, double t, const Vector& x) { return Witness{arc, j, t, x}; }

}  // namespace detail

/// Every sampled arc from K must stay in K + event_tol B.
inline CheckReport check_forward_invariance(const HybridSystem& sys, const SetRegion& K, int n_init,
                                            const SimConfig& cfg) {
  CheckReport rep;
  rep.condition = "forward_invariance";
  std::vector<Vector> inits;
  for (auto& p : sample_set(K, sys.bounds, static_cast<std::size_t>(std::max(n_init, 1)), cfg.seed)) {
    if (detail::has_solution(sys, p, cfg.event_tol)) inits.push_back(std::move(p));
  }
  const auto runs = detail::simulate_all(sys, inits, 1, cfg, rep.notes);
  for (std::size_t a = 0; a < runs.size(); ++a) {
    const auto& arc = runs[a].rep.arc;
    bool escaped = false;
    arc.for_each_sample([&](int j, double t, const Vector& x) {
      ++rep.stats.samples;
      if (escaped || contains(K, x, cfg.event_tol)) return;
      escaped = true;
      rep.record({"escape", detail::outside_margin(K, x), detail::witness_at(static_cast<int>(a), j, t, x),
                  inits[runs[a].origin]});
    });
  }
  if (runs.empty()) {
    rep.verdict = Verdict::Inconclusive;
    rep.notes.emplace_back("no initial point of K admits a solution");
  }
  return rep;
}

/// Reach-avoid-stay: avoid U everywhere, settle into I by the deadline and stay.
inline CheckReport check_ras(const HybridSystem& sys, const RASSpec& spec, int n_init, int n_dist,
                             const SimConfig& cfg) {
  CheckReport rep;
  rep.condition = "reach_avoid_stay";
  if (auto bb = bounding_box(spec.target)) {
    const AxisBox box = clip(*bb, sys.bounds);
    if (!is_empty(box) && box.bounded()) {
      for (const auto& p : grid_points(box, std::vector<int>(box.dim(), 7))) {
        if (contains(spec.target, p, 0.0) && contains(spec.unsafe, p, 0.0)) {
          rep.notes.emplace_back("warning: sampled point of the target lies in the unsafe set");
          break;
        }
      }
    }
  }
  const auto inits = detail::initial_points(spec.x0, sys, static_cast<std::size_t>(std::max(n_init, 1)), cfg.seed);
  const auto runs = detail::simulate_all(sys, inits, n_dist, cfg, rep.notes);
  double settle = 0.0;
  for (std::size_t a = 0; a < runs.size(); ++a) {
    const auto& arc = runs[a].rep.arc;
    const int ai = static_cast<int>(a);
    bool unsafe_seen = false;
    std::optional<double> last_outside;  // total time of the last sample outside I
    std::optional<double> next_after;    // total time of the sample following it
    bool pending_next = false;
    Witness outside_w;
    arc.for_each_sample([&](int j, double t, const Vector& x) {
      ++rep.stats.samples;
      const double tt = t + j;
      if (!unsafe_seen && contains(spec.unsafe, x, 0.0)) {
        unsafe_seen = true;
        rep.record({"unsafe", detail::depth(spec.unsafe, x), detail::witness_at(ai, j, t, x), inits[runs[a].origin]});
      }
      if (pending_next) {
        next_after = tt;
        pending_next = false;
      }
      if (!contains(spec.target, x, cfg.event_tol)) {
        last_outside = tt;
        pending_next = true;
        next_after.reset();
        outside_w = detail::witness_at(ai, j, t, x);
      }
    });
    if (pending_next) {
      rep.record({"reach_stay", detail::outside_margin(spec.target, outside_w.x), outside_w, inits[runs[a].origin]});
      continue;
    }
    const double t_arc = last_outside ? *next_after : 0.0;
    settle = std::max(settle, t_arc);
    if (t_arc > spec.settle_deadline) {
      rep.record({"deadline", t_arc - spec.settle_deadline, outside_w, inits[runs[a].origin]});
    }
  }
  rep.stats.settle_time = settle;
  rep.stats.values["arcs"] = static_cast<double>(runs.size());
  if (runs.empty()) {
    rep.verdict = Verdict::Inconclusive;
    rep.notes.emplace_back("no initial point admits a solution");
  }
  return rep;
}

/// Empirical UpAS plus safety. Stability: for each eps, bisect the initial
/// offset delta_eps; attraction: settle times of arcs from X0 into A + eps B.
inline CheckReport check_stability_safety(const HybridSystem& sys, const StabSafeSpec& spec, int n_init,
                                          const SimConfig& cfg) {
  if (!supports_distance(spec.attractor)) {
    throw Error(ErrorCode::UnsupportedDistance, "attractor needs a distance");
  }
  CheckReport rep;
  rep.condition = "stability_safety";
  rep.notes.emplace_back(
      "uniform attractivity is certified only for the realized maximum settle time over the sampled arcs");
  const auto n = static_cast<std::size_t>(std::max(n_init, 1));

  auto max_excursion = [&](double offset, Counterexample* worst) {
    std::vector<Vector> inits;
    for (auto& p : sample_set(inflate(spec.attractor, offset), sys.bounds, n, cfg.seed)) {
      if (detail::has_solution(sys, p, cfg.event_tol)) inits.push_back(std::move(p));
    }
    std::vector<std::string> ignored;
    const auto runs = detail::simulate_all(sys, inits, 1, cfg, ignored);
    double m = 0.0;
    for (std::size_t a = 0; a < runs.size(); ++a) {
      runs[a].rep.arc.for_each_sample([&](int j, double t, const Vector& x) {
        const double d = dist_to_set(x, spec.attractor);
        if (d > m) {
          m = d;
          if (worst) *worst = {"stability", d, detail::witness_at(static_cast<int>(a), j, t, x), inits[runs[a].origin]};
        }
      });
    }
    return m;
  };

  double largest_offset = 0.0;
  for (double eps : spec.eps_levels) {
    ConditionResult cr{"stability@" + std::to_string(eps)};
    double lo = 0.0, hi = eps;
    if (max_excursion(hi, nullptr) < eps) {
      lo = hi;
    } else {
      for (int it = 0; it < spec.bisection_steps; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (max_excursion(mid, nullptr) < eps) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
    }
    cr.values["delta_eps"] = lo;
    largest_offset = std::max(largest_offset, lo);
    if (lo <= 0.0) {
      Counterexample c;
      max_excursion(hi, &c);
      c.margin -= eps;
      cr.verdict = Verdict::Fail;
      cr.worst_margin = c.margin;
      cr.witness = c.witness;
      rep.record(std::move(c));
    }
    rep.conditions.push_back(std::move(cr));
  }
  rep.stats.values["rho"] = largest_offset;

  const auto inits = detail::initial_points(spec.x0, sys, n, cfg.seed);
  const auto runs = detail::simulate_all(sys, inits, 1, cfg, rep.notes);
  double settle = 0.0;
  for (double eps : spec.eps_levels) {
    ConditionResult cr{"attractivity@" + std::to_string(eps)};
    for (std::size_t a = 0; a < runs.size(); ++a) {
      // Hybrid time of the latest entry into the eps-neighbourhood; negative while outside.
      double since = -1.0;
      Witness w;
      runs[a].rep.arc.for_each_sample([&](int j, double t, const Vector& x) {
        ++cr.samples;
        if (dist_to_set(x, spec.attractor) < eps) {
          if (since < 0.0) since = t + j;
        } else {
          since = -1.0;
          w = detail::witness_at(static_cast<int>(a), j, t, x);
        }
      });
      if (since < 0.0) {
        const double m = dist_to_set(w.x, spec.attractor) - eps;
        cr.verdict = Verdict::Fail;
        cr.worst_margin = std::max(cr.worst_margin, m);
        cr.witness = w;
        rep.record({"attractivity", m, w, inits[runs[a].origin]});
      } else {
        settle = std::max(settle, since);
        cr.values["settle_time"] = std::max(cr.values["settle_time"], since);
      }
    }
    rep.conditions.push_back(std::move(cr));
  }
  rep.stats.settle_time = settle;

  ConditionResult safety{"safety"};
  for (std::size_t a = 0; a < runs.size(); ++a) {
    bool seen = false;
    runs[a].rep.arc.for_each_sample([&](int j, double t, const Vector& x) {
      ++safety.samples;
      ++rep.stats.samples;
      if (seen || !contains(spec.unsafe, x, 0.0)) return;
      seen = true;
      safety.verdict = Verdict::Fail;
      safety.witness = detail::witness_at(static_cast<int>(a), j, t, x);
      rep.record({"unsafe", detail::depth(spec.unsafe, x), *safety.witness, inits[runs[a].origin]});
    });
  }
  rep.conditions.push_back(std::move(safety));
  if (runs.empty()) {
    rep.verdict = Verdict::Inconclusive;
    rep.notes.emplace_back("no initial point admits a solution");
  }
  return rep;
}

/// Grid points of I whose simulated arcs all remain in I + event_tol B.
/// counts gives the grid resolution per axis of I's bounding box clipped to
/// the system bounds; an axis with count 1 is sampled at its midpoint.
inline InvariantCore estimate_invariant_core(const HybridSystem& sys, const SetRegion& I,
                                             const std::vector<int>& counts, int n_dist, const SimConfig& cfg) {
  const auto bb = bounding_box(I);
  if (!bb) throw Error(ErrorCode::InvalidArgument, "invariant-core target needs a bounding box");
  const AxisBox box = clip(*bb, sys.bounds);
  InvariantCore core;
  if (is_empty(box)) {
    core.empty = true;
    core.verdict = Verdict::Inconclusive;
    return core;
  }
  std::vector<Vector> candidates;
  for (auto& p : grid_points(box, counts)) {
    if (!contains(I, p, 0.0)) continue;
    ++core.grid_points_in_set;
    if (detail::has_solution(sys, p, cfg.event_tol)) {
      candidates.push_back(std::move(p));
    } else {
      ++core.no_solution_points;
      core.points.push_back(std::move(p));
    }
  }
  const auto draws = static_cast<std::size_t>(std::max(1, n_dist));
  std::vector<char> keep(candidates.size(), 1);
  detail::parallel_for(candidates.size(), cfg.workers, [&](std::size_t i) {
    for (std::size_t k = 0; k < draws && keep[i]; ++k) {
      SimConfig c = cfg;
      c.disturbance.seed = mix_seed(cfg.disturbance.seed + i, k);
      try {
        const auto rep = solve(sys, candidates[i], c);
        rep.arc.for_each_sample([&](int, double, const Vector& x) {
          if (keep[i] && !contains(I, x, cfg.event_tol)) keep[i] = 0;
        });
      } catch (const Error&) {
        keep[i] = 0;
      }
    }
  });
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (keep[i]) core.points.push_back(std::move(candidates[i]));
  }
  core.empty = core.points.empty();
  if (core.empty || core.no_solution_points == core.points.size()) core.verdict = Verdict::Inconclusive;
  return core;
}

inline InvariantCore estimate_invariant_core(const HybridSystem& sys, const SetRegion& I, int grid_n, int n_dist,
                                             const SimConfig& cfg) {
  return estimate_invariant_core(sys, I, std::vector<int>(static_cast<std::size_t>(sys.dim), grid_n), n_dist, cfg);
}

}  // namespace hylb
