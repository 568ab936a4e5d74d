#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hylb/geometry.hpp"

namespace hylb {

struct HybridTime {
  double t = 0.0;
  int j = 0;
};

inline double total_time(HybridTime ht) { return ht.t + ht.j; }

/// Partial order of hybrid time: both coordinates must not decrease.
inline bool precedes(HybridTime a, HybridTime b) { return a.t <= b.t && a.j <= b.j; }

struct HybridTimeDomain {
  std::vector<std::pair<double, double>> intervals;  // [t_j, t_{j+1}] per jump index
};

enum class Termination { HorizonReached, LeftFlowAndJumpSets, EscapedBounds, ZenoAccumulation };

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::HorizonReached: return "HorizonReached";
    case Termination::LeftFlowAndJumpSets: return "LeftFlowAndJumpSets";
    case Termination::EscapedBounds: return "EscapedBounds";
    case Termination::ZenoAccumulation: return "ZenoAccumulation";
  }
  return "Unknown";
}

inline Termination termination_from_string(std::string_view s) {
  for (auto t : {Termination::HorizonReached, Termination::LeftFlowAndJumpSets,
                 Termination::EscapedBounds, Termination::ZenoAccumulation}) {
    if (to_string(t) == s) return t;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown termination '" + std::string(s) + "'");
}

/// Samples of one flow interval I^j.
struct Phase {
  std::vector<double> t;
  std::vector<Vector> x;

  std::size_t size() const { return t.size(); }
};

/// Sampled solution on a hybrid time domain.
struct HybridArc {
  std::vector<Phase> phases;
  Termination termination = Termination::HorizonReached;
  /// Jump indices j whose transition into phase j was a Zeno snap rather than
  /// an application of G.
  std::set<int> snapped_jumps;

  int jumps() const { return static_cast<int>(phases.size()) - 1; }
  int dim() const { return phases.empty() || phases[0].x.empty() ? 0 : static_cast<int>(phases[0].x[0].size()); }

  HybridTimeDomain domain() const {
    HybridTimeDomain d;
    for (const auto& p : phases) d.intervals.emplace_back(p.t.front(), p.t.back());
    return d;
  }

  const Vector& initial() const { return phases.front().x.front(); }
  const Vector& final_state() const { return phases.back().x.back(); }
  HybridTime final_time() const { return {phases.back().t.back(), jumps()}; }

  std::size_t sample_count() const {
    std::size_t n = 0;
    for (const auto& p : phases) n += p.size();
    return n;
  }

  /// Calls fn(j, t, x) for every stored sample in order.
  template <class Fn>
  void for_each_sample(Fn&& fn) const {
    for (std::size_t j = 0; j < phases.size(); ++j) {
      for (std::size_t k = 0; k < phases[j].size(); ++k) fn(static_cast<int>(j), phases[j].t[k], phases[j].x[k]);
    }
  }
};

/// Structural problems of an arc; empty when valid.
inline std::vector<std::string> structural_issues(const HybridArc& arc) {
  std::vector<std::string> issues;
  if (arc.phases.empty()) {
    issues.emplace_back("arc has no phases");
    return issues;
  }
  const int n = arc.dim();
  if (n == 0) issues.emplace_back("arc has an empty first phase or zero-dimensional state");
  if (arc.phases.front().t.empty() || arc.phases.front().t.front() != 0.0) {
    issues.emplace_back("domain does not start at t = 0");
  }
  for (std::size_t j = 0; j < arc.phases.size(); ++j) {
    const auto& p = arc.phases[j];
    const auto tag = "phase " + std::to_string(j) + ": ";
    if (p.t.empty()) {
      issues.push_back(tag + "empty");
      continue;
    }
    if (p.t.size() != p.x.size()) issues.push_back(tag + "time/state count mismatch");
    for (std::size_t k = 0; k < p.x.size(); ++k) {
      if (p.x[k].size() != n) issues.push_back(tag + "dimension changes at sample " + std::to_string(k));
      if (!p.x[k].allFinite()) issues.push_back(tag + "non-finite state at sample " + std::to_string(k));
      if (k > 0 && !(p.t[k] > p.t[k - 1])) issues.push_back(tag + "times not strictly increasing");
    }
    if (j > 0 && !arc.phases[j - 1].t.empty() && p.t.front() != arc.phases[j - 1].t.back()) {
      issues.push_back(tag + "does not start where the previous phase ended");
    }
  }
  return issues;
}

inline bool is_valid(const HybridArc& arc) { return structural_issues(arc).empty(); }

/// Linear interpolation inside phase j.
inline Vector arc_eval(const HybridArc& arc, double t, int j) {
  if (j < 0 || j >= static_cast<int>(arc.phases.size())) {
    throw Error(ErrorCode::OutOfDomain, "jump index " + std::to_string(j) + " outside the domain");
  }
  const auto& p = arc.phases[j];
  if (t < p.t.front() || t > p.t.back()) {
    throw Error(ErrorCode::OutOfDomain, "time " + std::to_string(t) + " outside interval of phase " + std::to_string(j));
  }
  const auto it = std::lower_bound(p.t.begin(), p.t.end(), t);
  const auto k = static_cast<std::size_t>(it - p.t.begin());
  if (p.t[k] == t) return p.x[k];
  const double w = (t - p.t[k - 1]) / (p.t[k] - p.t[k - 1]);
  return (1.0 - w) * p.x[k - 1] + w * p.x[k];
}

using FlowMap = std::function<Vector(const Vector&)>;
using JumpMap = std::function<std::vector<Vector>(const Vector&)>;

/// H = (C, f, D, G) with perturbation level delta. flow_set and jump_set are
/// the effective (inflated) sets; the nominal ones are kept for re-perturbing.
struct HybridSystem {
  int dim = 0;
  SetRegion flow_set;
  FlowMap flow;
  SetRegion jump_set;
  JumpMap jump;
  double delta = 0.0;
  AxisBox bounds;
  SetRegion nominal_flow_set;
  SetRegion nominal_jump_set;
};

namespace detail {

inline void require_dim(const SetRegion& s, int dim, const char* what) {
  if (auto b = bounding_box(s); b && b->dim() != dim) {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + " has dimension " + std::to_string(b->dim()) +
                                                  ", expected " + std::to_string(dim));
  }
}

/// Up to a few thousand grid probes of a bounded box.
inline std::vector<Vector> probe_cloud(const AxisBox& box) {
  const int n = box.dim();
  int per_axis = 9;
  while (per_axis > 2 && std::pow(per_axis, n) > 4096) --per_axis;
  AxisBox finite = box;
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(finite.lo[i])) finite.lo[i] = std::isfinite(finite.hi[i]) ? finite.hi[i] - 1.0 : -1.0;
    if (!std::isfinite(finite.hi[i])) finite.hi[i] = finite.lo[i] + 2.0;
  }
  return grid_points(finite, std::vector<int>(n, per_axis));
}

}  // namespace detail

inline HybridSystem make_system(int dim, SetRegion C, FlowMap F, SetRegion D, JumpMap G, AxisBox bounds) {
  if (dim < 1) throw Error(ErrorCode::DimensionMismatch, "dim must be >= 1");
  if (!F) throw Error(ErrorCode::InvalidArgument, "flow map missing");
  if (!G) throw Error(ErrorCode::InvalidArgument, "jump map missing");
  if (bounds.dim() != dim) throw Error(ErrorCode::DimensionMismatch, "bounds dimension differs from dim");
  detail::require_dim(C, dim, "flow set");
  detail::require_dim(D, dim, "jump set");

  // Probe the maps where the sets are populated.
  const auto probes = detail::probe_cloud(bounds);
  bool flow_probed = false;
  int jump_probed = 0;
  for (const auto& p : probes) {
    if (!flow_probed && contains(C, p)) {
      if (F(p).size() != dim) throw Error(ErrorCode::DimensionMismatch, "flow map output dimension differs from dim");
      flow_probed = true;
    }
    if (jump_probed < 8 && contains(D, p)) {
      const auto cands = G(p);
      if (cands.empty()) throw Error(ErrorCode::InvalidArgument, "jump map returned no candidate on D");
      for (const auto& g : cands) {
        if (g.size() != dim) throw Error(ErrorCode::DimensionMismatch, "jump map output dimension differs from dim");
      }
      ++jump_probed;
    }
    if (flow_probed && jump_probed >= 8) break;
  }
  HybridSystem sys{dim, C, std::move(F), D, std::move(G), 0.0, std::move(bounds), C, D};
  return sys;
}

/// H_delta: C and D inflated by delta; map inflation happens via the disturbance.
inline HybridSystem perturb(const HybridSystem& sys, double delta) {
  if (!(delta >= 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be >= 0");
  HybridSystem out = sys;
  out.delta = delta;
  out.flow_set = inflate(sys.nominal_flow_set, delta);
  out.jump_set = inflate(sys.nominal_jump_set, delta);
  return out;
}

enum class DisturbanceMode { None, RandomUniformBall, Fixed };

struct Disturbance {
  DisturbanceMode mode = DisturbanceMode::None;
  std::uint64_t seed = 0;
  std::function<Vector(HybridTime)> signal;  // Fixed mode only

  static Disturbance none() { return {}; }
  static Disturbance random_ball(std::uint64_t seed) { return {DisturbanceMode::RandomUniformBall, seed, {}}; }
  static Disturbance fixed(std::function<Vector(HybridTime)> s) { return {DisturbanceMode::Fixed, 0, std::move(s)}; }
};

/// SplitMix64 finalizer, used to derive independent per-sample seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// One realization of a Disturbance; owns its generator.
class DisturbanceSource {
 public:
  DisturbanceSource(const Disturbance& d, int dim, double delta)
      : spec_(d), dim_(dim), delta_(delta), rng_(mix_seed(d.seed)) {}

  Vector draw(HybridTime at) {
    if (delta_ == 0.0) return Vector::Zero(dim_);
    switch (spec_.mode) {
      case DisturbanceMode::None: return Vector::Zero(dim_);
      case DisturbanceMode::Fixed: {
        Vector d = spec_.signal(at);
        const double n = d.norm();
        if (n > delta_) d *= delta_ / n;
        return d;
      }
      case DisturbanceMode::RandomUniformBall: {
        std::normal_distribution<double> normal;
        std::uniform_real_distribution<double> unif;
        Vector dir(dim_);
        double n = 0.0;
        do {
          for (int i = 0; i < dim_; ++i) dir[i] = normal(rng_);
          n = dir.norm();
        } while (n == 0.0);
        const double radius = delta_ * std::pow(unif(rng_), 1.0 / dim_);
        return dir * (radius / n);
      }
    }
    return Vector::Zero(dim_);
  }

 private:
  Disturbance spec_;
  int dim_;
  double delta_;
  std::mt19937_64 rng_;
};

}  // namespace hylb
