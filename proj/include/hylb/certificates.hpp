#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hylb/monitor.hpp"
#include "hylb/simulator.hpp"

namespace hylb {

inline Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  Vector p = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    p[i] = xi + h;
    const double up = f(p);
    p[i] = xi - h;
    const double down = f(p);
    p[i] = xi;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Scalar function with an optional analytic gradient.
struct ScalarField {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> grad;
  double fd_step = 1e-5;

  double operator()(const Vector& x) const { return value(x); }
  Vector gradient(const Vector& x) const { return grad ? grad(x) : central_difference(value, x, fd_step); }
  bool has_analytic_gradient() const { return static_cast<bool>(grad); }
};

/// Max over probes and axes of |analytic - central difference| / max(1, |analytic|).
inline double grad_check(const ScalarField& f, const std::vector<Vector>& probes) {
  if (!f.grad) throw Error(ErrorCode::InvalidArgument, "grad_check needs an analytic gradient");
  double worst = 0.0;
  for (const auto& p : probes) {
    const Vector a = f.grad(p);
    const Vector fd = central_difference(f.value, p, f.fd_step);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      worst = std::max(worst, std::abs(a[i] - fd[i]) / std::max(1.0, std::abs(a[i])));
    }
  }
  return worst;
}

struct CertificatePair {
  ScalarField V;
  std::optional<ScalarField> B;
  std::function<double(double)> rho;  // margin as a function of |x|_A
  std::optional<ProperIndicator> omega;
  SetRegion region;  // open certificate domain O
};

struct GridSpec {
  std::vector<int> counts;
  std::optional<AxisBox> box;
  int refinement_depth = 0;
  int refine_top = 8;
  double exclude_radius = 0.0;  // decrease conditions skip A + r B
  double tol = 1e-7;
};

namespace detail {

using MarginFn = std::function<double(const Vector&)>;

inline AxisBox sweep_box(const SetRegion& region, const HybridSystem& sys, const GridSpec& grid) {
  AxisBox box = grid.box ? clip(*grid.box, sys.bounds) : sys.bounds;
  if (auto bb = bounding_box(region)) box = clip(box, *bb);
  return box;
}

inline Vector grid_spacing(const AxisBox& box, const std::vector<int>& counts) {
  Vector s(box.dim());
  for (int i = 0; i < box.dim(); ++i) s[i] = counts[i] > 1 ? (box.hi[i] - box.lo[i]) / (counts[i] - 1) : 0.0;
  return s;
}

inline std::vector<Vector> region_grid(const SetRegion& region, const HybridSystem& sys, const GridSpec& grid,
                                       Vector* spacing = nullptr) {
  const AxisBox box = sweep_box(region, sys, grid);
  if (spacing) *spacing = Vector::Zero(box.dim());
  if (is_empty(box)) return {};
  if (!box.bounded()) throw Error(ErrorCode::InvalidArgument, "grid region is unbounded; supply a grid box");
  if (spacing) *spacing = grid_spacing(box, grid.counts);
  std::vector<Vector> out;
  for (auto& p : grid_points(box, grid.counts)) {
    if (contains(region, p, 0.0)) out.push_back(std::move(p));
  }
  return out;
}

/// Worst margin over the points, then local subdivision around the worst
/// ones. Added probes never remove earlier ones, so refinement only adds
/// violations.
inline ConditionResult sweep(const std::string& id, std::vector<Vector> points, const MarginFn& margin,
                             const SetRegion& region, Vector spacing, const GridSpec& grid) {
  ConditionResult cr;
  cr.id = id;
  std::vector<std::pair<double, std::size_t>> scored;
  auto evaluate = [&](const Vector& p) {
    const double m = std::max(margin(p), -1e300);
    ++cr.samples;
    if (!cr.witness || m > cr.worst_margin) {
      cr.worst_margin = m;
      cr.witness = Witness{-1, 0, 0.0, p};
    }
    return m;
  };
  for (std::size_t i = 0; i < points.size(); ++i) scored.emplace_back(evaluate(points[i]), i);

  for (int depth = 0; depth < grid.refinement_depth && !scored.empty(); ++depth) {
    spacing *= 0.5;
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    const std::size_t top = std::min<std::size_t>(scored.size(), static_cast<std::size_t>(grid.refine_top));
    std::vector<Vector> fresh;
    const int n = static_cast<int>(spacing.size());
    for (std::size_t k = 0; k < top; ++k) {
      const Vector& c = points[scored[k].second];
      const int combos = static_cast<int>(std::pow(3, n));
      for (int code = 0; code < combos; ++code) {
        Vector q = c;
        int rest = code;
        bool moved = false;
        for (int i = 0; i < n; ++i) {
          const int step = rest % 3 - 1;
          rest /= 3;
          q[i] += step * spacing[i];
          moved = moved || (step != 0 && spacing[i] != 0.0);
        }
        if (moved && contains(region, q, 0.0)) fresh.push_back(std::move(q));
      }
    }
    for (auto& q : fresh) {
      scored.emplace_back(evaluate(q), points.size());
      points.push_back(std::move(q));
    }
  }
  if (cr.samples == 0) cr.worst_margin = -kInf;
  cr.verdict = cr.worst_margin > grid.tol ? Verdict::Fail : Verdict::Pass;
  return cr;
}

/// d in {0, +-delta e_i, extra...}
inline std::vector<Vector> ball_directions(int dim, double delta, std::initializer_list<Vector> extra) {
  std::vector<Vector> ds{Vector::Zero(dim)};
  if (delta <= 0.0) return ds;
  for (int i = 0; i < dim; ++i) {
    Vector e = Vector::Zero(dim);
    e[i] = delta;
    ds.push_back(e);
    ds.push_back(-e);
  }
  for (const auto& v : extra) {
    const double n = v.norm();
    if (n > 0.0) ds.push_back(v * (delta / n));
  }
  return ds;
}

inline void absorb(CheckReport& rep, ConditionResult cr) {
  rep.stats.samples += cr.samples;
  if (cr.samples > 0) rep.stats.worst_margin = std::max(rep.stats.worst_margin, cr.worst_margin);
  if (cr.verdict == Verdict::Fail) {
    rep.verdict = Verdict::Fail;
    rep.counterexamples.push_back({cr.id, cr.worst_margin, *cr.witness, {}});
  }
  rep.conditions.push_back(std::move(cr));
}

/// Monotone envelopes of a (w, v) scatter: lower = suffix minimum, upper =
/// prefix maximum. Fails when a positive w carries a non-positive value or a
/// zero w carries a value above tol.
inline ConditionResult sandwich(const std::string& id, std::vector<std::pair<double, Witness>> pts,
                                const std::function<double(const Vector&)>& V, double tol) {
  ConditionResult cr;
  cr.id = id;
  std::vector<std::pair<double, double>> wv;
  bool violated = false;
  for (auto& [w, wit] : pts) {
    if (!std::isfinite(w)) continue;
    ++cr.samples;
    const double v = V(wit.x);
    // On A the value must vanish; off A it must be strictly positive.
    const bool bad = w <= kMembershipTol ? v > tol : v <= 0.0;
    const double m = w <= kMembershipTol ? v - tol : -v;
    if ((bad && !violated) || (bad == violated && m > cr.worst_margin)) {
      cr.worst_margin = m;
      cr.witness = wit;
    }
    violated = violated || bad;
    wv.emplace_back(w, v);
  }
  std::sort(wv.begin(), wv.end());
  std::vector<double> lower(wv.size()), upper(wv.size());
  double run = kInf;
  for (std::size_t i = wv.size(); i-- > 0;) lower[i] = run = std::min(run, wv[i].second);
  run = -kInf;
  for (std::size_t i = 0; i < wv.size(); ++i) upper[i] = run = std::max(run, wv[i].second);
  constexpr int kKnots = 8;
  for (int k = 0; k < kKnots && !wv.empty(); ++k) {
    const std::size_t i = (wv.size() - 1) * static_cast<std::size_t>(k + 1) / kKnots;
    cr.values["envelope.w" + std::to_string(k)] = wv[i].first;
    cr.values["envelope.lower" + std::to_string(k)] = lower[i];
    cr.values["envelope.upper" + std::to_string(k)] = upper[i];
  }
  if (cr.samples == 0) cr.worst_margin = -kInf;
  cr.verdict = violated ? Verdict::Fail : Verdict::Pass;
  return cr;
}

inline SetRegion restrict_to(const SetRegion& a, const SetRegion& o) { return SetRegion::intersect({a, o}); }

}  // namespace detail

/// Single-function conditions: flow decrease dV <= -V, jump V(g) <= V/e, and
/// the class-K sandwich against omega.
inline CheckReport check_single_V(const HybridSystem& sys, const CertificatePair& cert, const GridSpec& grid) {
  if (!cert.omega) throw Error(ErrorCode::MissingIndicator, "single-V check needs a proper indicator");
  const ScalarField& V = cert.V;
  const double delta = sys.delta;
  const int n = sys.dim;
  CheckReport rep;
  rep.condition = "single_v";

  const SetRegion flow_region = detail::restrict_to(sys.flow_set, cert.region);
  const SetRegion jump_region = detail::restrict_to(sys.jump_set, cert.region);
  Vector sp_flow, sp_jump;
  const auto flow_pts = detail::region_grid(flow_region, sys, grid, &sp_flow);
  const auto jump_pts = detail::region_grid(jump_region, sys, grid, &sp_jump);

  auto flow_margin = [&](const Vector& x) {
    const Vector g = V.gradient(x);
    const Vector f = sys.flow(x);
    const double v = V(x);
    double worst = -kInf;
    for (const auto& d : detail::ball_directions(n, delta, {g})) worst = std::max(worst, g.dot(f + d) + v);
    return worst;
  };
  auto jump_margin = [&](const Vector& x) {
    const double bound = V(x) / std::numbers::e;
    double worst = -kInf;
    for (const auto& g : sys.jump(x)) {
      for (const auto& d : detail::ball_directions(n, delta, {V.gradient(g)})) worst = std::max(worst, V(g + d) - bound);
    }
    return worst;
  };
  detail::absorb(rep, detail::sweep("flow", flow_pts, flow_margin, flow_region, sp_flow, grid));
  detail::absorb(rep, detail::sweep("jump", jump_pts, jump_margin, jump_region, sp_jump, grid));

  std::vector<std::pair<double, Witness>> scatter;
  auto add = [&](const Vector& x) {
    if (contains(cert.region, x, 0.0)) scatter.emplace_back((*cert.omega)(x), Witness{-1, 0, 0.0, x});
  };
  for (const auto& x : flow_pts) add(x);
  for (const auto& x : jump_pts) {
    add(x);
    for (const auto& g : sys.jump(x)) add(g);
  }
  detail::absorb(rep, detail::sandwich("sandwich", std::move(scatter), V.value, grid.tol));
  return rep;
}

/// Split conditions (i)-(iv) for a Lyapunov function V and barrier B.
inline CheckReport check_pair_VB(const HybridSystem& sys, const CertificatePair& cert, const StabSafeSpec& spec,
                                 const GridSpec& grid) {
  if (!cert.B) throw Error(ErrorCode::MissingBarrier, "pair check needs a barrier function");
  const ScalarField& V = cert.V;
  const ScalarField& B = *cert.B;
  const SetRegion& A = spec.attractor;
  const double delta = sys.delta;
  const int n = sys.dim;
  CheckReport rep;
  rep.condition = "pair_vb";

  const SetRegion flow_region = detail::restrict_to(sys.flow_set, cert.region);
  const SetRegion jump_region = detail::restrict_to(sys.jump_set, cert.region);
  Vector sp_flow, sp_jump;
  const auto flow_pts = detail::region_grid(flow_region, sys, grid, &sp_flow);
  const auto jump_pts = detail::region_grid(jump_region, sys, grid, &sp_jump);

  auto v_flow_rate = [&](const Vector& x) {
    const Vector g = V.gradient(x);
    const Vector f = sys.flow(x);
    double worst = -kInf;
    for (const auto& d : detail::ball_directions(n, delta, {g})) worst = std::max(worst, g.dot(f + d));
    return worst;
  };
  auto v_jump_step = [&](const Vector& x) {
    const double vx = V(x);
    double worst = -kInf;
    for (const auto& g : sys.jump(x)) {
      for (const auto& d : detail::ball_directions(n, delta, {V.gradient(g)})) worst = std::max(worst, V(g + d) - vx);
    }
    return worst;
  };

  // (i) sandwich on |x|_A.
  {
    std::vector<std::pair<double, Witness>> scatter;
    for (const auto* pts : {&flow_pts, &jump_pts}) {
      for (const auto& x : *pts) scatter.emplace_back(dist_to_set(x, A), Witness{-1, 0, 0.0, x});
    }
    detail::absorb(rep, detail::sandwich("i.sandwich", std::move(scatter), V.value, grid.tol));
  }

  // (i) decrease, either against the supplied rho or with a fitted c |x|_A.
  auto decrease = [&](const std::string& id, const std::vector<Vector>& pts, const std::function<double(const Vector&)>& s) {
    std::vector<Vector> kept;
    for (const auto& x : pts) {
      if (grid.exclude_radius <= 0.0 || dist_to_set(x, A) > grid.exclude_radius) kept.push_back(x);
    }
    if (cert.rho) {
      const SetRegion any = SetRegion::whole(n);
      auto cr = detail::sweep(id, kept, [&](const Vector& x) { return s(x) + cert.rho(dist_to_set(x, A)); }, any,
                              Vector::Zero(n), GridSpec{grid.counts, grid.box, 0, 0, 0.0, grid.tol});
      detail::absorb(rep, std::move(cr));
      return;
    }
    ConditionResult cr;
    cr.id = id;
    double c = kInf;
    for (const auto& x : kept) {
      ++cr.samples;
      const double r = dist_to_set(x, A);
      const double rate = s(x);
      const double m = r > kMembershipTol ? rate / r : (rate > grid.tol ? kInf : -kInf);
      if (m > cr.worst_margin || !cr.witness) {
        cr.worst_margin = std::max(cr.worst_margin, m);
        cr.witness = Witness{-1, 0, 0.0, x};
      }
      if (r > kMembershipTol) c = std::min(c, -rate / r);
    }
    cr.values["c"] = c;
    if (cr.samples == 0) cr.worst_margin = -kInf;
    cr.verdict = cr.samples > 0 && (c <= 0.0 || cr.worst_margin >= 0.0) ? Verdict::Fail : Verdict::Pass;
    cr.worst_margin = std::min(cr.worst_margin, 1e300);
    detail::absorb(rep, std::move(cr));
  };
  decrease("i.flow", flow_pts, v_flow_rate);
  decrease("i.jump", jump_pts, v_jump_step);

  // (ii) S = {B >= 0} inside O, and X0 inside S.
  {
    const AxisBox box = grid.box ? clip(*grid.box, sys.bounds) : sys.bounds;
    std::vector<Vector> probes;
    if (box.bounded() && !is_empty(box)) probes = grid_points(box, grid.counts);
    auto margin = [&](const Vector& x) { return B(x) >= 0.0 ? detail::outside_margin(cert.region, x) : -kInf; };
    auto cr = detail::sweep("ii.subset", std::move(probes), margin, SetRegion::whole(n), Vector::Zero(n),
                            GridSpec{grid.counts, grid.box, 0, 0, 0.0, grid.tol});
    detail::absorb(rep, std::move(cr));
    const auto x0 = detail::initial_points(spec.x0, sys, 256, 7);
    auto cx = detail::sweep("ii.initial", x0, [&](const Vector& x) { return -B(x); }, SetRegion::whole(n),
                            Vector::Zero(n), GridSpec{grid.counts, grid.box, 0, 0, 0.0, grid.tol});
    detail::absorb(rep, std::move(cx));
  }

  // (iii) B < 0 on U.
  {
    Vector sp;
    auto pts = detail::region_grid(spec.unsafe, sys, grid, &sp);
    detail::absorb(rep, detail::sweep("iii", std::move(pts), B.value, spec.unsafe, sp, grid));
  }

  // (iv) nonnegativity of B is preserved by flows and jumps.
  auto b_flow = [&](const Vector& x) {
    const Vector g = B.gradient(x);
    const Vector f = sys.flow(x);
    double worst = -kInf;
    for (const auto& d : detail::ball_directions(n, delta, {Vector(-g)})) worst = std::max(worst, -g.dot(f + d));
    return worst;
  };
  auto b_jump = [&](const Vector& x) {
    const double bx = B(x);
    double worst = -kInf;
    for (const auto& g : sys.jump(x)) {
      for (const auto& d : detail::ball_directions(n, delta, {Vector(-B.gradient(g))})) {
        worst = std::max(worst, bx - B(g + d));
      }
    }
    return worst;
  };
  detail::absorb(rep, detail::sweep("iv.flow", flow_pts, b_flow, flow_region, sp_flow, grid));
  detail::absorb(rep, detail::sweep("iv.jump", jump_pts, b_jump, jump_region, sp_jump, grid));

  // V-decrease violations outside O are flagged, not judged.
  {
    const SetRegion outside = SetRegion::intersect({sys.flow_set, SetRegion::complement(cert.region)});
    GridSpec g = grid;
    std::size_t bad = 0;
    if (g.box || sys.bounds.bounded()) {
      for (const auto& x : detail::region_grid(outside, sys, g)) {
        if (dist_to_set(x, A) > std::max(g.exclude_radius, kMembershipTol) && v_flow_rate(x) >= 0.0) ++bad;
      }
    }
    if (bad > 0) rep.notes.push_back(std::to_string(bad) + " sampled flow points outside O show no V decrease");
  }
  return rep;
}

struct FalsifyResult {
  Vector x;
  double margin = 0.0;
  std::size_t evaluations = 0;
};

/// Margin function of a named condition; -inf outside the condition's domain.
inline std::function<double(const Vector&)> condition_margin(const HybridSystem& sys, const CertificatePair& cert,
                                                             const std::string& id,
                                                             const std::optional<SetRegion>& attractor = std::nullopt,
                                                             const std::optional<SetRegion>& unsafe = std::nullopt) {
  const int n = sys.dim;
  const double delta = sys.delta;
  auto in = [&sys, &cert](const SetRegion& s, const Vector& x) {
    return contains(s, x, 0.0) && contains(cert.region, x, 0.0);
  };
  auto rho_of = [&cert, attractor](const Vector& x) {
    if (!cert.rho || !attractor) return 0.0;
    return cert.rho(dist_to_set(x, *attractor));
  };
  const auto need_b = [&] {
    if (!cert.B) throw Error(ErrorCode::MissingBarrier, "condition " + id + " needs a barrier function");
  };
  if (id == "single.flow") {
    return [=, &sys, &cert](const Vector& x) {
      if (!in(sys.flow_set, x)) return -kInf;
      const Vector g = cert.V.gradient(x);
      const Vector f = sys.flow(x);
      double w = -kInf;
      for (const auto& d : detail::ball_directions(n, delta, {g})) w = std::max(w, g.dot(f + d) + cert.V(x));
      return w;
    };
  }
  if (id == "single.jump" || id == "pair.i.jump") {
    const bool single = id == "single.jump";
    return [=, &sys, &cert](const Vector& x) {
      if (!in(sys.jump_set, x)) return -kInf;
      const double vx = cert.V(x);
      double w = -kInf;
      for (const auto& g : sys.jump(x)) {
        for (const auto& d : detail::ball_directions(n, delta, {cert.V.gradient(g)})) {
          w = std::max(w, single ? cert.V(g + d) - vx / std::numbers::e : cert.V(g + d) - vx + rho_of(x));
        }
      }
      return w;
    };
  }
  if (id == "pair.i.flow") {
    return [=, &sys, &cert](const Vector& x) {
      if (!in(sys.flow_set, x)) return -kInf;
      const Vector g = cert.V.gradient(x);
      const Vector f = sys.flow(x);
      double w = -kInf;
      for (const auto& d : detail::ball_directions(n, delta, {g})) w = std::max(w, g.dot(f + d) + rho_of(x));
      return w;
    };
  }
  if (id == "pair.ii") {
    need_b();
    return [&cert](const Vector& x) { return (*cert.B)(x) >= 0.0 ? signed_distance(x, cert.region) : -kInf; };
  }
  if (id == "pair.iii") {
    need_b();
    if (!unsafe) throw Error(ErrorCode::InvalidArgument, "condition pair.iii needs the unsafe set");
    return [&cert, unsafe](const Vector& x) { return contains(*unsafe, x, 0.0) ? (*cert.B)(x) : -kInf; };
  }
  if (id == "pair.iv.flow") {
    need_b();
    return [=, &sys, &cert](const Vector& x) {
      if (!in(sys.flow_set, x)) return -kInf;
      const Vector g = cert.B->gradient(x);
      const Vector f = sys.flow(x);
      double w = -kInf;
      for (const auto& d : detail::ball_directions(n, delta, {Vector(-g)})) w = std::max(w, -g.dot(f + d));
      return w;
    };
  }
  if (id == "pair.iv.jump") {
    need_b();
    return [=, &sys, &cert](const Vector& x) {
      if (!in(sys.jump_set, x)) return -kInf;
      const double bx = (*cert.B)(x);
      double w = -kInf;
      for (const auto& g : sys.jump(x)) {
        for (const auto& d : detail::ball_directions(n, delta, {Vector(-cert.B->gradient(g))})) {
          w = std::max(w, bx - (*cert.B)(g + d));
        }
      }
      return w;
    };
  }
  throw Error(ErrorCode::InvalidArgument, "unknown condition id '" + id + "'");
}

/// Latin-hypercube probes, a coarse grid, then coordinate descent from the
/// worst points. Returns the most violating point when its margin exceeds tol.
inline std::optional<FalsifyResult> falsify(const HybridSystem& sys, const CertificatePair& cert,
                                            const std::string& condition_id, const SetRegion& region, int budget,
                                            std::uint64_t seed, double tol = 1e-7,
                                            const std::optional<SetRegion>& attractor = std::nullopt,
                                            const std::optional<SetRegion>& unsafe = std::nullopt) {
  if (budget < 1) throw Error(ErrorCode::InvalidArgument, "budget must be >= 1");
  const auto margin = condition_margin(sys, cert, condition_id, attractor, unsafe);
  auto bb = bounding_box(region);
  const AxisBox box = bb ? clip(*bb, sys.bounds) : sys.bounds;
  if (is_empty(box) || !box.bounded()) throw Error(ErrorCode::InvalidArgument, "falsify region needs a bounded box");
  const int n = box.dim();
  std::mt19937_64 rng(mix_seed(seed, 4242));
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::size_t used = 0;
  std::vector<std::pair<double, Vector>> seen;
  auto probe = [&](const Vector& x) {
    ++used;
    const double m = contains(region, x, 0.0) ? margin(x) : -kInf;
    seen.emplace_back(m, x);
    return m;
  };

  const auto total = static_cast<std::size_t>(budget);
  const std::size_t n_lhs = std::max<std::size_t>(1, total * 4 / 10);
  std::vector<std::vector<std::size_t>> perms(n);
  for (auto& p : perms) {
    p.resize(n_lhs);
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng);
  }
  for (std::size_t k = 0; k < n_lhs && used < total; ++k) {
    Vector x(n);
    for (int i = 0; i < n; ++i) {
      x[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * ((static_cast<double>(perms[i][k]) + unif(rng)) / n_lhs);
    }
    probe(x);
  }

  const std::size_t n_grid = total * 3 / 10;
  const int per_axis = static_cast<int>(std::floor(std::pow(static_cast<double>(n_grid), 1.0 / n)));
  if (per_axis >= 2) {
    for (const auto& x : grid_points(box, std::vector<int>(n, per_axis))) {
      if (used >= total) break;
      probe(x);
    }
  }

  std::sort(seen.begin(), seen.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::pair<double, Vector>> starts(seen.begin(), seen.begin() + std::min<std::size_t>(3, seen.size()));
  for (auto& [m, x] : starts) {
    if (!std::isfinite(m)) continue;
    Vector step = 0.1 * (box.hi - box.lo);
    while (used < total && step.maxCoeff() > 1e-12) {
      bool improved = false;
      for (int i = 0; i < n && used < total; ++i) {
        for (double sgn : {1.0, -1.0}) {
          if (used >= total) break;
          Vector y = x;
          y[i] = std::clamp(y[i] + sgn * step[i], box.lo[i], box.hi[i]);
          const double my = probe(y);
          if (my > m) {
            m = my;
            x = y;
            improved = true;
          }
        }
      }
      if (!improved) step *= 0.5;
    }
  }

  const auto best = std::max_element(seen.begin(), seen.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  if (best == seen.end() || !(best->first > tol)) return std::nullopt;
  return FalsifyResult{best->second, best->first, used};
}

struct DecrementSeries {
  std::vector<std::pair<double, double>> series;  // (t + j, V)
  bool bound_ok = true;
};

/// Checks V(phi(t,j)) <= V(phi(0,0)) exp(-(t+j)/3) + tol at every sample.
inline DecrementSeries decrement_along_arc(const CertificatePair& cert, const HybridArc& arc, double tol = 1e-9) {
  DecrementSeries out;
  const double v0 = cert.V(arc.initial());
  arc.for_each_sample([&](int j, double t, const Vector& x) {
    const double tt = t + j;
    const double v = cert.V(x);
    out.series.emplace_back(tt, v);
    if (v > v0 * std::exp(-tt / 3.0) + tol) out.bound_ok = false;
  });
  return out;
}

}  // namespace hylb
