#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "hylb/errors.hpp"

namespace hylb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kMembershipTol = 1e-9;

class SetRegion;

/// Closed Euclidean ball.
struct Ball {
  Vector center;
  double radius = 0.0;
};

/// Axis-aligned box; infinite bounds are allowed.
struct AxisBox {
  Vector lo;
  Vector hi;

  int dim() const { return static_cast<int>(lo.size()); }
  bool bounded() const { return lo.allFinite() && hi.allFinite(); }
};

/// normal . x <= offset
struct HalfSpace {
  Vector normal;
  double offset = 0.0;
};

struct HalfSpaceIntersection {
  std::vector<HalfSpace> faces;
};

/// Predicate-defined set. The bounding box is mandatory so that samplers have
/// a compact probe region.
struct Implicit {
  std::function<bool(const Vector&)> member;
  std::function<double(const Vector&)> signed_distance;  // optional
  AxisBox bbox;
};

struct Inflated {
  std::shared_ptr<const SetRegion> base;
  double r = 0.0;
};

struct Union {
  std::vector<SetRegion> parts;
};

struct Intersection {
  std::vector<SetRegion> parts;
};

struct Complement {
  std::shared_ptr<const SetRegion> base;
};

/// Immutable set value. Copies share the underlying tree.
class SetRegion {
 public:
  using Variant = std::variant<Ball, AxisBox, HalfSpaceIntersection, Implicit, Inflated, Union,
                               Intersection, Complement>;

  SetRegion() : node_(std::make_shared<const Variant>(Union{})) {}

  static SetRegion ball(Vector center, double radius) {
    if (!(radius >= 0.0)) throw Error(ErrorCode::InvalidArgument, "ball radius must be >= 0");
    if (!center.allFinite()) throw Error(ErrorCode::InvalidArgument, "ball center must be finite");
    return SetRegion(Ball{std::move(center), radius});
  }

  static SetRegion box(Vector lo, Vector hi) {
    if (lo.size() != hi.size()) throw Error(ErrorCode::DimensionMismatch, "box bounds differ in size");
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
      if (std::isnan(lo[i]) || std::isnan(hi[i]) || lo[i] > hi[i]) {
        throw Error(ErrorCode::InvalidArgument, "box requires lo <= hi componentwise");
      }
    }
    return SetRegion(AxisBox{std::move(lo), std::move(hi)});
  }

  static SetRegion box(const AxisBox& b) { return box(b.lo, b.hi); }

  static SetRegion whole(int dim) {
    return box(Vector::Constant(dim, -kInf), Vector::Constant(dim, kInf));
  }

  static SetRegion half_spaces(std::vector<HalfSpace> faces) {
    for (const auto& f : faces) {
      if (f.normal.norm() == 0.0) throw Error(ErrorCode::InvalidArgument, "half-space normal is zero");
    }
    return SetRegion(HalfSpaceIntersection{std::move(faces)});
  }

  static SetRegion implicit(std::function<bool(const Vector&)> member, AxisBox bbox,
                            std::function<double(const Vector&)> signed_distance = {}) {
    if (!member) throw Error(ErrorCode::InvalidArgument, "implicit set needs a membership predicate");
    return SetRegion(Implicit{std::move(member), std::move(signed_distance), std::move(bbox)});
  }

  static SetRegion empty() { return SetRegion(Union{}); }

  static SetRegion unite(std::vector<SetRegion> parts) { return SetRegion(Union{std::move(parts)}); }

  static SetRegion intersect(std::vector<SetRegion> parts) {
    return SetRegion(Intersection{std::move(parts)});
  }

  static SetRegion complement(const SetRegion& base) {
    return SetRegion(Complement{std::make_shared<const SetRegion>(base)});
  }

  static SetRegion inflated(const SetRegion& base, double r) {
    if (!(r >= 0.0)) throw Error(ErrorCode::InvalidArgument, "inflation radius must be >= 0");
    return SetRegion(Inflated{std::make_shared<const SetRegion>(base), r});
  }

  const Variant& variant() const { return *node_; }

  template <class T>
  const T* as() const { return std::get_if<T>(node_.get()); }

 private:
  explicit SetRegion(Variant v) : node_(std::make_shared<const Variant>(std::move(v))) {}

  std::shared_ptr<const Variant> node_;
};

namespace detail {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

inline double box_signed_distance(const AxisBox& b, const Vector& x) {
  double outside = 0.0;
  double inside = -kInf;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double q = std::max(b.lo[i] - x[i], x[i] - b.hi[i]);
    if (q > 0.0) outside += q * q;
    inside = std::max(inside, q);
  }
  if (outside > 0.0) return std::sqrt(outside);
  return inside;
}

inline double half_space_residual(const HalfSpaceIntersection& h, const Vector& x) {
  double worst = -kInf;
  for (const auto& f : h.faces) worst = std::max(worst, (f.normal.dot(x) - f.offset) / f.normal.norm());
  return worst;
}

}  // namespace detail

/// True when the variant tree carries enough structure for a distance.
inline bool supports_distance(const SetRegion& a) {
  using namespace detail;
  return std::visit(
      Overloaded{
          [](const Ball&) { return true; },
          [](const AxisBox&) { return true; },
          [](const HalfSpaceIntersection&) { return true; },
          [](const Implicit& s) { return static_cast<bool>(s.signed_distance); },
          [](const Inflated& s) { return supports_distance(*s.base); },
          [](const Union& s) {
            return std::all_of(s.parts.begin(), s.parts.end(),
                               [](const SetRegion& p) { return supports_distance(p); });
          },
          [](const Intersection& s) {
            return std::all_of(s.parts.begin(), s.parts.end(),
                               [](const SetRegion& p) { return supports_distance(p); });
          },
          [](const Complement& s) { return supports_distance(*s.base); },
      },
      a.variant());
}

/// Signed distance: positive outside, non-positive inside. Exact for balls and
/// boxes; for half-space intersections, unions, intersections and inflations
/// of non-convex sets the interior depth and some exterior values are bounds.
inline double signed_distance(const Vector& x, const SetRegion& a) {
  using namespace detail;
  return std::visit(
      Overloaded{
          [&](const Ball& b) { return (x - b.center).norm() - b.radius; },
          [&](const AxisBox& b) { return box_signed_distance(b, x); },
          [&](const HalfSpaceIntersection& h) {
            return h.faces.empty() ? -kInf : half_space_residual(h, x);
          },
          [&](const Implicit& s) {
            if (!s.signed_distance) {
              throw Error(ErrorCode::UnsupportedDistance, "implicit set without distance oracle");
            }
            return s.signed_distance(x);
          },
          [&](const Inflated& s) { return signed_distance(x, *s.base) - s.r; },
          [&](const Union& s) {
            double d = kInf;
            for (const auto& p : s.parts) d = std::min(d, signed_distance(x, p));
            return d;
          },
          [&](const Intersection& s) {
            if (s.parts.empty()) return -kInf;
            double d = -kInf;
            for (const auto& p : s.parts) d = std::max(d, signed_distance(x, p));
            return d;
          },
          [&](const Complement& s) { return -signed_distance(x, *s.base); },
      },
      a.variant());
}

/// inf over y in A of |x - y|. Intersections of non-boxes report the largest
/// component distance, which is a lower bound.
inline double dist_to_set(const Vector& x, const SetRegion& a) {
  if (!supports_distance(a)) {
    throw Error(ErrorCode::UnsupportedDistance, "set variant has no exact or oracle distance");
  }
  if (const auto* in = a.as<Intersection>()) {
    // Box intersections collapse to a box, which keeps the distance exact.
    bool all_boxes = !in->parts.empty();
    for (const auto& p : in->parts) all_boxes = all_boxes && p.as<AxisBox>() != nullptr;
    if (all_boxes) {
      AxisBox acc = *in->parts.front().as<AxisBox>();
      for (const auto& p : in->parts) {
        acc.lo = acc.lo.cwiseMax(p.as<AxisBox>()->lo);
        acc.hi = acc.hi.cwiseMin(p.as<AxisBox>()->hi);
      }
      if ((acc.lo.array() > acc.hi.array()).any()) return kInf;
      return std::max(detail::box_signed_distance(acc, x), 0.0);
    }
  }
  return std::max(signed_distance(x, a), 0.0);
}

/// Membership with an absolute tolerance.
inline bool contains(const SetRegion& a, const Vector& x, double tol = kMembershipTol) {
  using namespace detail;
  return std::visit(
      Overloaded{
          [&](const Ball& b) { return (x - b.center).norm() <= b.radius + tol; },
          [&](const AxisBox& b) { return box_signed_distance(b, x) <= tol; },
          [&](const HalfSpaceIntersection& h) {
            return h.faces.empty() || half_space_residual(h, x) <= tol;
          },
          [&](const Implicit& s) {
            if (s.member(x)) return true;
            return static_cast<bool>(s.signed_distance) && s.signed_distance(x) <= tol;
          },
          [&](const Inflated& s) {
            if (supports_distance(*s.base)) return dist_to_set(x, *s.base) <= s.r + tol;
            return contains(*s.base, x, tol);
          },
          [&](const Union& s) {
            return std::any_of(s.parts.begin(), s.parts.end(),
                               [&](const SetRegion& p) { return contains(p, x, tol); });
          },
          [&](const Intersection& s) {
            return std::all_of(s.parts.begin(), s.parts.end(),
                               [&](const SetRegion& p) { return contains(p, x, tol); });
          },
          [&](const Complement& s) {
            if (supports_distance(*s.base)) return signed_distance(x, *s.base) >= -tol;
            return !contains(*s.base, x, 0.0);
          },
      },
      a.variant());
}

inline SetRegion inflate(const SetRegion& a, double r) {
  if (!(r >= 0.0)) throw Error(ErrorCode::InvalidArgument, "inflation radius must be >= 0");
  if (r == 0.0) return a;
  return SetRegion::inflated(a, r);
}

/// Bounding box when one is derivable from the variant tree. Complements have
/// none; unbounded boxes are returned as is.
inline std::optional<AxisBox> bounding_box(const SetRegion& a) {
  using namespace detail;
  return std::visit(
      Overloaded{
          [](const Ball& b) -> std::optional<AxisBox> {
            const Vector r = Vector::Constant(b.center.size(), b.radius);
            return AxisBox{b.center - r, b.center + r};
          },
          [](const AxisBox& b) -> std::optional<AxisBox> { return b; },
          [](const HalfSpaceIntersection& h) -> std::optional<AxisBox> {
            if (h.faces.empty()) return std::nullopt;
            const auto n = h.faces.front().normal.size();
            return AxisBox{Vector::Constant(n, -kInf), Vector::Constant(n, kInf)};
          },
          [](const Implicit& s) -> std::optional<AxisBox> { return s.bbox; },
          [](const Inflated& s) -> std::optional<AxisBox> {
            auto b = bounding_box(*s.base);
            if (!b) return b;
            b->lo.array() -= s.r;
            b->hi.array() += s.r;
            return b;
          },
          [](const Union& s) -> std::optional<AxisBox> {
            std::optional<AxisBox> acc;
            for (const auto& p : s.parts) {
              auto b = bounding_box(p);
              if (!b) return std::nullopt;
              if (!acc) {
                acc = b;
              } else {
                acc->lo = acc->lo.cwiseMin(b->lo);
                acc->hi = acc->hi.cwiseMax(b->hi);
              }
            }
            return acc;
          },
          [](const Intersection& s) -> std::optional<AxisBox> {
            std::optional<AxisBox> acc;
            for (const auto& p : s.parts) {
              auto b = bounding_box(p);
              if (!b) continue;
              if (!acc) {
                acc = b;
              } else {
                acc->lo = acc->lo.cwiseMax(b->lo);
                acc->hi = acc->hi.cwiseMin(b->hi);
              }
            }
            return acc;
          },
          [](const Complement&) -> std::optional<AxisBox> { return std::nullopt; },
      },
      a.variant());
}

/// Intersection of two boxes; lo may exceed hi when they are disjoint.
inline AxisBox clip(const AxisBox& a, const AxisBox& b) {
  return AxisBox{a.lo.cwiseMax(b.lo), a.hi.cwiseMin(b.hi)};
}

inline bool is_empty(const AxisBox& b) { return (b.lo.array() > b.hi.array()).any(); }

/// Regular grid over a bounded box. A degenerate axis contributes one value.
inline std::vector<Vector> grid_points(const AxisBox& box, const std::vector<int>& counts) {
  const int n = box.dim();
  if (static_cast<int>(counts.size()) != n) {
    throw Error(ErrorCode::DimensionMismatch, "grid counts do not match box dimension");
  }
  if (!box.bounded()) throw Error(ErrorCode::InvalidArgument, "grid requires a bounded box");
  if (is_empty(box)) return {};
  std::vector<std::vector<double>> axes(n);
  for (int i = 0; i < n; ++i) {
    const int c = std::max(1, counts[i]);
    if (box.lo[i] == box.hi[i] || c == 1) {
      axes[i] = {box.lo[i] == box.hi[i] ? box.lo[i] : 0.5 * (box.lo[i] + box.hi[i])};
      continue;
    }
    axes[i].resize(c);
    for (int k = 0; k < c; ++k) {
      axes[i][k] = k == c - 1 ? box.hi[i] : box.lo[i] + (box.hi[i] - box.lo[i]) * k / (c - 1);
    }
  }
  std::vector<Vector> out;
  std::size_t total = 1;
  for (const auto& ax : axes) total *= ax.size();
  out.reserve(total);
  std::vector<std::size_t> idx(n, 0);
  for (std::size_t k = 0; k < total; ++k) {
    Vector p(n);
    for (int i = 0; i < n; ++i) p[i] = axes[i][idx[i]];
    out.push_back(std::move(p));
    for (int i = n - 1; i >= 0; --i) {
      if (++idx[i] < axes[i].size()) break;
      idx[i] = 0;
    }
  }
  return out;
}

/// omega(x) = |x|_A (1 + 1 / dist(x, complement of O)).
class ProperIndicator {
 public:
  ProperIndicator(SetRegion target, SetRegion domain)
      : target_(std::move(target)), domain_(std::move(domain)) {}

  double operator()(const Vector& x) const {
    const double da = dist_to_set(x, target_);
    if (da == 0.0) return 0.0;
    const double dc = std::max(-signed_distance(x, domain_), 0.0);
    if (dc == 0.0) return kInf;
    return da * (1.0 + 1.0 / dc);
  }

  const SetRegion& target() const { return target_; }
  const SetRegion& domain() const { return domain_; }

 private:
  SetRegion target_;
  SetRegion domain_;
};

/// Builds omega after checking that A sits strictly inside O. The clearance is
/// estimated on a probe cloud of A (bounding-box grid plus ball extremes).
inline ProperIndicator make_proper_indicator(const SetRegion& target, const SetRegion& domain,
                                             double tol = kMembershipTol) {
  if (!supports_distance(target)) {
    throw Error(ErrorCode::UnsupportedDistance, "indicator target needs a distance");
  }
  if (!supports_distance(domain)) {
    throw Error(ErrorCode::UnsupportedDistance, "indicator domain needs a distance");
  }
  const auto bb = bounding_box(target);
  if (!bb || !bb->bounded()) throw Error(ErrorCode::DegenerateDomain, "indicator target must be compact");
  std::vector<Vector> probes;
  const int n = bb->dim();
  const int per_axis = n <= 3 ? 9 : (n <= 5 ? 4 : 2);
  for (auto& p : grid_points(*bb, std::vector<int>(n, per_axis))) {
    if (contains(target, p, 0.0)) probes.push_back(std::move(p));
  }
  if (const auto* b = target.as<Ball>()) {
    probes.push_back(b->center);
    for (int i = 0; i < n; ++i) {
      Vector e = Vector::Zero(n);
      e[i] = b->radius;
      probes.push_back(b->center + e);
      probes.push_back(b->center - e);
    }
  }
  if (probes.empty()) throw Error(ErrorCode::DegenerateDomain, "indicator target has no probe points");
  for (const auto& p : probes) {
    if (-signed_distance(p, domain) <= tol) {
      throw Error(ErrorCode::DegenerateDomain, "target touches the boundary of the indicator domain");
    }
  }
  return ProperIndicator(target, domain);
}

}  // namespace hylb
