#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "hylb/hylb.hpp"

namespace testing_support {

using hylb::Vector;

inline Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

inline hylb::AxisBox box(std::initializer_list<double> lo, std::initializer_list<double> hi) {
  return hylb::AxisBox{vec(lo), vec(hi)};
}

/// dx/dt = k x on R^n, no jumps.
inline hylb::HybridSystem linear_flow(int n, double k, double bound = 50.0) {
  return hylb::make_system(
      n, hylb::SetRegion::whole(n), [k](const Vector& x) { return Vector(k * x); }, hylb::SetRegion::empty(),
      [](const Vector& x) { return std::vector<Vector>{x}; },
      hylb::AxisBox{Vector::Constant(n, -bound), Vector::Constant(n, bound)});
}

/// x+ = x / 2 on R^n, no flow.
inline hylb::HybridSystem halving_jumps(int n) {
  return hylb::make_system(
      n, hylb::SetRegion::empty(), [n](const Vector&) { return Vector(Vector::Zero(n)); }, hylb::SetRegion::whole(n),
      [](const Vector& x) { return std::vector<Vector>{Vector(0.5 * x)}; },
      hylb::AxisBox{Vector::Constant(n, -10.0), Vector::Constant(n, 10.0)});
}

inline Vector random_point(std::mt19937_64& rng, const hylb::AxisBox& b) {
  Vector x(b.dim());
  for (int i = 0; i < b.dim(); ++i) x[i] = std::uniform_real_distribution<double>(b.lo[i], b.hi[i])(rng);
  return x;
}

/// Closed-form first impact of a ball at height y with vertical speed z.
inline double ballistic_impact(double y, double z, double a) { return (z + std::sqrt(z * z + 2.0 * a * y)) / a; }

}  // namespace testing_support
