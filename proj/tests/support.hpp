#pragma once

#include <cmath>
#include <random>

#include "rcmact/geometry.hpp"
#include "rcmact/types.hpp"

namespace rcmact::testing {

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

/// Rotation angle uniform in [-max_angle, max_angle], translation norm
/// uniform in [0, max_shift].
inline RigidTransform random_transform(std::mt19937_64& rng, double max_angle, double max_shift) {
  std::uniform_real_distribution<double> angle(-max_angle, max_angle);
  std::uniform_real_distribution<double> shift(0.0, max_shift);
  RigidTransform t;
  t.rotation = rotation_from_axis_angle(random_unit(rng), angle(rng));
  t.translation = random_unit(rng) * shift(rng);
  return t;
}

inline FiducialTriad transformed(const FiducialTriad& f, const RigidTransform& t) {
  FiducialTriad out;
  for (int i = 0; i < 3; ++i) out[i] = apply(t, f[i]);
  return out;
}

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace rcmact::testing
