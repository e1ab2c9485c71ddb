#pragma once

#include <Eigen/Dense>

namespace rcmact {

/// Positions are millimeters, directions dimensionless.
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Proper rigid motion p -> R p + d. Used for the episode drift, mapping the
/// global workspace frame onto an episode's local (drifted) frame.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  /// True when rotation is exactly I and translation exactly zero.
  bool is_exact_identity() const;

  /// Orthonormality and det(R) = +1 within `tol`.
  bool is_valid(double tol = 1e-9) const;
};

Vec3 apply(const RigidTransform& t, const Vec3& p);

/// (R^T, -R^T d)
RigidTransform invert(const RigidTransform& t);

/// apply(compose(a, b), p) == apply(a, apply(b, p))
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

/// Rodrigues rotation about the normalized `axis`. Throws ZeroAxis when the
/// axis norm is at most 1e-12.
Mat3 rotation_from_axis_angle(const Vec3& axis, double angle);

/// ||R^T R - I||_F
double orthonormality_error(const Mat3& r);

}  // namespace rcmact
