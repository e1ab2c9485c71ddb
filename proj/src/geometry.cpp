#include "rcmact/geometry.hpp"

#include <cmath>

#include "rcmact/error.hpp"

namespace rcmact {

bool RigidTransform::is_exact_identity() const {
  return rotation == Mat3::Identity() && translation == Vec3::Zero();
}

bool RigidTransform::is_valid(double tol) const {
  return rotation.allFinite() && translation.allFinite() &&
         orthonormality_error(rotation) < tol && std::abs(rotation.determinant() - 1.0) < tol;
}

Vec3 apply(const RigidTransform& t, const Vec3& p) { return t.rotation * p + t.translation; }

RigidTransform invert(const RigidTransform& t) {
  RigidTransform out;
  out.rotation = t.rotation.transpose();
  out.translation = -(out.rotation * t.translation);
  return out;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

Mat3 rotation_from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (!(n > 1e-12)) throw Error(ErrorCode::ZeroAxis, "rotation axis norm is too small");
  const Vec3 k = axis / n;
  Mat3 kx;
  kx << 0.0, -k.z(), k.y(),
        k.z(), 0.0, -k.x(),
        -k.y(), k.x(), 0.0;
  return Mat3::Identity() + std::sin(angle) * kx + (1.0 - std::cos(angle)) * (kx * kx);
}

double orthonormality_error(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).norm();
}

}  // namespace rcmact
