#include "rcmact/calibration.hpp"

#include <algorithm>
#include <exception>

#include "rcmact/error.hpp"

namespace rcmact {
namespace {

constexpr double kExactFitTolerance = 1e-9;

// Right-handed orthonormal basis attached to a triad, as matrix columns.
Mat3 triad_frame(const FiducialTriad& t) {
  const Vec3 e1 = (t[1] - t[0]).normalized();
  const Vec3 n = (t[1] - t[0]).cross(t[2] - t[0]).normalized();
  Mat3 b;
  b.col(0) = e1;
  b.col(1) = n.cross(e1);
  b.col(2) = n;
  return b;
}

Vec3 centroid(const FiducialTriad& t) { return (t[0] + t[1] + t[2]) / 3.0; }

double max_residual(const RigidTransform& tf, const FiducialTriad& ref, const FiducialTriad& obs) {
  double r = 0.0;
  for (int i = 0; i < 3; ++i) r = std::max(r, (apply(tf, ref[i]) - obs[i]).norm());
  return r;
}

bool same_triad(const FiducialTriad& a, const FiducialTriad& b) {
  return a[0] == b[0] && a[1] == b[1] && a[2] == b[2];
}

}  // namespace

double triad_conditioning(const FiducialTriad& t) {
  const Vec3 a = t[1] - t[0];
  const Vec3 b = t[2] - t[0];
  const double denom = a.norm() * b.norm();
  if (!(denom > 0.0)) return 0.0;
  return std::clamp(a.cross(b).norm() / denom, 0.0, 1.0);
}

namespace detail {

Mat3 best_fit_rotation(const Mat3& h) {
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  const Eigen::Vector3d s = svd.singularValues();
  const double sign = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  // A sign flip is free only when the smallest singular value vanishes
  // (planar point sets). Otherwise the data asks for a mirror image.
  if (sign < 0.0 && s(2) > 1e-9 * std::max(s(0), 1e-300)) {
    throw Error(ErrorCode::ReflectionRequired, "best orthogonal fit is a reflection");
  }
  Mat3 d = Mat3::Identity();
  d(2, 2) = sign;
  return v * d * u.transpose();
}

}  // namespace detail

CalibrationResult estimate_transform(const FiducialTriad& reference, const FiducialTriad& observed) {
  const double cond = std::min(triad_conditioning(reference), triad_conditioning(observed));
  if (!(cond > kMinTriadConditioning)) {
    throw Error(ErrorCode::DegenerateTriad, "fiducial triad is (nearly) collinear");
  }

  CalibrationResult out;
  out.conditioning = cond;
  if (same_triad(reference, observed)) return out;

  out.transform.rotation = triad_frame(observed) * triad_frame(reference).transpose();
  out.transform.translation = centroid(observed) - out.transform.rotation * centroid(reference);
  out.residual = max_residual(out.transform, reference, observed);
  if (out.residual <= kExactFitTolerance) return out;

  const Vec3 cr = centroid(reference);
  const Vec3 co = centroid(observed);
  Mat3 h = Mat3::Zero();
  for (int i = 0; i < 3; ++i) h += (reference[i] - cr) * (observed[i] - co).transpose();
  out.transform.rotation = detail::best_fit_rotation(h);
  out.transform.translation = co - out.transform.rotation * cr;
  out.residual = max_residual(out.transform, reference, observed);
  return out;
}

std::vector<CalibrationResult> estimate_transforms_serial(const FiducialTriad& reference,
                                                          std::span<const FiducialTriad> observed) {
  std::vector<CalibrationResult> out;
  out.reserve(observed.size());
  for (const auto& obs : observed) out.push_back(estimate_transform(reference, obs));
  return out;
}

std::vector<CalibrationResult> estimate_transforms(const FiducialTriad& reference,
                                                   std::span<const FiducialTriad> observed) {
  const auto n = static_cast<std::ptrdiff_t>(observed.size());
  std::vector<CalibrationResult> out(observed.size());
  std::vector<std::exception_ptr> errors(observed.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = estimate_transform(reference, observed[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

Vec3 realign_point(const CalibrationResult& cal, const Vec3& p_local) {
  return cal.transform.rotation.transpose() * (p_local - cal.transform.translation);
}

ObsVector realign_observation(const CalibrationResult& cal, const ObsVector& obs, const StereoRig& rig) {
  if (cal.transform.is_exact_identity()) return obs;
  FeatureVector f;
  for (int j = 0; j < kFeatureDim; ++j) f[j] = obs(j);
  LandmarkSet landmarks = rig.triangulate(f);
  for (auto& p : landmarks) p = realign_point(cal, p);
  f = rig.features(landmarks);

  ObsVector out = obs;
  for (int j = 0; j < kFeatureDim; ++j) out(j) = f[j];
  out.segment<3>(kProprioOffset) = realign_point(cal, obs.segment<3>(kProprioOffset));
  return out;
}

EpisodeRecord realign_episode(const CalibrationResult& cal, const EpisodeRecord& ep) {
  if (ep.calibrated) throw Error(ErrorCode::AlreadyCalibrated, "episode is already in the global frame");
  EpisodeRecord out = ep;
  out.calibrated = true;
  if (cal.transform.is_exact_identity()) return out;

  for (int t = 0; t < ep.length(); ++t) {
    out.observations.row(t) = realign_observation(cal, ep.observations.row(t).transpose(), ep.rig).transpose();
    const Vec3 target = ep.actions.row(t).head<3>().transpose();
    out.actions.row(t).head<3>() = realign_point(cal, target).transpose();
  }
  return out;
}

}  // namespace rcmact
