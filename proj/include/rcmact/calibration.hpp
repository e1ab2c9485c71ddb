#pragma once

#include <span>
#include <vector>

#include "rcmact/geometry.hpp"
#include "rcmact/types.hpp"

namespace rcmact {

inline constexpr double kMinTriadConditioning = 1e-6;

/// Maps global to local: p_local = R p_global + d.
struct CalibrationResult {
  RigidTransform transform;
  double residual = 0.0;      // max correspondence error, mm
  double conditioning = 0.0;  // min triad conditioning of the two inputs
};

/// |(p2-p1) x (p3-p1)| / (|p2-p1| |p3-p1|), in [0, 1]; 0 for collinear or
/// coincident points.
double triad_conditioning(const FiducialTriad& t);

/// Solves observed_i = R reference_i + d. Exactly determined data goes through
/// an orthonormal-frame construction; inconsistent (noisy) data falls back to
/// the least-squares cross-covariance solution.
///
/// Throws DegenerateTriad when either triad has conditioning <= 1e-6 and
/// ReflectionRequired when the best orthogonal fit is an improper rotation.
CalibrationResult estimate_transform(const FiducialTriad& reference, const FiducialTriad& observed);

/// Many episodes against one reference; OpenMP over the observed triads.
std::vector<CalibrationResult> estimate_transforms(const FiducialTriad& reference,
                                                   std::span<const FiducialTriad> observed);
/// Serial loop, kept as the reference for the parallel kernel.
std::vector<CalibrationResult> estimate_transforms_serial(const FiducialTriad& reference,
                                                          std::span<const FiducialTriad> observed);

/// R^T (p - d)
Vec3 realign_point(const CalibrationResult& cal, const Vec3& p_local);

/// One observation row: landmarks are triangulated from the stereo features,
/// realigned and reprojected; the tip position is realigned; roll and gripper
/// pass through. Exact identity calibration returns the input unchanged.
ObsVector realign_observation(const CalibrationResult& cal, const ObsVector& obs, const StereoRig& rig);

/// Maps every Cartesian quantity of a local-frame episode to the global frame.
/// Stereo features are recomputed from triangulated, realigned landmarks. Roll
/// and gripper channels are left unchanged. Throws AlreadyCalibrated.
EpisodeRecord realign_episode(const CalibrationResult& cal, const EpisodeRecord& ep);

namespace detail {
/// Proper rotation maximizing tr(R H^T) for cross-covariance H = sum a_i b_i^T.
Mat3 best_fit_rotation(const Mat3& cross_covariance);
}  // namespace detail

}  // namespace rcmact
