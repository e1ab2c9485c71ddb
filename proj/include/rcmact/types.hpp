#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include <Eigen/Dense>

#include "rcmact/geometry.hpp"
#include "rcmact/stereo.hpp"

namespace rcmact {

inline constexpr int kProprioDim = 5;  // x, y, z, roll, gripper
inline constexpr int kActionDim = 5;
inline constexpr int kObsDim = kFeatureDim + kProprioDim;
inline constexpr int kProprioOffset = kFeatureDim;

using ActionVector = Eigen::Matrix<double, kActionDim, 1>;
using ObsVector = Eigen::Matrix<double, kObsDim, 1>;
using ObsMatrix = Eigen::Matrix<double, Eigen::Dynamic, kObsDim, Eigen::RowMajor>;
using ActionMatrix = Eigen::Matrix<double, Eigen::Dynamic, kActionDim, Eigen::RowMajor>;

/// Three labeled fiducial points; order matters for correspondence.
struct FiducialTriad {
  std::array<Vec3, 3> points{Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};

  const Vec3& operator[](int i) const { return points[i]; }
  Vec3& operator[](int i) { return points[i]; }
};

// One demonstration or rollout. Rows of `observations` are
// [12 stereo features | x y z roll gripper], rows of `actions` are
// [x y z roll gripper] targets. While `calibrated` is false both are in the
// episode's local (drifted) frame; afterwards they are in the global frame.
// `drift_truth` is kept for evaluation oracles only.
struct EpisodeRecord {
  std::uint64_t seed = 0;
  bool calibrated = false;
  RigidTransform drift_truth;
  FiducialTriad fiducial_reference;
  FiducialTriad fiducial_observed;
  StereoRig rig;
  std::map<std::string, std::string> config_echo;
  ObsMatrix observations;
  ActionMatrix actions;
  std::int64_t grasp_frame = -1;

  int length() const { return static_cast<int>(observations.rows()); }
};

}  // namespace rcmact
