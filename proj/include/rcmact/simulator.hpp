#pragma once

#include <cstdint>
#include <optional>

#include "rcmact/calibration.hpp"
#include "rcmact/stereo.hpp"
#include "rcmact/types.hpp"

namespace rcmact {

// Kinematic ring grasp-and-place world. All lengths in mm. The episode drift
// maps the global frame onto the local frame the instrument reports in; the
// rotation part pivots about `rcm_reference`.
struct WorldConfig {
  double black_ring_diameter = 1.22;
  double orange_ring_diameter = 4.02;
  double workspace_half_extent = 10.0;
  Vec3 rcm_reference{0.0, 0.0, 15.0};
  FiducialTriad fiducial_reference{{Vec3(-5.0, -4.0, 0.0), Vec3(5.0, -4.0, 0.0),
                                    Vec3(0.0, 4.660254037844386, 0.0)}};
  double drift_translation_max = 1.0;
  double drift_rotation_max = 0.087;
  double fiducial_noise_sigma = 0.0;
  double control_rate_hz = 10.0;
  double success_tolerance = 0.15;
  int time_limit_steps = 250;
  double camera_baseline = 10.0;
  double camera_focal = 30.0;
  double camera_height = 30.0;

  Vec3 home_tip{0.0, 0.0, 6.0};
  double max_step = 0.5;        // mm per control step
  double grasp_radius = 0.3;    // tip-to-ring distance that allows a grasp
  double roll_rate = 0.2;       // rad per step
  double gripper_rate = 0.6;    // unit interval per step

  StereoRig rig() const;
  /// Throws InvalidConfig.
  void validate() const;
};

enum class Frame { Local, Global };

struct WorldState {
  Vec3 tip = Vec3::Zero();  // global frame
  double roll = 0.0;
  double gripper = 1.0;  // 0 closed, 1 open
  Vec3 black_ring_center = Vec3::Zero();
  Vec3 orange_ring_center = Vec3::Zero();
  bool holding = false;
  bool released = false;
  std::optional<int> grasp_frame;
  RigidTransform drift;  // global -> local
  int step_index = 0;
  std::uint64_t rng_state = 0;
  bool workspace_clamped = false;  // set when the last target left the workspace
};

struct ObservationFrame {
  Eigen::Matrix<double, kProprioDim, 1> proprio;
  FeatureVector features{};
  Frame frame = Frame::Local;

  ObsVector flat() const;
};

struct TaskOutcome {
  bool grasped = false;
  bool placed = false;
  bool success = false;
  std::optional<int> grasp_frame;
  double final_error = 0.0;
  int steps_used = 0;
};

WorldState reset(const WorldConfig& config, std::uint64_t seed);

/// `action` is expressed in the episode's local frame, like a command sent to
/// the instrument. Tip motion is clamped to `max_step` per call.
WorldState step(const WorldState& state, const ActionVector& action, const WorldConfig& config);

ObservationFrame observe(const WorldState& state, const WorldConfig& config, Frame frame);

/// Reference fiducials as read out in this episode's local frame, plus
/// Gaussian noise of `fiducial_noise_sigma`.
FiducialTriad fiducial_readout(const WorldState& state, const WorldConfig& config);

TaskOutcome check_outcome(const WorldState& state, const WorldConfig& config);

/// Local-to-global for a drift transform, R^T (p - d).
Vec3 local_to_global(const RigidTransform& drift, const Vec3& p_local);

}  // namespace rcmact
