#include "rcmact/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rcmact/error.hpp"

namespace rcmact {
namespace {

double move_toward(double value, double target, double rate) {
  const double delta = target - value;
  if (std::abs(delta) <= rate) return target;
  return value + std::copysign(rate, delta);
}

double in_plane_distance(const Vec3& a, const Vec3& b) { return (a - b).head<2>().norm(); }

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(normal(rng), normal(rng), normal(rng));
  } while (v.norm() < 1e-9);
  return v.normalized();
}

}  // namespace

StereoRig WorldConfig::rig() const {
  StereoRig r;
  r.baseline = camera_baseline;
  r.focal = camera_focal;
  r.height = camera_height;
  return r;
}

void WorldConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::InvalidConfig, what);
  };
  require(black_ring_diameter > 0.0 && orange_ring_diameter > 0.0, "ring diameters must be positive");
  require(black_ring_diameter < orange_ring_diameter, "black ring must be smaller than orange ring");
  require(workspace_half_extent > 0.0, "workspace_half_extent must be positive");
  require(success_tolerance > 0.0, "success_tolerance must be positive");
  require(control_rate_hz > 0.0 && max_step > 0.0 && roll_rate > 0.0 && gripper_rate > 0.0,
          "rates must be positive");
  require(time_limit_steps > 0, "time_limit_steps must be positive");
  require(drift_translation_max >= 0.0 && drift_rotation_max >= 0.0, "drift bounds must be >= 0");
  require(fiducial_noise_sigma >= 0.0, "fiducial_noise_sigma must be >= 0");
  require(camera_baseline > 0.0 && camera_focal > 0.0, "camera baseline and focal must be positive");
  require(camera_height > workspace_half_extent + drift_translation_max + 1.0,
          "cameras must sit above the workspace");
  require(grasp_radius > 0.0, "grasp_radius must be positive");
  require(triad_conditioning(fiducial_reference) > kMinTriadConditioning,
          "reference fiducials are collinear");
  require((home_tip.array().abs() <= workspace_half_extent).all(), "home pose outside workspace");
}

ObsVector ObservationFrame::flat() const {
  ObsVector v;
  for (int j = 0; j < kFeatureDim; ++j) v(j) = features[j];
  v.segment<kProprioDim>(kProprioOffset) = proprio;
  return v;
}

Vec3 local_to_global(const RigidTransform& drift, const Vec3& p_local) {
  return drift.rotation.transpose() * (p_local - drift.translation);
}

WorldState reset(const WorldConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double h = config.workspace_half_extent;

  // Black ring on the left part of the phantom, orange ring on the right; the
  // regions are 0.4 h apart along x.
  auto sample = [&](double x_lo, double x_hi) {
    return Vec3(x_lo + (x_hi - x_lo) * unit(rng), -0.6 * h + 1.2 * h * unit(rng), 0.0);
  };

  WorldState s;
  s.black_ring_center = sample(-0.8 * h, -0.2 * h);
  s.orange_ring_center = sample(0.2 * h, 0.8 * h);
  s.tip = config.home_tip;

  const Vec3 axis = random_unit(rng);
  const double angle = config.drift_rotation_max * unit(rng);
  const Vec3 dir = random_unit(rng);
  const double shift = config.drift_translation_max * unit(rng);
  if (config.drift_rotation_max > 0.0 || config.drift_translation_max > 0.0) {
    // Pivot about the RCM, then shift it.
    s.drift.rotation = rotation_from_axis_angle(axis, angle);
    s.drift.translation = config.rcm_reference - s.drift.rotation * config.rcm_reference + shift * dir;
  }
  s.rng_state = rng();
  return s;
}

WorldState step(const WorldState& state, const ActionVector& action, const WorldConfig& config) {
  WorldState next = state;
  const double h = config.workspace_half_extent;

  Vec3 target = local_to_global(state.drift, action.head<3>());
  const Vec3 clamped = target.cwiseMax(-h).cwiseMin(h);
  next.workspace_clamped = clamped != target;
  target = clamped;

  const Vec3 delta = target - state.tip;
  const double dist = delta.norm();
  next.tip = dist <= config.max_step ? target : Vec3(state.tip + delta * (config.max_step / dist));

  next.roll = move_toward(state.roll, action(3), config.roll_rate);
  const double grip_target = std::clamp(action(4), 0.0, 1.0);
  next.gripper = move_toward(state.gripper, grip_target, config.gripper_rate);

  const bool closing = state.gripper >= 0.5 && next.gripper < 0.5;
  const bool opening = state.gripper < 0.5 && next.gripper >= 0.5;
  if (!state.holding && closing && (next.tip - state.black_ring_center).norm() <= config.grasp_radius) {
    next.holding = true;
    if (!next.grasp_frame) next.grasp_frame = state.step_index;
  } else if (state.holding && opening) {
    next.holding = false;
    next.released = true;
  }
  if (next.holding) next.black_ring_center = next.tip;

  next.step_index = state.step_index + 1;
  return next;
}

ObservationFrame observe(const WorldState& state, const WorldConfig& config, Frame frame) {
  LandmarkSet landmarks{state.black_ring_center, state.orange_ring_center, state.tip};
  if (frame == Frame::Local) {
    for (auto& p : landmarks) p = apply(state.drift, p);
  }
  ObservationFrame obs;
  obs.frame = frame;
  obs.features = config.rig().features(landmarks);
  obs.proprio << landmarks[2], state.roll, state.gripper;
  return obs;
}

FiducialTriad fiducial_readout(const WorldState& state, const WorldConfig& config) {
  FiducialTriad out;
  std::mt19937_64 rng(state.rng_state);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int i = 0; i < 3; ++i) {
    out[i] = apply(state.drift, config.fiducial_reference[i]);
    if (config.fiducial_noise_sigma > 0.0) {
      for (int j = 0; j < 3; ++j) out[i](j) += config.fiducial_noise_sigma * noise(rng);
    }
  }
  return out;
}

TaskOutcome check_outcome(const WorldState& state, const WorldConfig& config) {
  TaskOutcome o;
  o.grasp_frame = state.grasp_frame;
  o.grasped = state.grasp_frame.has_value();
  o.final_error = in_plane_distance(state.black_ring_center, state.orange_ring_center);
  o.placed = !state.holding && state.released && o.final_error <= config.success_tolerance;
  o.steps_used = state.step_index;
  o.success = o.grasped && o.placed && o.steps_used <= config.time_limit_steps;
  return o;
}

}  // namespace rcmact
