#include "rcmact/expert.hpp"

#include <cmath>
#include <exception>
#include <random>

#include "rcmact/config.hpp"
#include "rcmact/error.hpp"

namespace rcmact {
namespace {

constexpr std::uint64_t kJitterStream = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kReseedStride = 1000003;
constexpr int kMaxReseeds = 16;

ActionVector make_action(const Vec3& p, double roll, double gripper) {
  ActionVector a;
  a << p, roll, gripper;
  return a;
}

bool reached(const WorldState& s, const ActionVector& target) {
  return (s.tip - target.head<3>()).norm() <= 1e-9 && std::abs(s.roll - target(3)) <= 1e-12 &&
         std::abs(s.gripper - target(4)) <= 1e-12;
}

}  // namespace

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Approach: return "approach";
    case Phase::Descend: return "descend";
    case Phase::Close: return "close";
    case Phase::Lift: return "lift";
    case Phase::Transfer: return "transfer";
    case Phase::Lower: return "lower";
    case Phase::Open: return "open";
    case Phase::Retract: return "retract";
  }
  return "?";
}

std::vector<Waypoint> plan_waypoints(const WorldState& state, const WorldConfig& config) {
  const Vec3 black = state.black_ring_center;
  const Vec3 orange = state.orange_ring_center;
  const Vec3 up(0.0, 0.0, 1.0);
  const double place_height = 0.5 * config.success_tolerance;

  std::vector<Waypoint> plan{
      {make_action(black + kApproachHeight * up, 0.0, 1.0), Phase::Approach, 0},
      {make_action(black, 0.0, 1.0), Phase::Descend, 0},
      {make_action(black, 0.0, 0.0), Phase::Close, 0},
      {make_action(black + kApproachHeight * up, kCarryRoll, 0.0), Phase::Lift, 0},
      {make_action(orange + kApproachHeight * up, kCarryRoll, 0.0), Phase::Transfer, 0},
      {make_action(orange + place_height * up, kCarryRoll, 0.0), Phase::Lower, 0},
      {make_action(orange + place_height * up, kCarryRoll, 1.0), Phase::Open, 0},
      {make_action(orange + kRetractHeight * up, 0.0, 1.0), Phase::Retract, 0},
  };
  const double h = config.workspace_half_extent;
  for (const auto& w : plan) {
    if ((w.target.head<3>().array().abs() > h).any()) {
      throw Error(ErrorCode::UnreachableLayout, std::string("waypoint outside workspace in phase ") +
                                                    std::string(to_string(w.phase)));
    }
  }
  return plan;
}

EpisodeRecord generate_episode(const WorldConfig& config, std::uint64_t seed, double noise_sigma) {
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidConfig, "noise_sigma must be >= 0");
  WorldState state = reset(config, seed);

  EpisodeRecord ep;
  ep.seed = seed;
  ep.calibrated = false;
  ep.drift_truth = state.drift;
  ep.fiducial_reference = config.fiducial_reference;
  ep.fiducial_observed = fiducial_readout(state, config);
  ep.rig = config.rig();
  ep.config_echo = world_config_echo(config);

  std::vector<Waypoint> plan = plan_waypoints(state, config);
  if (noise_sigma > 0.0) {
    std::mt19937_64 rng(seed ^ kJitterStream);
    std::normal_distribution<double> jitter(0.0, noise_sigma);
    for (std::size_t i = 0; i < plan.size(); ++i) {
      // Gripper actions keep the pose of the waypoint they act at.
      const bool gripper_only = plan[i].phase == Phase::Close || plan[i].phase == Phase::Open;
      if (gripper_only && i > 0) {
        plan[i].target.head<3>() = plan[i - 1].target.head<3>();
      } else {
        for (int j = 0; j < 3; ++j) plan[i].target(j) += jitter(rng);
      }
    }
  }

  std::vector<ObsVector> obs;
  std::vector<ActionVector> actions;
  const int limit = config.time_limit_steps;
  for (const auto& w : plan) {
    ActionVector local = w.target;
    local.head<3>() = apply(state.drift, w.target.head<3>().eval());
    ActionVector executed = local;
    executed.head<3>() = local_to_global(state.drift, local.head<3>().eval());
    // Advance on the step a waypoint is reached; recording a no-op step there
    // would give two identical observations different commands.
    int held = 0;
    while (!reached(state, executed) || held < w.dwell_steps) {
      if (static_cast<int>(actions.size()) >= limit) {
        throw Error(ErrorCode::ExpertFailure, "expert exceeded the time limit");
      }
      if (reached(state, executed)) ++held;
      obs.push_back(observe(state, config, Frame::Local).flat());
      actions.push_back(local);
      state = step(state, local, config);
    }
  }

  const TaskOutcome outcome = check_outcome(state, config);
  if (!outcome.success) {
    throw Error(ErrorCode::ExpertFailure,
                "demonstration for seed " + std::to_string(seed) + " did not succeed (error " +
                    std::to_string(outcome.final_error) + " mm)");
  }

  ep.observations.resize(static_cast<Eigen::Index>(obs.size()), kObsDim);
  ep.actions.resize(static_cast<Eigen::Index>(actions.size()), kActionDim);
  for (std::size_t t = 0; t < obs.size(); ++t) {
    ep.observations.row(static_cast<Eigen::Index>(t)) = obs[t].transpose();
    ep.actions.row(static_cast<Eigen::Index>(t)) = actions[t].transpose();
  }
  ep.grasp_frame = *outcome.grasp_frame;
  return ep;
}

std::vector<EpisodeRecord> collect_demonstrations(const WorldConfig& config, int count,
                                                  std::uint64_t seed_base, double noise_sigma) {
  std::vector<EpisodeRecord> out(static_cast<std::size_t>(std::max(count, 0)));
  std::vector<std::exception_ptr> errors(out.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = seed_base + static_cast<std::uint64_t>(i);
    for (int attempt = 0;; ++attempt) {
      try {
        out[i] = generate_episode(config, seed + kReseedStride * static_cast<std::uint64_t>(attempt),
                                  noise_sigma);
        break;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ExpertFailure || attempt + 1 >= kMaxReseeds) {
          errors[i] = std::current_exception();
          break;
        }
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace rcmact
