#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "rcmact/simulator.hpp"
#include "rcmact/types.hpp"

namespace rcmact {

enum class Phase { Approach, Descend, Close, Lift, Transfer, Lower, Open, Retract };

std::string_view to_string(Phase p);

struct Waypoint {
  ActionVector target;  // global frame
  Phase phase = Phase::Approach;
  int dwell_steps = 0;  // extra steps held after the target is reached
};

inline constexpr double kApproachHeight = 2.0;
inline constexpr double kRetractHeight = 3.0;
inline constexpr double kCarryRoll = 0.4;

/// Scripted grasp-and-place plan for a freshly reset world, in the global
/// frame. Throws UnreachableLayout if a waypoint leaves the workspace.
std::vector<Waypoint> plan_waypoints(const WorldState& state, const WorldConfig& config);

/// Resets the world, reads the fiducials, executes the plan with per-waypoint
/// Cartesian jitter of `noise_sigma` mm and records observations and actions
/// in the episode's local frame. Throws ExpertFailure when the rollout does
/// not succeed.
EpisodeRecord generate_episode(const WorldConfig& config, std::uint64_t seed, double noise_sigma);

/// `count` successful demonstrations for seeds seed_base, seed_base+1, ...
/// A failed seed is replaced deterministically by seed + k * 1000003.
/// Parallel over episodes.
std::vector<EpisodeRecord> collect_demonstrations(const WorldConfig& config, int count,
                                                  std::uint64_t seed_base, double noise_sigma);

}  // namespace rcmact
