#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rcmact/calibration.hpp"
#include "rcmact/policy.hpp"
#include "rcmact/simulator.hpp"

namespace rcmact {

enum class WeightSchedule { ExpDecay, PowDecay };

std::string_view to_string(WeightSchedule s);
WeightSchedule parse_weight_schedule(std::string_view s);

// exp_decay: w_i = exp(-m i) over every buffered prediction.
// pow_decay: w_i = m^i over the newest window + 1 predictions.
// i counts back from the newest prediction (i = 0).
struct EnsembleConfig {
  WeightSchedule schedule = WeightSchedule::ExpDecay;
  double m = 0.8;
  int window = 3;
  int replan_every = 1;

  void validate() const;
};

/// slot(t) holds every action predicted for timestep t, oldest first.
class ChunkBuffer {
 public:
  explicit ChunkBuffer(int horizon);

  /// Row j of `chunk` goes to slot t + j; rows past the horizon are dropped.
  void push_chunk(int t, const ActionMatrix& chunk);
  const std::vector<ActionVector>& slot(int t) const;
  int horizon() const { return static_cast<int>(slots_.size()); }

 private:
  std::vector<std::vector<ActionVector>> slots_;
};

/// Weighted mean of `oldest_first`. Throws EmptyBuffer.
ActionVector ensemble(std::span<const ActionVector> oldest_first, const EnsembleConfig& cfg);

// Table-style inference variants:
//   Full        calibrate, decode with z = 0, ensemble the buffer
//   NoCalib     identity calibration, otherwise Full
//   NoEnsemble  calibrate, execute the newest prediction only
//   PosteriorZ  calibrate, z ~ N(0, I) every step, ensemble
enum class Variant { Full, NoCalib, NoEnsemble, PosteriorZ };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

/// Reads the episode's fiducials once and estimates the global-to-local
/// transform.
CalibrationResult episode_start_calibrate(const WorldState& state, const WorldConfig& config);

struct Rollout {
  std::uint64_t seed = 0;
  Variant variant = Variant::Full;
  CalibrationResult calibration;
  FiducialTriad fiducial_observed;
  RigidTransform drift_truth;
  std::vector<WorldState> states;  // states[t] is observed at step t; one extra final state
  ObsMatrix observations;          // local frame, as the instrument reported them
  ActionMatrix actions_policy;     // policy frame (global unless NoCalib)
  ActionMatrix actions_local;      // as sent to the instrument
  TaskOutcome outcome;
  std::vector<double> step_seconds;
  int workspace_clamps = 0;
};

/// Closed-loop episode: reset, episode-start calibration, then per step
/// observe, realign, normalize, decode, denormalize, buffer, ensemble, map
/// the action back to the local frame and step the simulator. Stops when the
/// ring is placed or at the time limit.
Rollout run_episode(const PolicyParameters& params, const WorldConfig& config, std::uint64_t seed, Variant variant,
                    const EnsembleConfig& ensemble_cfg = {});

/// Same inference pipeline driven by a recorded (raw, local-frame) episode's
/// observations instead of the simulator. Returns the executed actions mapped
/// to the global frame with the episode's true drift, for scoring.
ActionMatrix open_loop_actions(const PolicyParameters& params, const EpisodeRecord& raw_episode, Variant variant,
                               const EnsembleConfig& ensemble_cfg = {});

/// ARNG record of a rollout (local frame, uncalibrated).
EpisodeRecord rollout_record(const Rollout& r, const WorldConfig& config);
/// key=value outcome and metrics sidecar.
std::string rollout_sidecar(const Rollout& r);

/// Rollouts for seeds seed_base .. seed_base + n - 1, parallel over seeds.
std::vector<Rollout> run_episodes(const PolicyParameters& params, const WorldConfig& config, std::uint64_t seed_base,
                                  int n, Variant variant, const EnsembleConfig& ensemble_cfg = {});

}  // namespace rcmact
