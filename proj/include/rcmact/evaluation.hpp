#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rcmact/inference.hpp"
#include "rcmact/types.hpp"

namespace rcmact {

/// Mean over timesteps of the squared 5D action difference. Unequal lengths
/// are truncated to the shorter one and flagged in `truncated`.
/// Throws EmptyTrajectory.
double trajectory_mse(const ActionMatrix& predicted, const ActionMatrix& expert, bool* truncated = nullptr);

struct GraspEvent {
  int frame = 0;
  Vec3 position = Vec3::Zero();  // global tip position right after the grasp step
};

std::optional<GraspEvent> grasp_event(const Rollout& r);
/// Works on raw and calibrated records; raw positions are mapped with the
/// stored drift.
std::optional<GraspEvent> grasp_event(const EpisodeRecord& ep);

std::optional<double> grasp_deviation(const std::optional<GraspEvent>& robot, const std::optional<GraspEvent>& expert);
std::optional<int> grasping_latency(const std::optional<GraspEvent>& robot, const std::optional<GraspEvent>& expert);

std::optional<double> grasp_deviation(const Rollout& r, const EpisodeRecord& expert);
std::optional<int> grasping_latency(const Rollout& r, const EpisodeRecord& expert);

/// Executed actions of `ep` in the global frame.
ActionMatrix global_actions(const EpisodeRecord& ep);

struct MetricsReport {
  std::optional<double> mse;
  std::optional<double> grasp_deviation;
  std::optional<int> grasping_latency;
  bool grasped = false;
  bool placed = false;
  bool success = false;
  int steps = 0;
};

/// Closed-loop comparison: MSE between the rollout's executed actions and the
/// expert's, both global, truncated to the shorter trajectory.
MetricsReport evaluate(const Rollout& r, const EpisodeRecord& expert);
/// Same, from a rollout stored as an ARNG record plus its sidecar outcome.
MetricsReport evaluate(const EpisodeRecord& rollout, const TaskOutcome& outcome, const EpisodeRecord& expert);

// One ablation arm. `use_raw_model` picks the model trained on uncalibrated
// data, when one is supplied.
struct AblationArm {
  std::string label;
  Variant variant = Variant::Full;
  bool use_raw_model = false;
};

/// ACT (no_calib), w/o Resample (no_ensemble), posterior_z, full.
std::vector<AblationArm> default_arms();

struct EpisodeMetrics {
  std::string label;
  std::uint64_t seed = 0;
  Vec3 black_ring_center = Vec3::Zero();
  MetricsReport report;
};

struct AblationRow {
  std::string label;
  int episodes = 0;
  int successes = 0;
  int grasped = 0;
  int placed = 0;
  std::optional<double> mean_mse;
  std::optional<double> mean_deviation;
  int deviation_count = 0;
  std::optional<double> mean_latency;
  int latency_count = 0;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::vector<EpisodeMetrics> episodes;  // arm-major, seed order within an arm
};

struct AblationSettings {
  int episodes = 20;
  std::uint64_t seed_base = 1000;
  double expert_noise = 0.0;
  EnsembleConfig ensemble;
};

/// Matched-seed ablation. Per episode the MSE is open-loop (the matched
/// expert's observations replayed through the arm's inference pipeline);
/// deviation, latency and outcomes come from the closed-loop rollout.
/// Parallel over episodes; the table is reduced in arm and seed order.
AblationTable run_ablation(const PolicyParameters& params, const PolicyParameters* raw_params,
                           const WorldConfig& config, std::span<const AblationArm> arms,
                           const AblationSettings& settings);

AblationRow summarize(const std::string& label, std::span<const MetricsReport> reports);

std::string ablation_csv(const AblationTable& table);
std::string episode_metrics_csv(std::span<const EpisodeMetrics> episodes);

struct SweepRow {
  int chunk_size = 0;
  double mse = 0.0;
  double deviation = 0.0;  // over episodes with a defined deviation
  double latency = 0.0;
  double success_rate = 0.0;
  int deviation_count = 0;
  int latency_count = 0;
  double mse_norm = 0.0;
  double deviation_norm = 0.0;
  double latency_norm = 0.0;
  double success_rate_norm = 0.0;
};

/// Min-max to [0, 1]; a degenerate range maps to all zeros.
std::vector<double> min_max_normalize(std::span<const double> values);
void normalize_sweep(std::vector<SweepRow>& rows);

struct SweepSettings {
  std::vector<int> chunk_sizes;
  AblationSettings eval;
};

/// One model per chunk size, trained on the same calibrated episodes with the
/// same seed, each evaluated as the full variant. A deviation or latency
/// mean over zero defined episodes is written as 0 with a count of 0.
std::vector<SweepRow> chunk_sweep(std::span<const EpisodeRecord> calibrated_episodes, const PolicyConfig& base,
                                  const WorldConfig& config, const SweepSettings& settings,
                                  const TrainProgress& progress = {});

std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace rcmact
