#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rcmact/types.hpp"

namespace rcmact {

// ARNG episode file, all integers and reals little-endian:
//   "ARNG" | u32 version (1) | u32 metadata length | metadata (UTF-8 key=value
//   lines) | fiducial_reference 9 f64 | fiducial_observed 9 f64 |
//   drift_truth 12 f64 (R row-major, then d) | observations T x 17 f64 |
//   actions T x 5 f64 | grasp_frame i64
inline constexpr std::uint32_t kEpisodeFormatVersion = 1;

std::string serialize_episode(const EpisodeRecord& ep);
/// Throws CorruptHeader, FormatVersionMismatch or TruncatedPayload.
EpisodeRecord parse_episode(std::string_view bytes);

void write_episode(const EpisodeRecord& ep, const std::filesystem::path& path);
EpisodeRecord read_episode(const std::filesystem::path& path);

struct NormStats {
  ObsVector obs_mean = ObsVector::Zero();
  ObsVector obs_std = ObsVector::Ones();
  ActionVector act_mean = ActionVector::Zero();
  ActionVector act_std = ActionVector::Ones();
};

inline constexpr double kMinStd = 1e-8;

/// Per-dimension mean and population std over every timestep, std clamped at
/// 1e-8. Throws EmptyDataset or UncalibratedEpisode.
NormStats compute_norm_stats(std::span<const EpisodeRecord> episodes);

ObsVector normalize_obs(const NormStats& s, const ObsVector& o);
ActionVector normalize_action(const NormStats& s, const ActionVector& a);
ActionVector denormalize_action(const NormStats& s, const ActionVector& a);

// Rows are samples. `action_chunks` row b holds k actions back to back
// (5 values each, normalized); `chunk_mask(b, j)` is 1 for a real action and
// 0 for padding past the episode end. Padded action entries are zero.
struct TrainingBatch {
  Eigen::MatrixXd observations;
  Eigen::MatrixXd action_chunks;
  Eigen::MatrixXd chunk_mask;

  int size() const { return static_cast<int>(observations.rows()); }
  int chunk_size() const { return static_cast<int>(chunk_mask.cols()); }
};

/// Normalized sample for one (episode, t) pair into row `row` of `batch`.
void fill_sample(TrainingBatch& batch, int row, const EpisodeRecord& ep, int t, const NormStats& stats);

/// Empty batch with the right shapes.
TrainingBatch make_batch(int batch_size, int chunk_size);

/// Uniform over all (episode, t) pairs. Throws EmptyDataset,
/// UncalibratedEpisode, or ShapeMismatch when k < 1.
TrainingBatch sample_batch(std::span<const EpisodeRecord> episodes, const NormStats& stats, int k,
                           int batch_size, std::mt19937_64& rng);

/// Every (episode, t) pair in order; used for open-loop evaluation.
TrainingBatch full_batch(const EpisodeRecord& ep, const NormStats& stats, int k);

// Dataset directory: one ARNG file per episode plus manifest.txt.
struct DatasetManifest {
  bool calibrated = false;
  std::vector<std::string> files;
  std::optional<NormStats> stats;
};

inline constexpr const char* kManifestName = "manifest.txt";

void write_dataset(const std::filesystem::path& dir, std::span<const EpisodeRecord> episodes,
                   const std::optional<NormStats>& stats);
DatasetManifest read_manifest(const std::filesystem::path& dir);
std::vector<EpisodeRecord> read_dataset(const std::filesystem::path& dir, DatasetManifest* manifest = nullptr);

std::string episode_file_name(int index);

}  // namespace rcmact
