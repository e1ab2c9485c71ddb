#include "rcmact/dataset.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rcmact/error.hpp"
#include "rcmact/text_format.hpp"
#include "bytes.hpp"

namespace rcmact {
namespace {

constexpr char kMagic[4] = {'A', 'R', 'N', 'G'};

void write_triad(ByteWriter& w, const FiducialTriad& t) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) w.f64(t[i](j));
}

FiducialTriad read_triad(ByteReader& r) {
  FiducialTriad t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t[i](j) = r.f64();
  return t;
}

std::string episode_metadata(const EpisodeRecord& ep) {
  KeyValues kv;
  kv["calibrated"] = ep.calibrated ? "1" : "0";
  kv["seed"] = std::to_string(ep.seed);
  kv["T"] = std::to_string(ep.length());
  kv["obs_dim"] = std::to_string(kObsDim);
  kv["action_dim"] = std::to_string(kActionDim);
  kv["rig.baseline"] = format_real(ep.rig.baseline);
  kv["rig.focal"] = format_real(ep.rig.focal);
  kv["rig.height"] = format_real(ep.rig.height);
  kv["rig.center"] = format_reals(std::span<const double>(ep.rig.center.data(), 3));
  for (const auto& [k, v] : ep.config_echo) kv["config." + k] = v;
  return format_key_values(kv);
}

}  // namespace

std::string serialize_episode(const EpisodeRecord& ep) {
  if (ep.actions.rows() != ep.observations.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "observations and actions differ in length");
  }
  const std::string meta = episode_metadata(ep);
  ByteWriter w;
  w.raw(std::string_view(kMagic, 4));
  w.u32(kEpisodeFormatVersion);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.raw(meta);
  write_triad(w, ep.fiducial_reference);
  write_triad(w, ep.fiducial_observed);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) w.f64(ep.drift_truth.rotation(i, j));
  for (int j = 0; j < 3; ++j) w.f64(ep.drift_truth.translation(j));
  for (Eigen::Index i = 0; i < ep.observations.size(); ++i) w.f64(ep.observations.data()[i]);
  for (Eigen::Index i = 0; i < ep.actions.size(); ++i) w.f64(ep.actions.data()[i]);
  w.i64(ep.grasp_frame);
  return w.take();
}

EpisodeRecord parse_episode(std::string_view bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4) throw Error(ErrorCode::TruncatedPayload, "file shorter than the magic");
  if (r.raw(4) != std::string_view(kMagic, 4)) throw Error(ErrorCode::CorruptHeader, "bad magic, not an ARNG file");
  const std::uint32_t version = r.u32();
  if (version != kEpisodeFormatVersion) {
    throw Error(ErrorCode::FormatVersionMismatch, "unsupported ARNG version " + std::to_string(version));
  }
  const std::uint32_t meta_len = r.u32();
  const KeyValues kv = parse_key_values(r.raw(meta_len), ErrorCode::CorruptHeader);

  EpisodeRecord ep;
  std::int64_t length = 0;
  try {
    ep.calibrated = parse_int(require_key(kv, "calibrated")) != 0;
    ep.seed = static_cast<std::uint64_t>(std::stoull(require_key(kv, "seed")));
    length = parse_int(require_key(kv, "T"));
    if (parse_int(require_key(kv, "obs_dim")) != kObsDim ||
        parse_int(require_key(kv, "action_dim")) != kActionDim) {
      throw Error(ErrorCode::CorruptHeader, "dimension mismatch in metadata");
    }
    ep.rig.baseline = parse_real(require_key(kv, "rig.baseline"));
    ep.rig.focal = parse_real(require_key(kv, "rig.focal"));
    ep.rig.height = parse_real(require_key(kv, "rig.height"));
    const auto center = parse_reals(require_key(kv, "rig.center"));
    if (center.size() != 3) throw Error(ErrorCode::CorruptHeader, "rig.center needs 3 values");
    ep.rig.center = Vec3(center[0], center[1], center[2]);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CorruptHeader) throw;
    throw Error(ErrorCode::CorruptHeader, e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::CorruptHeader, e.what());
  }
  if (length < 0) throw Error(ErrorCode::CorruptHeader, "negative episode length");
  for (const auto& [k, v] : kv) {
    if (k.rfind("config.", 0) == 0) ep.config_echo[k.substr(7)] = v;
  }

  // Check the payload size before allocating anything sized by the header.
  const std::uint64_t payload = 8ull * (9 + 9 + 12) + 8ull * static_cast<std::uint64_t>(length) * (kObsDim + kActionDim) + 8;
  if (r.remaining() < payload) throw Error(ErrorCode::TruncatedPayload, "episode payload is truncated");
  if (r.remaining() > payload) throw Error(ErrorCode::CorruptHeader, "trailing bytes after episode payload");

  ep.fiducial_reference = read_triad(r);
  ep.fiducial_observed = read_triad(r);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) ep.drift_truth.rotation(i, j) = r.f64();
  for (int j = 0; j < 3; ++j) ep.drift_truth.translation(j) = r.f64();
  ep.observations.resize(length, kObsDim);
  ep.actions.resize(length, kActionDim);
  for (Eigen::Index i = 0; i < ep.observations.size(); ++i) ep.observations.data()[i] = r.f64();
  for (Eigen::Index i = 0; i < ep.actions.size(); ++i) ep.actions.data()[i] = r.f64();
  ep.grasp_frame = r.i64();
  if (ep.grasp_frame < -1 || ep.grasp_frame >= length) {
    throw Error(ErrorCode::CorruptHeader, "grasp_frame out of range");
  }
  return ep;
}

void write_episode(const EpisodeRecord& ep, const std::filesystem::path& path) {
  write_file(path, serialize_episode(ep));
}

EpisodeRecord read_episode(const std::filesystem::path& path) { return parse_episode(read_file(path)); }

NormStats compute_norm_stats(std::span<const EpisodeRecord> episodes) {
  if (episodes.empty()) throw Error(ErrorCode::EmptyDataset, "no episodes");
  long n = 0;
  ObsVector obs_sum = ObsVector::Zero();
  ActionVector act_sum = ActionVector::Zero();
  for (const auto& ep : episodes) {
    if (!ep.calibrated) throw Error(ErrorCode::UncalibratedEpisode, "seed " + std::to_string(ep.seed));
    obs_sum += ep.observations.colwise().sum().transpose();
    act_sum += ep.actions.colwise().sum().transpose();
    n += ep.length();
  }
  if (n == 0) throw Error(ErrorCode::EmptyDataset, "episodes contain no timesteps");

  NormStats s;
  s.obs_mean = obs_sum / static_cast<double>(n);
  s.act_mean = act_sum / static_cast<double>(n);
  ObsVector obs_sq = ObsVector::Zero();
  ActionVector act_sq = ActionVector::Zero();
  for (const auto& ep : episodes) {
    obs_sq += (ep.observations.rowwise() - s.obs_mean.transpose()).array().square().colwise().sum().matrix().transpose();
    act_sq += (ep.actions.rowwise() - s.act_mean.transpose()).array().square().colwise().sum().matrix().transpose();
  }
  s.obs_std = (obs_sq / static_cast<double>(n)).array().sqrt().max(kMinStd).matrix();
  s.act_std = (act_sq / static_cast<double>(n)).array().sqrt().max(kMinStd).matrix();
  return s;
}

ObsVector normalize_obs(const NormStats& s, const ObsVector& o) {
  return ((o - s.obs_mean).array() / s.obs_std.array()).matrix();
}

ActionVector normalize_action(const NormStats& s, const ActionVector& a) {
  return ((a - s.act_mean).array() / s.act_std.array()).matrix();
}

ActionVector denormalize_action(const NormStats& s, const ActionVector& a) {
  return (a.array() * s.act_std.array()).matrix() + s.act_mean;
}

TrainingBatch make_batch(int batch_size, int chunk_size) {
  TrainingBatch b;
  b.observations = Eigen::MatrixXd::Zero(batch_size, kObsDim);
  b.action_chunks = Eigen::MatrixXd::Zero(batch_size, chunk_size * kActionDim);
  b.chunk_mask = Eigen::MatrixXd::Zero(batch_size, chunk_size);
  return b;
}

void fill_sample(TrainingBatch& batch, int row, const EpisodeRecord& ep, int t, const NormStats& stats) {
  batch.observations.row(row) = normalize_obs(stats, ep.observations.row(t).transpose()).transpose();
  const int k = batch.chunk_size();
  for (int j = 0; j < k; ++j) {
    if (t + j < ep.length()) {
      batch.action_chunks.block<1, kActionDim>(row, j * kActionDim) =
          normalize_action(stats, ep.actions.row(t + j).transpose()).transpose();
      batch.chunk_mask(row, j) = 1.0;
    } else {
      batch.action_chunks.block<1, kActionDim>(row, j * kActionDim).setZero();
      batch.chunk_mask(row, j) = 0.0;
    }
  }
}

TrainingBatch sample_batch(std::span<const EpisodeRecord> episodes, const NormStats& stats, int k,
                           int batch_size, std::mt19937_64& rng) {
  if (k < 1 || batch_size < 1) throw Error(ErrorCode::ShapeMismatch, "chunk and batch size must be >= 1");
  if (episodes.empty()) throw Error(ErrorCode::EmptyDataset, "no episodes");
  std::vector<long> offsets;
  offsets.reserve(episodes.size() + 1);
  offsets.push_back(0);
  for (const auto& ep : episodes) {
    if (!ep.calibrated) throw Error(ErrorCode::UncalibratedEpisode, "seed " + std::to_string(ep.seed));
    offsets.push_back(offsets.back() + ep.length());
  }
  if (offsets.back() == 0) throw Error(ErrorCode::EmptyDataset, "episodes contain no timesteps");

  TrainingBatch batch = make_batch(batch_size, k);
  std::uniform_int_distribution<long> pick(0, offsets.back() - 1);
  for (int b = 0; b < batch_size; ++b) {
    const long flat = pick(rng);
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat) - 1;
    const auto e = static_cast<std::size_t>(it - offsets.begin());
    fill_sample(batch, b, episodes[e], static_cast<int>(flat - *it), stats);
  }
  return batch;
}

TrainingBatch full_batch(const EpisodeRecord& ep, const NormStats& stats, int k) {
  TrainingBatch batch = make_batch(ep.length(), k);
  for (int t = 0; t < ep.length(); ++t) fill_sample(batch, t, ep, t, stats);
  return batch;
}

std::string episode_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "episode_%06d.arng", index);
  return buf;
}

void write_dataset(const std::filesystem::path& dir, std::span<const EpisodeRecord> episodes,
                   const std::optional<NormStats>& stats) {
  std::filesystem::create_directories(dir);
  KeyValueList manifest;
  bool calibrated = !episodes.empty();
  for (const auto& ep : episodes) calibrated = calibrated && ep.calibrated;
  manifest.emplace_back("format", "ARNG");
  manifest.emplace_back("version", std::to_string(kEpisodeFormatVersion));
  manifest.emplace_back("calibrated", calibrated ? "1" : "0");
  manifest.emplace_back("episodes", std::to_string(episodes.size()));
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const std::string name = episode_file_name(static_cast<int>(i));
    write_episode(episodes[i], dir / name);
    manifest.emplace_back("file", name);
  }
  if (stats) {
    manifest.emplace_back("obs_mean", format_reals(std::span<const double>(stats->obs_mean.data(), kObsDim)));
    manifest.emplace_back("obs_std", format_reals(std::span<const double>(stats->obs_std.data(), kObsDim)));
    manifest.emplace_back("act_mean", format_reals(std::span<const double>(stats->act_mean.data(), kActionDim)));
    manifest.emplace_back("act_std", format_reals(std::span<const double>(stats->act_std.data(), kActionDim)));
  } else {
    manifest.emplace_back("norm_stats", "none");
  }
  write_file(dir / kManifestName, format_key_value_list(manifest));
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const KeyValueList entries = parse_key_value_list(read_file(dir / kManifestName), ErrorCode::CorruptHeader);
  DatasetManifest m;
  KeyValues single;
  for (const auto& [k, v] : entries) {
    if (k == "file") {
      m.files.push_back(v);
    } else {
      single[k] = v;
    }
  }
  m.calibrated = single.count("calibrated") && single.at("calibrated") == "1";
  if (single.count("obs_mean")) {
    NormStats s;
    auto load = [&](const char* key, auto& vec) {
      const auto values = parse_reals(require_key(single, key));
      if (static_cast<Eigen::Index>(values.size()) != vec.size()) {
        throw Error(ErrorCode::CorruptHeader, std::string("wrong length for ") + key);
      }
      for (Eigen::Index i = 0; i < vec.size(); ++i) vec(i) = values[static_cast<std::size_t>(i)];
    };
    load("obs_mean", s.obs_mean);
    load("obs_std", s.obs_std);
    load("act_mean", s.act_mean);
    load("act_std", s.act_std);
    m.stats = s;
  }
  return m;
}

std::vector<EpisodeRecord> read_dataset(const std::filesystem::path& dir, DatasetManifest* manifest) {
  DatasetManifest m = read_manifest(dir);
  std::vector<EpisodeRecord> out;
  out.reserve(m.files.size());
  for (const auto& f : m.files) out.push_back(read_episode(dir / f));
  if (manifest) *manifest = std::move(m);
  return out;
}

}  // namespace rcmact
