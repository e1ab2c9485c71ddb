#include "rcmact/inference.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <random>

#include "rcmact/config.hpp"
#include "rcmact/error.hpp"
#include "rcmact/text_format.hpp"

namespace rcmact {
namespace {

constexpr std::uint64_t kLatentStream = 0xa0761d6478bd642fULL;

ActionMatrix denormalize_chunk(const PolicyParameters& params, const Eigen::MatrixXd& chunk) {
  ActionMatrix out(chunk.rows(), kActionDim);
  for (Eigen::Index j = 0; j < chunk.rows(); ++j) {
    out.row(j) = denormalize_action(params.stats, chunk.row(j).transpose()).transpose();
  }
  return out;
}

ActionVector to_instrument_frame(const CalibrationResult& cal, const ActionVector& a) {
  ActionVector out = a;
  out.head<3>() = apply(cal.transform, a.head<3>().eval());
  return out;
}

CalibrationResult identity_calibration(const WorldConfig& config) {
  CalibrationResult cal;
  cal.conditioning = triad_conditioning(config.fiducial_reference);
  return cal;
}

// Per-step policy query plus buffering, shared by closed- and open-loop runs.
class ChunkingController {
 public:
  ChunkingController(const PolicyParameters& params, const StereoRig& rig, const CalibrationResult& cal,
                     Variant variant, const EnsembleConfig& cfg, int horizon, std::uint64_t seed)
      : params_(params), rig_(rig), cal_(cal), variant_(variant), cfg_(cfg), buffer_(horizon),
        rng_(seed ^ kLatentStream) {
    cfg_.validate();
    if (cfg_.replan_every > params_.config.chunk_size) {
      throw Error(ErrorCode::InvalidConfig, "replan_every exceeds the chunk size");
    }
  }

  // Policy-frame action for step t given the raw local observation.
  ActionVector act(int t, const ObsVector& obs_local) {
    if (t % cfg_.replan_every == 0) {
      const ObsVector obs = realign_observation(cal_, obs_local, rig_);
      Eigen::VectorXd z = Eigen::VectorXd::Zero(params_.config.latent_dim);
      if (variant_ == Variant::PosteriorZ) {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = normal(rng_);
      }
      latest_ = denormalize_chunk(params_, decode(params_, normalize_obs(params_.stats, obs), z));
      latest_t_ = t;
      buffer_.push_chunk(t, latest_);
    }
    if (variant_ == Variant::NoEnsemble) return latest_.row(t - latest_t_).transpose();
    return ensemble(buffer_.slot(t), cfg_);
  }

 private:
  const PolicyParameters& params_;
  StereoRig rig_;
  CalibrationResult cal_;
  Variant variant_;
  EnsembleConfig cfg_;
  ChunkBuffer buffer_;
  std::mt19937_64 rng_;
  ActionMatrix latest_;
  int latest_t_ = 0;
};

}  // namespace

std::string_view to_string(WeightSchedule s) { return s == WeightSchedule::ExpDecay ? "exp_decay" : "pow_decay"; }

WeightSchedule parse_weight_schedule(std::string_view s) {
  if (s == "exp_decay") return WeightSchedule::ExpDecay;
  if (s == "pow_decay") return WeightSchedule::PowDecay;
  throw Error(ErrorCode::TypeError, "weight_schedule must be exp_decay or pow_decay, got '" + std::string(s) + "'");
}

void EnsembleConfig::validate() const {
  if (!(m > 0.0)) throw Error(ErrorCode::InvalidConfig, "ensemble m must be > 0");
  if (window < 0) throw Error(ErrorCode::InvalidConfig, "ensemble window must be >= 0");
  if (replan_every < 1) throw Error(ErrorCode::InvalidConfig, "replan_every must be >= 1");
}

ChunkBuffer::ChunkBuffer(int horizon) : slots_(static_cast<std::size_t>(std::max(horizon, 0))) {}

void ChunkBuffer::push_chunk(int t, const ActionMatrix& chunk) {
  for (Eigen::Index j = 0; j < chunk.rows(); ++j) {
    const long slot = t + j;
    if (slot < 0) continue;
    if (slot >= horizon()) break;
    slots_[static_cast<std::size_t>(slot)].push_back(chunk.row(j).transpose());
  }
}

const std::vector<ActionVector>& ChunkBuffer::slot(int t) const { return slots_.at(static_cast<std::size_t>(t)); }

ActionVector ensemble(std::span<const ActionVector> oldest_first, const EnsembleConfig& cfg) {
  if (oldest_first.empty()) throw Error(ErrorCode::EmptyBuffer, "no predictions buffered for this step");
  const std::size_t n = oldest_first.size();
  std::size_t used = n;
  if (cfg.schedule == WeightSchedule::PowDecay) used = std::min(n, static_cast<std::size_t>(cfg.window) + 1);

  // Weighted mean written as an offset from the newest entry, so identical
  // entries come back bit-for-bit.
  const ActionVector& newest = oldest_first[n - 1];
  ActionVector offset = ActionVector::Zero();
  double total = 0.0;
  for (std::size_t i = 0; i < used; ++i) {
    const double w = cfg.schedule == WeightSchedule::ExpDecay ? std::exp(-cfg.m * static_cast<double>(i))
                                                              : std::pow(cfg.m, static_cast<double>(i));
    offset += w * (oldest_first[n - 1 - i] - newest);
    total += w;
  }
  return newest + offset / total;
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoCalib: return "no_calib";
    case Variant::NoEnsemble: return "no_ensemble";
    case Variant::PosteriorZ: return "posterior_z";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  if (s == "full") return Variant::Full;
  if (s == "no_calib") return Variant::NoCalib;
  if (s == "no_ensemble") return Variant::NoEnsemble;
  if (s == "posterior_z") return Variant::PosteriorZ;
  throw Error(ErrorCode::TypeError, "variant must be full, no_calib, no_ensemble or posterior_z, got '" + std::string(s) + "'");
}

CalibrationResult episode_start_calibrate(const WorldState& state, const WorldConfig& config) {
  return estimate_transform(config.fiducial_reference, fiducial_readout(state, config));
}

Rollout run_episode(const PolicyParameters& params, const WorldConfig& config, std::uint64_t seed, Variant variant,
                    const EnsembleConfig& ensemble_cfg) {
  Rollout r;
  r.seed = seed;
  r.variant = variant;
  WorldState state = reset(config, seed);
  r.drift_truth = state.drift;
  r.fiducial_observed = fiducial_readout(state, config);
  r.calibration = variant == Variant::NoCalib ? identity_calibration(config) : episode_start_calibrate(state, config);

  const int horizon = config.time_limit_steps;
  ChunkingController controller(params, config.rig(), r.calibration, variant, ensemble_cfg, horizon, seed);
  std::vector<ObsVector> obs;
  std::vector<ActionVector> policy_actions, local_actions;
  r.states.push_back(state);
  for (int t = 0; t < horizon; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const ObsVector o = observe(state, config, Frame::Local).flat();
    const ActionVector a = controller.act(t, o);
    const ActionVector local = to_instrument_frame(r.calibration, a);
    state = step(state, local, config);
    r.step_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());

    obs.push_back(o);
    policy_actions.push_back(a);
    local_actions.push_back(local);
    r.states.push_back(state);
    if (state.workspace_clamped) ++r.workspace_clamps;
    if (check_outcome(state, config).placed) break;
  }
  r.outcome = check_outcome(state, config);

  const auto n = static_cast<Eigen::Index>(obs.size());
  r.observations.resize(n, kObsDim);
  r.actions_policy.resize(n, kActionDim);
  r.actions_local.resize(n, kActionDim);
  for (Eigen::Index t = 0; t < n; ++t) {
    r.observations.row(t) = obs[t].transpose();
    r.actions_policy.row(t) = policy_actions[t].transpose();
    r.actions_local.row(t) = local_actions[t].transpose();
  }
  return r;
}

ActionMatrix open_loop_actions(const PolicyParameters& params, const EpisodeRecord& raw_episode, Variant variant,
                               const EnsembleConfig& ensemble_cfg) {
  if (raw_episode.calibrated) throw Error(ErrorCode::AlreadyCalibrated, "open-loop replay needs the raw episode");
  CalibrationResult cal;
  if (variant == Variant::NoCalib) {
    cal.conditioning = triad_conditioning(raw_episode.fiducial_reference);
  } else {
    cal = estimate_transform(raw_episode.fiducial_reference, raw_episode.fiducial_observed);
  }
  const int n = raw_episode.length();
  ChunkingController controller(params, raw_episode.rig, cal, variant, ensemble_cfg, n, raw_episode.seed);
  ActionMatrix out(n, kActionDim);
  for (int t = 0; t < n; ++t) {
    ActionVector local = to_instrument_frame(cal, controller.act(t, raw_episode.observations.row(t).transpose()));
    local.head<3>() = local_to_global(raw_episode.drift_truth, local.head<3>().eval());
    out.row(t) = local.transpose();
  }
  return out;
}

EpisodeRecord rollout_record(const Rollout& r, const WorldConfig& config) {
  EpisodeRecord ep;
  ep.seed = r.seed;
  ep.calibrated = false;
  ep.drift_truth = r.drift_truth;
  ep.fiducial_reference = config.fiducial_reference;
  ep.fiducial_observed = r.fiducial_observed;
  ep.rig = config.rig();
  ep.config_echo = world_config_echo(config);
  ep.observations = r.observations;
  ep.actions = r.actions_local;
  ep.grasp_frame = r.outcome.grasp_frame ? *r.outcome.grasp_frame : -1;
  return ep;
}

std::string rollout_sidecar(const Rollout& r) {
  KeyValues kv;
  kv["seed"] = std::to_string(r.seed);
  kv["variant"] = std::string(to_string(r.variant));
  kv["grasped"] = r.outcome.grasped ? "1" : "0";
  kv["placed"] = r.outcome.placed ? "1" : "0";
  kv["success"] = r.outcome.success ? "1" : "0";
  kv["grasp_frame"] = std::to_string(r.outcome.grasp_frame ? *r.outcome.grasp_frame : -1);
  kv["final_error_mm"] = format_real(r.outcome.final_error);
  kv["steps_used"] = std::to_string(r.outcome.steps_used);
  kv["workspace_clamps"] = std::to_string(r.workspace_clamps);
  kv["calibration.rotation"] = format_reals(std::span<const double>(
      Eigen::Matrix<double, 3, 3, Eigen::RowMajor>(r.calibration.transform.rotation).data(), 9));
  kv["calibration.translation"] = format_reals(std::span<const double>(r.calibration.transform.translation.data(), 3));
  kv["calibration.residual_mm"] = format_real(r.calibration.residual);
  // Wall-clock step times are left out so the sidecar is reproducible.
  return format_key_values(kv);
}

std::vector<Rollout> run_episodes(const PolicyParameters& params, const WorldConfig& config, std::uint64_t seed_base,
                                  int n, Variant variant, const EnsembleConfig& ensemble_cfg) {
  std::vector<Rollout> out(static_cast<std::size_t>(std::max(n, 0)));
  std::vector<std::exception_ptr> errors(out.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      out[i] = run_episode(params, config, seed_base + static_cast<std::uint64_t>(i), variant, ensemble_cfg);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace rcmact
