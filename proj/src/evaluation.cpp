#include "rcmact/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>

#include "rcmact/error.hpp"
#include "rcmact/expert.hpp"
#include "rcmact/text_format.hpp"

namespace rcmact {
namespace {

std::string opt_real(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }

template <class T>
std::optional<double> mean_of(const std::vector<T>& v) {
  if (v.empty()) return std::nullopt;
  double s = 0.0;
  for (const T& x : v) s += static_cast<double>(x);
  return s / static_cast<double>(v.size());
}

}  // namespace

double trajectory_mse(const ActionMatrix& predicted, const ActionMatrix& expert, bool* truncated) {
  const Eigen::Index n = std::min(predicted.rows(), expert.rows());
  if (truncated) *truncated = predicted.rows() != expert.rows();
  if (n == 0) throw Error(ErrorCode::EmptyTrajectory, "trajectory_mse needs at least one timestep");
  double total = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) total += (predicted.row(t) - expert.row(t)).squaredNorm();
  return total / static_cast<double>(n);
}

std::optional<GraspEvent> grasp_event(const Rollout& r) {
  if (!r.outcome.grasp_frame) return std::nullopt;
  const int f = *r.outcome.grasp_frame;
  const std::size_t idx = std::min(static_cast<std::size_t>(f) + 1, r.states.size() - 1);
  return GraspEvent{f, r.states[idx].tip};
}

std::optional<GraspEvent> grasp_event(const EpisodeRecord& ep) {
  if (ep.grasp_frame < 0 || ep.length() == 0) return std::nullopt;
  const Eigen::Index row = std::min<Eigen::Index>(ep.grasp_frame + 1, ep.length() - 1);
  Vec3 p = ep.observations.row(row).segment<3>(kProprioOffset).transpose();
  if (!ep.calibrated) p = local_to_global(ep.drift_truth, p);
  return GraspEvent{static_cast<int>(ep.grasp_frame), p};
}

std::optional<double> grasp_deviation(const std::optional<GraspEvent>& robot, const std::optional<GraspEvent>& expert) {
  if (!robot || !expert) return std::nullopt;
  return (robot->position - expert->position).norm();
}

std::optional<int> grasping_latency(const std::optional<GraspEvent>& robot, const std::optional<GraspEvent>& expert) {
  if (!robot || !expert) return std::nullopt;
  return std::abs(robot->frame - expert->frame);
}

std::optional<double> grasp_deviation(const Rollout& r, const EpisodeRecord& expert) {
  return grasp_deviation(grasp_event(r), grasp_event(expert));
}

std::optional<int> grasping_latency(const Rollout& r, const EpisodeRecord& expert) {
  return grasping_latency(grasp_event(r), grasp_event(expert));
}

ActionMatrix global_actions(const EpisodeRecord& ep) {
  ActionMatrix out = ep.actions;
  if (ep.calibrated) return out;
  for (Eigen::Index t = 0; t < out.rows(); ++t) {
    const Vec3 p = out.row(t).head<3>().transpose();
    out.row(t).head<3>() = local_to_global(ep.drift_truth, p).transpose();
  }
  return out;
}

MetricsReport evaluate(const Rollout& r, const EpisodeRecord& expert) {
  MetricsReport m;
  ActionMatrix executed = r.actions_local;
  for (Eigen::Index t = 0; t < executed.rows(); ++t) {
    const Vec3 p = executed.row(t).head<3>().transpose();
    executed.row(t).head<3>() = local_to_global(r.drift_truth, p).transpose();
  }
  if (executed.rows() > 0 && expert.length() > 0) m.mse = trajectory_mse(executed, global_actions(expert));
  m.grasp_deviation = grasp_deviation(r, expert);
  m.grasping_latency = grasping_latency(r, expert);
  m.grasped = r.outcome.grasped;
  m.placed = r.outcome.placed;
  m.success = r.outcome.success;
  m.steps = r.outcome.steps_used;
  return m;
}

MetricsReport evaluate(const EpisodeRecord& rollout, const TaskOutcome& outcome, const EpisodeRecord& expert) {
  MetricsReport m;
  if (rollout.length() > 0 && expert.length() > 0) {
    m.mse = trajectory_mse(global_actions(rollout), global_actions(expert));
  }
  const auto robot = grasp_event(rollout);
  const auto ref = grasp_event(expert);
  m.grasp_deviation = grasp_deviation(robot, ref);
  m.grasping_latency = grasping_latency(robot, ref);
  m.grasped = outcome.grasped;
  m.placed = outcome.placed;
  m.success = outcome.success;
  m.steps = outcome.steps_used;
  return m;
}

std::vector<AblationArm> default_arms() {
  return {{"act", Variant::NoCalib, true},
          {"no_resample", Variant::NoEnsemble, false},
          {"posterior_z", Variant::PosteriorZ, false},
          {"full", Variant::Full, false}};
}

AblationRow summarize(const std::string& label, std::span<const MetricsReport> reports) {
  AblationRow row;
  row.label = label;
  row.episodes = static_cast<int>(reports.size());
  std::vector<double> mse, dev;
  std::vector<int> lat;
  for (const MetricsReport& m : reports) {
    row.successes += m.success;
    row.grasped += m.grasped;
    row.placed += m.placed;
    if (m.mse) mse.push_back(*m.mse);
    if (m.grasp_deviation) dev.push_back(*m.grasp_deviation);
    if (m.grasping_latency) lat.push_back(*m.grasping_latency);
  }
  row.mean_mse = mean_of(mse);
  row.mean_deviation = mean_of(dev);
  row.deviation_count = static_cast<int>(dev.size());
  row.mean_latency = mean_of(lat);
  row.latency_count = static_cast<int>(lat.size());
  return row;
}

AblationTable run_ablation(const PolicyParameters& params, const PolicyParameters* raw_params,
                           const WorldConfig& config, std::span<const AblationArm> arms,
                           const AblationSettings& settings) {
  settings.ensemble.validate();
  AblationTable table;
  const int n = std::max(settings.episodes, 0);
  const int n_arms = static_cast<int>(arms.size());

  // Matched expert demonstrations, one per seed.
  std::vector<std::optional<EpisodeRecord>> experts(static_cast<std::size_t>(n));
  std::vector<MetricsReport> reports(static_cast<std::size_t>(n) * arms.size());
  std::vector<WorldState> layouts(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> expert_errors(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(reports.size());

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const std::uint64_t seed = settings.seed_base + static_cast<std::uint64_t>(i);
    layouts[i] = reset(config, seed);
    try {
      experts[i] = generate_episode(config, seed, settings.expert_noise);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ExpertFailure && e.code() != ErrorCode::UnreachableLayout) {
        expert_errors[i] = std::current_exception();
      }
    }
  }
  for (const auto& e : expert_errors) {
    if (e) std::rethrow_exception(e);
  }

#pragma omp parallel for schedule(dynamic)
  for (int job = 0; job < n * n_arms; ++job) {
    const int a = job / std::max(n, 1);
    const int i = job % std::max(n, 1);
    const AblationArm& arm = arms[static_cast<std::size_t>(a)];
    const PolicyParameters& model = arm.use_raw_model && raw_params ? *raw_params : params;
    const std::uint64_t seed = settings.seed_base + static_cast<std::uint64_t>(i);
    const std::size_t slot = static_cast<std::size_t>(a) * static_cast<std::size_t>(n) + static_cast<std::size_t>(i);
    try {
      const Rollout r = run_episode(model, config, seed, arm.variant, settings.ensemble);
      MetricsReport m;
      m.grasped = r.outcome.grasped;
      m.placed = r.outcome.placed;
      m.success = r.outcome.success;
      m.steps = r.outcome.steps_used;
      if (experts[i]) {
        const EpisodeRecord& ex = *experts[i];
        m.mse = trajectory_mse(open_loop_actions(model, ex, arm.variant, settings.ensemble), global_actions(ex));
        m.grasp_deviation = grasp_deviation(r, ex);
        m.grasping_latency = grasping_latency(r, ex);
      }
      reports[slot] = m;
    } catch (...) {
      errors[slot] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (int a = 0; a < n_arms; ++a) {
    const auto first = reports.begin() + static_cast<std::ptrdiff_t>(a) * n;
    const std::vector<MetricsReport> arm_reports(first, first + n);
    table.rows.push_back(summarize(arms[static_cast<std::size_t>(a)].label, arm_reports));
    for (int i = 0; i < n; ++i) {
      table.episodes.push_back({arms[static_cast<std::size_t>(a)].label,
                                settings.seed_base + static_cast<std::uint64_t>(i), layouts[i].black_ring_center,
                                arm_reports[static_cast<std::size_t>(i)]});
    }
  }
  return table;
}

std::string ablation_csv(const AblationTable& table) {
  std::ostringstream out;
  out << "variant,episodes,successes,grasped,placed,mean_mse,mean_grasp_deviation_mm,deviation_count,"
         "mean_grasping_latency_frames,latency_count\n";
  for (const AblationRow& r : table.rows) {
    out << r.label << ',' << r.episodes << ',' << r.successes << ',' << r.grasped << ',' << r.placed << ','
        << opt_real(r.mean_mse) << ',' << opt_real(r.mean_deviation) << ',' << r.deviation_count << ','
        << opt_real(r.mean_latency) << ',' << r.latency_count << '\n';
  }
  return out.str();
}

std::string episode_metrics_csv(std::span<const EpisodeMetrics> episodes) {
  std::ostringstream out;
  out << "variant,seed,grasped,placed,success,steps,mse,grasp_deviation_mm,grasping_latency_frames\n";
  for (const EpisodeMetrics& e : episodes) {
    const MetricsReport& m = e.report;
    out << e.label << ',' << e.seed << ',' << m.grasped << ',' << m.placed << ',' << m.success << ',' << m.steps
        << ',' << opt_real(m.mse) << ',' << opt_real(m.grasp_deviation) << ','
        << (m.grasping_latency ? std::to_string(*m.grasping_latency) : std::string()) << '\n';
  }
  return out.str();
}

std::vector<double> min_max_normalize(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
  return out;
}

void normalize_sweep(std::vector<SweepRow>& rows) {
  auto column = [&](double SweepRow::*raw, double SweepRow::*norm) {
    std::vector<double> v;
    for (const SweepRow& r : rows) v.push_back(r.*raw);
    const std::vector<double> n = min_max_normalize(v);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].*norm = n[i];
  };
  column(&SweepRow::mse, &SweepRow::mse_norm);
  column(&SweepRow::deviation, &SweepRow::deviation_norm);
  column(&SweepRow::latency, &SweepRow::latency_norm);
  column(&SweepRow::success_rate, &SweepRow::success_rate_norm);
}

std::vector<SweepRow> chunk_sweep(std::span<const EpisodeRecord> calibrated_episodes, const PolicyConfig& base,
                                  const WorldConfig& config, const SweepSettings& settings,
                                  const TrainProgress& progress) {
  if (settings.chunk_sizes.empty()) throw Error(ErrorCode::InvalidConfig, "chunk sweep needs at least one k");
  const NormStats stats = compute_norm_stats(calibrated_episodes);
  const std::vector<AblationArm> arms{{"full", Variant::Full, false}};
  std::vector<SweepRow> rows;
  for (int k : settings.chunk_sizes) {
    PolicyConfig cfg = base;
    cfg.chunk_size = k;
    const PolicyParameters params = train(calibrated_episodes, stats, cfg, nullptr, progress);
    EnsembleConfig ens = settings.eval.ensemble;
    ens.replan_every = std::min(ens.replan_every, k);
    AblationSettings eval = settings.eval;
    eval.ensemble = ens;
    const AblationTable t = run_ablation(params, nullptr, config, arms, eval);
    const AblationRow& a = t.rows.front();
    SweepRow row;
    row.chunk_size = k;
    row.mse = a.mean_mse.value_or(0.0);
    row.deviation = a.mean_deviation.value_or(0.0);
    row.deviation_count = a.deviation_count;
    row.latency = a.mean_latency.value_or(0.0);
    row.latency_count = a.latency_count;
    row.success_rate = a.episodes > 0 ? static_cast<double>(a.successes) / a.episodes : 0.0;
    rows.push_back(row);
  }
  normalize_sweep(rows);
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "chunk_size,mse,grasp_deviation_mm,grasping_latency_frames,success_rate,deviation_count,latency_count,"
         "mse_norm,grasp_deviation_norm,grasping_latency_norm,success_rate_norm\n";
  for (const SweepRow& r : rows) {
    out << r.chunk_size << ',' << format_real(r.mse) << ',' << format_real(r.deviation) << ','
        << format_real(r.latency) << ',' << format_real(r.success_rate) << ',' << r.deviation_count << ','
        << r.latency_count << ',' << format_real(r.mse_norm) << ',' << format_real(r.deviation_norm) << ','
        << format_real(r.latency_norm) << ',' << format_real(r.success_rate_norm) << '\n';
  }
  return out.str();
}

}  // namespace rcmact
