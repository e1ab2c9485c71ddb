#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <omp.h>

#include "CLI11.hpp"
#include "rcmact/calibration.hpp"
#include "rcmact/config.hpp"
#include "rcmact/dataset.hpp"
#include "rcmact/error.hpp"
#include "rcmact/evaluation.hpp"
#include "rcmact/expert.hpp"
#include "rcmact/inference.hpp"
#include "rcmact/policy.hpp"
#include "rcmact/text_format.hpp"

namespace fs = std::filesystem;
using namespace rcmact;

namespace {

bool g_quiet = false;

void log(const std::string& line) {
  if (!g_quiet) std::cerr << line << '\n';
}

void apply_thread_cap() {
  const char* env = std::getenv("RCMACT_THREADS");
  if (!env || !*env) return;
  const long long n = parse_int(env);
  if (n < 0) throw Error(ErrorCode::InvalidConfig, "RCMACT_THREADS must be >= 0");
  if (n > 0) omp_set_num_threads(static_cast<int>(n));
}

std::string rollout_stem(std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "rollout_%06llu", static_cast<unsigned long long>(seed));
  return buf;
}

FiducialTriad read_triad(const fs::path& path) {
  FiducialTriad t;
  std::istringstream in(read_file(path));
  int n = 0;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> v = parse_reals(line);
    if (v.size() != 3 || n >= 3) throw Error(ErrorCode::CorruptHeader, path.string() + ": expected 3 lines of x,y,z");
    t[n++] = Vec3(v[0], v[1], v[2]);
  }
  if (n != 3) throw Error(ErrorCode::CorruptHeader, path.string() + ": expected 3 lines of x,y,z");
  return t;
}

TaskOutcome read_outcome(const fs::path& path) {
  const KeyValues kv = parse_key_values(read_file(path), ErrorCode::CorruptHeader);
  TaskOutcome o;
  o.grasped = parse_int(require_key(kv, "grasped")) != 0;
  o.placed = parse_int(require_key(kv, "placed")) != 0;
  o.success = parse_int(require_key(kv, "success")) != 0;
  const long long gf = parse_int(require_key(kv, "grasp_frame"));
  if (gf >= 0) o.grasp_frame = static_cast<int>(gf);
  o.final_error = parse_real(require_key(kv, "final_error_mm"));
  o.steps_used = static_cast<int>(parse_int(require_key(kv, "steps_used")));
  return o;
}

struct Options {
  std::string config_path;
  std::vector<std::string> settings;

  // collect
  int episodes = 30;
  std::uint64_t seed = 0;
  std::string out;
  double drift_max = NAN;
  double drift_rot_deg = NAN;
  double expert_noise = NAN;
  // calibrate-data
  std::string in;
  bool identity = false;
  // train
  std::string data;
  int chunk = 0;
  double beta = NAN;
  int epochs = 0;
  double lr = NAN;
  long long train_seed = -1;
  // rollout / ablate
  std::string model;
  std::string raw_model;
  std::string variant = "full";
  std::string report;
  std::string episodes_report;
  double eval_expert_noise = 0.0;
  // eval
  std::string rollouts;
  std::string experts;
  // sweep
  std::vector<int> chunks;
  // calibrate
  std::string ref;
  std::string obs;
};

PipelineConfig resolve_config(const Options& o) {
  PipelineConfig cfg;
  if (!o.config_path.empty()) cfg = load_config(o.config_path);
  for (const std::string& s : o.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value, got '" + s + "'");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (!std::isnan(o.drift_max)) cfg.world.drift_translation_max = o.drift_max;
  if (!std::isnan(o.drift_rot_deg)) cfg.world.drift_rotation_max = o.drift_rot_deg * std::numbers::pi / 180.0;
  if (!std::isnan(o.expert_noise)) cfg.expert_noise = o.expert_noise;
  if (o.chunk > 0) cfg.policy.chunk_size = o.chunk;
  if (!std::isnan(o.beta)) cfg.policy.beta = o.beta;
  if (o.epochs > 0) cfg.policy.epochs = o.epochs;
  if (!std::isnan(o.lr)) cfg.policy.lr = o.lr;
  if (o.train_seed >= 0) cfg.policy.seed = static_cast<std::uint64_t>(o.train_seed);
  cfg.world.validate();
  cfg.policy.validate();
  cfg.ensemble.validate();
  return cfg;
}

int cmd_collect(const Options& o) {
  const PipelineConfig cfg = resolve_config(o);
  log("collect: " + std::to_string(o.episodes) + " episodes from seed " + std::to_string(o.seed));
  const auto eps = collect_demonstrations(cfg.world, o.episodes, o.seed, cfg.expert_noise);
  write_dataset(o.out, eps, std::nullopt);
  log("collect: wrote " + o.out);
  return 0;
}

int cmd_calibrate_data(const Options& o) {
  DatasetManifest manifest;
  std::vector<EpisodeRecord> eps = read_dataset(o.in, &manifest);
  if (manifest.calibrated) throw Error(ErrorCode::AlreadyCalibrated, o.in + " is already calibrated");
  double worst = 0.0;
  for (EpisodeRecord& ep : eps) {
    CalibrationResult cal;
    if (!o.identity) cal = estimate_transform(ep.fiducial_reference, ep.fiducial_observed);
    worst = std::max(worst, cal.residual);
    ep = realign_episode(cal, ep);
  }
  const NormStats stats = compute_norm_stats(eps);
  write_dataset(o.out, eps, stats);
  log("calibrate-data: " + std::to_string(eps.size()) + " episodes" + (o.identity ? " (identity)" : "") +
      ", max fiducial residual " + format_real(worst) + " mm");
  return 0;
}

int cmd_train(const Options& o) {
  const PipelineConfig cfg = resolve_config(o);
  DatasetManifest manifest;
  const std::vector<EpisodeRecord> eps = read_dataset(o.data, &manifest);
  if (!manifest.calibrated || !manifest.stats) {
    throw Error(ErrorCode::UncalibratedEpisode, o.data + " has not been through calibrate-data");
  }
  std::vector<TrainLogEntry> history;
  const PolicyParameters params = train(eps, *manifest.stats, cfg.policy, &history, [](const TrainLogEntry& e) {
    if (e.epoch % 50 == 0) log("epoch " + std::to_string(e.epoch) + " loss " + format_real(e.loss));
  });
  save_model(params, o.out);
  std::ostringstream csv;
  csv << "epoch,loss\n";
  for (const TrainLogEntry& e : history) csv << e.epoch << ',' << format_real(e.loss) << '\n';
  write_file(o.out + ".loss.csv", csv.str());
  log("train: wrote " + o.out);
  return 0;
}

int cmd_rollout(const Options& o) {
  const PipelineConfig cfg = resolve_config(o);
  const PolicyParameters params = load_model(o.model);
  const Variant v = parse_variant(o.variant);
  const auto rollouts = run_episodes(params, cfg.world, o.seed, o.episodes, v, cfg.ensemble);
  fs::create_directories(o.out);
  int successes = 0;
  for (const Rollout& r : rollouts) {
    const std::string stem = rollout_stem(r.seed);
    write_episode(rollout_record(r, cfg.world), fs::path(o.out) / (stem + ".arng"));
    write_file(fs::path(o.out) / (stem + ".txt"), rollout_sidecar(r));
    successes += r.outcome.success;
  }
  log("rollout: " + std::to_string(successes) + "/" + std::to_string(rollouts.size()) + " successful");
  return 0;
}

int cmd_eval(const Options& o) {
  std::map<std::uint64_t, EpisodeRecord> experts;
  for (EpisodeRecord& ep : read_dataset(o.experts)) experts.emplace(ep.seed, std::move(ep));
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(o.rollouts)) {
    if (entry.path().extension() == ".arng") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<EpisodeMetrics> rows;
  for (const fs::path& f : files) {
    const EpisodeRecord r = read_episode(f);
    const auto it = experts.find(r.seed);
    if (it == experts.end()) {
      log("eval: no expert episode for seed " + std::to_string(r.seed) + ", skipped");
      continue;
    }
    const TaskOutcome outcome = read_outcome(fs::path(f).replace_extension(".txt"));
    bool truncated = false;
    if (r.length() > 0 && it->second.length() > 0) {
      trajectory_mse(global_actions(r), global_actions(it->second), &truncated);
    }
    if (truncated) log("eval: seed " + std::to_string(r.seed) + " trajectories differ in length, truncated");
    rows.push_back({f.stem().string(), r.seed, Vec3::Zero(), evaluate(r, outcome, it->second)});
  }
  write_file(o.report, episode_metrics_csv(rows));
  std::vector<MetricsReport> reports;
  for (const auto& r : rows) reports.push_back(r.report);
  const AblationRow s = summarize("all", reports);
  log("eval: " + std::to_string(s.successes) + "/" + std::to_string(s.episodes) + " successful");
  return 0;
}

int cmd_ablate(const Options& o) {
  const PipelineConfig cfg = resolve_config(o);
  const PolicyParameters params = load_model(o.model);
  std::optional<PolicyParameters> raw;
  if (!o.raw_model.empty()) raw = load_model(o.raw_model);
  AblationSettings s;
  s.episodes = o.episodes;
  s.seed_base = o.seed;
  s.expert_noise = o.eval_expert_noise;
  s.ensemble = cfg.ensemble;
  const std::vector<AblationArm> arms = default_arms();
  const AblationTable table = run_ablation(params, raw ? &*raw : nullptr, cfg.world, arms, s);
  write_file(o.report, ablation_csv(table));
  if (!o.episodes_report.empty()) write_file(o.episodes_report, episode_metrics_csv(table.episodes));
  for (const AblationRow& r : table.rows) {
    log("ablate: " + r.label + " success " + std::to_string(r.successes) + "/" + std::to_string(r.episodes) +
        " deviation " + (r.mean_deviation ? format_real(*r.mean_deviation) : std::string("n/a")));
  }
  return 0;
}

int cmd_sweep(const Options& o) {
  const PipelineConfig cfg = resolve_config(o);
  DatasetManifest manifest;
  const std::vector<EpisodeRecord> eps = read_dataset(o.data, &manifest);
  if (!manifest.calibrated) throw Error(ErrorCode::UncalibratedEpisode, o.data + " has not been through calibrate-data");
  SweepSettings s;
  s.chunk_sizes = o.chunks;
  s.eval.episodes = o.episodes;
  s.eval.seed_base = o.seed;
  s.eval.expert_noise = o.eval_expert_noise;
  s.eval.ensemble = cfg.ensemble;
  const auto rows = chunk_sweep(eps, cfg.policy, cfg.world, s);
  write_file(o.report, sweep_csv(rows));
  log("sweep: " + std::to_string(rows.size()) + " rows");
  return 0;
}

int cmd_calibrate(const Options& o) {
  const CalibrationResult r = estimate_transform(read_triad(o.ref), read_triad(o.obs));
  const Eigen::Matrix<double, 3, 3, Eigen::RowMajor> rot = r.transform.rotation;
  KeyValues kv;
  kv["rotation"] = format_reals(std::span<const double>(rot.data(), 9));
  kv["translation"] = format_reals(std::span<const double>(r.transform.translation.data(), 3));
  kv["residual_mm"] = format_real(r.residual);
  kv["conditioning"] = format_real(r.conditioning);
  std::cout << format_key_values(kv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Drift-calibrated action-chunking pipeline for ring grasp-and-place"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config_path, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--set", o.settings, "Config override key=value (repeatable)");
  app.add_flag("--quiet", g_quiet, "Suppress progress logging");

  auto* collect = app.add_subcommand("collect", "Record scripted-expert demonstrations");
  collect->add_option("--episodes", o.episodes)->required();
  collect->add_option("--seed", o.seed)->required();
  collect->add_option("--out", o.out)->required();
  collect->add_option("--drift-max", o.drift_max, "Max drift translation (mm)");
  collect->add_option("--drift-rot-deg", o.drift_rot_deg, "Max drift rotation (degrees)");
  collect->add_option("--expert-noise", o.expert_noise, "Waypoint jitter (mm)");

  auto* caldata = app.add_subcommand("calibrate-data", "Realign a raw dataset to the global frame");
  caldata->add_option("--in", o.in)->required();
  caldata->add_option("--out", o.out)->required();
  caldata->add_flag("--identity", o.identity, "Mark as calibrated without realigning");

  auto* trn = app.add_subcommand("train", "Train the CVAE chunking policy");
  trn->add_option("--data", o.data)->required();
  trn->add_option("--out", o.out)->required();
  trn->add_option("--chunk", o.chunk);
  trn->add_option("--beta", o.beta);
  trn->add_option("--epochs", o.epochs);
  trn->add_option("--lr", o.lr);
  trn->add_option("--seed", o.train_seed);

  auto* roll = app.add_subcommand("rollout", "Closed-loop rollouts");
  roll->add_option("--model", o.model)->required();
  roll->add_option("--episodes", o.episodes)->required();
  roll->add_option("--seed", o.seed)->required();
  roll->add_option("--variant", o.variant)->check(CLI::IsMember({"full", "no_calib", "no_ensemble", "posterior_z"}));
  roll->add_option("--out", o.out)->required();

  auto* ev = app.add_subcommand("eval", "Score stored rollouts against matched expert episodes");
  ev->add_option("--rollouts", o.rollouts)->required();
  ev->add_option("--experts", o.experts)->required();
  ev->add_option("--report", o.report)->required();

  auto* abl = app.add_subcommand("ablate", "Four-variant matched-seed ablation");
  abl->add_option("--model", o.model)->required();
  abl->add_option("--raw-model", o.raw_model, "Model trained on uncalibrated data, used by the act arm");
  abl->add_option("--episodes", o.episodes)->required();
  abl->add_option("--seed", o.seed, "First evaluation seed");
  abl->add_option("--report", o.report)->required();
  abl->add_option("--episodes-report", o.episodes_report, "Per-episode CSV");
  abl->add_option("--expert-noise", o.eval_expert_noise, "Jitter of the matched reference experts (mm)");

  auto* sw = app.add_subcommand("sweep", "Chunk-size sweep");
  sw->add_option("--data", o.data)->required();
  sw->add_option("--chunks", o.chunks)->required()->delimiter(',');
  sw->add_option("--episodes", o.episodes, "Evaluation episodes per k");
  sw->add_option("--seed", o.seed, "First evaluation seed");
  sw->add_option("--report", o.report)->required();
  sw->add_option("--expert-noise", o.eval_expert_noise, "Jitter of the matched reference experts (mm)");

  auto* cal = app.add_subcommand("calibrate", "Estimate one rigid transform from two triads");
  cal->add_option("--ref", o.ref)->required()->check(CLI::ExistingFile);
  cal->add_option("--obs", o.obs)->required()->check(CLI::ExistingFile);

  if (argc <= 1) {
    std::cerr << app.help();
    return 1;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    apply_thread_cap();
    if (*collect) return cmd_collect(o);
    if (*caldata) return cmd_calibrate_data(o);
    if (*trn) return cmd_train(o);
    if (*roll) return cmd_rollout(o);
    if (*ev) return cmd_eval(o);
    if (*abl) return cmd_ablate(o);
    if (*sw) return cmd_sweep(o);
    if (*cal) return cmd_calibrate(o);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
