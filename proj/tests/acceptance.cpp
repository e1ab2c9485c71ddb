// Acceptance gate: one PASS/FAIL line per criterion. Usage:
//   rcmact_acceptance [criterion numbers...]   (default: all)
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "rcmact/calibration.hpp"
#include "rcmact/dataset.hpp"
#include "rcmact/error.hpp"
#include "rcmact/evaluation.hpp"
#include "rcmact/expert.hpp"
#include "rcmact/inference.hpp"
#include "rcmact/policy.hpp"
#include "gradcheck.hpp"
#include "metric_oracle.hpp"
#include "support.hpp"

using namespace rcmact;
using namespace rcmact::testing;

namespace {

// Tolerances and budgets.
constexpr int kExactTrials = 100000;
constexpr double kExactRotTol = 1e-9;
constexpr double kExactTransTol = 1e-9;
constexpr double kExactSeconds = 5.0;
constexpr double kMaxAngle = 30.0 * std::numbers::pi / 180.0;
constexpr double kMaxShift = 5.0;

constexpr int kNoiseTrials = 1000;
constexpr double kNoiseSigma = 0.01;
constexpr double kNoiseOracleMedianMm = 0.009064;  // tests/oracles/calibration_noise_oracle.py
constexpr double kNoiseFactor = 1.5;

constexpr double kGradEps = 1e-5;
constexpr double kGradRelTol = 1e-4;

constexpr int kOverfitSteps = 2000;
constexpr double kOverfitReconTol = 1e-3;
constexpr double kOverfitSeconds = 120.0;
constexpr std::uint64_t kOverfitSeed = 5;

constexpr int kCoreTrainEpisodes = 30;
constexpr int kCoreEvalEpisodes = 20;
constexpr std::uint64_t kCoreEvalSeedBase = 1000;
constexpr double kCoreDeviationRatio = 0.6;
constexpr double kCoreSeconds = 1800.0;

constexpr int kZeroDriftSeeds = 10;
constexpr int kMetricPairs = 1000;
constexpr double kMetricOracleTol = 1e-12;
constexpr double kMetricInvarianceTol = 1e-9;
constexpr double kSweepNormTol = 1e-12;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[1024];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

WorldConfig drift_free() {
  WorldConfig c;
  c.drift_translation_max = 0.0;
  c.drift_rotation_max = 0.0;
  return c;
}

std::vector<EpisodeRecord> calibrate_all(const std::vector<EpisodeRecord>& raw) {
  std::vector<EpisodeRecord> out;
  for (const auto& ep : raw) {
    out.push_back(realign_episode(estimate_transform(ep.fiducial_reference, ep.fiducial_observed), ep));
  }
  return out;
}

std::vector<EpisodeRecord> mark_calibrated(const std::vector<EpisodeRecord>& raw) {
  std::vector<EpisodeRecord> out;
  for (const auto& ep : raw) out.push_back(realign_episode(CalibrationResult{}, ep));
  return out;
}

Verdict calibration_exactness() {
  const FiducialTriad ref = WorldConfig{}.fiducial_reference;
  std::mt19937_64 rng(101);
  std::vector<RigidTransform> truths(kExactTrials);
  std::vector<FiducialTriad> observed(kExactTrials);
  for (int i = 0; i < kExactTrials; ++i) {
    truths[i] = random_transform(rng, kMaxAngle, kMaxShift);
    observed[i] = transformed(ref, truths[i]);
  }
  const auto t0 = Clock::now();
  const auto results = estimate_transforms(ref, observed);
  const double secs = seconds_since(t0);
  double rot = 0.0, trans = 0.0;
  for (int i = 0; i < kExactTrials; ++i) {
    rot = std::max(rot, (results[i].transform.rotation - truths[i].rotation).norm());
    trans = std::max(trans, (results[i].transform.translation - truths[i].translation).norm());
  }
  return {rot < kExactRotTol && trans < kExactTransTol && secs < kExactSeconds,
          fmt("%d motions: max rotation err %.3g (< %.0e), max translation err %.3g mm (< %.0e), %.3f s (< %.0f s)",
              kExactTrials, rot, kExactRotTol, trans, kExactTransTol, secs, kExactSeconds)};
}

Verdict noise_robustness() {
  const FiducialTriad ref = WorldConfig{}.fiducial_reference;
  std::mt19937_64 rng(202);
  std::normal_distribution<double> noise(0.0, kNoiseSigma);
  std::vector<double> errs;
  for (int i = 0; i < kNoiseTrials; ++i) {
    const RigidTransform truth = random_transform(rng, kMaxAngle, kMaxShift);
    FiducialTriad obs = transformed(ref, truth);
    for (int j = 0; j < 3; ++j)
      for (int c = 0; c < 3; ++c) obs[j](c) += noise(rng);
    errs.push_back((estimate_transform(ref, obs).transform.translation - truth.translation).norm());
  }
  std::sort(errs.begin(), errs.end());
  const double median = 0.5 * (errs[kNoiseTrials / 2 - 1] + errs[kNoiseTrials / 2]);
  const double bound = kNoiseFactor * kNoiseOracleMedianMm;
  return {median <= bound, fmt("median translation err %.6f mm over %d trials, bound %.6f mm (1.5 x oracle %.6f)",
                               median, kNoiseTrials, bound, kNoiseOracleMedianMm)};
}

Verdict gradient_correctness() {
  PolicyConfig cfg = tiny_policy_config();
  cfg.seed = 303;
  const PolicyParameters p = init_parameters(cfg, NormStats{});
  std::mt19937_64 rng(304);
  const TrainingBatch b = random_batch(4, 3, rng);
  const GradCheck r = check_gradients(p, b, draw_noise(cfg, 4, rng), kGradEps);
  return {r.max_rel_error < kGradRelTol,
          fmt("k=3 hidden=[8] latent=2 B=4: %zu coordinates, max rel err %.3g (< %.0e, eps %.0e)", r.coordinates,
              r.max_rel_error, kGradRelTol, kGradEps)};
}

Verdict overfit_sanity() {
  const auto t0 = Clock::now();
  const WorldConfig world = drift_free();
  const std::vector<EpisodeRecord> demo = mark_calibrated({generate_episode(world, kOverfitSeed, 0.0)});
  PolicyConfig cfg;
  cfg.chunk_size = 5;
  cfg.hidden_dims = {64, 64};
  cfg.beta = 0.0;
  cfg.dropout = 0.0;
  cfg.lr = 3e-3;
  cfg.epochs = kOverfitSteps;
  cfg.steps_per_epoch = 1;
  const PolicyParameters p = train(demo, compute_norm_stats(demo), cfg);
  const double prior = open_loop_reconstruction(p, demo[0], LatentSource::Prior);
  const double posterior = open_loop_reconstruction(p, demo[0], LatentSource::PosteriorMean);
  const Rollout r = run_episode(p, world, kOverfitSeed, Variant::Full);
  const double secs = seconds_since(t0);
  return {prior < kOverfitReconTol && r.outcome.success && secs < kOverfitSeconds,
          fmt("beta=0, %d steps: open-loop MSE z=0 %.3g (< %.0e; posterior mean %.3g), closed-loop success %s "
              "(place err %.3f mm), %.1f s (< %.0f s)",
              kOverfitSteps, prior, kOverfitReconTol, posterior, r.outcome.success ? "yes" : "no",
              r.outcome.final_error, secs, kOverfitSeconds)};
}

// Training recipe shared by the calibrated and the raw model.
PolicyConfig core_policy_config() {
  PolicyConfig cfg;
  cfg.chunk_size = 5;
  cfg.hidden_dims = {128, 128};
  cfg.beta = 0.5;
  cfg.dropout = 0.0;
  cfg.lr = 3e-3;
  cfg.weight_decay = 0.05;
  cfg.epochs = 455;
  return cfg;
}

struct CoreArtifacts {
  PolicyParameters full;
  bool ready = false;
};

CoreArtifacts g_core;

Verdict core_claim() {
  const auto t0 = Clock::now();
  const WorldConfig world;
  const auto raw = collect_demonstrations(world, kCoreTrainEpisodes, 0, 0.05);
  const auto calibrated = calibrate_all(raw);
  const auto uncalibrated = mark_calibrated(raw);
  const PolicyConfig cfg = core_policy_config();
  const PolicyParameters full = train(calibrated, compute_norm_stats(calibrated), cfg);
  const PolicyParameters act = train(uncalibrated, compute_norm_stats(uncalibrated), cfg);
  g_core.full = full;
  g_core.ready = true;

  AblationSettings s;
  s.episodes = kCoreEvalEpisodes;
  s.seed_base = kCoreEvalSeedBase;
  s.expert_noise = 0.0;
  const auto arms = default_arms();
  const AblationTable table = run_ablation(full, &act, world, arms, s);
  const double secs = seconds_since(t0);

  const AblationRow* f = nullptr;
  const AblationRow* n = nullptr;
  std::string rows;
  for (const auto& row : table.rows) {
    if (row.label == "full") f = &row;
    if (row.label == "act") n = &row;
    rows += fmt("\n      %-12s success %2d/%d grasped %2d mse %.4f deviation %s (n=%d) latency %s", row.label.c_str(),
                row.successes, row.episodes, row.grasped, row.mean_mse.value_or(NAN),
                row.mean_deviation ? fmt("%.3f mm", *row.mean_deviation).c_str() : "undefined",
                row.deviation_count, row.mean_latency ? fmt("%.1f", *row.mean_latency).c_str() : "undefined");
  }
  const bool a = f->successes > n->successes;
  bool b = false;
  std::string dev;
  if (f->mean_deviation && n->mean_deviation) {
    b = *f->mean_deviation <= kCoreDeviationRatio * *n->mean_deviation;
    dev = fmt("%.3f <= %.1f x %.3f", *f->mean_deviation, kCoreDeviationRatio, *n->mean_deviation);
  } else {
    dev = "undefined (an arm never grasped)";
  }
  return {a && b && secs < kCoreSeconds,
          fmt("(a) successes full %d > no_calib %d: %s; (b) deviation %s: %s; %.0f s (< %.0f s)", f->successes,
              n->successes, a ? "yes" : "no", dev.c_str(), b ? "yes" : "no", secs, kCoreSeconds) +
              rows};
}

bool same_rollout(const Rollout& x, const Rollout& y) {
  if (x.states.size() != y.states.size()) return false;
  for (std::size_t t = 0; t < x.states.size(); ++t) {
    if (x.states[t].tip != y.states[t].tip || x.states[t].roll != y.states[t].roll ||
        x.states[t].gripper != y.states[t].gripper || x.states[t].black_ring_center != y.states[t].black_ring_center)
      return false;
  }
  return x.observations == y.observations && x.actions_local == y.actions_local &&
         x.actions_policy == y.actions_policy && x.outcome.final_error == y.outcome.final_error;
}

PolicyParameters quick_policy(int k, std::uint64_t seed) {
  const auto demos = calibrate_all(collect_demonstrations(WorldConfig{}, 5, 0, 0.05));
  PolicyConfig cfg;
  cfg.chunk_size = k;
  cfg.hidden_dims = {64, 64};
  cfg.epochs = 20;
  cfg.lr = 3e-3;
  cfg.seed = seed;
  return train(demos, compute_norm_stats(demos), cfg);
}

Verdict zero_drift_equivalence() {
  const PolicyParameters p = g_core.ready ? g_core.full : quick_policy(5, 606);
  const WorldConfig world = drift_free();
  int identical = 0;
  for (int s = 0; s < kZeroDriftSeeds; ++s) {
    const std::uint64_t seed = 2000 + static_cast<std::uint64_t>(s);
    identical += same_rollout(run_episode(p, world, seed, Variant::Full), run_episode(p, world, seed, Variant::NoCalib));
  }
  return {identical == kZeroDriftSeeds,
          fmt("drift disabled, %s model: %d/%d seeds bitwise identical", g_core.ready ? "core" : "quick", identical,
              kZeroDriftSeeds)};
}

Verdict ensembling_identity() {
  const PolicyParameters p = quick_policy(1, 707);
  const WorldConfig world;
  int identical = 0;
  for (int s = 0; s < kZeroDriftSeeds; ++s) {
    const std::uint64_t seed = 3000 + static_cast<std::uint64_t>(s);
    identical +=
        same_rollout(run_episode(p, world, seed, Variant::Full), run_episode(p, world, seed, Variant::NoEnsemble));
  }
  std::mt19937_64 rng(708);
  std::normal_distribution<double> n(0.0, 5.0);
  int exact = 0, trials = 0;
  for (int i = 0; i < 200; ++i) {
    ActionVector c;
    for (int d = 0; d < kActionDim; ++d) c(d) = n(rng);
    const std::vector<ActionVector> entries(static_cast<std::size_t>(1 + i % 30), c);
    for (WeightSchedule ws : {WeightSchedule::ExpDecay, WeightSchedule::PowDecay}) {
      EnsembleConfig e;
      e.schedule = ws;
      exact += ensemble(entries, e) == c;
      ++trials;
    }
  }
  return {identical == kZeroDriftSeeds && exact == trials,
          fmt("k=1 full vs no_ensemble: %d/%d seeds bitwise identical; constant buffers exact: %d/%d", identical,
              kZeroDriftSeeds, exact, trials)};
}

Verdict metric_oracles() {
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::uniform_int_distribution<int> len(1, 250), frame(0, 250);
  double oracle_err = 0.0, invariance_err = 0.0;
  for (int i = 0; i < kMetricPairs; ++i) {
    const ActionMatrix x = random_trajectory(rng, len(rng));
    const ActionMatrix y = random_trajectory(rng, len(rng));
    const GraspEvent a{frame(rng), Vec3(u(rng), u(rng), u(rng))};
    const GraspEvent b{frame(rng), Vec3(u(rng), u(rng), u(rng))};
    const double mse = trajectory_mse(x, y);
    const double dev = *grasp_deviation(a, b);
    const int lat = *grasping_latency(a, b);
    oracle_err = std::max({oracle_err, std::abs(mse - brute_mse(x, y)),
                           std::abs(dev - brute_distance(a.position, b.position)),
                           static_cast<double>(std::abs(lat - std::abs(a.frame - b.frame)))});

    const RigidTransform t = random_transform(rng, std::numbers::pi, 10.0);
    const GraspEvent ta{a.frame, apply(t, a.position)}, tb{b.frame, apply(t, b.position)};
    invariance_err = std::max({invariance_err,
                               std::abs(trajectory_mse(transform_actions(x, t), transform_actions(y, t)) - mse),
                               std::abs(*grasp_deviation(ta, tb) - dev),
                               static_cast<double>(std::abs(*grasping_latency(ta, tb) - lat))});
  }
  return {oracle_err <= kMetricOracleTol && invariance_err <= kMetricInvarianceTol,
          fmt("%d random pairs: max oracle err %.3g (<= %.0e), max invariance err %.3g (<= %.0e)", kMetricPairs,
              oracle_err, kMetricOracleTol, invariance_err, kMetricInvarianceTol)};
}

Verdict format_stability() {
  int round_trips = 0, total_round_trips = 0;
  std::vector<std::string> arng;
  const WorldConfig world;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const EpisodeRecord raw = generate_episode(world, seed, 0.05);
    for (const EpisodeRecord& ep : {raw, calibrate_all({raw})[0]}) {
      const std::string bytes = serialize_episode(ep);
      round_trips += serialize_episode(parse_episode(bytes)) == bytes;
      ++total_round_trips;
      arng.push_back(bytes);
    }
  }
  std::vector<std::string> arnm;
  for (int k : {1, 3, 90}) {
    PolicyConfig cfg;
    cfg.chunk_size = k;
    cfg.hidden_dims = {16, 8};
    cfg.seed = static_cast<std::uint64_t>(k);
    const std::string bytes = serialize_model(init_parameters(cfg, NormStats{}));
    round_trips += serialize_model(parse_model(bytes)) == bytes;
    ++total_round_trips;
    arnm.push_back(bytes);
  }

  auto fuzz = [](const std::string& bytes, auto parse, int& good, int& total) {
    std::vector<std::pair<std::string, ErrorCode>> cases;
    std::string magic = bytes;
    magic[2] ^= 0x20;
    cases.emplace_back(magic, ErrorCode::CorruptHeader);
    std::string version = bytes;
    version[4] = 7;
    cases.emplace_back(version, ErrorCode::FormatVersionMismatch);
    for (std::size_t n = 0; n < bytes.size(); ++n) cases.emplace_back(bytes.substr(0, n), ErrorCode::TruncatedPayload);
    for (const auto& [c, want] : cases) {
      ++total;
      try {
        parse(c);
      } catch (const Error& e) {
        good += e.code() == want;
      }
    }
  };
  int good = 0, total = 0;
  fuzz(arng[0], [](const std::string& b) { return parse_episode(b); }, good, total);
  fuzz(arnm[1], [](const std::string& b) { return parse_model(b); }, good, total);

  return {round_trips == total_round_trips && good == total,
          fmt("byte-exact round trips %d/%d; corrupted-header and truncation cases rejected with the expected "
              "error %d/%d",
              round_trips, total_round_trips, good, total)};
}

Verdict sweep_harness() {
  const auto demos = calibrate_all(collect_demonstrations(WorldConfig{}, 10, 0, 0.05));
  PolicyConfig base;
  base.hidden_dims = {64, 64};
  base.lr = 3e-3;
  base.epochs = 40;
  SweepSettings s;
  s.chunk_sizes = {10, 30, 60, 90, 120};
  s.eval.episodes = 10;
  s.eval.seed_base = 1000;
  const auto rows = chunk_sweep(demos, base, WorldConfig{}, s);

  bool finite = rows.size() == s.chunk_sizes.size();
  std::vector<double> mse, dev, lat, suc;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const SweepRow& r = rows[i];
    finite = finite && r.chunk_size == s.chunk_sizes[i];
    for (double v : {r.mse, r.deviation, r.latency, r.success_rate, r.mse_norm, r.deviation_norm, r.latency_norm,
                     r.success_rate_norm})
      finite = finite && std::isfinite(v);
    mse.push_back(r.mse);
    dev.push_back(r.deviation);
    lat.push_back(r.latency);
    suc.push_back(r.success_rate);
  }
  const auto nm = brute_min_max(mse), nd = brute_min_max(dev), nl = brute_min_max(lat), ns = brute_min_max(suc);
  double err = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    err = std::max({err, std::abs(rows[i].mse_norm - nm[i]), std::abs(rows[i].deviation_norm - nd[i]),
                    std::abs(rows[i].latency_norm - nl[i]), std::abs(rows[i].success_rate_norm - ns[i])});
  }
  std::string table;
  for (const auto& r : rows) {
    table += fmt("\n      k=%-3d mse %.4f deviation %.3f (n=%d) latency %.1f (n=%d) success %.2f", r.chunk_size, r.mse,
                 r.deviation, r.deviation_count, r.latency, r.latency_count, r.success_rate);
  }
  return {finite && err <= kSweepNormTol,
          fmt("%zu rows, all finite: %s; max normalized-column err %.3g (<= %.0e)", rows.size(),
              finite ? "yes" : "no", err, kSweepNormTol) +
              table};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"calibration exactness", calibration_exactness},
      {"noise robustness", noise_robustness},
      {"gradient correctness", gradient_correctness},
      {"overfit sanity", overfit_sanity},
      {"core claim: full vs no_calib", core_claim},
      {"zero-drift equivalence", zero_drift_equivalence},
      {"ensembling identity", ensembling_identity},
      {"metric oracles", metric_oracles},
      {"format stability", format_stability},
      {"sweep harness", sweep_harness},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("%s  %2d  %-30s %s\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
