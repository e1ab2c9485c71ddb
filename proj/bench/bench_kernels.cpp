#include <benchmark/benchmark.h>

#include <random>

#include "rcmact/calibration.hpp"
#include "rcmact/expert.hpp"
#include "rcmact/inference.hpp"
#include "rcmact/policy.hpp"

using namespace rcmact;

namespace {

TrainingBatch random_batch(const PolicyConfig& cfg, int b, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  TrainingBatch batch = make_batch(b, cfg.chunk_size);
  for (int r = 0; r < b; ++r) {
    for (int j = 0; j < batch.observations.cols(); ++j) batch.observations(r, j) = n(rng);
    for (int j = 0; j < batch.action_chunks.cols(); ++j) batch.action_chunks(r, j) = n(rng);
  }
  batch.chunk_mask.setOnes();
  return batch;
}

PolicyConfig bench_policy(int k) {
  PolicyConfig cfg;
  cfg.chunk_size = k;
  cfg.hidden_dims = {128, 128};
  return cfg;
}

void BM_LossAndGradsReference(benchmark::State& state) {
  const PolicyConfig cfg = bench_policy(static_cast<int>(state.range(0)));
  const PolicyParameters p = init_parameters(cfg, NormStats{});
  std::mt19937_64 rng(1);
  const TrainingBatch batch = random_batch(cfg, 32, rng);
  const TrainingNoise noise = draw_noise(cfg, 32, rng);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grads_reference(p, batch, noise));
}

void BM_LossAndGradsSharded(benchmark::State& state) {
  const PolicyConfig cfg = bench_policy(static_cast<int>(state.range(0)));
  const PolicyParameters p = init_parameters(cfg, NormStats{});
  std::mt19937_64 rng(1);
  const TrainingBatch batch = random_batch(cfg, 32, rng);
  const TrainingNoise noise = draw_noise(cfg, 32, rng);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grads(p, batch, noise));
}

std::vector<FiducialTriad> random_triads(int n) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  const FiducialTriad ref = WorldConfig{}.fiducial_reference;
  std::vector<FiducialTriad> out;
  for (int i = 0; i < n; ++i) {
    RigidTransform t;
    t.rotation = rotation_from_axis_angle(Vec3(g(rng), g(rng), g(rng)), 0.3 * g(rng));
    t.translation = Vec3(g(rng), g(rng), g(rng));
    FiducialTriad f;
    for (int j = 0; j < 3; ++j) f[j] = apply(t, ref[j]);
    out.push_back(f);
  }
  return out;
}

void BM_CalibrationSerial(benchmark::State& state) {
  const auto triads = random_triads(static_cast<int>(state.range(0)));
  const FiducialTriad ref = WorldConfig{}.fiducial_reference;
  for (auto _ : state) benchmark::DoNotOptimize(estimate_transforms_serial(ref, triads));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_CalibrationParallel(benchmark::State& state) {
  const auto triads = random_triads(static_cast<int>(state.range(0)));
  const FiducialTriad ref = WorldConfig{}.fiducial_reference;
  for (auto _ : state) benchmark::DoNotOptimize(estimate_transforms(ref, triads));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

PolicyParameters rollout_policy() {
  const WorldConfig world;
  std::vector<EpisodeRecord> demos;
  for (const auto& ep : collect_demonstrations(world, 3, 0, 0.0)) {
    demos.push_back(realign_episode(estimate_transform(ep.fiducial_reference, ep.fiducial_observed), ep));
  }
  return init_parameters(bench_policy(10), compute_norm_stats(demos));
}

void BM_RolloutsSerial(benchmark::State& state) {
  const PolicyParameters p = rollout_policy();
  const WorldConfig world;
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    for (int i = 0; i < n; ++i) benchmark::DoNotOptimize(run_episode(p, world, 100 + i, Variant::Full));
  }
}

void BM_RolloutsParallel(benchmark::State& state) {
  const PolicyParameters p = rollout_policy();
  const WorldConfig world;
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_episodes(p, world, 100, n, Variant::Full));
}

}  // namespace

BENCHMARK(BM_LossAndGradsReference)->Arg(10)->Arg(90)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_LossAndGradsSharded)->Arg(10)->Arg(90)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_CalibrationSerial)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CalibrationParallel)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RolloutsSerial)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RolloutsParallel)->Arg(8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
