// Hot paths of the optimizer. Priors are randomly initialized; their weights
// do not change the cost.
#include <benchmark/benchmark.h>

#include "egopose/energy.hpp"
#include "egopose/fisheye.hpp"
#include "egopose/heatmap.hpp"
#include "egopose/pipeline.hpp"
#include "egopose/prior_vae.hpp"
#include "egopose/random.hpp"
#include "egopose/synthbench.hpp"

namespace {

using namespace egopose;

const SyntheticCapture& capture() {
  static const SyntheticCapture cap = [] {
    MotionGenConfig cfg;
    cfg.seed = 3;
    cfg.frame_count = 60;
    cfg.corruption.noise_sigma_mm = 30.0;
    cfg.corruption.occlusion_probability = 0.15;
    cfg.vocabulary = {MotionKind::Walk, MotionKind::Turn};
    return make_capture(cfg);
  }();
  return cap;
}

const PriorModel& prior(Space space) {
  static const auto make = [](Space s, std::uint64_t seed) {
    PriorModel m(VaeArchitecture::pose_default(), s);
    m.network().initialize(seed);
    return m;
  };
  static const PriorModel local = make(Space::Local, 1), world = make(Space::World, 2);
  return space == Space::Local ? local : world;
}

PoseSeq segment() { return capture().dataset.initial.slice(0, 10); }

void BM_Project(benchmark::State& state) {
  const FisheyeCalib calib = synthetic_calibration();
  Rng rng = make_rng(1, "bench");
  std::vector<Eigen::Vector3d> pts(1024);
  for (auto& p : pts) p = {uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, 0.2, 2)};
  for (auto _ : state) {
    for (const auto& p : pts) benchmark::DoNotOptimize(project(p, calib));
  }
  state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_Project);

void BM_ProjectJacobian(benchmark::State& state) {
  const FisheyeCalib calib = synthetic_calibration();
  const Eigen::Vector3d p(0.3, -0.2, 0.9);
  for (auto _ : state) benchmark::DoNotOptimize(project_jacobian(p, calib));
}
BENCHMARK(BM_ProjectJacobian);

void BM_HeatmapSample(benchmark::State& state) {
  const HeatmapStack& hm = capture().dataset.heatmaps[0];
  Rng rng = make_rng(2, "bench");
  std::vector<Eigen::Vector2d> uv(1024);
  for (auto& x : uv) x = {uniform(rng, 0, 640), uniform(rng, 0, 640)};
  for (auto _ : state) {
    for (const auto& x : uv) {
      benchmark::DoNotOptimize(sample(hm.grids[0], x, hm.stride));
      benchmark::DoNotOptimize(sample_gradient(hm.grids[0], x, hm.stride));
    }
  }
  state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_HeatmapSample);

void BM_LocalObjective(benchmark::State& state) {
  const auto& d = capture().dataset;
  const PoseSeq seq = segment();
  const std::span<const HeatmapStack> hm(d.heatmaps.data(), 10);
  for (auto _ : state) {
    benchmark::DoNotOptimize(local_objective(seq, seq, hm, d.calib, EnergyWeights::local_defaults()));
  }
}
BENCHMARK(BM_LocalObjective);

void BM_GlobalObjective(benchmark::State& state) {
  const PoseSeq seq = capture().eval.gt_world.slice(0, 10);
  for (auto _ : state) benchmark::DoNotOptimize(global_objective(seq, seq, EnergyWeights::global_defaults()));
}
BENCHMARK(BM_GlobalObjective);

void BM_Encode(benchmark::State& state) {
  const PriorModel& m = prior(Space::Local);
  const PoseSeq seq = segment();
  for (auto _ : state) benchmark::DoNotOptimize(m.encode(seq));
}
BENCHMARK(BM_Encode);

void BM_DecodeAndVjp(benchmark::State& state) {
  const PriorModel& m = prior(Space::Local);
  const LatentVec z = m.encode(segment()).mu;
  const PoseFrames cot(10, Pose::Ones());
  for (auto _ : state) {
    ConvVae::Tape tape;
    benchmark::DoNotOptimize(m.decode(z, tape));
    benchmark::DoNotOptimize(m.vjp(tape, cot));
  }
}
BENCHMARK(BM_DecodeAndVjp);

void BM_LocalSegment(benchmark::State& state) {
  const auto& d = capture().dataset;
  OptimizationConfig cfg;
  cfg.optimizer.max_iterations = static_cast<int>(state.range(0));
  cfg.optimizer.tolerance = 0.0;
  const PoseSeq init = segment();
  const std::span<const HeatmapStack> hm(d.heatmaps.data(), 10);
  for (auto _ : state) benchmark::DoNotOptimize(optimize_local_segment(init, hm, d.calib, &prior(Space::Local), cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LocalSegment)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_RunCapture(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(run(capture().dataset, &prior(Space::Local), &prior(Space::World), OptimizationConfig{}));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(capture().dataset.frame_count()));
}
BENCHMARK(BM_RunCapture)->Unit(benchmark::kMillisecond)->Iterations(1);

}  // namespace

BENCHMARK_MAIN();
