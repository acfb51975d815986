// Serial reference vs OpenMP for the batched numeric kernels.

#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "toc/reward.hpp"
#include "toc/segmentation.hpp"

using namespace toc;

namespace {

std::vector<std::vector<double>> reward_groups(int n_groups, int g) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<double>> out(n_groups, std::vector<double>(g));
  for (auto& grp : out)
    for (double& r : grp) r = u(rng) < 0.5 ? 0.0 : u(rng);
  return out;
}

std::vector<reward::GroupInput> objective_groups(int n_groups, int g, int tokens) {
  std::mt19937 rng(2);
  std::normal_distribution<double> n(-1.0, 0.3);
  std::vector<reward::GroupInput> out(n_groups);
  for (auto& in : out)
    for (int i = 0; i < g; ++i) {
      std::vector<double> cur(tokens), old(tokens), ref(tokens);
      for (int t = 0; t < tokens; ++t) {
        cur[t] = n(rng);
        old[t] = cur[t] + 0.05 * n(rng);
        ref[t] = cur[t] + 0.05 * n(rng);
      }
      in.logprobs.current.push_back(cur);
      in.logprobs.old.push_back(old);
      in.logprobs.ref.push_back(ref);
      in.advantages.push_back(n(rng) + 1.0);
    }
  return out;
}

std::vector<segmentation::ShotBoundarySet> videos(int n_videos, int shots, int dim) {
  std::mt19937 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<segmentation::ShotBoundarySet> out(n_videos);
  for (int v = 0; v < n_videos; ++v) {
    auto& s = out[v];
    s.video_id = "v" + std::to_string(v);
    s.boundaries_s = {0.0};
    std::vector<double> base(dim);
    for (double& x : base) x = n(rng);
    for (int k = 0; k < shots; ++k) {
      s.boundaries_s.push_back(s.boundaries_s.back() + 1.0 + (rng() % 50) / 10.0);
      std::vector<double> e(dim);
      for (int d = 0; d < dim; ++d) e[d] = base[d] + 0.8 * n(rng);
      s.embeddings.push_back(e);
    }
  }
  return out;
}

void BM_NormalizeSerial(benchmark::State& state) {
  const auto groups = reward_groups(static_cast<int>(state.range(0)), 8);
  for (auto _ : state) benchmark::DoNotOptimize(reward::normalize_advantages_batch_serial(groups));
}

void BM_NormalizeOmp(benchmark::State& state) {
  const auto groups = reward_groups(static_cast<int>(state.range(0)), 8);
  for (auto _ : state) benchmark::DoNotOptimize(reward::normalize_advantages_batch(groups));
}

void BM_ObjectiveSerial(benchmark::State& state) {
  const auto groups = objective_groups(static_cast<int>(state.range(0)), 8, 256);
  for (auto _ : state) benchmark::DoNotOptimize(reward::grpo_objective_serial(groups, {0.2, 0.04}));
}

void BM_ObjectiveOmp(benchmark::State& state) {
  const auto groups = objective_groups(static_cast<int>(state.range(0)), 8, 256);
  for (auto _ : state) benchmark::DoNotOptimize(reward::grpo_objective(groups, {0.2, 0.04}));
}

void BM_StitchSerial(benchmark::State& state) {
  const auto vs = videos(static_cast<int>(state.range(0)), 200, 64);
  for (auto _ : state) benchmark::DoNotOptimize(segmentation::stitch_all_serial(vs));
}

void BM_StitchOmp(benchmark::State& state) {
  const auto vs = videos(static_cast<int>(state.range(0)), 200, 64);
  for (auto _ : state) benchmark::DoNotOptimize(segmentation::stitch_all(vs));
}

}  // namespace

BENCHMARK(BM_NormalizeSerial)->Arg(1 << 10)->Arg(1 << 14);
BENCHMARK(BM_NormalizeOmp)->Arg(1 << 10)->Arg(1 << 14);
BENCHMARK(BM_ObjectiveSerial)->Arg(64)->Arg(512);
BENCHMARK(BM_ObjectiveOmp)->Arg(64)->Arg(512);
BENCHMARK(BM_StitchSerial)->Arg(16)->Arg(128);
BENCHMARK(BM_StitchOmp)->Arg(16)->Arg(128);

BENCHMARK_MAIN();
