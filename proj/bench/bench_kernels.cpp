// Serial reference vs parallel kernels.
#include <benchmark/benchmark.h>

#include <random>

#include "gleason/s6.hpp"
#include "gleason/ss2d.hpp"

namespace {

using namespace gleason;

struct ScanInput {
  s6::DiscretizedStep step;
  Tensor C, D, x;
};

ScanInput make_input(std::size_t l, std::size_t d, std::size_t n) {
  std::mt19937_64 rng(7);
  ScanInput in;
  Tensor A = Tensor::uniform({d, n}, rng, -2.0, -0.1);
  Tensor B = Tensor::randn({l, n}, rng);
  Tensor delta = Tensor::uniform({l, d}, rng, 0.01, 0.5);
  in.step = s6::discretize(A, B, delta);
  in.C = Tensor::randn({l, n}, rng);
  in.D = Tensor::randn({d}, rng);
  in.x = Tensor::randn({l, d}, rng);
  return in;
}

void BM_ScanSequential(benchmark::State& state) {
  const auto in = make_input(static_cast<std::size_t>(state.range(0)), 8, 16);
  for (auto _ : state) benchmark::DoNotOptimize(s6::scan_sequential(in.step, in.C, in.D, in.x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ScanParallel(benchmark::State& state) {
  const auto in = make_input(static_cast<std::size_t>(state.range(0)), 8, 16);
  for (auto _ : state) benchmark::DoNotOptimize(s6::scan_parallel(in.step, in.C, in.D, in.x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_SS2D(benchmark::State& state, s6::ScanMode mode) {
  std::mt19937_64 rng(3);
  const std::size_t hw = static_cast<std::size_t>(state.range(0));
  const auto params = ss2d::Params::init(16, 8, rng);
  const Tensor fmap = Tensor::randn({4, 16, hw, hw}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ss2d::forward(fmap, params, mode));
}

}  // namespace

BENCHMARK(BM_ScanSequential)->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK(BM_ScanParallel)->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK_CAPTURE(BM_SS2D, sequential, gleason::s6::ScanMode::sequential)->Arg(8)->Arg(16);
BENCHMARK_CAPTURE(BM_SS2D, parallel, gleason::s6::ScanMode::parallel)->Arg(8)->Arg(16);

BENCHMARK_MAIN();
