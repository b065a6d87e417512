// Serial reference vs OpenMP production kernels.
//   bench_kernels --benchmark_filter=Conv
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "skelpose/kernels.hpp"
#include "skelpose/renderer.hpp"
#include "skelpose/skeleton.hpp"
#include "support.hpp"

using namespace skelpose;
namespace k = skelpose::kernels;

namespace {

// Regressor-like layer: batch 16, 16 -> 32 channels, 3x3, on a 32x32 canvas.
struct ConvFixture {
  k::ConvGeometry g = k::make_conv_geometry(16, 16, 32, 32, 32, 3, 1, 1);
  std::vector<double> x, w, b, y, gy, gx, gw, gb;
  ConvFixture() {
    std::mt19937_64 rng(1);
    x = testing::random_values(rng, g.input_size());
    w = testing::random_values(rng, g.weight_size());
    b = testing::random_values(rng, g.out_channels);
    y.assign(g.output_size(), 0.0);
    gy = testing::random_values(rng, g.output_size());
    gx.assign(g.input_size(), 0.0);
    gw.assign(g.weight_size(), 0.0);
    gb.assign(g.out_channels, 0.0);
  }
  double flops() const { return 2.0 * g.output_size() * g.in_channels * g.kernel * g.kernel; }
};

template <auto Fn>
void ConvForward(benchmark::State& state) {
  ConvFixture f;
  for (auto _ : state) {
    Fn(f.g, f.x, f.w, f.b, f.y);
    benchmark::DoNotOptimize(f.y.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(f.flops() * state.iterations() / 1e9, benchmark::Counter::kIsRate);
}

template <auto Fn>
void ConvBackwardInput(benchmark::State& state) {
  ConvFixture f;
  for (auto _ : state) {
    Fn(f.g, f.gy, f.w, f.gx);
    benchmark::DoNotOptimize(f.gx.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(f.flops() * state.iterations() / 1e9, benchmark::Counter::kIsRate);
}

template <auto Fn>
void ConvBackwardWeight(benchmark::State& state) {
  ConvFixture f;
  for (auto _ : state) {
    Fn(f.g, f.x, f.gy, f.gw, f.gb);
    benchmark::DoNotOptimize(f.gw.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(f.flops() * state.iterations() / 1e9, benchmark::Counter::kIsRate);
}

template <bool Production>
void Rasterize(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const MapConfig cfg{1.0, 10, static_cast<int>(state.range(0))};
  const auto sticks = testing::random_scene(rng, cfg.canvas_size);
  const auto& palette = standard_model().bone_colors;
  for (auto _ : state) {
    auto maps = Production ? rasterize(sticks, palette, cfg) : rasterize_reference(sticks, palette, cfg);
    benchmark::DoNotOptimize(maps.fore.data());
  }
}

}  // namespace

BENCHMARK(ConvForward<k::reference::conv2d_forward>)->Name("ConvForward/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(ConvForward<k::conv2d_forward>)->Name("ConvForward/openmp")->Unit(benchmark::kMillisecond);
BENCHMARK(ConvBackwardInput<k::reference::conv2d_backward_input>)->Name("ConvBackwardInput/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(ConvBackwardInput<k::conv2d_backward_input>)->Name("ConvBackwardInput/openmp")->Unit(benchmark::kMillisecond);
BENCHMARK(ConvBackwardWeight<k::reference::conv2d_backward_weight>)->Name("ConvBackwardWeight/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(ConvBackwardWeight<k::conv2d_backward_weight>)->Name("ConvBackwardWeight/openmp")->Unit(benchmark::kMillisecond);
BENCHMARK(Rasterize<false>)->Name("Rasterize/reference")->Arg(32)->Arg(56)->Arg(128)->Unit(benchmark::kMicrosecond);
BENCHMARK(Rasterize<true>)->Name("Rasterize/openmp")->Arg(32)->Arg(56)->Arg(128)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
