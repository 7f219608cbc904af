#include <benchmark/benchmark.h>

#include "dfetrack/raster.hpp"
#include "dfetrack/synthgen.hpp"

using namespace dfetrack;

namespace {

PlanarImage frame(int w, int h) {
  auto spec = synth::SynthSpec::centered(w, h, 1, 7);
  return synth::generate(spec).frames.front();
}

void BM_Lab01(benchmark::State& state) {
  const auto img = frame(420, 300);
  for (auto _ : state) benchmark::DoNotOptimize(to_lab01(img));
  state.SetItemsProcessed(state.iterations() * 420 * 300);
}
BENCHMARK(BM_Lab01)->Unit(benchmark::kMillisecond);

void BM_Pyramid(benchmark::State& state) {
  const auto img = to_grayscale(frame(420, 300));
  const int levels = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(build_pyramid(img, levels));
}
BENCHMARK(BM_Pyramid)->Arg(1)->Arg(4)->Unit(benchmark::kMicrosecond);

void BM_ResizeBilinear(benchmark::State& state) {
  const auto img = frame(640, 480);
  for (auto _ : state) benchmark::DoNotOptimize(resize_bilinear(img, 420, 300));
}
BENCHMARK(BM_ResizeBilinear)->Unit(benchmark::kMillisecond);

}  // namespace
