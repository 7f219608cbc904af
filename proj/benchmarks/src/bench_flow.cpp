#include <benchmark/benchmark.h>

#include "dfetrack/flow_lk.hpp"
#include "dfetrack/synthgen.hpp"

using namespace dfetrack;

namespace {

// Two gray frames of a sequence moving by `shift` pixels per axis.
std::pair<PlanarImage, PlanarImage> pair_with_shift(double shift) {
  auto spec = synth::SynthSpec::centered(420, 300, 2, 3);
  spec.motion.kind = synth::MotionPath::Kind::Explicit;
  spec.motion.points = {{0.0, 0.0}, {shift, -shift}};
  const auto seq = synth::generate(spec);
  return {to_grayscale(seq.frames[0]), to_grayscale(seq.frames[1])};
}

void BM_LkPyramidal(benchmark::State& state) {
  const auto [ref, cur] = pair_with_shift(static_cast<double>(state.range(0)));
  lk::FlowWindow win;
  win.max_level = static_cast<int>(state.range(1));
  const Point2d p{210.0, 150.0};
  for (auto _ : state) benchmark::DoNotOptimize(lk::lk_pyramidal(ref, cur, p, win));
}
BENCHMARK(BM_LkPyramidal)->Args({0, 0})->Args({1, 0})->Args({8, 4})->Unit(benchmark::kMicrosecond);

void BM_LkPrebuiltPyramids(benchmark::State& state) {
  const auto [ref, cur] = pair_with_shift(6.0);
  lk::FlowWindow win;
  const auto pr = build_pyramid(ref, win.max_level);
  const auto pc = build_pyramid(cur, win.max_level);
  const Point2d p{210.0, 150.0};
  for (auto _ : state) benchmark::DoNotOptimize(lk::lk_pyramidal(pr, pc, p, win, p));
}
BENCHMARK(BM_LkPrebuiltPyramids)->Unit(benchmark::kMicrosecond);

}  // namespace
