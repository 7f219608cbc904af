#include <benchmark/benchmark.h>

#include <vector>

#include "dfetrack/adamax.hpp"
#include "dfetrack/cae.hpp"
#include "dfetrack/synthgen.hpp"

using namespace dfetrack;

namespace {

PlanarImage lab_frame(int w, int h) {
  return to_lab01(synth::generate(synth::SynthSpec::centered(w, h, 1, 5)).frames.front());
}

std::vector<PlanarImage> crops(int n) {
  const auto img = lab_frame(128, 128);
  std::vector<PlanarImage> out;
  for (int i = 0; i < n; ++i) out.push_back(extract_crop(img, {15 + (i * 7) % 90, 15 + (i * 13) % 90}, 31).image);
  return out;
}

void BM_EncodeCrop(benchmark::State& state) {
  const cae::CaeModel model(cae::CaeConfig::desk_scale());
  const auto c = crops(1).front();
  for (auto _ : state) benchmark::DoNotOptimize(cae::encode(model, c));
}
BENCHMARK(BM_EncodeCrop)->Unit(benchmark::kMicrosecond);

// Every window position of a frame in one pass.
void BM_EncodeDense(benchmark::State& state) {
  const cae::CaeModel model(cae::CaeConfig::desk_scale());
  const int side = static_cast<int>(state.range(0));
  const auto img = lab_frame(side, side);
  for (auto _ : state) benchmark::DoNotOptimize(cae::encode_dense(model, img));
}
BENCHMARK(BM_EncodeDense)->Arg(61)->Arg(97)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  cae::CaeModel model(cae::CaeConfig::desk_scale());
  auto opt = cae::OptimizerState::for_model(model);
  const auto batch_crops = crops(static_cast<int>(state.range(0)));
  const auto batch = cae::make_batch(batch_crops);
  for (auto _ : state) {
    const auto grads = cae::backward(model, batch);
    cae::adamax_step(model, grads, opt);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace
