#include <benchmark/benchmark.h>

#include <array>
#include <vector>

#include "dfetrack/matchcore.hpp"
#include "dfetrack/rng.hpp"

using namespace dfetrack;

namespace {

std::vector<match::Descriptor> random_descriptors(std::size_t n, std::size_t dim, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<match::Descriptor> out(n);
  for (auto& d : out) {
    d.values.resize(dim);
    for (double& v : d.values) v = rng.uniform();
  }
  return out;
}

void BM_Ssr128(benchmark::State& state) {
  const auto d = random_descriptors(2, 128, 1);
  for (auto _ : state) benchmark::DoNotOptimize(match::ssr(d[0], d[1]));
}
BENCHMARK(BM_Ssr128);

// Full landscape for a frame of the given size with 128-d descriptors.
void BM_SsrLandscape(benchmark::State& state) {
  const int w = static_cast<int>(state.range(0)), h = static_cast<int>(state.range(1));
  const auto grid = match::position_grid(w, h);
  const auto cands = random_descriptors(grid.size(), 128, 2);
  const auto ref = random_descriptors(1, 128, 3).front();
  for (auto _ : state) benchmark::DoNotOptimize(match::ssr_landscape(ref, cands, grid));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(grid.size()));
}
BENCHMARK(BM_SsrLandscape)->Args({97, 97})->Args({420, 300})->Unit(benchmark::kMillisecond);

void BM_SurfaceFit(benchmark::State& state) {
  const std::array<double, 9> z{4.1, 3.0, 4.2, 2.9, 1.0, 3.1, 4.0, 3.2, 4.3};
  for (auto _ : state) {
    const auto fit = match::fit_quadratic_surface(z);
    benchmark::DoNotOptimize(match::subpixel_minimum(fit));
  }
}
BENCHMARK(BM_SurfaceFit);

}  // namespace
