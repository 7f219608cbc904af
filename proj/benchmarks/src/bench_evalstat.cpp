#include <benchmark/benchmark.h>

#include "dfetrack/evalstat.hpp"

using namespace dfetrack;

namespace {

void BM_Chi2Inv(benchmark::State& state) {
  const double dof = static_cast<double>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(stats::chi2_inv(0.99, dof));
}
BENCHMARK(BM_Chi2Inv)->Arg(2)->Arg(80)->Arg(520);

void BM_SimulateDistanceCdf(benchmark::State& state) {
  const auto model = stats::find_error_model(stats::builtin_error_models(), "static_face_mole");
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(stats::simulate_distance_cdf(model, n, 1));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SimulateDistanceCdf)->Arg(100000)->Arg(1000000)->Unit(benchmark::kMillisecond);

}  // namespace
