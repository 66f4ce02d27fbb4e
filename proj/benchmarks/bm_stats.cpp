#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "tda/rng.hpp"
#include "tda/stats.hpp"

namespace {

std::vector<double> draws(std::size_t n, std::uint64_t seed) {
  tda::CounterRng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

void BM_Spearman(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = draws(n, 1), b = draws(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(tda::stats::spearman(a, b));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n));
}
BENCHMARK(BM_Spearman)->Range(64, 1 << 16);

void BM_Auprc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto scores = draws(n, 3);
  std::vector<std::size_t> positives(n / 10);
  std::iota(positives.begin(), positives.end(), std::size_t{0});
  for (auto _ : state) benchmark::DoNotOptimize(tda::stats::auprc(scores, positives));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n));
}
BENCHMARK(BM_Auprc)->Range(64, 1 << 16);

void BM_TopK(benchmark::State& state) {
  const auto scores = draws(static_cast<std::size_t>(state.range(0)), 4);
  for (auto _ : state) benchmark::DoNotOptimize(tda::stats::topk_indices(scores, 10));
}
BENCHMARK(BM_TopK)->Range(64, 1 << 16);

}  // namespace
