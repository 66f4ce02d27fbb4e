#include <benchmark/benchmark.h>

#include "tda/benchmark.hpp"

namespace {

// LDS bundle generation is dominated by retraining one model per subset.
void BM_GenerateLds(benchmark::State& state) {
  tda::GenerateConfig cfg;
  cfg.kind = tda::BenchmarkKind::lds;
  cfg.seed = 1;
  cfg.train = tda::TrainConfig::constant(20, 0.1, 32, 0, 1e-3);
  cfg.lds.num_subsets = static_cast<std::size_t>(state.range(0));
  cfg.threads = static_cast<unsigned>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(tda::generate(cfg));
}
BENCHMARK(BM_GenerateLds)
    ->Args({16, 1})
    ->Args({64, 1})
    ->Args({64, 0})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

void BM_EvaluateMislabeling(benchmark::State& state) {
  tda::GenerateConfig cfg;
  cfg.kind = tda::BenchmarkKind::mislabeling;
  cfg.seed = 2;
  cfg.data.n = static_cast<std::size_t>(state.range(0));
  cfg.train = tda::TrainConfig::constant(20, 0.1, 32, 0, 1e-3);
  const auto bundle = tda::generate(cfg);
  const tda::ExplainerConfig explainer{tda::InfluenceConfig{}, ""};
  for (auto _ : state) benchmark::DoNotOptimize(tda::evaluate(bundle, explainer));
}
BENCHMARK(BM_EvaluateMislabeling)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace
