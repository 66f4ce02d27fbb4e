#include <benchmark/benchmark.h>

#include "tda/attribution.hpp"
#include "tda/data.hpp"
#include "tda/nn.hpp"

namespace {

struct Setup {
  tda::Dataset train;
  tda::Dataset test;
  tda::TrainResult fit;

  explicit Setup(std::size_t n)
      : train(tda::make_blobs(n, 8, 4, 3.0, 1, 21).dataset),
        test(tda::make_blobs(32, 8, 4, 3.0, 1, 22).dataset),
        fit(tda::train({8, {16}, 4, tda::Activation::relu}, train,
                       tda::TrainConfig::constant(5, 0.1, 32, 23, 1e-3))) {}
};

const Setup& setup(std::size_t n) {
  static const Setup small(200);
  static const Setup large(1000);
  return n <= 200 ? small : large;
}

void run(benchmark::State& state, const tda::ExplainerConfig& cfg) {
  const Setup& s = setup(static_cast<std::size_t>(state.range(0)));
  const auto batch = tda::TestBatch::predicted(s.fit.model, s.test.features);
  for (auto _ : state) {
    const auto ex = tda::make_explainer(cfg, s.fit.model, s.train, s.fit.checkpoints);
    benchmark::DoNotOptimize(ex->explain(batch));
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * batch.size()));
}

void BM_Similarity(benchmark::State& state) { run(state, {tda::SimilarityConfig{}, ""}); }
void BM_InfluenceLastLayer(benchmark::State& state) { run(state, {tda::InfluenceConfig{}, ""}); }
void BM_InfluenceAll(benchmark::State& state) {
  run(state, {tda::InfluenceConfig{1.0, tda::ParamScope::all, std::nullopt, tda::kDefaultHessianCap}, ""});
}
void BM_TracIn(benchmark::State& state) { run(state, {tda::TracInConfig{}, ""}); }
void BM_Representer(benchmark::State& state) { run(state, {tda::RepresenterConfig{}, ""}); }
void BM_Trak(benchmark::State& state) { run(state, {tda::TrakConfig{64, 1}, ""}); }

BENCHMARK(BM_Similarity)->Arg(200)->Arg(1000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_InfluenceLastLayer)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_InfluenceAll)->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TracIn)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Representer)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Trak)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace
