#include <benchmark/benchmark.h>

#include "tda/data.hpp"
#include "tda/nn.hpp"

namespace {

tda::Dataset blobs(std::size_t n, std::size_t d, int classes) {
  return tda::make_blobs(n, d, classes, 3.0, 1, 11).dataset;
}

void BM_GradLoss(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const tda::ModelArch arch{16, {hidden}, 4, tda::Activation::relu};
  const tda::Model m = tda::init_model(arch, 1);
  const tda::Dataset ds = blobs(64, 16, 4);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tda::grad_loss(m, ds.x(i), ds.labels[i]));
    i = (i + 1) % ds.size();
  }
  state.counters["params"] = static_cast<double>(m.num_params());
}
BENCHMARK(BM_GradLoss)->Arg(16)->Arg(64)->Arg(256);

void BM_HessianRisk(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const tda::ModelArch arch{8, {hidden}, 4, tda::Activation::tanh};
  const tda::Model m = tda::init_model(arch, 2);
  const tda::Dataset ds = blobs(128, 8, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tda::hessian_risk(m, ds, 1e-3));
  }
  state.counters["params"] = static_cast<double>(m.num_params());
}
BENCHMARK(BM_HessianRisk)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_TrainEpoch(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const tda::ModelArch arch{8, {16}, 4, tda::Activation::relu};
  const tda::Dataset ds = blobs(n, 8, 4);
  const auto cfg = tda::TrainConfig::constant(1, 0.1, 32, 3, 1e-3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tda::train(arch, ds, cfg));
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n));
}
BENCHMARK(BM_TrainEpoch)->Arg(200)->Arg(2000)->Unit(benchmark::kMicrosecond);

}  // namespace
