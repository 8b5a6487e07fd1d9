#include "mcoupling/caseio.hpp"
#include "mcoupling/coupling.hpp"
#include "mcoupling/incentives.hpp"

#include <benchmark/benchmark.h>

using namespace mcoupling;

static void BM_RunRts(benchmark::State& state) {
  const Grid g(caseio::rts_three_area());
  auto cfg = *caseio::rts_case().mechanism;
  cfg.max_iterations = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run(g, cfg).iterations());
  state.SetItemsProcessed(state.iterations() * (cfg.max_iterations + 1));
}
BENCHMARK(BM_RunRts)->Arg(20)->Unit(benchmark::kMillisecond);

static void BM_RunSynth(benchmark::State& state) {
  const Grid g(caseio::synth(4, 2, 4, 1));
  MechanismConfig cfg;
  cfg.beta = 0.1;
  cfg.max_iterations = 400;
  cfg.jobs = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run(g, cfg).iterations());
}
BENCHMARK(BM_RunSynth)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

static void BM_EstimatesRts(benchmark::State& state) {
  const Grid g(caseio::rts_three_area());
  auto cfg = *caseio::rts_case().mechanism;
  cfg.max_iterations = 20;
  const auto out = run(g, cfg);
  for (auto _ : state) benchmark::DoNotOptimize(estimated_cost_changes(g, out).steps());
}
BENCHMARK(BM_EstimatesRts)->Unit(benchmark::kMillisecond);

static void BM_PriceUpdate(benchmark::State& state) {
  double mu = 10.0;
  for (auto _ : state) {
    mu = price_update(mu, 105.0, -95.0, 100.0, 0.3);
    benchmark::DoNotOptimize(mu);
  }
}
BENCHMARK(BM_PriceUpdate);
BENCHMARK_MAIN();
