#include "mcoupling/caseio.hpp"
#include "mcoupling/opf.hpp"

#include <benchmark/benchmark.h>

using namespace mcoupling;

static void BM_CentralizedRts(benchmark::State& state) {
  const Grid g(caseio::rts_three_area());
  for (auto _ : state) benchmark::DoNotOptimize(solve_centralized(g).total_cost);
}
BENCHMARK(BM_CentralizedRts)->Unit(benchmark::kMillisecond);

static void BM_CentralizedSynth(benchmark::State& state) {
  const Grid g(caseio::synth(5, 3, static_cast<int>(state.range(0)), 3));
  for (auto _ : state) benchmark::DoNotOptimize(solve_centralized(g).total_cost);
}
BENCHMARK(BM_CentralizedSynth)->Arg(4)->Arg(8)->Arg(16)->Unit(benchmark::kMicrosecond);

// One area of RTS solved against the centralized signals.
static void BM_AreaProblemRts(benchmark::State& state) {
  const Grid g(caseio::rts_three_area());
  const auto star = solve_centralized(g);
  const auto area = static_cast<std::size_t>(state.range(0));
  AreaSubproblemInput in;
  in.area = area;
  in.pin_reference = area == 0;
  for (const auto& v : g.area(area).tielines) {
    const auto remote = v.orientation() > 0 ? g.tieline_ends(v.tieline).second : g.tieline_ends(v.tieline).first;
    in.ties.push_back({star.lmp[remote], star.angle[remote], star.capacity_price(v.tieline), std::nullopt});
  }
  for (auto _ : state) benchmark::DoNotOptimize(solve_area(g, in).value);
}
BENCHMARK(BM_AreaProblemRts)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

static void BM_Validate(benchmark::State& state) {
  const auto n = caseio::rts_three_area();
  for (auto _ : state) benchmark::DoNotOptimize(validate(n).size());
}
BENCHMARK(BM_Validate)->Unit(benchmark::kMillisecond);
