#include "fixtures.hpp"

#include "mcoupling/caseio.hpp"
#include "mcoupling/incentives.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace mcoupling;

namespace {

AreaSubproblemInput single_tie(double remote_lmp, double remote_angle, double mu) {
  AreaSubproblemInput in;
  in.area = 0;
  in.pin_reference = true;
  in.ties = {{remote_lmp, remote_angle, mu, std::nullopt}};
  return in;
}

MechanismConfig short_config(int iterations = 30) {
  MechanismConfig cfg;
  cfg.beta = 0.2;
  cfg.max_iterations = iterations;
  return cfg;
}

}  // namespace

TEST(TradeValue, Examples) {
  const Grid g(fixtures::two_area(50, 50, {0.01, 10, 0}, {0.01, 20, 0}, 100.0));
  EXPECT_DOUBLE_EQ(trade_value(g, single_tie(0.0, 0.0, 0.0), {35.0}), 0.0);
  EXPECT_DOUBLE_EQ(trade_value(g, single_tie(20.0, 0.0, 4.0), {50.0}), 1100.0);
  // Imports pay the neighbour price and the same half charge.
  EXPECT_DOUBLE_EQ(trade_value(g, single_tie(20.0, 0.0, 4.0), {-50.0}), -1000.0 + 100.0);

  auto frozen = single_tie(20.0, 0.0, 4.0);
  frozen.ties[0].fixed_flow = 50.0;
  EXPECT_DOUBLE_EQ(trade_value(g, frozen, {50.0}), 0.0);
}

TEST(DeltaV, NoChangeAndPriceOnly) {
  const Grid g(fixtures::two_area(50, 50, {0.01, 10, 0}, {0.01, 20, 0}, 100.0));
  AreaSubproblemOutput sol;
  sol.area = 0;
  sol.flow = {10.0};
  sol.coupling_dual = {3.0};
  const auto before = single_tie(20.0, 0.01, 2.0);
  EXPECT_DOUBLE_EQ(delta_V(g, before, sol, before), 0.0);
  auto after = before;
  after.ties[0].remote_lmp = 21.0;
  EXPECT_DOUBLE_EQ(delta_V(g, before, sol, after), -10.0);
  EXPECT_THROW(delta_V(g, before, sol, AreaSubproblemInput{}), std::invalid_argument);
}

TEST(DeltaV, MatchesFiniteDifferenceToSecondOrder) {
  const Grid g(fixtures::two_by_two(80.0));
  const auto before = single_tie(30.0, -0.02, 3.0);
  const auto base = solve_area(g, before);
  auto error = [&](double h) {
    auto after = before;
    after.ties[0].remote_lmp += 2.0 * h;
    after.ties[0].remote_angle += 0.004 * h;
    after.ties[0].mu += 1.0 * h;
    const double exact = solve_area(g, after).value - base.value;
    return std::abs(exact - delta_V(g, before, base, after));
  };
  const double e1 = error(1.0), e2 = error(0.5), e4 = error(0.25);
  ASSERT_GT(e4, 1e-9);
  EXPECT_GT(std::log2(e1 / e2), 1.5);
  EXPECT_GT(std::log2(e2 / e4), 1.5);
}

TEST(EnvelopeProbe, ErrorShrinksWithStep) {
  const Grid g(fixtures::two_by_two(30.0));
  const auto out = run(g, short_config(20));
  const auto big = envelope_probe(g, out, 0, 10, 0.2);
  const auto small = envelope_probe(g, out, 0, 10, 0.05);
  EXPECT_LT(small.error(), big.error());
  EXPECT_THROW(envelope_probe(g, out, 0, 0, 0.1), std::out_of_range);
}

TEST(Estimates, ZeroWithoutTielines) {
  const Grid g(fixtures::islands());
  const auto out = run(g, short_config(5));
  const auto e = estimated_cost_changes(g, out);
  ASSERT_EQ(e.steps(), out.iterations());
  for (const auto& area : e.delta_C)
    for (double d : area) EXPECT_EQ(d, 0.0);
  for (const auto& area : e.delta_V_exact)
    for (double d : area) EXPECT_NEAR(d, 0.0, 1e-8);
}

TEST(Estimates, ExactValueSeriesTelescopes) {
  const Grid g(fixtures::two_by_two());
  const auto out = run(g, short_config(12));
  const auto e = estimated_cost_changes(g, out);
  for (std::size_t a = 0; a < 2; ++a) {
    double sum = 0.0;
    for (double d : e.delta_V_exact[a]) sum += d;
    EXPECT_NEAR(sum, e.value[a].back() - e.value[a].front(), 1e-8);
    EXPECT_NEAR(e.value[a].back(), out.trace.back().value[a], 1e-9);
    EXPECT_NEAR(e.trade_value[a].front(), out.initial_trade_value[a], 1e-12);
  }
}

TEST(Fee, IdenticalAreasGainNothing) {
  const Grid g(fixtures::two_area(60, 60, {0.02, 15, 0}, {0.02, 15, 0}));
  EXPECT_NEAR(participation_fee(oracle_costs(g)), 0.0, 1e-6);
}

TEST(Fee, IsMinimumGain) {
  const Grid g(caseio::synth(3, 3, 4, 3));
  const auto o = oracle_costs(g);
  const double r = participation_fee(o);
  for (std::size_t a = 0; a < 3; ++a) EXPECT_LE(r, o.gain(a) + 1e-9);
  EXPECT_GE(r, -1e-6);
}

TEST(Settle, NoTielineLedger) {
  const Grid g(fixtures::islands());
  const auto runs = run_all(g, short_config(5));
  const auto o = oracle_costs(g);
  const double fee = 7.0;
  const auto led = settle(g, runs, fee, &o);
  for (const auto& a : led.areas) {
    EXPECT_EQ(a.transfer_total, 0.0);
    EXPECT_EQ(a.marginal_contribution, 0.0);
    EXPECT_NEAR(a.internal_cost_change, 0.0, 1e-6);
    EXPECT_NEAR(a.total_cost_reduction, -fee, 1e-6);
  }
  EXPECT_EQ(led.congestion_rent, 0.0);
  EXPECT_DOUBLE_EQ(led.budget, 2 * fee);
  EXPECT_NEAR(led.congestion_rent_oracle, 0.0, 1e-9);
}

TEST(Settle, LedgerIdentities) {
  const Grid g(caseio::synth(6, 3, 4, 2));
  const auto runs = run_all(g, short_config(40));
  const double fee = participation_fee(runs);
  const auto led = settle(g, runs, fee);
  EXPECT_FALSE(led.oracle);
  double transfers = 0.0;
  for (const auto& a : led.areas) {
    transfers += a.transfer_total;
    EXPECT_NEAR(a.total_cost_reduction, -(a.value_change + a.transfer_total + fee), 1e-6);
    EXPECT_NEAR(a.transfer_total, a.marginal_contribution + a.trade_value.back() - a.trade_value.front(), 1e-6);
    EXPECT_NEAR(a.internal_cost_change, a.final_cost - a.initial_cost, 1e-9);
    EXPECT_EQ(a.trade_value.size(), a.transfer.size() + 1);
    EXPECT_TRUE(std::isnan(a.marginal_contribution_oracle));
  }
  EXPECT_NEAR(led.budget, 3 * fee + transfers, 1e-6);
  EXPECT_NEAR(led.surplus, led.budget - led.congestion_rent, 1e-9);
  for (std::size_t a = 0; a < 3; ++a) {
    const auto t = incentive_transfer(g, {estimated_cost_changes(g, runs[0]), estimated_cost_changes(g, runs[1]),
                                          estimated_cost_changes(g, runs[2]), estimated_cost_changes(g, runs[3])},
                                      a);
    EXPECT_EQ(t, led.areas[a].transfer);
  }
}

TEST(Settle, MissingExcludedRun) {
  const Grid g(fixtures::two_by_two());
  auto runs = run_all(g, short_config(3));
  EXPECT_THROW(settle(g, {runs[0]}, 0.0), MissingExcludedRun);
  EXPECT_THROW(settle(g, {runs[0], runs[2], runs[1]}, 0.0), MissingExcludedRun);
  EXPECT_THROW(settle(g, {runs[1], runs[0], runs[2]}, 0.0), MissingExcludedRun);
  EXPECT_THROW(incentive_transfer(g, {}, 0), MissingExcludedRun);
}

TEST(Deviation, UnitFactorIsEquilibrium) {
  const Grid g(fixtures::two_by_two());
  const auto rep = deviation_experiment(g, short_config(15), 1, 1.0);
  EXPECT_EQ(rep.gain(), 0.0);
  for (std::size_t a = 0; a < 2; ++a)
    EXPECT_EQ(rep.deviation.areas[a].total_cost_reduction, rep.equilibrium.areas[a].total_cost_reduction);
}

TEST(Deviation, DeviatorJudgedAtTrueCost) {
  const Grid g(fixtures::two_by_two());
  const auto rep = deviation_experiment(g, short_config(15), 0, 1.1);
  const auto runs = run_all(g, short_config(15), {1.1, 1.0});
  // Internal cost is the true cost of the deviated dispatch.
  EXPECT_NEAR(rep.deviation.areas[0].final_cost, runs[0].trace.back().true_cost[0], 1e-9);
  EXPECT_NEAR(runs[0].trace.back().cost[0], 1.1 * runs[0].trace.back().true_cost[0], 1e-6);
}

TEST(LmpBenchmark, ZeroWithoutTielines) {
  const Grid g(fixtures::islands());
  const auto rep = lmp_benchmark(g, short_config(5), 0, 1.1);
  for (double x : rep.equilibrium) EXPECT_NEAR(x, 0.0, 1e-6);
  for (double x : rep.deviation) EXPECT_NEAR(x, 0.0, 1e-6);
}

TEST(Reports, CsvAndTables) {
  const Grid g(fixtures::two_by_two());
  const auto runs = run_all(g, short_config(10));
  const auto led = settle(g, runs, participation_fee(runs));
  std::ostringstream csv, txt;
  write_ledger_csv(csv, g, led);
  write_ledger_report(txt, g, led);
  const auto table = csv.str();
  EXPECT_EQ(table.rfind("area,initial_cost,final_cost,", 0), 0u);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
  EXPECT_NE(txt.str().find("Participation fee"), std::string::npos);
  EXPECT_NE(txt.str().find("Congestion rent"), std::string::npos);
}
