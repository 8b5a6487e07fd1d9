#include "fixtures.hpp"

#include "mcoupling/caseio.hpp"
#include "mcoupling/coupling.hpp"
#include "mcoupling/incentives.hpp"
#include "mcoupling/opf.hpp"
#include "mcoupling/qp.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace mcoupling;

namespace {

// Signals an area would see at the centralized optimum.
std::vector<AreaSignal> centralized_signals(const Grid& grid, const CentralizedSolution& sol) {
  std::vector<AreaSignal> out(grid.area_count());
  for (std::size_t a = 0; a < grid.area_count(); ++a)
    for (const auto& v : grid.area(a).tielines) {
      out[a].flow.push_back(v.orientation() * sol.tie_flow[v.tieline]);
      out[a].angle.push_back(sol.angle[v.local_bus]);
      out[a].lmp.push_back(sol.lmp[v.local_bus]);
    }
  return out;
}

std::vector<double> capacity_prices(const Grid& grid, const CentralizedSolution& sol) {
  std::vector<double> mu(grid.network().tielines.size());
  for (std::size_t t = 0; t < mu.size(); ++t) mu[t] = sol.capacity_price(t);
  return mu;
}

// Pins and activity flags of a full run, without iterating.
CouplingOutcome layout(const Grid& grid) {
  MechanismConfig cfg;
  cfg.max_iterations = 0;
  return run(grid, cfg);
}

// With the remote angles fixed an area keeps one degree of freedom per
// generator, less one when its reference is pinned. More active inequalities
// than that leave the boundary prices non-unique.
bool area_dual_unique(const Grid& grid, const CentralizedSolution& sol, const CouplingOutcome& lay,
                      std::size_t area) {
  const auto& net = grid.network();
  const auto& topo = grid.area(area);
  int active = 0;
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    const auto bus = net.find_bus(net.lines[l].from);
    if (net.buses[*bus].area != net.areas[area]) continue;
    active += std::abs(std::abs(sol.line_flow[l]) - net.lines[l].limit) < 1e-6;
  }
  for (auto gi : topo.generators) {
    const auto& gen = net.generators[gi];
    active += sol.dispatch[gi] < gen.p_min + 1e-6 || sol.dispatch[gi] > gen.p_max - 1e-6;
  }
  for (const auto& v : topo.tielines) {
    const double f = std::abs(sol.tie_flow[v.tieline]);
    active += f < 1e-6 || f > v.limit - 1e-6;
  }
  const int freedom = static_cast<int>(topo.generators.size()) - (lay.pins_reference[area] ? 1 : 0);
  return active <= freedom;
}

// True when the area graph formed by the ties has no cycles.
bool radial_ties(const Grid& grid) {
  std::vector<std::size_t> parent(grid.area_count());
  for (std::size_t a = 0; a < parent.size(); ++a) parent[a] = a;
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a];
    return a;
  };
  for (const auto& t : grid.network().tielines) {
    const auto a = find(*grid.network().find_area(t.from.area));
    const auto b = find(*grid.network().find_area(t.to.area));
    if (a == b) return false;
    parent[a] = b;
  }
  return true;
}

double max_lmp_spread(const CentralizedSolution& sol) {
  const auto [lo, hi] = std::minmax_element(sol.lmp.begin(), sol.lmp.end());
  return *hi - *lo;
}

}  // namespace

TEST(Centralized, SingleBusMarginalCost) {
  const Grid g(fixtures::one_bus(50.0, {0.01, 10.0, 5.0}));
  const auto s = solve_centralized(g);
  EXPECT_NEAR(s.dispatch[0], 50.0, 1e-6);
  EXPECT_NEAR(s.lmp[0], 2 * 0.01 * 50 + 10, 1e-6);
  EXPECT_NEAR(s.total_cost, 0.01 * 2500 + 500 + 5, 1e-6);
}

TEST(Centralized, SymmetricAreasDoNotTrade) {
  const Grid g(fixtures::two_area(60, 60, {0.02, 15, 0}, {0.02, 15, 0}));
  const auto s = solve_centralized(g);
  EXPECT_NEAR(s.tie_flow[0], 0.0, 1e-6);
  EXPECT_NEAR(s.lmp[0], s.lmp[1], 1e-6);
}

TEST(Centralized, CongestedTieSeparatesPrices) {
  const Grid g(fixtures::two_area(50, 150, {0.01, 10, 0}, {0.02, 30, 0}, 40.0));
  const auto s = solve_centralized(g);
  EXPECT_NEAR(s.tie_flow[0], 40.0, 1e-5);
  // Each side at its own marginal cost; the capacity price is the spread.
  EXPECT_NEAR(s.lmp[0], 2 * 0.01 * 90 + 10, 1e-5);
  EXPECT_NEAR(s.lmp[1], 2 * 0.02 * 110 + 30, 1e-5);
  EXPECT_NEAR(s.capacity_price(0), 2 * (s.lmp[1] - s.lmp[0]), 1e-5);
  EXPECT_NEAR(s.area_cost[0] + s.area_cost[1], s.total_cost, 1e-6);
}

TEST(Centralized, MatchesDispatchFromUnconstrainedKkt) {
  // Uncongested two-area case: equal LMPs, flow from the balance.
  const Grid g(fixtures::two_area(80, 100, {0.01, 10, 0}, {0.02, 12, 0}, 500.0));
  const auto s = solve_centralized(g);
  // 0.02 Pa + 10 = 0.04 Pb + 12, Pa + Pb = 180.
  const double pb = (0.02 * 180 + 10 - 12) / 0.06;
  EXPECT_NEAR(s.dispatch[1], pb, 1e-5);
  EXPECT_NEAR(s.tie_flow[0], 180 - pb - 80, 1e-5);
}

TEST(Centralized, IndependentClearingSumsStandAlone) {
  const Grid g(fixtures::two_by_two());
  const auto ind = solve_independent(g);
  double total = 0.0;
  for (std::size_t a = 0; a < 2; ++a) {
    const auto c = stand_alone_clearing(g, a);
    EXPECT_NEAR(ind.area_cost[a], c.cost, 1e-6);
    total += c.cost;
  }
  EXPECT_NEAR(ind.total_cost, total, 1e-6);
  EXPECT_NEAR(ind.tie_flow[0], 0.0, 1e-9);
}

TEST(StandAlone, OneGeneratorServesLoad) {
  const Grid g(fixtures::one_bus(42.0));
  const auto c = stand_alone_clearing(g, 0);
  EXPECT_NEAR(c.dispatch[0], 42.0, 1e-6);
}

TEST(StandAlone, MatchesAreaProblemWithoutTies) {
  const Grid g(fixtures::islands());
  for (std::size_t a = 0; a < 2; ++a) {
    AreaSubproblemInput in;
    in.area = a;
    const auto out = solve_area(g, in);
    const auto c = stand_alone_clearing(g, a);
    EXPECT_NEAR(out.cost, c.cost, 1e-6);
    EXPECT_NEAR(out.trade_value, 0.0, 1e-12);
    EXPECT_NEAR(out.value, out.cost, 1e-6);
  }
}

TEST(Excluding, TwoAreaRemainderClearsAlone) {
  const Grid g(fixtures::two_by_two());
  const auto ex = solve_centralized_excluding(g, 0);
  EXPECT_NEAR(ex.area_cost[1], stand_alone_clearing(g, 1).cost, 1e-6);
  EXPECT_NEAR(ex.area_cost[0], stand_alone_clearing(g, 0).cost, 1e-6);
  EXPECT_NEAR(ex.tie_flow[0], 0.0, 1e-9);
  EXPECT_TRUE(ex.tie_frozen[0]);
}

// Freezing a tie at zero is only a feasible joint state when the ties do not
// close a loop between areas, so the bound is checked on radial tie graphs.
TEST(Excluding, FeasibilityBoundOnRadialTieGraphs) {
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    const Grid g(caseio::synth(seed, 3, 4, 2 + static_cast<int>(seed % 2)));
    if (!radial_ties(g)) continue;
    ++checked;
    const auto star = solve_centralized(g);
    for (std::size_t a = 0; a < 3; ++a) {
      const auto ex = solve_centralized_excluding(g, a);
      const double c0 = stand_alone_clearing(g, a).cost;
      EXPECT_GE(ex.cost_excluding(a) + c0, star.total_cost - 1e-6) << "seed " << seed << " area " << a;
    }
  }
  EXPECT_GT(checked, 5);
}

// With a loop the frozen-at-zero state forces equal angles across the tie, which
// the joint optimum need not be able to match.
TEST(Excluding, LoopCanBreakFeasibilityBound) {
  const Grid g(caseio::synth(4, 3, 4, 3));
  ASSERT_FALSE(radial_ties(g));
  const auto star = solve_centralized(g);
  const auto ex = solve_centralized_excluding(g, 0);
  EXPECT_LT(ex.cost_excluding(0) + stand_alone_clearing(g, 0).cost, star.total_cost - 1.0);
}

TEST(Excluding, HonoursFixedFlows) {
  const Grid g(fixtures::two_by_two());
  const std::vector<double> fixed = {12.0};
  const auto ex = solve_centralized_excluding(g, 1, fixed);
  EXPECT_NEAR(ex.tie_flow[0], 12.0, 1e-9);
  EXPECT_NEAR(ex.area_cost[1], stand_alone_clearing(g, 1, fixed).cost, 1e-6);
}

// Centralized signals fed to every area problem reproduce the centralized
// dispatch and flows. Boundary prices are compared only where the area problem
// has a unique multiplier.
TEST(AreaProblem, CentralizedSignalsReproduceOptimum) {
  qp::QpOptions tight;
  tight.tolerance = 1e-12;
  int checked_congested = 0, checked_prices = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const int areas = 2 + static_cast<int>(seed % 2);
    const Grid g(caseio::synth(seed, areas, 2 + static_cast<int>(seed % 5), 1 + static_cast<int>(seed % 3)));
    const auto star = solve_centralized(g, tight);
    const auto signals = centralized_signals(g, star);
    const auto mu = capacity_prices(g, star);
    const auto lay = layout(g);
    for (double m : mu) checked_congested += m > 1e-3;
    for (std::size_t a = 0; a < g.area_count(); ++a) {
      const auto out = solve_area(g, area_input(g, lay, a, signals, mu), tight);
      const auto& topo = g.area(a);
      double scale = 1.0;
      for (auto gi : topo.generators) scale = std::max(scale, std::abs(star.dispatch[gi]));
      for (std::size_t k = 0; k < topo.generators.size(); ++k)
        EXPECT_NEAR(out.dispatch[k], star.dispatch[topo.generators[k]], 1e-5 * scale) << "seed " << seed;
      for (std::size_t k = 0; k < topo.tielines.size(); ++k) {
        const auto& v = topo.tielines[k];
        EXPECT_NEAR(out.flow[k], v.orientation() * star.tie_flow[v.tieline], 1e-5 * scale) << "seed " << seed;
      }
      if (!area_dual_unique(g, star, lay, a)) continue;
      for (std::size_t k = 0; k < topo.tielines.size(); ++k) {
        const double lmp = star.lmp[topo.tielines[k].local_bus];
        EXPECT_NEAR(out.boundary_lmp[k], lmp, 1e-5 * std::max(1.0, std::abs(lmp))) << "seed " << seed;
        ++checked_prices;
      }
    }
  }
  EXPECT_GT(checked_congested, 0);
  EXPECT_GT(checked_prices, 50);
}

// Without a shared capacity price, areas that each enforce the tie limit on
// their own reach inconsistent flows and different capacity duals.
TEST(AreaProblem, PrivateCapacityConstraintsDisagree) {
  const double limit = 20.0, load_a = 60.0, load_b = 80.0;
  const QuadraticCost ca{0.02, 10.0, 0.0}, cb{0.05, 25.0, 0.0};
  auto area = [&](const QuadraticCost& c, double load, double remote_lmp) {
    // x = (P, T): min C(P) - remote_lmp * T  s.t.  P - T = load, -limit <= T <= limit, 0 <= P <= 300.
    qp::QpProblem p;
    p.Q.resize(2, 2);
    p.Q.insert(0, 0) = 2 * c.c2;
    p.c = Eigen::Vector2d(c.c1, -remote_lmp);
    p.A.resize(1, 2);
    p.A.insert(0, 0) = 1.0;
    p.A.insert(0, 1) = -1.0;
    p.b = Eigen::VectorXd::Constant(1, load);
    p.G.resize(4, 2);
    p.G.insert(0, 1) = 1.0;
    p.G.insert(1, 1) = -1.0;
    p.G.insert(2, 0) = 1.0;
    p.G.insert(3, 0) = -1.0;
    p.h = Eigen::Vector4d(limit, limit, 300.0, 0.0);
    return qp::solve_or_throw(p);
  };
  // First exchange round: neighbours publish zero prices.
  const auto a = area(ca, load_a, 0.0);
  const auto b = area(cb, load_b, 0.0);
  EXPECT_NEAR(a.x[1], -limit, 1e-6);
  EXPECT_NEAR(b.x[1], -limit, 1e-6);
  EXPECT_GT(std::abs(a.x[1] + b.x[1]), 1.0);  // both import: no consensus
  const double dual_a = a.z[1], dual_b = b.z[1];
  EXPECT_GT(std::abs(dual_a - dual_b), 10 * 1e-6);

  // The joint problem has one tie variable and a single capacity dual.
  const Grid g(fixtures::two_area(load_a, load_b, ca, cb, limit));
  const auto star = solve_centralized(g);
  EXPECT_NEAR(std::abs(star.tie_flow[0]), limit, 1e-5);
  EXPECT_GT(star.capacity_price(0), 0.0);
}

TEST(AreaProblem, ValueIdentityOnRandomSignals) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lmp(0.0, 60.0), ang(-0.2, 0.2), mu(0.0, 20.0);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Grid g(caseio::synth(seed, 3, 4, 3));
    const auto lay = layout(g);
    for (int trial = 0; trial < 3; ++trial) {
      std::vector<AreaSignal> sig(g.area_count());
      for (std::size_t a = 0; a < g.area_count(); ++a)
        for (std::size_t k = 0; k < g.area(a).tielines.size(); ++k) {
          sig[a].flow.push_back(0.0);
          sig[a].angle.push_back(ang(rng));
          sig[a].lmp.push_back(lmp(rng));
        }
      std::vector<double> m(g.network().tielines.size());
      for (auto& x : m) x = mu(rng);
      for (std::size_t a = 0; a < g.area_count(); ++a) {
        const auto in = area_input(g, lay, a, sig, m);
        const auto out = solve_area(g, in);
        const double scale = std::max(1.0, std::abs(out.value));
        EXPECT_NEAR(out.value, out.cost - out.trade_value + out.penalty, 1e-8 * scale);
        EXPECT_NEAR(trade_value(g, in, out.flow), out.trade_value, 1e-8 * scale);
      }
    }
  }
}

TEST(AreaProblem, CouplingDualFromPrices) {
  const Grid g(fixtures::two_by_two());
  AreaSubproblemInput in;
  in.area = 0;
  in.pin_reference = true;
  in.ties = {{40.0, 0.05, 6.0, std::nullopt}};
  const auto out = solve_area(g, in);
  const double sign = out.flow[0] >= 0.0 ? 1.0 : -1.0;
  EXPECT_NEAR(out.coupling_dual[0], 40.0 - 0.5 * 6.0 * sign - out.boundary_lmp[0], 1e-9);
}

TEST(AreaProblem, FrozenTieActsAsInjection) {
  const Grid g(fixtures::two_by_two());
  AreaSubproblemInput in;
  in.area = 0;
  in.ties = {{0.0, 0.0, 0.0, 15.0}};
  const auto out = solve_area(g, in);
  EXPECT_NEAR(out.flow[0], 15.0, 1e-9);
  const std::vector<double> fixed = {15.0};
  EXPECT_NEAR(out.cost, stand_alone_clearing(g, 0, fixed).cost, 1e-6);
}

TEST(AreaProblem, CostScaleChangesReportedNotTrueCost) {
  const Grid g(fixtures::one_bus(50.0));
  AreaSubproblemInput in;
  in.cost_scale = 1.1;
  const auto out = solve_area(g, in);
  EXPECT_NEAR(out.cost, 1.1 * out.true_cost, 1e-9);
}

// Neighbour angles are set to the area's own stand-alone boundary angles so
// that zero flow is attainable; LMP signals come from the joint optimum.
TEST(CriticalPrice, DrivesFlowsToZero) {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const Grid g(caseio::synth(seed, 2 + static_cast<int>(seed % 2), 4, 1 + static_cast<int>(seed % 3)));
    const auto star = solve_centralized(g);
    const auto signals = centralized_signals(g, star);
    const auto lay = layout(g);
    std::vector<double> zero(g.network().tielines.size(), 0.0);
    for (std::size_t a = 0; a < g.area_count(); ++a) {
      auto in = area_input(g, lay, a, signals, zero);
      const auto alone = stand_alone_clearing(g, a);
      double spread = max_lmp_spread(star);
      for (std::size_t k = 0; k < in.ties.size(); ++k) {
        const auto pos = g.local_bus_position(g.area(a).tielines[k].local_bus);
        in.ties[k].remote_angle = alone.angle[pos];
        for (double l : alone.lmp) spread = std::max(spread, std::abs(in.ties[k].remote_lmp - l));
      }
      const double crit = critical_price(g, in);
      auto probe = in;
      for (auto& t : probe.ties) t.mu = crit;
      for (double f : solve_area(g, probe).flow) EXPECT_NEAR(f, 0.0, 1e-3) << "seed " << seed;

      // Twice the largest price spread is always enough.
      for (auto& t : probe.ties) t.mu = 2.0 * spread + 1.0;
      for (double f : solve_area(g, probe).flow) EXPECT_NEAR(f, 0.0, 1e-3) << "seed " << seed;
    }
  }
}

TEST(CapacityWeights, Conventions) {
  EXPECT_DOUBLE_EQ(capacity_weights(10.0, CapacitySplit::Even).export_weight, 5.0);
  EXPECT_DOUBLE_EQ(capacity_weights(10.0, CapacitySplit::Even).import_weight, 5.0);
  EXPECT_DOUBLE_EQ(capacity_weights(10.0, CapacitySplit::Exporter).export_weight, 10.0);
  EXPECT_DOUBLE_EQ(capacity_weights(10.0, CapacitySplit::Exporter).import_weight, 0.0);
  EXPECT_DOUBLE_EQ(capacity_weights(10.0, CapacitySplit::Importer).import_weight, 10.0);
}
