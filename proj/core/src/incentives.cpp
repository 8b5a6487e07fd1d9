#include "mcoupling/incentives.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>

namespace mcoupling {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// d/dmu of the capacity charge at flow t, including the -limit/2 constant.
double charge_slope(double t, double limit, CapacitySplit split) {
  const auto w = capacity_weights(1.0, split);
  return w.export_weight * std::max(t, 0.0) + w.import_weight * std::max(-t, 0.0) - 0.5 * limit;
}

double envelope(const Grid& grid, const AreaSubproblemInput& before, std::span<const double> flow,
                std::span<const double> xi, const AreaSubproblemInput& after) {
  const auto& ties = grid.area(before.area).tielines;
  const double base = grid.network().base_mva;
  double dv = 0.0;
  for (std::size_t k = 0; k < ties.size(); ++k) {
    const auto& b = before.ties[k];
    const auto& a = after.ties[k];
    if (b.fixed_flow || a.fixed_flow) continue;
    dv += -flow[k] * (a.remote_lmp - b.remote_lmp);
    dv += charge_slope(flow[k], ties[k].limit, before.split) * (a.mu - b.mu);
    dv += xi[k] * base / ties[k].reactance * (a.remote_angle - b.remote_angle);
  }
  return dv;
}

const std::vector<AreaSignal>& signals_before(const CouplingOutcome& run, int k) {
  return k <= 1 ? run.initial : run.trace[static_cast<std::size_t>(k - 2)].smoothed;
}

const std::vector<double>& prices_before(const CouplingOutcome& run, int k) {
  return k <= 1 ? run.mu0 : run.trace[static_cast<std::size_t>(k - 2)].mu;
}

double scale_of(const CouplingOutcome& run, std::size_t a) { return run.cost_scale.empty() ? 1.0 : run.cost_scale[a]; }

void check_runs(const Grid& grid, const std::vector<CouplingOutcome>& runs) {
  const auto na = grid.area_count();
  if (runs.empty() || runs.front().excluded) throw MissingExcludedRun("the full coupling run is missing");
  if (runs.size() != na + 1) throw MissingExcludedRun("expected one exclusion run per area");
  for (std::size_t a = 0; a < na; ++a)
    if (runs[1 + a].excluded != a)
      throw MissingExcludedRun("area " + grid.area(a).id + " lacks its exclusion run");
}

double others_final_cost(const CouplingOutcome& run, std::size_t a) {
  const auto& last = run.trace.empty() ? run.initial_cost : run.trace.back().true_cost;
  double sum = 0.0;
  for (std::size_t b = 0; b < last.size(); ++b)
    if (b != a) sum += last[b];
  return sum;
}

struct Contribution {
  std::vector<double> marginal;  // per step
  std::vector<double> transfer;  // per step
};

Contribution contribution(const std::vector<RunEstimates>& est, std::size_t a) {
  const auto& full = est[0];
  const auto& ex = est[1 + a];
  const int steps = full.steps();
  Contribution c;
  c.marginal.assign(static_cast<std::size_t>(steps), 0.0);
  c.transfer.assign(static_cast<std::size_t>(steps), 0.0);
  for (int k = 0; k < steps; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    double dm = 0.0;
    for (std::size_t b = 0; b < full.delta_C.size(); ++b) {
      if (b == a) continue;
      dm += full.delta_C[b][ks];
      if (k < ex.steps()) dm -= ex.delta_C[b][ks];
    }
    c.marginal[ks] = dm;
    c.transfer[ks] = dm + full.trade_value[a][ks + 1] - full.trade_value[a][ks];
  }
  return c;
}

}  // namespace

double trade_value(const Grid& grid, const AreaSubproblemInput& input, const std::vector<double>& flows) {
  const auto& ties = grid.area(input.area).tielines;
  double r = 0.0;
  for (std::size_t k = 0; k < ties.size(); ++k) {
    const auto& s = input.ties[k];
    if (s.fixed_flow) continue;
    const auto w = capacity_weights(s.mu, input.split);
    const double t = flows.at(k);
    const double charge = w.export_weight * std::max(t, 0.0) + w.import_weight * std::max(-t, 0.0);
    r += s.remote_lmp * t - (charge - 0.5 * s.mu * ties[k].limit);
  }
  return r;
}

double delta_V(const Grid& grid, const AreaSubproblemInput& before, const AreaSubproblemOutput& solution,
               const AreaSubproblemInput& after) {
  if (before.ties.size() != after.ties.size() || solution.flow.size() != before.ties.size())
    throw std::invalid_argument("signal sets of different shape");
  return envelope(grid, before, solution.flow, solution.coupling_dual, after);
}

RunEstimates estimated_cost_changes(const Grid& grid, const CouplingOutcome& run) {
  const auto na = grid.area_count();
  const int kk = run.iterations();
  RunEstimates e;
  e.trade_value.assign(na, {});
  e.value.assign(na, {});
  e.delta_V.assign(na, std::vector<double>(static_cast<std::size_t>(kk), 0.0));
  e.delta_V_exact.assign(na, {});
  e.delta_C.assign(na, {});

  std::vector<std::vector<AreaSubproblemInput>> inputs(static_cast<std::size_t>(kk) + 1);
  for (int k = 1; k <= kk; ++k)
    for (std::size_t a = 0; a < na; ++a)
      inputs[static_cast<std::size_t>(k)].push_back(area_input(grid, run, a, signals_before(run, k), prices_before(run, k)));

  for (std::size_t a = 0; a < na; ++a) {
    auto& r = e.trade_value[a];
    auto& v = e.value[a];
    r.push_back(run.initial_trade_value[a]);
    v.push_back(scale_of(run, a) * run.initial_cost[a] - run.initial_trade_value[a]);
    for (const auto& rec : run.trace) {
      r.push_back(rec.trade_value[a]);
      v.push_back(rec.value[a]);
    }
    for (int k = 1; k < kk; ++k) {
      const auto& rec = run.trace[static_cast<std::size_t>(k - 1)];
      e.delta_V[a][static_cast<std::size_t>(k)] =
          envelope(grid, inputs[static_cast<std::size_t>(k)][a], rec.raw[a].flow, rec.coupling_dual[a],
                   inputs[static_cast<std::size_t>(k) + 1][a]);
    }
    for (int k = 0; k < kk; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      e.delta_V_exact[a].push_back(v[ks + 1] - v[ks]);
      e.delta_C[a].push_back(e.delta_V[a][ks] + r[ks + 1] - r[ks]);
    }
  }
  return e;
}

double OracleCosts::initial_total() const {
  double s = 0.0;
  for (double c : initial) s += c;
  return s;
}

OracleCosts oracle_costs(const Grid& grid, const qp::QpOptions& options) {
  const auto na = grid.area_count();
  OracleCosts o;
  const auto central = solve_centralized(grid, options);
  o.total = central.total_cost;
  o.area = central.area_cost;
  o.tie_flow = central.tie_flow;
  for (std::size_t t = 0; t < central.tie_flow.size(); ++t) {
    const auto [i, j] = grid.tieline_ends(t);
    o.congestion_rent += (central.lmp[j] - central.lmp[i]) * central.tie_flow[t];
  }
  for (std::size_t a = 0; a < na; ++a) {
    o.initial.push_back(stand_alone_clearing(grid, a, {}, options).cost);
    o.excluded_others.push_back(solve_centralized_excluding(grid, a, {}, options).cost_excluding(a));
  }
  return o;
}

double participation_fee(const OracleCosts& oracle) {
  if (oracle.initial.empty()) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < oracle.initial.size(); ++a) best = std::min(best, oracle.gain(a));
  return best;
}

double participation_fee(const std::vector<CouplingOutcome>& runs) {
  if (runs.size() < 2) return 0.0;
  const auto& full = runs.front();
  const auto na = full.initial_cost.size();
  double total = 0.0;
  for (std::size_t a = 0; a < na; ++a) total += full.trace.empty() ? full.initial_cost[a] : full.trace.back().true_cost[a];
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < na; ++a) {
    const auto& ex = runs.at(1 + a);
    best = std::min(best, full.initial_cost[a] + others_final_cost(ex, a) - total);
  }
  return best;
}

std::vector<double> incentive_transfer(const Grid& grid, const std::vector<RunEstimates>& estimates, std::size_t area) {
  if (estimates.size() != grid.area_count() + 1) throw MissingExcludedRun("expected one exclusion run per area");
  return contribution(estimates, area).transfer;
}

IncentiveLedger settle(const Grid& grid, const std::vector<CouplingOutcome>& runs, double fee, const OracleCosts* oracle) {
  check_runs(grid, runs);
  const auto na = grid.area_count();
  const auto& full = runs.front();
  if (full.trace.empty()) throw std::invalid_argument("the full run has no iterations");

  std::vector<RunEstimates> est(runs.size());
  detail::parallel_for(runs.size(), 1, [&](std::size_t i) { est[i] = estimated_cost_changes(grid, runs[i]); });

  IncentiveLedger led;
  led.fee = fee;
  led.oracle = oracle != nullptr;
  led.iterations = full.iterations();
  led.budget = static_cast<double>(na) * fee;

  const auto& last = full.trace.back();
  double final_total = 0.0, initial_total = 0.0;
  for (std::size_t a = 0; a < na; ++a) {
    final_total += last.true_cost[a];
    initial_total += full.initial_cost[a];
  }
  // Gains C_{a,0} + C~_{-a} - C*, from the oracle or from run limits.
  std::vector<double> gain(na);
  for (std::size_t a = 0; a < na; ++a)
    gain[a] = oracle ? oracle->gain(a) : full.initial_cost[a] + others_final_cost(runs[1 + a], a) - final_total;

  for (std::size_t a = 0; a < na; ++a) {
    AreaLedger al;
    const auto c = contribution(est, a);
    al.trade_value = est[0].trade_value[a];
    al.delta_V = est[0].delta_V[a];
    al.transfer = c.transfer;
    for (double x : c.transfer) al.transfer_total += x;
    for (double x : c.marginal) al.marginal_contribution += x;
    for (std::size_t b = 0; b < na; ++b) {
      if (b == a) continue;
      const auto& ex = runs[1 + a];
      const double ex_last = ex.trace.empty() ? ex.initial_cost[b] : ex.trace.back().true_cost[b];
      al.marginal_contribution_limit += (last.true_cost[b] - full.initial_cost[b]) - (ex_last - ex.initial_cost[b]);
    }
    al.marginal_contribution_oracle =
        oracle ? (oracle->total - oracle->area[a]) - oracle->excluded_others[a] : kNaN;
    al.initial_cost = full.initial_cost[a];
    al.final_cost = last.true_cost[a];
    al.internal_cost_change = al.final_cost - al.initial_cost;
    al.value_change = (al.final_cost - al.trade_value.back()) - (al.initial_cost - al.trade_value.front());
    const double net = al.value_change + al.transfer_total + fee;
    al.total_cost_reduction = -net;
    al.ideal_cost_reduction = gain[a] - fee;
    al.delta = net + al.ideal_cost_reduction;
    led.delta_tol = std::max(led.delta_tol, std::abs(al.delta));
    led.budget += al.transfer_total;
    led.areas.push_back(std::move(al));
  }

  const auto flows = full.final_flows(grid);
  for (std::size_t t = 0; t < flows.size(); ++t) {
    if (!full.tie_active[t]) continue;
    const auto [i, j] = grid.tieline_ends(t);
    const auto ai = grid.bus_area(i), aj = grid.bus_area(j);
    const auto& vi = grid.view(ai, t);
    const auto& vj = grid.view(aj, t);
    const auto pi = static_cast<std::size_t>(&vi - grid.area(ai).tielines.data());
    const auto pj = static_cast<std::size_t>(&vj - grid.area(aj).tielines.data());
    led.congestion_rent += (last.smoothed[aj].lmp[pj] - last.smoothed[ai].lmp[pi]) * flows[t];
  }
  led.congestion_rent_oracle = oracle ? oracle->congestion_rent : kNaN;
  led.surplus = led.budget - led.congestion_rent;
  led.system_saving = oracle ? oracle->initial_total() - oracle->total : initial_total - final_total;

  const double min_gain = *std::min_element(gain.begin(), gain.end());
  double rents = 0.0;
  for (double g : gain) rents += g - min_gain;
  led.budget_hypothesis = led.system_saving >= rents;
  return led;
}

std::vector<double> lmp_settlement(const Grid& grid, const CouplingOutcome& run) {
  const auto na = grid.area_count();
  std::vector<double> out(na, 0.0);
  if (run.trace.empty()) return out;
  const int kk = run.iterations();
  const auto& last = run.trace.back();
  for (std::size_t a = 0; a < na; ++a) {
    const auto in = area_input(grid, run, a, signals_before(run, kk), prices_before(run, kk));
    double energy = 0.0;
    for (std::size_t k = 0; k < in.ties.size(); ++k)
      if (!in.ties[k].fixed_flow) energy += in.ties[k].remote_lmp * last.raw[a].flow[k];
    out[a] = run.initial_cost[a] - last.true_cost[a] + energy;
  }
  return out;
}

double DeviationReport::gain() const {
  return deviation.areas.at(area).total_cost_reduction - equilibrium.areas.at(area).total_cost_reduction;
}

namespace {

std::vector<double> scale_vector(const Grid& grid, std::size_t area, double factor) {
  std::vector<double> s(grid.area_count(), 1.0);
  s.at(area) = factor;
  return s;
}

}  // namespace

DeviationReport deviation_experiment(const Grid& grid, const MechanismConfig& config, std::size_t area, double factor,
                                     const OracleCosts* oracle, const IncentiveLedger* equilibrium) {
  if (area >= grid.area_count()) throw std::invalid_argument("unknown deviating area");
  if (!(factor > 0.0)) throw std::invalid_argument("deviation factor must be positive");
  OracleCosts local;
  if (!oracle) {
    local = oracle_costs(grid);
    oracle = &local;
  }
  DeviationReport rep;
  rep.area = area;
  rep.factor = factor;
  rep.fee = participation_fee(*oracle);
  rep.epsilon_tol = 0.01 * (oracle->initial_total() - oracle->total);
  rep.equilibrium = equilibrium ? *equilibrium : settle(grid, run_all(grid, config), rep.fee, oracle);
  rep.deviation = factor == 1.0 ? rep.equilibrium
                                : settle(grid, run_all(grid, config, scale_vector(grid, area, factor)), rep.fee, oracle);
  return rep;
}

BenchmarkReport lmp_benchmark(const Grid& grid, const MechanismConfig& config, std::optional<std::size_t> area,
                              double factor) {
  BenchmarkReport rep;
  rep.area = area;
  rep.factor = factor;
  if (area && *area >= grid.area_count()) throw std::invalid_argument("unknown deviating area");
  if (!(factor > 0.0)) throw std::invalid_argument("deviation factor must be positive");
  std::vector<CouplingOutcome> runs(area ? 2 : 1);
  detail::parallel_for(runs.size(), std::max(config.jobs, 1), [&](std::size_t i) {
    auto cfg = config;
    cfg.jobs = 1;
    runs[i] = i == 0 ? run(grid, cfg) : run(grid, cfg, scale_vector(grid, *area, factor));
  });
  rep.equilibrium = lmp_settlement(grid, runs[0]);
  if (area) rep.deviation = lmp_settlement(grid, runs[1]);
  return rep;
}

double EnvelopeProbe::error() const { return std::abs(exact - estimate); }

EnvelopeProbe envelope_probe(const Grid& grid, const CouplingOutcome& run, std::size_t area, int k, double step) {
  if (k < 1 || k > run.iterations()) throw std::out_of_range("probe iteration outside the run");
  const auto& net = grid.network();
  const auto& rec = run.trace[static_cast<std::size_t>(k - 1)];
  const auto& base_sig = signals_before(run, k);
  const auto& base_mu = prices_before(run, k);

  auto moved = base_sig;
  for (std::size_t a = 0; a < moved.size(); ++a) {
    if (!run.participating[a]) continue;
    for (std::size_t i = 0; i < moved[a].flow.size(); ++i) {
      moved[a].flow[i] += step * (rec.raw[a].flow[i] - base_sig[a].flow[i]);
      moved[a].angle[i] += step * (rec.raw[a].angle[i] - base_sig[a].angle[i]);
      moved[a].lmp[i] += step * (rec.raw[a].lmp[i] - base_sig[a].lmp[i]);
    }
  }
  auto mu = base_mu;
  for (std::size_t t = 0; t < mu.size(); ++t) {
    if (!run.tie_active[t]) continue;
    const auto [i, j] = grid.tieline_ends(t);
    const auto ai = grid.bus_area(i), aj = grid.bus_area(j);
    const auto pi = static_cast<std::size_t>(&grid.view(ai, t) - grid.area(ai).tielines.data());
    const auto pj = static_cast<std::size_t>(&grid.view(aj, t) - grid.area(aj).tielines.data());
    const double excess =
        0.5 * (std::abs(rec.raw[ai].flow[pi]) + std::abs(rec.raw[aj].flow[pj])) - net.tielines[t].limit;
    mu[t] = std::max(mu[t] + step * excess, 0.0);
  }

  const auto before = area_input(grid, run, area, base_sig, base_mu);
  const auto after = area_input(grid, run, area, moved, mu);
  const auto s0 = solve_area(grid, before);
  const auto s1 = solve_area(grid, after);
  return {s1.value - s0.value, delta_V(grid, before, s0, after)};
}

namespace {

std::string money(double v) {
  if (std::isnan(v)) return "n/a";
  const long long r = std::llround(v);
  std::string digits = std::to_string(std::llabs(r));
  for (int pos = static_cast<int>(digits.size()) - 3; pos > 0; pos -= 3) digits.insert(static_cast<std::size_t>(pos), ",");
  return (r < 0 ? "-" : "") + digits;
}

}  // namespace

void write_ledger_csv(std::ostream& os, const Grid& grid, const IncentiveLedger& ledger) {
  os << std::setprecision(10);
  os << "area,initial_cost,final_cost,internal_cost_change,marginal_contribution,marginal_contribution_limit,"
        "marginal_contribution_oracle,transfer_total,fee,total_cost_reduction,ideal_cost_reduction,delta\n";
  for (std::size_t a = 0; a < ledger.areas.size(); ++a) {
    const auto& l = ledger.areas[a];
    os << grid.area(a).id << ',' << l.initial_cost << ',' << l.final_cost << ',' << l.internal_cost_change << ','
       << l.marginal_contribution << ',' << l.marginal_contribution_limit << ',' << l.marginal_contribution_oracle
       << ',' << l.transfer_total << ',' << ledger.fee << ',' << l.total_cost_reduction << ','
       << l.ideal_cost_reduction << ',' << l.delta << '\n';
  }
}

void write_ledger_report(std::ostream& os, const Grid& grid, const IncentiveLedger& ledger) {
  const auto na = ledger.areas.size();
  const int w = 12;
  os << "Net cost reduction after " << ledger.iterations << " iterations\n\n";
  os << std::left << std::setw(30) << "" << std::right;
  for (std::size_t a = 0; a < na; ++a) os << std::setw(w) << grid.area(a).id;
  os << '\n';
  auto row = [&](const char* label, auto get) {
    os << std::left << std::setw(30) << label << std::right;
    for (std::size_t a = 0; a < na; ++a) os << std::setw(w) << money(get(ledger.areas[a]));
    os << '\n';
  };
  row("Internal cost change ($)", [](const AreaLedger& l) { return l.internal_cost_change; });
  row("Marginal contribution ($)", [](const AreaLedger& l) { return l.marginal_contribution; });
  row("  from run costs ($)", [](const AreaLedger& l) { return l.marginal_contribution_limit; });
  row("  oracle ($)", [](const AreaLedger& l) { return l.marginal_contribution_oracle; });
  row("Transfers ($)", [](const AreaLedger& l) { return l.transfer_total; });
  row("Total cost reduction ($)", [](const AreaLedger& l) { return l.total_cost_reduction; });
  row(ledger.oracle ? "  ideal, oracle ($)" : "  ideal, run limits ($)",
      [](const AreaLedger& l) { return l.ideal_cost_reduction; });
  row("Delta ($)", [](const AreaLedger& l) { return l.delta; });
  os << '\n';
  os << std::left << std::setw(30) << "Participation fee ($)" << money(ledger.fee) << '\n';
  os << std::setw(30) << "Budget ($)" << money(ledger.budget) << '\n';
  os << std::setw(30) << "Congestion rent ($)" << money(ledger.congestion_rent) << '\n';
  os << std::setw(30) << "  oracle ($)" << money(ledger.congestion_rent_oracle) << '\n';
  os << std::setw(30) << "Mechanism surplus ($)" << money(ledger.surplus) << '\n';
  os << std::setw(30) << "System saving ($)" << money(ledger.system_saving) << '\n';
  os << std::setw(30) << "Budget condition" << (ledger.budget_hypothesis ? "holds" : "fails") << '\n';
  os << std::setw(30) << "delta_tol ($)" << std::fixed << std::setprecision(3) << ledger.delta_tol << '\n'
     << std::defaultfloat << std::right;
}

void write_deviation_report(std::ostream& os, const Grid& grid, const std::vector<DeviationReport>& reports) {
  const auto na = grid.area_count();
  const int w = 12;
  os << "Total cost reduction ($), incentive transfers\n\n";
  os << std::left << std::setw(24) << "" << std::right;
  for (std::size_t a = 0; a < na; ++a) os << std::setw(w) << grid.area(a).id;
  os << '\n';
  if (reports.empty()) return;
  os << std::left << std::setw(24) << "Equilibrium reporting" << std::right;
  for (const auto& l : reports.front().equilibrium.areas) os << std::setw(w) << money(l.total_cost_reduction);
  os << '\n';
  for (const auto& r : reports) {
    std::ostringstream label;
    label << grid.area(r.area).id << " x" << r.factor;
    os << std::left << std::setw(24) << label.str() << std::right;
    for (const auto& l : r.deviation.areas) os << std::setw(w) << money(l.total_cost_reduction);
    os << "   gain " << money(r.gain()) << " (tol " << money(r.epsilon_tol) << ")\n";
  }
}

void write_benchmark_report(std::ostream& os, const Grid& grid, const std::vector<BenchmarkReport>& reports) {
  const auto na = grid.area_count();
  const int w = 12;
  os << "Total cost reduction ($), LMP settlement\n\n";
  os << std::left << std::setw(24) << "" << std::right;
  for (std::size_t a = 0; a < na; ++a) os << std::setw(w) << grid.area(a).id;
  os << '\n';
  if (reports.empty()) return;
  os << std::left << std::setw(24) << "Equilibrium reporting" << std::right;
  for (double v : reports.front().equilibrium) os << std::setw(w) << money(v);
  os << '\n';
  for (const auto& r : reports) {
    if (!r.area) continue;
    std::ostringstream label;
    label << grid.area(*r.area).id << " x" << r.factor;
    os << std::left << std::setw(24) << label.str() << std::right;
    for (double v : r.deviation) os << std::setw(w) << money(v);
    os << '\n';
  }
}

}  // namespace mcoupling
