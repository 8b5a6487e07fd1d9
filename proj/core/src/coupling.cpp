#include "mcoupling/coupling.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

namespace mcoupling {

std::string_view to_string(RhoSchedule s) {
  switch (s) {
    case RhoSchedule::Log: return "log";
    case RhoSchedule::Harmonic: return "harmonic";
  }
  return "log";
}

std::string_view to_string(StoppingMode s) {
  switch (s) {
    case StoppingMode::FixedIterations: return "fixed";
    case StoppingMode::Tolerance: return "tolerance";
  }
  return "fixed";
}

RhoSchedule parse_rho_schedule(std::string_view name) {
  if (name == "log") return RhoSchedule::Log;
  if (name == "harmonic") return RhoSchedule::Harmonic;
  throw std::invalid_argument("unknown rho schedule '" + std::string(name) + "' (expected log or harmonic)");
}

StoppingMode parse_stopping_mode(std::string_view name) {
  if (name == "fixed") return StoppingMode::FixedIterations;
  if (name == "tolerance") return StoppingMode::Tolerance;
  throw std::invalid_argument("unknown stopping mode '" + std::string(name) + "' (expected fixed or tolerance)");
}

double MechanismConfig::rho_at(int k) const {
  if (k < 1) throw std::invalid_argument("rho is defined for k >= 1");
  switch (rho) {
    case RhoSchedule::Log: return 1.0 / (1.0 + std::log(static_cast<double>(k)));
    case RhoSchedule::Harmonic: return 1.0 / static_cast<double>(k);
  }
  return 1.0;
}

std::vector<std::string> MechanismConfig::errors() const {
  std::vector<std::string> out;
  if (!(beta > 0.0 && beta < 1.0)) out.emplace_back("beta must lie in (0, 1)");
  if (!(mu0 >= 0.0) || !std::isfinite(mu0)) out.emplace_back("mu0 must be a finite nonnegative price");
  if (max_iterations < 0) out.emplace_back("max_iterations must be nonnegative");
  if (!(tol_flow > 0.0)) out.emplace_back("tol_flow must be positive");
  if (!(tol_price > 0.0)) out.emplace_back("tol_price must be positive");
  if (price_window < 1) out.emplace_back("price_window must be at least 1");
  if (!(tol_slackness > 0.0)) out.emplace_back("tol_slackness must be positive");
  if (jobs < 1) out.emplace_back("jobs must be at least 1");
  return out;
}

std::vector<std::string> MechanismConfig::warnings() const {
  std::vector<std::string> out;
  if (rho == RhoSchedule::Log)
    out.emplace_back("rho_k = 1/(1+ln k) has a divergent sum of squares; the convergence guarantee assumes "
                     "square-summable steps (use --rho harmonic for rho_k = 1/k)");
  return out;
}

double price_update(double mu_prev, double flow_a, double flow_b, double limit, double beta) {
  return std::max(mu_prev + beta * (0.5 * (std::abs(flow_a) + std::abs(flow_b)) - limit), 0.0);
}

std::vector<double> inertia_update(const std::vector<double>& prev, const std::vector<double>& raw, double rho) {
  if (prev.size() != raw.size()) throw std::invalid_argument("inertia_update: dimension mismatch");
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("inertia_update: rho must lie in (0, 1]");
  std::vector<double> out(prev.size());
  for (std::size_t i = 0; i < prev.size(); ++i) out[i] = rho == 1.0 ? raw[i] : (1.0 - rho) * prev[i] + rho * raw[i];
  return out;
}

AreaSignal inertia_update(const AreaSignal& prev, const AreaSignal& raw, double rho) {
  return {inertia_update(prev.flow, raw.flow, rho), inertia_update(prev.angle, raw.angle, rho),
          inertia_update(prev.lmp, raw.lmp, rho)};
}

std::vector<double> CouplingOutcome::final_flows(const Grid& grid) const {
  const auto& net = grid.network();
  std::vector<double> out(net.tielines.size(), 0.0);
  const auto& sig = final_state.smoothed.empty() ? initial : final_state.smoothed;
  for (std::size_t a = 0; a < grid.area_count(); ++a) {
    const auto& ties = grid.area(a).tielines;
    for (std::size_t k = 0; k < ties.size(); ++k) out[ties[k].tieline] += 0.5 * ties[k].orientation() * sig[a].flow[k];
  }
  return out;
}

namespace {

struct RemoteSlot {
  std::size_t area;
  std::size_t position;
};

// remote[a][k]: where the far end of area a's k-th tie sits.
std::vector<std::vector<RemoteSlot>> remote_slots(const Grid& grid) {
  std::vector<std::vector<RemoteSlot>> out(grid.area_count());
  for (std::size_t a = 0; a < grid.area_count(); ++a) {
    for (const auto& v : grid.area(a).tielines) {
      const auto& far = grid.area(v.remote_area).tielines;
      std::size_t pos = 0;
      while (far[pos].tieline != v.tieline) ++pos;
      out[a].push_back({v.remote_area, pos});
    }
  }
  return out;
}

double tie_excess(const Grid& grid, const std::vector<AreaSignal>& sig, std::size_t t, double& gap) {
  const auto [i, j] = grid.tieline_ends(t);
  const auto ai = grid.bus_area(i), aj = grid.bus_area(j);
  const auto& vi = grid.view(ai, t);
  const auto& vj = grid.view(aj, t);
  const auto& ti = grid.area(ai).tielines;
  const auto& tj = grid.area(aj).tielines;
  const auto pi = static_cast<std::size_t>(&vi - ti.data());
  const auto pj = static_cast<std::size_t>(&vj - tj.data());
  const double fa = sig[ai].flow[pi];
  const double fb = sig[aj].flow[pj];
  gap = std::abs(fa + fb);
  return 0.5 * (std::abs(fa) + std::abs(fb)) - grid.network().tielines[t].limit;
}

CouplingOutcome run_impl(const Grid& grid, const MechanismConfig& config, std::vector<bool> participating,
                         std::vector<double> fixed_flows, std::vector<double> cost_scale,
                         std::optional<std::size_t> excluded) {
  if (auto errs = config.errors(); !errs.empty()) throw std::invalid_argument("mechanism config: " + errs.front());
  const auto& net = grid.network();
  const auto na = grid.area_count();
  const auto nt = net.tielines.size();
  if (cost_scale.empty()) cost_scale.assign(na, 1.0);
  if (cost_scale.size() != na) throw std::invalid_argument("cost_scale needs one entry per area");
  for (double s : cost_scale)
    if (!(s > 0.0)) throw std::invalid_argument("cost scale factors must be positive");
  if (fixed_flows.empty()) fixed_flows.assign(nt, 0.0);
  if (fixed_flows.size() != nt) throw std::invalid_argument("fixed_flows needs one entry per tieline");

  CouplingOutcome out;
  out.participating = participating;
  out.excluded = excluded;
  out.cost_scale = cost_scale;
  out.fixed_flows = fixed_flows;
  out.split = config.split;
  out.warnings = config.warnings();
  out.tie_active.resize(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    const auto [i, j] = grid.tieline_ends(t);
    out.tie_active[t] = participating[grid.bus_area(i)] && participating[grid.bus_area(j)];
  }

  // Angle reference: one area per coupled component of participating areas.
  {
    std::vector<std::size_t> comp(na);
    for (std::size_t a = 0; a < na; ++a) comp[a] = a;
    auto find = [&](std::size_t x) {
      while (comp[x] != x) x = comp[x] = comp[comp[x]];
      return x;
    };
    for (std::size_t t = 0; t < nt; ++t) {
      if (!out.tie_active[t]) continue;
      const auto [i, j] = grid.tieline_ends(t);
      const auto ra = find(grid.bus_area(i)), rb = find(grid.bus_area(j));
      if (ra != rb) comp[std::max(ra, rb)] = std::min(ra, rb);
    }
    out.pins_reference.assign(na, false);
    std::vector<bool> done(na, false);
    if (participating[grid.slack_area()]) {
      out.pins_reference[grid.slack_area()] = true;
      done[find(grid.slack_area())] = true;
    }
    for (std::size_t a = 0; a < na; ++a) {
      if (!participating[a] || done[find(a)]) continue;
      out.pins_reference[a] = true;
      done[find(a)] = true;
    }
  }

  // x^0: zero (or frozen) flows, stand-alone angles, zero prices.
  out.initial.resize(na);
  out.initial_cost.resize(na);
  out.initial_trade_value.assign(na, 0.0);
  out.mu0.assign(nt, 0.0);
  for (std::size_t t = 0; t < nt; ++t)
    if (out.tie_active[t]) out.mu0[t] = config.mu0;
  std::vector<double> clearing_flows(nt, 0.0);
  for (std::size_t t = 0; t < nt; ++t) clearing_flows[t] = out.tie_active[t] ? 0.0 : fixed_flows[t];
  for (std::size_t a = 0; a < na; ++a) {
    const auto clearing = stand_alone_clearing(grid, a, clearing_flows);
    out.initial_cost[a] = clearing.cost;
    auto& sig = out.initial[a];
    for (const auto& v : grid.area(a).tielines) {
      sig.flow.push_back(out.tie_active[v.tieline] ? 0.0 : v.orientation() * fixed_flows[v.tieline]);
      sig.angle.push_back(clearing.angle[grid.local_bus_position(v.local_bus)]);
      sig.lmp.push_back(0.0);
      if (out.tie_active[v.tieline]) out.initial_trade_value[a] += 0.5 * out.mu0[v.tieline] * v.limit;
    }
  }

  std::vector<AreaSignal> prev = out.initial;
  std::vector<double> mu = out.mu0;
  const int rounds = config.max_iterations + 1;
  const int inner_jobs = config.jobs;
  for (int k = 1; k <= rounds; ++k) {
    IterationRecord rec;
    rec.k = k;
    rec.rho = config.rho_at(k);
    rec.raw.resize(na);
    rec.coupling_dual.resize(na);
    rec.cost.resize(na);
    rec.true_cost.resize(na);
    rec.value.resize(na);
    rec.trade_value.resize(na);
    detail::parallel_for(na, inner_jobs, [&](std::size_t a) {
      if (!participating[a]) {
        rec.raw[a] = out.initial[a];
        rec.coupling_dual[a].assign(grid.area(a).tielines.size(), 0.0);
        rec.cost[a] = rec.true_cost[a] = rec.value[a] = out.initial_cost[a];
        rec.trade_value[a] = 0.0;
        return;
      }
      const auto res = solve_area(grid, area_input(grid, out, a, prev, mu));
      rec.raw[a] = {res.flow, res.boundary_angle, res.boundary_lmp};
      rec.coupling_dual[a] = res.coupling_dual;
      rec.cost[a] = res.cost;
      rec.true_cost[a] = res.true_cost;
      rec.value[a] = res.value;
      rec.trade_value[a] = res.trade_value;
    });
    rec.smoothed.resize(na);
    for (std::size_t a = 0; a < na; ++a) {
      rec.smoothed[a] = participating[a] ? inertia_update(prev[a], rec.raw[a], rec.rho) : prev[a];
      for (std::size_t i = 0; i < prev[a].flow.size(); ++i) {
        rec.step_norm = std::max({rec.step_norm, std::abs(rec.smoothed[a].flow[i] - prev[a].flow[i]),
                                  std::abs(rec.smoothed[a].angle[i] - prev[a].angle[i]),
                                  std::abs(rec.smoothed[a].lmp[i] - prev[a].lmp[i])});
      }
    }
    rec.mu = mu;
    rec.excess.assign(nt, 0.0);
    rec.flow_gap.assign(nt, 0.0);
    rec.slackness.assign(nt, 0.0);
    for (std::size_t t = 0; t < nt; ++t) {
      double gap = 0.0;
      rec.excess[t] = tie_excess(grid, rec.smoothed, t, gap);
      rec.flow_gap[t] = gap;
      if (!out.tie_active[t]) continue;
      const auto [i, j] = grid.tieline_ends(t);
      const double fa = rec.smoothed[grid.bus_area(i)].flow[static_cast<std::size_t>(
          &grid.view(grid.bus_area(i), t) - grid.area(grid.bus_area(i)).tielines.data())];
      const double fb = rec.smoothed[grid.bus_area(j)].flow[static_cast<std::size_t>(
          &grid.view(grid.bus_area(j), t) - grid.area(grid.bus_area(j)).tielines.data())];
      rec.mu[t] = price_update(mu[t], fa, fb, net.tielines[t].limit, config.beta);
      rec.slackness[t] = rec.mu[t] * rec.excess[t];
    }
    prev = rec.smoothed;
    mu = rec.mu;
    out.trace.push_back(std::move(rec));
    const auto idx = out.trace.size() - 1;
    if (meets_tolerance(grid, out, config, idx)) {
      if (out.converged_at == 0) out.converged_at = k;
      if (config.stopping == StoppingMode::Tolerance) break;
    } else if (config.stopping == StoppingMode::FixedIterations) {
      out.converged_at = 0;
    }
  }
  out.final_state.k = out.iterations();
  out.final_state.smoothed = out.trace.empty() ? out.initial : out.trace.back().smoothed;
  out.final_state.raw = out.trace.empty() ? out.initial : out.trace.back().raw;
  out.final_state.mu = out.trace.empty() ? out.mu0 : out.trace.back().mu;
  out.converged = !out.trace.empty() && meets_tolerance(grid, out, config, out.trace.size() - 1);
  return out;
}

}  // namespace

AreaSubproblemInput area_input(const Grid& grid, const CouplingOutcome& run, std::size_t area,
                               const std::vector<AreaSignal>& smoothed, const std::vector<double>& mu) {
  const auto remote = remote_slots(grid);
  AreaSubproblemInput in;
  in.area = area;
  in.cost_scale = run.cost_scale.empty() ? 1.0 : run.cost_scale[area];
  in.pin_reference = run.pins_reference[area];
  in.split = run.split;
  const auto& ties = grid.area(area).tielines;
  for (std::size_t k = 0; k < ties.size(); ++k) {
    const auto t = ties[k].tieline;
    TieSignal s;
    if (!run.tie_active[t]) {
      s.fixed_flow = ties[k].orientation() * run.fixed_flows[t];
    } else {
      const auto slot = remote[area][k];
      s.remote_lmp = smoothed[slot.area].lmp[slot.position];
      s.remote_angle = smoothed[slot.area].angle[slot.position];
      s.mu = mu[t];
    }
    in.ties.push_back(s);
  }
  return in;
}

bool meets_tolerance(const Grid& grid, const CouplingOutcome& run, const MechanismConfig& config, std::size_t index) {
  const auto& rec = run.trace.at(index);
  const auto& net = grid.network();
  const auto window = static_cast<std::size_t>(config.price_window);
  const auto& old_mu = index >= window ? run.trace[index - window].mu : run.mu0;
  const bool drift_known = index + 1 >= window;
  for (std::size_t t = 0; t < net.tielines.size(); ++t) {
    if (!run.tie_active[t]) continue;
    const double limit = net.tielines[t].limit;
    if (rec.flow_gap[t] > config.tol_flow) return false;
    if (rec.excess[t] > config.tol_flow) return false;
    if (std::abs(rec.slackness[t]) > config.tol_slackness * std::max(rec.mu[t], 1.0) * limit) return false;
    if (!drift_known || std::abs(rec.mu[t] - old_mu[t]) >= config.tol_price) return false;
  }
  return true;
}

CouplingOutcome run(const Grid& grid, const MechanismConfig& config, const std::vector<double>& cost_scale) {
  return run_impl(grid, config, std::vector<bool>(grid.area_count(), true), {}, cost_scale, std::nullopt);
}

CouplingOutcome run_excluded(const Grid& grid, const MechanismConfig& config, std::size_t excluded,
                             const std::vector<double>& cost_scale, const std::vector<double>& fixed_flows) {
  if (excluded >= grid.area_count()) throw std::invalid_argument("unknown area index");
  std::vector<bool> participating(grid.area_count(), true);
  participating[excluded] = false;
  return run_impl(grid, config, participating, fixed_flows, cost_scale, excluded);
}

std::vector<CouplingOutcome> run_all(const Grid& grid, const MechanismConfig& config,
                                     const std::vector<double>& cost_scale) {
  std::vector<CouplingOutcome> out(grid.area_count() + 1);
  MechanismConfig inner = config;
  inner.jobs = 1;
  detail::parallel_for(out.size(), config.jobs, [&](std::size_t i) {
    out[i] = i == 0 ? run(grid, inner, cost_scale) : run_excluded(grid, inner, i - 1, cost_scale);
  });
  return out;
}

void write_tieline_trace(std::ostream& os, const Grid& grid, const CouplingOutcome& run) {
  const auto& net = grid.network();
  os << "k,tieline,T_from,T_to,mu,mismatch\n";
  auto emit = [&](int k, const std::vector<AreaSignal>& sig, const std::vector<double>& mu) {
    for (std::size_t t = 0; t < net.tielines.size(); ++t) {
      const auto [i, j] = grid.tieline_ends(t);
      const auto ai = grid.bus_area(i), aj = grid.bus_area(j);
      const auto pi = static_cast<std::size_t>(&grid.view(ai, t) - grid.area(ai).tielines.data());
      const auto pj = static_cast<std::size_t>(&grid.view(aj, t) - grid.area(aj).tielines.data());
      double gap = 0.0;
      const double excess = tie_excess(grid, sig, t, gap);
      os << k << ',' << net.tielines[t].id << ',' << sig[ai].flow[pi] << ',' << sig[aj].flow[pj] << ',' << mu[t] << ','
         << excess << '\n';
    }
  };
  emit(0, run.initial, run.mu0);
  for (const auto& rec : run.trace) emit(rec.k, rec.smoothed, rec.mu);
}

void write_boundary_trace(std::ostream& os, const Grid& grid, const CouplingOutcome& run) {
  const auto& net = grid.network();
  os << "k,area,bus,tieline,lmp,angle\n";
  auto emit = [&](int k, const std::vector<AreaSignal>& sig) {
    for (std::size_t a = 0; a < grid.area_count(); ++a) {
      const auto& ties = grid.area(a).tielines;
      for (std::size_t p = 0; p < ties.size(); ++p) {
        os << k << ',' << net.areas[a] << ',' << net.buses[ties[p].local_bus].id << ','
           << net.tielines[ties[p].tieline].id << ',' << sig[a].lmp[p] << ',' << sig[a].angle[p] << '\n';
      }
    }
  };
  emit(0, run.initial);
  for (const auto& rec : run.trace) emit(rec.k, rec.smoothed);
}

}  // namespace mcoupling
