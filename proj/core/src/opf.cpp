#include "mcoupling/opf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mcoupling {

namespace {

using Entries = std::vector<std::pair<Eigen::Index, double>>;

// Accumulates a QP row by row.
class Assembler {
 public:
  Eigen::Index add_var(std::string name, double q, double c) {
    const auto idx = static_cast<Eigen::Index>(c_.size());
    if (q != 0.0) q_.emplace_back(idx, idx, q);
    c_.push_back(c);
    names_.push_back(std::move(name));
    return idx;
  }
  Eigen::Index add_eq(const Entries& row, double rhs) {
    const auto r = static_cast<Eigen::Index>(b_.size());
    for (auto [col, v] : row) a_.emplace_back(r, col, v);
    b_.push_back(rhs);
    return r;
  }
  Eigen::Index add_le(const Entries& row, double rhs) {
    const auto r = static_cast<Eigen::Index>(h_.size());
    for (auto [col, v] : row) g_.emplace_back(r, col, v);
    h_.push_back(rhs);
    return r;
  }
  void add_constant(double v) { constant_ += v; }

  qp::QpProblem finish() const {
    qp::QpProblem p;
    const auto n = static_cast<Eigen::Index>(c_.size());
    p.Q.resize(n, n);
    p.Q.setFromTriplets(q_.begin(), q_.end());
    p.c = Eigen::Map<const Eigen::VectorXd>(c_.data(), n);
    p.A.resize(static_cast<Eigen::Index>(b_.size()), n);
    p.A.setFromTriplets(a_.begin(), a_.end());
    p.b = Eigen::Map<const Eigen::VectorXd>(b_.data(), static_cast<Eigen::Index>(b_.size()));
    p.G.resize(static_cast<Eigen::Index>(h_.size()), n);
    p.G.setFromTriplets(g_.begin(), g_.end());
    p.h = Eigen::Map<const Eigen::VectorXd>(h_.data(), static_cast<Eigen::Index>(h_.size()));
    p.constant = constant_;
    p.variable_names = names_;
    return p;
  }

 private:
  qp::Triplets q_, a_, g_;
  std::vector<double> c_, b_, h_;
  std::vector<std::string> names_;
  double constant_ = 0.0;
};

// Variables and rows of one area's internal network.
struct AreaBlock {
  std::size_t area = 0;
  std::vector<Eigen::Index> gen_var;     // per area generator
  std::vector<Eigen::Index> angle_var;   // per area bus
  std::vector<Entries> balance;          // per area bus, pending row entries
  std::vector<double> balance_rhs;       // per area bus
  std::vector<Eigen::Index> line_upper;  // per area line
  std::vector<Eigen::Index> line_lower;
  std::vector<Eigen::Index> balance_row; // set once rows are emitted
};

AreaBlock add_area(Assembler& as, const Grid& grid, std::size_t a, double cost_scale) {
  const auto& net = grid.network();
  const auto& topo = grid.area(a);
  AreaBlock blk;
  blk.area = a;
  blk.balance.resize(topo.buses.size());
  blk.balance_rhs.resize(topo.buses.size());
  for (std::size_t k = 0; k < topo.buses.size(); ++k) {
    const auto& bus = net.buses[topo.buses[k]];
    blk.angle_var.push_back(as.add_var("theta:" + bus.id, 0.0, 0.0));
    blk.balance_rhs[k] = -bus.load;
  }
  for (auto g : topo.generators) {
    const auto& gen = net.generators[g];
    const auto cost = gen.cost.scaled(cost_scale);
    const auto v = as.add_var("P:" + gen.id, 2.0 * cost.c2, cost.c1);
    as.add_constant(cost.c0);
    blk.gen_var.push_back(v);
    as.add_le({{v, 1.0}}, gen.p_max);
    as.add_le({{v, -1.0}}, -gen.p_min);
    blk.balance[grid.local_bus_position(grid.generator_bus(g))].emplace_back(v, -1.0);
  }
  for (auto l : topo.lines) {
    const auto& line = net.lines[l];
    const auto [i, j] = grid.line_ends(l);
    const auto pi = grid.local_bus_position(i);
    const auto pj = grid.local_bus_position(j);
    const double y = 1.0 / line.reactance;
    const Entries flow{{blk.angle_var[pi], y}, {blk.angle_var[pj], -y}};
    const Entries neg{{blk.angle_var[pi], -y}, {blk.angle_var[pj], y}};
    blk.line_upper.push_back(as.add_le(flow, line.limit));
    blk.line_lower.push_back(as.add_le(neg, line.limit));
    blk.balance[pi].insert(blk.balance[pi].end(), flow.begin(), flow.end());
    blk.balance[pj].insert(blk.balance[pj].end(), neg.begin(), neg.end());
  }
  return blk;
}

void emit_balance(Assembler& as, AreaBlock& blk) {
  for (std::size_t k = 0; k < blk.balance.size(); ++k) blk.balance_row.push_back(as.add_eq(blk.balance[k], blk.balance_rhs[k]));
}

double area_true_cost(const Grid& grid, std::size_t a, const std::vector<double>& dispatch_global) {
  double cost = 0.0;
  for (auto g : grid.area(a).generators) cost += grid.network().generators[g].cost(dispatch_global[g]);
  return cost;
}

// Union-find over areas.
struct Components {
  std::vector<std::size_t> parent;
  explicit Components(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void join(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

void solve_group(const Grid& grid, const std::vector<std::size_t>& group, const std::vector<double>& fixed,
                 const qp::QpOptions& options, CentralizedSolution& out) {
  const auto& net = grid.network();
  std::vector<bool> in_group(grid.area_count(), false);
  for (auto a : group) in_group[a] = true;

  Assembler as;
  std::vector<AreaBlock> blocks;
  std::vector<std::size_t> block_of(grid.area_count(), 0);
  for (auto a : group) {
    block_of[a] = blocks.size();
    blocks.push_back(add_area(as, grid, a, 1.0));
  }

  struct TieVars {
    std::size_t t;
    Eigen::Index var, row, upper, lower;
  };
  std::vector<TieVars> ties;
  Components comp(grid.area_count());
  for (std::size_t t = 0; t < net.tielines.size(); ++t) {
    const auto [i, j] = grid.tieline_ends(t);
    const auto ai = grid.bus_area(i);
    const auto aj = grid.bus_area(j);
    auto& bi = blocks[block_of[ai]];
    auto& bj = blocks[block_of[aj]];
    const auto pi = grid.local_bus_position(i);
    const auto pj = grid.local_bus_position(j);
    if (in_group[ai] && in_group[aj]) {
      const auto& tie = net.tielines[t];
      const auto v = as.add_var("T:" + tie.id, 0.0, 0.0);
      bi.balance[pi].emplace_back(v, 1.0);
      bj.balance[pj].emplace_back(v, -1.0);
      const double y = 1.0 / tie.reactance;
      const auto row = as.add_eq({{v, 1.0}, {bi.angle_var[pi], -y}, {bj.angle_var[pj], y}}, 0.0);
      const auto up = as.add_le({{v, 1.0}}, tie.limit);
      const auto lo = as.add_le({{v, -1.0}}, tie.limit);
      ties.push_back({t, v, row, up, lo});
      comp.join(ai, aj);
    } else {
      out.tie_frozen[t] = true;
      out.tie_flow[t] = fixed[t];
      if (in_group[ai]) bi.balance_rhs[pi] -= fixed[t];
      if (in_group[aj]) bj.balance_rhs[pj] += fixed[t];
    }
  }
  for (auto& blk : blocks) emit_balance(as, blk);

  // One angle reference per coupled component.
  std::vector<bool> pinned(grid.area_count(), false);
  const auto slack_root = in_group[grid.slack_area()] ? std::optional(comp.find(grid.slack_area())) : std::nullopt;
  if (slack_root) {
    pinned[*slack_root] = true;
    const auto s = grid.slack_bus();
    as.add_eq({{blocks[block_of[grid.slack_area()]].angle_var[grid.local_bus_position(s)], 1.0}}, 0.0);
  }
  for (auto a : group) {
    const auto root = comp.find(a);
    if (pinned[root]) continue;
    pinned[root] = true;
    const auto r = reference_bus(grid, a);
    as.add_eq({{blocks[block_of[a]].angle_var[grid.local_bus_position(r)], 1.0}}, 0.0);
  }

  const auto problem = as.finish();
  const auto sol = qp::solve_or_throw(problem, options);
  out.degenerate_active += sol.degenerate_active;
  const double base = net.base_mva;

  for (const auto& blk : blocks) {
    const auto& topo = grid.area(blk.area);
    for (std::size_t k = 0; k < topo.buses.size(); ++k) {
      out.angle[topo.buses[k]] = sol.x[blk.angle_var[k]] / base;
      out.lmp[topo.buses[k]] = sol.y[blk.balance_row[k]];
    }
    for (std::size_t k = 0; k < topo.generators.size(); ++k) out.dispatch[topo.generators[k]] = sol.x[blk.gen_var[k]];
    for (std::size_t k = 0; k < topo.lines.size(); ++k) {
      const auto l = topo.lines[k];
      const auto [i, j] = grid.line_ends(l);
      out.line_flow[l] = (out.angle[i] - out.angle[j]) * base / net.lines[l].reactance;
      out.line_upper_dual[l] = sol.z[blk.line_upper[k]];
      out.line_lower_dual[l] = sol.z[blk.line_lower[k]];
    }
  }
  for (const auto& tv : ties) {
    out.tie_frozen[tv.t] = false;
    out.tie_flow[tv.t] = sol.x[tv.var];
    out.tie_coupling_dual[tv.t] = sol.y[tv.row];
    out.tie_upper_dual[tv.t] = sol.z[tv.upper];
    out.tie_lower_dual[tv.t] = sol.z[tv.lower];
  }
}

CentralizedSolution empty_solution(const Network& net) {
  CentralizedSolution out;
  out.dispatch.assign(net.generators.size(), 0.0);
  out.angle.assign(net.buses.size(), 0.0);
  out.lmp.assign(net.buses.size(), 0.0);
  out.line_flow.assign(net.lines.size(), 0.0);
  out.line_upper_dual.assign(net.lines.size(), 0.0);
  out.line_lower_dual.assign(net.lines.size(), 0.0);
  out.tie_flow.assign(net.tielines.size(), 0.0);
  out.tie_upper_dual.assign(net.tielines.size(), 0.0);
  out.tie_lower_dual.assign(net.tielines.size(), 0.0);
  out.tie_coupling_dual.assign(net.tielines.size(), 0.0);
  out.tie_frozen.assign(net.tielines.size(), true);
  return out;
}

}  // namespace

double CentralizedSolution::capacity_price(std::size_t tieline) const {
  return 2.0 * std::abs(tie_upper_dual.at(tieline) - tie_lower_dual.at(tieline));
}

std::size_t reference_bus(const Grid& grid, std::size_t area) {
  if (area == grid.slack_area()) return grid.slack_bus();
  return grid.area(area).buses.front();
}

CentralizedSolution solve_scenario(const Grid& grid, const Scenario& scenario, const qp::QpOptions& options) {
  const auto& net = grid.network();
  std::vector<int> seen(grid.area_count(), 0);
  for (const auto& g : scenario.groups)
    for (auto a : g) {
      if (a >= grid.area_count()) throw std::invalid_argument("scenario references unknown area");
      ++seen[a];
    }
  if (std::any_of(seen.begin(), seen.end(), [](int s) { return s != 1; }))
    throw std::invalid_argument("scenario groups must partition the areas");
  std::vector<double> fixed = scenario.fixed_flows;
  if (fixed.empty()) fixed.assign(net.tielines.size(), 0.0);
  if (fixed.size() != net.tielines.size()) throw std::invalid_argument("fixed_flows must have one entry per tieline");

  auto out = empty_solution(net);
  for (const auto& g : scenario.groups) {
    if (!g.empty()) solve_group(grid, g, fixed, options, out);
  }
  out.area_cost.resize(grid.area_count());
  out.total_cost = 0.0;
  for (std::size_t a = 0; a < grid.area_count(); ++a) {
    out.area_cost[a] = area_true_cost(grid, a, out.dispatch);
    out.total_cost += out.area_cost[a];
  }
  return out;
}

CentralizedSolution solve_centralized(const Grid& grid, const qp::QpOptions& options) {
  Scenario s;
  s.groups.emplace_back(grid.area_count());
  std::iota(s.groups.back().begin(), s.groups.back().end(), std::size_t{0});
  return solve_scenario(grid, s, options);
}

CentralizedSolution solve_centralized_excluding(const Grid& grid, std::size_t area, std::span<const double> fixed_flows,
                                                const qp::QpOptions& options) {
  if (area >= grid.area_count()) throw std::invalid_argument("unknown area index");
  Scenario s;
  s.groups.push_back({area});
  std::vector<std::size_t> rest;
  for (std::size_t a = 0; a < grid.area_count(); ++a)
    if (a != area) rest.push_back(a);
  s.groups.push_back(rest);
  s.fixed_flows.assign(fixed_flows.begin(), fixed_flows.end());
  return solve_scenario(grid, s, options);
}

CentralizedSolution solve_independent(const Grid& grid, const qp::QpOptions& options) {
  Scenario s;
  for (std::size_t a = 0; a < grid.area_count(); ++a) s.groups.push_back({a});
  return solve_scenario(grid, s, options);
}

AreaClearing stand_alone_clearing(const Grid& grid, std::size_t area, std::span<const double> fixed_flows,
                                  const qp::QpOptions& options) {
  if (area >= grid.area_count()) throw std::invalid_argument("unknown area index");
  std::vector<double> fixed(fixed_flows.begin(), fixed_flows.end());
  if (fixed.empty()) fixed.assign(grid.network().tielines.size(), 0.0);
  if (fixed.size() != grid.network().tielines.size())
    throw std::invalid_argument("fixed_flows must have one entry per tieline");

  const auto& net = grid.network();
  auto full = empty_solution(net);
  solve_group(grid, {area}, fixed, options, full);

  const auto& topo = grid.area(area);
  AreaClearing out;
  out.area = area;
  for (auto g : topo.generators) out.dispatch.push_back(full.dispatch[g]);
  for (auto b : topo.buses) {
    out.angle.push_back(full.angle[b]);
    out.lmp.push_back(full.lmp[b]);
  }
  out.cost = area_true_cost(grid, area, full.dispatch);
  return out;
}

qp::QpProblem stand_alone_problem(const Grid& grid, std::size_t area) {
  Assembler as;
  auto blk = add_area(as, grid, area, 1.0);
  emit_balance(as, blk);
  as.add_eq({{blk.angle_var[grid.local_bus_position(reference_bus(grid, area))], 1.0}}, 0.0);
  return as.finish();
}

CapacityWeights capacity_weights(double mu, CapacitySplit split) {
  switch (split) {
    case CapacitySplit::Even: return {0.5 * mu, 0.5 * mu};
    case CapacitySplit::Exporter: return {mu, 0.0};
    case CapacitySplit::Importer: return {0.0, mu};
  }
  return {0.5 * mu, 0.5 * mu};
}

AreaSubproblemOutput solve_area(const Grid& grid, const AreaSubproblemInput& input, const qp::QpOptions& options) {
  const auto& net = grid.network();
  const auto& topo = grid.area(input.area);
  if (input.ties.size() != topo.tielines.size())
    throw std::invalid_argument("area input needs one signal per incident tieline");
  if (!(input.cost_scale > 0.0)) throw std::invalid_argument("cost scale must be positive");
  if (!(input.angle_penalty >= 0.0)) throw std::invalid_argument("angle penalty must be nonnegative");
  const double base = net.base_mva;

  struct TieVars {
    Eigen::Index plus = -1, minus = -1, row = -1, over = -1, under = -1;
  };
  AreaBlock blk;
  std::vector<TieVars> tv;
  auto build = [&](bool soft) {
    Assembler as;
    blk = add_area(as, grid, input.area, input.cost_scale);
    tv.assign(topo.tielines.size(), TieVars{});
    bool any_coupled = false;
    for (std::size_t k = 0; k < topo.tielines.size(); ++k) {
      const auto& view = topo.tielines[k];
      const auto& sig = input.ties[k];
      const auto pos = grid.local_bus_position(view.local_bus);
      if (sig.fixed_flow) {
        blk.balance_rhs[pos] -= *sig.fixed_flow;
        continue;
      }
      if (sig.mu < 0.0) throw std::invalid_argument("capacity price must be nonnegative");
      any_coupled = true;
      const auto& id = net.tielines[view.tieline].id;
      const auto w = capacity_weights(sig.mu, input.split);
      const double y = 1.0 / view.reactance;
      Entries row;
      if (w.export_weight + w.import_weight <= 1e-9) {
        tv[k].plus = as.add_var("T:" + id, 0.0, -sig.remote_lmp);
        blk.balance[pos].emplace_back(tv[k].plus, 1.0);
        row = {{tv[k].plus, 1.0}};
      } else {
        tv[k].plus = as.add_var("T+:" + id, 0.0, -sig.remote_lmp + w.export_weight);
        tv[k].minus = as.add_var("T-:" + id, 0.0, sig.remote_lmp + w.import_weight);
        as.add_le({{tv[k].plus, -1.0}}, 0.0);
        as.add_le({{tv[k].minus, -1.0}}, 0.0);
        blk.balance[pos].emplace_back(tv[k].plus, 1.0);
        blk.balance[pos].emplace_back(tv[k].minus, -1.0);
        row = {{tv[k].plus, 1.0}, {tv[k].minus, -1.0}};
      }
      as.add_constant(-0.5 * sig.mu * view.limit);
      row.emplace_back(blk.angle_var[pos], -y);
      if (soft) {
        tv[k].over = as.add_var("s+:" + id, 0.0, input.angle_penalty);
        tv[k].under = as.add_var("s-:" + id, 0.0, input.angle_penalty);
        as.add_le({{tv[k].over, -1.0}}, 0.0);
        as.add_le({{tv[k].under, -1.0}}, 0.0);
        row.emplace_back(tv[k].over, -1.0);
        row.emplace_back(tv[k].under, 1.0);
      }
      tv[k].row = as.add_eq(row, -y * base * sig.remote_angle);
    }
    emit_balance(as, blk);
    if (input.pin_reference || !any_coupled)
      as.add_eq({{blk.angle_var[grid.local_bus_position(reference_bus(grid, input.area))], 1.0}}, 0.0);

    return as.finish();
  };

  // Neighbour angles that no internal state can match make the exact problem
  // infeasible; the penalized form is solved only when the exact solve fails.
  auto sol = qp::solve(build(false), options);
  if (sol.status != qp::QpStatus::Optimal && input.angle_penalty > 0.0) sol = qp::solve(build(true), options);
  if (sol.status != qp::QpStatus::Optimal)
    throw qp::QpError(sol.status, "area " + topo.id + " subproblem failed: " + std::string(qp::to_string(sol.status)));

  AreaSubproblemOutput out;
  out.area = input.area;
  out.iterations = sol.iterations;
  for (std::size_t k = 0; k < topo.buses.size(); ++k) {
    out.angle.push_back(sol.x[blk.angle_var[k]] / base);
    out.lmp.push_back(sol.y[blk.balance_row[k]]);
  }
  for (std::size_t k = 0; k < topo.generators.size(); ++k) {
    const double p = sol.x[blk.gen_var[k]];
    const auto& cost = net.generators[topo.generators[k]].cost;
    out.dispatch.push_back(p);
    out.true_cost += cost(p);
    out.cost += cost.scaled(input.cost_scale)(p);
  }
  for (std::size_t k = 0; k < topo.tielines.size(); ++k) {
    const auto& view = topo.tielines[k];
    const auto& sig = input.ties[k];
    const auto pos = grid.local_bus_position(view.local_bus);
    out.boundary_angle.push_back(out.angle[pos]);
    out.boundary_lmp.push_back(out.lmp[pos]);
    if (sig.fixed_flow) {
      out.flow.push_back(*sig.fixed_flow);
      out.coupling_dual.push_back(0.0);
      out.coupling_dual_qp.push_back(0.0);
      out.angle_mismatch.push_back(0.0);
      continue;
    }
    const double t = tv[k].minus >= 0 ? sol.x[tv[k].plus] - sol.x[tv[k].minus] : sol.x[tv[k].plus];
    const auto w = capacity_weights(sig.mu, input.split);
    const double slope = t >= 0.0 ? w.export_weight : -w.import_weight;
    out.flow.push_back(t);
    out.coupling_dual.push_back(sig.remote_lmp - slope - out.lmp[pos]);
    out.coupling_dual_qp.push_back(sol.y[tv[k].row]);
    if (tv[k].over >= 0) {
      const double over = std::max(sol.x[tv[k].over], 0.0), under = std::max(sol.x[tv[k].under], 0.0);
      out.angle_mismatch.push_back(over - under);
      out.penalty += input.angle_penalty * (over + under);
    } else {
      out.angle_mismatch.push_back(0.0);
    }
    const double charge = w.export_weight * std::max(t, 0.0) + w.import_weight * std::max(-t, 0.0);
    out.trade_value += sig.remote_lmp * t - (charge - 0.5 * sig.mu * view.limit);
  }
  out.value = sol.objective;
  return out;
}

double critical_price(const Grid& grid, AreaSubproblemInput input, double flow_tolerance, double tolerance) {
  auto zero_at = [&](double mu) {
    for (auto& s : input.ties)
      if (!s.fixed_flow) s.mu = mu;
    const auto out = solve_area(grid, input);
    for (std::size_t k = 0; k < out.flow.size(); ++k)
      if (!input.ties[k].fixed_flow && std::abs(out.flow[k]) > flow_tolerance) return false;
    return true;
  };
  double lo = 0.0, hi = 1.0;
  while (!zero_at(hi)) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e8) throw std::runtime_error("no critical capacity price below 1e8 $/MWh");
  }
  while (hi - lo > tolerance) {
    const double mid = 0.5 * (lo + hi);
    (zero_at(mid) ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace mcoupling
