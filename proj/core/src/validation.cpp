#include "mcoupling/grid.hpp"
#include "mcoupling/opf.hpp"
#include "mcoupling/qp.hpp"

#include <cmath>
#include <map>
#include <set>

namespace mcoupling {

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::NoAreas: return "no-areas";
    case ViolationKind::DuplicateId: return "duplicate-id";
    case ViolationKind::UnknownReference: return "unknown-reference";
    case ViolationKind::InvalidCost: return "invalid-cost";
    case ViolationKind::InvalidGeneratorLimits: return "invalid-generator-limits";
    case ViolationKind::NegativeLoad: return "negative-load";
    case ViolationKind::InvalidReactance: return "invalid-reactance";
    case ViolationKind::InvalidLimit: return "invalid-limit";
    case ViolationKind::CrossAreaLine: return "cross-area-line";
    case ViolationKind::SameAreaTieline: return "same-area-tieline";
    case ViolationKind::DisconnectedArea: return "disconnected-area";
    case ViolationKind::InvalidSlack: return "invalid-slack";
    case ViolationKind::AreaInfeasible: return "area-infeasible";
    case ViolationKind::InvalidBase: return "invalid-base";
  }
  return "unknown";
}

namespace {

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

std::vector<Violation> validate(const Network& net) {
  std::vector<Violation> out;
  auto add = [&](ViolationKind k, std::string msg) { out.push_back({k, std::move(msg)}); };

  if (!finite_positive(net.base_mva)) add(ViolationKind::InvalidBase, "base MVA must be positive");
  if (net.areas.empty()) add(ViolationKind::NoAreas, "network has no areas");

  std::set<std::string> areas;
  for (const auto& a : net.areas)
    if (!areas.insert(a).second) add(ViolationKind::DuplicateId, "duplicate area id " + a);

  std::map<std::string, std::string> bus_area;
  for (const auto& b : net.buses) {
    if (!bus_area.emplace(b.id, b.area).second) add(ViolationKind::DuplicateId, "duplicate bus id " + b.id);
    if (!areas.count(b.area)) add(ViolationKind::UnknownReference, "bus " + b.id + " references unknown area " + b.area);
    if (!(std::isfinite(b.load) && b.load >= 0.0)) add(ViolationKind::NegativeLoad, "bus " + b.id + " has negative load");
  }
  auto known_bus = [&](const std::string& id) { return bus_area.count(id) > 0; };

  std::set<std::string> gen_ids;
  for (const auto& g : net.generators) {
    if (!gen_ids.insert(g.id).second) add(ViolationKind::DuplicateId, "duplicate generator id " + g.id);
    if (!known_bus(g.bus)) add(ViolationKind::UnknownReference, "generator " + g.id + " references unknown bus " + g.bus);
    if (!finite_positive(g.cost.c2) || !std::isfinite(g.cost.c1) || !std::isfinite(g.cost.c0))
      add(ViolationKind::InvalidCost, "generator " + g.id + " needs a strictly convex finite cost");
    if (!(std::isfinite(g.p_min) && std::isfinite(g.p_max) && 0.0 <= g.p_min && g.p_min <= g.p_max))
      add(ViolationKind::InvalidGeneratorLimits, "generator " + g.id + " needs 0 <= p_min <= p_max");
  }

  std::set<std::string> line_ids;
  for (const auto& l : net.lines) {
    if (!line_ids.insert(l.id).second) add(ViolationKind::DuplicateId, "duplicate line id " + l.id);
    if (!finite_positive(l.reactance)) add(ViolationKind::InvalidReactance, "line " + l.id + " needs positive reactance");
    if (!finite_positive(l.limit)) add(ViolationKind::InvalidLimit, "line " + l.id + " needs positive limit");
    if (!known_bus(l.from) || !known_bus(l.to)) {
      add(ViolationKind::UnknownReference, "line " + l.id + " references an unknown bus");
    } else if (bus_area[l.from] != bus_area[l.to]) {
      add(ViolationKind::CrossAreaLine, "line " + l.id + " joins two areas; model it as a tieline");
    }
  }

  std::set<std::string> tie_ids;
  for (const auto& t : net.tielines) {
    if (!tie_ids.insert(t.id).second) add(ViolationKind::DuplicateId, "duplicate tieline id " + t.id);
    if (!finite_positive(t.reactance)) add(ViolationKind::InvalidReactance, "tieline " + t.id + " needs positive reactance");
    if (!finite_positive(t.limit)) add(ViolationKind::InvalidLimit, "tieline " + t.id + " needs positive limit");
    if (!known_bus(t.from.bus) || !known_bus(t.to.bus)) {
      add(ViolationKind::UnknownReference, "tieline " + t.id + " references an unknown bus");
      continue;
    }
    if (bus_area[t.from.bus] != t.from.area || bus_area[t.to.bus] != t.to.area)
      add(ViolationKind::UnknownReference, "tieline " + t.id + " endpoint area does not match its bus");
    if (bus_area[t.from.bus] == bus_area[t.to.bus])
      add(ViolationKind::SameAreaTieline, "tieline " + t.id + " joins buses of one area");
  }

  if (net.slack) {
    if (!known_bus(net.slack->bus) || bus_area[net.slack->bus] != net.slack->area)
      add(ViolationKind::InvalidSlack, "slack bus " + net.slack->bus + " is not in area " + net.slack->area);
  }
  for (const auto& a : net.areas) {
    bool has_bus = false;
    for (const auto& b : net.buses) has_bus = has_bus || b.area == a;
    if (!has_bus) add(ViolationKind::DisconnectedArea, "area " + a + " has no buses");
  }
  if (!out.empty()) return out;

  // Structure is sound from here on.
  const Grid grid(net);
  for (const auto& topo : grid.areas()) {
    if (topo.buses.empty()) continue;
    std::map<std::size_t, std::size_t> parent;
    for (auto b : topo.buses) parent[b] = b;
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (auto l : topo.lines) {
      const auto [i, j] = grid.line_ends(l);
      parent[find(i)] = find(j);
    }
    std::set<std::size_t> roots;
    for (auto b : topo.buses) roots.insert(find(b));
    if (roots.size() > 1)
      add(ViolationKind::DisconnectedArea,
          "area " + topo.id + " splits into " + std::to_string(roots.size()) + " islands");
  }
  if (!out.empty()) return out;

  for (const auto& topo : grid.areas()) {
    const auto result = qp::feasibility_solve(stand_alone_problem(grid, topo.index));
    if (!result.feasible)
      add(ViolationKind::AreaInfeasible, "area " + topo.id + " cannot serve its load with zero tieline flows (violation " +
                                             std::to_string(result.violation) + " MW)");
  }
  return out;
}

}  // namespace mcoupling
