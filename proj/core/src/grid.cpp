#include "mcoupling/grid.hpp"

#include <stdexcept>
#include <unordered_map>

namespace mcoupling {

BusRef Network::slack_bus() const {
  if (slack) return *slack;
  if (areas.empty()) throw std::invalid_argument("network has no areas");
  for (const auto& bus : buses) {
    if (bus.area == areas.front()) return {bus.area, bus.id};
  }
  throw std::invalid_argument("first area has no buses");
}

std::optional<std::size_t> Network::find_area(std::string_view id) const {
  for (std::size_t a = 0; a < areas.size(); ++a) {
    if (areas[a] == id) return a;
  }
  return std::nullopt;
}

std::optional<std::size_t> Network::find_bus(std::string_view id) const {
  for (std::size_t b = 0; b < buses.size(); ++b) {
    if (buses[b].id == id) return b;
  }
  return std::nullopt;
}

Grid::Grid(Network network) : network_(std::move(network)) {
  const auto& net = network_;
  std::unordered_map<std::string, std::size_t> area_of, bus_of;
  for (std::size_t a = 0; a < net.areas.size(); ++a) {
    if (!area_of.emplace(net.areas[a], a).second)
      throw std::invalid_argument("duplicate area id " + net.areas[a]);
    areas_.push_back(AreaTopology{a, net.areas[a], {}, {}, {}, {}});
  }
  bus_area_.resize(net.buses.size());
  local_position_.resize(net.buses.size());
  for (std::size_t b = 0; b < net.buses.size(); ++b) {
    const auto& bus = net.buses[b];
    auto it = area_of.find(bus.area);
    if (it == area_of.end()) throw std::invalid_argument("bus " + bus.id + " references unknown area " + bus.area);
    if (!bus_of.emplace(bus.id, b).second) throw std::invalid_argument("duplicate bus id " + bus.id);
    bus_area_[b] = it->second;
    local_position_[b] = areas_[it->second].buses.size();
    areas_[it->second].buses.push_back(b);
  }
  auto resolve = [&](const std::string& id, const std::string& what) {
    auto it = bus_of.find(id);
    if (it == bus_of.end()) throw std::invalid_argument(what + " references unknown bus " + id);
    return it->second;
  };
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    const auto b = resolve(net.generators[g].bus, "generator " + net.generators[g].id);
    generator_bus_.push_back(b);
    areas_[bus_area_[b]].generators.push_back(g);
  }
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    const auto& line = net.lines[l];
    const auto i = resolve(line.from, "line " + line.id);
    const auto j = resolve(line.to, "line " + line.id);
    if (bus_area_[i] != bus_area_[j]) throw std::invalid_argument("line " + line.id + " crosses areas");
    line_ends_.emplace_back(i, j);
    areas_[bus_area_[i]].lines.push_back(l);
  }
  for (std::size_t t = 0; t < net.tielines.size(); ++t) {
    const auto& tie = net.tielines[t];
    const auto i = resolve(tie.from.bus, "tieline " + tie.id);
    const auto j = resolve(tie.to.bus, "tieline " + tie.id);
    const auto ai = bus_area_[i];
    const auto aj = bus_area_[j];
    if (net.areas[ai] != tie.from.area || net.areas[aj] != tie.to.area)
      throw std::invalid_argument("tieline " + tie.id + " endpoint area mismatch");
    if (ai == aj) throw std::invalid_argument("tieline " + tie.id + " joins buses of one area");
    tieline_ends_.emplace_back(i, j);
    areas_[ai].tielines.push_back(TielineView{t, ai, true, i, aj, j, tie.reactance, tie.limit});
    areas_[aj].tielines.push_back(TielineView{t, aj, false, j, ai, i, tie.reactance, tie.limit});
  }
  const auto slack = net.slack_bus();
  slack_bus_ = resolve(slack.bus, "slack");
  if (net.areas[bus_area_[slack_bus_]] != slack.area) throw std::invalid_argument("slack bus area mismatch");
}

std::size_t Grid::area_index(std::string_view id) const {
  for (const auto& area : areas_) {
    if (area.id == id) return area.index;
  }
  throw std::invalid_argument("unknown area " + std::string(id));
}

const TielineView& Grid::view(std::size_t area, std::size_t tieline) const {
  for (const auto& v : areas_.at(area).tielines) {
    if (v.tieline == tieline) return v;
  }
  throw std::invalid_argument("tieline is not incident to area");
}

Network scale_costs(const Network& network, std::string_view area, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("cost scaling factor must be positive");
  if (!network.find_area(area)) throw std::invalid_argument("unknown area " + std::string(area));
  Network out = network;
  for (auto& gen : out.generators) {
    auto bus = network.find_bus(gen.bus);
    if (bus && network.buses[*bus].area == area) gen.cost = gen.cost.scaled(factor);
  }
  return out;
}

}  // namespace mcoupling
