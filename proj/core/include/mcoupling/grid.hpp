#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mcoupling {

using AreaId = std::string;
using BusId = std::string;

/// Generator cost c2*P^2 + c1*P + c0 in $/h with P in MW.
struct QuadraticCost {
  double c2 = 0.0;  // $/MW^2h
  double c1 = 0.0;  // $/MWh
  double c0 = 0.0;  // $/h

  double operator()(double p) const { return (c2 * p + c1) * p + c0; }
  double marginal(double p) const { return 2.0 * c2 * p + c1; }
  QuadraticCost scaled(double factor) const { return {c2 * factor, c1 * factor, c0 * factor}; }

  friend bool operator==(const QuadraticCost&, const QuadraticCost&) = default;
};

struct Generator {
  std::string id;
  BusId bus;
  QuadraticCost cost;
  double p_min = 0.0;  // MW
  double p_max = 0.0;  // MW

  friend bool operator==(const Generator&, const Generator&) = default;
};

struct Bus {
  BusId id;
  AreaId area;
  double load = 0.0;  // MW, inelastic

  friend bool operator==(const Bus&, const Bus&) = default;
};

struct InternalLine {
  std::string id;
  BusId from;
  BusId to;
  double reactance = 0.0;  // per unit on the system base
  double limit = 0.0;      // MW

  friend bool operator==(const InternalLine&, const InternalLine&) = default;
};

struct BusRef {
  AreaId area;
  BusId bus;

  friend bool operator==(const BusRef&, const BusRef&) = default;
};

/// A tieline is stored once; both endpoint areas see the same reactance and
/// limit, with opposite flow orientation.
struct Tieline {
  std::string id;
  BusRef from;
  BusRef to;
  double reactance = 0.0;  // per unit
  double limit = 0.0;      // MW

  friend bool operator==(const Tieline&, const Tieline&) = default;
};

struct Network {
  double base_mva = 100.0;
  std::vector<AreaId> areas;
  std::vector<Bus> buses;
  std::vector<Generator> generators;
  std::vector<InternalLine> lines;
  std::vector<Tieline> tielines;
  std::optional<BusRef> slack;  // defaults to the first bus of the first area

  /// Explicit slack, or the first listed bus of the first area.
  BusRef slack_bus() const;
  std::optional<std::size_t> find_area(std::string_view id) const;
  std::optional<std::size_t> find_bus(std::string_view id) const;

  friend bool operator==(const Network&, const Network&) = default;
};

/// One endpoint's view of a tieline. Flow is measured positive leaving `area`.
struct TielineView {
  std::size_t tieline = 0;
  std::size_t area = 0;
  bool from_side = true;
  std::size_t local_bus = 0;   // global bus index inside `area`
  std::size_t remote_area = 0;
  std::size_t remote_bus = 0;  // global bus index inside `remote_area`
  double reactance = 0.0;
  double limit = 0.0;

  /// +1 when the record's sending end is this area, -1 otherwise.
  double orientation() const { return from_side ? 1.0 : -1.0; }
};

struct AreaTopology {
  std::size_t index = 0;
  AreaId id;
  std::vector<std::size_t> buses;
  std::vector<std::size_t> generators;
  std::vector<std::size_t> lines;
  std::vector<TielineView> tielines;
};

/// Immutable network plus dense indices. Construction throws
/// std::invalid_argument when ids do not resolve; run validate() first to get
/// a full list of problems.
class Grid {
 public:
  explicit Grid(Network network);

  const Network& network() const { return network_; }
  std::size_t area_count() const { return areas_.size(); }
  const AreaTopology& area(std::size_t a) const { return areas_.at(a); }
  const std::vector<AreaTopology>& areas() const { return areas_; }
  std::size_t area_index(std::string_view id) const;

  std::size_t bus_area(std::size_t bus) const { return bus_area_[bus]; }
  std::size_t generator_bus(std::size_t g) const { return generator_bus_[g]; }
  std::pair<std::size_t, std::size_t> line_ends(std::size_t l) const { return line_ends_[l]; }
  std::pair<std::size_t, std::size_t> tieline_ends(std::size_t t) const { return tieline_ends_[t]; }
  std::size_t slack_bus() const { return slack_bus_; }
  std::size_t slack_area() const { return bus_area_[slack_bus_]; }

  /// Position of bus inside its area's bus list.
  std::size_t local_bus_position(std::size_t bus) const { return local_position_[bus]; }

  /// View of tieline t from area a (a must be an endpoint).
  const TielineView& view(std::size_t area, std::size_t tieline) const;

 private:
  Network network_;
  std::vector<AreaTopology> areas_;
  std::vector<std::size_t> bus_area_;
  std::vector<std::size_t> local_position_;
  std::vector<std::size_t> generator_bus_;
  std::vector<std::pair<std::size_t, std::size_t>> line_ends_;
  std::vector<std::pair<std::size_t, std::size_t>> tieline_ends_;
  std::size_t slack_bus_ = 0;
};

enum class ViolationKind {
  NoAreas,
  DuplicateId,
  UnknownReference,
  InvalidCost,
  InvalidGeneratorLimits,
  NegativeLoad,
  InvalidReactance,
  InvalidLimit,
  CrossAreaLine,
  SameAreaTieline,
  DisconnectedArea,
  InvalidSlack,
  AreaInfeasible,
  InvalidBase,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Structural checks followed by a zero-tieline feasibility solve per area.
std::vector<Violation> validate(const Network& network);

/// Multiplies c2, c1 and c0 of every generator in `area` by `factor`.
/// Throws std::invalid_argument for an unknown area or factor <= 0.
Network scale_costs(const Network& network, std::string_view area, double factor);

}  // namespace mcoupling
