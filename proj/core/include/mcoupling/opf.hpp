#pragma once

#include "mcoupling/grid.hpp"
#include "mcoupling/qp.hpp"

#include <optional>
#include <span>
#include <vector>

namespace mcoupling {

/// Multi-area DC-OPF solution. Per-bus, per-line and per-generator vectors are
/// indexed like the Network lists; tieline vectors like Network::tielines with
/// flow measured from the record's `from` end.
struct CentralizedSolution {
  std::vector<double> dispatch;          // MW
  std::vector<double> angle;             // rad
  std::vector<double> lmp;               // $/MWh, balance duals
  std::vector<double> line_flow;         // MW
  std::vector<double> line_upper_dual;   // eta, for flow <= limit
  std::vector<double> line_lower_dual;   // kappa, for -flow <= limit
  std::vector<double> tie_flow;          // MW
  std::vector<double> tie_upper_dual;    // eta-bar; zero for frozen ties
  std::vector<double> tie_lower_dual;    // kappa-bar
  std::vector<double> tie_coupling_dual; // xi, dual of the tie flow definition
  std::vector<bool> tie_frozen;          // flow fixed rather than optimized
  std::vector<double> area_cost;         // $/h per area
  double total_cost = 0.0;
  int degenerate_active = 0;

  /// Shared capacity price consistent with the area problems: the per-side
  /// charge mu/2 equals |eta-bar - kappa-bar|.
  double capacity_price(std::size_t tieline) const;
  double cost_excluding(std::size_t area) const { return total_cost - area_cost.at(area); }
};

/// Partition of areas into independently cleared groups. Ties joining two
/// areas of one group are optimized; all other ties carry `fixed_flows`
/// (indexed like Network::tielines, default zero).
struct Scenario {
  std::vector<std::vector<std::size_t>> groups;
  std::vector<double> fixed_flows;
};

CentralizedSolution solve_scenario(const Grid& grid, const Scenario& scenario, const qp::QpOptions& options = {});

/// Single operator over all areas.
CentralizedSolution solve_centralized(const Grid& grid, const qp::QpOptions& options = {});

/// All areas except `area` cleared jointly; `area` keeps its clearing under
/// `fixed_flows` on its ties (zero by default) and those flows stay frozen.
CentralizedSolution solve_centralized_excluding(const Grid& grid, std::size_t area,
                                                std::span<const double> fixed_flows = {},
                                                const qp::QpOptions& options = {});

/// Every area on its own with all tieline flows zero.
CentralizedSolution solve_independent(const Grid& grid, const qp::QpOptions& options = {});

struct AreaClearing {
  std::size_t area = 0;
  std::vector<double> dispatch;  // per AreaTopology::generators entry
  std::vector<double> angle;     // per AreaTopology::buses entry, rad
  std::vector<double> lmp;       // per AreaTopology::buses entry
  double cost = 0.0;
};

/// One area cleared alone, its ties frozen at `fixed_flows` (global tieline
/// indexing, zero by default).
AreaClearing stand_alone_clearing(const Grid& grid, std::size_t area, std::span<const double> fixed_flows = {},
                                  const qp::QpOptions& options = {});

/// Who is charged the capacity price on a tieline.
enum class CapacitySplit { Even, Exporter, Importer };

/// Signals seen by an area on one incident tieline.
struct TieSignal {
  double remote_lmp = 0.0;    // alpha' of the neighbour's boundary bus, $/MWh
  double remote_angle = 0.0;  // theta' of the neighbour's boundary bus, rad
  double mu = 0.0;            // capacity price, $/MWh
  std::optional<double> fixed_flow;  // frozen tie (neighbour not coupled); MW leaving the area
};

struct AreaSubproblemInput {
  std::size_t area = 0;
  std::vector<TieSignal> ties;  // one per AreaTopology::tielines entry
  double cost_scale = 1.0;      // reported costs = scale * true costs
  bool pin_reference = false;   // fix the area's reference bus angle at zero
  CapacitySplit split = CapacitySplit::Even;
  /// $/MWh charged on residuals of the tie flow definition when neighbour
  /// angles are mutually inconsistent and the exact problem is infeasible.
  /// Zero disables the fallback.
  double angle_penalty = 1e3;
};

struct AreaSubproblemOutput {
  std::size_t area = 0;
  std::vector<double> flow;             // T-hat per incident tie, MW leaving the area
  std::vector<double> boundary_angle;   // theta-hat of the local tie bus, rad
  std::vector<double> boundary_lmp;     // alpha-hat of the local tie bus
  std::vector<double> coupling_dual;    // xi-hat reconstructed from prices with sign(0) = +1
  std::vector<double> coupling_dual_qp; // multiplier of the tie flow definition row
  std::vector<double> dispatch;         // per area generator
  std::vector<double> angle;            // per area bus
  std::vector<double> lmp;              // per area bus
  double cost = 0.0;                    // reported cost of the dispatch
  double true_cost = 0.0;               // unscaled cost of the dispatch
  double trade_value = 0.0;             // r
  std::vector<double> angle_mismatch;   // MW, T - (theta - theta')/x residual per incident tie
  double penalty = 0.0;                 // angle_penalty * sum |angle_mismatch|
  double value = 0.0;                   // optimal objective V = cost - trade_value + penalty
  int iterations = 0;
};

AreaSubproblemOutput solve_area(const Grid& grid, const AreaSubproblemInput& input, const qp::QpOptions& options = {});

/// Capacity charge for one tie side: weights applied to the positive and
/// negative flow parts.
struct CapacityWeights {
  double export_weight = 0.0;
  double import_weight = 0.0;
};
CapacityWeights capacity_weights(double mu, CapacitySplit split);

/// Reference bus of `area` (slack for the slack area, else its first bus).
std::size_t reference_bus(const Grid& grid, std::size_t area);

/// Builds the zero-tieline QP of one area; used for feasibility checks.
qp::QpProblem stand_alone_problem(const Grid& grid, std::size_t area);

/// Smallest capacity price (within `tolerance` $/MWh) applied to every coupled
/// tie of the area that drives all desired flows to zero, found by doubling
/// and bisection from the supplied signals.
double critical_price(const Grid& grid, AreaSubproblemInput input, double flow_tolerance = 1e-4,
                      double tolerance = 1e-3);

}  // namespace mcoupling
