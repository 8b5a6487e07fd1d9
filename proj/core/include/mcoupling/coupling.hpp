#pragma once

#include "mcoupling/grid.hpp"
#include "mcoupling/opf.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mcoupling {

enum class RhoSchedule {
  Log,       // 1 / (1 + ln k)
  Harmonic,  // 1 / k
};

enum class StoppingMode {
  FixedIterations,  // run k = 1 .. T+1
  Tolerance,        // stop early once flows, prices and slackness settle
};

std::string_view to_string(RhoSchedule s);
std::string_view to_string(StoppingMode s);
RhoSchedule parse_rho_schedule(std::string_view name);
StoppingMode parse_stopping_mode(std::string_view name);

struct MechanismConfig {
  double beta = 0.3;                // price step, in (0, 1)
  RhoSchedule rho = RhoSchedule::Log;
  double mu0 = 0.0;                 // initial capacity price on every tieline, $/MWh
  int max_iterations = 200;         // T; the mechanism performs T+1 rounds
  double tol_flow = 0.5;            // MW, flow mismatch |T_a + T_a'|
  double tol_price = 0.01;          // $/MWh, capacity price drift over `price_window`
  int price_window = 10;            // iterations
  double tol_slackness = 1e-3;      // relative complementary slackness residual
  StoppingMode stopping = StoppingMode::FixedIterations;
  CapacitySplit split = CapacitySplit::Even;
  int jobs = 1;                     // worker threads for per-area solves and parallel runs

  double rho_at(int k) const;
  /// Empty when the configuration is usable.
  std::vector<std::string> errors() const;
  /// Notes such as the log schedule violating sum rho^2 < inf.
  std::vector<std::string> warnings() const;

  friend bool operator==(const MechanismConfig&, const MechanismConfig&) = default;
};

/// mu_next = max(mu_prev + beta * ((|T_a| + |T_a'|)/2 - limit), 0).
double price_update(double mu_prev, double flow_a, double flow_b, double limit, double beta);

/// Componentwise (1 - rho) prev + rho * raw. Throws std::invalid_argument on
/// size mismatch or rho outside (0, 1].
std::vector<double> inertia_update(const std::vector<double>& prev, const std::vector<double>& raw, double rho);

/// Published state of one area, one entry per AreaTopology::tielines item.
struct AreaSignal {
  std::vector<double> flow;   // MW leaving the area
  std::vector<double> angle;  // local boundary bus angle, rad
  std::vector<double> lmp;    // local boundary bus LMP, $/MWh

  friend bool operator==(const AreaSignal&, const AreaSignal&) = default;
};

AreaSignal inertia_update(const AreaSignal& prev, const AreaSignal& raw, double rho);

struct CouplingState {
  int k = 0;
  std::vector<AreaSignal> smoothed;  // x^k
  std::vector<AreaSignal> raw;       // x-hat^k
  std::vector<double> mu;            // mu^k per tieline
};

/// Everything recorded at iteration k >= 1.
struct IterationRecord {
  int k = 0;
  double rho = 1.0;
  std::vector<AreaSignal> raw;                       // x-hat^k
  std::vector<AreaSignal> smoothed;                  // x^k
  std::vector<std::vector<double>> coupling_dual;    // xi-hat^k per area and incident tie
  std::vector<double> mu;                            // mu^k after the update
  std::vector<double> cost;                          // C_{a,k} at reported costs
  std::vector<double> true_cost;                     // C_{a,k} at true costs
  std::vector<double> value;                         // V_{a,k}
  std::vector<double> trade_value;                   // r_{a,k}
  std::vector<double> excess;                        // (|T_a|+|T_a'|)/2 - limit on x^k, per tieline
  std::vector<double> flow_gap;                      // |T_a + T_a'| on x^k
  std::vector<double> slackness;                     // mu^k * excess
  double step_norm = 0.0;                            // max |x^k - x^{k-1}|
};

struct CouplingOutcome {
  std::vector<bool> participating;      // per area
  std::vector<bool> tie_active;         // per tieline: both ends participate
  std::optional<std::size_t> excluded;  // set for exclusion runs
  std::vector<double> cost_scale;       // reporting overrides per area
  std::vector<double> fixed_flows;      // per tieline, used when inactive
  std::vector<bool> pins_reference;     // per area: holds its coupled component's angle reference
  CapacitySplit split = CapacitySplit::Even;

  std::vector<AreaSignal> initial;      // x^0
  std::vector<double> mu0;              // per tieline
  std::vector<double> initial_cost;     // C_{a,0}
  std::vector<double> initial_trade_value;  // r_{a,0}: trade value of the zero initial flows

  std::vector<IterationRecord> trace;   // k = 1 .. K
  CouplingState final_state;
  bool converged = false;
  int converged_at = 0;                 // first k meeting the tolerance test, 0 if never
  std::vector<std::string> warnings;

  /// Final flow per tieline in record orientation (mean of both views).
  std::vector<double> final_flows(const Grid& grid) const;
  /// V_{a,0} = C_{a,0} - r_{a,0}.
  double initial_value(std::size_t area) const { return initial_cost[area] - initial_trade_value[area]; }
  int iterations() const { return static_cast<int>(trace.size()); }
};

/// Runs the mechanism with every area participating.
CouplingOutcome run(const Grid& grid, const MechanismConfig& config, const std::vector<double>& cost_scale = {});

/// Runs the mechanism without `excluded`: its ties stay frozen at `fixed_flows`
/// (per tieline, zero by default) and it keeps its clearing under them.
CouplingOutcome run_excluded(const Grid& grid, const MechanismConfig& config, std::size_t excluded,
                             const std::vector<double>& cost_scale = {}, const std::vector<double>& fixed_flows = {});

/// Signals area `area` sees when solving after state `smoothed` with prices `mu`.
AreaSubproblemInput area_input(const Grid& grid, const CouplingOutcome& run, std::size_t area,
                               const std::vector<AreaSignal>& smoothed, const std::vector<double>& mu);

/// Checks the convergence test on one iteration record.
bool meets_tolerance(const Grid& grid, const CouplingOutcome& run, const MechanismConfig& config, std::size_t index);

/// Full run followed by one exclusion run per area, run concurrently with
/// up to config.jobs workers. Element 0 is the full run, element 1 + a
/// excludes area a.
std::vector<CouplingOutcome> run_all(const Grid& grid, const MechanismConfig& config,
                                     const std::vector<double>& cost_scale = {});

/// CSV rows (k, tieline, T_a, T_b, mu, mismatch) per iteration and tieline.
void write_tieline_trace(std::ostream& os, const Grid& grid, const CouplingOutcome& run);
/// CSV rows (k, area, bus, tieline, lmp, angle) per iteration and boundary bus.
void write_boundary_trace(std::ostream& os, const Grid& grid, const CouplingOutcome& run);

}  // namespace mcoupling
