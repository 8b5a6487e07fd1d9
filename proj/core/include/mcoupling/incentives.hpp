#pragma once

#include "mcoupling/coupling.hpp"
#include "mcoupling/grid.hpp"
#include "mcoupling/opf.hpp"

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

namespace mcoupling {

class MissingExcludedRun : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// r = sum alpha' T - sum w(T) + sum (mu/2) limit for flows `flows` leaving
/// the area under the signals in `input` (w is the capacity charge of the
/// split convention, mu/2 |T| for the even split). Frozen ties contribute 0.
double trade_value(const Grid& grid, const AreaSubproblemInput& input, const std::vector<double>& flows);

/// First-order change of the area optimum when the signals move from `before`
/// to `after`, evaluated at `solution` (the solve under `before`).
double delta_V(const Grid& grid, const AreaSubproblemInput& before, const AreaSubproblemOutput& solution,
               const AreaSubproblemInput& after);

/// Per-area series derived from one run using published signals only.
/// Step k (0 <= k < K, K = run.iterations()) covers V_{a,k} -> V_{a,k+1}.
struct RunEstimates {
  std::vector<std::vector<double>> trade_value;    // r_{a,k}, k = 0 .. K
  std::vector<std::vector<double>> value;          // V_{a,k}, k = 0 .. K
  std::vector<std::vector<double>> delta_V;        // envelope estimate per step; step 0 is 0
  std::vector<std::vector<double>> delta_V_exact;  // V_{a,k+1} - V_{a,k}
  std::vector<std::vector<double>> delta_C;        // estimated C_{a,k+1} - C_{a,k}

  int steps() const { return trade_value.empty() ? 0 : static_cast<int>(trade_value.front().size()) - 1; }
};

RunEstimates estimated_cost_changes(const Grid& grid, const CouplingOutcome& run);

/// Oracle quantities from centralized solves at true costs.
struct OracleCosts {
  double total = 0.0;                   // C*
  std::vector<double> area;             // C*_a
  std::vector<double> initial;          // C_{a,0}
  std::vector<double> excluded_others;  // C~_{-a}
  std::vector<double> tie_flow;         // T* per tieline
  double congestion_rent = 0.0;         // sum (alpha*_to - alpha*_from) T*

  double initial_total() const;
  /// C_{a,0} + C~_{-a} - C*: system saving credited to everyone but a.
  double gain(std::size_t a) const { return initial[a] + excluded_others[a] - total; }
};

OracleCosts oracle_costs(const Grid& grid, const qp::QpOptions& options = {});

/// R = min_a {C_{a,0} + C~_{-a} - C*}.
double participation_fee(const OracleCosts& oracle);
/// The same minimum with mechanism limits in place of oracle solves;
/// `runs` as returned by run_all.
double participation_fee(const std::vector<CouplingOutcome>& runs);

/// Transfers for area a: element k is the estimated transfer for step k,
/// pairing full-run step k with step k of the run excluding a. A run that
/// stopped early contributes zero change past its end.
std::vector<double> incentive_transfer(const Grid& grid, const std::vector<RunEstimates>& estimates, std::size_t area);

struct AreaLedger {
  std::vector<double> trade_value;   // r_{a,k}, k = 0 .. K
  std::vector<double> delta_V;       // estimated, per step
  std::vector<double> transfer;      // estimated transfer per step
  double transfer_total = 0.0;
  double marginal_contribution = 0.0;         // sum of estimated step contributions
  double marginal_contribution_limit = 0.0;   // same sum from the runs' true cost changes (diagnostic)
  double marginal_contribution_oracle = 0.0;  // C*_{-a} - C~_{-a}, NaN without oracle
  double initial_cost = 0.0;         // C_{a,0}
  double final_cost = 0.0;           // C_{a,K} at true costs
  double internal_cost_change = 0.0;
  double value_change = 0.0;         // V_{a,K} - V_{a,0}, true costs
  double total_cost_reduction = 0.0; // -(value change + transfers + fee)
  double ideal_cost_reduction = 0.0; // C_{a,0} + C~_{-a} - C* - R
  double delta = 0.0;                // realized minus ideal net change
};

struct IncentiveLedger {
  std::vector<AreaLedger> areas;
  double fee = 0.0;
  double budget = 0.0;                  // |A| R + sum of transfers
  double congestion_rent = 0.0;         // from mechanism limits
  double congestion_rent_oracle = 0.0;  // NaN without oracle
  double surplus = 0.0;                 // budget - congestion_rent
  double system_saving = 0.0;           // C_0 - C_K (or C_0 - C* with oracle)
  bool budget_hypothesis = false;       // C_0 - C* >= sum_a (gain_a - min gain)
  double delta_tol = 0.0;               // max_a |delta|
  bool oracle = false;                  // ideal values come from centralized solves, not run limits
  int iterations = 0;
};

/// `runs`: full run first, then one run excluding each area in order.
IncentiveLedger settle(const Grid& grid, const std::vector<CouplingOutcome>& runs, double fee,
                       const OracleCosts* oracle = nullptr);

/// Pure LMP settlement: C_{a,0} - C_{a,K} + sum alpha' T at the limit.
std::vector<double> lmp_settlement(const Grid& grid, const CouplingOutcome& run);

struct DeviationReport {
  std::size_t area = 0;
  double factor = 1.0;
  double fee = 0.0;
  IncentiveLedger equilibrium;
  IncentiveLedger deviation;
  double epsilon_tol = 0.0;  // 1% of the system saving
  /// Deviator's gain from misreporting; positive means it profited.
  double gain() const;
};

/// Full pipeline twice: truthful reports and `area` scaling its reports by
/// `factor`. The fee is fixed at its truthful value in both. A truthful
/// ledger computed earlier with the same config may be passed in.
DeviationReport deviation_experiment(const Grid& grid, const MechanismConfig& config, std::size_t area, double factor,
                                     const OracleCosts* oracle = nullptr,
                                     const IncentiveLedger* equilibrium = nullptr);

struct BenchmarkReport {
  std::optional<std::size_t> area;
  double factor = 1.0;
  std::vector<double> equilibrium;  // per area reduction
  std::vector<double> deviation;    // empty without a deviator
};

BenchmarkReport lmp_benchmark(const Grid& grid, const MechanismConfig& config, std::optional<std::size_t> area = {},
                              double factor = 1.0);

/// One envelope probe at iteration k of `run`: signals after k-1 are moved
/// by `step` times the mechanism direction (raw minus smoothed reports for
/// prices and angles, flow excess for capacity prices).
struct EnvelopeProbe {
  double exact = 0.0;
  double estimate = 0.0;
  double error() const;
};
EnvelopeProbe envelope_probe(const Grid& grid, const CouplingOutcome& run, std::size_t area, int k, double step);

void write_ledger_csv(std::ostream& os, const Grid& grid, const IncentiveLedger& ledger);
void write_ledger_report(std::ostream& os, const Grid& grid, const IncentiveLedger& ledger);
void write_deviation_report(std::ostream& os, const Grid& grid, const std::vector<DeviationReport>& reports);
void write_benchmark_report(std::ostream& os, const Grid& grid, const std::vector<BenchmarkReport>& reports);

}  // namespace mcoupling
