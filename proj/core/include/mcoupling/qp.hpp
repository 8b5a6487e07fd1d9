#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mcoupling::qp {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

/// Convex QP in standard form
///
///   minimize    1/2 x'Qx + c'x + constant
///   subject to  Ax = b,  Gx <= h
///
/// Q must be symmetric positive semidefinite. Both Q triangles are stored.
struct QpProblem {
  SparseMatrix Q;
  Eigen::VectorXd c;
  SparseMatrix A;
  Eigen::VectorXd b;
  SparseMatrix G;
  Eigen::VectorXd h;
  double constant = 0.0;
  std::vector<std::string> variable_names;  // optional, for dual lookup and diagnostics

  Eigen::Index variables() const { return c.size(); }
  Eigen::Index equalities() const { return b.size(); }
  Eigen::Index inequalities() const { return h.size(); }

  /// Throws std::invalid_argument on inconsistent dimensions or asymmetric Q.
  void check() const;
  /// Index of a named variable; throws std::out_of_range.
  Eigen::Index variable(std::string_view name) const;
};

enum class QpStatus { Optimal, Infeasible, Unbounded, MaxIterations };

std::string_view to_string(QpStatus status);

/// Primal optimum plus multipliers. Sign convention: the Lagrangian is
/// f(x) + y'(Ax - b) + z'(Gx - h), so stationarity reads
/// Qx + c + A'y + G'z = 0 with z >= 0, and dV/db = -y.
struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // one per equality row
  Eigen::VectorXd z;  // one per inequality row, >= 0
  double objective = 0.0;
  QpStatus status = QpStatus::MaxIterations;
  int iterations = 0;
  int degenerate_active = 0;  // rows that are active with a vanishing multiplier
};

struct QpOptions {
  double tolerance = 1e-9;  // relative KKT tolerance
  int max_iterations = 200;
};

struct KktResiduals {
  double stationarity = 0.0;     // ||Qx + c + A'y + G'z||_inf
  double equality = 0.0;         // ||Ax - b||_inf
  double inequality = 0.0;       // max(Gx - h, 0)
  double complementarity = 0.0;  // max |z_i (h - Gx)_i|
  double dual_sign = 0.0;        // max(-z, 0)

  double max() const;
};

class QpError : public std::runtime_error {
 public:
  QpError(QpStatus status, const std::string& what) : std::runtime_error(what), status_(status) {}
  QpStatus status() const { return status_; }

 private:
  QpStatus status_;
};

/// Primal-dual interior point with Mehrotra predictor-corrector steps.
/// Never throws for solver outcomes; inspect QpSolution::status.
QpSolution solve(const QpProblem& problem, const QpOptions& options = {},
                 std::span<const double> warm_start = {});

/// As solve(), but throws QpError unless the status is Optimal.
QpSolution solve_or_throw(const QpProblem& problem, const QpOptions& options = {},
                          std::span<const double> warm_start = {});

KktResiduals kkt_residuals(const QpProblem& problem, const QpSolution& solution);

struct FeasibilityResult {
  bool feasible = false;
  double violation = 0.0;  // minimal total constraint violation (elastic objective)
};

/// Elastic phase-one solve: minimizes the total violation of Ax=b, Gx<=h.
FeasibilityResult feasibility_solve(const QpProblem& problem, double tolerance = 1e-6);

}  // namespace mcoupling::qp
