#include "mcoupling/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mcoupling::qp {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double inf_norm(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

double max_step(const VectorXd& v, const VectorXd& dv) {
  double step = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) step = std::min(step, -v[i] / dv[i]);
  }
  return step;
}

// Dense factorization of the regularized KKT matrix
//   [ H + dp I   A'    ]
//   [ A         -dd I  ]
// with iterative refinement against the unregularized system.
class KktSystem {
 public:
  KktSystem(Eigen::Index n, Eigen::Index m) : n_(n), m_(m), k_(n + m, n + m) {}

  void factor(const SparseMatrix& H, const SparseMatrix& A) {
    k_.setZero();
    k_.topLeftCorner(n_, n_) = MatrixXd(H);
    if (m_ > 0) {
      const MatrixXd dense_a(A);
      k_.bottomLeftCorner(m_, n_) = dense_a;
      k_.topRightCorner(n_, m_) = dense_a.transpose();
    }
    primal_reg_ = 1e-11;
    dual_reg_ = 1e-11;
    regularized_ = k_;
    regularized_.diagonal().head(n_).array() += primal_reg_;
    if (m_ > 0) regularized_.diagonal().tail(m_).array() -= dual_reg_;
    lu_.compute(regularized_);
  }

  VectorXd solve(const VectorXd& rhs) const {
    VectorXd sol = lu_.solve(rhs);
    for (int pass = 0; pass < 3; ++pass) {
      const VectorXd residual = rhs - k_ * sol;
      if (inf_norm(residual) <= 1e-15 * (1.0 + inf_norm(rhs))) break;
      sol += lu_.solve(residual);
    }
    return sol;
  }

  Eigen::Index n() const { return n_; }

 private:
  Eigen::Index n_;
  Eigen::Index m_;
  MatrixXd k_;
  MatrixXd regularized_;
  Eigen::PartialPivLU<MatrixXd> lu_;
  double primal_reg_ = 0.0;
  double dual_reg_ = 0.0;
};

double objective_value(const QpProblem& p, const VectorXd& x) {
  return 0.5 * x.dot(p.Q * x) + p.c.dot(x) + p.constant;
}

void count_degenerate(const QpProblem& p, QpSolution& sol) {
  if (p.inequalities() == 0) return;
  // Interior point iterates approach a degenerate vertex with slack and
  // multiplier both of order sqrt(gap), so the thresholds are loose.
  const VectorXd slack = p.h - p.G * sol.x;
  const double s_tol = 1e-4 * (1.0 + inf_norm(p.h));
  const double z_tol = 1e-4 * (1.0 + inf_norm(sol.z));
  for (Eigen::Index i = 0; i < slack.size(); ++i) {
    if (std::abs(slack[i]) <= s_tol && sol.z[i] <= z_tol) ++sol.degenerate_active;
  }
}

QpSolution solve_equality_only(const QpProblem& p) {
  const auto n = p.variables();
  const auto m = p.equalities();
  KktSystem kkt(n, m);
  kkt.factor(p.Q, p.A);
  VectorXd rhs(n + m);
  rhs << -p.c, p.b;
  const VectorXd sol = kkt.solve(rhs);
  QpSolution out;
  out.x = sol.head(n);
  out.y = sol.tail(m);
  out.z = VectorXd::Zero(0);
  out.iterations = 1;
  out.objective = objective_value(p, out.x);
  const VectorXd rd = p.Q * out.x + p.c + p.A.transpose() * out.y;
  const VectorXd rp = p.A * out.x - p.b;
  const bool ok = inf_norm(rd) <= 1e-7 * (1.0 + inf_norm(p.c)) && inf_norm(rp) <= 1e-7 * (1.0 + inf_norm(p.b));
  out.status = ok ? QpStatus::Optimal : QpStatus::Infeasible;
  return out;
}

QpSolution interior_point(const QpProblem& p, const QpOptions& opt, std::span<const double> warm) {
  const auto n = p.variables();
  const auto me = p.equalities();
  const auto mi = p.inequalities();
  const SparseMatrix At = p.A.transpose();
  const SparseMatrix Gt = p.G.transpose();

  KktSystem kkt(n, me);
  VectorXd x(n), y = VectorXd::Zero(me), s(mi), z(mi);

  if (!warm.empty() && static_cast<Eigen::Index>(warm.size()) == n) {
    x = Eigen::Map<const VectorXd>(warm.data(), n);
  } else {
    // Least-squares start: minimize the quadratic plus ||Gx - h||^2 / 2 on Ax = b.
    const SparseMatrix H = p.Q + Gt * p.G;
    kkt.factor(H, p.A);
    VectorXd rhs(n + me);
    rhs << -p.c + Gt * p.h, p.b;
    x = kkt.solve(rhs).head(n);
  }
  // Slack and multiplier start as in cvxopt: both from the same residual,
  // shifted into the interior.
  s = p.h - p.G * x;
  z = -s;
  if (warm.empty() || static_cast<Eigen::Index>(warm.size()) != n) {
    const double as = -s.minCoeff();
    if (as >= -1e-8 * std::max(1.0, s.maxCoeff())) s.array() += 1.0 + as;
    const double az = -z.minCoeff();
    if (az >= -1e-8 * std::max(1.0, z.maxCoeff())) z.array() += 1.0 + az;
  } else {
    s = s.cwiseMax(1e-4 * (1.0 + inf_norm(p.h)));
    z.setConstant(1.0);
  }

  const double c_scale = 1.0 + inf_norm(p.c);
  const double b_scale = 1.0 + inf_norm(p.b);
  const double h_scale = 1.0 + inf_norm(p.h);

  QpSolution out;
  out.status = QpStatus::MaxIterations;
  // Best iterate by relative KKT error, returned if progress stalls.
  double best_merit = std::numeric_limits<double>::infinity();
  VectorXd bx = x, by = y, bz = z;
  int stalled = 0;
  VectorXd rhs(n + me);
  for (int it = 0; it < opt.max_iterations; ++it) {
    out.iterations = it;
    const VectorXd qx = p.Q * x;
    const VectorXd aty = At * y;
    const VectorXd gtz = Gt * z;
    const VectorXd rd = qx + p.c + aty + gtz;
    const VectorXd rp = p.A * x - p.b;
    const VectorXd ri = p.G * x + s - p.h;
    const double gap = s.dot(z);
    const double mu = gap / static_cast<double>(mi);
    const double fval = 0.5 * x.dot(qx) + p.c.dot(x);
    if (!x.allFinite() || !y.allFinite() || !z.allFinite() || !std::isfinite(mu)) break;

    const double d_scale = c_scale + std::max({inf_norm(qx), inf_norm(aty), inf_norm(gtz)});
    const double merit = std::max({inf_norm(rd) / d_scale, inf_norm(rp) / b_scale, inf_norm(ri) / h_scale,
                                   gap / (1.0 + std::abs(fval))});
    if (merit < best_merit) {
      stalled = merit < 0.9 * best_merit ? 0 : stalled + 1;
      best_merit = merit;
      bx = x;
      by = y;
      bz = z;
    } else {
      ++stalled;
    }
    if (merit <= opt.tolerance) {
      out.status = QpStatus::Optimal;
      break;
    }
    if (stalled >= 30 || inf_norm(x) > 1e13 || inf_norm(z) > 1e15 || inf_norm(y) > 1e15) break;

    const VectorXd d = z.cwiseQuotient(s);
    const SparseMatrix H = p.Q + Gt * d.asDiagonal() * p.G;
    kkt.factor(H, p.A);

    auto newton = [&](const VectorXd& rc, VectorXd& dx, VectorXd& dy, VectorXd& ds, VectorXd& dz) {
      const VectorXd inner = d.cwiseProduct(ri) - rc.cwiseQuotient(s);
      rhs.head(n) = -rd - Gt * inner;
      rhs.tail(me) = -rp;
      const VectorXd sol = kkt.solve(rhs);
      dx = sol.head(n);
      dy = sol.tail(me);
      const VectorXd gdx = p.G * dx;
      dz = d.cwiseProduct(gdx + ri) - rc.cwiseQuotient(s);
      ds = -ri - gdx;
    };

    VectorXd dx, dy, ds, dz;
    const VectorXd rc_aff = s.cwiseProduct(z);
    newton(rc_aff, dx, dy, ds, dz);
    const double ap = max_step(s, ds);
    const double ad = max_step(z, dz);
    const double mu_aff = (s + ap * ds).dot(z + ad * dz) / static_cast<double>(mi);
    const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);

    const VectorXd rc = rc_aff + ds.cwiseProduct(dz) - VectorXd::Constant(mi, sigma * mu);
    newton(rc, dx, dy, ds, dz);
    double step = std::min(1.0, 0.995 * std::min(max_step(s, ds), max_step(z, dz)));
    if ((s + step * ds).dot(z + step * dz) > gap) {
      // The second-order correction made things worse; take a centred step.
      newton(rc_aff - VectorXd::Constant(mi, std::max(sigma, 0.5) * mu), dx, dy, ds, dz);
      step = std::min(1.0, 0.995 * std::min(max_step(s, ds), max_step(z, dz)));
    }
    x += step * dx;
    y += step * dy;
    s += step * ds;
    z += step * dz;
    out.iterations = it + 1;
  }
  // Loose acceptance when the linear algebra limits the attainable accuracy.
  if (out.status != QpStatus::Optimal && best_merit <= std::max(1e3 * opt.tolerance, 1e-7)) out.status = QpStatus::Optimal;
  if (out.status == QpStatus::Optimal) {
    x = bx;
    y = by;
    z = bz;
  }
  out.x = x;
  out.y = y;
  out.z = z;
  out.objective = objective_value(p, x);
  return out;
}

}  // namespace

void QpProblem::check() const {
  const auto n = c.size();
  if (Q.rows() != n || Q.cols() != n) throw std::invalid_argument("Q must be n x n");
  if (A.rows() != b.size() || (A.rows() > 0 && A.cols() != n)) throw std::invalid_argument("A/b dimension mismatch");
  if (G.rows() != h.size() || (G.rows() > 0 && G.cols() != n)) throw std::invalid_argument("G/h dimension mismatch");
  if (!variable_names.empty() && static_cast<Eigen::Index>(variable_names.size()) != n)
    throw std::invalid_argument("variable name count mismatch");
  const SparseMatrix asym = SparseMatrix(Q.transpose()) - Q;
  double amax = 0.0;
  for (int k = 0; k < asym.outerSize(); ++k)
    for (SparseMatrix::InnerIterator itr(asym, k); itr; ++itr) amax = std::max(amax, std::abs(itr.value()));
  if (amax > 1e-12) throw std::invalid_argument("Q must be symmetric");
}

Eigen::Index QpProblem::variable(std::string_view name) const {
  for (std::size_t i = 0; i < variable_names.size(); ++i) {
    if (variable_names[i] == name) return static_cast<Eigen::Index>(i);
  }
  throw std::out_of_range("no variable named " + std::string(name));
}

std::string_view to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::Unbounded: return "unbounded";
    case QpStatus::MaxIterations: return "max-iterations";
  }
  return "unknown";
}

double KktResiduals::max() const {
  return std::max({stationarity, equality, inequality, complementarity, dual_sign});
}

QpSolution solve(const QpProblem& problem, const QpOptions& options, std::span<const double> warm_start) {
  QpProblem const& p = problem;
  // Empty A or G must still have the right column count for the products below.
  QpProblem fixed;
  const QpProblem* use = &p;
  if ((p.A.cols() != p.variables()) || (p.G.cols() != p.variables())) {
    fixed = p;
    if (fixed.A.cols() != p.variables()) fixed.A.resize(0, p.variables());
    if (fixed.G.cols() != p.variables()) fixed.G.resize(0, p.variables());
    use = &fixed;
  }
  use->check();

  QpSolution sol = use->inequalities() == 0 ? solve_equality_only(*use) : interior_point(*use, options, warm_start);
  if (sol.status == QpStatus::Optimal) {
    count_degenerate(*use, sol);
    return sol;
  }
  if (use->inequalities() == 0) return sol;
  // Classify the failure.
  const auto feas = feasibility_solve(*use);
  if (!feas.feasible) {
    sol.status = QpStatus::Infeasible;
  } else if (!sol.x.allFinite() || inf_norm(sol.x) > 1e12) {
    sol.status = QpStatus::Unbounded;
  }
  return sol;
}

QpSolution solve_or_throw(const QpProblem& problem, const QpOptions& options, std::span<const double> warm_start) {
  auto sol = solve(problem, options, warm_start);
  if (sol.status != QpStatus::Optimal)
    throw QpError(sol.status, "QP solve failed: " + std::string(to_string(sol.status)));
  return sol;
}

KktResiduals kkt_residuals(const QpProblem& p, const QpSolution& s) {
  KktResiduals r;
  VectorXd stat = p.Q * s.x + p.c;
  if (p.equalities() > 0) stat += p.A.transpose() * s.y;
  if (p.inequalities() > 0) stat += p.G.transpose() * s.z;
  r.stationarity = inf_norm(stat);
  if (p.equalities() > 0) r.equality = inf_norm(p.A * s.x - p.b);
  if (p.inequalities() > 0) {
    const VectorXd slack = p.h - p.G * s.x;
    r.inequality = std::max(0.0, -slack.minCoeff());
    r.complementarity = s.z.cwiseProduct(slack).cwiseAbs().maxCoeff();
    r.dual_sign = std::max(0.0, -s.z.minCoeff());
  }
  return r;
}

FeasibilityResult feasibility_solve(const QpProblem& problem, double tolerance) {
  // Variables [x; u; v; w]: Ax + u - v = b, Gx - w <= h, u, v, w >= 0.
  const auto n = problem.variables();
  const auto me = problem.equalities();
  const auto mi = problem.inequalities();
  const auto total = n + 2 * me + mi;

  QpProblem e;
  Triplets q;
  for (Eigen::Index i = 0; i < n; ++i) q.emplace_back(i, i, 1e-8);
  e.Q.resize(total, total);
  e.Q.setFromTriplets(q.begin(), q.end());
  e.c = VectorXd::Zero(total);
  e.c.tail(2 * me + mi).setOnes();

  Triplets a;
  if (me > 0) {
    for (int k = 0; k < problem.A.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(problem.A, k); it; ++it) a.emplace_back(it.row(), it.col(), it.value());
    for (Eigen::Index r = 0; r < me; ++r) {
      a.emplace_back(r, n + r, 1.0);
      a.emplace_back(r, n + me + r, -1.0);
    }
  }
  e.A.resize(me, total);
  e.A.setFromTriplets(a.begin(), a.end());
  e.b = problem.b;

  Triplets g;
  if (mi > 0) {
    for (int k = 0; k < problem.G.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(problem.G, k); it; ++it) g.emplace_back(it.row(), it.col(), it.value());
    for (Eigen::Index r = 0; r < mi; ++r) g.emplace_back(r, n + 2 * me + r, -1.0);
  }
  for (Eigen::Index r = 0; r < 2 * me + mi; ++r) g.emplace_back(mi + r, n + r, -1.0);
  e.G.resize(mi + 2 * me + mi, total);
  e.G.setFromTriplets(g.begin(), g.end());
  e.h = VectorXd::Zero(mi + 2 * me + mi);
  e.h.head(mi) = problem.h;

  const auto sol = interior_point(e, QpOptions{1e-10, 300}, {});
  FeasibilityResult out;
  out.violation = sol.x.tail(2 * me + mi).sum();
  const double scale = 1.0 + std::max(inf_norm(problem.b), inf_norm(problem.h));
  out.feasible = sol.status == QpStatus::Optimal && out.violation <= tolerance * scale;
  return out;
}

}  // namespace mcoupling::qp
