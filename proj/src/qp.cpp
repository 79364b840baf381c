#include "mfg/qp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mfg {

std::string to_string(QpStatus status) {
  switch (status) {
    case QpStatus::converged: return "converged";
    case QpStatus::max_iter: return "max_iter";
    case QpStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

double QpProblem::max_violation(const Vector& u) const {
  double worst = 0.0;
  if (eq_matrix.rows() > 0) {
    worst = std::max(worst, (eq_matrix * u - eq_rhs).cwiseAbs().maxCoeff());
  }
  for (int i = 0; i < u.size(); ++i) {
    worst = std::max({worst, lo(i) - u(i), u(i) - hi(i)});
  }
  if (ineq_matrix.rows() > 0) {
    worst = std::max(worst, (ineq_matrix * u - ineq_rhs).maxCoeff());
  }
  return worst;
}

// ---------------------------------------------------------------------------

Vector project_box_budget(const Vector& v, const Vector& lo, const Vector& hi,
                          double total) {
  const Eigen::Index n = v.size();
  if (lo.size() != n || hi.size() != n) {
    throw std::invalid_argument("project_box_budget: dimension mismatch");
  }
  const double slack = 1e-12 * std::max(1.0, std::abs(total));
  if (lo.sum() > total + slack || total > hi.sum() + slack) {
    throw InfeasibleError("project_box_budget: budget outside [sum(lo), sum(hi)]");
  }
  auto clipped = [&](double tau) -> Vector {
    return (v.array() - tau).max(lo.array()).min(hi.array()).matrix();
  };
  // sum(clip(v - tau)) is nonincreasing in tau; bracket the root.
  double tau_lo = (v - hi).minCoeff() - 1.0;
  double tau_hi = (v - lo).maxCoeff() + 1.0;
  for (int it = 0; it < 200 && tau_hi - tau_lo > 1e-15 * std::max(1.0, std::abs(tau_hi));
       ++it) {
    const double mid = 0.5 * (tau_lo + tau_hi);
    if (clipped(mid).sum() > total) tau_lo = mid;
    else tau_hi = mid;
  }
  double tau = 0.5 * (tau_lo + tau_hi);
  // Exact finish on the free set identified by bisection.
  Vector u = clipped(tau);
  double free_v = 0.0, fixed = 0.0;
  int free_count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = v(i) - tau;
    if (w > lo(i) && w < hi(i)) {
      free_v += v(i);
      ++free_count;
    } else {
      fixed += u(i);
    }
  }
  if (free_count > 0) {
    const double exact_tau = (free_v - (total - fixed)) / free_count;
    Vector candidate = clipped(exact_tau);
    if (std::abs(candidate.sum() - total) <= std::abs(u.sum() - total)) u = candidate;
  }
  return u;
}

// ---------------------------------------------------------------------------

namespace {

struct Stacked {
  Matrix m;      // [A; I; H]
  Vector lower;
  Vector upper;
  int n_eq = 0;
  int n_box = 0;
};

Stacked stack_constraints(const QpProblem& p) {
  const int n = p.size();
  const int n_eq = static_cast<int>(p.eq_matrix.rows());
  const int n_in = static_cast<int>(p.ineq_matrix.rows());
  Stacked s;
  s.n_eq = n_eq;
  s.n_box = n;
  s.m = Matrix::Zero(n_eq + n + n_in, n);
  s.lower.resize(n_eq + n + n_in);
  s.upper.resize(n_eq + n + n_in);
  if (n_eq > 0) {
    s.m.topRows(n_eq) = p.eq_matrix;
    s.lower.head(n_eq) = p.eq_rhs;
    s.upper.head(n_eq) = p.eq_rhs;
  }
  s.m.middleRows(n_eq, n) = Matrix::Identity(n, n);
  s.lower.segment(n_eq, n) = p.lo;
  s.upper.segment(n_eq, n) = p.hi;
  if (n_in > 0) {
    s.m.bottomRows(n_in) = p.ineq_matrix;
    s.lower.tail(n_in).setConstant(-kInf);
    s.upper.tail(n_in) = p.ineq_rhs;
  }
  return s;
}

void check_dimensions(const QpProblem& p) {
  const int n = p.size();
  if (p.quad_matrix.rows() != n || p.quad_matrix.cols() != n) {
    throw std::invalid_argument("solve_qp: quad_matrix must be n x n");
  }
  if (p.lo.size() != n || p.hi.size() != n) {
    throw std::invalid_argument("solve_qp: box bounds must have n entries");
  }
  if (p.eq_matrix.rows() > 0 &&
      (p.eq_matrix.cols() != n || p.eq_rhs.size() != p.eq_matrix.rows())) {
    throw std::invalid_argument("solve_qp: equality block malformed");
  }
  if (p.ineq_matrix.rows() > 0 &&
      (p.ineq_matrix.cols() != n || p.ineq_rhs.size() != p.ineq_matrix.rows())) {
    throw std::invalid_argument("solve_qp: inequality block malformed");
  }
}

double inf_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Solves the equality-constrained problem on the guessed active set and
// accepts it only if it is primal feasible with correctly signed multipliers,
// in which case it satisfies the KKT conditions to roundoff.
bool polish(const QpProblem& p, const Stacked& s, const Matrix& quad, const Vector& z,
            const Vector& y, const QpSettings& settings, Vector& x_out, Vector& y_out) {
  const int n = p.size();
  const int rows = static_cast<int>(s.m.rows());
  std::vector<int> active;
  std::vector<int> side;  // -1 lower, +1 upper, 0 equality
  for (int i = 0; i < rows; ++i) {
    if (s.lower(i) == s.upper(i)) {
      active.push_back(i);
      side.push_back(0);
    } else if (std::isfinite(s.lower(i)) && z(i) - s.lower(i) < -y(i)) {
      active.push_back(i);
      side.push_back(-1);
    } else if (std::isfinite(s.upper(i)) && s.upper(i) - z(i) < y(i)) {
      active.push_back(i);
      side.push_back(1);
    }
  }
  const int m = static_cast<int>(active.size());
  Matrix kkt = Matrix::Zero(n + m, n + m);
  Vector rhs(n + m);
  kkt.topLeftCorner(n, n) = quad;
  rhs.head(n) = -p.lin_vector;
  for (int j = 0; j < m; ++j) {
    const int i = active[j];
    kkt.block(n + j, 0, 1, n) = s.m.row(i);
    kkt.block(0, n + j, n, 1) = s.m.row(i).transpose();
    rhs(n + j) = side[j] < 0 ? s.lower(i) : s.upper(i);
  }
  constexpr double delta = 1e-11;
  Matrix reg = kkt;
  reg.topLeftCorner(n, n).diagonal().array() += delta;
  reg.bottomRightCorner(m, m).diagonal().array() -= delta;
  Eigen::PartialPivLU<Matrix> lu(reg);
  Vector sol = lu.solve(rhs);
  for (int r = 0; r < 5; ++r) sol += lu.solve(rhs - kkt * sol);
  if (!sol.allFinite()) return false;

  Vector x = sol.head(n);
  Vector y_full = Vector::Zero(rows);
  for (int j = 0; j < m; ++j) {
    const double mult = sol(n + j);
    if (side[j] < 0 && mult > 1e-12) return false;
    if (side[j] > 0 && mult < -1e-12) return false;
    y_full(active[j]) = mult;
  }
  const Vector mx = s.m * x;
  const double viol =
      std::max(inf_norm((s.lower - mx).cwiseMax(0.0)), inf_norm((mx - s.upper).cwiseMax(0.0)));
  const double dual = inf_norm(quad * x + p.lin_vector + s.m.transpose() * y_full);
  if (viol > settings.tol_primal || dual > settings.tol_dual) return false;
  x_out = x;
  y_out = y_full;
  return true;
}

}  // namespace

QpResult solve_qp(const QpProblem& problem, const QpSettings& settings,
                  const Vector* initial) {
  check_dimensions(problem);
  if (!(settings.tol_primal > 0 && settings.tol_dual > 0 && settings.max_iter > 0 &&
        settings.rho_penalty > 0)) {
    throw std::invalid_argument("solve_qp: settings must be positive");
  }
  const int n = problem.size();
  const Matrix quad = 0.5 * (problem.quad_matrix + problem.quad_matrix.transpose());
  const Stacked s = stack_constraints(problem);
  const int rows = static_cast<int>(s.m.rows());

  constexpr double sigma = 1e-6;
  constexpr double relax = 1.6;
  constexpr int check_every = 5;
  constexpr int adapt_every = 25;

  double rho = settings.rho_penalty;
  Vector rho_vec(rows);
  auto fill_rho = [&]() {
    for (int i = 0; i < rows; ++i) {
      if (s.lower(i) == s.upper(i)) rho_vec(i) = 1e3 * rho;
      else if (!std::isfinite(s.lower(i)) && !std::isfinite(s.upper(i))) rho_vec(i) = 1e-6;
      else rho_vec(i) = rho;
    }
  };
  Eigen::LLT<Matrix> factor;
  auto refactor = [&]() {
    fill_rho();
    Matrix k = quad + s.m.transpose() * rho_vec.asDiagonal() * s.m;
    k.diagonal().array() += sigma;
    factor.compute(k);
    if (factor.info() != Eigen::Success) {
      throw std::invalid_argument("solve_qp: quad_matrix is not positive semidefinite");
    }
  };
  refactor();

  Vector x = initial && initial->size() == n ? *initial : Vector::Zero(n);
  Vector z = (s.m * x).cwiseMax(s.lower).cwiseMin(s.upper);
  Vector y = Vector::Zero(rows);

  QpResult result;
  auto finish = [&](QpStatus status, int iters, const Vector& xs, const Vector& ys) {
    result.u = xs;
    result.status = status;
    result.iterations = iters;
    const Vector mx = s.m * xs;
    result.primal_residual = std::max(inf_norm((s.lower - mx).cwiseMax(0.0)),
                                      inf_norm((mx - s.upper).cwiseMax(0.0)));
    result.dual_residual = inf_norm(quad * xs + problem.lin_vector + s.m.transpose() * ys);
    result.objective = problem.objective(xs);
    return result;
  };

  for (int iter = 1; iter <= settings.max_iter; ++iter) {
    const Vector rhs = sigma * x - problem.lin_vector +
                       s.m.transpose() * (rho_vec.cwiseProduct(z) - y);
    const Vector x_tilde = factor.solve(rhs);
    const Vector z_tilde = s.m * x_tilde;
    const Vector x_next = relax * x_tilde + (1.0 - relax) * x;
    const Vector z_relaxed = relax * z_tilde + (1.0 - relax) * z;
    const Vector z_next =
        (z_relaxed + y.cwiseQuotient(rho_vec)).cwiseMax(s.lower).cwiseMin(s.upper);
    const Vector y_next = y + rho_vec.cwiseProduct(z_relaxed - z_next);
    const Vector dy = y_next - y;
    x = x_next;
    z = z_next;
    y = y_next;

    if (iter % check_every != 0 && iter != settings.max_iter) continue;

    const Vector mx = s.m * x;
    const Vector px = quad * x;
    const Vector mty = s.m.transpose() * y;
    const double prim = inf_norm(mx - z);
    const double dual = inf_norm(px + problem.lin_vector + mty);

    if (prim <= settings.tol_primal && dual <= settings.tol_dual) {
      Vector xp, yp;
      if (polish(problem, s, quad, z, y, settings, xp, yp)) {
        return finish(QpStatus::converged, iter, xp, yp);
      }
      return finish(QpStatus::converged, iter, x, y);
    }
    if (iter % 50 == 0 && prim < 1e-3 && dual < 1e-3) {
      Vector xp, yp;
      if (polish(problem, s, quad, z, y, settings, xp, yp)) {
        return finish(QpStatus::converged, iter, xp, yp);
      }
    }

    // Primal infeasibility certificate from the dual increment.
    const double dy_norm = inf_norm(dy);
    if (dy_norm > 1e-12) {
      const double mt_dy = inf_norm(s.m.transpose() * dy);
      double support = 0.0;
      bool bounded = true;
      for (int i = 0; i < rows; ++i) {
        if (dy(i) > 0) {
          if (!std::isfinite(s.upper(i))) { bounded = false; break; }
          support += s.upper(i) * dy(i);
        } else if (dy(i) < 0) {
          if (!std::isfinite(s.lower(i))) { bounded = false; break; }
          support += s.lower(i) * dy(i);
        }
      }
      if (bounded && mt_dy <= 1e-7 * dy_norm && support < -1e-7 * dy_norm) {
        return finish(QpStatus::infeasible, iter, x, y);
      }
    }

    if (iter % adapt_every == 0) {
      const double prim_scale = std::max({inf_norm(mx), inf_norm(z), 1e-30});
      const double dual_scale =
          std::max({inf_norm(px), inf_norm(mty), inf_norm(problem.lin_vector), 1e-30});
      const double ratio =
          std::sqrt((prim / prim_scale) / std::max(dual / dual_scale, 1e-30));
      if (ratio > 5.0 || ratio < 0.2) {
        rho = std::clamp(rho * ratio, 1e-6, 1e6);
        refactor();
      }
    }
  }
  Vector xp, yp;
  if (polish(problem, s, quad, z, y, settings, xp, yp)) {
    return finish(QpStatus::converged, settings.max_iter, xp, yp);
  }
  return finish(QpStatus::max_iter, settings.max_iter, x, y);
}

double projected_gradient_residual(const QpProblem& problem, const Vector& u) {
  const int n = problem.size();
  const Vector grad = 0.5 * (problem.quad_matrix + problem.quad_matrix.transpose()) * u +
                      problem.lin_vector;
  QpProblem proj = problem;
  proj.quad_matrix = Matrix::Identity(n, n);
  proj.lin_vector = -(u - grad);
  QpSettings tight;
  tight.tol_primal = tight.tol_dual = 1e-11;
  tight.max_iter = 50000;
  const QpResult r = solve_qp(proj, tight, &u);
  return inf_norm(u - r.u);
}

}  // namespace mfg
