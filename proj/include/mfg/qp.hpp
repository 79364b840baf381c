#pragma once

// Dense convex QP engine for the small per-agent problems:
//
//   minimize    1/2 u^T P u + q^T u
//   subject to  A u = b,  lo <= u <= hi,  H u <= h
//
// solved by operator splitting (alternating an equality-constrained linear
// solve with projection onto the constraint box, plus scaled dual updates),
// followed by an active-set polish step.

#include "mfg/core_model.hpp"

#include <stdexcept>
#include <string>

namespace mfg {

struct QpProblem {
  Matrix quad_matrix;
  Vector lin_vector;
  Matrix eq_matrix;   // may have zero rows
  Vector eq_rhs;
  Vector lo;          // -inf / +inf entries allowed
  Vector hi;
  Matrix ineq_matrix; // may have zero rows
  Vector ineq_rhs;

  int size() const { return static_cast<int>(lin_vector.size()); }
  double objective(const Vector& u) const {
    return 0.5 * u.dot(quad_matrix * u) + lin_vector.dot(u);
  }
  /// Largest violation over all constraints (0 when feasible).
  double max_violation(const Vector& u) const;
};

struct QpSettings {
  double tol_primal = 1e-8;
  double tol_dual = 1e-8;
  int max_iter = 20000;
  double rho_penalty = 1.0;
};

enum class QpStatus { converged, max_iter, infeasible };

std::string to_string(QpStatus status);

struct QpResult {
  Vector u;
  QpStatus status = QpStatus::max_iter;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double objective = 0.0;
};

class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Euclidean projection onto {u : sum(u) = total, lo <= u <= hi}.
/// Throws InfeasibleError when sum(lo) > total or total > sum(hi).
Vector project_box_budget(const Vector& v, const Vector& lo, const Vector& hi,
                          double total);

/// Never throws on non-convergence; the status carries the outcome and `u` is
/// the best iterate. Throws std::invalid_argument on malformed dimensions.
QpResult solve_qp(const QpProblem& problem, const QpSettings& settings,
                  const Vector* initial = nullptr);

/// ||u - Pi(u - grad f(u))||_inf where Pi is the Euclidean projection onto
/// the feasible set, computed with a tight inner QP. Zero at the optimum.
double projected_gradient_residual(const QpProblem& problem, const Vector& u);

}  // namespace mfg
