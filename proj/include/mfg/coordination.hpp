#pragma once

// Equilibrium-finding algorithms for the welfare twin of the game:
//
//   primal-dual   u_i <- argmin V_i + lambda . c_i(u_i)        (agents)
//                 z   <- argmin phi(z) - N lambda . z          (coordinator)
//                 lambda <- lambda + beta N (mean c_i - z)
//   Mann          the same with beta_k = beta0 / k^p
//   ADMM          consensus/sharing splitting of the welfare program
//
// c_i(u_i) is u_i in control-average mode and the lifted states otherwise.
// Agent updates run through for_each_index; coordinator updates are serial.

#include "mfg/agent_solver.hpp"
#include "mfg/core_model.hpp"
#include "mfg/parallel.hpp"
#include "mfg/qp.hpp"

namespace mfg {

struct SolverState {
  std::vector<Vector> controls;
  Vector aggregate_z;
  Vector dual_price;
  int iter = 0;
  std::vector<TraceRow> residual_trace;
};

enum class StepKind { constant, mann };

struct StepSchedule {
  StepKind kind = StepKind::mann;
  double beta0 = 1.0;
  double exponent = 1.0;

  /// Throws std::invalid_argument if beta0 <= 0, or for the Mann kind when
  /// the exponent leaves (0, 1] (steps must vanish yet sum to infinity).
  void validate() const;
  /// Step used at iteration k >= 1.
  double step(int k) const;
};

struct CoordinationOptions {
  double tol = 1e-6;
  int max_iter = 1000;
  QpSettings qp;
  Execution exec = Execution::parallel;
};

/// Greedy-fill controls, z = mean coupled variable, lambda = F(z).
SolverState initial_state(const ProblemInstance& instance);

/// argmin_z phi(z) - N lambda . z + (N prox / 2) ||z - center||^2.
/// Closed form for affine couplings, per-component Newton otherwise.
Vector coordinator_update(const CouplingSpec& coupling, const Vector& price,
                          double prox = 0.0, const Vector* center = nullptr);

SolverState primal_dual_step(const SolverState& state,
                             const ProblemInstance& instance, double beta,
                             const CoordinationOptions& options);

/// Dual-ascent step 1 / L where L bounds the Lipschitz constant of the dual
/// gradient: sum_i ||C_i||^2 / mu_i + N^2 / mu_phi.
double default_primal_dual_step(const ProblemInstance& instance);

/// beta0 = L_F / N, the primal-dual form of aggregate Mann averaging with
/// weights 1/k; exponent 1.
StepSchedule default_mann_schedule(const ProblemInstance& instance);

/// rho = sqrt(mean private curvature 2 eta_i * potential curvature). Agent
/// disagreement contracts like rho / (2 eta + rho) and periods where every
/// agent sits on a bound like psi'' / (psi'' + rho); the geometric mean
/// balances the two. Falls back to 2 eta, then L_F / 2.
double default_admm_penalty(const ProblemInstance& instance);

Solution primal_dual_solve(const ProblemInstance& instance, double beta,
                           const CoordinationOptions& options);

Solution mann_solve(const ProblemInstance& instance, const StepSchedule& schedule,
                    const CoordinationOptions& options);

/// Throws std::invalid_argument if the coupling fails the potential check or
/// rho_admm <= 0. The returned dual price satisfies lambda = F(z) up to the
/// coordinator solve accuracy.
Solution admm_solve(const ProblemInstance& instance, double rho_admm,
                    const CoordinationOptions& options);

/// ||y - F(mean c_i(mu_i(y)))||, zero exactly at a mean-field equilibrium.
double fixed_point_residual(const ProblemInstance& instance, const Vector& y,
                            const QpSettings& settings,
                            Execution exec = Execution::parallel);

/// First iteration k after which ||z_j - z_final|| / ||z_final|| <= rel_tol
/// for every j >= k, with z_final the last entry (history index 0 is
/// iteration 1). Returns -1 for an empty history.
int iterations_to_relative_tolerance(const std::vector<Vector>& z_history,
                                     double rel_tol);

}  // namespace mfg
