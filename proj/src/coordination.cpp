#include "mfg/coordination.hpp"

#include "mfg/verification.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mfg {

void StepSchedule::validate() const {
  if (!(beta0 > 0.0)) throw std::invalid_argument("step schedule: beta0 must be > 0");
  if (kind == StepKind::mann && !(exponent > 0.0 && exponent <= 1.0)) {
    throw std::invalid_argument(
        "step schedule: Mann steps need exponent in (0, 1] so that beta_k -> 0 "
        "while sum beta_k diverges");
  }
}

double StepSchedule::step(int k) const {
  if (kind == StepKind::constant) return beta0;
  return beta0 / std::pow(static_cast<double>(std::max(k, 1)), exponent);
}

// ---------------------------------------------------------------------------

SolverState initial_state(const ProblemInstance& instance) {
  SolverState state;
  state.controls.reserve(instance.agents.size());
  for (const AgentSpec& agent : instance.agents) {
    auto fill = feasible_fill(agent, instance.grid);
    if (!fill) throw AgentSolveError(agent.id, "empty feasible set");
    state.controls.push_back(*fill);
  }
  state.aggregate_z = aggregate(instance, state.controls);
  state.dual_price = instance.coupling.price(state.aggregate_z);
  return state;
}

Vector coordinator_update(const CouplingSpec& coupling, const Vector& price,
                          double prox, const Vector* center) {
  const int k = coupling.dimension;
  require_size(price, k, "coordinator price");
  const Vector anchor = center ? *center : Vector::Zero(k);
  if (coupling.affine) {
    const AffineCouplingData& a = *coupling.affine;
    Matrix lhs = 0.5 * (a.slope + a.slope.transpose());
    lhs.diagonal().array() += prox;
    const Vector rhs = price - a.offset + prox * anchor;
    // Minimum-change solution when the potential is flat in some direction.
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(lhs);
    return anchor + cod.solve(rhs - lhs * anchor);
  }
  if (!coupling.potential_gradient || !coupling.potential_hessian_diag) {
    throw std::invalid_argument("coordinator_update: potential derivatives missing");
  }
  Vector z = anchor;
  const double scale = std::max(1.0, price.cwiseAbs().maxCoeff());
  for (int it = 0; it < 200; ++it) {
    const Vector g = coupling.potential_gradient(z) - price + prox * (z - anchor);
    if (g.cwiseAbs().maxCoeff() <= 1e-12 * scale) return z;
    const Vector h = coupling.potential_hessian_diag(z).array() + prox;
    if ((h.array() <= 0.0).any()) {
      throw std::invalid_argument("coordinator_update: potential is not strictly convex");
    }
    z -= g.cwiseQuotient(h);
  }
  return z;
}

namespace {

TraceRow make_row(const ProblemInstance& instance, int iter,
                  const std::vector<Vector>& controls,
                  const std::vector<Vector>& previous, const Vector& mean,
                  const Vector& z, const Vector& z_previous) {
  TraceRow row;
  row.iter = iter;
  row.primal_res = (mean - z).norm();
  double dual = (z - z_previous).norm();
  row.control_norms.resize(controls.size());
  for (std::size_t i = 0; i < controls.size(); ++i) {
    dual = std::max(dual, (controls[i] - previous[i]).norm());
    row.control_norms[i] = controls[i].norm();
  }
  row.dual_res = dual;
  row.welfare = social_welfare(instance, controls);
  row.z_norm = z.norm();
  return row;
}

Solution make_solution(const ProblemInstance& instance, SolverState state,
                       const Vector& dual_price, bool converged,
                       std::vector<Vector> history) {
  Solution sol;
  sol.states.reserve(state.controls.size());
  for (int i = 0; i < instance.n_agents(); ++i) {
    sol.states.push_back(
        lift_dynamics(instance.agents[i], instance.grid).apply(state.controls[i]));
  }
  sol.controls = std::move(state.controls);
  sol.aggregate_z = std::move(state.aggregate_z);
  sol.dual_price = dual_price;
  sol.iterations = state.iter;
  sol.converged = converged;
  sol.residual_trace = std::move(state.residual_trace);
  sol.aggregate_history = std::move(history);
  sol.diagnostics.welfare = social_welfare(instance, sol.controls);
  return sol;
}

std::vector<Vector> best_responses(const ProblemInstance& instance, const Vector& price,
                                   const QpSettings& settings, Execution exec) {
  std::vector<Vector> out(instance.agents.size());
  for_each_index(instance.agents.size(), exec, [&](std::size_t i) {
    BestResponseQuery q{&instance.agents[i], price, instance.coupling.mode};
    out[i] = best_response(q, instance.grid, settings);
  });
  return out;
}

bool strictly_convex_agents(const ProblemInstance& instance) {
  return std::all_of(instance.agents.begin(), instance.agents.end(),
                     [](const AgentSpec& a) { return a.cost_quad_u > 0.0; });
}

double min_potential_curvature(const CouplingSpec& coupling) {
  if (coupling.affine) {
    const Matrix sym = 0.5 * (coupling.affine->slope + coupling.affine->slope.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    return eig.eigenvalues().minCoeff();
  }
  if (coupling.potential_hessian_diag) {
    return coupling.potential_hessian_diag(Vector::Zero(coupling.dimension)).minCoeff();
  }
  return 0.0;
}

void advance_primal_dual(SolverState& state, const ProblemInstance& instance,
                         double beta, const CoordinationOptions& options) {
  if (!(beta > 0.0)) throw std::invalid_argument("primal_dual_step: beta must be > 0");
  if (static_cast<int>(state.controls.size()) != instance.n_agents()) {
    throw std::invalid_argument("primal_dual_step: state does not match instance");
  }
  require_size(state.dual_price, instance.coupling.dimension, "dual price");

  std::vector<Vector> controls =
      best_responses(instance, state.dual_price, options.qp, options.exec);
  const Vector mean = aggregate(instance, controls);
  const Vector z = coordinator_update(instance.coupling, state.dual_price, 0.0, &mean);
  const double n = static_cast<double>(instance.n_agents());
  state.residual_trace.push_back(make_row(instance, state.iter + 1, controls,
                                          state.controls, mean, z, state.aggregate_z));
  state.iter += 1;
  state.controls = std::move(controls);
  state.aggregate_z = z;
  state.dual_price += beta * n * (mean - z);
}

}  // namespace

SolverState primal_dual_step(const SolverState& state, const ProblemInstance& instance,
                             double beta, const CoordinationOptions& options) {
  SolverState next = state;
  advance_primal_dual(next, instance, beta, options);
  return next;
}

double default_primal_dual_step(const ProblemInstance& instance) {
  double lipschitz = 0.0;
  for (const AgentSpec& a : instance.agents) {
    double gain = 1.0;
    if (instance.coupling.mode == CouplingMode::state_average) {
      const Matrix c = lift_dynamics(a, instance.grid).matrix_c;
      gain = Eigen::JacobiSVD<Matrix>(c).singularValues()(0);
    }
    lipschitz += gain * gain / std::max(2.0 * a.cost_quad_u, 1e-6);
  }
  const double curvature = min_potential_curvature(instance.coupling);
  if (curvature > 0.0) lipschitz += instance.n_agents() / curvature;
  return lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;
}

StepSchedule default_mann_schedule(const ProblemInstance& instance) {
  StepSchedule s;
  s.kind = StepKind::mann;
  const double lf = instance.coupling.lipschitz;
  s.beta0 = (lf > 0.0 ? lf : 1.0) / instance.n_agents();
  s.exponent = 1.0;
  return s;
}

double default_admm_penalty(const ProblemInstance& instance) {
  double mean_curv = 0.0;
  for (const AgentSpec& a : instance.agents) mean_curv += 2.0 * a.cost_quad_u;
  mean_curv /= std::max(1, instance.n_agents());
  const double potential_curv = min_potential_curvature(instance.coupling);
  if (mean_curv > 0.0 && potential_curv > 0.0) return std::sqrt(mean_curv * potential_curv);
  if (mean_curv > 0.0) return mean_curv;
  const double lf = instance.coupling.lipschitz;
  return lf > 0.0 ? 0.5 * lf : 1.0;
}

namespace {

Solution run_primal_dual(const ProblemInstance& instance, const StepSchedule& schedule,
                         const CoordinationOptions& options) {
  schedule.validate();
  SolverState state = initial_state(instance);
  std::vector<Vector> history;
  Vector responded_price = state.dual_price;
  bool converged = false;
  for (int k = 1; k <= options.max_iter; ++k) {
    responded_price = state.dual_price;
    advance_primal_dual(state, instance, schedule.step(k), options);
    history.push_back(state.aggregate_z);
    const TraceRow& row = state.residual_trace.back();
    if (row.primal_res <= options.tol && row.dual_res <= options.tol) {
      converged = true;
      break;
    }
  }
  // The controls and z of the last step respond to responded_price.
  return make_solution(instance, std::move(state), responded_price, converged,
                       std::move(history));
}

}  // namespace

Solution primal_dual_solve(const ProblemInstance& instance, double beta,
                           const CoordinationOptions& options) {
  return run_primal_dual(instance, StepSchedule{StepKind::constant, beta, 0.0}, options);
}

Solution mann_solve(const ProblemInstance& instance, const StepSchedule& schedule,
                    const CoordinationOptions& options) {
  if (schedule.kind != StepKind::mann) {
    throw std::invalid_argument("mann_solve: schedule kind must be mann");
  }
  return run_primal_dual(instance, schedule, options);
}

Solution admm_solve(const ProblemInstance& instance, double rho_admm,
                    const CoordinationOptions& options) {
  if (!(rho_admm > 0.0)) throw std::invalid_argument("admm_solve: rho must be > 0");
  double scale = 0.0;
  for (const AgentSpec& a : instance.agents) {
    for (int t = 0; t < a.u_max.size(); ++t) {
      if (std::isfinite(a.u_max(t))) scale = std::max(scale, std::abs(a.u_max(t)));
    }
  }
  const PotentialCheck check = potential_condition_check(
      instance.coupling, instance.n_agents(), 50, 1e-5, 0x5eed, scale > 0 ? scale : 1.0);
  if (!check.pass) {
    throw std::invalid_argument("admm_solve: coupling fails the potential condition");
  }

  const int n = instance.n_agents();
  const CouplingMode mode = instance.coupling.mode;
  SolverState state = initial_state(instance);
  std::vector<Vector> coupled(n);
  for (int i = 0; i < n; ++i) {
    coupled[i] = coupled_variable(instance.agents[i], instance.grid, mode, state.controls[i]);
  }
  Vector mean = state.aggregate_z;
  Vector z = state.aggregate_z;
  Vector w = state.dual_price / rho_admm;
  const bool certify_fixed_point = strictly_convex_agents(instance);

  std::vector<Vector> history;
  bool converged = false;
  for (int k = 1; k <= options.max_iter; ++k) {
    std::vector<Vector> next(n);
    for_each_index(static_cast<std::size_t>(n), options.exec, [&](std::size_t i) {
      const AgentSpec& agent = instance.agents[i];
      const Vector center = coupled[i] - mean + z - w;
      const AgentObjective obj = priced_objective(
          agent, instance.grid, mode, Vector::Zero(instance.horizon()), rho_admm, &center);
      next[i] = minimize_agent_objective(agent, instance.grid, obj, options.qp,
                                         &state.controls[i]);
    });
    for (int i = 0; i < n; ++i) {
      coupled[i] = coupled_variable(instance.agents[i], instance.grid, mode, next[i]);
    }
    Vector next_mean = Vector::Zero(instance.coupling.dimension);
    for (int i = 0; i < n; ++i) next_mean += coupled[i];
    next_mean /= static_cast<double>(n);

    const Vector prox_center = w + next_mean;
    const Vector next_z = coordinator_update(instance.coupling,
                                             Vector::Zero(instance.coupling.dimension),
                                             rho_admm, &prox_center);
    w += next_mean - next_z;

    TraceRow row = make_row(instance, k, next, state.controls, next_mean, next_z, z);
    state.controls = std::move(next);
    state.aggregate_z = next_z;
    state.dual_price = rho_admm * w;
    state.iter = k;
    state.residual_trace.push_back(std::move(row));
    history.push_back(next_z);
    mean = next_mean;
    z = next_z;

    const TraceRow& last = state.residual_trace.back();
    if (last.primal_res <= options.tol && last.dual_res <= options.tol) {
      if (!certify_fixed_point ||
          fixed_point_residual(instance, state.dual_price, options.qp, options.exec) <=
              options.tol) {
        converged = true;
        break;
      }
    }
  }
  const Vector price = state.dual_price;
  return make_solution(instance, std::move(state), price, converged, std::move(history));
}

double fixed_point_residual(const ProblemInstance& instance, const Vector& y,
                            const QpSettings& settings, Execution exec) {
  require_size(y, instance.coupling.dimension, "price vector");
  if (!y.allFinite()) throw std::invalid_argument("fixed_point_residual: y must be finite");
  const std::vector<Vector> responses = best_responses(instance, y, settings, exec);
  return (y - instance.coupling.price(aggregate(instance, responses))).norm();
}

int iterations_to_relative_tolerance(const std::vector<Vector>& z_history,
                                     double rel_tol) {
  if (z_history.empty()) return -1;
  const Vector& final_z = z_history.back();
  const double denom = final_z.norm() > 0.0 ? final_z.norm() : 1.0;
  int last_bad = -1;
  for (int j = 0; j < static_cast<int>(z_history.size()); ++j) {
    if ((z_history[j] - final_z).norm() / denom > rel_tol) last_bad = j;
  }
  return last_bad + 2;
}

}  // namespace mfg
