#include "mfg/agent_solver.hpp"

#include <cmath>

namespace mfg {

QpProblem agent_qp(const AgentSpec& agent, const TimeGrid& grid,
                   const AgentObjective& objective) {
  const int k = grid.horizon_k;
  QpProblem qp;
  qp.quad_matrix = objective.quad;
  qp.quad_matrix.diagonal().array() += kAgentJitter;
  qp.lin_vector = objective.lin;
  qp.eq_matrix = Matrix::Ones(1, k);
  qp.eq_rhs = Vector::Constant(1, agent.budget);
  qp.lo = agent.u_min;
  qp.hi = agent.u_max;
  state_constraints(agent, grid, qp.ineq_matrix, qp.ineq_rhs);
  return qp;
}

namespace {

// Returns p when quad == p I (up to roundoff), otherwise a negative value.
double isotropic_weight(const Matrix& quad) {
  const double p = quad(0, 0);
  const double scale = std::max(1.0, quad.cwiseAbs().maxCoeff());
  Matrix diff = quad;
  diff.diagonal().array() -= p;
  if (diff.cwiseAbs().maxCoeff() > 1e-13 * scale) return -1.0;
  return p;
}

}  // namespace

Vector minimize_agent_objective(const AgentSpec& agent, const TimeGrid& grid,
                                const AgentObjective& objective,
                                const QpSettings& settings, const Vector* initial) {
  const int k = grid.horizon_k;
  require_size(objective.lin, k, "agent objective");
  const QpProblem qp = agent_qp(agent, grid, objective);

  Vector warm;
  const double p = isotropic_weight(qp.quad_matrix);
  if (p > 0.0) {
    try {
      warm = project_box_budget(-qp.lin_vector / p, agent.u_min, agent.u_max, agent.budget);
    } catch (const InfeasibleError& e) {
      throw AgentSolveError(agent.id, e.what());
    }
    // Optimal for the relaxation without state bounds; optimal outright if it
    // already satisfies them.
    if (qp.ineq_matrix.rows() == 0 ||
        (qp.ineq_matrix * warm - qp.ineq_rhs).maxCoeff() <= 1e-12) {
      return warm;
    }
  }
  const Vector* start = warm.size() == k ? &warm : initial;
  const QpResult r = solve_qp(qp, settings, start);
  if (r.status != QpStatus::converged) {
    throw AgentSolveError(agent.id, "QP " + to_string(r.status) + " after " +
                                        std::to_string(r.iterations) + " iterations");
  }
  return r.u;
}

AgentObjective priced_objective(const AgentSpec& agent, const TimeGrid& grid,
                                CouplingMode mode, const Vector& price,
                                double prox_weight, const Vector* prox_center) {
  const int k = grid.horizon_k;
  require_size(price, k, "price signal");
  AgentObjective obj;
  obj.quad = 2.0 * agent.cost_quad_u * Matrix::Identity(k, k);
  obj.lin = agent.linear_cost(k);
  if (mode == CouplingMode::control_average) {
    obj.lin += price;
    if (prox_weight > 0.0 && prox_center) {
      obj.quad.diagonal().array() += prox_weight;
      obj.lin -= prox_weight * *prox_center;
      obj.constant += 0.5 * prox_weight * prox_center->squaredNorm();
    }
    return obj;
  }
  const AffineMap map = lift_dynamics(agent, grid);
  obj.lin += map.matrix_c.transpose() * price;
  obj.constant += price.dot(map.offset_d);
  if (prox_weight > 0.0 && prox_center) {
    const Vector shift = map.offset_d - *prox_center;
    obj.quad += prox_weight * map.matrix_c.transpose() * map.matrix_c;
    obj.lin += prox_weight * map.matrix_c.transpose() * shift;
    obj.constant += 0.5 * prox_weight * shift.squaredNorm();
  }
  return obj;
}

Vector best_response(const BestResponseQuery& query, const TimeGrid& grid,
                     const QpSettings& settings) {
  if (!query.price_signal.allFinite()) {
    throw std::invalid_argument("best_response: price signal must be finite");
  }
  const AgentObjective obj =
      priced_objective(*query.agent, grid, query.mode, query.price_signal);
  return minimize_agent_objective(*query.agent, grid, obj, settings);
}

double best_response_value(const BestResponseQuery& query, const TimeGrid& grid,
                           const QpSettings& settings) {
  const AgentObjective obj =
      priced_objective(*query.agent, grid, query.mode, query.price_signal);
  return obj.value(minimize_agent_objective(*query.agent, grid, obj, settings));
}

Vector priced_gradient(const AgentSpec& agent, const TimeGrid& grid,
                       CouplingMode mode, const Vector& price, const Vector& u) {
  const int k = grid.horizon_k;
  Vector g = 2.0 * agent.cost_quad_u * u + agent.linear_cost(k);
  if (mode == CouplingMode::control_average) return g + price;
  return g + lift_dynamics(agent, grid).matrix_c.transpose() * price;
}

}  // namespace mfg
