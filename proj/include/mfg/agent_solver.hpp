#pragma once

#include "mfg/core_model.hpp"
#include "mfg/qp.hpp"

#include <stdexcept>

namespace mfg {

/// Thrown when an agent's subproblem cannot be solved to tolerance.
class AgentSolveError : public std::runtime_error {
 public:
  AgentSolveError(int agent_id, const std::string& what)
      : std::runtime_error("agent " + std::to_string(agent_id) + ": " + what),
        agent_id_(agent_id) {}
  int agent_id() const { return agent_id_; }

 private:
  int agent_id_;
};

/// Diagonal jitter added to every agent Hessian so that eta = 0 still has a
/// unique minimizer.
inline constexpr double kAgentJitter = 1e-10;

/// Best response of one agent to a frozen price y replacing F(m).
struct BestResponseQuery {
  const AgentSpec* agent = nullptr;
  Vector price_signal;
  CouplingMode mode = CouplingMode::control_average;
};

/// A quadratic objective in the agent's own control, minimized over the
/// agent's feasible set: 1/2 u^T P u + q^T u + constant.
struct AgentObjective {
  Matrix quad;
  Vector lin;
  double constant = 0.0;

  double value(const Vector& u) const {
    return 0.5 * u.dot(quad * u) + lin.dot(u) + constant;
  }
};

/// The agent's constraint set with an objective attached.
QpProblem agent_qp(const AgentSpec& agent, const TimeGrid& grid,
                   const AgentObjective& objective);

/// Minimizes `objective` over the agent's feasible set. Isotropic Hessians
/// whose box-budget projection already meets the state bounds are solved
/// exactly by projection; everything else goes through solve_qp.
/// Throws AgentSolveError when the QP does not converge.
Vector minimize_agent_objective(const AgentSpec& agent, const TimeGrid& grid,
                                const AgentObjective& objective,
                                const QpSettings& settings,
                                const Vector* initial = nullptr);

/// V_i(u) + y . coupled(u) + (prox_weight / 2) ||coupled(u) - prox_center||^2.
AgentObjective priced_objective(const AgentSpec& agent, const TimeGrid& grid,
                                CouplingMode mode, const Vector& price,
                                double prox_weight = 0.0,
                                const Vector* prox_center = nullptr);

Vector best_response(const BestResponseQuery& query, const TimeGrid& grid,
                     const QpSettings& settings);

/// min_u V_i(u) + y . coupled(u), i.e. the frozen-price cost at the best
/// response (G is constant under a frozen price and omitted).
double best_response_value(const BestResponseQuery& query, const TimeGrid& grid,
                           const QpSettings& settings);

/// Gradient of V_i(u) + y . coupled(u).
Vector priced_gradient(const AgentSpec& agent, const TimeGrid& grid,
                       CouplingMode mode, const Vector& price, const Vector& u);

}  // namespace mfg
