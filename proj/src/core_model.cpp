#include "mfg/core_model.hpp"

#include "mfg/qp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mfg {

TimeGrid::TimeGrid(int horizon, double minutes)
    : horizon_k(horizon), period_minutes(minutes) {
  if (horizon_k < 1) throw std::invalid_argument("horizon_k must be >= 1");
  if (!(period_minutes > 0.0)) throw std::invalid_argument("period_minutes must be > 0");
}

std::string to_string(CouplingMode mode) {
  return mode == CouplingMode::state_average ? "state-average" : "control-average";
}

CouplingMode coupling_mode_from_string(const std::string& text) {
  if (text == "state-average") return CouplingMode::state_average;
  if (text == "control-average") return CouplingMode::control_average;
  throw std::invalid_argument("unknown coupling mode '" + text + "'");
}

void require_size(const Vector& v, int size, const char* what) {
  if (v.size() != size) {
    throw std::invalid_argument(std::string(what) + ": expected size " +
                                std::to_string(size) + ", got " +
                                std::to_string(v.size()));
  }
}

AgentSpec AgentSpec::uniform(int id, int horizon, double u_max, double budget,
                             double x_max) {
  AgentSpec a;
  a.id = id;
  a.x_min = Vector::Constant(horizon, -kInf);
  a.x_max = Vector::Constant(horizon, x_max);
  a.u_min = Vector::Zero(horizon);
  a.u_max = Vector::Constant(horizon, u_max);
  a.budget = budget;
  return a;
}

Vector AgentSpec::linear_cost(int horizon) const {
  if (price_offset.size() == 0) return Vector::Zero(horizon);
  require_size(price_offset, horizon, "price_offset");
  return 2.0 * price_slope * price_offset;
}

// ---------------------------------------------------------------------------
// Couplings

CouplingSpec CouplingSpec::affine_map(const Matrix& slope, const Vector& offset,
                                      double aggregate_weight, CouplingMode mode) {
  const int k = static_cast<int>(offset.size());
  if (slope.rows() != k || slope.cols() != k) {
    throw std::invalid_argument("affine coupling: slope must be K x K");
  }
  CouplingSpec c;
  c.mode = mode;
  c.dimension = k;
  const Matrix sym = 0.5 * (slope + slope.transpose());
  c.price = [slope, offset](const Vector& z) -> Vector { return slope * z + offset; };
  c.aggregate_cost = [aggregate_weight](const Vector& z) {
    return aggregate_weight * z.squaredNorm();
  };
  c.potential = [sym, offset](const Vector& z) {
    return 0.5 * z.dot(sym * z) + offset.dot(z);
  };
  c.potential_gradient = [sym, offset](const Vector& z) -> Vector {
    return sym * z + offset;
  };
  const Vector diag = sym.diagonal();
  c.potential_hessian_diag = [diag](const Vector&) -> Vector { return diag; };
  c.lipschitz = k > 0 ? Eigen::JacobiSVD<Matrix>(slope).singularValues()(0) : 0.0;
  c.affine = AffineCouplingData{slope, offset, aggregate_weight};
  return c;
}

CouplingSpec CouplingSpec::ev_charging(int horizon, double eta, double gamma) {
  const Matrix slope = 2.0 * (gamma - eta) * Matrix::Identity(horizon, horizon);
  return affine_map(slope, Vector::Zero(horizon), eta, CouplingMode::control_average);
}

CouplingSpec CouplingSpec::decoupled(int horizon, CouplingMode mode) {
  return affine_map(Matrix::Zero(horizon, horizon), Vector::Zero(horizon), 0.0, mode);
}

// ---------------------------------------------------------------------------
// Dynamics

AffineMap lift_dynamics(const AgentSpec& agent, const TimeGrid& grid) {
  const int k = grid.horizon_k;
  for (const Vector* v : {&agent.u_min, &agent.u_max, &agent.x_min, &agent.x_max}) {
    require_size(*v, k, "agent bounds");
  }
  AffineMap map;
  map.matrix_c = Matrix::Zero(k, k);
  map.offset_d = Vector::Zero(k);
  double seed = agent.x0;
  for (int t = 0; t < k; ++t) {
    seed *= agent.alpha;
    map.offset_d(t) = seed;
    double gain = agent.beta;
    for (int s = t; s >= 0; --s) {
      map.matrix_c(t, s) = gain;
      gain *= agent.alpha;
    }
  }
  return map;
}

void state_constraints(const AgentSpec& agent, const TimeGrid& grid,
                       Matrix& ineq_matrix, Vector& ineq_rhs) {
  const int k = grid.horizon_k;
  const AffineMap map = lift_dynamics(agent, grid);
  // Period t+1 starts in state x(t), t = 0..K-2 (row t of the lifting).
  std::vector<std::pair<Vector, double>> rows;
  for (int t = 0; t + 1 < k; ++t) {
    const Vector c_row = map.matrix_c.row(t).transpose();
    if (std::isfinite(agent.x_max(t + 1))) {
      rows.emplace_back(c_row, agent.x_max(t + 1) - map.offset_d(t));
    }
    if (std::isfinite(agent.x_min(t + 1))) {
      rows.emplace_back(-c_row, map.offset_d(t) - agent.x_min(t + 1));
    }
  }
  ineq_matrix.resize(static_cast<Eigen::Index>(rows.size()), k);
  ineq_rhs.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    ineq_matrix.row(static_cast<Eigen::Index>(r)) = rows[r].first.transpose();
    ineq_rhs(static_cast<Eigen::Index>(r)) = rows[r].second;
  }
}

Vector coupled_variable(const AgentSpec& agent, const TimeGrid& grid,
                        CouplingMode mode, const Vector& u) {
  require_size(u, grid.horizon_k, "control trajectory");
  if (mode == CouplingMode::control_average) return u;
  return lift_dynamics(agent, grid).apply(u);
}

// ---------------------------------------------------------------------------
// Feasibility

namespace {

// Exact feasibility for alpha = 1: x(t) = x0 + beta S_t with S_t the partial
// sums, so each S_t lives in an interval and the reachable set of S_t given
// the boxes is an interval as well.
std::optional<Vector> integrator_fill(const AgentSpec& a, int k) {
  if (a.beta == 0.0) return std::nullopt;
  std::vector<double> reach_lo(k + 1), reach_hi(k + 1);
  reach_lo[0] = reach_hi[0] = 0.0;
  for (int t = 1; t <= k; ++t) {
    double lo = reach_lo[t - 1] + a.u_min(t - 1);
    double hi = reach_hi[t - 1] + a.u_max(t - 1);
    if (t < k) {
      // State at the start of period t+1 is x0 + beta S_t.
      double s_lo = (a.x_min(t) - a.x0) / a.beta;
      double s_hi = (a.x_max(t) - a.x0) / a.beta;
      if (a.beta < 0.0) std::swap(s_lo, s_hi);
      lo = std::max(lo, s_lo);
      hi = std::min(hi, s_hi);
    }
    if (lo > hi + 1e-12) return std::nullopt;
    reach_lo[t] = lo;
    reach_hi[t] = std::max(lo, hi);
  }
  const double tol = 1e-9 * std::max(1.0, std::abs(a.budget));
  if (a.budget < reach_lo[k] - tol || a.budget > reach_hi[k] + tol) return std::nullopt;
  // Backward pass: keep each partial sum as large as allowed (earliest fill).
  Vector u(k);
  double s_next = std::clamp(a.budget, reach_lo[k], reach_hi[k]);
  for (int t = k; t >= 1; --t) {
    const double lo = std::max(reach_lo[t - 1], s_next - a.u_max(t - 1));
    const double hi = std::min(reach_hi[t - 1], s_next - a.u_min(t - 1));
    const double s_prev = std::max(lo, std::min(hi, reach_hi[t - 1]));
    u(t - 1) = s_next - s_prev;
    s_next = s_prev;
  }
  return u;
}

}  // namespace

std::optional<Vector> feasible_fill(const AgentSpec& agent, const TimeGrid& grid) {
  const int k = grid.horizon_k;
  if ((agent.u_min.array() > agent.u_max.array()).any()) return std::nullopt;
  if ((agent.x_min.array() > agent.x_max.array()).any()) return std::nullopt;
  if (agent.x0 < agent.x_min(0) || agent.x0 > agent.x_max(0)) return std::nullopt;
  if (agent.budget < agent.u_min.sum() || agent.budget > agent.u_max.sum()) {
    return std::nullopt;
  }
  if (agent.alpha == 1.0) return integrator_fill(agent, k);

  QpProblem qp;
  qp.quad_matrix = Matrix::Identity(k, k);
  qp.lin_vector = Vector::Zero(k);
  qp.eq_matrix = Matrix::Ones(1, k);
  qp.eq_rhs = Vector::Constant(1, agent.budget);
  qp.lo = agent.u_min;
  qp.hi = agent.u_max;
  state_constraints(agent, grid, qp.ineq_matrix, qp.ineq_rhs);
  const QpResult r = solve_qp(qp, QpSettings{});
  if (r.status != QpStatus::converged || qp.max_violation(r.u) > 1e-6) return std::nullopt;
  return r.u;
}

ValidationReport validate_instance(const ProblemInstance& instance) {
  ValidationReport report;
  const int k = instance.grid.horizon_k;
  auto add = [&](int id, std::string msg) {
    report.violations.push_back({id, std::move(msg)});
  };
  if (instance.agents.empty()) add(-1, "instance has no agents");
  if (instance.coupling.dimension != k) add(-1, "coupling dimension differs from horizon");
  for (const AgentSpec& a : instance.agents) {
    bool dims_ok = true;
    for (const Vector* v : {&a.u_min, &a.u_max, &a.x_min, &a.x_max}) {
      if (v->size() != k) dims_ok = false;
    }
    if (a.price_offset.size() != 0 && a.price_offset.size() != k) dims_ok = false;
    if (!dims_ok) {
      add(a.id, "dimension mismatch with horizon");
      continue;
    }
    if (a.cost_quad_u < 0.0) add(a.id, "negative control weight");
    if ((a.u_min.array() > a.u_max.array()).any()) add(a.id, "u_min exceeds u_max");
    if ((a.x_min.array() > a.x_max.array()).any()) add(a.id, "x_min exceeds x_max");
    if (a.budget > a.u_max.sum()) {
      add(a.id, "budget exceeds capacity");
      continue;
    }
    if (a.budget < a.u_min.sum()) {
      add(a.id, "budget below minimum total control");
      continue;
    }
    if (a.x0 < a.x_min(0) || a.x0 > a.x_max(0)) add(a.id, "initial state outside bounds");
    else if (!feasible_fill(a, instance.grid)) add(a.id, "state bounds unreachable");
  }
  return report;
}

// ---------------------------------------------------------------------------
// Costs

double private_cost(const AgentSpec& agent, const Vector& u) {
  const int k = static_cast<int>(u.size());
  return agent.cost_quad_u * u.squaredNorm() + agent.linear_cost(k).dot(u);
}

double agent_cost(const AgentSpec& agent, const CouplingSpec& coupling,
                  const TimeGrid& grid, const Vector& u, const Vector& z) {
  require_size(u, grid.horizon_k, "control trajectory");
  require_size(z, coupling.dimension, "aggregate");
  const Vector c = coupled_variable(agent, grid, coupling.mode, u);
  return private_cost(agent, u) + coupling.price(z).dot(c) + coupling.aggregate_cost(z);
}

double ev_agent_cost(double eta, double gamma, const Vector& price_offset,
                     const Vector& u, const Vector& z) {
  if (u.size() != z.size() || u.size() != price_offset.size()) {
    throw std::invalid_argument("ev_agent_cost: dimension mismatch");
  }
  return eta * (u - z).squaredNorm() + 2.0 * gamma * (z + price_offset).dot(u);
}

Vector aggregate(const ProblemInstance& instance, const std::vector<Vector>& controls) {
  if (static_cast<int>(controls.size()) != instance.n_agents()) {
    throw std::invalid_argument("aggregate: one control trajectory per agent expected");
  }
  Vector z = Vector::Zero(instance.coupling.dimension);
  for (int i = 0; i < instance.n_agents(); ++i) {
    z += coupled_variable(instance.agents[i], instance.grid, instance.coupling.mode,
                          controls[i]);
  }
  return z / static_cast<double>(instance.n_agents());
}

double social_welfare(const ProblemInstance& instance,
                      const std::vector<Vector>& controls) {
  const Vector z = aggregate(instance, controls);
  double total = 0.0;
  for (int i = 0; i < instance.n_agents(); ++i) {
    total += private_cost(instance.agents[i], controls[i]);
  }
  return total + instance.coupling.welfare_potential(z, instance.n_agents());
}

}  // namespace mfg
