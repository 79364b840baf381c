#pragma once

// Domain model for finite-population aggregative games with scalar agent
// state: agents, the mean-field coupling, and problem instances together
// with the cost and welfare functionals evaluated on them.

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mfg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Discrete horizon of `horizon_k` control periods.
struct TimeGrid {
  int horizon_k = 1;
  double period_minutes = 1.0;

  TimeGrid() = default;
  /// Throws std::invalid_argument unless horizon_k >= 1 and period_minutes > 0.
  TimeGrid(int horizon, double minutes);
};

/// Which population average enters the price: states (x_i) or controls (u_i).
enum class CouplingMode { state_average, control_average };

std::string to_string(CouplingMode mode);
CouplingMode coupling_mode_from_string(const std::string& text);

/// One agent: scalar dynamics x(t) = alpha x(t-1) + beta u(t) seeded by x0,
/// per-period boxes, a total-control budget, and the private cost
///   V_i(u) = cost_quad_u ||u||^2 + 2 price_slope * price_offset^T u.
///
/// State bounds apply to the state at the start of every period, i.e. to
/// x0, x(1), ..., x(K-1). The terminal state x(K) is pinned by the budget.
struct AgentSpec {
  int id = 0;
  double alpha = 1.0;
  double beta = 1.0;
  double x0 = 0.0;
  Vector x_min;
  Vector x_max;
  Vector u_min;
  Vector u_max;
  double budget = 0.0;
  double cost_quad_u = 0.0;
  double price_slope = 0.0;
  Vector price_offset;

  /// Convenience constructor with constant per-period bounds.
  static AgentSpec uniform(int id, int horizon, double u_max, double budget,
                           double x_max = kInf);

  /// Linear coefficient of the private cost, 2 * price_slope * price_offset
  /// (zero vector when price_offset is empty).
  Vector linear_cost(int horizon) const;
};

/// Affine lifting x = C u + D of the stacked state trajectory.
struct AffineMap {
  Matrix matrix_c;
  Vector offset_d;

  Vector apply(const Vector& u) const { return matrix_c * u + offset_d; }
};

/// Closed-form data when the price map is affine: F(z) = slope z + offset and
/// G(z) = aggregate_weight ||z||^2.
struct AffineCouplingData {
  Matrix slope;
  Vector offset;
  double aggregate_weight = 0.0;
};

/// Mean-field coupling: price map F, aggregate cost G and the welfare
/// potential. The potential is stored per agent, psi = phi / N, so that the
/// linkage F = phi' / N reads F = grad psi and the coupling stays
/// independent of the population size.
struct CouplingSpec {
  using VectorFn = std::function<Vector(const Vector&)>;
  using ScalarFn = std::function<double(const Vector&)>;

  CouplingMode mode = CouplingMode::control_average;
  int dimension = 1;
  VectorFn price;
  ScalarFn aggregate_cost;
  ScalarFn potential;
  VectorFn potential_gradient;
  // Diagonal of the potential Hessian; the coordinator Newton solve treats
  // the potential as separable across components.
  VectorFn potential_hessian_diag;
  double lipschitz = 0.0;
  std::optional<AffineCouplingData> affine;

  /// EV charging game: F(z) = 2(gamma - eta) z, G(z) = eta ||z||^2,
  /// phi(z) = N (gamma - eta) z^T z.
  static CouplingSpec ev_charging(int horizon, double eta, double gamma);
  /// General affine map; the potential uses the symmetric part of `slope`.
  static CouplingSpec affine_map(const Matrix& slope, const Vector& offset,
                                 double aggregate_weight, CouplingMode mode);
  static CouplingSpec decoupled(int horizon, CouplingMode mode);

  Vector price_at(const Vector& z) const { return price(z); }
  double welfare_potential(const Vector& z, int n_agents) const {
    return static_cast<double>(n_agents) * potential(z);
  }
};

struct ProblemInstance {
  std::vector<AgentSpec> agents;
  CouplingSpec coupling;
  TimeGrid grid;

  int n_agents() const { return static_cast<int>(agents.size()); }
  int horizon() const { return grid.horizon_k; }
};

struct TraceRow {
  int iter = 0;
  double primal_res = 0.0;
  double dual_res = 0.0;
  double welfare = 0.0;
  double z_norm = 0.0;
  std::vector<double> control_norms;
};

struct Diagnostics {
  double nash_gap = 0.0;
  double duality_gap = 0.0;
  double welfare = 0.0;
};

struct Solution {
  std::vector<Vector> controls;
  std::vector<Vector> states;
  Vector aggregate_z;
  Vector dual_price;
  int iterations = 0;
  bool converged = false;
  std::vector<TraceRow> residual_trace;
  // Coordinator aggregate after every iteration, aligned with residual_trace.
  std::vector<Vector> aggregate_history;
  Diagnostics diagnostics;
};

struct Violation {
  int agent_id = -1;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks dimensions and that every agent's feasible set is nonempty.
ValidationReport validate_instance(const ProblemInstance& instance);

/// A feasible control trajectory for one agent, or nullopt when none exists.
/// Integrator dynamics (alpha = 1) use exact interval propagation of the
/// cumulative control and return the earliest-filling path; other dynamics
/// fall back to a feasibility QP.
std::optional<Vector> feasible_fill(const AgentSpec& agent, const TimeGrid& grid);

/// Throws std::invalid_argument on dimension mismatch.
AffineMap lift_dynamics(const AgentSpec& agent, const TimeGrid& grid);

/// State constraints as H u <= h (rows only for finite bounds).
void state_constraints(const AgentSpec& agent, const TimeGrid& grid,
                       Matrix& ineq_matrix, Vector& ineq_rhs);

/// The variable the price multiplies: u itself or the lifted states.
Vector coupled_variable(const AgentSpec& agent, const TimeGrid& grid,
                        CouplingMode mode, const Vector& u);

/// V_i(u).
double private_cost(const AgentSpec& agent, const Vector& u);

/// J_i = V_i(u) + F(z) . coupled(u) + G(z).
double agent_cost(const AgentSpec& agent, const CouplingSpec& coupling,
                  const TimeGrid& grid, const Vector& u, const Vector& z);

/// The EV game cost written directly: eta ||u - z||^2 + 2 gamma (z + c)^T u.
double ev_agent_cost(double eta, double gamma, const Vector& price_offset,
                     const Vector& u, const Vector& z);

/// (1/N) sum of coupled variables.
Vector aggregate(const ProblemInstance& instance, const std::vector<Vector>& controls);

/// sum_i V_i(u_i) + phi(z(controls)).
double social_welfare(const ProblemInstance& instance,
                      const std::vector<Vector>& controls);

/// Throws std::invalid_argument unless the vector has `size` entries.
void require_size(const Vector& v, int size, const char* what);

}  // namespace mfg
