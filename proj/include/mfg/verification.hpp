#pragma once

// Certificates for a computed solution: finite-N Nash gaps, the potential
// linkage F = grad(phi) / N, the Lagrangian duality gap, and a Monte Carlo
// harness for the covariance term of the mean-field approximation.

#include "mfg/coordination.hpp"
#include "mfg/core_model.hpp"
#include "mfg/parallel.hpp"
#include "mfg/qp.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace mfg {

inline constexpr double kDefaultOptTol = 1e-7;

struct NashGapReport {
  std::vector<std::pair<int, double>> per_agent_gap;
  double max_gap = 0.0;
  int n_agents = 0;
};

/// gap_i = J_i(u_i*, u_-i*) - min_u J_i(u, u_-i*) with the true coupling
/// m = (c_i(u) + sum_{j != i} c_j*) / N, agent i's own contribution included.
/// Requires an affine price map (the inner problem is then a QP); throws
/// std::invalid_argument otherwise.
NashGapReport epsilon_nash_gap(const ProblemInstance& instance,
                               const Solution& solution,
                               const QpSettings& settings,
                               Execution exec = Execution::parallel);

/// J_i(., u_-i) as a quadratic in agent i's control (affine couplings only).
AgentObjective true_cost_objective(const ProblemInstance& instance, int agent,
                                   const Vector& others_sum);

struct PotentialCheck {
  bool pass = false;
  double max_deviation = 0.0;   // max |F - grad(phi/N)| over probes, relative
  double max_asymmetry = 0.0;   // max |J_F - J_F^T| over probes
};

/// Probes z uniformly in [-10 scale, 10 scale]^K and compares F against
/// central differences of phi / N, plus Jacobian symmetry of F. Pass iff
/// both maxima are <= tol. Deterministic in `seed`.
PotentialCheck potential_condition_check(const CouplingSpec& coupling,
                                         int n_agents, int probes = 50,
                                         double tol = 1e-5,
                                         std::uint64_t seed = 0x5eed,
                                         double scale = 1.0);

/// Value of the Lagrangian dual at lambda:
/// sum_i min_u [V_i + lambda . c_i(u)] + min_z [phi(z) - N lambda . z].
double dual_value(const ProblemInstance& instance, const Vector& lambda,
                  const QpSettings& settings, Execution exec = Execution::parallel);

/// social_welfare(controls) - dual_value(dual_price); nonnegative by weak
/// duality.
double duality_gap(const ProblemInstance& instance, const Solution& solution,
                   const QpSettings& settings, Execution exec = Execution::parallel);

enum class Lemma1Sampler { uniform_ball, constant };

struct Lemma1Options {
  int dimension = 3;
  Lemma1Sampler sampler = Lemma1Sampler::uniform_ball;
  Execution exec = Execution::parallel;
};

struct Lemma1Stats {
  int n_population = 0;
  int trials = 0;
  double mean_lhs = 0.0;
  double standard_error = 0.0;
  double bound_2lc_over_n = 0.0;
  double lipschitz_l = 0.0;
  double second_moment_c = 0.0;

  bool within_bound() const {
    return mean_lhs <= bound_2lc_over_n + 3.0 * standard_error;
  }
};

/// Monte Carlo estimate of |E(F(m) . x_i) - F(E m) . E x_i| for F(m) = L m
/// and x_1..x_N i.i.d. uniform on the ball of radius sqrt(C) (or the
/// constant vector of norm sqrt(C)). Trial t draws from its own substream
/// derived from (seed, t). Throws std::invalid_argument if trials < 100.
Lemma1Stats lemma1_bound_estimate(double lipschitz_l, double second_moment_c,
                                  int n_population, int trials,
                                  std::uint64_t seed,
                                  const Lemma1Options& options = {});

/// Least-squares slope of log(y) against log(x).
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace mfg
