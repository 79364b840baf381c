#include "mfg/verification.hpp"

#include "mfg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mfg {

AgentObjective true_cost_objective(const ProblemInstance& instance, int agent,
                                   const Vector& others_sum) {
  const CouplingSpec& coupling = instance.coupling;
  if (!coupling.affine) {
    throw std::invalid_argument("true_cost_objective: price map must be affine");
  }
  const AgentSpec& a = instance.agents.at(static_cast<std::size_t>(agent));
  const int k = instance.horizon();
  const double n = static_cast<double>(instance.n_agents());
  const Matrix& slope = coupling.affine->slope;
  const Matrix sym = 0.5 * (slope + slope.transpose());
  const double g = coupling.affine->aggregate_weight;

  // In terms of the coupled variable c with m = (c + S) / N:
  //   F(m) . c + G(m) = 1/2 c^T Qc c + lc . c + kc.
  Matrix qc = 2.0 * sym / n;
  qc.diagonal().array() += 2.0 * g / (n * n);
  const Vector lc = slope * others_sum / n + coupling.affine->offset +
                    2.0 * g * others_sum / (n * n);
  const double kc = g * others_sum.squaredNorm() / (n * n);

  AgentObjective obj;
  obj.quad = 2.0 * a.cost_quad_u * Matrix::Identity(k, k);
  obj.lin = a.linear_cost(k);
  if (coupling.mode == CouplingMode::control_average) {
    obj.quad += qc;
    obj.lin += lc;
    obj.constant = kc;
    return obj;
  }
  const AffineMap map = lift_dynamics(a, instance.grid);
  const Matrix& c = map.matrix_c;
  const Vector& d = map.offset_d;
  obj.quad += c.transpose() * qc * c;
  obj.lin += c.transpose() * (qc * d + lc);
  obj.constant = 0.5 * d.dot(qc * d) + lc.dot(d) + kc;
  return obj;
}

NashGapReport epsilon_nash_gap(const ProblemInstance& instance, const Solution& solution,
                               const QpSettings& settings, Execution exec) {
  const int n = instance.n_agents();
  if (static_cast<int>(solution.controls.size()) != n) {
    throw std::invalid_argument("epsilon_nash_gap: solution does not match instance");
  }
  if (!instance.coupling.affine) {
    throw std::invalid_argument("epsilon_nash_gap: price map must be affine");
  }
  std::vector<Vector> coupled(static_cast<std::size_t>(n));
  Vector total = Vector::Zero(instance.coupling.dimension);
  for (int i = 0; i < n; ++i) {
    coupled[i] = coupled_variable(instance.agents[i], instance.grid,
                                  instance.coupling.mode, solution.controls[i]);
    total += coupled[i];
  }
  NashGapReport report;
  report.n_agents = n;
  report.per_agent_gap.resize(static_cast<std::size_t>(n));
  for_each_index(static_cast<std::size_t>(n), exec, [&](std::size_t i) {
    const AgentSpec& agent = instance.agents[i];
    const AgentObjective obj =
        true_cost_objective(instance, static_cast<int>(i), total - coupled[i]);
    const Vector deviation =
        minimize_agent_objective(agent, instance.grid, obj, settings, &solution.controls[i]);
    report.per_agent_gap[i] = {agent.id, obj.value(solution.controls[i]) - obj.value(deviation)};
  });
  report.max_gap = -kInf;
  for (const auto& [id, gap] : report.per_agent_gap) report.max_gap = std::max(report.max_gap, gap);
  return report;
}

// ---------------------------------------------------------------------------

PotentialCheck potential_condition_check(const CouplingSpec& coupling, int n_agents,
                                         int probes, double tol, std::uint64_t seed,
                                         double scale) {
  if (probes < 1) throw std::invalid_argument("potential_condition_check: probes >= 1");
  if (n_agents < 1) throw std::invalid_argument("potential_condition_check: N >= 1");
  const int k = coupling.dimension;
  SeededUniform rng(seed);
  PotentialCheck out;
  // phi(z) / N is the per-agent potential, so F is compared with its gradient.
  const double n = static_cast<double>(n_agents);
  auto phi_over_n = [&](const Vector& z) { return coupling.welfare_potential(z, n_agents) / n; };
  for (int p = 0; p < probes; ++p) {
    Vector z(k);
    for (int t = 0; t < k; ++t) z(t) = scale * rng.draw(-10.0, 10.0);
    const double h = 1e-6 * std::max(1.0, z.cwiseAbs().maxCoeff());
    const Vector f = coupling.price(z);
    Matrix jac(k, k);
    for (int t = 0; t < k; ++t) {
      Vector zp = z, zm = z;
      zp(t) += h;
      zm(t) -= h;
      const double grad = (phi_over_n(zp) - phi_over_n(zm)) / (2.0 * h);
      out.max_deviation =
          std::max(out.max_deviation, std::abs(f(t) - grad) / (1.0 + std::abs(f(t))));
      jac.col(t) = (coupling.price(zp) - coupling.price(zm)) / (2.0 * h);
    }
    const double jscale = 1.0 + jac.cwiseAbs().maxCoeff();
    out.max_asymmetry =
        std::max(out.max_asymmetry, (jac - jac.transpose()).cwiseAbs().maxCoeff() / jscale);
  }
  out.pass = out.max_deviation <= tol && out.max_asymmetry <= tol;
  return out;
}

// ---------------------------------------------------------------------------

double dual_value(const ProblemInstance& instance, const Vector& lambda,
                  const QpSettings& settings, Execution exec) {
  require_size(lambda, instance.coupling.dimension, "dual price");
  const int n = instance.n_agents();
  std::vector<double> agent_values(static_cast<std::size_t>(n));
  for_each_index(static_cast<std::size_t>(n), exec, [&](std::size_t i) {
    BestResponseQuery q{&instance.agents[i], lambda, instance.coupling.mode};
    agent_values[i] = best_response_value(q, instance.grid, settings);
  });
  double total = 0.0;
  for (double v : agent_values) total += v;
  const Vector z = coordinator_update(instance.coupling, lambda);
  return total + instance.coupling.welfare_potential(z, n) -
         static_cast<double>(n) * lambda.dot(z);
}

double duality_gap(const ProblemInstance& instance, const Solution& solution,
                   const QpSettings& settings, Execution exec) {
  if (solution.dual_price.size() == 0) {
    throw std::invalid_argument("duality_gap: solution carries no dual price");
  }
  return social_welfare(instance, solution.controls) -
         dual_value(instance, solution.dual_price, settings, exec);
}

// ---------------------------------------------------------------------------

Lemma1Stats lemma1_bound_estimate(double lipschitz_l, double second_moment_c,
                                  int n_population, int trials, std::uint64_t seed,
                                  const Lemma1Options& options) {
  if (trials < 100) throw std::invalid_argument("lemma1_bound_estimate: trials >= 100");
  if (n_population < 1) throw std::invalid_argument("lemma1_bound_estimate: N >= 1");
  if (lipschitz_l < 0.0 || second_moment_c < 0.0) {
    throw std::invalid_argument("lemma1_bound_estimate: L and C must be nonnegative");
  }
  const int d = options.dimension;
  const double radius = std::sqrt(second_moment_c);

  // Per trial: the agent-averaged sample (1/N) sum_i F(m) . x_i = L ||m||^2,
  // an unbiased estimate of E(F(m) . x_i) by exchangeability, and m itself.
  std::vector<double> samples(static_cast<std::size_t>(trials));
  std::vector<Vector> means(static_cast<std::size_t>(trials));
  for_each_index(static_cast<std::size_t>(trials), options.exec, [&](std::size_t t) {
    SeededUniform rng(substream_seed(seed, t));
    Vector m = Vector::Zero(d);
    Vector x(d);
    for (int i = 0; i < n_population; ++i) {
      if (options.sampler == Lemma1Sampler::constant) {
        x.setZero();
        x(0) = radius;
      } else {
        for (int j = 0; j < d; ++j) x(j) = rng.normal();
        const double r = radius * std::pow(rng.unit(), 1.0 / d);
        const double norm = x.norm();
        x *= norm > 0.0 ? r / norm : 0.0;
      }
      m += x;
    }
    m /= static_cast<double>(n_population);
    samples[t] = lipschitz_l * m.squaredNorm();
    means[t] = m;
  });

  double sum = 0.0;
  Vector mean_m = Vector::Zero(d);
  for (int t = 0; t < trials; ++t) {
    sum += samples[t];
    mean_m += means[t];
  }
  const double term1 = sum / trials;
  mean_m /= static_cast<double>(trials);
  // E m = E x_i, so F(E m) . E x_i = L ||E m||^2.
  const double term2 = lipschitz_l * mean_m.squaredNorm();
  double var = 0.0;
  for (double s : samples) var += (s - term1) * (s - term1);
  var /= std::max(1, trials - 1);

  Lemma1Stats stats;
  stats.n_population = n_population;
  stats.trials = trials;
  stats.mean_lhs = std::abs(term1 - term2);
  stats.standard_error = std::sqrt(var / trials);
  stats.bound_2lc_over_n = 2.0 * lipschitz_l * second_moment_c / n_population;
  stats.lipschitz_l = lipschitz_l;
  stats.second_moment_c = second_moment_c;
  return stats;
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("log_log_slope: need >= 2 paired points");
  }
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
      throw std::invalid_argument("log_log_slope: values must be positive");
    }
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace mfg
