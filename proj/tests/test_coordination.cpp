#include "doctest.h"

#include "mfg/coordination.hpp"
#include "mfg/scenario.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace mfg;

namespace {

AgentSpec ev_agent(int id, int k, double u_max, double budget, double eta, double gamma,
                   const Vector& c, double x_max = kInf, double x0 = 0.0) {
  AgentSpec a = AgentSpec::uniform(id, k, u_max, budget, x_max);
  a.x0 = x0;
  a.x_min = Vector::Zero(k);
  a.cost_quad_u = eta;
  a.price_slope = gamma;
  a.price_offset = c;
  return a;
}

ProblemInstance two_agent_instance() {
  const int k = 2;
  const Vector c{{0.1, 0.25}};
  ProblemInstance inst;
  inst.grid = TimeGrid(k, 5.0);
  inst.coupling = CouplingSpec::ev_charging(k, 0.1, 1.0);
  inst.agents = {ev_agent(0, k, 0.8, 1.0, 0.1, 1.0, c), ev_agent(1, k, 0.6, 0.7, 0.1, 1.0, c)};
  return inst;
}

CoordinationOptions tight(double tol = 1e-8, int max_iter = 20000) {
  CoordinationOptions o;
  o.tol = tol;
  o.max_iter = max_iter;
  return o;
}

}  // namespace

TEST_CASE("step schedules") {
  StepSchedule s{StepKind::mann, 0.5, 1.0};
  CHECK_NOTHROW(s.validate());
  CHECK(s.step(1) == 0.5);
  CHECK(s.step(4) == doctest::Approx(0.125));
  CHECK_THROWS_AS((StepSchedule{StepKind::mann, 0.5, 1.5}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((StepSchedule{StepKind::mann, 0.5, 0.0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((StepSchedule{StepKind::constant, 0.0, 0.0}.validate()), std::invalid_argument);
  CHECK(StepSchedule{StepKind::constant, 0.3, 0.0}.step(100) == 0.3);
}

TEST_CASE("coordinator update") {
  SUBCASE("quadratic potential inverts the price map") {
    const CouplingSpec cs = CouplingSpec::ev_charging(3, 0.25, 1.0);
    const Vector lambda{{0.3, -1.2, 2.0}};
    const Vector z = coordinator_update(cs, lambda);
    CHECK((z - lambda / (2.0 * 0.75)).norm() < 1e-14);
    CHECK((cs.price(z) - lambda).norm() < 1e-14);
  }
  SUBCASE("proximal term") {
    const CouplingSpec cs = CouplingSpec::ev_charging(2, 0.25, 1.0);
    const Vector lambda{{1.0, 0.0}}, center{{0.5, -0.5}};
    const Vector z = coordinator_update(cs, lambda, 2.0, &center);
    CHECK((cs.potential_gradient(z) + 2.0 * (z - center) - lambda).norm() < 1e-14);
  }
  SUBCASE("Newton on a non-quadratic potential") {
    CouplingSpec cs;
    cs.dimension = 3;
    cs.potential = [](const Vector& z) { return z.array().exp().sum() + z.squaredNorm(); };
    cs.potential_gradient = [](const Vector& z) -> Vector {
      return z.array().exp().matrix() + 2.0 * z;
    };
    cs.potential_hessian_diag = [](const Vector& z) -> Vector {
      return z.array().exp() + 2.0;
    };
    cs.price = cs.potential_gradient;
    const Vector lambda{{0.0, 3.0, -2.0}};
    const Vector z = coordinator_update(cs, lambda);
    CHECK((cs.potential_gradient(z) - lambda).cwiseAbs().maxCoeff() <= 1e-12 * 3.0);
  }
}

TEST_CASE("primal_dual_step") {
  SUBCASE("a consistent state keeps its price") {
    ProblemInstance inst;
    inst.grid = TimeGrid(1, 5.0);
    inst.coupling = CouplingSpec::ev_charging(1, 0.1, 1.0);
    const Vector c = Vector::Constant(1, 0.1);
    inst.agents = {ev_agent(0, 1, 2.0, 1.0, 0.1, 1.0, c), ev_agent(1, 1, 2.0, 2.0, 0.1, 1.0, c)};
    const SolverState s0 = initial_state(inst);
    const SolverState s1 = primal_dual_step(s0, inst, 0.3, tight());
    CHECK((s1.dual_price - s0.dual_price).norm() < 1e-14);
    CHECK(s1.iter == 1);
    CHECK(s1.residual_trace.size() == 1);
  }
  SUBCASE("two steps by hand, N = 2, K = 1") {
    // u is pinned by the budgets (1 and 2), so mean = 3/2. F(z) = 1.8 z.
    ProblemInstance inst;
    inst.grid = TimeGrid(1, 5.0);
    inst.coupling = CouplingSpec::ev_charging(1, 0.1, 1.0);
    const Vector c = Vector::Constant(1, 0.1);
    inst.agents = {ev_agent(0, 1, 2.0, 1.0, 0.1, 1.0, c), ev_agent(1, 1, 2.0, 2.0, 0.1, 1.0, c)};
    SolverState s = initial_state(inst);
    s.dual_price = Vector::Constant(1, 1.0);
    const double beta = 0.1;
    s = primal_dual_step(s, inst, beta, tight());
    // z1 = 1 / 1.8 = 5/9, lambda1 = 1 + 0.2 (3/2 - 5/9) = 107/90
    CHECK(s.aggregate_z(0) == doctest::Approx(5.0 / 9.0).epsilon(1e-14));
    CHECK(std::abs(s.dual_price(0) - 107.0 / 90.0) < 1e-10);
    s = primal_dual_step(s, inst, beta, tight());
    // z2 = (107/90) / 1.8 = 107/162, lambda2 = 107/90 + 0.2 (3/2 - 107/162) = 107/90 + 136/810
    CHECK(std::abs(s.aggregate_z(0) - 107.0 / 162.0) < 1e-10);
    CHECK(std::abs(s.dual_price(0) - (107.0 / 90.0 + 136.0 / 810.0)) < 1e-10);
    CHECK(s.residual_trace.size() == 2);
    CHECK(s.residual_trace[1].iter == 2);
  }
  SUBCASE("rejects a nonpositive step") {
    const ProblemInstance inst = two_agent_instance();
    CHECK_THROWS_AS(primal_dual_step(initial_state(inst), inst, 0.0, tight()),
                    std::invalid_argument);
  }
}

TEST_CASE("mann on a decoupled fleet stops after one effective update") {
  ProblemInstance inst = two_agent_instance();
  inst.coupling = CouplingSpec::decoupled(2, CouplingMode::control_average);
  const StepSchedule s{StepKind::mann, 1.0, 1.0};
  const Solution one = mann_solve(inst, s, tight(1e-8, 1));
  for (int i = 0; i < inst.n_agents(); ++i) {
    const Vector own = best_response({&inst.agents[i], Vector::Zero(2), inst.coupling.mode},
                                     inst.grid, QpSettings{});
    CHECK((one.controls[i] - own).norm() < 1e-12);
  }
  // The change from the initial fill is only certified as zero one step later.
  const Solution sol = mann_solve(inst, s, tight());
  CHECK(sol.converged);
  CHECK(sol.iterations <= 2);
  CHECK_THROWS_AS(mann_solve(inst, StepSchedule{StepKind::constant, 1.0, 0.0}, tight()),
                  std::invalid_argument);
}

TEST_CASE("two-agent instance: all algorithms reach the grid social optimum") {
  const ProblemInstance inst = two_agent_instance();
  const double grid = oracle::grid_welfare(inst, 0.01);
  const Solution mann = mann_solve(inst, default_mann_schedule(inst), tight());
  const Solution admm = admm_solve(inst, default_admm_penalty(inst), tight());
  const Solution pd = primal_dual_solve(inst, default_primal_dual_step(inst), tight());
  for (const Solution* s : {&mann, &admm, &pd}) {
    CHECK(s->converged);
    CHECK(s->diagnostics.welfare <= grid + 1e-9);
    CHECK(grid - s->diagnostics.welfare <= 1e-3);
  }
  CHECK((mann.aggregate_z - admm.aggregate_z).norm() <= 1e-4);
  CHECK((pd.aggregate_z - admm.aggregate_z).norm() <= 1e-4);
}

TEST_CASE("ADMM with one decoupled agent is a single best response") {
  ProblemInstance inst = two_agent_instance();
  inst.agents.resize(1);
  inst.coupling = CouplingSpec::decoupled(2, CouplingMode::control_average);
  const Solution sol = admm_solve(inst, 1.0, tight());
  CHECK(sol.converged);
  const Vector own = best_response({&inst.agents[0], Vector::Zero(2), inst.coupling.mode},
                                   inst.grid, QpSettings{});
  CHECK((sol.controls[0] - own).norm() < 1e-6);
}

TEST_CASE("ADMM preconditions") {
  const ProblemInstance inst = two_agent_instance();
  CHECK_THROWS_AS(admm_solve(inst, 0.0, tight()), std::invalid_argument);
  ProblemInstance skew = inst;
  Matrix m{{1.0, 0.5}, {-0.5, 1.0}};
  skew.coupling = CouplingSpec::affine_map(m, Vector::Zero(2), 0.0, CouplingMode::control_average);
  CHECK_THROWS_AS(admm_solve(skew, 1.0, tight()), std::invalid_argument);
}

TEST_CASE("algorithm agreement and certificates on random small instances") {
  SeededUniform rng(808);
  oracle::SmallInstanceOptions opt;
  opt.max_agents = 4;
  opt.max_horizon = 4;
  for (int trial = 0; trial < 12; ++trial) {
    const ProblemInstance inst = oracle::random_small_instance(rng, opt);
    const double tol = 1e-8;
    const Solution admm = admm_solve(inst, default_admm_penalty(inst), tight(tol));
    const Solution mann = mann_solve(inst, default_mann_schedule(inst), tight(tol, 50000));
    REQUIRE(admm.converged);
    CHECK(mann.converged);
    const double scale = std::max(admm.aggregate_z.norm(), 1e-12);
    CHECK((mann.aggregate_z - admm.aggregate_z).norm() / scale <= 1e-3);
    // Stationarity and aggregate consistency.
    CHECK((admm.dual_price - inst.coupling.price(admm.aggregate_z)).norm() <= 10 * tol);
    CHECK((aggregate(inst, admm.controls) - admm.aggregate_z).norm() <= 10 * tol);
    CHECK(fixed_point_residual(inst, admm.dual_price, QpSettings{}) <= 10 * tol);
    // Trace bookkeeping.
    CHECK(admm.residual_trace.size() == static_cast<std::size_t>(admm.iterations));
    CHECK(admm.aggregate_history.size() == static_cast<std::size_t>(admm.iterations));
    for (std::size_t r = 1; r < admm.residual_trace.size(); ++r) {
      CHECK(admm.residual_trace[r].iter == admm.residual_trace[r - 1].iter + 1);
    }
  }
}

TEST_CASE("ADMM in state-average mode reaches the grid optimum") {
  SeededUniform rng(909);
  int checked = 0;
  while (checked < 4) {
    const ProblemInstance inst = oracle::random_small_instance(rng);
    if (inst.coupling.mode != CouplingMode::state_average) continue;
    ++checked;
    const Solution sol = admm_solve(inst, default_admm_penalty(inst), tight());
    REQUIRE(sol.converged);
    const double grid = oracle::grid_welfare(inst, 0.01);
    CHECK(sol.diagnostics.welfare <= grid + 1e-9);
    CHECK(grid - sol.diagnostics.welfare <= 1e-2);
    for (int i = 0; i < inst.n_agents(); ++i) {
      CHECK(oracle::states_within(inst.agents[i], sol.controls[i], 1e-7));
      CHECK((sol.states[i] - oracle::recursion(inst.agents[i].alpha, inst.agents[i].beta,
                                               inst.agents[i].x0, sol.controls[i]))
                .norm() < 1e-10);
    }
  }
}

TEST_CASE("ADMM welfare eventually decreases") {
  ScenarioConfig cfg;
  cfg.n_agents = 12;
  cfg.grid = TimeGrid(12, 5.0);
  const ProblemInstance inst = generate_fleet(cfg);
  const Solution sol = admm_solve(inst, default_admm_penalty(inst), tight(1e-10, 400));
  const auto& tr = sol.residual_trace;
  for (std::size_t k = 5; 10 * k <= tr.size(); ++k) {
    CHECK(tr[10 * k - 1].welfare <= tr[k - 1].welfare + 1e-9);
  }
}

TEST_CASE("fixed_point_residual") {
  SUBCASE("decoupled at zero price") {
    ProblemInstance inst = two_agent_instance();
    inst.coupling = CouplingSpec::decoupled(2, CouplingMode::control_average);
    CHECK(fixed_point_residual(inst, Vector::Zero(2), QpSettings{}) == 0.0);
  }
  SUBCASE("far from equilibrium") {
    const ProblemInstance inst = two_agent_instance();
    CHECK(fixed_point_residual(inst, Vector{{5.0, -5.0}}, QpSettings{}) > 1.0);
  }
  SUBCASE("rejects bad input") {
    const ProblemInstance inst = two_agent_instance();
    CHECK_THROWS(fixed_point_residual(inst, Vector::Zero(3), QpSettings{}));
    CHECK_THROWS(fixed_point_residual(inst, Vector{{std::nan(""), 0.0}}, QpSettings{}));
  }
}

TEST_CASE("iterations to relative tolerance") {
  std::vector<Vector> h = {Vector::Constant(1, 2.0), Vector::Constant(1, 1.5),
                           Vector::Constant(1, 1.0005), Vector::Constant(1, 1.0)};
  CHECK(iterations_to_relative_tolerance(h, 1e-3) == 3);
  CHECK(iterations_to_relative_tolerance(h, 1e-4) == 4);
  CHECK(iterations_to_relative_tolerance(h, 1.5) == 1);
  CHECK(iterations_to_relative_tolerance({}, 1e-3) == -1);
  // A late excursion resets the count.
  h.insert(h.end() - 1, Vector::Constant(1, 1.2));
  CHECK(iterations_to_relative_tolerance(h, 1e-3) == 5);
}

TEST_CASE("default steps") {
  const ProblemInstance inst = two_agent_instance();
  CHECK(default_admm_penalty(inst) == doctest::Approx(std::sqrt(0.2 * 1.8)));
  CHECK(default_mann_schedule(inst).beta0 == doctest::Approx(1.8 / 2));
  // 1 / (sum 1/(2 eta) + N / psi'') = 1 / (10 + 2/1.8)
  CHECK(default_primal_dual_step(inst) == doctest::Approx(1.0 / (10.0 + 2.0 / 1.8)));
}
