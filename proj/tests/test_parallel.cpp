#include "doctest.h"

#include "mfg/coordination.hpp"
#include "mfg/scenario.hpp"
#include "mfg/verification.hpp"

#include <omp.h>

using namespace mfg;

namespace {

ProblemInstance fleet(int n, int k) {
  ScenarioConfig cfg;
  cfg.n_agents = n;
  cfg.grid = TimeGrid(k, 5.0);
  cfg.seed = 11;
  return generate_fleet(cfg);
}

CoordinationOptions with(Execution exec, int max_iter) {
  CoordinationOptions o;
  o.tol = 1e-9;
  o.max_iter = max_iter;
  o.exec = exec;
  return o;
}

void require_identical(const Solution& a, const Solution& b) {
  REQUIRE(a.iterations == b.iterations);
  CHECK(a.converged == b.converged);
  CHECK(a.aggregate_z == b.aggregate_z);
  CHECK(a.dual_price == b.dual_price);
  REQUIRE(a.controls.size() == b.controls.size());
  for (std::size_t i = 0; i < a.controls.size(); ++i) CHECK(a.controls[i] == b.controls[i]);
  for (std::size_t r = 0; r < a.residual_trace.size(); ++r) {
    CHECK(a.residual_trace[r].welfare == b.residual_trace[r].welfare);
    CHECK(a.residual_trace[r].dual_res == b.residual_trace[r].dual_res);
  }
}

}  // namespace

TEST_CASE("the runner provides a thread team") {
  MESSAGE("omp_get_max_threads = " << omp_get_max_threads());
  CHECK(omp_get_max_threads() >= 1);
}

TEST_CASE("ADMM is bit-identical serial vs parallel") {
  const ProblemInstance inst = fleet(40, 12);
  const double rho = default_admm_penalty(inst);
  require_identical(admm_solve(inst, rho, with(Execution::serial, 60)),
                    admm_solve(inst, rho, with(Execution::parallel, 60)));
}

TEST_CASE("Mann and primal-dual are bit-identical serial vs parallel") {
  const ProblemInstance inst = fleet(30, 10);
  const StepSchedule s = default_mann_schedule(inst);
  require_identical(mann_solve(inst, s, with(Execution::serial, 40)),
                    mann_solve(inst, s, with(Execution::parallel, 40)));
  const double beta = default_primal_dual_step(inst);
  require_identical(primal_dual_solve(inst, beta, with(Execution::serial, 40)),
                    primal_dual_solve(inst, beta, with(Execution::parallel, 40)));
}

TEST_CASE("certificates are bit-identical serial vs parallel") {
  const ProblemInstance inst = fleet(40, 12);
  const Solution sol = admm_solve(inst, default_admm_penalty(inst), with(Execution::parallel, 80));
  const NashGapReport a = epsilon_nash_gap(inst, sol, QpSettings{}, Execution::serial);
  const NashGapReport b = epsilon_nash_gap(inst, sol, QpSettings{}, Execution::parallel);
  CHECK(a.max_gap == b.max_gap);
  REQUIRE(a.per_agent_gap.size() == b.per_agent_gap.size());
  for (std::size_t i = 0; i < a.per_agent_gap.size(); ++i) {
    CHECK(a.per_agent_gap[i] == b.per_agent_gap[i]);
  }
  CHECK(duality_gap(inst, sol, QpSettings{}, Execution::serial) ==
        duality_gap(inst, sol, QpSettings{}, Execution::parallel));
}

TEST_CASE("covariance estimate is bit-identical serial vs parallel") {
  Lemma1Options serial, parallel;
  serial.exec = Execution::serial;
  parallel.exec = Execution::parallel;
  const Lemma1Stats a = lemma1_bound_estimate(1.0, 1.0, 200, 2000, 3, serial);
  const Lemma1Stats b = lemma1_bound_estimate(1.0, 1.0, 200, 2000, 3, parallel);
  CHECK(a.mean_lhs == b.mean_lhs);
  CHECK(a.standard_error == b.standard_error);
}
