#include "doctest.h"

#include "mfg/report.hpp"
#include "mfg/scenario.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mfg;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mfg_test_" + name);
  fs::remove_all(dir);
  return dir;
}

ScenarioConfig small_config(int n = 8, int k = 6) {
  ScenarioConfig cfg;
  cfg.n_agents = n;
  cfg.grid = TimeGrid(k, 5.0);
  cfg.tol = 1e-8;
  cfg.max_iter = 5000;
  return cfg;
}

}  // namespace

TEST_CASE("generate_fleet") {
  SUBCASE("deterministic in the seed") {
    const ScenarioConfig cfg = small_config(20, 12);
    const ProblemInstance a = generate_fleet(cfg), b = generate_fleet(cfg);
    REQUIRE(a.n_agents() == 20);
    for (int i = 0; i < 20; ++i) {
      CHECK(a.agents[i].budget == b.agents[i].budget);
      CHECK(a.agents[i].x0 == b.agents[i].x0);
      CHECK((a.agents[i].u_max - b.agents[i].u_max).norm() == 0.0);
    }
    ScenarioConfig other = cfg;
    other.seed = cfg.seed + 1;
    CHECK(generate_fleet(other).agents[0].budget != a.agents[0].budget);
  }
  SUBCASE("default fleet is feasible and inside the ranges") {
    const ScenarioConfig cfg;
    const ProblemInstance inst = generate_fleet(cfg);
    CHECK(inst.n_agents() == 100);
    CHECK(inst.horizon() == 36);
    CHECK(validate_instance(inst).ok());
    const Vector c = scenario_price_offset(cfg);
    CHECK(c.minCoeff() >= 0.05);
    CHECK(c.maxCoeff() <= 0.15);
    for (const AgentSpec& a : inst.agents) {
      CHECK(feasible_fill(a, inst.grid).has_value());
      CHECK(a.x0 + a.budget <= a.x_max(0) + 1e-12);
      CHECK(a.budget >= 5.0);
      CHECK(a.budget <= 15.0);
      CHECK((a.price_offset - c).norm() == 0.0);
    }
  }
  SUBCASE("degenerate ranges give identical agents") {
    ScenarioConfig cfg = small_config(5, 6);
    cfg.ranges.x_max = {30, 30};
    cfg.ranges.u_max = {2, 2};
    cfg.ranges.budget = {8, 8};
    cfg.ranges.x0 = {1, 1};
    const ProblemInstance inst = generate_fleet(cfg);
    for (const AgentSpec& a : inst.agents) {
      CHECK(a.budget == 8.0);
      CHECK(a.x0 == 1.0);
      CHECK(a.u_max(3) == 2.0);
    }
  }
  SUBCASE("impossible ranges exhaust the rejection budget") {
    ScenarioConfig cfg = small_config(3, 4);
    cfg.ranges.u_max = {0.1, 0.2};
    cfg.ranges.budget = {5, 6};
    CHECK_THROWS_AS(generate_fleet(cfg), std::runtime_error);
  }
}

TEST_CASE("scenario parsing") {
  using nlohmann::json;
  SUBCASE("unknown keys are rejected at every level") {
    CHECK_THROWS_AS(parse_scenario(json{{"bogus", 1}}), std::invalid_argument);
    CHECK_THROWS_AS(parse_scenario(json{{"grid", {{"horizon", 4}}}}), std::invalid_argument);
    CHECK_THROWS_AS(parse_scenario(json{{"fleet", {{"ranges", {{"xmax", {1, 2}}}}}}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(parse_scenario(json{{"solver", {{"beta", 1}}}}), std::invalid_argument);
  }
  SUBCASE("invalid coupling") {
    CHECK_THROWS_AS(parse_scenario(json{{"coupling", {{"eta", 1.0}, {"gamma", 1.0}}}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(parse_scenario(json{{"coupling", {{"potential", "cubic"}}}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(parse_scenario(json{{"solver", {{"algorithm", "newton"}}}}),
                    std::invalid_argument);
  }
  SUBCASE("round trip") {
    ScenarioConfig cfg = small_config(4, 5);
    cfg.eta = 0.05;
    cfg.algorithm = Algorithm::admm;
    cfg.price_offset = Vector{{0.1, 0.2, 0.3, 0.2, 0.1}};
    cfg.ranges.budget = {3, 4};
    cfg.out_dir = "somewhere";
    const ScenarioConfig back = parse_scenario(scenario_to_json(cfg));
    CHECK(scenario_to_json(back) == scenario_to_json(cfg));
    CHECK(back.n_agents == 4);
    CHECK(back.grid.horizon_k == 5);
    CHECK(back.algorithm == Algorithm::admm);
    CHECK((*back.price_offset - *cfg.price_offset).norm() == 0.0);
  }
  SUBCASE("explicit agents") {
    const json doc = json::parse(R"({
      "grid": {"horizon_k": 3},
      "coupling": {"c": 0.1},
      "fleet": {"n_agents": 2},
      "agents": [
        {"id": 0, "x_max": 10, "u_max": 1, "budget": 2},
        {"id": 1, "x0": 1, "x_max": 10, "u_max": 2, "budget": 3}
      ]
    })");
    const ScenarioConfig cfg = parse_scenario(doc);
    const ProblemInstance inst = generate_fleet(cfg);
    CHECK(inst.n_agents() == 2);
    CHECK(inst.agents[1].budget == 3.0);
    CHECK(inst.agents[1].x0 == 1.0);
    CHECK(inst.agents[0].price_offset(2) == 0.1);
    json missing = doc;
    missing["agents"][0].erase("budget");
    CHECK_THROWS_AS(parse_scenario(missing), std::invalid_argument);
  }
}

TEST_CASE("run_scenario writes reproducible reports") {
  ScenarioConfig cfg = small_config(10, 8);
  const fs::path d1 = scratch("repro1"), d2 = scratch("repro2");
  cfg.out_dir = d1.string();
  const RunReport r1 = run_scenario(cfg);
  cfg.out_dir = d2.string();
  run_scenario(cfg);
  for (const char* f : {"agents.csv", "trace_admm.csv", "trace_mann.csv", "trace_primal-dual.csv",
                        "comparison.csv", "comparison.txt", "summary.json"}) {
    INFO(f);
    REQUIRE(fs::exists(d1 / f));
    CHECK(slurp(d1 / f) == slurp(d2 / f));
  }
  // The echoed scenario differs only in its out_dir.
  nlohmann::json s1 = nlohmann::json::parse(slurp(d1 / "scenario.json"));
  nlohmann::json s2 = nlohmann::json::parse(slurp(d2 / "scenario.json"));
  s1.erase("out_dir");
  s2.erase("out_dir");
  CHECK(s1 == s2);
  CHECK(fs::exists(d1 / "timing.json"));

  SUBCASE("trace and agent files parse back") {
    const AlgorithmRun* admm = r1.find("admm");
    REQUIRE(admm != nullptr);
    const std::vector<TraceRow> rows = parse_trace_csv(slurp(d1 / "trace_admm.csv"));
    REQUIRE(rows.size() == admm->solution.residual_trace.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(rows[i].iter == admm->solution.residual_trace[i].iter);
      CHECK(rows[i].welfare == admm->solution.residual_trace[i].welfare);
      CHECK(rows[i].primal_res == admm->solution.residual_trace[i].primal_res);
    }
    const ProblemInstance inst = generate_fleet(cfg);
    const std::vector<AgentSpec> agents = parse_agents_csv(slurp(d1 / "agents.csv"), 8);
    REQUIRE(agents.size() == 10);
    for (int i = 0; i < 10; ++i) {
      CHECK(agents[i].budget == inst.agents[i].budget);
      CHECK(agents[i].x_max(0) == inst.agents[i].x_max(0));
    }
    CHECK_THROWS_AS(parse_trace_csv("a,b\n1,2\n"), std::runtime_error);
    CHECK_THROWS_AS(parse_agents_csv("id\n0\n", 8), std::runtime_error);
  }
  SUBCASE("summary contents") {
    const nlohmann::json s = nlohmann::json::parse(slurp(d1 / "summary.json"));
    CHECK(s["n_agents"] == 10);
    CHECK(s["runs"].size() == 3);
    CHECK(s["potential_check"]["pass"] == true);
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("algorithms agree on a scenario") {
  const ScenarioConfig cfg = small_config(12, 10);
  const ProblemInstance inst = generate_fleet(cfg);
  const RunReport r = run_instance(inst, cfg);
  REQUIRE(r.runs.size() == 3);
  const double ref = r.runs.front().solution.diagnostics.welfare;
  for (const AlgorithmRun& run : r.runs) {
    INFO(run.algorithm);
    CHECK(run.solution.converged);
    CHECK(std::abs(run.solution.diagnostics.welfare - ref) <= 1e-3 * std::abs(ref));
    // State of charge rises monotonically to x0 + budget.
    for (int i = 0; i < inst.n_agents(); ++i) {
      const Vector& x = run.solution.states[i];
      const AgentSpec& a = inst.agents[i];
      CHECK(x(0) >= a.x0 - 1e-9);
      for (int t = 1; t < x.size(); ++t) CHECK(x(t) >= x(t - 1) - 1e-9);
      CHECK(x(x.size() - 1) == doctest::Approx(a.x0 + a.budget).epsilon(1e-9));
    }
  }
  const ComparisonTable t = compare_algorithms(r);
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[0].welfare_delta == 0.0);
  CHECK(t.text.find("admm") != std::string::npos);
  CHECK(t.csv.rfind("iter,z_norm_", 0) == 0);
  // ADMM needs fewer iterations than the diminishing-step Mann iteration.
  CHECK(r.find("admm")->iterations_to_rel_tol < r.find("mann")->iterations_to_rel_tol);
}

TEST_CASE("single-agent scenario: every algorithm returns the same schedule") {
  ScenarioConfig cfg = small_config(1, 6);
  cfg.price_offset = Vector::Constant(6, 0.1);
  const ProblemInstance inst = generate_fleet(cfg);
  const RunReport r = run_instance(inst, cfg);
  REQUIRE(r.runs.size() == 3);
  for (const AlgorithmRun& run : r.runs) {
    INFO(run.algorithm);
    CHECK((run.solution.controls[0] - r.runs[0].solution.controls[0]).cwiseAbs().maxCoeff() <=
          1e-6);
  }
}

TEST_CASE("compare_algorithms") {
  ScenarioConfig cfg = small_config(4, 4);
  cfg.algorithm = Algorithm::admm;
  const ProblemInstance inst = generate_fleet(cfg);
  RunReport r = run_instance(inst, cfg);
  REQUIRE(r.runs.size() == 1);
  CHECK_THROWS_AS(compare_algorithms(r), std::invalid_argument);
  r.runs.push_back(r.runs.front());
  const ComparisonTable t = compare_algorithms(r);
  CHECK(t.rows[1].welfare_delta == 0.0);
  CHECK(t.rows[1].iterations == t.rows[0].iterations);
}
