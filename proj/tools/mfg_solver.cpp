// Command-line entry point: generate (or load) an EV fleet scenario, run the
// selected coordination algorithms, certify the results and write the
// report files to the output directory.

#include "mfg/report.hpp"
#include "mfg/scenario.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>

int main(int argc, char** argv) {
  CLI::App app{"Finite-population aggregative game solver (EV charging scenario)"};

  std::string scenario_path;
  std::optional<std::string> algorithm;
  std::optional<int> n_agents;
  std::optional<int> horizon;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  std::optional<int> max_iter;
  std::optional<std::string> out_dir;

  app.add_option("--scenario", scenario_path, "Scenario file (JSON)")->check(CLI::ExistingFile);
  app.add_option("--algorithm", algorithm, "primal-dual | mann | admm | all")
      ->check(CLI::IsMember({"primal-dual", "mann", "admm", "all"}));
  app.add_option("--n-agents", n_agents, "Population size")->check(CLI::PositiveNumber);
  app.add_option("--horizon", horizon, "Number of control periods")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "64-bit fleet seed");
  app.add_option("--tol", tol, "Stopping tolerance")->check(CLI::PositiveNumber);
  app.add_option("--max-iter", max_iter, "Iteration cap")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", out_dir, "Output directory");
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only print errors");

  CLI11_PARSE(app, argc, argv);

  try {
    mfg::ScenarioConfig config;
    if (!scenario_path.empty()) config = mfg::load_scenario(scenario_path);
    if (algorithm) config.algorithm = mfg::algorithm_from_string(*algorithm);
    if (horizon) {
      config.grid = mfg::TimeGrid(*horizon, config.grid.period_minutes);
      if (config.price_offset && config.price_offset->size() != *horizon) {
        throw std::invalid_argument("--horizon conflicts with the scenario's explicit c");
      }
    }
    if (n_agents) config.n_agents = *n_agents;
    if (seed) config.seed = *seed;
    if (tol) config.tol = *tol;
    if (max_iter) config.max_iter = *max_iter;
    if (out_dir) config.out_dir = *out_dir;
    config.validate();

    const mfg::RunReport report = mfg::run_scenario(config);
    if (!quiet) {
      std::printf("N=%d K=%d seed=%llu potential_check=%s\n", report.n_agents, report.horizon,
                  static_cast<unsigned long long>(report.seed),
                  report.potential.pass ? "pass" : "FAIL");
      for (const mfg::AlgorithmRun& r : report.runs) {
        std::printf(
            "%-12s %s iters=%d iters@1e-3=%d welfare=%.10g nash_gap=%.3e duality_gap=%.3e\n",
            r.algorithm.c_str(), r.solution.converged ? "converged    " : "not-converged",
            r.solution.iterations, r.iterations_to_rel_tol, r.solution.diagnostics.welfare,
            r.nash.max_gap, r.duality_gap);
      }
      if (report.runs.size() >= 2) std::cout << "\n" << mfg::compare_algorithms(report).text;
      std::printf("reports written to %s\n", config.out_dir.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mfg_solver: %s\n", e.what());
    return 1;
  }
  return 0;
}
