#pragma once

// Scenario runs: solve with the selected algorithms, certify the results,
// and write the trace/summary files.
//
// Files written to out_dir:
//   agents.csv          id,alpha,beta,x0,x_max,u_max,budget
//   trace_<algo>.csv    iter,primal_res,dual_res,welfare,z_norm
//   comparison.csv      iter,z_norm_<algo>...,u_norm_<algo>...   (>= 2 algorithms)
//   comparison.txt      human-readable comparison table          (>= 2 algorithms)
//   summary.json        deterministic report (no timings)
//   timing.json         wall-clock seconds per phase

#include "mfg/core_model.hpp"
#include "mfg/scenario.hpp"
#include "mfg/verification.hpp"

#include "json.hpp"

#include <map>
#include <string>
#include <vector>

namespace mfg {

inline constexpr double kConvergenceRelTol = 1e-3;

struct AlgorithmRun {
  std::string algorithm;  // "primal-dual" | "mann" | "admm"
  Solution solution;
  int iterations_to_rel_tol = -1;  // ||z_k - z_final|| / ||z_final|| <= 1e-3
  NashGapReport nash;
  double duality_gap = 0.0;
  double stationarity = 0.0;       // ||lambda* - F(z*)||
  double fixed_point = 0.0;        // fixed_point_residual(lambda*)
  double mean_agent_cost = 0.0;    // mean |J_i| at the solution
};

struct RunReport {
  int n_agents = 0;
  int horizon = 0;
  std::uint64_t seed = 0;
  int tracked_agent = 0;           // agent whose ||u_i|| is plotted
  PotentialCheck potential;
  std::vector<AlgorithmRun> runs;
  std::map<std::string, double> wall_clock_seconds;

  const AlgorithmRun* find(const std::string& algorithm) const;
};

/// Runs on an already built instance (no files written).
RunReport run_instance(const ProblemInstance& instance, const ScenarioConfig& config);

/// generate_fleet + run_instance + write_report_files(config.out_dir).
/// Throws on I/O failure; non-convergence is only reported.
RunReport run_scenario(const ScenarioConfig& config);

struct ComparisonRow {
  std::string algorithm;
  int iterations = 0;
  int iterations_to_rel_tol = -1;
  double final_welfare = 0.0;
  double welfare_delta = 0.0;      // relative to the first algorithm
  double max_nash_gap = 0.0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  std::string text;
  std::string csv;                 // per-iteration z and tracked-agent u norms
};

/// Throws std::invalid_argument with fewer than two runs.
ComparisonTable compare_algorithms(const RunReport& report);

nlohmann::json summary_json(const RunReport& report);
std::string trace_csv(const Solution& solution);
std::string agents_csv(const ProblemInstance& instance);

void write_report_files(const RunReport& report, const ProblemInstance& instance,
                        const std::string& out_dir);

/// Parsed trace file rows; throws std::runtime_error on a header mismatch.
std::vector<TraceRow> parse_trace_csv(const std::string& text);
/// Parsed agents file; throws std::runtime_error on a header mismatch.
std::vector<AgentSpec> parse_agents_csv(const std::string& text, int horizon);

}  // namespace mfg
