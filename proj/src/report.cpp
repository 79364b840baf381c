#include "mfg/report.hpp"

#include "mfg/coordination.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace mfg {

using nlohmann::json;

namespace {

constexpr const char* kTraceHeader = "iter,primal_res,dual_res,welfare,z_norm";
constexpr const char* kAgentsHeader = "id,alpha,beta,x0,x_max,u_max,budget";

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::runtime_error("malformed number '" + s + "'");
  return v;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

AlgorithmRun certify(const ProblemInstance& instance, const std::string& name,
                     Solution sol, const QpSettings& qp) {
  AlgorithmRun run;
  run.algorithm = name;
  run.iterations_to_rel_tol =
      iterations_to_relative_tolerance(sol.aggregate_history, kConvergenceRelTol);
  run.nash = epsilon_nash_gap(instance, sol, qp);
  run.duality_gap = duality_gap(instance, sol, qp);
  run.stationarity = (sol.dual_price - instance.coupling.price(sol.aggregate_z)).norm();
  run.fixed_point = fixed_point_residual(instance, sol.dual_price, qp);
  const Vector z = aggregate(instance, sol.controls);
  double total = 0.0;
  for (int i = 0; i < instance.n_agents(); ++i) {
    total += std::abs(agent_cost(instance.agents[i], instance.coupling, instance.grid,
                                 sol.controls[i], z));
  }
  run.mean_agent_cost = total / instance.n_agents();
  sol.diagnostics.nash_gap = run.nash.max_gap;
  sol.diagnostics.duality_gap = run.duality_gap;
  run.solution = std::move(sol);
  return run;
}

}  // namespace

const AlgorithmRun* RunReport::find(const std::string& algorithm) const {
  for (const AlgorithmRun& r : runs) {
    if (r.algorithm == algorithm) return &r;
  }
  return nullptr;
}

RunReport run_instance(const ProblemInstance& instance, const ScenarioConfig& config) {
  config.validate();
  RunReport report;
  report.n_agents = instance.n_agents();
  report.horizon = instance.horizon();
  report.seed = config.seed;
  report.tracked_agent = 0;

  double u_scale = 1.0;
  for (const AgentSpec& a : instance.agents) {
    for (int t = 0; t < a.u_max.size(); ++t) {
      if (std::isfinite(a.u_max(t))) u_scale = std::max(u_scale, a.u_max(t));
    }
  }
  auto start = std::chrono::steady_clock::now();
  report.potential =
      potential_condition_check(instance.coupling, instance.n_agents(), 50, 1e-5, 0x5eed, u_scale);
  report.wall_clock_seconds["potential_check"] = seconds_since(start);

  CoordinationOptions opts;
  opts.tol = config.tol;
  opts.max_iter = config.max_iter;

  const bool all = config.algorithm == Algorithm::all;
  auto timed = [&](const std::string& name, auto&& solve) {
    auto t0 = std::chrono::steady_clock::now();
    Solution sol = solve();
    report.wall_clock_seconds["solve_" + name] = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    report.runs.push_back(certify(instance, name, std::move(sol), opts.qp));
    report.wall_clock_seconds["verify_" + name] = seconds_since(t0);
  };

  if (all || config.algorithm == Algorithm::primal_dual) {
    const double beta =
        config.pd_beta > 0.0 ? config.pd_beta : default_primal_dual_step(instance);
    timed("primal-dual", [&] { return primal_dual_solve(instance, beta, opts); });
  }
  if (all || config.algorithm == Algorithm::mann) {
    StepSchedule schedule = default_mann_schedule(instance);
    if (config.mann_beta0 > 0.0) schedule.beta0 = config.mann_beta0;
    schedule.exponent = config.mann_exponent;
    timed("mann", [&] { return mann_solve(instance, schedule, opts); });
  }
  if (all || config.algorithm == Algorithm::admm) {
    const double rho = config.admm_rho > 0.0 ? config.admm_rho : default_admm_penalty(instance);
    timed("admm", [&] { return admm_solve(instance, rho, opts); });
  }
  return report;
}

RunReport run_scenario(const ScenarioConfig& config) {
  auto start = std::chrono::steady_clock::now();
  const ProblemInstance instance = generate_fleet(config);
  const double fleet_seconds = seconds_since(start);
  RunReport report = run_instance(instance, config);
  report.wall_clock_seconds["generate_fleet"] = fleet_seconds;
  write_report_files(report, instance, config.out_dir);
  write_file(std::filesystem::path(config.out_dir) / "scenario.json",
             scenario_to_json(config).dump(2) + "\n");
  return report;
}

ComparisonTable compare_algorithms(const RunReport& report) {
  if (report.runs.size() < 2) {
    throw std::invalid_argument("compare_algorithms: need at least two runs");
  }
  ComparisonTable table;
  const double w0 = report.runs.front().solution.diagnostics.welfare;
  for (const AlgorithmRun& r : report.runs) {
    ComparisonRow row;
    row.algorithm = r.algorithm;
    row.iterations = r.solution.iterations;
    row.iterations_to_rel_tol = r.iterations_to_rel_tol;
    row.final_welfare = r.solution.diagnostics.welfare;
    row.welfare_delta = row.final_welfare - w0;
    row.max_nash_gap = r.nash.max_gap;
    table.rows.push_back(row);
  }

  std::ostringstream text;
  text << std::left << std::setw(13) << "algorithm" << std::right << std::setw(8) << "iters"
       << std::setw(12) << "iters@1e-3" << std::setw(18) << "final_welfare" << std::setw(14)
       << "delta" << std::setw(14) << "max_nash_gap" << "\n";
  for (const ComparisonRow& row : table.rows) {
    text << std::left << std::setw(13) << row.algorithm << std::right << std::setw(8)
         << row.iterations << std::setw(12) << row.iterations_to_rel_tol << std::setw(18)
         << std::setprecision(10) << row.final_welfare << std::setw(14) << std::setprecision(3)
         << row.welfare_delta << std::setw(14) << row.max_nash_gap << "\n";
  }
  table.text = text.str();

  // One row per iteration; cells are blank once an algorithm has stopped.
  std::ostringstream csv;
  csv << "iter";
  for (const AlgorithmRun& r : report.runs) csv << ",z_norm_" << r.algorithm;
  for (const AlgorithmRun& r : report.runs) {
    for (int i = 0; i < report.n_agents; ++i) csv << ",u_norm_" << i << "_" << r.algorithm;
  }
  csv << "\n";
  std::size_t rows = 0;
  for (const AlgorithmRun& r : report.runs) rows = std::max(rows, r.solution.residual_trace.size());
  for (std::size_t k = 0; k < rows; ++k) {
    csv << k + 1;
    for (const AlgorithmRun& r : report.runs) {
      csv << ",";
      if (k < r.solution.residual_trace.size()) csv << fmt(r.solution.residual_trace[k].z_norm);
    }
    for (const AlgorithmRun& r : report.runs) {
      const bool have = k < r.solution.residual_trace.size();
      for (int i = 0; i < report.n_agents; ++i) {
        csv << ",";
        if (have) csv << fmt(r.solution.residual_trace[k].control_norms.at(i));
      }
    }
    csv << "\n";
  }
  table.csv = csv.str();
  return table;
}

json summary_json(const RunReport& report) {
  json doc;
  doc["n_agents"] = report.n_agents;
  doc["horizon"] = report.horizon;
  doc["seed"] = report.seed;
  doc["tracked_agent"] = report.tracked_agent;
  doc["potential_check"] = {{"pass", report.potential.pass},
                            {"max_deviation", report.potential.max_deviation},
                            {"max_asymmetry", report.potential.max_asymmetry}};
  json runs = json::array();
  for (const AlgorithmRun& r : report.runs) {
    const Solution& s = r.solution;
    json run = {{"algorithm", r.algorithm},
                {"converged", s.converged},
                {"iterations", s.iterations},
                {"iterations_to_rel_tol", r.iterations_to_rel_tol},
                {"rel_tol", kConvergenceRelTol},
                {"final_welfare", s.diagnostics.welfare},
                {"max_nash_gap", r.nash.max_gap},
                {"mean_agent_cost", r.mean_agent_cost},
                {"duality_gap", r.duality_gap},
                {"stationarity", r.stationarity},
                {"fixed_point_residual", r.fixed_point}};
    if (!s.residual_trace.empty()) {
      run["final_primal_res"] = s.residual_trace.back().primal_res;
      run["final_dual_res"] = s.residual_trace.back().dual_res;
    }
    runs.push_back(run);
  }
  doc["runs"] = runs;
  doc["notes"] = json::array(
      {"Iterations to tolerance use the final iterate as the limit proxy.",
       "The expected decay of the Nash gap with N (log-log slope in [-1.5, -0.5]) is an "
       "empirical expectation for affine price maps, not a proven rate."});
  return doc;
}

std::string trace_csv(const Solution& solution) {
  std::ostringstream out;
  out << kTraceHeader << "\n";
  for (const TraceRow& row : solution.residual_trace) {
    out << row.iter << "," << fmt(row.primal_res) << "," << fmt(row.dual_res) << ","
        << fmt(row.welfare) << "," << fmt(row.z_norm) << "\n";
  }
  return out.str();
}

std::string agents_csv(const ProblemInstance& instance) {
  std::ostringstream out;
  out << kAgentsHeader << "\n";
  for (const AgentSpec& a : instance.agents) {
    out << a.id << "," << fmt(a.alpha) << "," << fmt(a.beta) << "," << fmt(a.x0) << ","
        << fmt(a.x_max.size() ? a.x_max(0) : kInf) << ","
        << fmt(a.u_max.size() ? a.u_max(0) : kInf) << "," << fmt(a.budget) << "\n";
  }
  return out.str();
}

void write_report_files(const RunReport& report, const ProblemInstance& instance,
                        const std::string& out_dir) {
  namespace fs = std::filesystem;
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir + ": " + ec.message());

  write_file(dir / "agents.csv", agents_csv(instance));
  for (const AlgorithmRun& r : report.runs) {
    write_file(dir / ("trace_" + r.algorithm + ".csv"), trace_csv(r.solution));
  }
  if (report.runs.size() >= 2) {
    const ComparisonTable table = compare_algorithms(report);
    write_file(dir / "comparison.csv", table.csv);
    write_file(dir / "comparison.txt", table.text);
  }
  write_file(dir / "summary.json", summary_json(report).dump(2) + "\n");
  write_file(dir / "timing.json", json(report.wall_clock_seconds).dump(2) + "\n");
}

std::vector<TraceRow> parse_trace_csv(const std::string& text) {
  const std::vector<std::string> lines = lines_of(text);
  if (lines.empty() || lines.front() != kTraceHeader) {
    throw std::runtime_error("trace csv: unexpected header");
  }
  std::vector<TraceRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split(lines[i], ',');
    if (cells.size() != 5) throw std::runtime_error("trace csv: bad row " + std::to_string(i));
    TraceRow row;
    row.iter = std::stoi(cells[0]);
    row.primal_res = to_double(cells[1]);
    row.dual_res = to_double(cells[2]);
    row.welfare = to_double(cells[3]);
    row.z_norm = to_double(cells[4]);
    rows.push_back(row);
  }
  return rows;
}

std::vector<AgentSpec> parse_agents_csv(const std::string& text, int horizon) {
  const std::vector<std::string> lines = lines_of(text);
  if (lines.empty() || lines.front() != kAgentsHeader) {
    throw std::runtime_error("agents csv: unexpected header");
  }
  std::vector<AgentSpec> agents;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split(lines[i], ',');
    if (cells.size() != 7) throw std::runtime_error("agents csv: bad row " + std::to_string(i));
    AgentSpec a = AgentSpec::uniform(std::stoi(cells[0]), horizon, to_double(cells[5]),
                                     to_double(cells[6]), to_double(cells[4]));
    a.alpha = to_double(cells[1]);
    a.beta = to_double(cells[2]);
    a.x0 = to_double(cells[3]);
    a.x_min = Vector::Zero(horizon);
    agents.push_back(std::move(a));
  }
  return agents;
}

}  // namespace mfg
