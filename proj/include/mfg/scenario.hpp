#pragma once

// EV fleet scenarios: configuration, the JSON scenario file, and seeded
// fleet generation.

#include "mfg/core_model.hpp"
#include "mfg/rng.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mfg {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Uniform draw ranges for the heterogeneous fleet parameters (repository defaults).
struct ParameterRanges {
  Range x_max{20.0, 40.0};
  Range u_max{1.0, 3.0};
  Range budget{5.0, 15.0};
  Range x0{0.0, 5.0};
  Range price_offset{0.05, 0.15};  // drawn once per period, shared by all agents
};

enum class Algorithm { primal_dual, mann, admm, all };

std::string to_string(Algorithm algorithm);
Algorithm algorithm_from_string(const std::string& text);

struct ScenarioConfig {
  int n_agents = 100;
  TimeGrid grid{36, 5.0};
  ParameterRanges ranges;
  double eta = 0.01;
  double gamma = 1.0;
  CouplingMode mode = CouplingMode::control_average;
  std::optional<Vector> price_offset;        // overrides ranges.price_offset
  std::optional<std::vector<AgentSpec>> agents;  // explicit fleet, skips generation
  std::uint64_t seed = 2018;
  Algorithm algorithm = Algorithm::all;
  double tol = 1e-6;
  int max_iter = 200;
  double admm_rho = 0.0;     // 0 selects default_admm_penalty
  double mann_beta0 = 0.0;   // 0 selects default_mann_schedule
  double mann_exponent = 1.0;
  double pd_beta = 0.0;      // 0 selects default_primal_dual_step
  std::string out_dir = "out";

  /// Throws std::invalid_argument on unordered ranges or eta >= gamma.
  void validate() const;
};

/// Parses a scenario document; unknown keys anywhere are rejected with
/// std::invalid_argument.
ScenarioConfig parse_scenario(const nlohmann::json& doc);
ScenarioConfig load_scenario(const std::string& path);
nlohmann::json scenario_to_json(const ScenarioConfig& config);

/// Seeded heterogeneous integrator fleet (alpha = beta = 1, x_min = u_min = 0)
/// under the EV coupling. Infeasible draws, and draws whose terminal charge
/// x0 + budget exceeds capacity, are rejected; throws std::runtime_error
/// after 1000 consecutive rejections.
ProblemInstance generate_fleet(const ScenarioConfig& config);

/// The per-period price offset c used by a config (explicit or drawn).
Vector scenario_price_offset(const ScenarioConfig& config);

}  // namespace mfg
