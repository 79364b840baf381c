#include "mfg/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mfg {

using nlohmann::json;

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::primal_dual: return "primal-dual";
    case Algorithm::mann: return "mann";
    case Algorithm::admm: return "admm";
    case Algorithm::all: return "all";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& text) {
  if (text == "primal-dual") return Algorithm::primal_dual;
  if (text == "mann") return Algorithm::mann;
  if (text == "admm") return Algorithm::admm;
  if (text == "all") return Algorithm::all;
  throw std::invalid_argument("unknown algorithm '" + text + "'");
}

namespace {

void check_range(const Range& r, const char* name) {
  if (!(r.lo <= r.hi)) {
    throw std::invalid_argument(std::string("range ") + name + " is empty or unordered");
  }
}

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
  if (!obj.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) {
      throw std::invalid_argument(where + ": unknown key '" + item.key() + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(where + "." + key + ": " + e.what());
  }
}

Range read_range(const json& value, const std::string& where) {
  if (!value.is_array() || value.size() != 2 || !value[0].is_number() ||
      !value[1].is_number()) {
    throw std::invalid_argument(where + ": expected [lo, hi]");
  }
  return {value[0].get<double>(), value[1].get<double>()};
}

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

// Constant finite bound of an explicit agent, stored per period.
double scalar_bound(const Vector& v) { return v.size() ? v(0) : 0.0; }

AgentSpec fleet_agent(int id, int horizon, double x0, double x_max, double u_max,
                      double budget, const ScenarioConfig& config, const Vector& c) {
  AgentSpec a = AgentSpec::uniform(id, horizon, u_max, budget, x_max);
  a.x0 = x0;
  a.x_min = Vector::Zero(horizon);
  a.cost_quad_u = config.eta;
  a.price_slope = config.gamma;
  a.price_offset = c;
  return a;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (n_agents < 1) throw std::invalid_argument("n_agents must be >= 1");
  check_range(ranges.x_max, "x_max");
  check_range(ranges.u_max, "u_max");
  check_range(ranges.budget, "budget");
  check_range(ranges.x0, "x0");
  check_range(ranges.price_offset, "c");
  if (ranges.u_max.lo < 0.0 || ranges.budget.lo < 0.0 || ranges.x0.lo < 0.0) {
    throw std::invalid_argument("u_max, budget and x0 ranges must be nonnegative");
  }
  if (!(eta >= 0.0) || !(eta < gamma)) {
    throw std::invalid_argument("coupling requires 0 <= eta < gamma");
  }
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
  if (admm_rho < 0.0 || mann_beta0 < 0.0 || pd_beta < 0.0) {
    throw std::invalid_argument("step parameters must be nonnegative (0 selects the default)");
  }
  if (!(mann_exponent > 0.0 && mann_exponent <= 1.0)) {
    throw std::invalid_argument("mann_exponent must lie in (0, 1]");
  }
  if (price_offset && price_offset->size() != grid.horizon_k) {
    throw std::invalid_argument("coupling.c must have horizon_k entries");
  }
  if (agents && static_cast<int>(agents->size()) != n_agents) {
    throw std::invalid_argument("n_agents does not match the explicit agents list");
  }
}

ScenarioConfig parse_scenario(const json& doc) {
  reject_unknown(doc, {"grid", "coupling", "fleet", "agents", "solver", "out_dir"}, "scenario");
  ScenarioConfig cfg;

  if (doc.contains("grid")) {
    const json& g = doc["grid"];
    reject_unknown(g, {"horizon_k", "period_minutes"}, "grid");
    int k = cfg.grid.horizon_k;
    double minutes = cfg.grid.period_minutes;
    read(g, "horizon_k", k, "grid");
    read(g, "period_minutes", minutes, "grid");
    cfg.grid = TimeGrid(k, minutes);
  }

  if (doc.contains("coupling")) {
    const json& c = doc["coupling"];
    reject_unknown(c, {"mode", "eta", "gamma", "c", "potential"}, "coupling");
    if (c.contains("mode")) cfg.mode = coupling_mode_from_string(c["mode"].get<std::string>());
    read(c, "eta", cfg.eta, "coupling");
    read(c, "gamma", cfg.gamma, "coupling");
    if (c.contains("potential") && c["potential"] != "ev-quadratic") {
      throw std::invalid_argument("coupling.potential: only 'ev-quadratic' is supported");
    }
    if (c.contains("c")) {
      const json& v = c["c"];
      if (v.is_number()) {
        cfg.price_offset = Vector::Constant(cfg.grid.horizon_k, v.get<double>());
      } else if (v.is_array()) {
        Vector off(static_cast<Eigen::Index>(v.size()));
        for (std::size_t t = 0; t < v.size(); ++t) off(t) = v[t].get<double>();
        cfg.price_offset = off;
      } else {
        throw std::invalid_argument("coupling.c: expected a number or an array");
      }
    }
  }

  if (doc.contains("fleet")) {
    const json& f = doc["fleet"];
    reject_unknown(f, {"n_agents", "seed", "ranges"}, "fleet");
    read(f, "n_agents", cfg.n_agents, "fleet");
    read(f, "seed", cfg.seed, "fleet");
    if (f.contains("ranges")) {
      const json& r = f["ranges"];
      reject_unknown(r, {"x_max", "u_max", "budget", "x0", "c"}, "fleet.ranges");
      if (r.contains("x_max")) cfg.ranges.x_max = read_range(r["x_max"], "fleet.ranges.x_max");
      if (r.contains("u_max")) cfg.ranges.u_max = read_range(r["u_max"], "fleet.ranges.u_max");
      if (r.contains("budget")) cfg.ranges.budget = read_range(r["budget"], "fleet.ranges.budget");
      if (r.contains("x0")) cfg.ranges.x0 = read_range(r["x0"], "fleet.ranges.x0");
      if (r.contains("c")) cfg.ranges.price_offset = read_range(r["c"], "fleet.ranges.c");
    }
  }

  if (doc.contains("solver")) {
    const json& s = doc["solver"];
    reject_unknown(s, {"algorithm", "tol", "max_iter", "rho", "mann_beta0", "mann_exponent",
                       "pd_beta"},
                   "solver");
    if (s.contains("algorithm")) {
      cfg.algorithm = algorithm_from_string(s["algorithm"].get<std::string>());
    }
    read(s, "tol", cfg.tol, "solver");
    read(s, "max_iter", cfg.max_iter, "solver");
    read(s, "rho", cfg.admm_rho, "solver");
    read(s, "mann_beta0", cfg.mann_beta0, "solver");
    read(s, "mann_exponent", cfg.mann_exponent, "solver");
    read(s, "pd_beta", cfg.pd_beta, "solver");
  }

  read(doc, "out_dir", cfg.out_dir, "scenario");

  if (doc.contains("agents")) {
    const json& list = doc["agents"];
    if (!list.is_array() || list.empty()) {
      throw std::invalid_argument("agents: expected a nonempty array");
    }
    const int k = cfg.grid.horizon_k;
    std::vector<AgentSpec> agents;
    for (std::size_t i = 0; i < list.size(); ++i) {
      const json& a = list[i];
      const std::string where = "agents[" + std::to_string(i) + "]";
      reject_unknown(a, {"id", "alpha", "beta", "x0", "x_max", "u_max", "budget"}, where);
      for (const char* key : {"x_max", "u_max", "budget"}) {
        if (!a.contains(key)) throw std::invalid_argument(where + ": missing '" + key + "'");
      }
      int id = static_cast<int>(i);
      double alpha = 1.0, beta = 1.0, x0 = 0.0, x_max = 0.0, u_max = 0.0, budget = 0.0;
      read(a, "id", id, where);
      read(a, "alpha", alpha, where);
      read(a, "beta", beta, where);
      read(a, "x0", x0, where);
      read(a, "x_max", x_max, where);
      read(a, "u_max", u_max, where);
      read(a, "budget", budget, where);
      AgentSpec spec = fleet_agent(id, k, x0, x_max, u_max, budget, cfg, Vector());
      spec.alpha = alpha;
      spec.beta = beta;
      agents.push_back(std::move(spec));
    }
    if (doc.contains("fleet") && doc["fleet"].contains("n_agents") &&
        cfg.n_agents != static_cast<int>(agents.size())) {
      throw std::invalid_argument("fleet.n_agents does not match the agents list");
    }
    cfg.n_agents = static_cast<int>(agents.size());
    cfg.agents = std::move(agents);
  }

  cfg.validate();
  return cfg;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  return parse_scenario(doc);
}

json scenario_to_json(const ScenarioConfig& cfg) {
  json doc;
  doc["grid"] = {{"horizon_k", cfg.grid.horizon_k}, {"period_minutes", cfg.grid.period_minutes}};
  json coupling = {{"mode", to_string(cfg.mode)},
                   {"eta", cfg.eta},
                   {"gamma", cfg.gamma},
                   {"potential", "ev-quadratic"}};
  if (cfg.price_offset) {
    coupling["c"] = std::vector<double>(cfg.price_offset->data(),
                                        cfg.price_offset->data() + cfg.price_offset->size());
  }
  doc["coupling"] = coupling;
  doc["fleet"] = {{"n_agents", cfg.n_agents},
                  {"seed", cfg.seed},
                  {"ranges",
                   {{"x_max", range_json(cfg.ranges.x_max)},
                    {"u_max", range_json(cfg.ranges.u_max)},
                    {"budget", range_json(cfg.ranges.budget)},
                    {"x0", range_json(cfg.ranges.x0)},
                    {"c", range_json(cfg.ranges.price_offset)}}}};
  doc["solver"] = {{"algorithm", to_string(cfg.algorithm)},
                   {"tol", cfg.tol},
                   {"max_iter", cfg.max_iter},
                   {"rho", cfg.admm_rho},
                   {"mann_beta0", cfg.mann_beta0},
                   {"mann_exponent", cfg.mann_exponent},
                   {"pd_beta", cfg.pd_beta}};
  doc["out_dir"] = cfg.out_dir;
  if (cfg.agents) {
    json list = json::array();
    for (const AgentSpec& a : *cfg.agents) {
      list.push_back({{"id", a.id},
                      {"alpha", a.alpha},
                      {"beta", a.beta},
                      {"x0", a.x0},
                      {"x_max", scalar_bound(a.x_max)},
                      {"u_max", scalar_bound(a.u_max)},
                      {"budget", a.budget}});
    }
    doc["agents"] = list;
  }
  return doc;
}

// Stream 0 of the seed prices the periods, stream 1 draws the agents, so the
// tariff does not depend on the population size and fleet N is a prefix of
// fleet N + 1.
Vector scenario_price_offset(const ScenarioConfig& config) {
  const int k = config.grid.horizon_k;
  if (config.price_offset) {
    require_size(*config.price_offset, k, "price offset");
    return *config.price_offset;
  }
  SeededUniform rng(substream_seed(config.seed, 0));
  Vector c(k);
  for (int t = 0; t < k; ++t) {
    c(t) = rng.draw(config.ranges.price_offset.lo, config.ranges.price_offset.hi);
  }
  return c;
}

ProblemInstance generate_fleet(const ScenarioConfig& config) {
  config.validate();
  const int k = config.grid.horizon_k;
  const Vector c = scenario_price_offset(config);

  ProblemInstance inst;
  inst.grid = config.grid;
  inst.coupling = CouplingSpec::ev_charging(k, config.eta, config.gamma);
  inst.coupling.mode = config.mode;
  inst.agents.reserve(static_cast<std::size_t>(config.n_agents));

  if (config.agents) {
    for (AgentSpec a : *config.agents) {
      a.cost_quad_u = config.eta;
      a.price_slope = config.gamma;
      a.price_offset = c;
      inst.agents.push_back(std::move(a));
    }
  } else {
    SeededUniform rng(substream_seed(config.seed, 1));
    const ParameterRanges& r = config.ranges;
    int rejections = 0;
    while (inst.n_agents() < config.n_agents) {
      const double x_max = rng.draw(r.x_max.lo, r.x_max.hi);
      const double u_max = rng.draw(r.u_max.lo, r.u_max.hi);
      const double budget = rng.draw(r.budget.lo, r.budget.hi);
      const double x0 = rng.draw(r.x0.lo, r.x0.hi);
      AgentSpec a = fleet_agent(inst.n_agents(), k, x0, x_max, u_max, budget, config, c);
      if (x0 + budget <= x_max && feasible_fill(a, config.grid)) {
        inst.agents.push_back(std::move(a));
        rejections = 0;
      } else if (++rejections >= 1000) {
        throw std::runtime_error("generate_fleet: 1000 consecutive infeasible draws");
      }
    }
  }

  const ValidationReport report = validate_instance(inst);
  if (!report.ok()) {
    std::ostringstream msg;
    msg << "generated instance is invalid: agent " << report.violations.front().agent_id
        << ": " << report.violations.front().message;
    throw std::invalid_argument(msg.str());
  }
  return inst;
}

}  // namespace mfg
