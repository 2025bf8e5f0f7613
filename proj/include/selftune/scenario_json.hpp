#pragma once

// Scenario <-> JSON. Matrices are row-major nested arrays, actuator columns
// are listed one array per column, and the schedule refers to modes by label.
// The schema is described in docs/scenario-schema.md.

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

#include "selftune/errors.hpp"
#include "selftune/model.hpp"

namespace selftune {

inline constexpr int kScenarioSchemaVersion = 1;

namespace detail {

using nlohmann::json;

[[noreturn]] inline void config_fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

inline const json& field(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) config_fail(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) config_fail(path + "/" + key, "missing required field");
  return *it;
}

inline double to_double(const json& j, const std::string& path) {
  if (!j.is_number()) config_fail(path, "expected a number");
  return j.get<double>();
}

inline std::size_t to_count(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0) config_fail(path, "expected a non-negative integer");
  return j.get<std::size_t>();
}

inline VectorXd vector_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) config_fail(path, "expected an array of numbers");
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = to_double(j[i], path + "/" + std::to_string(i));
  return v;
}

inline MatrixXd matrix_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) config_fail(path, "expected a non-empty array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::string rp = path + "/" + std::to_string(r);
    if (!j[r].is_array() || j[r].size() != cols) config_fail(rp, "rows must all have " + std::to_string(cols) + " entries");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = to_double(j[r][c], rp + "/" + std::to_string(c));
  }
  return m;
}

inline json to_json(const VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline json to_json(const MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(to_json(VectorXd(m.row(r).transpose())));
  return out;
}

inline std::size_t mode_index(const std::vector<DynamicsMode>& modes, const json& j, const std::string& path) {
  if (!j.is_string()) config_fail(path, "expected a mode label");
  for (std::size_t i = 0; i < modes.size(); ++i)
    if (modes[i].label == j.get<std::string>()) return i;
  config_fail(path, "unknown mode label '" + j.get<std::string>() + "'");
}

}  // namespace detail

inline nlohmann::json scenario_to_json(const Scenario& sc) {
  using detail::to_json;
  nlohmann::json modes = nlohmann::json::array();
  for (const auto& m : sc.modes) modes.push_back({{"label", m.label}, {"A", to_json(m.A)}, {"W", to_json(m.W)}});

  nlohmann::json schedule;
  if (const auto* p = std::get_if<PeriodicSchedule>(&sc.schedule)) {
    std::vector<std::string> order;
    for (auto i : p->order) order.push_back(sc.modes.at(i).label);
    schedule = {{"type", "periodic"}, {"dwell", p->dwell}, {"order", order}};
  } else {
    std::vector<std::string> labels;
    for (auto i : std::get<ExplicitSchedule>(sc.schedule).modes) labels.push_back(sc.modes.at(i).label);
    schedule = {{"type", "explicit"}, {"modes", labels}};
  }

  nlohmann::json library = nlohmann::json::array();
  for (const auto& c : sc.library.columns()) library.push_back(to_json(c));

  nlohmann::json cost = {{"Q", to_json(sc.cost.Q)}, {"r_unit", sc.cost.r_unit}, {"Q_terminal", to_json(sc.cost.Q_terminal)}};
  if (!sc.cost.stage_Q.empty()) {
    nlohmann::json stage = nlohmann::json::array();
    for (const auto& q : sc.cost.stage_Q) stage.push_back(to_json(q));
    cost["stage_Q"] = std::move(stage);
  }

  nlohmann::json initial = {{"mean", to_json(sc.initial.mean)}};
  if (sc.initial.covariance) initial["covariance"] = to_json(*sc.initial.covariance);

  return {{"schema_version", kScenarioSchemaVersion},
          {"modes", std::move(modes)},
          {"schedule", std::move(schedule)},
          {"library", std::move(library)},
          {"cost", std::move(cost)},
          {"budget", sc.budget},
          {"horizon", sc.horizon},
          {"initial_state", std::move(initial)},
          {"seed", sc.seed}};
}

/// Parses and validates a scenario. `path` prefixes error locations (JSON
/// pointer syntax).
inline Scenario scenario_from_json(const nlohmann::json& j, const std::string& path = "") {
  using namespace detail;
  if (!j.is_object()) config_fail(path.empty() ? "/" : path, "scenario must be an object");
  if (auto it = j.find("schema_version"); it != j.end() && (!it->is_number_integer() || it->get<int>() != kScenarioSchemaVersion))
    config_fail(path + "/schema_version", "unsupported schema version (expected " + std::to_string(kScenarioSchemaVersion) + ")");

  Scenario sc;
  const auto& modes = field(j, "modes", path);
  if (!modes.is_array() || modes.empty()) config_fail(path + "/modes", "expected a non-empty array");
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const std::string mp = path + "/modes/" + std::to_string(i);
    const auto& label = field(modes[i], "label", mp);
    if (!label.is_string()) config_fail(mp + "/label", "expected a string");
    for (const auto& m : sc.modes)
      if (m.label == label.get<std::string>()) config_fail(mp + "/label", "duplicate mode label");
    try {
      sc.modes.emplace_back(label.get<std::string>(), matrix_from_json(field(modes[i], "A", mp), mp + "/A"),
                            matrix_from_json(field(modes[i], "W", mp), mp + "/W"));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      config_fail(mp, e.what());
    }
  }

  const std::string sp = path + "/schedule";
  const auto& sched = field(j, "schedule", path);
  const auto& type = field(sched, "type", sp);
  if (type == "periodic") {
    PeriodicSchedule p;
    p.dwell = to_count(field(sched, "dwell", sp), sp + "/dwell");
    const auto& order = field(sched, "order", sp);
    if (!order.is_array() || order.empty()) config_fail(sp + "/order", "expected a non-empty array of mode labels");
    for (std::size_t i = 0; i < order.size(); ++i) p.order.push_back(mode_index(sc.modes, order[i], sp + "/order/" + std::to_string(i)));
    sc.schedule = std::move(p);
  } else if (type == "explicit") {
    ExplicitSchedule e;
    const auto& list = field(sched, "modes", sp);
    if (!list.is_array()) config_fail(sp + "/modes", "expected an array of mode labels");
    for (std::size_t i = 0; i < list.size(); ++i) e.modes.push_back(mode_index(sc.modes, list[i], sp + "/modes/" + std::to_string(i)));
    sc.schedule = std::move(e);
  } else {
    config_fail(sp + "/type", "expected \"periodic\" or \"explicit\"");
  }

  const auto& lib = field(j, "library", path);
  if (!lib.is_array() || lib.empty()) config_fail(path + "/library", "expected a non-empty array of columns");
  std::vector<VectorXd> cols;
  for (std::size_t i = 0; i < lib.size(); ++i) cols.push_back(vector_from_json(lib[i], path + "/library/" + std::to_string(i)));
  try {
    sc.library = ActuatorLibrary(std::move(cols));
  } catch (const std::exception& e) {
    config_fail(path + "/library", e.what());
  }

  const std::string cp = path + "/cost";
  const auto& cost = field(j, "cost", path);
  sc.cost.Q = matrix_from_json(field(cost, "Q", cp), cp + "/Q");
  sc.cost.r_unit = to_double(field(cost, "r_unit", cp), cp + "/r_unit");
  sc.cost.Q_terminal = cost.contains("Q_terminal") ? matrix_from_json(cost["Q_terminal"], cp + "/Q_terminal") : sc.cost.Q;
  if (cost.contains("stage_Q")) {
    const auto& stage = cost["stage_Q"];
    if (!stage.is_array()) config_fail(cp + "/stage_Q", "expected an array of matrices");
    for (std::size_t i = 0; i < stage.size(); ++i)
      sc.cost.stage_Q.push_back(matrix_from_json(stage[i], cp + "/stage_Q/" + std::to_string(i)));
  }

  sc.budget = to_count(field(j, "budget", path), path + "/budget");
  sc.horizon = to_count(field(j, "horizon", path), path + "/horizon");
  const std::string ip = path + "/initial_state";
  const auto& init = field(j, "initial_state", path);
  sc.initial.mean = vector_from_json(field(init, "mean", ip), ip + "/mean");
  if (init.contains("covariance")) sc.initial.covariance = matrix_from_json(init["covariance"], ip + "/covariance");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) config_fail(path + "/seed", "expected a non-negative integer");
    sc.seed = j["seed"].get<std::uint64_t>();
  }

  try {
    sc.validate();
  } catch (const std::exception& e) {
    config_fail(path.empty() ? "/" : path, e.what());
  }
  return sc;
}

}  // namespace selftune
