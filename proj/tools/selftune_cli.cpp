// Experiment runner: presets for the partition, switching and 50-node
// experiments plus custom scenarios from JSON.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "json_locate.hpp"
#include "selftune/selftune.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace selftune;

namespace {

constexpr int kConfigVersion = 1;

// Error with a JSON pointer; main() anchors it to a line of the config file.
struct PointerError : std::runtime_error {
  std::string pointer;
  PointerError(std::string ptr, const std::string& what) : std::runtime_error(what), pointer(std::move(ptr)) {}
};

// "/a/b: message" from scenario_from_json -> PointerError.
PointerError split_config_error(const ConfigError& e) {
  const std::string what = e.what();
  const auto colon = what.find(": ");
  if (!what.empty() && what[0] == '/' && colon != std::string::npos)
    return {what.substr(0, colon), what.substr(colon + 2)};
  return {"/", what};
}

struct ExperimentConfig {
  std::string preset;
  std::uint64_t seed = 1;
  std::size_t seeds = 1;
  std::size_t samples = 10000;
  std::size_t dwell = 25;
  std::optional<double> divergence_threshold;
  json scenario;  // custom only
  json policies;  // custom only
  std::size_t piece_budget = 1'000'000;
  bool prune_dominated = false;
  presets::NetworkOptions network;  // lqr50 only

  std::vector<std::uint64_t> seed_list() const {
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < seeds; ++i) out.push_back(seed + i);
    return out;
  }

  double threshold() const { return divergence_threshold.value_or(preset == "simple-example" ? 1e6 : 1e30); }

  json to_json() const {
    json j = {{"schema_version", kConfigVersion}, {"preset", preset}, {"seed", seed}, {"seeds", seeds}};
    if (preset == "partition") j["samples"] = samples;
    if (preset == "simple-example") j["dwell"] = dwell;
    if (preset != "partition") j["divergence_threshold"] = threshold();
    if (preset == "lqr50")
      j["network"] = {{"target_radius", network.target_radius}, {"edge_probability", network.edge_probability}};
    if (preset == "custom") {
      j["scenario"] = scenario;
      j["policies"] = policies;
      j["exact_dp"] = {{"piece_budget", piece_budget}, {"prune_dominated", prune_dominated}};
    }
    return j;
  }
};

std::uint64_t as_count(const json& j, const std::string& ptr) {
  if (!j.is_number_unsigned()) throw PointerError(ptr, "expected a non-negative integer");
  return j.get<std::uint64_t>();
}

ExperimentConfig config_from_json(const json& root) {
  // A manifest from an earlier run carries its effective config.
  const bool manifest = root.is_object() && root.contains("config");
  const json& j = manifest ? root["config"] : root;
  const std::string base = manifest ? "/config" : "";
  if (!j.is_object()) throw PointerError(base.empty() ? "/" : base, "config must be an object");

  static const std::vector<std::string> known{"schema_version", "preset",   "seed",     "seeds",   "samples",
                                               "dwell",          "scenario", "policies", "exact_dp", "divergence_threshold", "network"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw PointerError(base + "/" + key, "unknown field");
  if (j.contains("schema_version") && j["schema_version"] != kConfigVersion)
    throw PointerError(base + "/schema_version",
                       "unsupported schema version (expected " + std::to_string(kConfigVersion) + ")");

  ExperimentConfig c;
  if (j.contains("preset")) {
    if (!j["preset"].is_string()) throw PointerError(base + "/preset", "expected a string");
    c.preset = j["preset"];
  }
  if (j.contains("seed")) c.seed = as_count(j["seed"], base + "/seed");
  if (j.contains("seeds")) c.seeds = as_count(j["seeds"], base + "/seeds");
  if (j.contains("samples")) c.samples = as_count(j["samples"], base + "/samples");
  if (j.contains("dwell")) c.dwell = as_count(j["dwell"], base + "/dwell");
  if (j.contains("divergence_threshold")) {
    if (!j["divergence_threshold"].is_number()) throw PointerError(base + "/divergence_threshold", "expected a number");
    c.divergence_threshold = j["divergence_threshold"].get<double>();
  }
  if (j.contains("scenario")) c.scenario = j["scenario"];
  if (j.contains("policies")) c.policies = j["policies"];
  if (j.contains("exact_dp")) {
    const auto& d = j["exact_dp"];
    if (!d.is_object()) throw PointerError(base + "/exact_dp", "expected an object");
    if (d.contains("piece_budget")) c.piece_budget = as_count(d["piece_budget"], base + "/exact_dp/piece_budget");
    if (d.contains("prune_dominated")) {
      if (!d["prune_dominated"].is_boolean())
        throw PointerError(base + "/exact_dp/prune_dominated", "expected a boolean");
      c.prune_dominated = d["prune_dominated"];
    }
  }
  if (j.contains("network")) {
    const auto& d = j["network"];
    const std::string ptr = base + "/network";
    if (!d.is_object()) throw PointerError(ptr, "expected an object");
    for (const auto& [key, v] : d.items()) {
      if (key != "target_radius" && key != "edge_probability") throw PointerError(ptr + "/" + key, "unknown field");
      if (!v.is_number()) throw PointerError(ptr + "/" + key, "expected a number");
    }
    if (d.contains("target_radius")) c.network.target_radius = d["target_radius"].get<double>();
    if (d.contains("edge_probability")) c.network.edge_probability = d["edge_probability"].get<double>();
  }
  return c;
}

// Checks on the merged config (file fields plus flag overrides).
void validate(const ExperimentConfig& c) {
  static const std::vector<std::string> presets{"simple-example", "partition", "lqr50", "custom"};
  if (std::find(presets.begin(), presets.end(), c.preset) == presets.end())
    throw PointerError("/preset", "expected one of simple-example, partition, lqr50, custom");
  if (c.seeds == 0) throw PointerError("/seeds", "at least one seed is required");
  if (c.preset == "partition" && c.samples == 0) throw PointerError("/samples", "at least one sample is required");
  if (c.preset == "simple-example" && c.dwell == 0) throw PointerError("/dwell", "dwell must be positive");
  if (c.divergence_threshold && !(*c.divergence_threshold > 0))
    throw PointerError("/divergence_threshold", "must be positive");
  if (!(c.network.target_radius > 0)) throw PointerError("/network/target_radius", "must be positive");
  if (!(c.network.edge_probability >= 0 && c.network.edge_probability <= 1))
    throw PointerError("/network/edge_probability", "must lie in [0, 1]");
  if (c.preset == "custom") {
    if (c.scenario.is_null()) throw PointerError("/scenario", "custom preset needs a scenario");
    if (!c.policies.is_array() || c.policies.empty()) throw PointerError("/policies", "expected a non-empty array");
  }
}

// ---- policies from JSON ---------------------------------------------------

ActuatorSubset subset_from_json(const json& j, const std::string& ptr) {
  if (!j.is_array()) throw PointerError(ptr, "expected an array of 1-based actuator indices");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto v = as_count(j[i], ptr + "/" + std::to_string(i));
    if (v == 0) throw PointerError(ptr + "/" + std::to_string(i), "actuator indices start at 1");
    idx.push_back(v - 1);
  }
  try {
    return ActuatorSubset(idx);
  } catch (const std::exception& e) {
    throw PointerError(ptr, e.what());
  }
}

std::size_t mode_by_label(const Scenario& sc, const json& j, const std::string& ptr) {
  if (j.is_string())
    for (std::size_t i = 0; i < sc.modes.size(); ++i)
      if (sc.modes[i].label == j.get<std::string>()) return i;
  throw PointerError(ptr, "expected a mode label of the scenario");
}

PolicyKind policy_from_json(const json& j, const Scenario& sc, const ExperimentConfig& c, const std::string& ptr) {
  if (!j.is_object()) throw PointerError(ptr, "expected an object");
  if (!j.contains("type") || !j["type"].is_string()) throw PointerError(ptr + "/type", "missing policy type");
  const std::string type = j["type"];
  PolicyKind p;
  p.name = j.value("name", type);
  if (j.contains("reselect_period")) p.reselect_period = as_count(j["reselect_period"], ptr + "/reselect_period");
  if (type == "fixed") {
    if (!j.contains("subset")) throw PointerError(ptr + "/subset", "missing required field");
    FixedArchitectureLqr f{subset_from_json(j["subset"], ptr + "/subset"), std::nullopt};
    if (j.contains("nominal_mode")) f.nominal_mode = mode_by_label(sc, j["nominal_mode"], ptr + "/nominal_mode");
    p.variant = f;
  } else if (type == "greedy-known") {
    p.variant = GreedyKnownModel{};
  } else if (type == "greedy-self-tuning") {
    GreedySelfTuning g;
    if (j.contains("ridge")) {
      if (!j["ridge"].is_number() || j["ridge"].get<double>() < 0)
        throw PointerError(ptr + "/ridge", "expected a non-negative number");
      g.ridge = j["ridge"];
    }
    p.variant = g;
  } else if (type == "mode-aware-greedy") {
    ModeAwareGreedy m;
    if (j.contains("window")) m.window = as_count(j["window"], ptr + "/window");
    if (j.contains("initial_mode")) m.initial_mode = mode_by_label(sc, j["initial_mode"], ptr + "/initial_mode");
    p.variant = m;
  } else if (type == "exact-dp") {
    const DpOptions o{c.piece_budget, c.prune_dominated};
    try {
      p.variant = ExactDp{std::make_shared<const std::vector<PiecewiseQuadratic>>(backward_pieces(sc, o))};
    } catch (const CapacityError& e) {
      throw CapacityError(std::string(e.what()) +
                          "\nhint: shorten the horizon, lower the budget, set exact_dp.prune_dominated, or raise "
                          "exact_dp.piece_budget");
    } catch (const ArgumentError& e) {
      throw PointerError(ptr, e.what());
    }
  } else {
    throw PointerError(ptr + "/type",
                       "expected fixed, greedy-known, greedy-self-tuning, mode-aware-greedy or exact-dp");
  }
  try {
    check_policy(sc, p);
  } catch (const std::invalid_argument& e) {
    throw PointerError(ptr, e.what());
  }
  return p;
}

// ---- output ---------------------------------------------------------------

struct Writer {
  fs::path dir;
  std::vector<std::string> files;

  std::ofstream open(const std::string& name) {
    files.push_back(name);
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
    return os;
  }
};

std::string column_name(std::string s) {
  for (auto& ch : s)
    if (ch == ',' || ch == '"' || ch == '\n' || ch == '/') ch = '_';
  return s;
}

// Wide per-seed costs: seed, then <policy>_cost and <policy>_diverged per policy.
void write_costs(std::ostream& os, const std::vector<PolicyKind>& policies, const std::vector<std::uint64_t>& seeds,
                 const std::function<std::pair<double, bool>(std::size_t, std::size_t)>& result) {
  os << "seed";
  for (const auto& p : policies) os << ',' << column_name(p.name) << "_cost," << column_name(p.name) << "_diverged";
  os << '\n';
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    os << seeds[s];
    for (std::size_t p = 0; p < policies.size(); ++p) {
      const auto [cost, diverged] = result(p, s);
      os << ',' << format_double(cost) << ',' << (diverged ? 1 : 0);
    }
    os << '\n';
  }
}

// Wide per-step view of one seed: cumulative cost, |x| and subset per policy.
// Cells after a divergence are left empty.
void write_states(std::ostream& os, const Scenario& sc, const std::vector<PolicyKind>& policies,
                  const std::vector<const RolloutTrace*>& traces) {
  os << "t,mode";
  for (const auto& p : policies) {
    const auto n = column_name(p.name);
    os << ',' << n << "_cumulative_cost," << n << "_norm_x," << n << "_subset";
  }
  os << '\n';
  std::vector<double> cumulative(policies.size(), 0.0);
  for (std::size_t t = 0; t < sc.horizon; ++t) {
    os << t << ',' << sc.mode(t).label;
    for (std::size_t p = 0; p < policies.size(); ++p) {
      const auto& tr = *traces[p];
      if (t < tr.steps.size()) {
        cumulative[p] += tr.steps[t].stage_cost;
        os << ',' << format_double(cumulative[p]) << ',' << format_double(tr.steps[t].x.norm()) << ','
           << tr.steps[t].subset.label();
      } else {
        os << ",,,";
      }
    }
    os << '\n';
  }
}

void write_traces(Writer& w, const Scenario& sc, const std::vector<PolicyKind>& policies,
                  const std::vector<const RolloutTrace*>& traces) {
  {
    auto os = w.open("states.csv");
    write_states(os, sc, policies, traces);
  }
  for (std::size_t p = 0; p < policies.size(); ++p) {
    auto os = w.open("trace_" + column_name(policies[p].name) + ".csv");
    write_trace_csv(os, sc, *traces[p], true);
  }
}

// Every policy on every seed; per-step files show the first seed.
json run_comparison(Writer& w, const Scenario& sc, const std::vector<PolicyKind>& policies,
                    const std::vector<std::uint64_t>& seeds, double threshold, unsigned threads) {
  RolloutOptions opts;
  opts.divergence_threshold = threshold;
  const auto summary = compare(sc, policies, seeds, opts, threads);
  {
    auto os = w.open("costs.csv");
    write_costs(os, policies, seeds, [&](std::size_t p, std::size_t s) {
      const auto& r = summary.rows[p * seeds.size() + s];
      return std::pair{r.total_cost, r.diverged};
    });
  }
  // Rollouts are deterministic, so re-running the first seed reproduces it.
  std::vector<RolloutTrace> first;
  for (const auto& p : policies) first.push_back(rollout(sc, p, seeds.front(), opts));
  std::vector<const RolloutTrace*> ptrs;
  for (const auto& tr : first) ptrs.push_back(&tr);
  write_traces(w, sc, policies, ptrs);

  json j = compare_summary_json(summary);
  j["divergence_threshold"] = threshold;
  return j;
}

json run_partition(Writer& w, const ExperimentConfig& c) {
  const Scenario sc = presets::partition_system();
  const auto J = backward_pieces(sc);
  std::vector<std::size_t> times;
  for (std::size_t t = 0; t < sc.horizon; ++t) times.push_back(t);
  const auto pts = sample_partition(J, Eigen::Vector2d(-4, -4), Eigen::Vector2d(4, 4), c.samples, c.seed, times);
  {
    auto os = w.open("partition.csv");
    write_partition_csv(os, pts);
  }
  json counts = json::object();
  for (const auto& p : pts) {
    auto& slot = counts[std::to_string(p.t)][p.subset.label()];
    slot = slot.is_null() ? 1 : slot.get<int>() + 1;
  }
  return {{"points", pts.size()}, {"label_counts", counts}, {"pieces_at_t0", J[0].pieces.size()}};
}

json run_simple(Writer& w, const ExperimentConfig& c, unsigned threads) {
  presets::SwitchingOptions o;
  o.dwell = c.dwell;
  const Scenario sc = presets::switching_example(o);
  const std::vector<PolicyKind> policies{{"fixed-b1", FixedArchitectureLqr{ActuatorSubset{0}, std::nullopt}},
                                         {"mode-aware-greedy", ModeAwareGreedy{}}};
  return run_comparison(w, sc, policies, c.seed_list(), c.threshold(), threads);
}

json run_lqr50(Writer& w, const ExperimentConfig& c, unsigned threads) {
  const std::vector<PolicyKind> policies{{"fixed-e1e2", FixedArchitectureLqr{ActuatorSubset{0, 1}, std::nullopt}},
                                         {"greedy", GreedyKnownModel{}}};
  RolloutOptions opts;
  opts.divergence_threshold = c.threshold();
  const auto seeds = c.seed_list();
  // One instance per seed; its rollouts reuse the instance seed.
  std::vector<std::vector<RolloutTrace>> traces(policies.size());
  json instances = json::array();
  std::vector<double> ratios;
  for (auto seed : seeds) {
    const Scenario sc = presets::random_network(seed, c.network);
    std::vector<RolloutTrace> pair(policies.size());
    std::vector<std::exception_ptr> errors(policies.size());
    {
      std::vector<std::jthread> pool;
      for (std::size_t p = 0; p < policies.size(); ++p) {
        auto job = [&, p] {
          try {
            pair[p] = rollout(sc, policies[p], seed, opts);
          } catch (...) {
            errors[p] = std::current_exception();
          }
        };
        if (threads > 1) pool.emplace_back(job);
        else job();
      }
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
    const double ratio = pair[0].diverged ? std::numeric_limits<double>::infinity()
                                          : cost_ratio(pair[0].total_cost, pair[1].total_cost);
    ratios.push_back(ratio);
    instances.push_back({{"seed", seed},
                         {"fixed_cost", detail::json_number(pair[0].total_cost)},
                         {"fixed_diverged", pair[0].diverged},
                         {"greedy_cost", detail::json_number(pair[1].total_cost)},
                         {"greedy_diverged", pair[1].diverged},
                         {"cost_ratio", detail::json_number(ratio)}});
    for (std::size_t p = 0; p < policies.size(); ++p) traces[p].push_back(std::move(pair[p]));
  }
  {
    auto os = w.open("costs.csv");
    write_costs(os, policies, seeds, [&](std::size_t p, std::size_t s) {
      return std::pair{traces[p][s].total_cost, traces[p][s].diverged};
    });
  }
  write_traces(w, presets::random_network(seeds.front(), c.network), policies, {&traces[0].front(), &traces[1].front()});
  return {{"cost_ratio", detail::json_number(median(ratios))},
          {"cost_ratio_definition", "median over instances of fixed-e1e2 cost / greedy cost; inf if fixed diverged"},
          {"instances", instances},
          {"divergence_threshold", c.threshold()}};
}

json run_custom(Writer& w, const ExperimentConfig& c, unsigned threads) {
  const Scenario sc = scenario_from_json(c.scenario, "/scenario");
  std::vector<PolicyKind> policies;
  for (std::size_t i = 0; i < c.policies.size(); ++i)
    policies.push_back(policy_from_json(c.policies[i], sc, c, "/policies/" + std::to_string(i)));
  return run_comparison(w, sc, policies, c.seed_list(), c.threshold(), threads);
}

void write_json(Writer& w, const std::string& name, const json& j) {
  auto os = w.open(name);
  os << j.dump(2) << '\n';
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-tuning actuator architecture experiments"};
  app.set_version_flag("--version", std::string(kVersion));
  std::optional<std::string> preset, config_path, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> seeds, samples, dwell;
  unsigned threads = 1;
  app.add_option("--preset", preset, "simple-example, partition, lqr50 or custom")
      ->check(CLI::IsMember({"simple-example", "partition", "lqr50", "custom"}));
  app.add_option("--config", config_path, "experiment config or manifest (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "first seed (partition: sampling seed; lqr50: first instance)");
  app.add_option("--seeds", seeds, "number of consecutive seeds")->check(CLI::PositiveNumber);
  app.add_option("--samples", samples, "partition sample count")->check(CLI::PositiveNumber);
  app.add_option("--dwell", dwell, "simple-example dwell time per mode")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "output directory (default $SELFTUNE_OUT, else ./out)");
  app.add_option("--threads", threads, "worker threads for rollouts")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  std::string text;
  // "<file>:<line>:<col>: <pointer>: <message>" for config problems.
  auto report = [&](std::string ptr, const std::string& what) {
    std::string where = "<flags>";
    if (config_path) {
      // Pointers are relative to the config object, which a manifest nests.
      const json root = json::parse(text, nullptr, false);
      if (root.is_object() && root.contains("config") && ptr.rfind("/config", 0) != 0)
        ptr = "/config" + (ptr == "/" ? std::string() : ptr);
      const auto pos = cli::locate_pointer(text, ptr);
      where = *config_path + ':' + std::to_string(pos.line) + ':' + std::to_string(pos.column);
    }
    std::cerr << where << ": " << ptr << ": " << what << '\n';
    return 2;
  };

  try {
    ExperimentConfig cfg;
    if (config_path) {
      text = read_file(*config_path);
      json root;
      try {
        root = json::parse(text);
      } catch (const json::parse_error& e) {
        const auto pos = cli::position_of(text, e.byte > 0 ? e.byte - 1 : 0);
        std::string msg = e.what();
        if (auto k = msg.find(": "); k != std::string::npos) msg = msg.substr(k + 2);
        std::cerr << *config_path << ':' << pos.line << ':' << pos.column << ": " << msg << '\n';
        return 2;
      }
      cfg = config_from_json(root);
    }
    if (preset) cfg.preset = *preset;
    if (seed) cfg.seed = *seed;
    if (seeds) cfg.seeds = *seeds;
    if (samples) cfg.samples = *samples;
    if (dwell) cfg.dwell = *dwell;
    if (cfg.preset.empty()) {
      std::cerr << "error: give --preset or --config\n";
      return 2;
    }
    validate(cfg);

    const char* env_out = std::getenv("SELFTUNE_OUT");
    Writer w{out ? fs::path(*out) : fs::path(env_out && *env_out ? env_out : "out"), {}};
    fs::create_directories(w.dir);

    json summary;
    if (cfg.preset == "partition") summary = run_partition(w, cfg);
    else if (cfg.preset == "simple-example") summary = run_simple(w, cfg, threads);
    else if (cfg.preset == "lqr50") summary = run_lqr50(w, cfg, threads);
    else summary = run_custom(w, cfg, threads);
    write_json(w, "summary.json", summary);

    std::vector<std::string> artifacts = w.files;
    artifacts.push_back("manifest.json");
    write_json(w, "manifest.json",
               {{"toolkit", "selftune"},
                {"version", kVersion},
                {"config", cfg.to_json()},
                {"seeds", cfg.seed_list()},
                {"artifacts", artifacts}});
    std::cout << "wrote " << artifacts.size() << " files to " << w.dir.string() << '\n';
    return 0;
  } catch (const PointerError& e) {
    return report(e.pointer, e.what());
  } catch (const ConfigError& e) {
    const auto pe = split_config_error(e);
    return report(pe.pointer, pe.what());
  } catch (const CapacityError& e) {
    std::cerr << "capacity error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
