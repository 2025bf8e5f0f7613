#pragma once

// Seeded closed-loop rollouts of architecture-policies and multi-seed
// comparisons.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "json.hpp"

#include "selftune/errors.hpp"
#include "selftune/exact_dp.hpp"
#include "selftune/format.hpp"
#include "selftune/greedy.hpp"
#include "selftune/linalg.hpp"
#include "selftune/model.hpp"
#include "selftune/random.hpp"
#include "selftune/sysid.hpp"

namespace selftune {

/// LQR on a fixed subset, designed once against a nominal mode.
struct FixedArchitectureLqr {
  ActuatorSubset subset;
  std::optional<std::size_t> nominal_mode;  // defaults to modes[0]
};

/// Greedy selection against the true active mode.
struct GreedyKnownModel {};

/// Greedy selection against a least-squares estimate refit every step.
struct GreedySelfTuning {
  double ridge = 1e-8;
  std::optional<MatrixXd> initial_guess;  // used before any data; zero otherwise
};

/// Exact DP policy from precomputed value functions (single-mode scenarios).
struct ExactDp {
  std::shared_ptr<const std::vector<PiecewiseQuadratic>> pieces;
};

/// Greedy selection against the mode picked by residual-based detection.
struct ModeAwareGreedy {
  std::size_t window = 5;
  std::size_t initial_mode = 0;  // assumed before the first transition
};

using PolicyVariant =
    std::variant<FixedArchitectureLqr, GreedyKnownModel, GreedySelfTuning, ExactDp, ModeAwareGreedy>;

struct PolicyKind {
  std::string name;
  PolicyVariant variant;
  /// Greedy variants re-run subset selection every `reselect_period` steps
  /// and only refresh the gain in between.
  std::size_t reselect_period = 1;
};

struct RolloutOptions {
  DareOptions dare;
  /// Rollout stops with the divergence flag once |x| exceeds this.
  double divergence_threshold = 1e30;
};

struct TraceStep {
  std::size_t t = 0;
  std::size_t mode = 0;
  VectorXd x;
  ActuatorSubset subset;
  VectorXd u;
  double stage_cost = 0.0;
};

struct RolloutTrace {
  std::vector<TraceStep> steps;
  VectorXd final_state;
  double terminal_cost = 0.0;
  /// Sum of stage costs in step order plus terminal cost; +inf on divergence.
  double total_cost = 0.0;
  bool diverged = false;
  double max_state_norm = 0.0;
};

/// Throws if the policy's parameters do not fit the scenario.
inline void check_policy(const Scenario& sc, const PolicyKind& policy) {
  if (policy.reselect_period == 0) throw ArgumentError("policy '" + policy.name + "': reselect period must be positive");
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, FixedArchitectureLqr>) {
          for (auto i : p.subset.indices())
            if (i >= sc.library.size())
              throw DimensionError("policy '" + policy.name + "': actuator " + std::to_string(i + 1) +
                                   " is not in the library");
          if (p.nominal_mode && *p.nominal_mode >= sc.modes.size())
            throw ArgumentError("policy '" + policy.name + "': nominal mode out of range");
        } else if constexpr (std::is_same_v<P, GreedySelfTuning>) {
          if (p.initial_guess) detail::require_square(*p.initial_guess, sc.dim(), "initial A guess");
        } else if constexpr (std::is_same_v<P, ExactDp>) {
          if (!p.pieces || p.pieces->size() != sc.horizon + 1)
            throw ArgumentError("policy '" + policy.name + "': value functions do not cover the horizon");
          if (p.pieces->front().dim() != sc.dim())
            throw DimensionError("policy '" + policy.name + "': value functions have wrong dimension");
        } else if constexpr (std::is_same_v<P, ModeAwareGreedy>) {
          if (p.window == 0) throw ArgumentError("policy '" + policy.name + "': window must be positive");
          if (p.initial_mode >= sc.modes.size())
            throw ArgumentError("policy '" + policy.name + "': initial mode out of range");
        }
      },
      policy.variant);
}

namespace detail {

struct Decision {
  ActuatorSubset subset;
  VectorXd u;
};

// Gain for the fixed architecture: DARE against the nominal mode, or the
// finite-horizon Riccati gain from the last iterate below the divergence
// guard when the pair cannot be stabilized.
inline MatrixXd fixed_architecture_gain(const Scenario& sc, const FixedArchitectureLqr& p,
                                        const DareOptions& opts) {
  const MatrixXd& A = sc.modes[p.nominal_mode.value_or(0)].A;
  const MatrixXd B = build_input_matrix(sc.library, p.subset);
  const MatrixXd R = sc.cost.input_weight(p.subset.size());
  const auto sol = solve_dare(A, B, sc.cost.Q, R, opts);
  if (sol.converged) return lqr_gain(sol.P, A, B, R);
  MatrixXd P = sc.cost.Q;
  for (std::size_t k = 0; k < std::max<std::size_t>(sc.horizon, 1); ++k) {
    MatrixXd next = riccati_step(P, A, B, sc.cost.Q, R);
    if (!next.allFinite() || next.norm() > opts.divergence_threshold) break;
    P = std::move(next);
  }
  return lqr_gain(P, A, B, R);
}

class Controller {
 public:
  Controller(const Scenario& sc, const PolicyKind& policy, const RolloutOptions& opts)
      : sc_(sc), policy_(policy), opts_(opts) {
    if (auto* f = std::get_if<FixedArchitectureLqr>(&policy.variant))
      fixed_gain_ = fixed_architecture_gain(sc, *f, opts.dare);
  }

  Decision decide(std::size_t t, const VectorXd& x, const History& hist) {
    return std::visit([&](const auto& p) { return decide(p, t, x, hist); }, policy_.variant);
  }

 private:
  Decision decide(const FixedArchitectureLqr& p, std::size_t, const VectorXd& x, const History&) {
    return {p.subset, fixed_gain_ * x};
  }

  Decision decide(const GreedyKnownModel&, std::size_t t, const VectorXd& x, const History&) {
    const std::size_t m = mode_at(sc_.schedule, t);
    return greedy_step(t, x, sc_.modes[m].A, &caches_[m]);
  }

  Decision decide(const GreedySelfTuning& p, std::size_t t, const VectorXd& x, const History& hist) {
    MatrixXd A_hat;
    if (hist.transitions() > 0)
      A_hat = fit_dynamics(hist, p.ridge).A_hat;
    else
      A_hat = p.initial_guess.value_or(MatrixXd::Zero(sc_.dim(), sc_.dim()));
    return greedy_step(t, x, A_hat, &caches_[std::numeric_limits<std::size_t>::max()]);
  }

  Decision decide(const ExactDp& p, std::size_t t, const VectorXd& x, const History&) {
    auto d = dp_decide(*p.pieces, t, x, sc_.mode(t).A, sc_.library, sc_.cost);
    return {std::move(d.subset), std::move(d.u)};
  }

  Decision decide(const ModeAwareGreedy& p, std::size_t t, const VectorXd& x, const History& hist) {
    const std::size_t m = hist.transitions() > 0 ? detect_mode(hist, sc_.modes, p.window) : p.initial_mode;
    return greedy_step(t, x, sc_.modes[m].A, &caches_[m]);
  }

  Decision greedy_step(std::size_t t, const VectorXd& x, const MatrixXd& A, DareCache* cache) {
    const bool reselect = !state_ || t % policy_.reselect_period == 0;
    if (reselect) {
      try {
        state_ = greedy_select(x, A, sc_.library, sc_.budget, sc_.cost.Q, sc_.cost.r_unit, opts_.dare, cache);
      } catch (const UnstabilizableError&) {
        // Keep acting on the last architecture when the current model admits
        // no stabilizing subset.
        if (!state_) throw;
      }
    } else {
      const auto& sol = cache->get(A, sc_.cost.Q, sc_.cost.r_unit, sc_.library, state_->subset, opts_.dare);
      if (sol.converged) {
        const MatrixXd B = build_input_matrix(sc_.library, state_->subset);
        state_->A_hat = A;
        state_->P = sol.P;
        state_->gain = lqr_gain(sol.P, A, B, sc_.cost.input_weight(state_->subset.size()));
      }
    }
    return {state_->subset, greedy_input(*state_, x)};
  }

  const Scenario& sc_;
  const PolicyKind& policy_;
  RolloutOptions opts_;
  MatrixXd fixed_gain_;
  std::optional<GreedyPolicyState> state_;
  std::map<std::size_t, DareCache> caches_;
};

}  // namespace detail

/// Closed-loop simulation of x(t+1) = A_mode(t) x + B^S u + w over the
/// scenario horizon. The random stream is consumed identically for every
/// policy: x(0) first (when Gaussian), then N standard normals per step.
inline RolloutTrace rollout(const Scenario& sc, const PolicyKind& policy, std::uint64_t seed,
                            const RolloutOptions& opts = {}) {
  sc.validate();
  check_policy(sc, policy);
  const Eigen::Index n = sc.dim();

  std::vector<MatrixXd> noise_factor;
  for (const auto& m : sc.modes) noise_factor.push_back(cholesky_psd(m.W));

  Rng rng(seed);
  VectorXd x = sc.initial.mean;
  if (sc.initial.covariance) x += cholesky_psd(*sc.initial.covariance) * rng.normal_vector(n);

  detail::Controller controller(sc, policy, opts);
  History hist(x);
  RolloutTrace tr;
  tr.steps.reserve(sc.horizon);
  double total = 0.0;

  auto exceeded = [&](const VectorXd& v) {
    const double nv = v.norm();
    tr.max_state_norm = std::max(tr.max_state_norm, std::isfinite(nv) ? nv : std::numeric_limits<double>::infinity());
    return !std::isfinite(nv) || nv > opts.divergence_threshold;
  };

  for (std::size_t t = 0; t < sc.horizon; ++t) {
    if (exceeded(x)) {
      tr.diverged = true;
      break;
    }
    const std::size_t m = mode_at(sc.schedule, t);
    auto d = controller.decide(t, x, hist);
    const MatrixXd B = build_input_matrix(sc.library, d.subset);
    const MatrixXd R = sc.cost.input_weight(d.subset.size());
    const double stage = x.dot(sc.cost.state_weight(t) * x) + d.u.dot(R * d.u);
    VectorXd next = sc.modes[m].A * x + B * d.u + noise_factor[m] * rng.normal_vector(n);
    total += stage;
    hist.append(B, d.u, next);
    tr.steps.push_back({t, m, x, std::move(d.subset), std::move(d.u), stage});
    x = std::move(next);
  }
  if (!tr.diverged && exceeded(x)) tr.diverged = true;

  tr.final_state = x;
  if (tr.diverged) {
    tr.terminal_cost = std::numeric_limits<double>::infinity();
    tr.total_cost = std::numeric_limits<double>::infinity();
  } else {
    tr.terminal_cost = x.dot(sc.cost.Q_terminal * x);
    tr.total_cost = total + tr.terminal_cost;
  }
  return tr;
}

/// CSV with header `t,mode,subset,stage_cost,norm_x`, optionally followed by
/// the state columns x1..xN.
inline void write_trace_csv(std::ostream& os, const Scenario& sc, const RolloutTrace& tr,
                            bool include_states = false) {
  const Eigen::Index n = sc.dim();
  os << "t,mode,subset,stage_cost,norm_x";
  if (include_states)
    for (Eigen::Index i = 0; i < n; ++i) os << ",x" << (i + 1);
  os << '\n';
  for (const auto& s : tr.steps) {
    os << s.t << ',' << sc.modes[s.mode].label << ',' << s.subset.label() << ',' << format_double(s.stage_cost)
       << ',' << format_double(s.x.norm());
    if (include_states)
      for (Eigen::Index i = 0; i < n; ++i) os << ',' << format_double(s.x(i));
    os << '\n';
  }
}

struct CompareRow {
  std::size_t policy = 0;
  std::uint64_t seed = 0;
  double total_cost = 0.0;
  bool diverged = false;
  double max_state_norm = 0.0;
  /// total_cost / first policy's total_cost on the same seed.
  double ratio = 1.0;
};

struct PolicyAggregate {
  std::string name;
  double median_cost = 0.0;
  double median_ratio = 1.0;
  std::size_t diverged_runs = 0;
};

struct CompareSummary {
  std::vector<CompareRow> rows;  // policy-major, seeds in the given order
  std::vector<PolicyAggregate> policies;
};

/// Median with NaN entries ignored; NaN if nothing remains.
inline double median(std::vector<double> v) {
  std::erase_if(v, [](double d) { return std::isnan(d); });
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

inline double cost_ratio(double cost, double reference) {
  if (std::isinf(cost) && std::isinf(reference)) return std::numeric_limits<double>::quiet_NaN();
  return cost / reference;
}

/// Every (policy, seed) rollout, run on up to `threads` worker threads.
/// Results do not depend on the thread count.
inline CompareSummary compare(const Scenario& sc, const std::vector<PolicyKind>& policies,
                              const std::vector<std::uint64_t>& seeds, const RolloutOptions& opts = {},
                              unsigned threads = 1) {
  if (policies.empty() || seeds.empty()) throw ArgumentError("compare needs at least one policy and one seed");
  sc.validate();
  for (const auto& p : policies) check_policy(sc, p);

  const std::size_t jobs = policies.size() * seeds.size();
  std::vector<RolloutTrace> traces(jobs);
  std::size_t next_job = 0;
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&] {
    while (true) {
      std::size_t j;
      {
        std::lock_guard lock(mu);
        if (next_job >= jobs || failure) return;
        j = next_job++;
      }
      try {
        traces[j] = rollout(sc, policies[j / seeds.size()], seeds[j % seeds.size()], opts);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(jobs)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < workers; ++i) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  CompareSummary out;
  for (std::size_t p = 0; p < policies.size(); ++p) {
    PolicyAggregate agg{policies[p].name};
    std::vector<double> costs, ratios;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const auto& tr = traces[p * seeds.size() + s];
      const double ref = traces[s].total_cost;
      CompareRow row{p, seeds[s], tr.total_cost, tr.diverged, tr.max_state_norm, cost_ratio(tr.total_cost, ref)};
      costs.push_back(row.total_cost);
      ratios.push_back(row.ratio);
      agg.diverged_runs += tr.diverged ? 1 : 0;
      out.rows.push_back(row);
    }
    agg.median_cost = median(costs);
    agg.median_ratio = median(ratios);
    out.policies.push_back(std::move(agg));
  }
  return out;
}

namespace detail {
inline nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}
}  // namespace detail

inline nlohmann::json compare_summary_json(const CompareSummary& s) {
  nlohmann::json policies = nlohmann::json::array();
  for (const auto& p : s.policies)
    policies.push_back({{"name", p.name},
                        {"median_cost", detail::json_number(p.median_cost)},
                        {"median_ratio_vs_first", detail::json_number(p.median_ratio)},
                        {"diverged_runs", p.diverged_runs}});
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : s.rows)
    rows.push_back({{"policy", s.policies[r.policy].name},
                    {"seed", r.seed},
                    {"total_cost", detail::json_number(r.total_cost)},
                    {"diverged", r.diverged},
                    {"max_state_norm", detail::json_number(r.max_state_norm)},
                    {"ratio_vs_first", detail::json_number(r.ratio)}});
  return {{"policies", std::move(policies)}, {"runs", std::move(rows)}};
}

}  // namespace selftune
