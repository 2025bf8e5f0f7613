#pragma once

// Greedy self-tuning architecture-policy: grow an actuator subset one column
// at a time, scoring each candidate by the infinite-horizon LQR cost x'P_s x
// at the current state, then apply the LQR gain of the final subset.

#include <cstddef>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "selftune/errors.hpp"
#include "selftune/format.hpp"
#include "selftune/linalg.hpp"
#include "selftune/model.hpp"

namespace selftune {

/// Memo of DARE solutions keyed by subset, valid for one (A, Q, r_unit).
/// Any call with a different model clears it.
class DareCache {
 public:
  const RiccatiSolution& get(const MatrixXd& A, const MatrixXd& Q, double r_unit,
                             const ActuatorLibrary& library, const ActuatorSubset& subset,
                             const DareOptions& opts) {
    if (!same_model(A, Q, r_unit)) {
      entries_.clear();
      A_ = A;
      Q_ = Q;
      r_unit_ = r_unit;
    }
    auto it = entries_.find(subset);
    if (it != entries_.end()) return it->second;
    const MatrixXd B = build_input_matrix(library, subset);
    const MatrixXd R = r_unit * MatrixXd::Identity(B.cols(), B.cols());
    return entries_.emplace(subset, solve_dare(A, B, Q, R, opts)).first->second;
  }

  std::size_t size() const { return entries_.size(); }

 private:
  bool same_model(const MatrixXd& A, const MatrixXd& Q, double r_unit) const {
    return r_unit == r_unit_ && A.rows() == A_.rows() && A.cols() == A_.cols() && A == A_ &&
           Q.rows() == Q_.rows() && Q == Q_;
  }

  MatrixXd A_, Q_;
  double r_unit_ = 0.0;
  std::map<ActuatorSubset, RiccatiSolution> entries_;
};

/// Candidate scores of one greedy round, indexed by library column.
/// Already-selected columns hold NaN, divergent candidates +inf.
struct GreedyRound {
  std::vector<double> scores;
  std::size_t chosen = 0;
};

struct GreedyPolicyState {
  MatrixXd A_hat;
  ActuatorSubset subset;
  std::vector<std::size_t> selection_order;
  MatrixXd P;
  /// |subset| x N, rows follow the subset's ascending index order.
  MatrixXd gain;
  std::vector<GreedyRound> rounds;
};

inline GreedyPolicyState greedy_select(const VectorXd& x, const MatrixXd& A_hat,
                                       const ActuatorLibrary& library, std::size_t K,
                                       const MatrixXd& Q, double r_unit,
                                       const DareOptions& opts = {}, DareCache* cache = nullptr) {
  const Eigen::Index n = A_hat.rows();
  detail::require_square(A_hat, n, "A_hat");
  detail::require_square(Q, n, "Q");
  if (x.size() != n) throw DimensionError("state dimension does not match A_hat");
  if (library.dim() != n) throw DimensionError("library dimension does not match A_hat");
  if (K > library.size()) throw ArgumentError("budget K exceeds library size");

  DareCache local;
  DareCache& memo = cache ? *cache : local;
  constexpr double inf = std::numeric_limits<double>::infinity();

  GreedyPolicyState st;
  st.A_hat = A_hat;
  const RiccatiSolution* final_sol = nullptr;

  if (K == 0) {
    final_sol = &memo.get(A_hat, Q, r_unit, library, st.subset, opts);
    if (!final_sol->converged) throw UnstabilizableError("A_hat is not stable and the actuator budget is zero");
  }

  while (st.subset.size() < K) {
    GreedyRound round;
    round.scores.assign(library.size(), std::numeric_limits<double>::quiet_NaN());
    double best = inf;
    std::size_t best_idx = library.size();
    const RiccatiSolution* best_sol = nullptr;
    for (std::size_t s = 0; s < library.size(); ++s) {
      if (st.subset.contains(s)) continue;
      const auto& sol = memo.get(A_hat, Q, r_unit, library, st.subset.with(s), opts);
      const double score = sol.converged ? x.dot(sol.P * x) : inf;
      round.scores[s] = score;
      if (score < best) {
        best = score;
        best_idx = s;
        best_sol = &sol;
      }
    }
    if (best_idx == library.size()) {
      std::ostringstream msg;
      msg << "no stabilizing candidate when extending subset {" << st.subset.label() << "}; DARE diverged for";
      for (std::size_t s = 0; s < library.size(); ++s)
        if (!st.subset.contains(s)) msg << ' ' << (s + 1);
      throw UnstabilizableError(msg.str());
    }
    round.chosen = best_idx;
    st.rounds.push_back(std::move(round));
    st.subset = st.subset.with(best_idx);
    st.selection_order.push_back(best_idx);
    final_sol = best_sol;
  }

  st.P = final_sol->P;
  const MatrixXd B = build_input_matrix(library, st.subset);
  st.gain = lqr_gain(st.P, A_hat, B, r_unit * MatrixXd::Identity(B.cols(), B.cols()));
  return st;
}

inline VectorXd greedy_input(const GreedyPolicyState& st, const VectorXd& x) {
  if (x.size() != st.gain.cols())
    throw DimensionError("state has dimension " + std::to_string(x.size()) + ", gain expects " +
                         std::to_string(st.gain.cols()));
  return st.gain * x;
}

/// Per-round candidate scores as JSON. Actuators are one-based; divergent
/// candidates are written as the string "inf".
inline nlohmann::json greedy_diagnostics_json(const GreedyPolicyState& st) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : st.rounds) {
    nlohmann::json cands = nlohmann::json::array();
    for (std::size_t s = 0; s < r.scores.size(); ++s) {
      if (std::isnan(r.scores[s])) continue;
      nlohmann::json c{{"actuator", s + 1}};
      if (std::isfinite(r.scores[s]))
        c["score"] = r.scores[s];
      else
        c["score"] = format_double(r.scores[s]);
      cands.push_back(std::move(c));
    }
    rounds.push_back({{"chosen", r.chosen + 1}, {"candidates", std::move(cands)}});
  }
  std::vector<std::size_t> order;
  for (auto i : st.selection_order) order.push_back(i + 1);
  return {{"subset", st.subset.label()}, {"selection_order", order}, {"rounds", std::move(rounds)}};
}

}  // namespace selftune
