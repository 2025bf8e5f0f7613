#pragma once

#include <cstddef>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "selftune/errors.hpp"
#include "selftune/format.hpp"
#include "selftune/model.hpp"

namespace selftune {

/// State-input record x(0..t), u(0..t-1) with the input matrix that was
/// active for each transition.
class History {
 public:
  History() = default;
  explicit History(VectorXd x0) { states_.push_back(std::move(x0)); }

  void append(const MatrixXd& B, const VectorXd& u, const VectorXd& x_next) {
    if (states_.empty()) throw ArgumentError("history has no initial state");
    const Eigen::Index n = states_.front().size();
    if (x_next.size() != n || B.rows() != n) throw DimensionError("history entry has wrong state dimension");
    if (B.cols() != u.size()) throw DimensionError("input vector does not match input matrix");
    inputs_.push_back(u);
    input_matrices_.push_back(B);
    states_.push_back(x_next);
  }

  std::size_t transitions() const { return inputs_.size(); }
  Eigen::Index dim() const { return states_.empty() ? 0 : states_.front().size(); }
  const std::vector<VectorXd>& states() const { return states_; }
  const std::vector<VectorXd>& inputs() const { return inputs_; }
  const std::vector<MatrixXd>& input_matrices() const { return input_matrices_; }

  /// B^{S_tau} u(tau), the input's contribution to x(tau+1).
  VectorXd applied_input(std::size_t tau) const { return input_matrices_.at(tau) * inputs_.at(tau); }

 private:
  std::vector<VectorXd> states_;
  std::vector<VectorXd> inputs_;
  std::vector<MatrixXd> input_matrices_;
};

struct DynamicsFit {
  MatrixXd A_hat;
  int regressor_rank = 0;
  bool rank_deficient = false;
};

/// Least-squares estimate of A from
///   sum_tau |x(tau+1) - A x(tau) - B u(tau)|^2 + ridge |A|_F^2.
/// All rows of A share one Gram matrix, so the row-wise normal equations are
/// solved with a single factorization. ridge = 0 gives the minimum-norm
/// least-squares solution.
inline DynamicsFit fit_dynamics(const History& history, double ridge = 1e-8) {
  const std::size_t t = history.transitions();
  if (t == 0) throw ArgumentError("fit_dynamics needs at least one transition");
  if (ridge < 0.0) throw ArgumentError("ridge must be non-negative");
  const Eigen::Index n = history.dim();
  MatrixXd X(n, static_cast<Eigen::Index>(t));
  MatrixXd Y(n, static_cast<Eigen::Index>(t));
  for (std::size_t tau = 0; tau < t; ++tau) {
    const auto c = static_cast<Eigen::Index>(tau);
    X.col(c) = history.states()[tau];
    Y.col(c) = history.states()[tau + 1] - history.applied_input(tau);
  }

  DynamicsFit fit;
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(X.transpose());
  cod.setThreshold(1e-12);
  fit.regressor_rank = static_cast<int>(cod.rank());
  fit.rank_deficient = fit.regressor_rank < n;

  if (ridge == 0.0) {
    fit.A_hat = cod.solve(Y.transpose()).transpose();
  } else {
    MatrixXd G = X * X.transpose();
    G.diagonal().array() += ridge;
    fit.A_hat = G.ldlt().solve(X * Y.transpose()).transpose();
  }
  return fit;
}

/// Index of the mode with the smallest summed squared one-step prediction
/// error over the last `window` transitions. Ties go to the earlier mode.
inline std::size_t detect_mode(const History& history, const std::vector<DynamicsMode>& modes,
                               std::size_t window = 5) {
  if (history.transitions() == 0) throw ArgumentError("detect_mode needs at least one transition");
  if (window == 0) throw ArgumentError("detect_mode window must be positive");
  if (modes.empty()) throw ArgumentError("detect_mode needs at least one candidate mode");
  const std::size_t t = history.transitions();
  const std::size_t first = t > window ? t - window : 0;
  std::size_t best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < modes.size(); ++m) {
    if (modes[m].dim() != history.dim()) throw DimensionError("mode '" + modes[m].label + "' has wrong dimension");
    double err = 0.0;
    for (std::size_t tau = first; tau < t; ++tau)
      err += (history.states()[tau + 1] - modes[m].A * history.states()[tau] - history.applied_input(tau))
                 .squaredNorm();
    if (err < best_err) {
      best_err = err;
      best = m;
    }
  }
  return best;
}

/// One row per transition: t, x(t), B u(t), x(t+1).
inline void write_history_csv(std::ostream& os, const History& history) {
  const Eigen::Index n = history.dim();
  os << 't';
  for (const char* prefix : {"x", "bu", "xnext"})
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << prefix << (i + 1);
  os << '\n';
  for (std::size_t tau = 0; tau < history.transitions(); ++tau) {
    os << tau;
    const VectorXd bu = history.applied_input(tau);
    for (const VectorXd* v : {&history.states()[tau], &bu, &history.states()[tau + 1]})
      for (Eigen::Index i = 0; i < n; ++i) os << ',' << format_double((*v)(i));
    os << '\n';
  }
}

}  // namespace selftune
