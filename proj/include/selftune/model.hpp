#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "selftune/errors.hpp"

namespace selftune {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace detail {

inline std::string shape(const MatrixXd& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline bool is_symmetric(const MatrixXd& m, double tol) {
  return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

// Unpivoted Cholesky sweep; true when every pivot stays above -tol.
inline bool is_psd(const MatrixXd& m, double tol = 1e-12) {
  const Eigen::Index n = m.rows();
  MatrixXd a = m;
  for (Eigen::Index j = 0; j < n; ++j) {
    double pivot = a(j, j);
    if (pivot < -tol) return false;
    if (pivot <= tol) {
      // Semidefinite direction; the remainder of the column must vanish.
      for (Eigen::Index i = j + 1; i < n; ++i) {
        if (std::abs(a(i, j)) > std::sqrt(tol)) return false;
      }
      continue;
    }
    const double l = std::sqrt(pivot);
    for (Eigen::Index i = j + 1; i < n; ++i) a(i, j) /= l;
    for (Eigen::Index k = j + 1; k < n; ++k)
      for (Eigen::Index i = k; i < n; ++i) a(i, k) -= a(i, j) * a(k, j);
  }
  return true;
}

inline void require_square(const MatrixXd& m, Eigen::Index n, const char* what) {
  if (m.rows() != n || m.cols() != n)
    throw DimensionError(std::string(what) + " must be " + std::to_string(n) + "x" +
                         std::to_string(n) + ", got " + shape(m));
}

}  // namespace detail

/// One linear dynamics hypothesis: x+ = A x + B u + w with w ~ (0, W).
struct DynamicsMode {
  std::string label;
  MatrixXd A;
  MatrixXd W;

  DynamicsMode() = default;
  DynamicsMode(std::string label_, MatrixXd A_, MatrixXd W_)
      : label(std::move(label_)), A(std::move(A_)), W(std::move(W_)) {
    validate();
  }

  Eigen::Index dim() const { return A.rows(); }

  void validate() const {
    if (A.rows() != A.cols())
      throw DimensionError("mode '" + label + "': A must be square, got " + detail::shape(A));
    detail::require_square(W, A.rows(), ("mode '" + label + "': W").c_str());
    if (!detail::is_symmetric(W, 1e-12))
      throw ArgumentError("mode '" + label + "': W is not symmetric");
    if (!detail::is_psd(W))
      throw ArgumentError("mode '" + label + "': W is not positive semidefinite");
  }
};

/// Candidate input columns b_1..b_M. Indices are zero-based in code and
/// printed one-based.
class ActuatorLibrary {
 public:
  ActuatorLibrary() = default;

  explicit ActuatorLibrary(std::vector<VectorXd> columns) : columns_(std::move(columns)) {
    if (columns_.empty()) throw ArgumentError("actuator library must hold at least one column");
    for (const auto& c : columns_) {
      if (c.size() != columns_.front().size())
        throw DimensionError("actuator library columns have inconsistent dimensions");
    }
  }

  /// Standard basis columns e_1..e_count of R^dim.
  static ActuatorLibrary standard_basis(Eigen::Index dim, std::size_t count) {
    if (static_cast<Eigen::Index>(count) > dim)
      throw ArgumentError("cannot take more basis columns than the state dimension");
    std::vector<VectorXd> cols;
    cols.reserve(count);
    for (std::size_t i = 0; i < count; ++i) cols.push_back(VectorXd::Unit(dim, static_cast<Eigen::Index>(i)));
    return ActuatorLibrary(std::move(cols));
  }

  std::size_t size() const { return columns_.size(); }
  Eigen::Index dim() const { return columns_.empty() ? 0 : columns_.front().size(); }
  const VectorXd& column(std::size_t i) const {
    if (i >= columns_.size())
      throw DimensionError("actuator index " + std::to_string(i + 1) + " outside library of size " +
                           std::to_string(columns_.size()));
    return columns_[i];
  }
  const std::vector<VectorXd>& columns() const { return columns_; }

 private:
  std::vector<VectorXd> columns_;
};

/// A set of library indices kept sorted and unique, so that subsets with the
/// same members compare equal regardless of construction order.
class ActuatorSubset {
 public:
  ActuatorSubset() = default;

  explicit ActuatorSubset(std::vector<std::size_t> indices) : indices_(std::move(indices)) {
    std::sort(indices_.begin(), indices_.end());
    if (std::adjacent_find(indices_.begin(), indices_.end()) != indices_.end())
      throw ArgumentError("actuator subset contains a repeated index");
  }

  ActuatorSubset(std::initializer_list<std::size_t> indices)
      : ActuatorSubset(std::vector<std::size_t>(indices)) {}

  const std::vector<std::size_t>& indices() const { return indices_; }
  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  bool contains(std::size_t i) const {
    return std::binary_search(indices_.begin(), indices_.end(), i);
  }

  ActuatorSubset with(std::size_t i) const {
    auto next = indices_;
    next.push_back(i);
    return ActuatorSubset(std::move(next));
  }

  /// One-based member list joined by '+', e.g. "1+3". Empty subset is "-".
  std::string label() const {
    if (indices_.empty()) return "-";
    std::string out;
    for (std::size_t k = 0; k < indices_.size(); ++k) {
      if (k) out += '+';
      out += std::to_string(indices_[k] + 1);
    }
    return out;
  }

  friend bool operator==(const ActuatorSubset&, const ActuatorSubset&) = default;
  friend auto operator<=>(const ActuatorSubset&, const ActuatorSubset&) = default;

 private:
  std::vector<std::size_t> indices_;
};

/// N×|subset| input matrix whose columns follow the subset's ascending order.
inline MatrixXd build_input_matrix(const ActuatorLibrary& library, const ActuatorSubset& subset) {
  MatrixXd B(library.dim(), static_cast<Eigen::Index>(subset.size()));
  for (std::size_t j = 0; j < subset.size(); ++j)
    B.col(static_cast<Eigen::Index>(j)) = library.column(subset.indices()[j]);
  return B;
}

/// All size-K subsets of {0..M-1} in lexicographic order.
inline std::vector<ActuatorSubset> enumerate_subsets(std::size_t M, std::size_t K) {
  if (K > M)
    throw ArgumentError("actuator budget K=" + std::to_string(K) + " exceeds library size M=" +
                        std::to_string(M));
  std::vector<ActuatorSubset> out;
  std::vector<std::size_t> idx(K);
  for (std::size_t i = 0; i < K; ++i) idx[i] = i;
  while (true) {
    out.emplace_back(idx);
    // Advance the rightmost index that still has room.
    std::size_t i = K;
    while (i > 0 && idx[i - 1] == M - K + (i - 1)) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < K; ++j) idx[j] = idx[j - 1] + 1;
  }
  return out;
}

/// Quadratic stage/terminal costs. The input weight for a subset of size k is
/// r_unit * I_k, so every subset of equal size is charged identically.
struct CostSpec {
  MatrixXd Q;
  double r_unit = 1.0;
  MatrixXd Q_terminal;
  /// Optional per-step state weights; Q is used past the end of the list.
  std::vector<MatrixXd> stage_Q;

  const MatrixXd& state_weight(std::size_t t) const {
    return t < stage_Q.size() ? stage_Q[t] : Q;
  }
  MatrixXd input_weight(std::size_t k) const {
    return r_unit * MatrixXd::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  }

  void validate(Eigen::Index n) const {
    detail::require_square(Q, n, "Q");
    detail::require_square(Q_terminal, n, "Q_terminal");
    if (!(r_unit > 0.0)) throw ArgumentError("r_unit must be positive");
    auto check = [](const MatrixXd& m, const char* what) {
      if (!detail::is_symmetric(m, 1e-12)) throw ArgumentError(std::string(what) + " is not symmetric");
      if (!detail::is_psd(m)) throw ArgumentError(std::string(what) + " is not positive semidefinite");
    };
    check(Q, "Q");
    check(Q_terminal, "Q_terminal");
    for (const auto& q : stage_Q) {
      detail::require_square(q, n, "stage Q");
      check(q, "stage Q");
    }
  }
};

/// Deterministic mode schedule: periodic dwell over an ordered mode list, or
/// an explicit per-step list.
struct PeriodicSchedule {
  std::size_t dwell = 1;
  std::vector<std::size_t> order;  // mode indices visited cyclically
};

struct ExplicitSchedule {
  std::vector<std::size_t> modes;  // one mode index per step
};

using Schedule = std::variant<PeriodicSchedule, ExplicitSchedule>;

inline std::size_t mode_at(const Schedule& schedule, std::size_t t) {
  return std::visit(
      [t](const auto& s) -> std::size_t {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, PeriodicSchedule>) {
          return s.order[(t / s.dwell) % s.order.size()];
        } else {
          if (t >= s.modes.size())
            throw ArgumentError("explicit schedule has no entry for t=" + std::to_string(t));
          return s.modes[t];
        }
      },
      schedule);
}

/// Initial state: a fixed vector when covariance is absent, otherwise Gaussian.
struct InitialState {
  VectorXd mean;
  std::optional<MatrixXd> covariance;
};

struct Scenario {
  std::vector<DynamicsMode> modes;
  Schedule schedule = PeriodicSchedule{1, {0}};
  ActuatorLibrary library;
  CostSpec cost;
  std::size_t budget = 1;  // K
  std::size_t horizon = 1;
  InitialState initial;
  std::uint64_t seed = 0;

  Eigen::Index dim() const { return modes.empty() ? 0 : modes.front().dim(); }
  const DynamicsMode& mode(std::size_t t) const { return modes.at(mode_at(schedule, t)); }

  void validate() const {
    if (modes.empty()) throw ArgumentError("scenario needs at least one dynamics mode");
    const Eigen::Index n = dim();
    for (const auto& m : modes) {
      m.validate();
      if (m.dim() != n) throw DimensionError("mode '" + m.label + "' has inconsistent dimension");
    }
    if (library.size() == 0) throw ArgumentError("scenario has an empty actuator library");
    if (library.dim() != n)
      throw DimensionError("actuator columns have dimension " + std::to_string(library.dim()) +
                           ", state has " + std::to_string(n));
    if (budget > library.size())
      throw ArgumentError("budget K=" + std::to_string(budget) + " exceeds library size");
    cost.validate(n);
    if (auto* p = std::get_if<PeriodicSchedule>(&schedule)) {
      if (p->dwell == 0) throw ArgumentError("schedule dwell must be positive");
      if (p->order.empty()) throw ArgumentError("periodic schedule needs a mode order");
    }
    for (std::size_t t = 0; t < horizon; ++t) {
      if (mode_at(schedule, t) >= modes.size())
        throw ArgumentError("schedule names mode index " + std::to_string(mode_at(schedule, t)) +
                            " at t=" + std::to_string(t) + " but only " +
                            std::to_string(modes.size()) + " modes exist");
    }
    if (initial.mean.size() != n) throw DimensionError("initial state mean has wrong dimension");
    if (initial.covariance) {
      detail::require_square(*initial.covariance, n, "initial covariance");
      if (!detail::is_symmetric(*initial.covariance, 1e-12) || !detail::is_psd(*initial.covariance))
        throw ArgumentError("initial covariance must be symmetric positive semidefinite");
    }
  }
};

}  // namespace selftune
