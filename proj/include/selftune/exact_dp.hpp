#pragma once

// Exact finite-horizon dynamic programming over joint actuator-subset and
// input choices for a single linear mode. Each cost-to-go J_t is held as the
// pointwise minimum of quadratics x'Px + q, one per actuator-subset sequence
// (S_t, ..., S_{T-1}).

#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "selftune/errors.hpp"
#include "selftune/format.hpp"
#include "selftune/linalg.hpp"
#include "selftune/model.hpp"
#include "selftune/random.hpp"

namespace selftune {

struct QuadraticPiece {
  MatrixXd P;
  double q = 0.0;
  /// Subsets applied at t, t+1, ..., T-1.
  std::vector<ActuatorSubset> seq;
  /// Index of the successor piece in J_{t+1}; npos for terminal pieces.
  std::size_t next = npos;

  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  double value(const VectorXd& x) const { return x.dot(P * x) + q; }
};

struct PiecewiseQuadratic {
  std::size_t t = 0;
  std::vector<QuadraticPiece> pieces;

  Eigen::Index dim() const { return pieces.empty() ? 0 : pieces.front().P.rows(); }
};

struct DpOptions {
  std::size_t piece_budget = 1'000'000;
  /// Drop piece i when another piece j has P_j <= P_i (Loewner) and q_j <= q_i.
  bool prune_dominated = false;
};

namespace detail {

inline bool dominates(const QuadraticPiece& a, const QuadraticPiece& b) {
  if (a.q > b.q) return false;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(b.P - a.P), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, b.P.norm());
}

inline std::vector<QuadraticPiece> prune(std::vector<QuadraticPiece> pieces) {
  const std::size_t n = pieces.size();
  std::vector<bool> drop(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n && !drop[i]; ++j) {
      if (j == i || drop[j] || !dominates(pieces[j], pieces[i])) continue;
      // Mutually dominating (equal) pieces keep the lowest index.
      if (j < i || !dominates(pieces[i], pieces[j])) drop[i] = true;
    }
  }
  std::vector<QuadraticPiece> kept;
  for (std::size_t i = 0; i < n; ++i)
    if (!drop[i]) kept.push_back(std::move(pieces[i]));
  return kept;
}

}  // namespace detail

/// J_0 .. J_T for x+ = A x + B^S u + w, indexed by t.
///
/// Pieces at each t are ordered lexicographically by subset sequence, so the
/// lowest-index tie rule in evaluate_value picks the lexicographically
/// smallest sequence.
inline std::vector<PiecewiseQuadratic> backward_pieces(const DynamicsMode& mode,
                                                       const ActuatorLibrary& library,
                                                       const CostSpec& cost, std::size_t budget,
                                                       std::size_t horizon,
                                                       const DpOptions& opts = {}) {
  mode.validate();
  cost.validate(mode.dim());
  if (library.dim() != mode.dim()) throw DimensionError("library dimension does not match the mode");
  const auto subsets = enumerate_subsets(library.size(), budget);

  if (!opts.prune_dominated) {
    // Unpruned count at t = 0 is C(M,K)^T; refuse before doing any work.
    std::size_t count = 1;
    for (std::size_t k = 0; k < horizon; ++k) {
      if (count > opts.piece_budget / subsets.size())
        throw CapacityError("exact DP needs " + std::to_string(subsets.size()) + "^" +
                            std::to_string(horizon) + " pieces, over the budget of " +
                            std::to_string(opts.piece_budget) +
                            "; shorten the horizon or enable dominance pruning");
      count *= subsets.size();
    }
  }

  std::vector<MatrixXd> inputs;
  inputs.reserve(subsets.size());
  for (const auto& s : subsets) inputs.push_back(build_input_matrix(library, s));
  const MatrixXd R = cost.input_weight(budget);

  std::vector<PiecewiseQuadratic> J(horizon + 1);
  J[horizon].t = horizon;
  J[horizon].pieces.push_back({cost.Q_terminal, 0.0, {}, QuadraticPiece::npos});

  for (std::size_t t = horizon; t-- > 0;) {
    const auto& succ = J[t + 1].pieces;
    if (succ.size() > opts.piece_budget / subsets.size())
      throw CapacityError("exact DP piece budget of " + std::to_string(opts.piece_budget) +
                          " exceeded at t=" + std::to_string(t));
    auto& cur = J[t];
    cur.t = t;
    cur.pieces.reserve(succ.size() * subsets.size());
    const MatrixXd& Q = cost.state_weight(t);
    for (std::size_t s = 0; s < subsets.size(); ++s) {
      for (std::size_t j = 0; j < succ.size(); ++j) {
        QuadraticPiece piece;
        piece.P = riccati_step(succ[j].P, mode.A, inputs[s], Q, R);
        piece.q = succ[j].q + (succ[j].P * mode.W).trace();
        piece.seq.reserve(succ[j].seq.size() + 1);
        piece.seq.push_back(subsets[s]);
        piece.seq.insert(piece.seq.end(), succ[j].seq.begin(), succ[j].seq.end());
        piece.next = j;
        cur.pieces.push_back(std::move(piece));
      }
    }
    if (opts.prune_dominated) cur.pieces = detail::prune(std::move(cur.pieces));
  }
  return J;
}

/// Scenario form; the schedule must keep one mode over the whole horizon.
inline std::vector<PiecewiseQuadratic> backward_pieces(const Scenario& scenario,
                                                       const DpOptions& opts = {}) {
  scenario.validate();
  const std::size_t m = mode_at(scenario.schedule, 0);
  for (std::size_t t = 1; t < scenario.horizon; ++t)
    if (mode_at(scenario.schedule, t) != m)
      throw ArgumentError("exact DP requires a single dynamics mode over the horizon");
  return backward_pieces(scenario.modes[m], scenario.library, scenario.cost, scenario.budget,
                         scenario.horizon, opts);
}

struct ValueAt {
  double value = 0.0;
  std::size_t piece = 0;
};

inline ValueAt evaluate_value(const PiecewiseQuadratic& pw, const VectorXd& x) {
  if (pw.pieces.empty()) throw std::logic_error("piecewise quadratic has no pieces");
  if (x.size() != pw.dim())
    throw DimensionError("state has dimension " + std::to_string(x.size()) + ", value function has " +
                         std::to_string(pw.dim()));
  ValueAt best{pw.pieces[0].value(x), 0};
  for (std::size_t i = 1; i < pw.pieces.size(); ++i) {
    const double v = pw.pieces[i].value(x);
    if (v < best.value) best = {v, i};
  }
  return best;
}

/// First subset of the minimizing piece's sequence.
inline ActuatorSubset optimal_actuator_at(const PiecewiseQuadratic& pw, const VectorXd& x) {
  const auto best = evaluate_value(pw, x);
  const auto& seq = pw.pieces[best.piece].seq;
  if (seq.empty()) throw ArgumentError("no actuator decision at the terminal time");
  return seq.front();
}

struct DpDecision {
  ActuatorSubset subset;
  VectorXd u;
  std::size_t piece = 0;
};

/// Optimal subset and input at time t: the argmin piece of J_t picks the
/// subset, and the input is the LQR minimizer against its successor's P.
inline DpDecision dp_decide(const std::vector<PiecewiseQuadratic>& J, std::size_t t,
                            const VectorXd& x, const MatrixXd& A, const ActuatorLibrary& library,
                            const CostSpec& cost) {
  if (t + 1 >= J.size()) throw ArgumentError("no actuator decision at t=" + std::to_string(t));
  const auto best = evaluate_value(J[t], x);
  const auto& piece = J[t].pieces[best.piece];
  const auto& succ = J[t + 1].pieces.at(piece.next);
  DpDecision d;
  d.subset = piece.seq.front();
  d.piece = best.piece;
  const MatrixXd B = build_input_matrix(library, d.subset);
  d.u = lqr_gain(succ.P, A, B, cost.input_weight(d.subset.size())) * x;
  return d;
}

struct PartitionPoint {
  VectorXd x;
  std::size_t t = 0;
  ActuatorSubset subset;
};

namespace detail {

inline std::vector<PartitionPoint> label_points(const std::vector<PiecewiseQuadratic>& J,
                                                const std::vector<VectorXd>& xs,
                                                const std::vector<std::size_t>& times) {
  for (auto t : times)
    if (t + 1 >= J.size()) throw ArgumentError("no actuator decision at t=" + std::to_string(t));
  std::vector<PartitionPoint> out;
  out.reserve(xs.size() * times.size());
  for (const auto& x : xs)
    for (auto t : times) out.push_back({x, t, optimal_actuator_at(J[t], x)});
  return out;
}

inline void check_box(const VectorXd& lower, const VectorXd& upper, Eigen::Index n) {
  if (lower.size() != n || upper.size() != n) throw DimensionError("sampling box has wrong dimension");
  if ((upper.array() < lower.array()).any()) throw ArgumentError("sampling box has upper < lower");
}

}  // namespace detail

/// Uniform samples in the box [lower, upper], each labeled with the optimal
/// subset at every requested time. Rows follow sample order, then time.
inline std::vector<PartitionPoint> sample_partition(const std::vector<PiecewiseQuadratic>& J,
                                                    const VectorXd& lower, const VectorXd& upper,
                                                    std::size_t samples, std::uint64_t seed,
                                                    const std::vector<std::size_t>& times) {
  if (J.empty()) throw ArgumentError("empty value-function list");
  detail::check_box(lower, upper, J.front().dim());
  Rng rng(seed);
  std::vector<VectorXd> xs(samples, VectorXd(lower.size()));
  for (auto& x : xs)
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.uniform(lower(i), upper(i));
  return detail::label_points(J, xs, times);
}

/// Regular raster over a 2-D box with nx by ny nodes (inclusive of edges).
inline std::vector<PartitionPoint> sample_partition_grid(const std::vector<PiecewiseQuadratic>& J,
                                                         const VectorXd& lower, const VectorXd& upper,
                                                         std::size_t nx, std::size_t ny,
                                                         const std::vector<std::size_t>& times) {
  if (J.empty()) throw ArgumentError("empty value-function list");
  if (J.front().dim() != 2) throw ArgumentError("raster partitions are only defined for 2-D states");
  detail::check_box(lower, upper, 2);
  if (nx == 0 || ny == 0) throw ArgumentError("raster needs at least one node per axis");
  auto node = [](double lo, double hi, std::size_t i, std::size_t n) {
    return n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  std::vector<VectorXd> xs;
  xs.reserve(nx * ny);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i)
      xs.push_back(Eigen::Vector2d(node(lower(0), upper(0), i, nx), node(lower(1), upper(1), j, ny)));
  return detail::label_points(J, xs, times);
}

/// CSV with header `x1,x2,t,subset`.
inline void write_partition_csv(std::ostream& os, const std::vector<PartitionPoint>& points) {
  os << "x1,x2,t,subset\n";
  for (const auto& p : points) {
    if (p.x.size() != 2) throw ArgumentError("partition CSV export requires 2-D states");
    os << format_double(p.x(0)) << ',' << format_double(p.x(1)) << ',' << p.t << ',' << p.subset.label()
       << '\n';
  }
}

}  // namespace selftune
