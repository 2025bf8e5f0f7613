#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "selftune/errors.hpp"
#include "selftune/model.hpp"

namespace selftune {

namespace detail {

inline MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

inline void check_lq_shapes(const MatrixXd& P, const MatrixXd& A, const MatrixXd& B,
                            const MatrixXd& Q, const MatrixXd& R) {
  const Eigen::Index n = A.rows();
  require_square(A, n, "A");
  require_square(P, n, "P");
  require_square(Q, n, "Q");
  if (B.rows() != n) throw DimensionError("B has " + std::to_string(B.rows()) + " rows, expected " + std::to_string(n));
  require_square(R, B.cols(), "R");
}

// Factor R + B'PB; throws when it is numerically singular.
inline Eigen::LLT<MatrixXd> factor_inner(const MatrixXd& P, const MatrixXd& B, const MatrixXd& R) {
  const MatrixXd S = symmetrize(R + B.transpose() * P * B);
  Eigen::LLT<MatrixXd> llt(S);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14))
    throw NumericError("R + B'PB is singular or not positive definite (condition > 1e14)");
  return llt;
}

}  // namespace detail

/// One backward Riccati step:
///   Q + A'PA - A'PB (R + B'PB)^-1 B'PA, symmetrized.
/// An input matrix with zero columns reduces this to the Lyapunov step.
inline MatrixXd riccati_step(const MatrixXd& P_next, const MatrixXd& A, const MatrixXd& B,
                             const MatrixXd& Q, const MatrixXd& R) {
  detail::check_lq_shapes(P_next, A, B, Q, R);
  const MatrixXd PA = P_next * A;
  MatrixXd out = Q + A.transpose() * PA;
  if (B.cols() > 0) {
    const auto llt = detail::factor_inner(P_next, B, R);
    const MatrixXd BtPA = B.transpose() * PA;
    out.noalias() -= BtPA.transpose() * llt.solve(BtPA);
  }
  return detail::symmetrize(out);
}

struct DareOptions {
  double tol = 1e-9;  // relative step size
  int max_iter = 10000;
  double divergence_threshold = 1e12;
};

struct RiccatiSolution {
  MatrixXd P;
  int iterations = 0;
  double residual = std::numeric_limits<double>::infinity();
  bool converged = false;
  /// Set when the iterate exceeded the divergence threshold (or went non-finite).
  bool diverged = false;
};

/// Value iteration on the Riccati map starting from P = Q. Nonconvergence is
/// reported in the result rather than thrown: a diverging iterate is how an
/// unstabilizable pair shows up.
inline RiccatiSolution solve_dare(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                                  const MatrixXd& R, const DareOptions& opts = {}) {
  if (!(opts.tol > 0.0) || opts.max_iter < 1) throw ArgumentError("solve_dare needs tol > 0 and max_iter >= 1");
  RiccatiSolution sol;
  sol.P = detail::symmetrize(Q);
  for (int k = 0; k < opts.max_iter; ++k) {
    MatrixXd next;
    try {
      next = riccati_step(sol.P, A, B, Q, R);
    } catch (const NumericError&) {
      sol.diverged = true;
      sol.iterations = k;
      return sol;
    }
    sol.iterations = k + 1;
    const double norm_next = next.norm();
    if (!std::isfinite(norm_next) || norm_next > opts.divergence_threshold) {
      sol.P = std::move(next);
      sol.diverged = true;
      return sol;
    }
    const double step = (next - sol.P).norm() / std::max(1.0, sol.P.norm());
    sol.P = std::move(next);
    if (step <= opts.tol) {
      sol.converged = true;
      break;
    }
  }
  sol.residual = (sol.P - riccati_step(sol.P, A, B, Q, R)).norm();
  return sol;
}

/// Optimal feedback u = G x for the cost-to-go x'Px:
///   G = -(R + B'PB)^-1 B'PA.
inline MatrixXd lqr_gain(const MatrixXd& P, const MatrixXd& A, const MatrixXd& B, const MatrixXd& R) {
  detail::check_lq_shapes(P, A, B, P, R);
  if (B.cols() == 0) return MatrixXd(0, A.cols());
  const auto llt = detail::factor_inner(P, B, R);
  return -llt.solve(B.transpose() * P * A);
}

/// Numerical rank of [B, AB, ..., A^{N-1}B]; singular values below
/// 1e-9 times the largest are treated as zero.
inline int controllability_rank(const MatrixXd& A, const MatrixXd& B) {
  const Eigen::Index n = A.rows();
  detail::require_square(A, n, "A");
  if (B.rows() != n) throw DimensionError("B row count does not match A");
  if (B.cols() == 0 || n == 0) return 0;
  MatrixXd kalman(n, n * B.cols());
  MatrixXd block = B;
  for (Eigen::Index i = 0; i < n; ++i) {
    kalman.middleCols(i * B.cols(), B.cols()) = block;
    block = A * block;
  }
  Eigen::JacobiSVD<MatrixXd> svd(kalman);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > 1e-9 * s(0)) ++rank;
  return rank;
}

/// Largest eigenvalue magnitude.
inline double spectral_radius(const MatrixXd& A) {
  if (A.rows() != A.cols()) throw DimensionError("spectral_radius needs a square matrix, got " + detail::shape(A));
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<MatrixXd> es(A, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) throw NumericError("eigenvalue iteration did not converge");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Lower-triangular L with L L' = W for symmetric PSD W. Pivots within
/// 1e-12 of zero are treated as semidefinite directions (zero column).
inline MatrixXd cholesky_psd(const MatrixXd& W) {
  const Eigen::Index n = W.rows();
  detail::require_square(W, n, "W");
  if (!detail::is_symmetric(W, 1e-12)) throw NumericError("cholesky_psd: matrix is not symmetric");
  const double scale = std::max(1.0, W.cwiseAbs().maxCoeff());
  const double pivot_tol = 1e-12 * scale;
  MatrixXd L = MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double pivot = W(j, j) - L.row(j).head(j).squaredNorm();
    if (pivot < -pivot_tol) {
      std::ostringstream msg;
      msg << "cholesky_psd: matrix is indefinite (pivot " << j << " = " << pivot << ")";
      throw NumericError(msg.str());
    }
    if (pivot <= pivot_tol) {
      for (Eigen::Index i = j + 1; i < n; ++i) {
        const double off = W(i, j) - L.row(i).head(j).dot(L.row(j).head(j));
        if (std::abs(off) > 1e-10 * scale) {
          std::ostringstream msg;
          msg << "cholesky_psd: matrix is indefinite (zero pivot " << j << " with coupling " << off << ")";
          throw NumericError(msg.str());
        }
      }
      continue;
    }
    const double d = std::sqrt(pivot);
    L(j, j) = d;
    for (Eigen::Index i = j + 1; i < n; ++i)
      L(i, j) = (W(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / d;
  }
  return L;
}

}  // namespace selftune
