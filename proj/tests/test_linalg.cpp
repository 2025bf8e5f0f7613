#include "catch_amalgamated.hpp"

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "selftune/linalg.hpp"
#include "selftune/presets.hpp"

using namespace selftune;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }
const Eigen::Vector2d b1(1.0, 1.0);
const Eigen::Vector2d b2(1.0, -1.0);
}  // namespace

TEST_CASE("riccati_step", "[linalg]") {
  SECTION("no actuation is the Lyapunov step") {
    std::mt19937_64 gen(1);
    const MatrixXd A = oracle::random_matrix(gen, 3, 3);
    const MatrixXd P = oracle::random_psd(gen, 3, 3);
    const MatrixXd Q = oracle::random_psd(gen, 3, 2);
    const MatrixXd out = riccati_step(P, A, MatrixXd(3, 0), Q, MatrixXd(0, 0));
    const MatrixXd expected = Q + A.transpose() * P * A;
    CHECK((out - 0.5 * (expected + expected.transpose())).norm() < 1e-12);
  }
  SECTION("A = 0 returns Q") {
    const MatrixXd Q = Eigen::Vector2d(1.0, 2.0).asDiagonal();
    const MatrixXd out = riccati_step(MatrixXd::Identity(2, 2), MatrixXd::Zero(2, 2), b1, Q, scalar(1.0));
    CHECK(out == Q);
  }
  SECTION("scalar a=b=q=r=p=1 gives 1.5") {
    // q + a^2 p - a^2 b^2 p^2 / (r + b^2 p) = 1 + 1 - 1/2
    const MatrixXd out = riccati_step(scalar(1), scalar(1), scalar(1), scalar(1), scalar(1));
    CHECK_THAT(out(0, 0), WithinAbs(1.5, 1e-15));
  }
  SECTION("singular inner matrix") {
    CHECK_THROWS_AS(riccati_step(MatrixXd::Zero(2, 2), MatrixXd::Identity(2, 2), b1, MatrixXd::Identity(2, 2), scalar(0.0)),
                    NumericError);
  }
  SECTION("shape mismatch") {
    CHECK_THROWS_AS(riccati_step(MatrixXd::Identity(2, 2), MatrixXd::Identity(3, 3), b1, MatrixXd::Identity(2, 2), scalar(1)),
                    DimensionError);
  }
}

TEST_CASE("riccati_step preserves symmetry and PSD", "[linalg][property]") {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(gen() % 8);
    const Eigen::Index k = static_cast<Eigen::Index>(gen() % 4);
    const MatrixXd A = oracle::random_matrix(gen, n, n);
    const MatrixXd B = oracle::random_matrix(gen, n, k);
    const MatrixXd P = oracle::random_psd(gen, n, 1 + static_cast<Eigen::Index>(gen() % n));
    const MatrixXd Q = oracle::random_psd(gen, n, 1 + static_cast<Eigen::Index>(gen() % n));
    const MatrixXd R = oracle::random_psd(gen, k, k) + 0.1 * MatrixXd::Identity(k, k);
    const MatrixXd out = riccati_step(P, A, B, Q, R);
    REQUIRE((out - out.transpose()).norm() == 0.0);
    REQUIRE(oracle::min_eig(out) >= -1e-8 * std::max(1.0, out.norm()));
  }
}

TEST_CASE("solve_dare", "[linalg]") {
  const MatrixXd A2 = presets::switching_mode_2();
  const MatrixXd I2 = MatrixXd::Identity(2, 2);

  SECTION("(A2, b2) is stabilizable") {
    const auto sol = solve_dare(A2, b2, I2, scalar(1));
    CHECK(sol.converged);
    CHECK_FALSE(sol.diverged);
    CHECK(sol.residual <= 1e-8);
  }
  SECTION("(A2, b1) diverges") {
    const auto sol = solve_dare(A2, b1, I2, scalar(1));
    CHECK_FALSE(sol.converged);
    CHECK(sol.diverged);
  }
  SECTION("A = 0 converges to Q immediately") {
    const MatrixXd Q = Eigen::Vector2d(3.0, 1.0).asDiagonal();
    const auto sol = solve_dare(MatrixXd::Zero(2, 2), b1, Q, scalar(1));
    CHECK(sol.converged);
    CHECK(sol.iterations == 1);
    CHECK(sol.P == Q);
  }
  SECTION("scalar closed form") {
    const auto sol = solve_dare(scalar(1), scalar(1), scalar(1), scalar(1));
    REQUIRE(sol.converged);
    CHECK_THAT(sol.P(0, 0), WithinRel((1.0 + std::sqrt(5.0)) / 2.0, 1e-8));
  }
  SECTION("iteration cap reports nonconvergence without diverging") {
    const auto sol = solve_dare(scalar(1), scalar(1), scalar(1), scalar(1), {1e-15, 3, 1e12});
    CHECK_FALSE(sol.converged);
    CHECK_FALSE(sol.diverged);
    CHECK(sol.iterations == 3);
  }
  SECTION("invalid options") { CHECK_THROWS_AS(solve_dare(scalar(1), scalar(1), scalar(1), scalar(1), {0.0, 10, 1e12}), ArgumentError); }
}

TEST_CASE("lqr_gain", "[linalg]") {
  SECTION("empty input matrix gives a 0 x N gain") {
    const MatrixXd G = lqr_gain(MatrixXd::Identity(3, 3), MatrixXd::Identity(3, 3), MatrixXd(3, 0), MatrixXd(0, 0));
    CHECK(G.rows() == 0);
    CHECK(G.cols() == 3);
  }
  SECTION("scalar closed form -p/(1+p)") {
    const double p = oracle::scalar_dare(1, 1, 1, 1);
    CHECK_THAT(p, WithinRel((1.0 + std::sqrt(5.0)) / 2.0, 1e-14));
    const MatrixXd G = lqr_gain(scalar(p), scalar(1), scalar(1), scalar(1));
    CHECK_THAT(G(0, 0), WithinRel(-p / (1.0 + p), 1e-14));
    CHECK_THAT(G(0, 0), WithinAbs(-0.6180339887, 1e-9));
  }
  SECTION("(A2, b2) closed loop is stable") {
    const MatrixXd A2 = presets::switching_mode_2();
    const auto sol = solve_dare(A2, b2, MatrixXd::Identity(2, 2), scalar(1));
    REQUIRE(sol.converged);
    const MatrixXd G = lqr_gain(sol.P, A2, b2, scalar(1));
    CHECK(spectral_radius(A2 + b2 * G) < 1.0);
  }
}

TEST_CASE("controllability_rank", "[linalg]") {
  const MatrixXd A2 = presets::switching_mode_2();
  SECTION("(A2, b1): A2 b1 = 0.5 b1") {
    CHECK(controllability_rank(A2, b1) == 1);
    CHECK(oracle::elimination_rank(oracle::kalman_matrix(A2, b1)) == 1);
  }
  SECTION("(A2, b2): A2 b2 = 1.5 b2, so the Kalman matrix also has rank 1") {
    CHECK((A2 * b2 - 1.5 * b2).norm() == 0.0);
    CHECK(oracle::elimination_rank(oracle::kalman_matrix(A2, b2)) == 1);
    CHECK(controllability_rank(A2, b2) == 1);
  }
  SECTION("identity pair") { CHECK(controllability_rank(MatrixXd::Identity(4, 4), MatrixXd::Identity(4, 4)) == 4); }
  SECTION("agrees with elimination rank on random pairs") {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 50; ++trial) {
      const Eigen::Index n = 1 + static_cast<Eigen::Index>(gen() % 5);
      const Eigen::Index k = 1 + static_cast<Eigen::Index>(gen() % 2);
      MatrixXd A = oracle::random_matrix(gen, n, n);
      // Block-triangular A with B confined to the top block drops rank.
      const Eigen::Index top = 1 + static_cast<Eigen::Index>(gen() % n);
      A.bottomLeftCorner(n - top, top).setZero();
      MatrixXd B = MatrixXd::Zero(n, k);
      B.topRows(top) = oracle::random_matrix(gen, top, k);
      CHECK(controllability_rank(A, B) == oracle::elimination_rank(oracle::kalman_matrix(A, B)));
    }
  }
}

TEST_CASE("spectral_radius", "[linalg]") {
  CHECK_THAT(spectral_radius(MatrixXd::Identity(3, 3)), WithinAbs(1.0, 1e-12));
  CHECK(spectral_radius(MatrixXd::Zero(3, 3)) == 0.0);
  SECTION("2x2 closed form") {
    const MatrixXd A = presets::partition_system().modes[0].A;
    const double tr = A.trace(), det = A.determinant();
    CHECK_THAT(tr, WithinAbs(-1.6256, 1e-12));
    CHECK_THAT(det, WithinAbs(-1.27798136, 1e-8));
    const double disc = std::sqrt(tr * tr - 4 * det);
    const double expected = std::max(std::abs((tr + disc) / 2), std::abs((tr - disc) / 2));
    CHECK_THAT(spectral_radius(A), WithinAbs(expected, 1e-8));
    CHECK_THAT(spectral_radius(A), WithinAbs(2.2052, 1e-4));
  }
  SECTION("rotation has complex eigenvalues of modulus r") {
    MatrixXd A(2, 2);
    A << 0.0, -1.3, 1.3, 0.0;
    CHECK_THAT(spectral_radius(A), WithinAbs(1.3, 1e-12));
  }
  CHECK_THROWS_AS(spectral_radius(MatrixXd::Zero(2, 3)), DimensionError);
}

TEST_CASE("cholesky_psd", "[linalg]") {
  SECTION("sigma^2 I") {
    const MatrixXd L = cholesky_psd(0.09 * MatrixXd::Identity(3, 3));
    CHECK((L - 0.3 * MatrixXd::Identity(3, 3)).norm() < 1e-15);
  }
  SECTION("zero") { CHECK(cholesky_psd(MatrixXd::Zero(2, 2)) == MatrixXd::Zero(2, 2)); }
  SECTION("[[4,2],[2,2]]") {
    MatrixXd W(2, 2);
    W << 4, 2, 2, 2;
    MatrixXd expected(2, 2);
    expected << 2, 0, 1, 1;
    CHECK((cholesky_psd(W) - expected).norm() < 1e-15);
  }
  SECTION("rank-deficient PSD reconstructs") {
    std::mt19937_64 gen(4);
    for (int trial = 0; trial < 20; ++trial) {
      const MatrixXd W = oracle::random_psd(gen, 5, 1 + static_cast<Eigen::Index>(gen() % 5));
      const MatrixXd L = cholesky_psd(W);
      CHECK((L * L.transpose() - W).norm() <= 1e-10 * std::max(1.0, W.norm()));
      CHECK(L.isLowerTriangular());
    }
  }
  SECTION("indefinite input names the pivot") {
    MatrixXd W(2, 2);
    W << 1, 2, 2, 1;
    try {
      cholesky_psd(W);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("pivot 1") != std::string::npos);
    }
  }
}

TEST_CASE("DARE invariants on random instances", "[linalg][property]") {
  std::mt19937_64 gen(5);
  const DareOptions opts;
  int checked = 0;
  for (int trial = 0; trial < 150; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(gen() % 6);
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(gen() % 2);
    const MatrixXd A = oracle::random_matrix(gen, n, n, 0.7);
    const MatrixXd B = oracle::random_matrix(gen, n, k);
    const MatrixXd Q = MatrixXd::Identity(n, n);
    const MatrixXd R = MatrixXd::Identity(k, k);
    const auto sol = solve_dare(A, B, Q, R, opts);
    if (controllability_rank(A, B) == n) REQUIRE(sol.converged);
    if (!sol.converged) continue;
    ++checked;
    const MatrixXd defect = sol.P - riccati_step(sol.P, A, B, Q, R);
    REQUIRE(defect.norm() <= 10 * opts.tol * std::max(1.0, sol.P.norm()));
    REQUIRE(spectral_radius(A + B * lqr_gain(sol.P, A, B, R)) < 1.0);
    REQUIRE((sol.P - sol.P.transpose()).norm() <= 1e-10);
  }
  CHECK(checked >= 100);
}

TEST_CASE("adding an actuator never increases the DARE solution", "[linalg][property]") {
  std::mt19937_64 gen(6);
  DareOptions opts;
  opts.tol = 1e-13;
  opts.max_iter = 100000;
  int checked = 0;
  for (int trial = 0; trial < 150; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(gen() % 5);
    const MatrixXd A = oracle::random_matrix(gen, n, n, 0.6);
    const MatrixXd B = oracle::random_matrix(gen, n, 2);
    const MatrixXd Q = MatrixXd::Identity(n, n);
    const auto small = solve_dare(A, B.leftCols(1), Q, scalar(1.0), opts);
    const auto large = solve_dare(A, B, Q, MatrixXd::Identity(2, 2), opts);
    if (!small.converged) continue;
    REQUIRE(large.converged);
    ++checked;
    REQUIRE(oracle::min_eig(small.P - large.P) >= -1e-8);
  }
  CHECK(checked >= 100);
}
