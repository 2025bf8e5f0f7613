#include "catch_amalgamated.hpp"

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "selftune/model.hpp"
#include "selftune/presets.hpp"

using namespace selftune;

TEST_CASE("build_input_matrix picks library columns in ascending order", "[model]") {
  SECTION("two basis actuators of a 50-node network") {
    const auto lib = ActuatorLibrary::standard_basis(50, 25);
    const MatrixXd B = build_input_matrix(lib, ActuatorSubset{0, 1});
    REQUIRE(B.rows() == 50);
    REQUIRE(B.cols() == 2);
    MatrixXd expected = MatrixXd::Zero(50, 2);
    expected(0, 0) = 1.0;
    expected(1, 1) = 1.0;
    CHECK(B == expected);
  }
  SECTION("empty subset gives an N x 0 matrix") {
    const auto lib = ActuatorLibrary::standard_basis(3, 3);
    const MatrixXd B = build_input_matrix(lib, ActuatorSubset{});
    CHECK(B.rows() == 3);
    CHECK(B.cols() == 0);
  }
  SECTION("second actuator of the switching example") {
    const auto sc = presets::switching_example();
    const MatrixXd B = build_input_matrix(sc.library, ActuatorSubset{1});
    CHECK(B == Eigen::Vector2d(1.0, -1.0));
  }
  SECTION("out-of-range index") {
    const auto lib = ActuatorLibrary::standard_basis(3, 2);
    CHECK_THROWS_AS(build_input_matrix(lib, ActuatorSubset{2}), DimensionError);
  }
}

TEST_CASE("build_input_matrix ignores the order members were given in", "[model][property]") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t M = 2 + gen() % 6;
    std::vector<VectorXd> cols;
    for (std::size_t i = 0; i < M; ++i) cols.push_back(oracle::random_matrix(gen, 4, 1));
    const ActuatorLibrary lib(cols);
    std::vector<std::size_t> idx(M);
    for (std::size_t i = 0; i < M; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), gen);
    idx.resize(1 + gen() % M);
    auto shuffled = idx;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    const ActuatorSubset a(idx), b(shuffled);
    CHECK(a == b);
    CHECK(build_input_matrix(lib, a) == build_input_matrix(lib, b));
    CHECK(std::is_sorted(a.indices().begin(), a.indices().end()));
  }
}

TEST_CASE("ActuatorSubset rejects repeats and labels one-based", "[model]") {
  CHECK_THROWS_AS(ActuatorSubset({1, 1}), ArgumentError);
  CHECK(ActuatorSubset{2, 0}.label() == "1+3");
  CHECK(ActuatorSubset{}.label() == "-");
  CHECK(ActuatorSubset{0}.with(3) == ActuatorSubset{3, 0});
}

TEST_CASE("enumerate_subsets", "[model]") {
  SECTION("M=2, K=1") {
    const auto s = enumerate_subsets(2, 1);
    REQUIRE(s.size() == 2);
    CHECK(s[0] == ActuatorSubset{0});
    CHECK(s[1] == ActuatorSubset{1});
  }
  SECTION("M=25, K=2") { CHECK(enumerate_subsets(25, 2).size() == 300); }
  SECTION("M=3, K=3") {
    const auto s = enumerate_subsets(3, 3);
    REQUIRE(s.size() == 1);
    CHECK(s[0] == ActuatorSubset{0, 1, 2});
  }
  SECTION("K > M") { CHECK_THROWS_AS(enumerate_subsets(2, 3), ArgumentError); }
  SECTION("count matches Pascal's triangle, strictly increasing order") {
    for (std::size_t M = 0; M <= 12; ++M) {
      for (std::size_t K = 0; K <= M; ++K) {
        const auto s = enumerate_subsets(M, K);
        REQUIRE(s.size() == oracle::binomial(M, K));
        for (std::size_t i = 1; i < s.size(); ++i) REQUIRE(s[i - 1] < s[i]);
      }
    }
  }
}

TEST_CASE("Scenario validation rejects inconsistent dimensions", "[model]") {
  auto sc = presets::switching_example();
  REQUIRE_NOTHROW(sc.validate());

  SECTION("W of wrong size") {
    sc.modes[0].W = MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS(sc.validate(), DimensionError);
  }
  SECTION("non-square A") {
    sc.modes[1].A = MatrixXd::Zero(2, 3);
    CHECK_THROWS_AS(sc.validate(), DimensionError);
  }
  SECTION("Q of wrong size") {
    sc.cost.Q = MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS(sc.validate(), DimensionError);
  }
  SECTION("library columns of wrong size") {
    sc.library = ActuatorLibrary::standard_basis(3, 2);
    CHECK_THROWS_AS(sc.validate(), DimensionError);
  }
  SECTION("budget larger than library") {
    sc.budget = 3;
    CHECK_THROWS_AS(sc.validate(), ArgumentError);
  }
  SECTION("indefinite W") {
    sc.modes[0].W << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(sc.validate(), ArgumentError);
  }
  SECTION("schedule names a missing mode") {
    sc.schedule = PeriodicSchedule{5, {0, 2}};
    CHECK_THROWS_AS(sc.validate(), ArgumentError);
  }
  SECTION("explicit schedule too short") {
    sc.schedule = ExplicitSchedule{{0, 1}};
    CHECK_THROWS_AS(sc.validate(), ArgumentError);
  }
}

TEST_CASE("periodic schedule dwells per mode", "[model]") {
  const Schedule s = PeriodicSchedule{3, {1, 0}};
  const std::vector<std::size_t> expected{1, 1, 1, 0, 0, 0, 1, 1};
  for (std::size_t t = 0; t < expected.size(); ++t) CHECK(mode_at(s, t) == expected[t]);
}

TEST_CASE("input weight is r_unit times identity for every subset size", "[model]") {
  CostSpec c;
  c.r_unit = 2.5;
  CHECK(c.input_weight(3) == 2.5 * MatrixXd::Identity(3, 3));
  CHECK(c.input_weight(0).size() == 0);
}
