#pragma once

// Ready-made scenarios for the reference experiments.

#include <cstddef>
#include <cstdint>

#include "selftune/linalg.hpp"
#include "selftune/model.hpp"
#include "selftune/random.hpp"

namespace selftune::presets {

/// Two-state system with actuators e1, e2, Q = diag(1, 2), R = 1, no noise.
/// Time runs over 0..4, so there are four actuator decisions (t = 0..3).
inline Scenario partition_system() {
  MatrixXd A(2, 2);
  A << -2.2639, 0.6379,
       -0.2619, 0.6383;
  Scenario sc;
  sc.modes = {DynamicsMode("A", A, MatrixXd::Zero(2, 2))};
  sc.schedule = PeriodicSchedule{1, {0}};
  sc.library = ActuatorLibrary::standard_basis(2, 2);
  sc.cost.Q = Eigen::Vector2d(1.0, 2.0).asDiagonal();
  sc.cost.Q_terminal = sc.cost.Q;
  sc.cost.r_unit = 1.0;
  sc.budget = 1;
  sc.horizon = 4;
  sc.initial = {VectorXd::Zero(2), std::nullopt};
  return sc;
}

inline MatrixXd switching_mode_1() {
  MatrixXd A(2, 2);
  A << 1.0, 0.5,
       0.5, 1.0;
  return A;
}

inline MatrixXd switching_mode_2() {
  MatrixXd A(2, 2);
  A << 1.0, -0.5,
       -0.5, 1.0;
  return A;
}

struct SwitchingOptions {
  std::size_t dwell = 25;
  std::size_t horizon = 200;
  double noise_std = 0.1;
  /// Starting state, a multiple of b2 = [1, -1]. It has to be large enough for
  /// one 25-step dwell in A2 (growth 1.5^25) to push an uncontrolled b2
  /// component past 1e6.
  double initial_scale = 50.0;
};

/// Two modes A1 = [[1, .5], [.5, 1]] and A2 = [[1, -.5], [-.5, 1]] switching
/// periodically (A2 first), actuators b1 = [1, 1] and b2 = [1, -1], K = 1,
/// Q = I, R = 1, w ~ N(0, noise_std^2 I).
inline Scenario switching_example(const SwitchingOptions& o = {}) {
  const MatrixXd W = o.noise_std * o.noise_std * MatrixXd::Identity(2, 2);
  Scenario sc;
  sc.modes = {DynamicsMode("A1", switching_mode_1(), W), DynamicsMode("A2", switching_mode_2(), W)};
  sc.schedule = PeriodicSchedule{o.dwell, {1, 0}};
  sc.library = ActuatorLibrary({Eigen::Vector2d(1.0, 1.0), Eigen::Vector2d(1.0, -1.0)});
  sc.cost.Q = MatrixXd::Identity(2, 2);
  sc.cost.Q_terminal = sc.cost.Q;
  sc.cost.r_unit = 1.0;
  sc.budget = 1;
  sc.horizon = o.horizon;
  sc.initial = {o.initial_scale * Eigen::Vector2d(1.0, -1.0), std::nullopt};
  return sc;
}

/// Dense i.i.d. standard normal matrix rescaled to the given spectral radius.
inline MatrixXd random_dynamics(Eigen::Index n, std::uint64_t seed, double target_radius = 1.05) {
  Rng rng(seed);
  MatrixXd A(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) A(i, j) = rng.normal();
  return A * (target_radius / spectral_radius(A));
}

/// Sparse random network: unit self-loops plus directed edges i <- j (i != j)
/// present with probability `edge_probability`, each with a standard normal
/// weight, rescaled to the given spectral radius.
inline MatrixXd random_network_dynamics(Eigen::Index n, std::uint64_t seed, double edge_probability,
                                        double target_radius) {
  Rng rng(seed);
  MatrixXd A = MatrixXd::Identity(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      const double u = rng.uniform();
      const double w = rng.normal();
      if (i != j && u < edge_probability) A(i, j) = w;
    }
  return A * (target_radius / spectral_radius(A));
}

struct NetworkOptions {
  Eigen::Index nodes = 50;
  std::size_t actuators = 25;
  std::size_t budget = 2;
  std::size_t horizon = 100;
  double noise_variance = 1e-4;
  double initial_variance = 25.0;
  double target_radius = 1.05;
  /// 0 draws a dense Gaussian matrix; a positive value draws a sparse network
  /// with this edge probability instead.
  double edge_probability = 0.0;
};

/// Random unstable network with standard-basis actuators e_1..e_M, Q = I,
/// R = I, w ~ N(0, noise_variance I), x(0) ~ N(0, initial_variance I). The
/// dynamics are drawn from `instance_seed`.
inline Scenario random_network(std::uint64_t instance_seed, const NetworkOptions& o = {}) {
  const Eigen::Index n = o.nodes;
  Scenario sc;
  const MatrixXd A = o.edge_probability > 0
                         ? random_network_dynamics(n, instance_seed, o.edge_probability, o.target_radius)
                         : random_dynamics(n, instance_seed, o.target_radius);
  sc.modes = {DynamicsMode("A", A, o.noise_variance * MatrixXd::Identity(n, n))};
  sc.schedule = PeriodicSchedule{1, {0}};
  sc.library = ActuatorLibrary::standard_basis(n, o.actuators);
  sc.cost.Q = MatrixXd::Identity(n, n);
  sc.cost.Q_terminal = sc.cost.Q;
  sc.cost.r_unit = 1.0;
  sc.budget = o.budget;
  sc.horizon = o.horizon;
  sc.initial = {VectorXd::Zero(n), o.initial_variance * MatrixXd::Identity(n, n)};
  sc.seed = instance_seed;
  return sc;
}

}  // namespace selftune::presets
