#include <doctest.h>

#include <cmath>
#include <random>

#include "dynlearn/dynamics.hpp"
#include "dynlearn/heads.hpp"
#include "dynlearn/integrators.hpp"
#include "dynlearn/plants.hpp"
#include "test_util.hpp"

using namespace dynlearn;
using namespace dynlearn::testing;

namespace {

StructuredModel random_model(int n, int m_u, std::uint64_t seed) {
  StructuredModelConfig config;
  config.n = n;
  config.m_u = m_u;
  config.mass_hidden = {8, 8};
  config.potential_hidden = {6, 6};
  config.damping_hidden = {6};
  config.input_hidden = {6};
  config.seed = seed;
  return StructuredModel(config);
}

/// 1-DOF plant with position-dependent mass M(q) = (a + b q)^2-free form:
/// mass = m0 + m1 q^2 keeps it positive on the test range.
Plant varying_mass_plant() {
  Plant plant;
  plant.id = "varying_mass";
  plant.n = 1;
  plant.m_u = 1;
  plant.mass = [](const Vec& q) { return Mat::Constant(1, 1, q[0] * q[0]); };
  plant.mass_jacobian = [](const Vec& q) {
    Tensor3 t(1, 1, 1);
    t.slice(0)(0, 0) = 2.0 * q[0];
    return t;
  };
  plant.potential = [](const Vec&) { return 0.0; };
  plant.potential_grad = [](const Vec&) { return Vec::Zero(1); };
  plant.damping = [](const Vec&) { return Mat::Zero(1, 1); };
  plant.input_matrix = [](const Vec&) { return Mat::Identity(1, 1); };
  return plant;
}

}  // namespace

TEST_CASE("lagrangian: resting state and forced identity mass") {
  const PlantModel pendulum(make_damped_pendulum());
  const Vec q = Vec::Constant(1, 0.4);
  CHECK(lagrangian(pendulum, q, Vec::Zero(1)) ==
        doctest::Approx(-pendulum.potential(q)).epsilon(1e-14));

  Plant identity = testing::linear_plant(1.0, 0.0, 0.0, 1.0);
  // M = I_2, V = 0
  identity.n = 2;
  identity.m_u = 2;
  identity.mass = [](const Vec&) { return Mat(Mat::Identity(2, 2)); };
  identity.mass_jacobian = [](const Vec&) { return Tensor3(2, 2, 2); };
  identity.potential = [](const Vec&) { return 0.0; };
  identity.potential_grad = [](const Vec&) { return Vec::Zero(2); };
  identity.damping = [](const Vec&) { return Mat(Mat::Zero(2, 2)); };
  identity.input_matrix = [](const Vec&) { return Mat(Mat::Identity(2, 2)); };
  const PlantModel model(identity);
  CHECK(lagrangian(model, Vec::Zero(2), (Vec(2) << 3, 4).finished()) ==
        doctest::Approx(12.5).epsilon(1e-14));
}

TEST_CASE("lagrangian against direct head recomputation") {
  const StructuredModel model = random_model(2, 1, 5);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec q = random_vec(2, rng);
    const Vec qd = random_vec(2, rng);
    const double direct = 0.5 * qd.dot(model.mass(q) * qd) - model.potential(q);
    CHECK(lagrangian(model, q, qd) == doctest::Approx(direct).epsilon(1e-14));
  }
}

TEST_CASE("hamiltonian: zero momentum, scaled mass, Legendre consistency") {
  const StructuredModel model = random_model(2, 1, 9);
  std::mt19937_64 rng(9);
  const Vec q = random_vec(2, rng);
  CHECK(hamiltonian(model, q, Vec::Zero(2)) ==
        doctest::Approx(model.potential(q)).epsilon(1e-12));

  Plant scaled = testing::linear_plant(2.0, 0.0, 0.0, 1.0);  // M = 2, V = 0
  scaled.potential = [](const Vec&) { return 0.0; };
  scaled.potential_grad = [](const Vec&) { return Vec::Zero(1); };
  const PlantModel pm(scaled);
  CHECK(hamiltonian(pm, Vec::Zero(1), Vec::Constant(1, 2.0)) ==
        doctest::Approx(1.0).epsilon(1e-14));

  for (int trial = 0; trial < 20; ++trial) {
    const Vec qq = random_vec(2, rng);
    const Vec qd = random_vec(2, rng);
    const Vec p = to_momentum(model, qq, qd);
    const double lhs = hamiltonian(model, qq, p);
    const double rhs = qd.dot(model.mass(qq) * qd) - lagrangian(model, qq, qd);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("forward dynamics: kinetic terms vanish at rest") {
  const StructuredModel model = random_model(2, 2, 13);
  std::mt19937_64 rng(13);
  const Vec q = random_vec(2, rng);
  const Vec qdd = lagrangian_forward_dynamics(model, q, Vec::Zero(2), Vec::Zero(2));
  const Vec expected = -mass_solve(model.mass(q), model.potential_grad(q));
  CHECK((qdd - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pendulum equilibrium is stationary") {
  const PlantModel model(make_damped_pendulum());
  const Vec qdd = lagrangian_forward_dynamics(model, Vec::Zero(1), Vec::Zero(1), Vec::Zero(1));
  CHECK(std::abs(qdd[0]) < 1e-14);
}

TEST_CASE("plant-loaded dynamics match the analytic plant acceleration") {
  std::mt19937_64 rng(17);
  for (const char* id : {"damped_pendulum", "two_link_arm"}) {
    const Plant plant = builtin_plant(id);
    const PlantModel model(plant);
    for (int trial = 0; trial < 25; ++trial) {
      const Vec q = random_vec(plant.n, rng);
      const Vec qd = random_vec(plant.n, rng);
      const Vec u = random_vec(plant.m_u, rng);
      const Vec via_model = lagrangian_forward_dynamics(model, q, qd, u);
      const Vec via_plant = plant_forward_dynamics(plant, q, qd, u);
      CHECK((via_model - via_plant).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("hamiltonian field: rest case and conservative energy rate") {
  const StructuredModel model = random_model(2, 1, 21);
  std::mt19937_64 rng(21);
  const Vec q = random_vec(2, rng);
  const auto [qdot, pdot] = hamiltonian_vector_field(model, q, Vec::Zero(2), Vec::Zero(1));
  CHECK(qdot.norm() == 0.0);
  CHECK((pdot + model.potential_grad(q)).cwiseAbs().maxCoeff() < 1e-12);

  // D = 0: zero weights, raw diagonal pushed to softplus(-40) ~ 0 and the
  // strict-lower raw entries (which bypass the activation) left at zero
  StructuredModel frictionless = model;
  for (auto& w : frictionless.damping_head().mlp.weights) w.setZero();
  for (auto& b : frictionless.damping_head().mlp.biases) b.setZero();
  frictionless.damping_head().mlp.biases.back().head(2).setConstant(-40.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec qq = random_vec(2, rng);
    const Vec p = random_vec(2, rng);
    const ConfState state{qq, p, StateKind::Momentum};
    CHECK(std::abs(energy_rate(frictionless, state, Vec::Zero(1))) < 1e-10);
  }
}

TEST_CASE("passivity: zero input never increases the energy") {
  const StructuredModel model = random_model(2, 2, 25);
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 1000; ++trial) {
    const ConfState state{random_vec(2, rng, 2.0), random_vec(2, rng, 2.0),
                          StateKind::Momentum};
    CHECK(energy_rate(model, state, Vec::Zero(2)) <= 1e-12);
  }
}

TEST_CASE("energy rate matches finite differences of H along a trajectory") {
  const PlantModel model(make_damped_pendulum());
  const VectorField field = hnn_vector_field(model);
  const double dt = 1e-3;
  Vec x(2);
  x << 0.9, 0.0;  // (q, p)
  RolloutConfig config{dt, 200, std::nullopt};
  const auto traj = rollout(field, x, zero_input(1), config);
  for (int k = 1; k + 1 < static_cast<int>(traj.size()); k += 40) {
    const double h_prev = hamiltonian(model, traj[k - 1].head(1), traj[k - 1].tail(1));
    const double h_next = hamiltonian(model, traj[k + 1].head(1), traj[k + 1].tail(1));
    const double fd = (h_next - h_prev) / (2.0 * dt);
    const ConfState state{traj[k].head(1), traj[k].tail(1), StateKind::Momentum};
    CHECK(energy_rate(model, state, Vec::Zero(1)) == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("coriolis force: constant mass, scalar oracle, skew symmetry") {
  StructuredModel frozen = random_model(2, 1, 29);
  frozen.mass_head().mlp.weights[0].setZero();
  std::mt19937_64 rng(29);
  CHECK(coriolis_force(frozen, random_vec(2, rng), random_vec(2, rng)).norm() == 0.0);

  // N = 1 hand oracle: M = q^2 at q=2, qd=3 gives C qd = M' qd^2 / 2 = 18
  const PlantModel varying(varying_mass_plant());
  const Vec c = coriolis_force(varying, Vec::Constant(1, 2.0), Vec::Constant(1, 3.0));
  CHECK(c[0] == doctest::Approx(18.0).epsilon(1e-13));

  const StructuredModel model = random_model(3, 1, 33);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec q = random_vec(3, rng);
    const Vec qd = random_vec(3, rng);
    const Tensor3 dm = model.mass_jacobian(q);
    const Mat mdot = dm.contract(qd);
    // qd^T (Mdot - 2C) qd = 0
    const double skew = qd.dot(mdot * qd) - 2.0 * qd.dot(coriolis_force(model, q, qd));
    CHECK(std::abs(skew) < 1e-10);
  }
}

TEST_CASE("cross-formalism: matched trajectories agree over one second") {
  const StructuredModel model = random_model(2, 1, 37);
  const double dt = 1e-3;
  const int steps = 1000;
  std::mt19937_64 rng(37);
  const Vec q0 = random_vec(2, rng, 0.5);
  const Vec qd0 = random_vec(2, rng, 0.5);

  Vec x_l(4), x_h(4);
  x_l << q0, qd0;
  x_h << q0, to_momentum(model, q0, qd0);
  const InputSchedule u = constant_input(Vec::Constant(1, 0.2));
  RolloutConfig config{dt, steps, std::nullopt};
  const auto traj_l = rollout(lnn_vector_field(model), x_l, u, config);
  const auto traj_h = rollout(hnn_vector_field(model), x_h, u, config);

  double worst = 0.0;
  for (size_t k = 0; k < traj_l.size(); ++k) {
    const Vec q_l = traj_l[k].head(2);
    const Vec q_h = traj_h[k].head(2);
    worst = std::max(worst, (q_l - q_h).cwiseAbs().maxCoeff());
    const Vec qd_l = traj_l[k].tail(2);
    const Vec qd_h = to_velocity(model, q_h, traj_h[k].tail(2));
    worst = std::max(worst, (qd_l - qd_h).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("conservative RK4 energy drift scales with the fourth power of dt") {
  Plant plant = make_damped_pendulum();
  plant.damping = [](const Vec&) { return Mat(Mat::Zero(1, 1)); };
  const PlantModel model(plant);
  const VectorField field = hnn_vector_field(model);
  Vec x0(2);
  x0 << 1.2, 0.0;
  const double h0 = hamiltonian(model, x0.head(1), x0.tail(1));

  auto drift = [&](double dt) {
    RolloutConfig config{dt, static_cast<int>(std::round(1.0 / dt)), std::nullopt};
    const auto traj = rollout(field, x0, zero_input(1), config);
    double worst = 0.0;
    for (const auto& state : traj)
      worst = std::max(worst, std::abs(hamiltonian(model, state.head(1), state.tail(1)) - h0));
    return worst;
  };
  const double coarse = drift(2e-3);
  const double fine = drift(1e-3);
  const double k = coarse / std::pow(2e-3, 4);  // measured drift constant
  CHECK(fine <= 1.5 * k * std::pow(1e-3, 4));   // fourth-order scaling
  CHECK(coarse < 1e-8);
}

TEST_CASE("scaling all heads by a constant leaves the dynamics unchanged") {
  const StructuredModel model = random_model(2, 2, 41);
  const ScaledModel doubled(model, 2.0);
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec q = random_vec(2, rng);
    const Vec qd = random_vec(2, rng);
    const Vec u = random_vec(2, rng);
    const Vec base = lagrangian_forward_dynamics(model, q, qd, u);
    const Vec scaled = lagrangian_forward_dynamics(doubled, q, qd, u);
    CHECK((base - scaled).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("mass solve guards against ill-conditioned matrices") {
  Plant bad = testing::linear_plant();
  bad.mass = [](const Vec&) {
    Mat m(2, 2);
    m << 1.0, 0.0, 0.0, 1e-13;
    return m;
  };
  bad.n = 2;
  bad.m_u = 1;
  bad.mass_jacobian = [](const Vec&) { return Tensor3(2, 2, 2); };
  bad.potential_grad = [](const Vec&) { return Vec::Zero(2); };
  bad.damping = [](const Vec&) { return Mat(Mat::Zero(2, 2)); };
  bad.input_matrix = [](const Vec&) { return Mat(Mat::Ones(2, 1)); };
  const PlantModel model(bad);
  CHECK_THROWS_AS(
      lagrangian_forward_dynamics(model, Vec::Zero(2), Vec::Zero(2), Vec::Zero(1)),
      NumericalError);
}

TEST_CASE("dimension errors carry through the dynamics entry points") {
  const StructuredModel model = random_model(2, 1, 45);
  CHECK_THROWS_AS(lagrangian(model, Vec::Zero(3), Vec::Zero(2)), DimensionError);
  CHECK_THROWS_AS(lagrangian_forward_dynamics(model, Vec::Zero(2), Vec::Zero(2), Vec::Zero(2)),
                  DimensionError);
  CHECK_THROWS_AS(hamiltonian_vector_field(model, Vec::Zero(2), Vec::Zero(1), Vec::Zero(1)),
                  DimensionError);
}
