#include <doctest.h>

#include <cmath>
#include <random>

#include "dynlearn/integrators.hpp"
#include "dynlearn/plants.hpp"
#include "test_util.hpp"

using namespace dynlearn;
using namespace dynlearn::testing;

TEST_CASE("constant field advances exactly by c dt") {
  const Vec c = (Vec(2) << 1.5, -0.5).finished();
  const VectorField f = [c](const Vec&, const Vec&) { return c; };
  const Vec x = Vec::Zero(2);
  const Vec next = rk4_step(f, x, Vec::Zero(1), 0.25);
  CHECK((next - 0.25 * c).cwiseAbs().maxCoeff() < 1e-16);
}

TEST_CASE("linear field reproduces the fourth-order Taylor polynomial") {
  const double lambda = -1.7;
  const VectorField f = [lambda](const Vec& x, const Vec&) { return Vec(lambda * x); };
  const double dt = 0.1;
  const double z = lambda * dt;
  const double want = 1.0 + z + z * z / 2.0 + z * z * z / 6.0 + z * z * z * z / 24.0;
  const Vec next = rk4_step(f, Vec::Ones(1), Vec::Zero(1), dt);
  CHECK(next[0] == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("harmonic oscillator: 100 steps stay within 1e-8 of the closed form") {
  const VectorField f = [](const Vec& x, const Vec&) {
    Vec dx(2);
    dx << x[1], -x[0];
    return dx;
  };
  Vec x(2);
  x << 1.0, 0.0;
  RolloutConfig config{0.01, 100, std::nullopt};
  const auto traj = rollout(f, x, zero_input(1), config);
  double sup = 0.0;
  for (size_t k = 0; k < traj.size(); ++k) {
    const double t = 0.01 * static_cast<double>(k);
    sup = std::max(sup, std::abs(traj[k][0] - std::cos(t)));
    sup = std::max(sup, std::abs(traj[k][1] + std::sin(t)));
  }
  CHECK(sup < 1e-8);
}

TEST_CASE("rollout basics: single step, zero field, determinism") {
  const VectorField f = [](const Vec& x, const Vec& u) {
    Vec dx(2);
    dx << x[1] + u[0], -0.5 * x[0];
    return dx;
  };
  Vec x(2);
  x << 0.3, -0.2;
  const InputSchedule u = constant_input(Vec::Constant(1, 0.1));

  RolloutConfig one{0.05, 1, std::nullopt};
  const auto traj = rollout(f, x, u, one);
  REQUIRE(traj.size() == 2);
  CHECK((traj[1] - rk4_step(f, x, u(0), 0.05)).cwiseAbs().maxCoeff() == 0.0);

  const VectorField zero = [](const Vec& x0, const Vec&) { return Vec(Vec::Zero(x0.size())); };
  const auto frozen = rollout(zero, x, u, RolloutConfig{0.05, 7, std::nullopt});
  for (const Vec& state : frozen) CHECK((state - x).cwiseAbs().maxCoeff() == 0.0);

  const auto again = rollout(f, x, u, one);
  CHECK((again[1] - traj[1]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("measured convergence order on the damped pendulum is four") {
  const Plant plant = builtin_plant("damped_pendulum");
  const VectorField f = plant_vector_field(plant);
  Vec x0(2);
  x0 << 1.2, 0.0;
  const InputSchedule u = constant_input(Vec::Constant(1, 0.4));
  const double t_end = 1.0;

  auto endpoint = [&](double dt) {
    RolloutConfig config{dt, static_cast<int>(std::round(t_end / dt)), std::nullopt};
    return rollout(f, x0, u, config).back();
  };
  const Vec reference = endpoint(1e-4);
  const double err_coarse = (endpoint(4e-3) - reference).norm();
  const double err_fine = (endpoint(2e-3) - reference).norm();
  const double order = std::log2(err_coarse / err_fine);
  CHECK(order > 3.7);
  CHECK(order < 4.1);
}

TEST_CASE("windowed rollout: limits and the perfect-model case") {
  const Plant plant = builtin_plant("damped_pendulum");
  const VectorField f = plant_vector_field(plant);
  Vec x0(2);
  x0 << 0.7, 0.3;
  const InputSchedule u = constant_input(Vec::Constant(1, 0.2));
  RolloutConfig config{0.01, 50, std::nullopt};
  const auto truth = rollout(f, x0, u, config);

  // w = horizon: identical to the free rollout
  config.window = 50;
  const auto full = rollout_windowed(f, truth, u, config);
  for (size_t k = 0; k < truth.size(); ++k)
    CHECK((full[k] - truth[k]).cwiseAbs().maxCoeff() == 0.0);

  // w = 1: every step is a one-step prediction from the measured state
  config.window = 1;
  const auto stepwise = rollout_windowed(f, truth, u, config);
  for (size_t k = 0; k + 1 < truth.size(); ++k) {
    const Vec one_step = rk4_step(f, truth[k], u(static_cast<int>(k)), config.dt);
    CHECK((stepwise[k + 1] - one_step).cwiseAbs().maxCoeff() == 0.0);
  }

  // perfect model: any window reproduces the truth to integrator precision
  config.window = 5;
  const auto windowed = rollout_windowed(f, truth, u, config);
  for (size_t k = 0; k < truth.size(); ++k)
    CHECK((windowed[k] - truth[k]).cwiseAbs().maxCoeff() < 1e-12);

  config.window = 5;
  std::vector<Vec> short_truth(truth.begin(), truth.end() - 1);
  CHECK_THROWS_AS(rollout_windowed(f, short_truth, u, config), DimensionError);
}

TEST_CASE("non-finite fields raise stage and step labelled errors") {
  const VectorField bad = [](const Vec& x, const Vec&) {
    Vec dx = x;
    dx[0] = std::numeric_limits<double>::infinity();
    return dx;
  };
  CHECK_THROWS_WITH_AS(rk4_step(bad, Vec::Ones(1), Vec::Zero(1), 0.1),
                       doctest::Contains("stage 1"), NumericalError);
  RolloutConfig config{0.1, 3, std::nullopt};
  CHECK_THROWS_WITH_AS(rollout(bad, Vec::Ones(1), zero_input(1), config),
                       doctest::Contains("step 0"), NumericalError);
}

TEST_CASE("rollout config validation") {
  RolloutConfig config{0.0, 1, std::nullopt};
  CHECK_THROWS_AS(config.validate(), DimensionError);
  config.dt = 0.1;
  config.horizon = 0;
  CHECK_THROWS_AS(config.validate(), DimensionError);
  config.horizon = 5;
  config.window = 0;
  CHECK_THROWS_AS(config.validate(), DimensionError);
}
