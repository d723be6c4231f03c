#include "dynlearn/integrators.hpp"

#include <string>

namespace dynlearn {

InputSchedule constant_input(Vec u) {
  return [u = std::move(u)](int) { return u; };
}

InputSchedule zero_input(int m_u) { return constant_input(Vec::Zero(m_u)); }

Vec rk4_step(const VectorField& f, const Vec& x, const Vec& u, double dt) {
  auto stage = [&](const Vec& xs, int index) {
    Vec k = f(xs, u);
    if (!k.allFinite())
      throw NumericalError("rk4_step", "non-finite stage " + std::to_string(index));
    return k;
  };
  const Vec k1 = stage(x, 1);
  const Vec k2 = stage(x + 0.5 * dt * k1, 2);
  const Vec k3 = stage(x + 0.5 * dt * k2, 3);
  const Vec k4 = stage(x + dt * k3, 4);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

std::vector<Vec> rollout(const VectorField& f, const Vec& x0, const InputSchedule& inputs,
                         const RolloutConfig& config) {
  config.validate();
  std::vector<Vec> traj;
  traj.reserve(static_cast<size_t>(config.horizon) + 1);
  traj.push_back(x0);
  for (int k = 0; k < config.horizon; ++k) {
    try {
      traj.push_back(rk4_step(f, traj.back(), inputs(k), config.dt));
    } catch (const NumericalError& e) {
      throw NumericalError("rollout", "step " + std::to_string(k) + ": " + e.what());
    }
  }
  return traj;
}

std::vector<Vec> rollout_windowed(const VectorField& f, const std::vector<Vec>& truth,
                                  const InputSchedule& inputs, const RolloutConfig& config) {
  config.validate();
  require(config.window.has_value(), "rollout_windowed: config.window is required");
  require(truth.size() == static_cast<size_t>(config.horizon) + 1,
          "rollout_windowed: truth length must be horizon + 1");
  const int w = *config.window;
  std::vector<Vec> pred;
  pred.reserve(truth.size());
  pred.push_back(truth.front());
  Vec state = truth.front();
  for (int k = 0; k < config.horizon; ++k) {
    if (k % w == 0 && k > 0) state = truth[static_cast<size_t>(k)];
    try {
      state = rk4_step(f, state, inputs(k), config.dt);
    } catch (const NumericalError& e) {
      throw NumericalError("rollout_windowed",
                           "step " + std::to_string(k) + ": " + e.what());
    }
    pred.push_back(state);
  }
  return pred;
}

}  // namespace dynlearn
