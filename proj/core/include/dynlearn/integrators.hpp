#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "dynlearn/dynamics.hpp"
#include "dynlearn/types.hpp"

namespace dynlearn {

/// Zero-order-hold input schedule: u held constant over step k.
using InputSchedule = std::function<Vec(int step)>;

InputSchedule constant_input(Vec u);
InputSchedule zero_input(int m_u);

struct RolloutConfig {
  double dt = 1e-3;
  int horizon = 1;
  std::optional<int> window;  // reset period of rollout_windowed, in steps

  void validate() const {
    require(dt > 0.0, "RolloutConfig: dt must be > 0");
    require(horizon >= 1, "RolloutConfig: horizon must be >= 1");
    if (window) require(*window >= 1, "RolloutConfig: window must be >= 1");
  }
};

/// Classical fixed-step RK4 with u held across the four stages. Throws
/// NumericalError naming the stage when a stage value is non-finite.
Vec rk4_step(const VectorField& f, const Vec& x, const Vec& u, double dt);

/// Iterated rk4_step; the returned trajectory has horizon+1 states and
/// starts with x0. Step errors are rethrown with the step index.
std::vector<Vec> rollout(const VectorField& f, const Vec& x0, const InputSchedule& inputs,
                         const RolloutConfig& config);

/// Multi-step prediction that resets the integrator state to the measured
/// trajectory every `window` steps. truth must hold horizon+1 states
/// sampled at config.dt; the output aligns with it index by index.
std::vector<Vec> rollout_windowed(const VectorField& f, const std::vector<Vec>& truth,
                                  const InputSchedule& inputs, const RolloutConfig& config);

}  // namespace dynlearn
