#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dynlearn/blackbox.hpp"
#include "dynlearn/control.hpp"
#include "dynlearn/dataset.hpp"
#include "dynlearn/dynamics.hpp"

namespace dynlearn {

/// One-step predictor of the full next state [q; qd|p] given the sample
/// inputs; both model families and the baseline reduce to this shape.
using StatePredictor = std::function<Vec(const Vec& q, const Vec& w, const Vec& u, double dt)>;

/// RK4 step of the structured dynamics (Lagrangian or Hamiltonian form).
StatePredictor structured_predictor(const DynamicsModel& model, ModelKind kind);

/// Black-box chaining. LNN-kind networks predict qd_{k+1} only; the
/// configuration advances by the trapezoid rule q_{k+1} = q_k +
/// dt (qd_k + qd_{k+1}) / 2. HNN-kind networks predict the full pair.
StatePredictor blackbox_predictor(const BlackBoxModel& model);

struct Metrics {
  double one_step_mean = 0.0;
  double one_step_std = 0.0;
  int rollout_horizon = 0;
  double rollout_mean = 0.0;
  double rollout_std = 0.0;
  int window = 0;
  double windowed_mean = 0.0;
  double windowed_std = 0.0;
  std::optional<TrackingStats> tracking;
  double wall_seconds = 0.0;
  int trajectories = 0;
  int samples = 0;
};

struct EvalOptions {
  int horizon = 500;
  int window = 5;
};

/// One-step loss plus free and windowed rollout errors over held-out
/// trajectories. Rollout error is the configuration-space Euclidean error,
/// mean +- std over time steps and trajectories. Throws when the test set
/// is empty or the horizon exceeds a trajectory length.
Metrics evaluate_model(const StatePredictor& predictor, const TransitionDataset& test,
                       const EvalOptions& options);

/// Trajectories of a dataset in order of appearance (samples grouped by
/// trajectory_id, original ordering preserved).
std::vector<std::vector<const TransitionSample*>> group_by_trajectory(
    const TransitionDataset& dataset);

/// Over-time configuration range (max - min per coordinate), for error
/// normalization.
Vec configuration_range(const TransitionDataset& dataset);

}  // namespace dynlearn
