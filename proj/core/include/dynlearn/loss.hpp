#pragma once

#include <vector>

#include "dynlearn/dataset.hpp"
#include "dynlearn/dynamics.hpp"
#include "dynlearn/heads.hpp"
#include "dynlearn/tape.hpp"

namespace dynlearn {

/// Mean over the batch of || qd_{k+1} - qd^hat_{k+1} ||^2 where the
/// prediction is one RK4 step of the Lagrangian dynamics with u held.
double lnn_loss(const DynamicsModel& model, const std::vector<TransitionSample>& batch);

/// Mean of || q_{k+1} - q^hat ||^2 + || p_{k+1} - p^hat ||^2 under one RK4
/// step of the Hamiltonian dynamics.
double hnn_loss(const DynamicsModel& model, const std::vector<TransitionSample>& batch);

/// Loss for the samples selected by `indices` (the minibatch path).
double structured_loss(const DynamicsModel& model, ModelKind kind,
                       const std::vector<TransitionSample>& samples,
                       const std::vector<int>& indices);

struct LossGrad {
  double value = 0.0;
  /// mass, potential, damping, input — matching StructuredModel::parameter_sets.
  std::vector<MlpParams> grads;
};

/// Loss and parameter gradient of all four heads via a single reverse sweep
/// over the batched tape graph.
LossGrad structured_loss_grad(const StructuredModel& model, ModelKind kind,
                              const std::vector<TransitionSample>& samples,
                              const std::vector<int>& indices);

/// Forward value computed on the tape (no reverse sweep); equals the plain
/// structured_loss up to roundoff, which the tests pin down.
double structured_loss_tape_value(const StructuredModel& model, ModelKind kind,
                                  const std::vector<TransitionSample>& samples,
                                  const std::vector<int>& indices);

}  // namespace dynlearn
