#pragma once

#include <vector>

#include "dynlearn/dataset.hpp"
#include "dynlearn/mlp.hpp"
#include "dynlearn/train.hpp"

namespace dynlearn {

/// Baseline: one fully connected network mapping (q, qd|p, u, dt) directly
/// to the next-state label of the same dataset the structured models train
/// on.
struct BlackBoxModel {
  MlpParams mlp;
  ModelKind kind = ModelKind::LNN;
  int n = 0;
  int m_u = 0;

  /// Label prediction: qd_{k+1} (LNN datasets) or [q_{k+1}; p_{k+1}] (HNN).
  Vec predict(const Vec& q, const Vec& w, const Vec& u, double dt) const;
};

BlackBoxModel make_blackbox(int n, int m_u, ModelKind kind,
                            const std::vector<int>& hidden = {128, 128, 128, 128, 128},
                            std::uint64_t seed = 0);

struct BlackBoxTrainResult {
  BlackBoxModel model;
  std::vector<EpochStats> history;
  bool diverged = false;
  int epochs_run = 0;
};

/// Same AdamW loop as the structured trainer, on the direct next-state MSE.
BlackBoxTrainResult train_blackbox(const BlackBoxModel& init, const TransitionDataset& dataset,
                                   const TrainConfig& config);

double blackbox_loss(const BlackBoxModel& model, const std::vector<TransitionSample>& samples,
                     const std::vector<int>& indices);

/// JSON checkpoint for the baseline, sharing the structured checkpoint's
/// versioning and exactness guarantees.
void save_blackbox(const BlackBoxModel& model, const std::string& path,
                   const CheckpointMeta& meta = {});
std::pair<BlackBoxModel, CheckpointMeta> load_blackbox(const std::string& path);

/// True when the file is a blackbox checkpoint (model_class field).
bool is_blackbox_checkpoint(const std::string& path);

}  // namespace dynlearn
