#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dynlearn/heads.hpp"
#include "dynlearn/types.hpp"

namespace dynlearn {

/// One state transition: (q_k, qd_k | p_k, u_k, dt) with the next-state
/// label. LNN samples label qd_{k+1}; HNN samples label (q_{k+1}, p_{k+1}).
struct TransitionSample {
  Vec q;
  Vec w;        // qd_k for LNN, p_k for HNN
  Vec u;
  double dt = 0.0;
  Vec label_q;  // empty for LNN samples
  Vec label_w;  // qd_{k+1} or p_{k+1}
  int trajectory_id = 0;
};

struct TransitionDataset {
  ModelKind kind = ModelKind::LNN;
  int n = 0;
  int m_u = 0;
  std::string plant_id;
  std::vector<double> sampling_hz;
  std::uint64_t split_seed = 0;
  std::vector<TransitionSample> samples;

  size_t size() const { return samples.size(); }
  void validate() const;
};

/// Deterministic trajectory-level split; no sample of a trajectory ends up
/// on both sides. val_fraction of the trajectory ids (rounded down, at
/// least one when possible) goes to the second dataset.
std::pair<TransitionDataset, TransitionDataset> split_dataset(const TransitionDataset& dataset,
                                                              double val_fraction,
                                                              std::uint64_t seed);

/// CSV with a mandatory header: trajectory_id, q0.., qd0..|p0.., u0.., dt,
/// label_qd0.. | label_q0.., label_p0... Doubles are written with enough
/// digits to round-trip exactly.
void save_dataset_csv(const TransitionDataset& dataset, const std::string& path);
TransitionDataset load_dataset_csv(const std::string& path);

}  // namespace dynlearn
