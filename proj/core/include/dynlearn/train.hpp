#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dynlearn/dataset.hpp"
#include "dynlearn/heads.hpp"

namespace dynlearn {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 128;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double grad_clip_norm = 10.0;
  bool cosine_decay = false;
  ModelKind loss_kind = ModelKind::LNN;
  std::uint64_t seed = 0;

  void validate() const {
    require(epochs >= 0, "TrainConfig: epochs must be >= 0");
    require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    require(learning_rate > 0.0, "TrainConfig: learning_rate must be > 0");
    require(weight_decay >= 0.0, "TrainConfig: weight_decay must be >= 0");
    require(grad_clip_norm > 0.0, "TrainConfig: grad_clip_norm must be > 0");
  }
};

struct EpochStats {
  double mean = 0.0;
  double stddev = 0.0;
};

struct TrainResult {
  StructuredModel model;
  std::vector<EpochStats> history;  // per-epoch batch-loss mean and spread
  bool diverged = false;
  int epochs_run = 0;
};

/// AdamW (beta1 0.9, beta2 0.999, eps 1e-8, decoupled weight decay) over
/// seed-shuffled minibatches. Deterministic given identical inputs. On a
/// non-finite loss the run aborts and the last end-of-epoch parameters are
/// returned with diverged = true.
TrainResult train(const StructuredModel& init, const TransitionDataset& dataset,
                  const TrainConfig& config);

/// Decoupled-weight-decay Adam on a flat parameter vector.
class AdamW {
 public:
  AdamW(Eigen::Index size, double learning_rate, double weight_decay);

  void step(Vec& theta, const Vec& grad, double lr_scale = 1.0);
  int steps_taken() const { return t_; }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  double lr_;
  double wd_;
  int t_ = 0;
  Vec m_;
  Vec v_;
};

struct CheckpointMeta {
  double final_loss_mean = 0.0;
  double final_loss_std = 0.0;
  int epochs = 0;
  std::uint64_t seed = 0;
};

/// JSON checkpoint; flattened weights are stored layer by layer, each weight
/// matrix row-major followed by its bias. load(save(x)) reproduces bitwise
/// identical head outputs; a version mismatch or malformed file raises
/// IoError without partial loading.
void save_checkpoint(const StructuredModel& model, const std::string& path,
                     const CheckpointMeta& meta = {});
std::pair<StructuredModel, CheckpointMeta> load_checkpoint(const std::string& path);

/// Concatenated flatten of all four heads (mass, potential, damping, input).
Vec flatten_model(const StructuredModel& model);
void unflatten_into_model(const Vec& theta, StructuredModel& model);

}  // namespace dynlearn
