#include "dynlearn/metrics.hpp"

#include <chrono>
#include <cmath>

#include "dynlearn/integrators.hpp"

namespace dynlearn {

StatePredictor structured_predictor(const DynamicsModel& model, ModelKind kind) {
  const int n = model.config_dim();
  const VectorField field =
      kind == ModelKind::LNN ? lnn_vector_field(model) : hnn_vector_field(model);
  return [field, n](const Vec& q, const Vec& w, const Vec& u, double dt) {
    Vec x(2 * n);
    x << q, w;
    return rk4_step(field, x, u, dt);
  };
}

StatePredictor blackbox_predictor(const BlackBoxModel& model) {
  const int n = model.n;
  if (model.kind == ModelKind::HNN) {
    return [model, n](const Vec& q, const Vec& w, const Vec& u, double dt) {
      return Vec(model.predict(q, w, u, dt));
    };
  }
  return [model, n](const Vec& q, const Vec& w, const Vec& u, double dt) {
    const Vec qd_next = model.predict(q, w, u, dt);
    Vec x(2 * n);
    x.head(n) = q + 0.5 * dt * (w + qd_next);
    x.tail(n) = qd_next;
    return x;
  };
}

std::vector<std::vector<const TransitionSample*>> group_by_trajectory(
    const TransitionDataset& dataset) {
  std::vector<std::vector<const TransitionSample*>> groups;
  int current = std::numeric_limits<int>::min();
  for (const auto& s : dataset.samples) {
    if (groups.empty() || s.trajectory_id != current) {
      groups.emplace_back();
      current = s.trajectory_id;
    }
    groups.back().push_back(&s);
  }
  return groups;
}

Vec configuration_range(const TransitionDataset& dataset) {
  require(!dataset.samples.empty(), "configuration_range: empty dataset");
  Vec lo = dataset.samples[0].q;
  Vec hi = dataset.samples[0].q;
  for (const auto& s : dataset.samples) {
    lo = lo.cwiseMin(s.q);
    hi = hi.cwiseMax(s.q);
  }
  return hi - lo;
}

namespace {

struct Running {
  double sum = 0.0;
  double sum_sq = 0.0;
  long count = 0;

  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++count;
  }
  double mean() const { return count > 0 ? sum / static_cast<double>(count) : 0.0; }
  double stddev() const {
    if (count <= 0) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, sum_sq / static_cast<double>(count) - m * m));
  }
};

}  // namespace

Metrics evaluate_model(const StatePredictor& predictor, const TransitionDataset& test,
                       const EvalOptions& options) {
  require(!test.samples.empty(), "evaluate_model: empty test set");
  require(options.horizon >= 1 && options.window >= 1, "evaluate_model: bad options");
  const auto start_time = std::chrono::steady_clock::now();
  const int n = test.n;
  const bool hnn = test.kind == ModelKind::HNN;

  Metrics metrics;
  metrics.rollout_horizon = options.horizon;
  metrics.window = options.window;
  metrics.samples = static_cast<int>(test.samples.size());

  Running one_step, free_roll, windowed;
  const auto groups = group_by_trajectory(test);
  metrics.trajectories = static_cast<int>(groups.size());

  for (const auto& group : groups) {
    // LNN samples carry q_{k+1} only through the next sample's q field
    const int usable = hnn ? static_cast<int>(group.size())
                           : static_cast<int>(group.size()) - 1;
    require(usable >= options.horizon, "evaluate_model: horizon exceeds trajectory length");
    // one-step loss on every sample
    for (const TransitionSample* s : group) {
      const Vec next = predictor(s->q, s->w, s->u, s->dt);
      double err = (s->label_w - next.tail(n)).squaredNorm();
      if (hnn) err += (s->label_q - next.head(n)).squaredNorm();
      one_step.add(err);
    }
    // free and windowed rollouts from the trajectory start
    Vec free_state(2 * n);
    free_state << group[0]->q, group[0]->w;
    Vec win_state = free_state;
    for (int k = 0; k < options.horizon; ++k) {
      const TransitionSample* s = group[static_cast<size_t>(k)];
      if (k % options.window == 0 && k > 0) {
        win_state << s->q, s->w;  // reset to the measured state
      }
      free_state = predictor(free_state.head(n), free_state.tail(n), s->u, s->dt);
      win_state = predictor(win_state.head(n), win_state.tail(n), s->u, s->dt);
      // truth at step k+1: the HNN label, or the next LNN sample's q
      const Vec truth_q = hnn ? s->label_q : group[static_cast<size_t>(k) + 1]->q;
      free_roll.add((free_state.head(n) - truth_q).norm());
      windowed.add((win_state.head(n) - truth_q).norm());
    }
  }

  metrics.one_step_mean = one_step.mean();
  metrics.one_step_std = one_step.stddev();
  metrics.rollout_mean = free_roll.mean();
  metrics.rollout_std = free_roll.stddev();
  metrics.windowed_mean = windowed.mean();
  metrics.windowed_std = windowed.stddev();
  metrics.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return metrics;
}

}  // namespace dynlearn
