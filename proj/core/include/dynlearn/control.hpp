#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "dynlearn/model.hpp"
#include "dynlearn/plants.hpp"
#include "dynlearn/types.hpp"

namespace dynlearn {

/// Diagonal positive-definite PD gains.
struct GainSchedule {
  Vec kp;
  Vec kd;

  static GainSchedule uniform(int n, double kp_value, double kd_value);
  GainSchedule scaled(double factor) const;

  void validate() const {
    require(kp.size() == kd.size() && kp.size() >= 1, "GainSchedule: size mismatch");
    require(kp.minCoeff() > 0.0 && kd.minCoeff() > 0.0,
            "GainSchedule: gains must be positive");
  }
  Mat kp_matrix() const { return kp.asDiagonal(); }
  Mat kd_matrix() const { return kd.asDiagonal(); }
};

/// The 7-joint gain preset used in the rigid-robot hardware runs.
GainSchedule panda_gains();

/// Configuration-space reference with bounded derivatives.
struct ReferenceSignal {
  std::function<Vec(double)> q;
  std::function<Vec(double)> qd;
  std::function<Vec(double)> qdd;

  static ReferenceSignal constant(Vec q_ref);
  static ReferenceSignal sinusoid(Vec center, Vec amplitude, double frequency_hz,
                                  double phase = 0.0);
};

/// u = A_L^+(q) G_L(q) + A_L^T(q) (K_P (q_ref - q) - K_D qd); the
/// pseudo-inverse is computed by column-pivoted least squares and requires
/// full column rank (singular values above 1e-10 of the largest).
Vec regulation_control(const DynamicsModel& model, const Vec& q, const Vec& qd,
                       const Vec& q_ref, const GainSchedule& gains);

/// u = A_L^-1(q) (M_L(qr) qddr + C_L(qr, qdr) qdr + D_L(qr) qdr + G_L(qr))
///   + A_L^T(q) (K_P (qr - q) + K_D (qdr - qd)); requires square
/// nonsingular A_L.
Vec tracking_control(const DynamicsModel& model, const Vec& q, const Vec& qd,
                     const ReferenceSignal& ref, double t, const GainSchedule& gains);

using Controller = std::function<Vec(double t, const Vec& q, const Vec& qd)>;

Controller regulation_controller(const DynamicsModel& model, Vec q_ref,
                                 const GainSchedule& gains);
Controller tracking_controller(const DynamicsModel& model, const ReferenceSignal& ref,
                               const GainSchedule& gains);

struct ClosedLoopOptions {
  double dt = 1e-3;
  double duration = 5.0;
  int control_decimation = 1;  // controller update period, in plant steps
  std::optional<double> torque_limit;

  void validate() const {
    require(dt > 0.0 && duration > dt, "ClosedLoopOptions: bad dt/duration");
    require(control_decimation >= 1, "ClosedLoopOptions: decimation must be >= 1");
    if (torque_limit) require(*torque_limit > 0.0, "ClosedLoopOptions: bad torque limit");
  }
};

struct ControlLog {
  std::vector<double> t;
  std::vector<Vec> q;
  std::vector<Vec> qd;
  std::vector<Vec> q_ref;
  std::vector<Vec> u;
  std::vector<bool> clipped;
  int clip_events = 0;
};

/// RK4 closed-loop rollout of the analytic plant under the controller; the
/// control signal is held between controller updates (zero-order hold).
ControlLog closed_loop(const Plant& plant, const Controller& controller,
                       const ReferenceSignal& ref, const Vec& x0,
                       const ClosedLoopOptions& options);

/// CSV log: t, q.., q_ref.., u.., clipped
void save_control_log_csv(const ControlLog& log, const std::string& path);

struct TrackingStats {
  double rmse = 0.0;      // sqrt of time-mean of coordinate-mean squared error
  double rmse_pct = 0.0;  // max over coordinates of rmse_i / (max-min of ref_i), in %
};

/// Errors are measured after discarding the initial settle_fraction of the
/// log (the hardware-style convention: report steady tracking quality).
TrackingStats tracking_stats(const ControlLog& log, double settle_fraction = 0.2);

/// Per-sample multiplicative-factor estimate P(q) = M_L(q) M_gt^-1(q) with
/// the residuals and the two regulation conditions evaluated at q.
struct ConsistencySample {
  Vec q;
  Mat p;
  double r_g = 0.0;
  double r_a = 0.0;
  double r_d = 0.0;
  bool cond_transpose = false;   // sym part of A (A_L - P A)^T + A A^T P^T > 0
  bool cond_smallness = false;   // ||A^-1 P^-1 (A_L - P A)||_2 < 1
};

struct ConsistencyReport {
  std::vector<ConsistencySample> samples;
  double median_r_g = 0.0;
  double median_r_a = 0.0;
  double median_r_d = 0.0;
  bool all_cond_transpose = false;
  bool all_cond_smallness = false;
};

ConsistencyReport estimate_P(const DynamicsModel& learned, const Plant& plant,
                             const std::vector<Vec>& q_grid);

}  // namespace dynlearn
