#include "dynlearn/control.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dynlearn/dynamics.hpp"
#include "dynlearn/integrators.hpp"

namespace dynlearn {

namespace {

constexpr double kRankTolerance = 1e-10;
constexpr double kTwoPi = 2.0 * 3.14159265358979323846;

Mat pseudo_inverse_full_rank(const Mat& a, const char* who) {
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(a);
  cod.setThreshold(kRankTolerance);
  if (cod.rank() < a.cols())
    throw NumericalError(who, "input matrix rank deficient");
  return cod.pseudoInverse();
}

Mat inverse_square(const Mat& a, const char* who) {
  require(a.rows() == a.cols(), std::string(who) + ": input matrix must be square");
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double smax = svd.singularValues()(0);
  if (svd.singularValues()(a.cols() - 1) <= kRankTolerance * smax)
    throw NumericalError(who, "input matrix singular");
  return a.inverse();
}

double spectral_norm(const Mat& a) {
  return Eigen::JacobiSVD<Mat>(a).singularValues()(0);
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<long>(mid), values.end());
  return values[mid];
}

}  // namespace

GainSchedule GainSchedule::uniform(int n, double kp_value, double kd_value) {
  GainSchedule gains{Vec::Constant(n, kp_value), Vec::Constant(n, kd_value)};
  gains.validate();
  return gains;
}

GainSchedule GainSchedule::scaled(double factor) const {
  GainSchedule gains{factor * kp, factor * kd};
  gains.validate();
  return gains;
}

GainSchedule panda_gains() {
  GainSchedule gains;
  gains.kp = Vec(7);
  gains.kp << 600, 600, 600, 600, 250, 150, 50;
  gains.kd = Vec(7);
  gains.kd << 30, 30, 30, 30, 10, 10, 5;
  return gains;
}

ReferenceSignal ReferenceSignal::constant(Vec q_ref) {
  const Eigen::Index n = q_ref.size();
  ReferenceSignal ref;
  ref.q = [q_ref = std::move(q_ref)](double) { return q_ref; };
  ref.qd = [n](double) { return Vec::Zero(n); };
  ref.qdd = [n](double) { return Vec::Zero(n); };
  return ref;
}

ReferenceSignal ReferenceSignal::sinusoid(Vec center, Vec amplitude, double frequency_hz,
                                          double phase) {
  require(center.size() == amplitude.size(), "ReferenceSignal: size mismatch");
  const double omega = kTwoPi * frequency_hz;
  ReferenceSignal ref;
  ref.q = [=](double t) { return Vec(center + amplitude * std::sin(omega * t + phase)); };
  ref.qd = [=](double t) { return Vec(amplitude * omega * std::cos(omega * t + phase)); };
  ref.qdd = [=](double t) {
    return Vec(-amplitude * omega * omega * std::sin(omega * t + phase));
  };
  return ref;
}

Vec regulation_control(const DynamicsModel& model, const Vec& q, const Vec& qd,
                       const Vec& q_ref, const GainSchedule& gains) {
  gains.validate();
  require(q.size() == model.config_dim() && qd.size() == model.config_dim() &&
              q_ref.size() == model.config_dim() && gains.kp.size() == model.config_dim(),
          "regulation_control: dimension mismatch");
  const Mat a = model.input_matrix(q);
  const Mat a_pinv = pseudo_inverse_full_rank(a, "regulation_control");
  const Vec feedback = gains.kp.cwiseProduct(q_ref - q) - gains.kd.cwiseProduct(qd);
  return a_pinv * model.potential_grad(q) + a.transpose() * feedback;
}

Vec tracking_control(const DynamicsModel& model, const Vec& q, const Vec& qd,
                     const ReferenceSignal& ref, double t, const GainSchedule& gains) {
  gains.validate();
  require(q.size() == model.config_dim() && qd.size() == model.config_dim() &&
              gains.kp.size() == model.config_dim(),
          "tracking_control: dimension mismatch");
  const Vec qr = ref.q(t);
  const Vec qdr = ref.qd(t);
  const Vec qddr = ref.qdd(t);
  const Mat a = model.input_matrix(q);
  const Mat a_inv = inverse_square(a, "tracking_control");
  const Vec feedforward = model.mass(qr) * qddr + coriolis_force(model, qr, qdr) +
                          model.damping(qr) * qdr + model.potential_grad(qr);
  const Vec feedback =
      gains.kp.cwiseProduct(qr - q) + gains.kd.cwiseProduct(qdr - qd);
  return a_inv * feedforward + a.transpose() * feedback;
}

Controller regulation_controller(const DynamicsModel& model, Vec q_ref,
                                 const GainSchedule& gains) {
  return [&model, q_ref = std::move(q_ref), gains](double, const Vec& q, const Vec& qd) {
    return regulation_control(model, q, qd, q_ref, gains);
  };
}

Controller tracking_controller(const DynamicsModel& model, const ReferenceSignal& ref,
                               const GainSchedule& gains) {
  return [&model, ref, gains](double t, const Vec& q, const Vec& qd) {
    return tracking_control(model, q, qd, ref, t, gains);
  };
}

ControlLog closed_loop(const Plant& plant, const Controller& controller,
                       const ReferenceSignal& ref, const Vec& x0,
                       const ClosedLoopOptions& options) {
  options.validate();
  require(x0.size() == 2 * plant.n, "closed_loop: x0 must be [q; qd]");
  const int steps = static_cast<int>(std::round(options.duration / options.dt));
  const VectorField field = plant_vector_field(plant);

  ControlLog log;
  Vec x = x0;
  Vec u_held = Vec::Zero(plant.m_u);
  bool held_clipped = false;  // the held torque stays clipped between updates
  for (int k = 0; k < steps; ++k) {
    const double t = k * options.dt;
    const Vec q = x.head(plant.n);
    const Vec qd = x.tail(plant.n);
    if (k % options.control_decimation == 0) {
      u_held = controller(t, q, qd);
      held_clipped = false;
      if (options.torque_limit) {
        for (Eigen::Index i = 0; i < u_held.size(); ++i) {
          if (std::abs(u_held[i]) > *options.torque_limit) {
            u_held[i] = std::clamp(u_held[i], -*options.torque_limit, *options.torque_limit);
            held_clipped = true;
          }
        }
      }
      if (held_clipped) ++log.clip_events;
    }
    log.t.push_back(t);
    log.q.push_back(q);
    log.qd.push_back(qd);
    log.q_ref.push_back(ref.q(t));
    log.u.push_back(u_held);
    log.clipped.push_back(held_clipped);
    x = rk4_step(field, x, u_held, options.dt);
  }
  // final state sample
  log.t.push_back(steps * options.dt);
  log.q.push_back(x.head(plant.n));
  log.qd.push_back(x.tail(plant.n));
  log.q_ref.push_back(ref.q(steps * options.dt));
  log.u.push_back(u_held);
  log.clipped.push_back(false);
  return log;
}

void save_control_log_csv(const ControlLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_control_log_csv: cannot open " + path);
  require(!log.q.empty(), "save_control_log_csv: empty log");
  const Eigen::Index n = log.q[0].size();
  const Eigen::Index m = log.u[0].size();
  out << "t";
  for (Eigen::Index i = 0; i < n; ++i) out << ",q" << i;
  for (Eigen::Index i = 0; i < n; ++i) out << ",q_ref" << i;
  for (Eigen::Index i = 0; i < m; ++i) out << ",u" << i;
  out << ",clipped\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ',' << buf;
  };
  for (size_t k = 0; k < log.t.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g", log.t[k]);
    out << buf;
    for (Eigen::Index i = 0; i < n; ++i) put(log.q[k][i]);
    for (Eigen::Index i = 0; i < n; ++i) put(log.q_ref[k][i]);
    for (Eigen::Index i = 0; i < m; ++i) put(log.u[k][i]);
    out << ',' << (log.clipped[k] ? 1 : 0) << "\n";
  }
}

TrackingStats tracking_stats(const ControlLog& log, double settle_fraction) {
  require(!log.q.empty(), "tracking_stats: empty log");
  require(settle_fraction >= 0.0 && settle_fraction < 1.0,
          "tracking_stats: settle_fraction must be in [0, 1)");
  const size_t start = static_cast<size_t>(settle_fraction * static_cast<double>(log.q.size()));
  const Eigen::Index n = log.q[0].size();

  Vec sq_sum = Vec::Zero(n);
  Vec ref_min = Vec::Constant(n, std::numeric_limits<double>::infinity());
  Vec ref_max = Vec::Constant(n, -std::numeric_limits<double>::infinity());
  size_t count = 0;
  for (size_t k = 0; k < log.q.size(); ++k) {
    ref_min = ref_min.cwiseMin(log.q_ref[k]);
    ref_max = ref_max.cwiseMax(log.q_ref[k]);
    if (k < start) continue;
    const Vec e = log.q[k] - log.q_ref[k];
    sq_sum += e.cwiseProduct(e);
    ++count;
  }
  TrackingStats stats;
  const Vec mse = sq_sum / static_cast<double>(count);
  stats.rmse = std::sqrt(mse.mean());
  double worst = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double range = ref_max[i] - ref_min[i];
    const double denom = range > 1e-12 ? range : 1.0;  // static reference: absolute error
    worst = std::max(worst, std::sqrt(mse[i]) / denom);
  }
  stats.rmse_pct = 100.0 * worst;
  return stats;
}

ConsistencyReport estimate_P(const DynamicsModel& learned, const Plant& plant,
                             const std::vector<Vec>& q_grid) {
  require(learned.config_dim() == plant.n, "estimate_P: dimension mismatch");
  require(!q_grid.empty(), "estimate_P: empty grid");
  ConsistencyReport report;
  std::vector<double> r_gs, r_as, r_ds;
  report.all_cond_transpose = true;
  report.all_cond_smallness = true;
  for (const Vec& q : q_grid) {
    ConsistencySample sample;
    sample.q = q;
    const Mat m_gt = plant.mass(q);
    const Mat a_gt = plant.input_matrix(q);
    sample.p = learned.mass(q) * m_gt.inverse();
    sample.r_g = (learned.potential_grad(q) - sample.p * plant.potential_grad(q)).norm();
    const Mat delta_a = learned.input_matrix(q) - sample.p * a_gt;
    sample.r_a = delta_a.norm();
    sample.r_d = (learned.damping(q) - sample.p * plant.damping(q)).norm();

    const Mat cond = a_gt * delta_a.transpose() +
                     a_gt * a_gt.transpose() * sample.p.transpose();
    const Mat sym = 0.5 * (cond + cond.transpose());
    sample.cond_transpose =
        Eigen::SelfAdjointEigenSolver<Mat>(sym).eigenvalues().minCoeff() > 0.0;
    sample.cond_smallness =
        spectral_norm(a_gt.inverse() * sample.p.inverse() * delta_a) < 1.0;

    report.all_cond_transpose = report.all_cond_transpose && sample.cond_transpose;
    report.all_cond_smallness = report.all_cond_smallness && sample.cond_smallness;
    r_gs.push_back(sample.r_g);
    r_as.push_back(sample.r_a);
    r_ds.push_back(sample.r_d);
    report.samples.push_back(std::move(sample));
  }
  report.median_r_g = median(r_gs);
  report.median_r_a = median(r_as);
  report.median_r_d = median(r_ds);
  return report;
}

}  // namespace dynlearn
