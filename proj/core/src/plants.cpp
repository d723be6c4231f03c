#include "dynlearn/plants.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "dynlearn/dual.hpp"
#include "dynlearn/dynamics.hpp"
#include "dynlearn/integrators.hpp"

namespace dynlearn {

namespace {

constexpr double kGravity = 9.81;
constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// damped pendulum: M = m l^2, V = -m g l cos q, D = d, A = [a]
// ---------------------------------------------------------------------------

struct PendulumParams {
  double m = 1.0, l = 1.0, d = 0.1, a = 2.0, g = kGravity;
};

Plant pendulum_plant(const PendulumParams& pp) {
  Plant plant;
  plant.id = "damped_pendulum";
  plant.n = 1;
  plant.m_u = 1;
  plant.params = {{"m", pp.m}, {"l", pp.l}, {"d", pp.d}, {"a", pp.a}, {"g", pp.g}};
  plant.mass = [pp](const Vec& q) {
    require(q.size() == 1, "pendulum: q length");
    return Mat::Constant(1, 1, pp.m * pp.l * pp.l);
  };
  plant.mass_jacobian = [](const Vec& q) {
    require(q.size() == 1, "pendulum: q length");
    return Tensor3(1, 1, 1);
  };
  plant.potential = [pp](const Vec& q) { return -pp.m * pp.g * pp.l * std::cos(q[0]); };
  plant.potential_grad = [pp](const Vec& q) {
    return Vec::Constant(1, pp.m * pp.g * pp.l * std::sin(q[0]));
  };
  plant.damping = [pp](const Vec&) { return Mat::Constant(1, 1, pp.d); };
  plant.input_matrix = [pp](const Vec&) { return Mat::Constant(1, 1, pp.a); };
  return plant;
}

// ---------------------------------------------------------------------------
// planar two-link arm, absolute gravity, q measured from the downward
// vertical; A has a non-collocated coupling in the second row.
// ---------------------------------------------------------------------------

struct TwoLinkParams {
  double m1 = 1.0, m2 = 1.0, l1 = 1.0, lc1 = 0.5, lc2 = 0.5;
  double i1 = 0.5, i2 = 0.5, d = 0.1, g = kGravity;
};

Plant two_link_plant(const TwoLinkParams& pp) {
  Plant plant;
  plant.id = "two_link_arm";
  plant.n = 2;
  plant.m_u = 2;
  plant.params = {{"m1", pp.m1}, {"m2", pp.m2}, {"l1", pp.l1}, {"lc1", pp.lc1},
                  {"lc2", pp.lc2}, {"I1", pp.i1}, {"I2", pp.i2}, {"d", pp.d}, {"g", pp.g}};
  plant.mass = [pp](const Vec& q) {
    require(q.size() == 2, "two_link_arm: q length");
    const double c2 = std::cos(q[1]);
    Mat m(2, 2);
    m(0, 0) = pp.m1 * pp.lc1 * pp.lc1 + pp.i1 +
              pp.m2 * (pp.l1 * pp.l1 + pp.lc2 * pp.lc2 + 2.0 * pp.l1 * pp.lc2 * c2) + pp.i2;
    m(0, 1) = m(1, 0) = pp.m2 * (pp.lc2 * pp.lc2 + pp.l1 * pp.lc2 * c2) + pp.i2;
    m(1, 1) = pp.m2 * pp.lc2 * pp.lc2 + pp.i2;
    return m;
  };
  plant.mass_jacobian = [pp](const Vec& q) {
    require(q.size() == 2, "two_link_arm: q length");
    const double s2 = std::sin(q[1]);
    Tensor3 t(2, 2, 2);
    Mat& d2 = t.slice(1);
    d2(0, 0) = -2.0 * pp.m2 * pp.l1 * pp.lc2 * s2;
    d2(0, 1) = d2(1, 0) = -pp.m2 * pp.l1 * pp.lc2 * s2;
    return t;
  };
  plant.potential = [pp](const Vec& q) {
    return -(pp.m1 * pp.lc1 + pp.m2 * pp.l1) * pp.g * std::cos(q[0]) -
           pp.m2 * pp.lc2 * pp.g * std::cos(q[0] + q[1]);
  };
  plant.potential_grad = [pp](const Vec& q) {
    Vec g(2);
    const double s1 = std::sin(q[0]);
    const double s12 = std::sin(q[0] + q[1]);
    g[0] = (pp.m1 * pp.lc1 + pp.m2 * pp.l1) * pp.g * s1 + pp.m2 * pp.lc2 * pp.g * s12;
    g[1] = pp.m2 * pp.lc2 * pp.g * s12;
    return g;
  };
  plant.damping = [pp](const Vec&) { return Mat(pp.d * Mat::Identity(2, 2)); };
  plant.input_matrix = [](const Vec&) {
    Mat a(2, 2);
    a << 1.0, 0.0, 0.5, 1.0;
    return a;
  };
  return plant;
}

// ---------------------------------------------------------------------------
// constant-curvature segment with a point mass at the tip, configuration
// (dx, dy, dl) (planar: (dx, dl)); straight-chord tendons from the base ring
// to the tip ring provide a configuration-dependent square input matrix.
// ---------------------------------------------------------------------------

struct PccParams {
  double l0 = 1.0;        // rest backbone length [m]
  double d = 0.6;         // arc-length-difference offset [m]
  double r_ring = 0.5;    // tendon ring radius [m]
  double m = 0.5;         // tip mass [kg]
  double g = kGravity;
  double eps_reg = 1e-4;  // inertia regularization away from rank deficiency
  double theta_max = 2.5;
  double min_len = 0.25;  // fraction of l0
  Vec stiffness;          // per configuration coordinate
  bool planar = false;

  int n() const { return planar ? 2 : 3; }
};

/// q repacked to (dx, dy, dl) with dy = 0 in the planar case.
template <typename T>
std::array<T, 3> pcc_unpack(const PccParams& pp, const T* q) {
  if (pp.planar) return {q[0], T(0.0), q[1]};
  return {q[0], q[1], q[2]};
}

template <typename T>
std::array<T, 3> pcc_tip(const PccParams& pp, const std::array<T, 3>& qv) {
  const T length = pp.l0 + qv[2];
  const T t = (qv[0] * qv[0] + qv[1] * qv[1]) / (pp.d * pp.d);  // theta^2
  const T hc = versine_sqrt(t);
  const T hs = sinc_sqrt(t);
  return {length * qv[0] / pp.d * hc, length * qv[1] / pp.d * hc, length * hs};
}

/// Row-major rotation of the tip frame, smooth through the straight pose.
template <typename T>
std::array<T, 9> pcc_rotation(const PccParams& pp, const std::array<T, 3>& qv) {
  const double d2 = pp.d * pp.d;
  const T t = (qv[0] * qv[0] + qv[1] * qv[1]) / d2;
  const T hc = versine_sqrt(t);
  const T hs = sinc_sqrt(t);
  return {
      1.0 - qv[0] * qv[0] / d2 * hc, -(qv[0] * qv[1] / d2) * hc, qv[0] / pp.d * hs,
      -(qv[0] * qv[1] / d2) * hc,    1.0 - qv[1] * qv[1] / d2 * hc, qv[1] / pp.d * hs,
      -(qv[0] / pp.d) * hs,          -(qv[1] / pp.d) * hs,          1.0 - t * hc,
  };
}

/// Straight-chord tendon lengths from base ring to tip ring.
template <typename T>
void pcc_tendon_lengths(const PccParams& pp, const std::array<T, 3>& qv, T* out) {
  const auto tip = pcc_tip(pp, qv);
  const auto rot = pcc_rotation(pp, qv);
  const int count = pp.n();
  for (int i = 0; i < count; ++i) {
    const double alpha = pp.planar ? (i == 0 ? 0.0 : kPi) : 2.0 * kPi * i / 3.0;
    const double ax = pp.r_ring * std::cos(alpha);
    const double ay = pp.r_ring * std::sin(alpha);
    const T px = tip[0] + rot[0] * ax + rot[1] * ay - ax;
    const T py = tip[1] + rot[3] * ax + rot[4] * ay - ay;
    const T pz = tip[2] + rot[6] * ax + rot[7] * ay;
    out[i] = sqrt(px * px + py * py + pz * pz);
  }
}

/// Gravity (stabilizing toward the straight pose) plus linear elasticity.
template <typename T>
T pcc_potential(const PccParams& pp, const T* q) {
  const auto qv = pcc_unpack(pp, q);
  const auto tip = pcc_tip(pp, qv);
  T v = -pp.m * pp.g * tip[2];
  for (int i = 0; i < pp.n(); ++i) v = v + 0.5 * pp.stiffness[i] * q[i] * q[i];
  return v;
}

void pcc_check_domain(const PccParams& pp, const Vec& q) {
  const double dx = q[0];
  const double dy = pp.planar ? 0.0 : q[1];
  const double dl = pp.planar ? q[1] : q[2];
  const double theta = std::sqrt(dx * dx + dy * dy) / pp.d;
  if (theta > pp.theta_max)
    throw PlantDomainError("pcc segment: curvature angle " + std::to_string(theta) +
                           " outside operating domain");
  if (pp.l0 + dl < pp.min_len * pp.l0)
    throw PlantDomainError("pcc segment: backbone length collapsed");
}

Mat pcc_position_jacobian(const PccParams& pp, const Vec& q) {
  const int n = pp.n();
  Mat jac(3, n);
  for (int i = 0; i < n; ++i) {
    std::array<Dual<double>, 3> qd;
    for (int j = 0; j < n; ++j) qd[static_cast<size_t>(j)] = {q[j], i == j ? 1.0 : 0.0};
    const auto tip = pcc_tip(pp, pcc_unpack(pp, qd.data()));
    for (int a = 0; a < 3; ++a) jac(a, i) = tip[static_cast<size_t>(a)].d;
  }
  return jac;
}

Plant pcc_plant(const PccParams& pp) {
  Plant plant;
  plant.id = pp.planar ? "pcc_segment_planar" : "pcc_segment_spatial";
  plant.n = pp.n();
  plant.m_u = pp.n();
  plant.params = {{"l0", pp.l0},     {"d", pp.d},           {"r_ring", pp.r_ring},
                  {"m", pp.m},       {"g", pp.g},           {"eps_reg", pp.eps_reg},
                  {"k0", pp.stiffness[0]}, {"k_last", pp.stiffness[pp.n() - 1]}};

  plant.mass = [pp](const Vec& q) {
    require(q.size() == pp.n(), "pcc: q length");
    pcc_check_domain(pp, q);
    const Mat jac = pcc_position_jacobian(pp, q);
    return Mat(pp.m * jac.transpose() * jac +
               pp.eps_reg * Mat::Identity(pp.n(), pp.n()));
  };

  plant.mass_jacobian = [pp](const Vec& q) {
    require(q.size() == pp.n(), "pcc: q length");
    pcc_check_domain(pp, q);
    const int n = pp.n();
    Mat jac(3, n);
    Tensor3 out(n, n, n);
    for (int k = 0; k < n; ++k) {
      Mat djac(3, n);  // d(jac)/dq_k
      for (int i = 0; i < n; ++i) {
        std::array<Dual<Dual<double>>, 3> qd;
        for (int j = 0; j < n; ++j)
          qd[static_cast<size_t>(j)] = {{q[j], i == j ? 1.0 : 0.0},
                                        {j == k ? 1.0 : 0.0, 0.0}};
        const auto tip = pcc_tip(pp, pcc_unpack(pp, qd.data()));
        for (int a = 0; a < 3; ++a) {
          jac(a, i) = tip[static_cast<size_t>(a)].v.d;
          djac(a, i) = tip[static_cast<size_t>(a)].d.d;
        }
      }
      out.slice(k) = pp.m * (djac.transpose() * jac + jac.transpose() * djac);
    }
    return out;
  };

  plant.potential = [pp](const Vec& q) {
    require(q.size() == pp.n(), "pcc: q length");
    pcc_check_domain(pp, q);
    return pcc_potential(pp, q.data());
  };

  plant.potential_grad = [pp](const Vec& q) {
    require(q.size() == pp.n(), "pcc: q length");
    pcc_check_domain(pp, q);
    const int n = pp.n();
    Vec g(n);
    for (int i = 0; i < n; ++i) {
      std::array<Dual<double>, 3> qd;
      for (int j = 0; j < n; ++j) qd[static_cast<size_t>(j)] = {q[j], i == j ? 1.0 : 0.0};
      g[i] = pcc_potential(pp, qd.data()).d;
    }
    return g;
  };

  plant.damping = [pp](const Vec&) {
    return Mat(0.1 * Mat::Identity(pp.n(), pp.n()));
  };

  plant.input_matrix = [pp](const Vec& q) {
    require(q.size() == pp.n(), "pcc: q length");
    pcc_check_domain(pp, q);
    const int n = pp.n();
    Mat a(n, n);  // A_ij = dL_j/dq_i
    for (int i = 0; i < n; ++i) {
      std::array<Dual<double>, 3> qd;
      for (int j = 0; j < n; ++j) qd[static_cast<size_t>(j)] = {q[j], i == j ? 1.0 : 0.0};
      std::array<Dual<double>, 3> lens;
      pcc_tendon_lengths(pp, pcc_unpack(pp, qd.data()), lens.data());
      for (int j = 0; j < n; ++j) a(i, j) = lens[static_cast<size_t>(j)].d;
    }
    return a;
  };

  return plant;
}

}  // namespace

Plant make_damped_pendulum() { return pendulum_plant(PendulumParams{}); }

Plant make_two_link_arm() { return two_link_plant(TwoLinkParams{}); }

Plant make_pcc_segment_planar() {
  PccParams pp;
  pp.planar = true;
  pp.stiffness = Vec(2);
  pp.stiffness << 25.0, 300.0;
  return pcc_plant(pp);
}

Plant make_pcc_segment_spatial() {
  PccParams pp;
  pp.planar = false;
  pp.stiffness = Vec(3);
  pp.stiffness << 25.0, 25.0, 300.0;
  return pcc_plant(pp);
}

std::map<std::string, Plant> builtin_plants() {
  std::map<std::string, Plant> plants;
  for (auto&& plant : {make_damped_pendulum(), make_two_link_arm(),
                       make_pcc_segment_planar(), make_pcc_segment_spatial()})
    plants.emplace(plant.id, plant);
  return plants;
}

Plant builtin_plant(const std::string& id) {
  auto plants = builtin_plants();
  const auto it = plants.find(id);
  if (it == plants.end()) throw DimensionError("unknown plant: " + id);
  return it->second;
}

Mat coriolis_matrix(const Plant& plant, const Vec& q, const Vec& qd) {
  require(q.size() == plant.n && qd.size() == plant.n, "coriolis_matrix: dims");
  const Tensor3 dm = plant.mass_jacobian(q);
  const int n = plant.n;
  Mat c = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        c(i, j) += 0.5 *
                   (dm.slice(k)(i, j) + dm.slice(j)(i, k) - dm.slice(i)(j, k)) * qd[k];
  return c;
}

Vec plant_forward_dynamics(const Plant& plant, const Vec& q, const Vec& qd, const Vec& u) {
  require(q.size() == plant.n && qd.size() == plant.n && u.size() == plant.m_u,
          "plant_forward_dynamics: dims");
  const Vec rhs = plant.input_matrix(q) * u - coriolis_matrix(plant, q, qd) * qd -
                  plant.potential_grad(q) - plant.damping(q) * qd;
  return mass_solve(plant.mass(q), rhs);
}

VectorField plant_vector_field(const Plant& plant) {
  const int n = plant.n;
  return [plant, n](const Vec& x, const Vec& u) {
    require(x.size() == 2 * n, "plant_vector_field: state must be [q; qd]");
    Vec out(2 * n);
    out.head(n) = x.tail(n);
    out.tail(n) = plant_forward_dynamics(plant, x.head(n), x.tail(n), u);
    return out;
  };
}

Vec InputSignal::value(double t) const {
  require(amplitude.size() >= 1, "InputSignal: amplitude required");
  require(frequency_hz >= 0.0, "InputSignal: frequency must be >= 0");
  double envelope = 0.0;
  switch (kind) {
    case Kind::Sinusoid:
      envelope = std::sin(2.0 * kPi * frequency_hz * t + phase);
      break;
    case Kind::Chirp:
      envelope = std::sin(2.0 * kPi * frequency_hz * t * (1.0 + t / (2.0 * duration)) + phase);
      break;
    case Kind::Step:
      envelope = t >= phase ? 1.0 : 0.0;
      break;
    case Kind::Zero:
      envelope = 0.0;
      break;
  }
  return amplitude * envelope;
}

void GenSpec::validate() const {
  require(!initial_states.empty(), "GenSpec: initial_states required");
  require(!signals.empty(), "GenSpec: signals required");
  require(fine_dt > 0.0 && duration > fine_dt, "GenSpec: bad fine_dt/duration");
  require(!resample_hz.empty(), "GenSpec: resample_hz required");
  const double fine_hz = 1.0 / fine_dt;
  for (double hz : resample_hz) {
    require(hz > 0.0, "GenSpec: resample frequency must be > 0");
    const double stride = fine_hz / hz;
    require(std::abs(stride - std::round(stride)) < 1e-9 * stride,
            "GenSpec: resample frequency must divide the fine rate");
  }
  for (Eigen::Index i = 0; i < noise_sigma.size(); ++i)
    require(noise_sigma[i] >= 0.0, "GenSpec: noise sigma must be >= 0");
}

namespace {

/// Centered moving average with shrinking windows at the edges.
std::vector<Vec> moving_average(const std::vector<Vec>& xs, int window) {
  if (window <= 1) return xs;
  const int half = window / 2;
  std::vector<Vec> out(xs.size());
  const int size = static_cast<int>(xs.size());
  for (int i = 0; i < size; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(size - 1, i + half);
    Vec acc = Vec::Zero(xs[0].size());
    for (int j = lo; j <= hi; ++j) acc += xs[static_cast<size_t>(j)];
    out[static_cast<size_t>(i)] = acc / static_cast<double>(hi - lo + 1);
  }
  return out;
}

}  // namespace

GenResult generate_dataset(const GenSpec& spec) {
  spec.validate();
  const Plant plant = builtin_plant(spec.plant_id);
  const VectorField field = plant_vector_field(plant);
  const int n = plant.n;
  const int steps = static_cast<int>(std::round(spec.duration / spec.fine_dt));

  require(spec.noise_sigma.size() == 0 || spec.noise_sigma.size() == 1 ||
              spec.noise_sigma.size() == 2 * n,
          "GenSpec: noise_sigma must be empty, scalar, or one entry per state channel");

  GenResult result;
  result.dataset.kind = spec.label_kind;
  result.dataset.n = n;
  result.dataset.m_u = plant.m_u;
  result.dataset.plant_id = plant.id;
  result.dataset.sampling_hz = spec.resample_hz;
  result.dataset.split_seed = spec.seed;

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  int raw_id = 0;
  int traj_id = 0;
  for (const Vec& x0 : spec.initial_states) {
    require(x0.size() == 2 * n, "GenSpec: initial state must be [q; qd]");
    for (const InputSignal& signal : spec.signals) {
      require(signal.amplitude.size() == plant.m_u,
              "GenSpec: signal amplitude length must match plant inputs");
      RolloutConfig config{spec.fine_dt, steps, std::nullopt};
      InputSchedule schedule = [&signal, &spec](int k) {
        return signal.value(k * spec.fine_dt);
      };
      std::vector<Vec> states;
      try {
        states = rollout(field, x0, schedule, config);
      } catch (const std::exception& e) {
        result.failures.emplace_back(raw_id++, e.what());
        continue;
      }

      RawTrajectory raw;
      raw.id = raw_id++;
      raw.dt = spec.fine_dt;
      raw.times.resize(states.size());
      for (size_t k = 0; k < states.size(); ++k)
        raw.times[k] = static_cast<double>(k) * spec.fine_dt;
      raw.states = states;
      raw.inputs.reserve(static_cast<size_t>(steps));
      for (int k = 0; k < steps; ++k) raw.inputs.push_back(schedule(k));

      for (double hz : spec.resample_hz) {
        const int stride = static_cast<int>(std::round(1.0 / (hz * spec.fine_dt)));
        const double dt = 1.0 / hz;
        const int count = steps / stride;  // resampled transitions
        std::vector<Vec> resampled;
        resampled.reserve(static_cast<size_t>(count) + 1);
        for (int j = 0; j <= count; ++j)
          resampled.push_back(states[static_cast<size_t>(j) * stride]);

        if (spec.noise_sigma.size() > 0) {
          for (auto& x : resampled)
            for (Eigen::Index c = 0; c < x.size(); ++c) {
              const double sigma =
                  spec.noise_sigma.size() == 1 ? spec.noise_sigma[0] : spec.noise_sigma[c];
              x[c] += sigma * gauss(rng);
            }
        }
        if (spec.smooth_window > 1) resampled = moving_average(resampled, spec.smooth_window);

        for (int j = 0; j < count; ++j) {
          const Vec& xk = resampled[static_cast<size_t>(j)];
          const Vec& xn = resampled[static_cast<size_t>(j) + 1];
          TransitionSample sample;
          sample.trajectory_id = traj_id;
          sample.q = xk.head(n);
          sample.u = signal.value(j * stride * spec.fine_dt);
          sample.dt = dt;
          if (spec.label_kind == ModelKind::LNN) {
            sample.w = xk.tail(n);
            sample.label_w = xn.tail(n);
          } else {
            sample.w = plant.mass(xk.head(n)) * xk.tail(n);
            sample.label_q = xn.head(n);
            sample.label_w = plant.mass(xn.head(n)) * xn.tail(n);
          }
          result.dataset.samples.push_back(std::move(sample));
        }
        ++traj_id;
      }
      result.trajectories.push_back(std::move(raw));
    }
  }
  return result;
}

GenSpec default_gen_spec(const std::string& plant_id, int n_states, int n_signals,
                         std::uint64_t seed) {
  require(n_states >= 1 && n_signals >= 1, "default_gen_spec: counts must be >= 1");
  const Plant plant = builtin_plant(plant_id);
  GenSpec spec;
  spec.plant_id = plant_id;
  spec.seed = seed;

  Vec q_range, qd_range;
  double amp = 1.0;
  if (plant_id == "damped_pendulum") {
    q_range = Vec::Constant(1, 1.5);
    qd_range = Vec::Constant(1, 2.0);
    amp = 2.0;
  } else if (plant_id == "two_link_arm") {
    q_range = Vec::Constant(2, 1.2);
    qd_range = Vec::Constant(2, 1.5);
    amp = 3.0;
  } else {
    q_range = Vec::Constant(plant.n, 0.55);
    q_range[plant.n - 1] = 0.18;  // elongation channel
    qd_range = Vec::Constant(plant.n, 0.4);
    amp = 4.0;
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int s = 0; s < n_states; ++s) {
    Vec x0(2 * plant.n);
    for (int i = 0; i < plant.n; ++i) x0[i] = q_range[i] * unit(rng);
    for (int i = 0; i < plant.n; ++i) x0[plant.n + i] = qd_range[i] * unit(rng);
    spec.initial_states.push_back(std::move(x0));
  }
  for (int s = 0; s < n_signals; ++s) {
    InputSignal signal;
    switch (s % 4) {
      case 0:
      case 2: signal.kind = InputSignal::Kind::Sinusoid; break;
      case 1: signal.kind = InputSignal::Kind::Chirp; break;
      default: signal.kind = InputSignal::Kind::Step; break;
    }
    signal.frequency_hz = 0.2 + 0.13 * s;
    signal.duration = spec.duration;
    signal.phase = signal.kind == InputSignal::Kind::Step
                       ? 0.5 + 0.25 * (s % 4)
                       : 0.5 * kPi * unit(rng);
    signal.amplitude = Vec(plant.m_u);
    for (int i = 0; i < plant.m_u; ++i) signal.amplitude[i] = amp * unit(rng);
    spec.signals.push_back(std::move(signal));
  }
  return spec;
}

}  // namespace dynlearn
