#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dynlearn/dataset.hpp"
#include "dynlearn/dynamics.hpp"
#include "dynlearn/heads.hpp"
#include "dynlearn/model.hpp"
#include "dynlearn/types.hpp"

namespace dynlearn {

/// Thrown when a plant is evaluated outside its operating domain (for the
/// PCC segments: excessive curvature or a collapsed backbone length).
class PlantDomainError : public std::domain_error {
 public:
  explicit PlantDomainError(const std::string& what) : std::domain_error(what) {}
};

/// Analytic ground-truth mechanical system. Closures give M, its
/// q-derivative, V and G = dV/dq, D and A; the Coriolis matrix is derived
/// from the mass jacobian in Christoffel form so the skew-symmetry identity
/// holds by construction.
struct Plant {
  std::string id;
  int n = 0;
  int m_u = 0;
  std::function<Mat(const Vec&)> mass;
  std::function<Tensor3(const Vec&)> mass_jacobian;
  std::function<double(const Vec&)> potential;
  std::function<Vec(const Vec&)> potential_grad;
  std::function<Mat(const Vec&)> damping;
  std::function<Mat(const Vec&)> input_matrix;
  std::map<std::string, double> params;
};

/// C(q, qd) with C_ij = 1/2 sum_k (dM_ij/dq_k + dM_ik/dq_j - dM_jk/dq_i) qd_k.
Mat coriolis_matrix(const Plant& plant, const Vec& q, const Vec& qd);

/// qddot = M^-1 (A u - C qd - G - D qd)
Vec plant_forward_dynamics(const Plant& plant, const Vec& q, const Vec& qd, const Vec& u);

/// [qd; qddot] field for the integrators.
VectorField plant_vector_field(const Plant& plant);

/// Adapter exposing a plant (optionally scaled by a constant factor) through
/// the DynamicsModel interface — the "perfectly learned model" oracle.
class PlantModel : public DynamicsModel {
 public:
  explicit PlantModel(Plant plant, double factor = 1.0)
      : plant_(std::move(plant)), factor_(factor) {}

  int config_dim() const override { return plant_.n; }
  int input_dim() const override { return plant_.m_u; }
  Mat mass(const Vec& q) const override { return factor_ * plant_.mass(q); }
  Tensor3 mass_jacobian(const Vec& q) const override {
    Tensor3 t = plant_.mass_jacobian(q);
    for (Eigen::Index k = 0; k < t.depth(); ++k) t.slice(k) *= factor_;
    return t;
  }
  double potential(const Vec& q) const override { return factor_ * plant_.potential(q); }
  Vec potential_grad(const Vec& q) const override {
    return factor_ * plant_.potential_grad(q);
  }
  Mat damping(const Vec& q) const override { return factor_ * plant_.damping(q); }
  Mat input_matrix(const Vec& q) const override { return factor_ * plant_.input_matrix(q); }
  const Plant& plant() const { return plant_; }

 private:
  Plant plant_;
  double factor_;
};

Plant make_damped_pendulum();
Plant make_two_link_arm();
Plant make_pcc_segment_planar();
Plant make_pcc_segment_spatial();

/// All built-in plants keyed by id.
std::map<std::string, Plant> builtin_plants();
Plant builtin_plant(const std::string& id);

/// Excitation signal, evaluated channel-wise as amplitude * envelope(t).
struct InputSignal {
  enum class Kind { Sinusoid, Chirp, Step, Zero };
  Kind kind = Kind::Sinusoid;
  Vec amplitude;        // one entry per input channel
  double frequency_hz = 0.5;
  double phase = 0.0;   // radians; for Step: onset time in seconds
  double duration = 10.0;

  Vec value(double t) const;
};

/// Data-generation request: every initial state is combined with every
/// input signal; each combination is integrated at fine_dt and resampled
/// at the listed frequencies.
struct GenSpec {
  std::string plant_id;
  std::vector<Vec> initial_states;  // [q; qd] stacked
  std::vector<InputSignal> signals;
  double fine_dt = 2e-4;
  double duration = 10.0;
  std::vector<double> resample_hz{100.0};
  Vec noise_sigma;        // empty = noiseless; 1 entry = broadcast to 2N
  int smooth_window = 0;  // moving-average window in samples, 0 = off
  ModelKind label_kind = ModelKind::LNN;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RawTrajectory {
  int id = 0;
  double dt = 0.0;
  std::vector<double> times;
  std::vector<Vec> states;  // [q; qd]
  std::vector<Vec> inputs;  // one per step (ZOH)
};

struct GenResult {
  TransitionDataset dataset;
  std::vector<RawTrajectory> trajectories;  // fine-rate, one per combination
  std::vector<std::pair<int, std::string>> failures;  // (combination id, reason)
};

GenResult generate_dataset(const GenSpec& spec);

/// Convenience: a seeded default GenSpec for a built-in plant with
/// n_states x n_signals combinations of random initial states and mixed
/// sinusoid/chirp/step excitations.
GenSpec default_gen_spec(const std::string& plant_id, int n_states, int n_signals,
                         std::uint64_t seed);

}  // namespace dynlearn
