#pragma once

#include "dynlearn/types.hpp"

namespace dynlearn {

/// The structured quantities every mechanical model exposes: M(q), its
/// q-derivative, V(q) and its gradient, D(q) and A(q). Learned models and
/// analytic plants both implement this, so dynamics, controllers and
/// evaluation run unchanged on either.
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;

  virtual int config_dim() const = 0;
  virtual int input_dim() const = 0;

  virtual Mat mass(const Vec& q) const = 0;
  /// slice(k)(i, j) = dM_ij / dq_k
  virtual Tensor3 mass_jacobian(const Vec& q) const = 0;
  virtual double potential(const Vec& q) const = 0;
  virtual Vec potential_grad(const Vec& q) const = 0;
  virtual Mat damping(const Vec& q) const = 0;
  virtual Mat input_matrix(const Vec& q) const = 0;
};

/// Multiplies all structured quantities of a base model by a constant
/// factor c > 0, producing the P = cI member of the equivalence class that
/// leaves the forward dynamics unchanged.
class ScaledModel : public DynamicsModel {
 public:
  ScaledModel(const DynamicsModel& base, double factor) : base_(base), factor_(factor) {
    require(factor > 0.0, "ScaledModel: factor must be > 0");
  }

  int config_dim() const override { return base_.config_dim(); }
  int input_dim() const override { return base_.input_dim(); }
  Mat mass(const Vec& q) const override { return factor_ * base_.mass(q); }
  Tensor3 mass_jacobian(const Vec& q) const override {
    Tensor3 t = base_.mass_jacobian(q);
    for (Eigen::Index k = 0; k < t.depth(); ++k) t.slice(k) *= factor_;
    return t;
  }
  double potential(const Vec& q) const override { return factor_ * base_.potential(q); }
  Vec potential_grad(const Vec& q) const override { return factor_ * base_.potential_grad(q); }
  Mat damping(const Vec& q) const override { return factor_ * base_.damping(q); }
  Mat input_matrix(const Vec& q) const override { return factor_ * base_.input_matrix(q); }

 private:
  const DynamicsModel& base_;
  double factor_;
};

}  // namespace dynlearn
