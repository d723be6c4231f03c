#include "dynlearn/dynamics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace dynlearn {

namespace {

constexpr double kConditionLimit = 1e12;

void check_dims(const DynamicsModel& model, const Vec& q, const Vec* w, const Vec* u,
                const char* op) {
  require(q.size() == model.config_dim(), std::string(op) + ": q length mismatch");
  if (w) require(w->size() == model.config_dim(), std::string(op) + ": state length mismatch");
  if (u) require(u->size() == model.input_dim(), std::string(op) + ": input length mismatch");
}

/// 1/2 * d(qd^T M qd)/dq from the mass jacobian.
Vec kinetic_config_grad(const Tensor3& dm, const Vec& qd) {
  Vec g(dm.depth());
  for (Eigen::Index k = 0; k < dm.depth(); ++k)
    g[k] = 0.5 * qd.dot(dm.slice(k) * qd);
  return g;
}

}  // namespace

Vec mass_solve(const Mat& mass, const Vec& rhs) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(mass);
  const double lmin = eig.eigenvalues().minCoeff();
  const double lmax = eig.eigenvalues().maxCoeff();
  if (!(lmin > 0.0) || lmax / lmin > kConditionLimit)
    throw NumericalError("mass_solve", "mass matrix singular or ill conditioned");
  return Eigen::LLT<Mat>(mass).solve(rhs);
}

double lagrangian(const DynamicsModel& model, const Vec& q, const Vec& qd) {
  check_dims(model, q, &qd, nullptr, "lagrangian");
  const double value = 0.5 * qd.dot(model.mass(q) * qd) - model.potential(q);
  require_finite(value, "lagrangian");
  return value;
}

double hamiltonian(const DynamicsModel& model, const Vec& q, const Vec& p) {
  check_dims(model, q, &p, nullptr, "hamiltonian");
  const double value = 0.5 * p.dot(mass_solve(model.mass(q), p)) + model.potential(q);
  require_finite(value, "hamiltonian");
  return value;
}

Vec lagrangian_forward_dynamics(const DynamicsModel& model, const Vec& q, const Vec& qd,
                                const Vec& u) {
  check_dims(model, q, &qd, &u, "lagrangian_forward_dynamics");
  const Tensor3 dm = model.mass_jacobian(q);
  const Vec mdot_qd = dm.contract(qd) * qd;
  const Vec rhs = model.input_matrix(q) * u - mdot_qd + kinetic_config_grad(dm, qd) -
                  model.potential_grad(q) - model.damping(q) * qd;
  return mass_solve(model.mass(q), rhs);
}

std::pair<Vec, Vec> hamiltonian_vector_field(const DynamicsModel& model, const Vec& q,
                                             const Vec& p, const Vec& u) {
  check_dims(model, q, &p, &u, "hamiltonian_vector_field");
  const Mat mass = model.mass(q);
  const Vec v = mass_solve(mass, p);  // dH/dp = M^-1 p
  const Tensor3 dm = model.mass_jacobian(q);
  // dH/dq_k = -1/2 v^T dM_k v + dV/dq_k, using d(M^-1)/dq = -M^-1 dM M^-1
  Vec dh_dq = model.potential_grad(q);
  for (Eigen::Index k = 0; k < dm.depth(); ++k)
    dh_dq[k] -= 0.5 * v.dot(dm.slice(k) * v);
  const Vec pdot = -dh_dq - model.damping(q) * v + model.input_matrix(q) * u;
  return {v, pdot};
}

Vec coriolis_force(const DynamicsModel& model, const Vec& q, const Vec& qd) {
  check_dims(model, q, &qd, nullptr, "coriolis_force");
  const Tensor3 dm = model.mass_jacobian(q);
  return dm.contract(qd) * qd - kinetic_config_grad(dm, qd);
}

double energy_rate(const DynamicsModel& model, const ConfState& state, const Vec& u) {
  const Vec p = state.kind == StateKind::Momentum
                    ? state.w
                    : to_momentum(model, state.q, state.w);
  const auto [qdot, pdot] = hamiltonian_vector_field(model, state.q, p, u);
  // dH/dt = <dH/dq, qdot> + <dH/dp, pdot>; reuse the field's pieces:
  // <dH/dp, pdot> = v . pdot and <dH/dq, qdot> = (dH/dq) . v with
  // pdot = -dH/dq - D v + A u, so the sum collapses to v.(pdot + dH/dq) +
  // (dH/dq).v = v.(A u - D v). Compute it directly for clarity.
  const Vec v = qdot;
  return v.dot(model.input_matrix(state.q) * u) - v.dot(model.damping(state.q) * v);
}

VectorField lnn_vector_field(const DynamicsModel& model) {
  const int n = model.config_dim();
  return [&model, n](const Vec& x, const Vec& u) {
    require(x.size() == 2 * n, "lnn_vector_field: state must be [q; qd]");
    Vec out(2 * n);
    out.head(n) = x.tail(n);
    out.tail(n) = lagrangian_forward_dynamics(model, x.head(n), x.tail(n), u);
    return out;
  };
}

VectorField hnn_vector_field(const DynamicsModel& model) {
  const int n = model.config_dim();
  return [&model, n](const Vec& x, const Vec& u) {
    require(x.size() == 2 * n, "hnn_vector_field: state must be [q; p]");
    const auto [qdot, pdot] = hamiltonian_vector_field(model, x.head(n), x.tail(n), u);
    Vec out(2 * n);
    out.head(n) = qdot;
    out.tail(n) = pdot;
    return out;
  };
}

Vec to_momentum(const DynamicsModel& model, const Vec& q, const Vec& qd) {
  check_dims(model, q, &qd, nullptr, "to_momentum");
  return model.mass(q) * qd;
}

Vec to_velocity(const DynamicsModel& model, const Vec& q, const Vec& p) {
  check_dims(model, q, &p, nullptr, "to_velocity");
  return mass_solve(model.mass(q), p);
}

}  // namespace dynlearn
