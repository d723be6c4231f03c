#pragma once

#include <functional>
#include <utility>

#include "dynlearn/model.hpp"
#include "dynlearn/types.hpp"

namespace dynlearn {

/// Generalized state: configuration q plus either velocity or momentum.
enum class StateKind { Velocity, Momentum };

struct ConfState {
  Vec q;
  Vec w;  // qdot when kind == Velocity, p when kind == Momentum
  StateKind kind = StateKind::Velocity;
};

/// L(q, qdot) = 1/2 qdot^T M(q) qdot - V(q)
double lagrangian(const DynamicsModel& model, const Vec& q, const Vec& qd);

/// H(q, p) = 1/2 p^T M^-1(q) p + V(q), via Cholesky solve of M.
double hamiltonian(const DynamicsModel& model, const Vec& q, const Vec& p);

/// qddot = M^-1 (A u - Mdot qd + 1/2 d(qd^T M qd)/dq - dV/dq - D qd).
/// Throws NumericalError when the mass solve is ill conditioned (>1e12).
Vec lagrangian_forward_dynamics(const DynamicsModel& model, const Vec& q, const Vec& qd,
                                const Vec& u);

/// (qdot, pdot) with qdot = M^-1 p and
/// pdot = -dH/dq - D(q) M^-1 p + A(q) u.
std::pair<Vec, Vec> hamiltonian_vector_field(const DynamicsModel& model, const Vec& q,
                                             const Vec& p, const Vec& u);

/// C(q, qd) qd = Mdot qd - 1/2 d(qd^T M qd)/dq, contracted from the mass
/// jacobian (Christoffel form).
Vec coriolis_force(const DynamicsModel& model, const Vec& q, const Vec& qd);

/// dH/dt along the flow; with u = 0 this equals -(M^-1 p)^T D (M^-1 p) <= 0.
double energy_rate(const DynamicsModel& model, const ConfState& state, const Vec& u);

/// Solve M x = rhs with a positive-definiteness and condition-number guard.
Vec mass_solve(const Mat& mass, const Vec& rhs);

/// First-order field closures for the integrators: state is [q; qd] for the
/// Lagrangian form and [q; p] for the Hamiltonian one.
using VectorField = std::function<Vec(const Vec& x, const Vec& u)>;

VectorField lnn_vector_field(const DynamicsModel& model);
VectorField hnn_vector_field(const DynamicsModel& model);

/// Momentum coordinates for a velocity state: p = M(q) qd.
Vec to_momentum(const DynamicsModel& model, const Vec& q, const Vec& qd);
Vec to_velocity(const DynamicsModel& model, const Vec& q, const Vec& p);

}  // namespace dynlearn
