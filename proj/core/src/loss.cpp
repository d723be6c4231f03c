#include "dynlearn/loss.hpp"

#include <string>

#include "dynlearn/integrators.hpp"

namespace dynlearn {

namespace {

using tape::Graph;
using tape::Value;

double plain_loss(const DynamicsModel& model, ModelKind kind,
                  const std::vector<TransitionSample>& samples,
                  const std::vector<int>& indices) {
  require(!indices.empty(), "loss: empty batch");
  const int n = model.config_dim();
  const VectorField field =
      kind == ModelKind::LNN ? lnn_vector_field(model) : hnn_vector_field(model);
  double acc = 0.0;
  for (int idx : indices) {
    const TransitionSample& s = samples.at(static_cast<size_t>(idx));
    Vec x(2 * n);
    x << s.q, s.w;
    Vec pred;
    try {
      pred = rk4_step(field, x, s.u, s.dt);
    } catch (const NumericalError& e) {
      throw NumericalError("loss", "sample " + std::to_string(idx) + ": " + e.what());
    }
    if (kind == ModelKind::LNN) {
      acc += (s.label_w - pred.tail(n)).squaredNorm();
    } else {
      acc += (s.label_q - pred.head(n)).squaredNorm() +
             (s.label_w - pred.tail(n)).squaredNorm();
    }
  }
  return acc / static_cast<double>(indices.size());
}

std::vector<int> all_indices(size_t count) {
  std::vector<int> idx(count);
  for (size_t i = 0; i < count; ++i) idx[i] = static_cast<int>(i);
  return idx;
}

// --------------------------------------------------------------------------
// tape graph construction
// --------------------------------------------------------------------------

struct TapeHeads {
  tape::MlpLeaves mass, pot, damp, inp;
  tape::CholOpts mass_opts, damp_opts;
  int n = 0;
  int m_u = 0;
  double input_bound = 0.0;
  std::vector<int> input_perm;       // row-major raw -> vec()-layout rows
  std::vector<Value> directions;     // e_k broadcast over the batch
};

TapeHeads make_tape_heads(Graph& g, const StructuredModel& model, Eigen::Index batch) {
  TapeHeads heads;
  heads.n = model.config_dim();
  heads.m_u = model.input_dim();
  heads.mass = make_mlp_leaves(g, model.mass_head().mlp);
  heads.pot = make_mlp_leaves(g, model.potential_head().mlp);
  heads.damp = make_mlp_leaves(g, model.damping_head().mlp);
  heads.inp = make_mlp_leaves(g, model.input_head().mlp);
  heads.mass_opts = {heads.n, model.mass_head().eps, model.mass_head().bound_scale,
                     model.mass_head().diag_only};
  heads.damp_opts = {heads.n, model.damping_head().eps, model.damping_head().bound_scale,
                     model.damping_head().diag_only};
  heads.input_bound = model.input_head().bound_scale;
  heads.input_perm.resize(static_cast<size_t>(heads.n) * heads.m_u);
  for (int j = 0; j < heads.m_u; ++j)
    for (int i = 0; i < heads.n; ++i)
      heads.input_perm[static_cast<size_t>(j) * heads.n + i] = i * heads.m_u + j;
  for (int k = 0; k < heads.n; ++k) {
    Mat dir = Mat::Zero(heads.n, batch);
    dir.row(k).setOnes();
    heads.directions.push_back(g.constant(std::move(dir)));
  }
  return heads;
}

struct StructuredTerms {
  Value mass;                 // n*n x B
  std::vector<Value> dmass;   // n*n x B, per configuration direction
  Value pot_grad;             // n x B
  Value damping;              // n*n x B
  Value input;                // n*m x B
};

StructuredTerms build_terms(Graph& g, const TapeHeads& heads, Value q) {
  StructuredTerms terms;
  const int n = heads.n;

  const auto mass_fwd = mlp_forward_jvp_multi(g, heads.mass, q, heads.directions);
  const Value factor = g.chol_assemble(mass_fwd.y, heads.mass_opts);
  terms.mass = g.gram(factor, n);
  terms.dmass.reserve(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) {
    const Value dfactor =
        g.chol_tangent(mass_fwd.y, mass_fwd.tys[static_cast<size_t>(k)], heads.mass_opts);
    const Value prod = g.bmatmul(dfactor, factor, n, n, n, false, true);
    terms.dmass.push_back(g.add(prod, g.btranspose(prod, n, n)));
  }

  const auto pot_fwd = mlp_forward_jvp_multi(g, heads.pot, q, heads.directions);
  terms.pot_grad = g.vstack(pot_fwd.tys);

  const Value damp_factor = g.chol_assemble(mlp_forward(g, heads.damp, q), heads.damp_opts);
  terms.damping = g.gram(damp_factor, n);

  Value raw_input = mlp_forward(g, heads.inp, q);
  if (heads.input_bound > 0.0) raw_input = g.scale(g.sigmoid(raw_input), heads.input_bound);
  terms.input = g.permute_rows(raw_input, heads.input_perm);
  return terms;
}

/// qdd = M^-1 (A u - Mdot qd + 1/2 d(qd^T M qd)/dq - dV/dq - D qd)
Value build_qdd(Graph& g, const TapeHeads& heads, Value q, Value qd, Value u) {
  const int n = heads.n;
  const StructuredTerms terms = build_terms(g, heads, q);

  Value mdot_qd;  // sum_k qd_k * (dM_k qd)
  std::vector<Value> quads;
  quads.reserve(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) {
    const Value ak = g.bmatvec(terms.dmass[static_cast<size_t>(k)], qd, n, n);
    const Value term = g.row_broadcast_mul(ak, g.row_select(qd, k));
    mdot_qd = k == 0 ? term : g.add(mdot_qd, term);
    quads.push_back(g.bquad_form(terms.dmass[static_cast<size_t>(k)], qd, n));
  }
  const Value kinetic_grad = g.scale(g.vstack(quads), 0.5);

  const Value force = g.bmatvec(terms.input, u, n, heads.m_u);
  const Value dissipation = g.bmatvec(terms.damping, qd, n, n);
  const Value rhs =
      g.sub(g.add(g.sub(force, mdot_qd), kinetic_grad), g.add(terms.pot_grad, dissipation));
  return g.bsolve_spd(terms.mass, rhs, n);
}

/// (qdot, pdot) of the Hamiltonian form at (q, p).
std::pair<Value, Value> build_hamiltonian_field(Graph& g, const TapeHeads& heads, Value q,
                                                Value p, Value u) {
  const int n = heads.n;
  const StructuredTerms terms = build_terms(g, heads, q);
  const Value v = g.bsolve_spd(terms.mass, p, n);  // dH/dp

  std::vector<Value> quads;
  quads.reserve(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k)
    quads.push_back(g.bquad_form(terms.dmass[static_cast<size_t>(k)], v, n));
  const Value dh_dq = g.sub(terms.pot_grad, g.scale(g.vstack(quads), 0.5));

  const Value force = g.bmatvec(terms.input, u, n, heads.m_u);
  const Value pdot = g.sub(force, g.add(dh_dq, g.bmatvec(terms.damping, v, n, n)));
  return {v, pdot};
}

struct BatchValues {
  Value q, w, u, dt_half, dt_full, dt_sixth;
  Mat label;  // [label_w] for LNN, [label_q; label_p] for HNN
};

BatchValues load_batch(Graph& g, const StructuredModel& model, ModelKind kind,
                       const std::vector<TransitionSample>& samples,
                       const std::vector<int>& indices) {
  require(!indices.empty(), "loss: empty batch");
  const int n = model.config_dim();
  const int m = model.input_dim();
  const Eigen::Index batch = static_cast<Eigen::Index>(indices.size());
  Mat q(n, batch), w(n, batch), u(m, batch), dt(1, batch);
  Mat label(kind == ModelKind::LNN ? n : 2 * n, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const TransitionSample& s = samples.at(static_cast<size_t>(indices[static_cast<size_t>(b)]));
    require(s.q.size() == n && s.w.size() == n && s.u.size() == m,
            "loss: sample dims do not match the model");
    q.col(b) = s.q;
    w.col(b) = s.w;
    u.col(b) = s.u;
    dt(0, b) = s.dt;
    if (kind == ModelKind::LNN) {
      require(s.label_w.size() == n, "loss: LNN sample must label qd_{k+1}");
      label.col(b) = s.label_w;
    } else {
      require(s.label_q.size() == n && s.label_w.size() == n,
              "loss: HNN sample must label (q, p)_{k+1}");
      label.col(b).head(n) = s.label_q;
      label.col(b).tail(n) = s.label_w;
    }
  }
  BatchValues values;
  values.q = g.constant(q);
  values.w = g.constant(w);
  values.u = g.constant(u);
  values.dt_half = g.constant(0.5 * dt);
  values.dt_full = g.constant(dt);
  values.dt_sixth = g.constant(dt / 6.0);
  values.label = std::move(label);
  return values;
}

/// One RK4 step of the structured dynamics over the whole batch; returns
/// the scalar mean-squared one-step loss.
Value build_loss(Graph& g, const StructuredModel& model, ModelKind kind,
                 const TapeHeads& heads, const BatchValues& batch) {
  const int n = model.config_dim();
  auto field = [&](Value q, Value w) -> std::pair<Value, Value> {
    if (kind == ModelKind::LNN) return {w, build_qdd(g, heads, q, w, batch.u)};
    return build_hamiltonian_field(g, heads, q, w, batch.u);
  };
  auto advance = [&](Value x, Value k, Value dt) { return g.add(x, g.row_broadcast_mul(k, dt)); };

  const auto [k1q, k1w] = field(batch.q, batch.w);
  const auto [k2q, k2w] =
      field(advance(batch.q, k1q, batch.dt_half), advance(batch.w, k1w, batch.dt_half));
  const auto [k3q, k3w] =
      field(advance(batch.q, k2q, batch.dt_half), advance(batch.w, k2w, batch.dt_half));
  const auto [k4q, k4w] =
      field(advance(batch.q, k3q, batch.dt_full), advance(batch.w, k3w, batch.dt_full));

  auto combine = [&](Value k1, Value k2, Value k3, Value k4) {
    return g.add(g.add(k1, g.scale(g.add(k2, k3), 2.0)), k4);
  };
  const Value w_next = advance(batch.w, combine(k1w, k2w, k3w, k4w), batch.dt_sixth);

  const double inv_batch = 1.0 / static_cast<double>(batch.label.cols());
  if (kind == ModelKind::LNN) {
    const Value err = g.sub(w_next, g.constant(batch.label));
    return g.scale(g.sum_sq(err), inv_batch);
  }
  const Value q_next = advance(batch.q, combine(k1q, k2q, k3q, k4q), batch.dt_sixth);
  const Value err_q = g.sub(q_next, g.constant(batch.label.topRows(n)));
  const Value err_p = g.sub(w_next, g.constant(batch.label.bottomRows(n)));
  return g.scale(g.add(g.sum_sq(err_q), g.sum_sq(err_p)), inv_batch);
}

}  // namespace

double lnn_loss(const DynamicsModel& model, const std::vector<TransitionSample>& batch) {
  return plain_loss(model, ModelKind::LNN, batch, all_indices(batch.size()));
}

double hnn_loss(const DynamicsModel& model, const std::vector<TransitionSample>& batch) {
  return plain_loss(model, ModelKind::HNN, batch, all_indices(batch.size()));
}

double structured_loss(const DynamicsModel& model, ModelKind kind,
                       const std::vector<TransitionSample>& samples,
                       const std::vector<int>& indices) {
  return plain_loss(model, kind, samples, indices);
}

LossGrad structured_loss_grad(const StructuredModel& model, ModelKind kind,
                              const std::vector<TransitionSample>& samples,
                              const std::vector<int>& indices) {
  Graph g;
  g.reserve(4096);
  const BatchValues batch = load_batch(g, model, kind, samples, indices);
  const TapeHeads heads = make_tape_heads(g, model, static_cast<Eigen::Index>(indices.size()));
  const Value loss = build_loss(g, model, kind, heads, batch);
  g.backward(loss);
  LossGrad out;
  out.value = g.scalar(loss);
  out.grads.push_back(leaf_gradients(g, heads.mass));
  out.grads.push_back(leaf_gradients(g, heads.pot));
  out.grads.push_back(leaf_gradients(g, heads.damp));
  out.grads.push_back(leaf_gradients(g, heads.inp));
  return out;
}

double structured_loss_tape_value(const StructuredModel& model, ModelKind kind,
                                  const std::vector<TransitionSample>& samples,
                                  const std::vector<int>& indices) {
  Graph g;
  g.reserve(4096);
  const BatchValues batch = load_batch(g, model, kind, samples, indices);
  const TapeHeads heads = make_tape_heads(g, model, static_cast<Eigen::Index>(indices.size()));
  return g.scalar(build_loss(g, model, kind, heads, batch));
}

}  // namespace dynlearn
