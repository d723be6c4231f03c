#include "dynlearn/heads.hpp"

#include <cmath>

namespace dynlearn {

namespace {

int raw_length(int n, bool diag_only) { return diag_only ? n : (n * n + n) / 2; }

double diag_activation(double raw, double eps, double bound_scale) {
  return (bound_scale == 0.0 ? softplus(raw) : bound_scale * sigmoid(raw)) + eps;
}

double diag_activation_d1(double raw, double bound_scale) {
  const double s = sigmoid(raw);
  return bound_scale == 0.0 ? s : bound_scale * s * (1.0 - s);
}

/// Tangent of cholesky_factor along a raw-space direction.
Mat factor_tangent(const Vec& raw, const Vec& traw, int n, double bound_scale, bool diag_only) {
  Mat dl = Mat::Zero(n, n);
  for (int d = 0; d < n; ++d) dl(d, d) = diag_activation_d1(raw[d], bound_scale) * traw[d];
  if (!diag_only) {
    int t = n;
    for (int j = 0; j < n; ++j)
      for (int i = j + 1; i < n; ++i, ++t) dl(i, j) = traw[t];
  }
  return dl;
}

}  // namespace

Mat cholesky_factor(const Vec& raw, int n, double eps, double bound_scale, bool diag_only) {
  require(n >= 1, "cholesky_factor: n must be >= 1");
  require(raw.size() == raw_length(n, diag_only), "cholesky_factor: wrong raw length");
  Mat l = Mat::Zero(n, n);
  for (int d = 0; d < n; ++d) l(d, d) = diag_activation(raw[d], eps, bound_scale);
  if (!diag_only) {
    int t = n;
    for (int j = 0; j < n; ++j)
      for (int i = j + 1; i < n; ++i, ++t) l(i, j) = raw[t];
  }
  return l;
}

Mat cholesky_assemble(const Vec& raw, int n, double eps, double bound_scale, bool diag_only) {
  const Mat l = cholesky_factor(raw, n, eps, bound_scale, diag_only);
  return l * l.transpose();
}

Mat CholeskyHead::factor(const Vec& q) const {
  return cholesky_factor(mlp_eval(mlp, q), n, eps, bound_scale, diag_only);
}

Mat CholeskyHead::matrix(const Vec& q) const {
  const Mat l = factor(q);
  return l * l.transpose();
}

Tensor3 CholeskyHead::jacobian(const Vec& q) const {
  const Vec raw = mlp_eval(mlp, q);
  const Mat l = cholesky_factor(raw, n, eps, bound_scale, diag_only);
  const Mat raw_jac = mlp_input_jacobian(mlp, q);  // raw_len x N
  Tensor3 out(n, n, q.size());
  for (Eigen::Index k = 0; k < q.size(); ++k) {
    const Mat dl = factor_tangent(raw, raw_jac.col(k), n, bound_scale, diag_only);
    const Mat p = dl * l.transpose();
    out.slice(k) = p + p.transpose();
  }
  return out;
}

double PotentialHead::value(const Vec& q) const { return mlp_eval(mlp, q)[0]; }

Vec PotentialHead::grad(const Vec& q) const {
  return mlp_input_jacobian(mlp, q).row(0).transpose();
}

Mat InputMatrixHead::matrix(const Vec& q) const {
  Vec raw = mlp_eval(mlp, q);
  require(raw.size() == Eigen::Index(rows) * cols, "InputMatrixHead: raw length mismatch");
  if (bound_scale > 0.0)
    raw = raw.unaryExpr([this](double v) { return bound_scale * sigmoid(v); });
  Mat a(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) a(i, j) = raw[Eigen::Index(i) * cols + j];  // row-major fill
  return a;
}

StructuredModel::StructuredModel(const StructuredModelConfig& config) {
  require(config.n >= 1 && config.m_u >= 1, "StructuredModel: dims must be >= 1");
  n_ = config.n;
  m_u_ = config.m_u;
  kind_ = config.kind;

  MlpSpec mass_spec;
  mass_spec.input_dim = config.n;
  mass_spec.output_dim = raw_length(config.n, false);
  mass_spec.hidden = config.mass_hidden;
  mass_spec.hidden_activation = config.hidden_activation;
  mass_spec.seed = config.seed;
  mass_ = CholeskyHead{init_mlp(mass_spec), config.n, config.mass_eps,
                       config.mass_bound_scale, false};

  MlpSpec pot_spec;
  pot_spec.input_dim = config.n;
  pot_spec.output_dim = 1;
  pot_spec.hidden = config.potential_hidden;
  pot_spec.hidden_activation = config.hidden_activation;
  pot_spec.seed = config.seed + 1;
  potential_ = PotentialHead{init_mlp(pot_spec)};

  MlpSpec damp_spec;
  damp_spec.input_dim = config.n;
  damp_spec.output_dim = raw_length(config.n, config.damping_diagonal);
  damp_spec.hidden = config.damping_hidden;
  damp_spec.hidden_activation = config.hidden_activation;
  damp_spec.seed = config.seed + 2;
  damping_ = CholeskyHead{init_mlp(damp_spec), config.n, 0.0, 0.0, config.damping_diagonal};

  MlpSpec input_spec;
  input_spec.input_dim = config.n;
  input_spec.output_dim = config.n * config.m_u;
  input_spec.hidden = config.input_hidden;
  input_spec.hidden_activation = config.hidden_activation;
  input_spec.seed = config.seed + 3;
  input_ = InputMatrixHead{init_mlp(input_spec), config.n, config.m_u,
                           config.input_bound_scale};
}

namespace {
void check_q(const Vec& q, int n, const char* op) {
  require(q.size() == n, std::string(op) + ": configuration length mismatch");
}
}  // namespace

Mat StructuredModel::mass(const Vec& q) const {
  check_q(q, n_, "mass");
  return mass_.matrix(q);
}

Tensor3 StructuredModel::mass_jacobian(const Vec& q) const {
  check_q(q, n_, "mass_jacobian");
  return mass_.jacobian(q);
}

double StructuredModel::potential(const Vec& q) const {
  check_q(q, n_, "potential");
  return potential_.value(q);
}

Vec StructuredModel::potential_grad(const Vec& q) const {
  check_q(q, n_, "potential_grad");
  return potential_.grad(q);
}

Mat StructuredModel::damping(const Vec& q) const {
  check_q(q, n_, "damping");
  return damping_.matrix(q);
}

Mat StructuredModel::input_matrix(const Vec& q) const {
  check_q(q, n_, "input_matrix");
  return input_.matrix(q);
}

std::vector<MlpParams*> StructuredModel::parameter_sets() {
  return {&mass_.mlp, &potential_.mlp, &damping_.mlp, &input_.mlp};
}

std::vector<const MlpParams*> StructuredModel::parameter_sets() const {
  return {&mass_.mlp, &potential_.mlp, &damping_.mlp, &input_.mlp};
}

}  // namespace dynlearn
