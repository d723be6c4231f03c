#pragma once

#include <cstdint>
#include <vector>

#include "dynlearn/mlp.hpp"
#include "dynlearn/model.hpp"
#include "dynlearn/types.hpp"

namespace dynlearn {

/// Assemble the lower-triangular factor from a raw head output: the first n
/// entries, after softplus (or scale*sigmoid when bound_scale > 0) plus eps,
/// become the diagonal; the remaining (n^2-n)/2 entries fill the strict
/// lower triangle column by column. diag_only heads carry n raw entries.
Mat cholesky_factor(const Vec& raw, int n, double eps, double bound_scale = 0.0,
                    bool diag_only = false);

/// L L^T for the factor above: positive definite for eps > 0, positive
/// semi-definite for eps = 0.
Mat cholesky_assemble(const Vec& raw, int n, double eps, double bound_scale = 0.0,
                      bool diag_only = false);

/// Positive (semi-)definite matrix-valued network head built on a Cholesky
/// factor. eps > 0 (mass) pushes eigenvalues above eps^2; eps = 0 (damping)
/// keeps the product PSD.
struct CholeskyHead {
  MlpParams mlp;
  int n = 0;
  double eps = 0.0;
  double bound_scale = 0.0;  // > 0 bounds diagonal entries by scale*sigmoid
  bool diag_only = false;

  Mat factor(const Vec& q) const;
  Mat matrix(const Vec& q) const;
  /// slice(k) = d(matrix)/dq_k, symmetric in (i, j) by construction.
  Tensor3 jacobian(const Vec& q) const;
};

/// Scalar potential-energy network.
struct PotentialHead {
  MlpParams mlp;

  double value(const Vec& q) const;
  Vec grad(const Vec& q) const;
};

/// N x M input transformation network; the raw output vector fills the
/// matrix row-major. bound_scale > 0 squashes every entry into
/// (0, bound_scale) with a sigmoid.
struct InputMatrixHead {
  MlpParams mlp;
  int rows = 0;
  int cols = 0;
  double bound_scale = 0.0;

  Mat matrix(const Vec& q) const;
};

enum class ModelKind { LNN, HNN };

struct StructuredModelConfig {
  int n = 1;
  int m_u = 1;
  ModelKind kind = ModelKind::LNN;
  std::vector<int> mass_hidden{32, 32, 32};
  std::vector<int> potential_hidden{5, 5, 5};
  std::vector<int> damping_hidden{16, 16};
  std::vector<int> input_hidden{16, 16};
  Activation hidden_activation = Activation::Softplus;
  double mass_eps = 1e-2;
  double mass_bound_scale = 0.0;
  bool damping_diagonal = false;
  double input_bound_scale = 0.0;
  std::uint64_t seed = 0;
};

/// The four learned sub-networks with their positivity post-processing.
class StructuredModel : public DynamicsModel {
 public:
  StructuredModel() = default;
  explicit StructuredModel(const StructuredModelConfig& config);

  int config_dim() const override { return n_; }
  int input_dim() const override { return m_u_; }
  ModelKind kind() const { return kind_; }

  Mat mass(const Vec& q) const override;
  Tensor3 mass_jacobian(const Vec& q) const override;
  double potential(const Vec& q) const override;
  Vec potential_grad(const Vec& q) const override;
  Mat damping(const Vec& q) const override;
  Mat input_matrix(const Vec& q) const override;

  CholeskyHead& mass_head() { return mass_; }
  const CholeskyHead& mass_head() const { return mass_; }
  PotentialHead& potential_head() { return potential_; }
  const PotentialHead& potential_head() const { return potential_; }
  CholeskyHead& damping_head() { return damping_; }
  const CholeskyHead& damping_head() const { return damping_; }
  InputMatrixHead& input_head() { return input_; }
  const InputMatrixHead& input_head() const { return input_; }

  /// mass, potential, damping, input — the checkpoint/optimizer order.
  std::vector<MlpParams*> parameter_sets();
  std::vector<const MlpParams*> parameter_sets() const;

  void set_dims(int n, int m_u, ModelKind kind) {
    n_ = n;
    m_u_ = m_u;
    kind_ = kind;
  }

 private:
  int n_ = 0;
  int m_u_ = 0;
  ModelKind kind_ = ModelKind::LNN;
  CholeskyHead mass_;
  PotentialHead potential_;
  CholeskyHead damping_;
  InputMatrixHead input_;
};

}  // namespace dynlearn
