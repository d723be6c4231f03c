#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dynlearn/types.hpp"

namespace dynlearn {

enum class Activation { Identity, Softplus, Tanh, SigmoidScaled };

double activate(Activation a, double x, double scale = 1.0);
double activate_d1(Activation a, double x, double scale = 1.0);

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

/// Numerically stable softplus / logistic helpers shared across the library.
double softplus(double x);
double sigmoid(double x);

/// Layer widths and activation choices of a fully connected network.
struct MlpSpec {
  int input_dim = 0;
  int output_dim = 0;
  std::vector<int> hidden;                       // e.g. {32, 32, 32}
  Activation hidden_activation = Activation::Softplus;
  Activation final_activation = Activation::Identity;
  double final_scale = 1.0;                      // only used by SigmoidScaled
  std::uint64_t seed = 0;

  void validate() const;
  /// input_dim, hidden..., output_dim
  std::vector<int> layer_widths() const;
  Eigen::Index parameter_count() const;

  bool operator==(const MlpSpec&) const = default;
};

/// Per-layer weights/biases. Flattening order is layer by layer, W first in
/// row-major order, then b; this order is the on-disk checkpoint layout.
struct MlpParams {
  MlpSpec spec;
  std::vector<Mat> weights;   // weights[l]: (width[l+1] x width[l])
  std::vector<Vec> biases;    // biases[l]:  (width[l+1])

  Eigen::Index parameter_count() const { return spec.parameter_count(); }
  MlpParams zeros_like() const;
};

/// Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization.
MlpParams init_mlp(const MlpSpec& spec);
MlpParams zero_mlp(const MlpSpec& spec);

Vec flatten(const MlpParams& params);
MlpParams unflatten(const MlpSpec& spec, const Vec& theta);

/// Feed-forward evaluation. Throws DimensionError on shape mismatch and
/// NumericalError if the output is not finite.
Vec mlp_eval(const MlpParams& params, const Vec& x);

/// J(i,j) = dy_i / dx_j at x, by layer-wise tangent propagation.
Mat mlp_input_jacobian(const MlpParams& params, const Vec& x);

/// Gradient of <cotangent, mlp_eval(params, x)> with respect to every
/// weight and bias.
MlpParams mlp_param_grad(const MlpParams& params, const Vec& x, const Vec& cotangent);

}  // namespace dynlearn
