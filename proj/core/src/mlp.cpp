#include "dynlearn/mlp.hpp"

#include <cmath>
#include <random>

namespace dynlearn {

double softplus(double x) {
  // max(x,0) + log1p(exp(-|x|)) avoids overflow on both tails
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double activate(Activation a, double x, double scale) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Softplus: return softplus(x);
    case Activation::Tanh: return std::tanh(x);
    case Activation::SigmoidScaled: return scale * sigmoid(x);
  }
  return x;
}

double activate_d1(Activation a, double x, double scale) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::Softplus: return sigmoid(x);
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::SigmoidScaled: {
      const double s = sigmoid(x);
      return scale * s * (1.0 - s);
    }
  }
  return 1.0;
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Softplus: return "softplus";
    case Activation::Tanh: return "tanh";
    case Activation::SigmoidScaled: return "sigmoid_scaled";
  }
  return "identity";
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "softplus") return Activation::Softplus;
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid_scaled") return Activation::SigmoidScaled;
  throw IoError("unknown activation: " + name);
}

void MlpSpec::validate() const {
  require(input_dim >= 1, "MlpSpec: input_dim must be >= 1");
  require(output_dim >= 1, "MlpSpec: output_dim must be >= 1");
  for (int w : hidden) require(w >= 1, "MlpSpec: hidden widths must be >= 1");
  require(final_scale > 0.0, "MlpSpec: final_scale must be > 0");
}

std::vector<int> MlpSpec::layer_widths() const {
  std::vector<int> widths;
  widths.reserve(hidden.size() + 2);
  widths.push_back(input_dim);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(output_dim);
  return widths;
}

Eigen::Index MlpSpec::parameter_count() const {
  const auto widths = layer_widths();
  Eigen::Index n = 0;
  for (size_t l = 0; l + 1 < widths.size(); ++l)
    n += Eigen::Index(widths[l + 1]) * widths[l] + widths[l + 1];
  return n;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams out;
  out.spec = spec;
  out.weights.reserve(weights.size());
  out.biases.reserve(biases.size());
  for (const auto& w : weights) out.weights.push_back(Mat::Zero(w.rows(), w.cols()));
  for (const auto& b : biases) out.biases.push_back(Vec::Zero(b.size()));
  return out;
}

MlpParams init_mlp(const MlpSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  MlpParams params;
  params.spec = spec;
  const auto widths = spec.layer_widths();
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat w(widths[l + 1], widths[l]);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
    Vec b(widths[l + 1]);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = dist(rng);
    params.weights.push_back(std::move(w));
    params.biases.push_back(std::move(b));
  }
  return params;
}

MlpParams zero_mlp(const MlpSpec& spec) {
  MlpParams params = init_mlp(spec);
  for (auto& w : params.weights) w.setZero();
  for (auto& b : params.biases) b.setZero();
  return params;
}

Vec flatten(const MlpParams& params) {
  Vec theta(params.parameter_count());
  Eigen::Index at = 0;
  for (size_t l = 0; l < params.weights.size(); ++l) {
    const Mat& w = params.weights[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) theta[at++] = w(i, j);
    const Vec& b = params.biases[l];
    theta.segment(at, b.size()) = b;
    at += b.size();
  }
  return theta;
}

MlpParams unflatten(const MlpSpec& spec, const Vec& theta) {
  require(theta.size() == spec.parameter_count(), "unflatten: wrong parameter vector length");
  MlpParams params;
  params.spec = spec;
  const auto widths = spec.layer_widths();
  Eigen::Index at = 0;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    Mat w(widths[l + 1], widths[l]);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = theta[at++];
    Vec b = theta.segment(at, widths[l + 1]);
    at += widths[l + 1];
    params.weights.push_back(std::move(w));
    params.biases.push_back(std::move(b));
  }
  return params;
}

namespace {

void check_input(const MlpParams& params, const Vec& x, const char* op) {
  require(!params.weights.empty(), std::string(op) + ": empty parameter set");
  require(x.size() == params.spec.input_dim,
          std::string(op) + ": input length does not match spec input_dim");
}

Vec apply_layer_activation(const MlpSpec& spec, const Vec& z, bool last) {
  const Activation a = last ? spec.final_activation : spec.hidden_activation;
  Vec out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) out[i] = activate(a, z[i], spec.final_scale);
  return out;
}

}  // namespace

Vec mlp_eval(const MlpParams& params, const Vec& x) {
  check_input(params, x, "mlp_eval");
  Vec a = x;
  for (size_t l = 0; l < params.weights.size(); ++l) {
    const Vec z = params.weights[l] * a + params.biases[l];
    a = apply_layer_activation(params.spec, z, l + 1 == params.weights.size());
  }
  require_finite(a, "mlp_eval");
  return a;
}

Mat mlp_input_jacobian(const MlpParams& params, const Vec& x) {
  check_input(params, x, "mlp_input_jacobian");
  Vec a = x;
  Mat jac = Mat::Identity(x.size(), x.size());
  for (size_t l = 0; l < params.weights.size(); ++l) {
    const bool last = l + 1 == params.weights.size();
    const Activation act = last ? params.spec.final_activation : params.spec.hidden_activation;
    const Vec z = params.weights[l] * a + params.biases[l];
    Mat jz = params.weights[l] * jac;
    for (Eigen::Index i = 0; i < z.size(); ++i)
      jz.row(i) *= activate_d1(act, z[i], params.spec.final_scale);
    jac = std::move(jz);
    a = apply_layer_activation(params.spec, z, last);
  }
  require_finite(jac, "mlp_input_jacobian");
  return jac;
}

MlpParams mlp_param_grad(const MlpParams& params, const Vec& x, const Vec& cotangent) {
  check_input(params, x, "mlp_param_grad");
  require(cotangent.size() == params.spec.output_dim,
          "mlp_param_grad: cotangent length does not match output_dim");

  const size_t depth = params.weights.size();
  std::vector<Vec> activations(depth + 1);
  std::vector<Vec> preacts(depth);
  activations[0] = x;
  for (size_t l = 0; l < depth; ++l) {
    preacts[l] = params.weights[l] * activations[l] + params.biases[l];
    activations[l + 1] = apply_layer_activation(params.spec, preacts[l], l + 1 == depth);
  }

  MlpParams grad = params.zeros_like();
  Vec bar = cotangent;
  for (size_t l = depth; l-- > 0;) {
    const Activation act =
        l + 1 == depth ? params.spec.final_activation : params.spec.hidden_activation;
    Vec dz(bar.size());
    for (Eigen::Index i = 0; i < bar.size(); ++i)
      dz[i] = bar[i] * activate_d1(act, preacts[l][i], params.spec.final_scale);
    grad.weights[l] = dz * activations[l].transpose();
    grad.biases[l] = dz;
    bar = params.weights[l].transpose() * dz;
  }
  return grad;
}

}  // namespace dynlearn
