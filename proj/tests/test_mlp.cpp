#include <doctest.h>

#include <cmath>
#include <random>

#include "dynlearn/mlp.hpp"
#include "test_util.hpp"

using namespace dynlearn;
using namespace dynlearn::testing;

namespace {

MlpSpec small_spec(int in, int out, std::vector<int> hidden, std::uint64_t seed) {
  MlpSpec spec;
  spec.input_dim = in;
  spec.output_dim = out;
  spec.hidden = std::move(hidden);
  spec.seed = seed;
  return spec;
}

MlpParams single_linear(const Mat& w, const Vec& b) {
  MlpSpec spec = small_spec(static_cast<int>(w.cols()), static_cast<int>(w.rows()), {}, 0);
  MlpParams params = zero_mlp(spec);
  params.weights[0] = w;
  params.biases[0] = b;
  return params;
}

}  // namespace

TEST_CASE("zero-parameter network maps everything to zero") {
  MlpParams params = zero_mlp(small_spec(3, 2, {8, 8}, 0));
  // softplus hidden of 0 feeds zero weights, identity final stays 0
  const Vec y = mlp_eval(params, Vec::Constant(3, 1.7));
  CHECK(y.norm() == 0.0);
}

TEST_CASE("single affine layer") {
  const Vec y = mlp_eval(single_linear(Mat::Constant(1, 1, 2.0), Vec::Constant(1, 1.0)),
                         Vec::Constant(1, 3.0));
  CHECK(y[0] == doctest::Approx(7.0).epsilon(1e-14));
}

TEST_CASE("softplus final activation at zero pre-activation") {
  MlpSpec spec = small_spec(1, 1, {}, 0);
  spec.final_activation = Activation::Softplus;
  const Vec y = mlp_eval(zero_mlp(spec), Vec::Zero(1));
  CHECK(y[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("eval rejects wrong input length") {
  MlpParams params = init_mlp(small_spec(3, 2, {4}, 1));
  CHECK_THROWS_AS(mlp_eval(params, Vec::Zero(2)), DimensionError);
  CHECK_THROWS_AS(mlp_input_jacobian(params, Vec::Zero(4)), DimensionError);
  CHECK_THROWS_AS(mlp_param_grad(params, Vec::Zero(3), Vec::Zero(3)), DimensionError);
}

TEST_CASE("input jacobian of a linear layer is the weight matrix") {
  std::mt19937_64 rng(7);
  const Mat w = random_mat(3, 4, rng);
  const Mat jac = mlp_input_jacobian(single_linear(w, Vec::Zero(3)), random_vec(4, rng));
  CHECK((jac - w).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("constant network has zero input jacobian") {
  MlpParams params = init_mlp(small_spec(2, 2, {6}, 3));
  params.weights[0].setZero();  // hidden no longer depends on x
  const Mat jac = mlp_input_jacobian(params, Vec::Constant(2, 0.3));
  CHECK(jac.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("input jacobian matches central differences") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    MlpSpec spec = small_spec(3, 2, {7, 5}, 100 + trial);
    spec.hidden_activation = trial % 2 == 0 ? Activation::Softplus : Activation::Tanh;
    const MlpParams params = init_mlp(spec);
    const Vec x = random_vec(3, rng);
    const Mat jac = mlp_input_jacobian(params, x);
    Mat fd(2, 3);
    for (int out = 0; out < 2; ++out) {
      fd.row(out) = fd_gradient(
                         [&](const Vec& xx) { return mlp_eval(params, xx)[out]; }, x)
                         .transpose();
    }
    CHECK(rel_error(jac, fd) < 1e-5);
  }
}

TEST_CASE("parameter gradient: zero cotangent and affine case") {
  std::mt19937_64 rng(13);
  const Mat w = random_mat(2, 3, rng);
  const Vec b = random_vec(2, rng);
  const Vec x = random_vec(3, rng);
  MlpParams params = single_linear(w, b);

  const MlpParams zero_grad = mlp_param_grad(params, x, Vec::Zero(2));
  CHECK(flatten(zero_grad).norm() == 0.0);

  const Vec c = random_vec(2, rng);
  const MlpParams grad = mlp_param_grad(params, x, c);
  CHECK((grad.weights[0] - c * x.transpose()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((grad.biases[0] - c).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("parameter gradient matches central differences") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const MlpSpec spec = small_spec(2, 3, {6, 4}, 40 + trial);
    const MlpParams params = init_mlp(spec);
    const Vec x = random_vec(2, rng);
    const Vec c = random_vec(3, rng);
    const Vec analytic = flatten(mlp_param_grad(params, x, c));
    const Vec theta = flatten(params);
    const Vec fd = fd_gradient(
        [&](const Vec& th) { return c.dot(mlp_eval(unflatten(spec, th), x)); }, theta);
    CHECK(rel_error(analytic, fd) < 1e-5);
  }
}

TEST_CASE("flatten/unflatten round trip is exact") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const MlpSpec spec = small_spec(1 + trial % 3, 1 + trial % 4, {5, 3}, trial);
    const MlpParams params = init_mlp(spec);
    const Vec theta = flatten(params);
    const MlpParams back = unflatten(spec, theta);
    CHECK((flatten(back) - theta).norm() == 0.0);
    for (size_t l = 0; l < params.weights.size(); ++l) {
      CHECK((params.weights[l] - back.weights[l]).cwiseAbs().maxCoeff() == 0.0);
      CHECK((params.biases[l] - back.biases[l]).cwiseAbs().maxCoeff() == 0.0);
    }
  }
  CHECK_THROWS_AS(unflatten(small_spec(2, 2, {3}, 0), Vec::Zero(5)), DimensionError);
}

TEST_CASE("evaluation is deterministic") {
  const MlpParams params = init_mlp(small_spec(3, 3, {9, 9}, 99));
  const Vec x = Vec::LinSpaced(3, -1.0, 1.0);
  const Vec y1 = mlp_eval(params, x);
  const Vec y2 = mlp_eval(params, x);
  CHECK((y1 - y2).cwiseAbs().maxCoeff() == 0.0);
  const MlpParams again = init_mlp(small_spec(3, 3, {9, 9}, 99));
  CHECK((flatten(again) - flatten(params)).norm() == 0.0);
}
