#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "dynlearn/heads.hpp"
#include "test_util.hpp"

using namespace dynlearn;
using namespace dynlearn::testing;

namespace {

StructuredModelConfig tiny_config(int n, int m_u, std::uint64_t seed) {
  StructuredModelConfig config;
  config.n = n;
  config.m_u = m_u;
  config.mass_hidden = {8, 8};
  config.potential_hidden = {5, 5};
  config.damping_hidden = {6};
  config.input_hidden = {6};
  config.seed = seed;
  return config;
}

double min_eig(const Mat& m) {
  return Eigen::SelfAdjointEigenSolver<Mat>(m).eigenvalues().minCoeff();
}

}  // namespace

TEST_CASE("cholesky assembly: scalar case against the softplus oracle") {
  const Mat l = cholesky_factor(Vec::Zero(1), 1, 0.01);
  const double expected_l = std::log(2.0) + 0.01;
  CHECK(l(0, 0) == doctest::Approx(expected_l).epsilon(1e-12));
  const Mat m = cholesky_assemble(Vec::Zero(1), 1, 0.01);
  CHECK(m(0, 0) == doctest::Approx(expected_l * expected_l).epsilon(1e-12));
}

TEST_CASE("cholesky assembly: zero off-diagonals give a diagonal matrix") {
  Vec raw(3);
  raw << 30.0, 25.0, 0.0;  // softplus of a large value is nearly the identity
  const Mat m = cholesky_assemble(raw, 2, 0.0);
  CHECK(m(0, 1) == 0.0);
  CHECK(m(1, 0) == 0.0);
  CHECK(m(0, 0) == doctest::Approx(30.0 * 30.0).epsilon(1e-10));
}

TEST_CASE("cholesky assembly: strict lower triangle fills column-major") {
  Vec raw(6);
  raw << 10.0, 10.0, 10.0, 1.0, 2.0, 3.0;  // lower entries L21, L31, L32
  const Mat l = cholesky_factor(raw, 3, 0.0);
  CHECK(l(1, 0) == 1.0);
  CHECK(l(2, 0) == 2.0);
  CHECK(l(2, 1) == 3.0);
  CHECK(l(0, 1) == 0.0);
  CHECK_THROWS_AS(cholesky_factor(Vec::Zero(5), 3, 0.0), DimensionError);
}

TEST_CASE("assembled matrices stay positive definite over random heads") {
  // The eps^2 eigenvalue floor is exact for the diagonal part of the
  // factor; with off-diagonal entries it holds in the regime network
  // outputs actually occupy (moderate raw values), which is what both this
  // draw scale and the model-level sweep below exercise.
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec raw = random_vec(6, rng, 0.5);
    const Mat m = cholesky_assemble(raw, 3, 0.01);
    CHECK((m - m.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(min_eig(m) >= 1e-4 * (1.0 - 1e-9));
    const Mat d = cholesky_assemble(raw, 3, 0.0);
    CHECK(min_eig(d) >= -1e-12);
  }
}

TEST_CASE("bounded diagonal mode respects the sigmoid scale") {
  std::mt19937_64 rng(5);
  const double scale = 3.50;
  for (int trial = 0; trial < 200; ++trial) {
    const Vec raw = random_vec(6, rng, 20.0);
    const Mat l = cholesky_factor(raw, 3, 0.01, scale);
    for (int d = 0; d < 3; ++d) {
      CHECK(l(d, d) > 0.0);
      CHECK(l(d, d) <= scale + 0.01);
    }
  }
}

TEST_CASE("structured model mass/damping invariants on random configurations") {
  StructuredModel model(tiny_config(2, 2, 7));
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec q = random_vec(2, rng, 2.0);
    const Mat mass = model.mass(q);
    const Mat damping = model.damping(q);
    CHECK((mass - mass.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((damping - damping.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(min_eig(mass) >= 1e-4 * (1.0 - 1e-9));
    CHECK(min_eig(damping) >= -1e-12);
  }
}

TEST_CASE("zero-parameter potential head") {
  StructuredModel model(tiny_config(2, 1, 0));
  for (auto& w : model.potential_head().mlp.weights) w.setZero();
  for (auto& b : model.potential_head().mlp.biases) b.setZero();
  CHECK(model.potential(Vec::Ones(2)) == 0.0);
  CHECK(model.potential_grad(Vec::Ones(2)).norm() == 0.0);
}

TEST_CASE("linear potential head has a constant gradient") {
  MlpSpec spec;
  spec.input_dim = 3;
  spec.output_dim = 1;
  spec.hidden = {};
  spec.seed = 1;
  PotentialHead head{init_mlp(spec)};
  const Vec w = head.mlp.weights[0].row(0).transpose();
  std::mt19937_64 rng(13);
  const Vec q = random_vec(3, rng);
  CHECK((head.grad(q) - w).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("potential gradient matches central differences") {
  StructuredModel model(tiny_config(3, 1, 17));
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const Vec q = random_vec(3, rng);
    const Vec grad = model.potential_grad(q);
    const Vec fd = fd_gradient([&](const Vec& qq) { return model.potential(qq); }, q);
    CHECK(rel_error(grad, fd) < 1e-5);
  }
}

TEST_CASE("input head: sigmoid bound and reshape order") {
  MlpSpec spec;
  spec.input_dim = 2;
  spec.output_dim = 6;
  spec.hidden = {4};
  spec.seed = 2;

  InputMatrixHead bounded{zero_mlp(spec), 3, 2, 1.0};
  const Mat a = bounded.matrix(Vec::Zero(2));
  CHECK((a.array() == 0.5).all());  // sigmoid(0) scaled by 1

  InputMatrixHead plain{zero_mlp(spec), 3, 2, 0.0};
  CHECK(plain.matrix(Vec::Zero(2)).cwiseAbs().maxCoeff() == 0.0);

  // raw [1..6] fills rows first
  InputMatrixHead fixed{zero_mlp(spec), 3, 2, 0.0};
  fixed.mlp.weights.back().setZero();
  fixed.mlp.biases.back() = (Vec(6) << 1, 2, 3, 4, 5, 6).finished();
  const Mat want = (Mat(3, 2) << 1, 2, 3, 4, 5, 6).finished();
  CHECK((fixed.matrix(Vec::Zero(2)) - want).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("bounded input head entries stay in (0, scale)") {
  StructuredModelConfig config = tiny_config(2, 2, 23);
  config.input_bound_scale = 2.0;
  StructuredModel model(config);
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    const Mat a = model.input_matrix(random_vec(2, rng, 3.0));
    CHECK(a.minCoeff() > 0.0);
    CHECK(a.maxCoeff() < 2.0);
  }
}

TEST_CASE("mass jacobian: constant head, finite differences, symmetry") {
  StructuredModel model(tiny_config(2, 1, 31));
  std::mt19937_64 rng(31);

  // constant head: zero input weights
  StructuredModel frozen = model;
  frozen.mass_head().mlp.weights[0].setZero();
  const Tensor3 zero_jac = frozen.mass_jacobian(Vec::Ones(2));
  for (Eigen::Index k = 0; k < 2; ++k) CHECK(zero_jac.slice(k).cwiseAbs().maxCoeff() == 0.0);

  for (int trial = 0; trial < 20; ++trial) {
    const Vec q = random_vec(2, rng);
    const Tensor3 jac = model.mass_jacobian(q);
    for (Eigen::Index k = 0; k < 2; ++k) {
      CHECK((jac.slice(k) - jac.slice(k).transpose()).cwiseAbs().maxCoeff() == 0.0);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          const Vec fd = fd_gradient([&](const Vec& qq) { return model.mass(qq)(i, j); }, q);
          const double denom = std::max(std::abs(fd[k]), 1e-6);
          CHECK(std::abs(jac.slice(k)(i, j) - fd[k]) / denom < 1e-5);
        }
    }
  }
}

TEST_CASE("diagonal damping mode") {
  StructuredModelConfig config = tiny_config(3, 1, 37);
  config.damping_diagonal = true;
  StructuredModel model(config);
  const Mat d = model.damping(Vec::Zero(3));
  CHECK((d - Mat(d.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0);
  CHECK(min_eig(d) >= 0.0);
}

TEST_CASE("heads reject wrong configuration length") {
  StructuredModel model(tiny_config(2, 1, 41));
  CHECK_THROWS_AS(model.mass(Vec::Zero(3)), DimensionError);
  CHECK_THROWS_AS(model.potential_grad(Vec::Zero(1)), DimensionError);
  CHECK_THROWS_AS(model.input_matrix(Vec::Zero(3)), DimensionError);
}
