#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "dynlearn/integrators.hpp"
#include "dynlearn/loss.hpp"
#include "dynlearn/plants.hpp"
#include "dynlearn/train.hpp"
#include "test_util.hpp"

using namespace dynlearn;
using namespace dynlearn::testing;

namespace {

StructuredModel tiny_model(int n, int m_u, std::uint64_t seed, ModelKind kind = ModelKind::LNN) {
  StructuredModelConfig config;
  config.n = n;
  config.m_u = m_u;
  config.kind = kind;
  config.mass_hidden = {8, 8};
  config.potential_hidden = {6, 6};
  config.damping_hidden = {6};
  config.input_hidden = {6};
  config.seed = seed;
  return StructuredModel(config);
}

TransitionDataset pendulum_dataset(ModelKind kind, double duration = 1.0,
                                   std::uint64_t seed = 5) {
  GenSpec spec = default_gen_spec("damped_pendulum", 2, 2, seed);
  spec.duration = duration;
  spec.fine_dt = 1e-3;
  spec.resample_hz = {100.0};
  spec.label_kind = kind;
  return generate_dataset(spec).dataset;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("dataset csv round-trips exactly") {
  const TransitionDataset dataset = pendulum_dataset(ModelKind::LNN, 0.3);
  const std::string path = temp_path("dynlearn_ds.csv");
  save_dataset_csv(dataset, path);
  const TransitionDataset back = load_dataset_csv(path);
  REQUIRE(back.samples.size() == dataset.samples.size());
  CHECK(back.kind == dataset.kind);
  CHECK(back.n == dataset.n);
  for (size_t k = 0; k < dataset.samples.size(); ++k) {
    CHECK((back.samples[k].q - dataset.samples[k].q).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.samples[k].w - dataset.samples[k].w).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.samples[k].dt == dataset.samples[k].dt);
    CHECK((back.samples[k].label_w - dataset.samples[k].label_w).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.samples[k].trajectory_id == dataset.samples[k].trajectory_id);
  }
  std::remove(path.c_str());
}

TEST_CASE("hnn dataset csv carries both label blocks") {
  const TransitionDataset dataset = pendulum_dataset(ModelKind::HNN, 0.2);
  const std::string path = temp_path("dynlearn_ds_hnn.csv");
  save_dataset_csv(dataset, path);
  const TransitionDataset back = load_dataset_csv(path);
  CHECK(back.kind == ModelKind::HNN);
  for (size_t k = 0; k < dataset.samples.size(); ++k)
    CHECK((back.samples[k].label_q - dataset.samples[k].label_q).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("malformed dataset files raise IoError") {
  const std::string path = temp_path("dynlearn_bad.csv");
  {
    std::ofstream out(path);
    out << "q0,u0,dt\n1,2\n";
  }
  CHECK_THROWS_AS(load_dataset_csv(path), IoError);
  {
    std::ofstream out(path);
    out << "trajectory_id,q0,qd0,u0,dt,label_qd0\n0,1,2,3,not_a_number,5\n";
  }
  CHECK_THROWS_AS(load_dataset_csv(path), IoError);
  CHECK_THROWS_AS(load_dataset_csv(temp_path("no_such_file.csv")), IoError);
  std::remove(path.c_str());
}

TEST_CASE("trajectory-level split keeps boundaries intact") {
  const TransitionDataset dataset = pendulum_dataset(ModelKind::LNN, 0.5, 21);
  const auto [train_set, val_set] = split_dataset(dataset, 0.25, 77);
  CHECK(train_set.samples.size() + val_set.samples.size() == dataset.samples.size());
  CHECK(!val_set.samples.empty());
  std::set<int> train_ids, val_ids;
  for (const auto& s : train_set.samples) train_ids.insert(s.trajectory_id);
  for (const auto& s : val_set.samples) val_ids.insert(s.trajectory_id);
  for (int id : val_ids) CHECK(train_ids.count(id) == 0);
  const auto [t2, v2] = split_dataset(dataset, 0.25, 77);
  CHECK(t2.samples.size() == train_set.samples.size());
}

TEST_CASE("perfect model: self-consistent data gives vanishing loss") {
  // data generated by the same integrator at the same step
  GenSpec spec = default_gen_spec("damped_pendulum", 2, 2, 3);
  spec.duration = 0.5;
  spec.fine_dt = 0.01;
  spec.resample_hz = {100.0};
  const TransitionDataset dataset = generate_dataset(spec).dataset;
  const PlantModel oracle(make_damped_pendulum());
  CHECK(lnn_loss(oracle, dataset.samples) < 1e-20);

  spec.label_kind = ModelKind::HNN;
  const TransitionDataset hnn_set = generate_dataset(spec).dataset;
  CHECK(hnn_loss(oracle, hnn_set.samples) < 1e-20);
}

TEST_CASE("loss is the mean of squared residuals") {
  const PlantModel oracle(make_damped_pendulum());
  GenSpec spec = default_gen_spec("damped_pendulum", 1, 1, 9);
  spec.duration = 0.2;
  spec.fine_dt = 0.01;
  spec.resample_hz = {100.0};
  TransitionDataset dataset = generate_dataset(spec).dataset;
  REQUIRE(dataset.samples.size() >= 2);

  // fabricate residuals on two samples
  std::vector<TransitionSample> two{dataset.samples[0], dataset.samples[1]};
  two[0].label_w[0] += 0.3;
  two[1].label_w[0] -= 0.4;
  const double want = (0.3 * 0.3 + 0.4 * 0.4) / 2.0;
  CHECK(lnn_loss(oracle, two) == doctest::Approx(want).epsilon(1e-9));

  std::vector<TransitionSample> one{two[0]};
  CHECK(lnn_loss(oracle, one) == doctest::Approx(0.09).epsilon(1e-9));
}

TEST_CASE("hnn loss reduces to the configuration term when momenta match") {
  const PlantModel oracle(make_damped_pendulum());
  GenSpec spec = default_gen_spec("damped_pendulum", 1, 1, 13);
  spec.duration = 0.2;
  spec.fine_dt = 0.01;
  spec.resample_hz = {100.0};
  spec.label_kind = ModelKind::HNN;
  TransitionDataset dataset = generate_dataset(spec).dataset;
  std::vector<TransitionSample> batch{dataset.samples[0]};
  batch[0].label_q[0] += 0.2;
  CHECK(hnn_loss(oracle, batch) == doctest::Approx(0.04).epsilon(1e-9));
}

TEST_CASE("integration failures surface the offending sample index") {
  Plant exploding = testing::linear_plant();
  exploding.input_matrix = [](const Vec&) { return Mat::Constant(1, 1, 1e308); };
  const PlantModel model(exploding);
  GenSpec spec = default_gen_spec("damped_pendulum", 1, 1, 17);
  spec.duration = 0.2;
  spec.fine_dt = 0.01;
  spec.resample_hz = {100.0};
  TransitionDataset dataset = generate_dataset(spec).dataset;
  for (auto& s : dataset.samples) s.u = Vec::Constant(1, 10.0);
  CHECK_THROWS_WITH_AS(lnn_loss(model, dataset.samples), doctest::Contains("sample 0"),
                       NumericalError);
}

TEST_CASE("tape forward value equals the plain loss") {
  for (ModelKind kind : {ModelKind::LNN, ModelKind::HNN}) {
    const StructuredModel model = tiny_model(1, 1, 15, kind);
    const TransitionDataset dataset = pendulum_dataset(kind, 0.3, 15);
    std::vector<int> batch{0, 3, 7, 11};
    const double plain = structured_loss(model, kind, dataset.samples, batch);
    const double on_tape = structured_loss_tape_value(model, kind, dataset.samples, batch);
    CHECK(on_tape == doctest::Approx(plain).epsilon(1e-12));
  }

  // bounded and diagonal head modes go through distinct code on both paths
  StructuredModelConfig config;
  config.n = 1;
  config.m_u = 1;
  config.mass_hidden = {8, 8};
  config.potential_hidden = {6, 6};
  config.damping_hidden = {6};
  config.input_hidden = {6};
  config.mass_bound_scale = 3.5;
  config.input_bound_scale = 2.0;
  config.damping_diagonal = true;
  config.seed = 16;
  const StructuredModel bounded(config);
  const TransitionDataset dataset = pendulum_dataset(ModelKind::LNN, 0.3, 16);
  std::vector<int> batch{1, 4, 9};
  const double plain = structured_loss(bounded, ModelKind::LNN, dataset.samples, batch);
  const double on_tape =
      structured_loss_tape_value(bounded, ModelKind::LNN, dataset.samples, batch);
  CHECK(on_tape == doctest::Approx(plain).epsilon(1e-12));

  const LossGrad lg = structured_loss_grad(bounded, ModelKind::LNN, dataset.samples, batch);
  const Vec theta0 = flatten_model(bounded);
  Vec analytic(0);
  for (const auto& g : lg.grads) {
    const Vec flat = flatten(g);
    Vec merged(analytic.size() + flat.size());
    merged << analytic, flat;
    analytic = merged;
  }
  const Vec fd = fd_gradient(
      [&](const Vec& theta) {
        StructuredModel probe = bounded;
        unflatten_into_model(theta, probe);
        return structured_loss(probe, ModelKind::LNN, dataset.samples, batch);
      },
      theta0);
  CHECK(rel_error(analytic, fd, 1e-6) < 1e-4);
}

TEST_CASE("loss gradients match finite differences on all four heads") {
  for (ModelKind kind : {ModelKind::LNN, ModelKind::HNN}) {
    CAPTURE(kind == ModelKind::LNN ? "lnn" : "hnn");
    StructuredModel model = tiny_model(1, 1, 19, kind);
    const TransitionDataset dataset = pendulum_dataset(kind, 0.2, 19);
    const std::vector<int> batch{0, 5, 9};  // three samples

    const LossGrad lg = structured_loss_grad(model, kind, dataset.samples, batch);
    Vec analytic(0);
    for (const auto& g : lg.grads) {
      Vec flat = flatten(g);
      Vec merged(analytic.size() + flat.size());
      merged << analytic, flat;
      analytic = merged;
    }

    const Vec theta0 = flatten_model(model);
    const Vec fd = fd_gradient(
        [&](const Vec& theta) {
          StructuredModel probe = model;
          unflatten_into_model(theta, probe);
          return structured_loss(probe, kind, dataset.samples, batch);
        },
        theta0);
    CHECK(rel_error(analytic, fd, 1e-6) < 1e-4);
  }
}

TEST_CASE("zero-epoch training returns the model unchanged") {
  const StructuredModel model = tiny_model(1, 1, 23);
  const TransitionDataset dataset = pendulum_dataset(ModelKind::LNN, 0.2);
  TrainConfig config;
  config.epochs = 0;
  const TrainResult result = train(model, dataset, config);
  CHECK((flatten_model(result.model) - flatten_model(model)).norm() == 0.0);
  CHECK(result.history.empty());
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  const StructuredModel model = tiny_model(1, 1, 27);
  const TransitionDataset dataset = pendulum_dataset(ModelKind::LNN, 0.3, 27);
  TrainConfig config;
  config.epochs = 3;
  config.batch_size = 16;
  config.seed = 99;
  const TrainResult a = train(model, dataset, config);
  const TrainResult b = train(model, dataset, config);
  CHECK((flatten_model(a.model) - flatten_model(b.model)).norm() == 0.0);
  REQUIRE(a.history.size() == b.history.size());
  for (size_t e = 0; e < a.history.size(); ++e) CHECK(a.history[e].mean == b.history[e].mean);
}

TEST_CASE("a 1-DOF linear system trains to a tiny one-step loss") {
  // constant M, D, A and quadratic V
  GenSpec spec;
  spec.plant_id = "damped_pendulum";
  const Plant plant = testing::linear_plant(1.2, 3.0, 0.2, 1.0);

  // build transitions directly from the linear plant
  const VectorField field = plant_vector_field(plant);
  TransitionDataset dataset;
  dataset.kind = ModelKind::LNN;
  dataset.n = 1;
  dataset.m_u = 1;
  std::mt19937_64 rng(31);
  int traj = 0;
  while (dataset.samples.size() < 2000) {
    Vec x = random_vec(2, rng, 1.0);
    const Vec u = random_vec(1, rng, 1.0);
    for (int k = 0; k < 50; ++k) {
      const Vec next = rk4_step(field, x, u, 0.01);
      TransitionSample s;
      s.q = x.head(1);
      s.w = x.tail(1);
      s.u = u;
      s.dt = 0.01;
      s.label_w = next.tail(1);
      s.trajectory_id = traj;
      dataset.samples.push_back(std::move(s));
      x = next;
    }
    ++traj;
  }

  TrainConfig config;
  config.epochs = 250;
  config.batch_size = 128;
  config.learning_rate = 3e-3;
  config.weight_decay = 0.0;
  config.seed = 7;
  const TrainResult result = train(tiny_model(1, 1, 31), dataset, config);
  CHECK_FALSE(result.diverged);
  const double final_loss =
      structured_loss(result.model, ModelKind::LNN, dataset.samples, [&] {
        std::vector<int> all(dataset.samples.size());
        std::iota(all.begin(), all.end(), 0);
        return all;
      }());
  CHECK(final_loss < 1e-8);
}

TEST_CASE("hnn training makes progress on pendulum momentum data") {
  const TransitionDataset dataset = pendulum_dataset(ModelKind::HNN, 2.0, 47);
  const StructuredModel init = tiny_model(1, 1, 47, ModelKind::HNN);
  std::vector<int> all(dataset.samples.size());
  std::iota(all.begin(), all.end(), 0);
  const double before = structured_loss(init, ModelKind::HNN, dataset.samples, all);
  TrainConfig config;
  config.epochs = 120;
  config.batch_size = 64;
  config.loss_kind = ModelKind::HNN;
  config.seed = 47;
  const TrainResult result = train(init, dataset, config);
  CHECK_FALSE(result.diverged);
  const double after = structured_loss(result.model, ModelKind::HNN, dataset.samples, all);
  CHECK(after < before * 0.01);
}

TEST_CASE("divergence aborts with the last good parameters") {
  const StructuredModel model = tiny_model(1, 1, 35);
  const TransitionDataset dataset = pendulum_dataset(ModelKind::LNN, 0.2, 35);
  TrainConfig config;
  config.epochs = 50;
  config.learning_rate = 1e9;  // guaranteed blowup
  config.grad_clip_norm = 1e12;
  const TrainResult result = train(model, dataset, config);
  CHECK(result.diverged);
  CHECK(flatten_model(result.model).allFinite());
}

TEST_CASE("checkpoint round-trip reproduces head outputs bitwise") {
  const StructuredModel model = tiny_model(2, 2, 39, ModelKind::HNN);
  const std::string path = temp_path("dynlearn_ckpt.json");
  CheckpointMeta meta;
  meta.final_loss_mean = 1.25e-7;
  meta.epochs = 17;
  save_checkpoint(model, path, meta);
  const auto [back, meta_back] = load_checkpoint(path);
  CHECK(meta_back.epochs == 17);
  CHECK(meta_back.final_loss_mean == 1.25e-7);
  CHECK(back.kind() == ModelKind::HNN);
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec q = random_vec(2, rng);
    CHECK((back.mass(q) - model.mass(q)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.potential(q) == model.potential(q));
    CHECK((back.damping(q) - model.damping(q)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.input_matrix(q) - model.input_matrix(q)).cwiseAbs().maxCoeff() == 0.0);
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint errors: corruption and version mismatch") {
  const std::string path = temp_path("dynlearn_ckpt_bad.json");
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  {
    std::ofstream out(path);
    out << "{\"format_version\": 999}";
  }
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint(temp_path("missing_ckpt.json")), IoError);
}

TEST_CASE("train rejects mismatched dataset kinds") {
  const StructuredModel model = tiny_model(1, 1, 43);
  const TransitionDataset dataset = pendulum_dataset(ModelKind::HNN, 0.2);
  TrainConfig config;
  config.loss_kind = ModelKind::LNN;
  CHECK_THROWS_AS(train(model, dataset, config), DimensionError);
}
