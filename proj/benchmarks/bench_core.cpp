#include <benchmark/benchmark.h>

#include <numeric>
#include <random>

#include "dynlearn/dynamics.hpp"
#include "dynlearn/integrators.hpp"
#include "dynlearn/loss.hpp"
#include "dynlearn/plants.hpp"

using namespace dynlearn;

namespace {

StructuredModel bench_model(int n, int m_u) {
  StructuredModelConfig config;
  config.n = n;
  config.m_u = m_u;
  config.seed = 17;
  return StructuredModel(config);
}

TransitionDataset bench_dataset(int n_samples) {
  GenSpec spec = default_gen_spec("damped_pendulum", 2, 2, 11);
  spec.duration = std::max(1.0, n_samples / 400.0);
  spec.fine_dt = 1e-3;
  spec.resample_hz = {100.0};
  TransitionDataset dataset = generate_dataset(spec).dataset;
  dataset.samples.resize(static_cast<size_t>(n_samples));
  return dataset;
}

}  // namespace

static void BM_MlpEval(benchmark::State& state) {
  MlpSpec spec;
  spec.input_dim = 3;
  spec.output_dim = 6;
  spec.hidden = {32, 32, 32};
  spec.seed = 3;
  const MlpParams params = init_mlp(spec);
  const Vec x = Vec::LinSpaced(3, -1.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(mlp_eval(params, x));
}
BENCHMARK(BM_MlpEval);

static void BM_MassJacobian(benchmark::State& state) {
  const StructuredModel model = bench_model(3, 3);
  const Vec q = Vec::LinSpaced(3, -0.5, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(model.mass_jacobian(q));
}
BENCHMARK(BM_MassJacobian);

static void BM_ForwardDynamics(benchmark::State& state) {
  const PlantModel model(builtin_plant("two_link_arm"));
  const Vec q = (Vec(2) << 0.4, -0.2).finished();
  const Vec qd = (Vec(2) << 0.3, 0.1).finished();
  const Vec u = (Vec(2) << 0.5, -0.5).finished();
  for (auto _ : state) benchmark::DoNotOptimize(lagrangian_forward_dynamics(model, q, qd, u));
}
BENCHMARK(BM_ForwardDynamics);

static void BM_PendulumRolloutSecond(benchmark::State& state) {
  const Plant plant = builtin_plant("damped_pendulum");
  const VectorField f = plant_vector_field(plant);
  Vec x0(2);
  x0 << 1.0, 0.0;
  const RolloutConfig config{1e-3, 1000, std::nullopt};
  const InputSchedule u = constant_input(Vec::Constant(1, 0.3));
  for (auto _ : state) benchmark::DoNotOptimize(rollout(f, x0, u, config));
}
BENCHMARK(BM_PendulumRolloutSecond);

static void BM_LossGradBatch(benchmark::State& state) {
  const StructuredModel model = bench_model(1, 1);
  const TransitionDataset dataset = bench_dataset(static_cast<int>(state.range(0)));
  std::vector<int> batch(dataset.samples.size());
  std::iota(batch.begin(), batch.end(), 0);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        structured_loss_grad(model, ModelKind::LNN, dataset.samples, batch));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LossGradBatch)->Arg(32)->Arg(128);

BENCHMARK_MAIN();
