#include "dynlearn/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "dynlearn/loss.hpp"

namespace dynlearn {

using nlohmann::json;

AdamW::AdamW(Eigen::Index size, double learning_rate, double weight_decay)
    : lr_(learning_rate), wd_(weight_decay), m_(Vec::Zero(size)), v_(Vec::Zero(size)) {}

void AdamW::step(Vec& theta, const Vec& grad, double lr_scale) {
  require(theta.size() == m_.size() && grad.size() == m_.size(), "AdamW: size mismatch");
  ++t_;
  m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
  v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(kBeta1, t_);
  const double bc2 = 1.0 - std::pow(kBeta2, t_);
  const double lr = lr_ * lr_scale;
  Vec denom = (v_ / bc2).cwiseSqrt();
  denom.array() += kEps;
  theta -= lr * ((m_ / bc1).cwiseQuotient(denom) + wd_ * theta);
}

Vec flatten_model(const StructuredModel& model) {
  const auto sets = model.parameter_sets();
  Eigen::Index total = 0;
  for (const MlpParams* p : sets) total += p->parameter_count();
  Vec theta(total);
  Eigen::Index at = 0;
  for (const MlpParams* p : sets) {
    theta.segment(at, p->parameter_count()) = flatten(*p);
    at += p->parameter_count();
  }
  return theta;
}

void unflatten_into_model(const Vec& theta, StructuredModel& model) {
  auto sets = model.parameter_sets();
  Eigen::Index at = 0;
  for (MlpParams* p : sets) {
    const Eigen::Index count = p->parameter_count();
    require(at + count <= theta.size(), "unflatten_into_model: vector too short");
    *p = unflatten(p->spec, theta.segment(at, count));
    at += count;
  }
  require(at == theta.size(), "unflatten_into_model: vector too long");
}

namespace {

Vec flatten_grads(const std::vector<MlpParams>& grads) {
  Eigen::Index total = 0;
  for (const auto& g : grads) total += g.parameter_count();
  Vec flat(total);
  Eigen::Index at = 0;
  for (const auto& g : grads) {
    flat.segment(at, g.parameter_count()) = flatten(g);
    at += g.parameter_count();
  }
  return flat;
}

EpochStats batch_stats(const std::vector<double>& losses) {
  EpochStats stats;
  if (losses.empty()) return stats;
  stats.mean = std::accumulate(losses.begin(), losses.end(), 0.0) /
               static_cast<double>(losses.size());
  double var = 0.0;
  for (double l : losses) var += (l - stats.mean) * (l - stats.mean);
  stats.stddev = std::sqrt(var / static_cast<double>(losses.size()));
  return stats;
}

}  // namespace

TrainResult train(const StructuredModel& init, const TransitionDataset& dataset,
                  const TrainConfig& config) {
  config.validate();
  dataset.validate();
  require(dataset.kind == config.loss_kind, "train: dataset kind does not match loss kind");
  require(dataset.n == init.config_dim() && dataset.m_u == init.input_dim(),
          "train: dataset dims do not match the model");
  require(!dataset.samples.empty(), "train: empty dataset");

  TrainResult result;
  result.model = init;
  if (config.epochs == 0) return result;

  Vec theta = flatten_model(result.model);
  AdamW optimizer(theta.size(), config.learning_rate, config.weight_decay);
  std::mt19937_64 rng(config.seed);

  std::vector<int> order(dataset.samples.size());
  std::iota(order.begin(), order.end(), 0);

  Vec last_good = theta;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr_scale =
        config.cosine_decay
            ? 0.5 * (1.0 + std::cos(3.14159265358979323846 * epoch / config.epochs))
            : 1.0;
    std::vector<double> losses;
    try {
      for (size_t at = 0; at < order.size(); at += static_cast<size_t>(config.batch_size)) {
        const size_t end = std::min(order.size(), at + static_cast<size_t>(config.batch_size));
        const std::vector<int> batch(order.begin() + static_cast<long>(at),
                                     order.begin() + static_cast<long>(end));
        LossGrad lg = structured_loss_grad(result.model, config.loss_kind, dataset.samples,
                                           batch);
        if (!std::isfinite(lg.value)) throw NumericalError("train", "non-finite loss");
        losses.push_back(lg.value);
        Vec grad = flatten_grads(lg.grads);
        const double norm = grad.norm();
        if (norm > config.grad_clip_norm) grad *= config.grad_clip_norm / norm;
        optimizer.step(theta, grad, lr_scale);
        unflatten_into_model(theta, result.model);
      }
    } catch (const NumericalError&) {
      // divergence: roll back to the last completed epoch and stop
      unflatten_into_model(last_good, result.model);
      result.diverged = true;
      break;
    }
    last_good = theta;
    result.history.push_back(batch_stats(losses));
    result.epochs_run = epoch + 1;
  }
  return result;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr int kCheckpointVersion = 1;

json spec_to_json(const MlpSpec& spec) {
  return json{{"input_dim", spec.input_dim},
              {"output_dim", spec.output_dim},
              {"hidden", spec.hidden},
              {"hidden_activation", activation_name(spec.hidden_activation)},
              {"final_activation", activation_name(spec.final_activation)},
              {"final_scale", spec.final_scale},
              {"seed", spec.seed}};
}

MlpSpec spec_from_json(const json& j) {
  MlpSpec spec;
  spec.input_dim = j.at("input_dim").get<int>();
  spec.output_dim = j.at("output_dim").get<int>();
  spec.hidden = j.at("hidden").get<std::vector<int>>();
  spec.hidden_activation = activation_from_name(j.at("hidden_activation").get<std::string>());
  spec.final_activation = activation_from_name(j.at("final_activation").get<std::string>());
  spec.final_scale = j.at("final_scale").get<double>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  return spec;
}

json params_to_json(const MlpParams& params) {
  const Vec theta = flatten(params);
  return json{{"spec", spec_to_json(params.spec)},
              {"theta", std::vector<double>(theta.data(), theta.data() + theta.size())}};
}

MlpParams params_from_json(const json& j) {
  const MlpSpec spec = spec_from_json(j.at("spec"));
  const auto values = j.at("theta").get<std::vector<double>>();
  Vec theta(static_cast<Eigen::Index>(values.size()));
  for (size_t i = 0; i < values.size(); ++i) theta[static_cast<Eigen::Index>(i)] = values[i];
  return unflatten(spec, theta);
}

json chol_head_to_json(const CholeskyHead& head) {
  json j = params_to_json(head.mlp);
  j["n"] = head.n;
  j["eps"] = head.eps;
  j["bound_scale"] = head.bound_scale;
  j["diag_only"] = head.diag_only;
  return j;
}

CholeskyHead chol_head_from_json(const json& j) {
  CholeskyHead head;
  head.mlp = params_from_json(j);
  head.n = j.at("n").get<int>();
  head.eps = j.at("eps").get<double>();
  head.bound_scale = j.at("bound_scale").get<double>();
  head.diag_only = j.at("diag_only").get<bool>();
  return head;
}

}  // namespace

void save_checkpoint(const StructuredModel& model, const std::string& path,
                     const CheckpointMeta& meta) {
  json j;
  j["format_version"] = kCheckpointVersion;
  j["kind"] = model.kind() == ModelKind::LNN ? "lnn" : "hnn";
  j["n"] = model.config_dim();
  j["m_u"] = model.input_dim();
  j["heads"]["mass"] = chol_head_to_json(model.mass_head());
  j["heads"]["potential"] = params_to_json(model.potential_head().mlp);
  j["heads"]["damping"] = chol_head_to_json(model.damping_head());
  {
    json input = params_to_json(model.input_head().mlp);
    input["rows"] = model.input_head().rows;
    input["cols"] = model.input_head().cols;
    input["bound_scale"] = model.input_head().bound_scale;
    j["heads"]["input"] = std::move(input);
  }
  j["training"] = json{{"final_loss_mean", meta.final_loss_mean},
                       {"final_loss_std", meta.final_loss_std},
                       {"epochs", meta.epochs},
                       {"seed", meta.seed}};
  std::ofstream out(path);
  if (!out) throw IoError("save_checkpoint: cannot open " + path);
  out << j.dump(2) << "\n";
}

std::pair<StructuredModel, CheckpointMeta> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError(std::string("load_checkpoint: malformed JSON: ") + e.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointVersion)
      throw IoError("load_checkpoint: unsupported format_version " + std::to_string(version));
    StructuredModel model;
    model.set_dims(j.at("n").get<int>(), j.at("m_u").get<int>(),
                   j.at("kind").get<std::string>() == "hnn" ? ModelKind::HNN : ModelKind::LNN);
    model.mass_head() = chol_head_from_json(j.at("heads").at("mass"));
    model.potential_head().mlp = params_from_json(j.at("heads").at("potential"));
    model.damping_head() = chol_head_from_json(j.at("heads").at("damping"));
    const json& input = j.at("heads").at("input");
    model.input_head().mlp = params_from_json(input);
    model.input_head().rows = input.at("rows").get<int>();
    model.input_head().cols = input.at("cols").get<int>();
    model.input_head().bound_scale = input.at("bound_scale").get<double>();
    CheckpointMeta meta;
    const json& training = j.at("training");
    meta.final_loss_mean = training.at("final_loss_mean").get<double>();
    meta.final_loss_std = training.at("final_loss_std").get<double>();
    meta.epochs = training.at("epochs").get<int>();
    meta.seed = training.at("seed").get<std::uint64_t>();
    return {std::move(model), meta};
  } catch (const json::exception& e) {
    throw IoError(std::string("load_checkpoint: missing or mistyped field: ") + e.what());
  }
}

}  // namespace dynlearn
