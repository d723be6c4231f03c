#include "dynlearn/blackbox.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "dynlearn/tape.hpp"

namespace dynlearn {

namespace {

Vec pack_input(const Vec& q, const Vec& w, const Vec& u, double dt) {
  Vec x(q.size() + w.size() + u.size() + 1);
  x << q, w, u, dt;
  return x;
}

struct BlackBoxBatch {
  Mat inputs;
  Mat labels;
};

BlackBoxBatch load_batch(const BlackBoxModel& model,
                         const std::vector<TransitionSample>& samples,
                         const std::vector<int>& indices) {
  require(!indices.empty(), "blackbox: empty batch");
  const int n = model.n;
  const int label_dim = model.kind == ModelKind::LNN ? n : 2 * n;
  BlackBoxBatch batch;
  batch.inputs.resize(2 * n + model.m_u + 1, static_cast<Eigen::Index>(indices.size()));
  batch.labels.resize(label_dim, static_cast<Eigen::Index>(indices.size()));
  for (size_t b = 0; b < indices.size(); ++b) {
    const TransitionSample& s = samples.at(static_cast<size_t>(indices[b]));
    batch.inputs.col(static_cast<Eigen::Index>(b)) = pack_input(s.q, s.w, s.u, s.dt);
    if (model.kind == ModelKind::LNN) {
      batch.labels.col(static_cast<Eigen::Index>(b)) = s.label_w;
    } else {
      batch.labels.col(static_cast<Eigen::Index>(b)).head(n) = s.label_q;
      batch.labels.col(static_cast<Eigen::Index>(b)).tail(n) = s.label_w;
    }
  }
  return batch;
}

}  // namespace

Vec BlackBoxModel::predict(const Vec& q, const Vec& w, const Vec& u, double dt) const {
  require(q.size() == n && w.size() == n && u.size() == m_u, "BlackBoxModel: dims");
  return mlp_eval(mlp, pack_input(q, w, u, dt));
}

BlackBoxModel make_blackbox(int n, int m_u, ModelKind kind, const std::vector<int>& hidden,
                            std::uint64_t seed) {
  require(n >= 1 && m_u >= 1, "make_blackbox: dims must be >= 1");
  MlpSpec spec;
  spec.input_dim = 2 * n + m_u + 1;
  spec.output_dim = kind == ModelKind::LNN ? n : 2 * n;
  spec.hidden = hidden;
  spec.hidden_activation = Activation::Softplus;
  spec.seed = seed;
  return BlackBoxModel{init_mlp(spec), kind, n, m_u};
}

double blackbox_loss(const BlackBoxModel& model, const std::vector<TransitionSample>& samples,
                     const std::vector<int>& indices) {
  const BlackBoxBatch batch = load_batch(model, samples, indices);
  double acc = 0.0;
  for (Eigen::Index b = 0; b < batch.inputs.cols(); ++b)
    acc += (mlp_eval(model.mlp, batch.inputs.col(b)) - batch.labels.col(b)).squaredNorm();
  return acc / static_cast<double>(batch.inputs.cols());
}

BlackBoxTrainResult train_blackbox(const BlackBoxModel& init, const TransitionDataset& dataset,
                                   const TrainConfig& config) {
  config.validate();
  dataset.validate();
  require(dataset.kind == init.kind, "train_blackbox: dataset kind mismatch");
  require(dataset.n == init.n && dataset.m_u == init.m_u, "train_blackbox: dims mismatch");

  BlackBoxTrainResult result;
  result.model = init;
  if (config.epochs == 0) return result;

  Vec theta = flatten(result.model.mlp);
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
        const std::vector<int> idx(order.begin() + static_cast<long>(at),
                                   order.begin() + static_cast<long>(end));
        const BlackBoxBatch batch = load_batch(result.model, dataset.samples, idx);

        tape::Graph g;
        const tape::MlpLeaves leaves = tape::make_mlp_leaves(g, result.model.mlp);
        const tape::Value pred = tape::mlp_forward(g, leaves, g.constant(batch.inputs));
        const tape::Value err = g.sub(pred, g.constant(batch.labels));
        const tape::Value loss =
            g.scale(g.sum_sq(err), 1.0 / static_cast<double>(batch.inputs.cols()));
        g.backward(loss);
        if (!std::isfinite(g.scalar(loss)))
          throw NumericalError("train_blackbox", "non-finite loss");
        losses.push_back(g.scalar(loss));

        Vec grad = flatten(tape::leaf_gradients(g, leaves));
        const double norm = grad.norm();
        if (norm > config.grad_clip_norm) grad *= config.grad_clip_norm / norm;
        optimizer.step(theta, grad, lr_scale);
        result.model.mlp = unflatten(result.model.mlp.spec, theta);
      }
    } catch (const NumericalError&) {
      result.model.mlp = unflatten(result.model.mlp.spec, last_good);
      result.diverged = true;
      break;
    }
    last_good = theta;
    result.history.push_back(EpochStats{
        std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size()),
        0.0});
    auto& stats = result.history.back();
    double var = 0.0;
    for (double l : losses) var += (l - stats.mean) * (l - stats.mean);
    stats.stddev = std::sqrt(var / static_cast<double>(losses.size()));
    result.epochs_run = epoch + 1;
  }
  return result;
}

namespace {

using nlohmann::json;
constexpr int kBlackboxVersion = 1;

}  // namespace

void save_blackbox(const BlackBoxModel& model, const std::string& path,
                   const CheckpointMeta& meta) {
  const Vec theta = flatten(model.mlp);
  json j;
  j["format_version"] = kBlackboxVersion;
  j["model_class"] = "blackbox";
  j["kind"] = model.kind == ModelKind::LNN ? "lnn" : "hnn";
  j["n"] = model.n;
  j["m_u"] = model.m_u;
  j["spec"] = {{"input_dim", model.mlp.spec.input_dim},
               {"output_dim", model.mlp.spec.output_dim},
               {"hidden", model.mlp.spec.hidden},
               {"hidden_activation", activation_name(model.mlp.spec.hidden_activation)},
               {"final_activation", activation_name(model.mlp.spec.final_activation)},
               {"final_scale", model.mlp.spec.final_scale},
               {"seed", model.mlp.spec.seed}};
  j["theta"] = std::vector<double>(theta.data(), theta.data() + theta.size());
  j["training"] = {{"final_loss_mean", meta.final_loss_mean},
                   {"final_loss_std", meta.final_loss_std},
                   {"epochs", meta.epochs},
                   {"seed", meta.seed}};
  std::ofstream out(path);
  if (!out) throw IoError("save_blackbox: cannot open " + path);
  out << j.dump(2) << "\n";
}

std::pair<BlackBoxModel, CheckpointMeta> load_blackbox(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_blackbox: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError(std::string("load_blackbox: malformed JSON: ") + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != kBlackboxVersion)
      throw IoError("load_blackbox: unsupported format_version");
    if (j.at("model_class").get<std::string>() != "blackbox")
      throw IoError("load_blackbox: not a blackbox checkpoint");
    BlackBoxModel model;
    model.kind = j.at("kind").get<std::string>() == "hnn" ? ModelKind::HNN : ModelKind::LNN;
    model.n = j.at("n").get<int>();
    model.m_u = j.at("m_u").get<int>();
    MlpSpec spec;
    const json& js = j.at("spec");
    spec.input_dim = js.at("input_dim").get<int>();
    spec.output_dim = js.at("output_dim").get<int>();
    spec.hidden = js.at("hidden").get<std::vector<int>>();
    spec.hidden_activation = activation_from_name(js.at("hidden_activation").get<std::string>());
    spec.final_activation = activation_from_name(js.at("final_activation").get<std::string>());
    spec.final_scale = js.at("final_scale").get<double>();
    spec.seed = js.at("seed").get<std::uint64_t>();
    const auto values = j.at("theta").get<std::vector<double>>();
    Vec theta(static_cast<Eigen::Index>(values.size()));
    for (size_t i = 0; i < values.size(); ++i) theta[static_cast<Eigen::Index>(i)] = values[i];
    model.mlp = unflatten(spec, theta);
    CheckpointMeta meta;
    const json& training = j.at("training");
    meta.final_loss_mean = training.at("final_loss_mean").get<double>();
    meta.final_loss_std = training.at("final_loss_std").get<double>();
    meta.epochs = training.at("epochs").get<int>();
    meta.seed = training.at("seed").get<std::uint64_t>();
    return {std::move(model), meta};
  } catch (const json::exception& e) {
    throw IoError(std::string("load_blackbox: missing or mistyped field: ") + e.what());
  }
}

bool is_blackbox_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("is_blackbox_checkpoint: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception&) {
    return false;
  }
  return j.contains("model_class") && j["model_class"] == "blackbox";
}

}  // namespace dynlearn
