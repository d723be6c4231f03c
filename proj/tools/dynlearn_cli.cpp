// dynlearn command line: data generation, training, prediction, control and
// evaluation for the structured dynamics-learning pipeline.
//
// Option precedence: config file < DYNLEARN_* environment < command flags.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "dynlearn/blackbox.hpp"
#include "dynlearn/control.hpp"
#include "dynlearn/loss.hpp"
#include "dynlearn/metrics.hpp"
#include "dynlearn/plants.hpp"
#include "dynlearn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dynlearn;

namespace {

// ---------------------------------------------------------------------------
// configuration stack
// ---------------------------------------------------------------------------

struct ConfigStack {
  json file = json::object();

  static std::optional<std::string> env(const char* name) {
    const char* value = std::getenv(name);
    if (value == nullptr || *value == '\0') return std::nullopt;
    return std::string(value);
  }

  template <typename T>
  T value(const std::string& key, bool flag_set, const T& flag_value, const T& fallback) const {
    if (flag_set) return flag_value;
    if (file.contains(key)) {
      try {
        return file.at(key).get<T>();
      } catch (const json::exception& e) {
        throw IoError("config field '" + key + "': " + e.what());
      }
    }
    return fallback;
  }

  std::uint64_t seed(bool flag_set, std::uint64_t flag_value) const {
    if (flag_set) return flag_value;
    if (const auto env_seed = env("DYNLEARN_SEED")) return std::stoull(*env_seed);
    return value<std::uint64_t>("seed", false, 0, 0);
  }

  std::string out_dir(bool flag_set, const std::string& flag_value) const {
    if (flag_set) return flag_value;
    if (const auto env_out = env("DYNLEARN_OUT")) return *env_out;
    return value<std::string>("out", false, "", "out");
  }
};

ConfigStack load_config(const std::string& path) {
  ConfigStack stack;
  if (path.empty()) return stack;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  try {
    in >> stack.file;
  } catch (const json::exception& e) {
    throw IoError("config file " + path + ": " + e.what());
  }
  return stack;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

std::string config_hash(const json& resolved) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(resolved.dump())));
  return buf;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
}

std::vector<int> parse_widths(const std::string& text) {
  std::vector<int> widths;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) widths.push_back(std::stoi(item));
  }
  if (widths.empty()) throw IoError("--hidden: expected a comma list like \"32,32,32\"");
  return widths;
}

Vec parse_vec(const std::string& text, const char* what) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) values.push_back(std::stod(item));
  }
  if (values.empty()) throw IoError(std::string(what) + ": expected a comma list of numbers");
  Vec v(static_cast<Eigen::Index>(values.size()));
  for (size_t i = 0; i < values.size(); ++i) v[static_cast<Eigen::Index>(i)] = values[i];
  return v;
}

ModelKind parse_kind(const std::string& name) {
  if (name == "lnn") return ModelKind::LNN;
  if (name == "hnn") return ModelKind::HNN;
  throw IoError("--model: expected lnn or hnn, got " + name);
}

void save_trajectory_csv(const RawTrajectory& raw, int n, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string());
  const Eigen::Index m = raw.inputs.empty() ? 0 : raw.inputs[0].size();
  out << "t";
  for (int i = 0; i < n; ++i) out << ",q" << i;
  for (int i = 0; i < n; ++i) out << ",qd" << i;
  for (Eigen::Index i = 0; i < m; ++i) out << ",u" << i;
  out << "\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ',' << buf;
  };
  for (size_t k = 0; k < raw.states.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g", raw.times[k]);
    out << buf;
    for (int i = 0; i < 2 * n; ++i) put(raw.states[k][i]);
    const Vec& u = k < raw.inputs.size() ? raw.inputs[k] : raw.inputs.back();
    for (Eigen::Index i = 0; i < m; ++i) put(u[i]);
    out << "\n";
  }
}

// deterministic content only: wall-clock timings go to a sidecar so reruns
// with identical seeds produce byte-identical metrics files
json metrics_to_json(const Metrics& metrics) {
  json j;
  j["one_step"] = {{"mean", metrics.one_step_mean}, {"std", metrics.one_step_std}};
  j["rollout"] = {{"horizon", metrics.rollout_horizon},
                  {"mean", metrics.rollout_mean},
                  {"std", metrics.rollout_std}};
  j["windowed"] = {{"window", metrics.window},
                   {"mean", metrics.windowed_mean},
                   {"std", metrics.windowed_std}};
  if (metrics.tracking) {
    j["tracking"] = {{"rmse", metrics.tracking->rmse},
                     {"rmse_pct", metrics.tracking->rmse_pct}};
  }
  j["trajectories"] = metrics.trajectories;
  j["samples"] = metrics.samples;
  return j;
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int run_gen_data(const ConfigStack& cfg, const std::string& plant, int states, int signals,
                 double dt, double duration, const std::string& hz_list,
                 const std::string& model, double noise, int smooth, bool raw,
                 std::uint64_t seed, const std::string& out) {
  GenSpec spec = default_gen_spec(plant, states, signals, seed);
  spec.fine_dt = dt;
  spec.duration = duration;
  for (auto& signal : spec.signals) signal.duration = duration;
  spec.resample_hz.clear();
  {
    const Vec hz = parse_vec(hz_list, "--hz");
    for (Eigen::Index i = 0; i < hz.size(); ++i) spec.resample_hz.push_back(hz[i]);
  }
  spec.label_kind = parse_kind(model);
  if (noise > 0.0) spec.noise_sigma = Vec::Constant(1, noise);
  spec.smooth_window = smooth;

  const json resolved = {{"cmd", "gen-data"}, {"plant", plant}, {"states", states},
                         {"signals", signals}, {"dt", dt}, {"duration", duration},
                         {"hz", hz_list}, {"model", model}, {"noise", noise},
                         {"smooth", smooth}, {"seed", seed}};

  const GenResult result = generate_dataset(spec);
  fs::create_directories(out);
  save_dataset_csv(result.dataset, (fs::path(out) / "dataset.csv").string());
  if (raw) {
    fs::create_directories(fs::path(out) / "trajectories");
    for (const auto& trajectory : result.trajectories) {
      save_trajectory_csv(trajectory, result.dataset.n,
                          fs::path(out) / "trajectories" /
                              ("traj_" + std::to_string(trajectory.id) + ".csv"));
    }
  }
  json manifest;
  manifest["plant"] = plant;
  manifest["kind"] = model;
  manifest["n"] = result.dataset.n;
  manifest["m_u"] = result.dataset.m_u;
  manifest["trajectories"] = result.trajectories.size();
  manifest["samples"] = result.dataset.samples.size();
  manifest["resample_hz"] = spec.resample_hz;
  manifest["failures"] = json::array();
  for (const auto& [id, why] : result.failures)
    manifest["failures"].push_back({{"combination", id}, {"reason", why}});
  manifest["seed"] = seed;
  manifest["config_hash"] = config_hash(resolved);
  write_json(manifest, fs::path(out) / "manifest.json");
  std::cout << "wrote " << result.dataset.samples.size() << " samples over "
            << result.trajectories.size() << " trajectories to " << out << "\n";
  (void)cfg;
  return 0;
}

int run_train(const ConfigStack& cfg, const std::string& data_path, const std::string& model,
              int epochs, int batch, double lr, double wd, const std::string& hidden,
              std::uint64_t seed, const std::string& out) {
  const TransitionDataset dataset = load_dataset_csv(data_path);
  const json resolved = {{"cmd", "train"}, {"data", data_path}, {"model", model},
                         {"epochs", epochs}, {"batch", batch}, {"lr", lr}, {"wd", wd},
                         {"hidden", hidden}, {"seed", seed}};

  TrainConfig config;
  config.epochs = epochs;
  config.batch_size = batch;
  config.learning_rate = lr;
  config.weight_decay = wd;
  config.seed = seed;

  fs::create_directories(out);
  const auto start = std::chrono::steady_clock::now();
  json summary;
  summary["config_hash"] = config_hash(resolved);
  summary["seed"] = seed;
  summary["model"] = model;

  std::vector<EpochStats> history;
  bool diverged = false;
  if (model == "blackbox") {
    config.loss_kind = dataset.kind;
    const std::vector<int> widths =
        hidden.empty() ? std::vector<int>{128, 128, 128, 128, 128} : parse_widths(hidden);
    const BlackBoxModel init = make_blackbox(dataset.n, dataset.m_u, dataset.kind, widths, seed);
    const BlackBoxTrainResult result = train_blackbox(init, dataset, config);
    history = result.history;
    diverged = result.diverged;
    CheckpointMeta meta;
    if (!result.history.empty()) {
      meta.final_loss_mean = result.history.back().mean;
      meta.final_loss_std = result.history.back().stddev;
    }
    meta.epochs = result.epochs_run;
    meta.seed = seed;
    save_blackbox(result.model, (fs::path(out) / "checkpoint.json").string(), meta);
  } else {
    config.loss_kind = parse_kind(model);
    require(config.loss_kind == dataset.kind, "train: dataset kind does not match --model");
    StructuredModelConfig mc;
    mc.n = dataset.n;
    mc.m_u = dataset.m_u;
    mc.kind = config.loss_kind;
    mc.seed = seed;
    if (!hidden.empty()) mc.mass_hidden = parse_widths(hidden);
    if (cfg.file.contains("mass_hidden")) mc.mass_hidden = cfg.file["mass_hidden"].get<std::vector<int>>();
    if (cfg.file.contains("potential_hidden")) mc.potential_hidden = cfg.file["potential_hidden"].get<std::vector<int>>();
    if (cfg.file.contains("damping_hidden")) mc.damping_hidden = cfg.file["damping_hidden"].get<std::vector<int>>();
    if (cfg.file.contains("input_hidden")) mc.input_hidden = cfg.file["input_hidden"].get<std::vector<int>>();
    if (cfg.file.contains("mass_eps")) mc.mass_eps = cfg.file["mass_eps"].get<double>();
    if (cfg.file.contains("mass_bound_scale")) mc.mass_bound_scale = cfg.file["mass_bound_scale"].get<double>();
    if (cfg.file.contains("input_bound_scale")) mc.input_bound_scale = cfg.file["input_bound_scale"].get<double>();
    if (cfg.file.contains("damping_diagonal")) mc.damping_diagonal = cfg.file["damping_diagonal"].get<bool>();
    const StructuredModel init(mc);
    const TrainResult result = train(init, dataset, config);
    history = result.history;
    diverged = result.diverged;
    CheckpointMeta meta;
    if (!result.history.empty()) {
      meta.final_loss_mean = result.history.back().mean;
      meta.final_loss_std = result.history.back().stddev;
    }
    meta.epochs = result.epochs_run;
    meta.seed = seed;
    save_checkpoint(result.model, (fs::path(out) / "checkpoint.json").string(), meta);
  }

  {
    std::ofstream hist(fs::path(out) / "train_history.csv");
    hist << "epoch,loss_mean,loss_std\n";
    char buf[64];
    for (size_t e = 0; e < history.size(); ++e) {
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", e, history[e].mean,
                    history[e].stddev);
      hist << buf;
    }
  }
  summary["epochs_run"] = history.size();
  summary["diverged"] = diverged;
  if (!history.empty()) {
    summary["final_loss_mean"] = history.back().mean;
    summary["final_loss_std"] = history.back().stddev;
  }
  write_json(summary, fs::path(out) / "train_metrics.json");
  write_json(
      json{{"train_wall_seconds",
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}},
      fs::path(out) / "timings.json");
  std::cout << "checkpoint written to " << (fs::path(out) / "checkpoint.json").string()
            << (diverged ? " (diverged, last good parameters)" : "") << "\n";
  return diverged ? 2 : 0;
}

StatePredictor load_predictor(const std::string& ckpt, ModelKind expected_kind,
                              std::vector<std::shared_ptr<void>>& keep_alive) {
  if (is_blackbox_checkpoint(ckpt)) {
    auto model = std::make_shared<BlackBoxModel>(load_blackbox(ckpt).first);
    require(model->kind == expected_kind, "checkpoint kind does not match the dataset");
    keep_alive.push_back(model);
    return blackbox_predictor(*model);
  }
  auto model = std::make_shared<StructuredModel>(load_checkpoint(ckpt).first);
  require(model->kind() == expected_kind, "checkpoint kind does not match the dataset");
  keep_alive.push_back(model);
  return structured_predictor(*model, model->kind());
}

int run_eval(const ConfigStack& cfg, const std::string& ckpt, const std::string& data_path,
             int horizon, int window, std::uint64_t seed, const std::string& out) {
  const TransitionDataset test = load_dataset_csv(data_path);
  std::vector<std::shared_ptr<void>> keep_alive;
  const StatePredictor predictor = load_predictor(ckpt, test.kind, keep_alive);
  EvalOptions options;
  options.horizon = horizon;
  options.window = window;
  const Metrics metrics = evaluate_model(predictor, test, options);

  const json resolved = {{"cmd", "eval"}, {"ckpt", ckpt}, {"data", data_path},
                         {"horizon", horizon}, {"window", window}, {"seed", seed}};
  json j = metrics_to_json(metrics);
  j["config_hash"] = config_hash(resolved);
  j["seed"] = seed;
  fs::create_directories(out);
  write_json(j, fs::path(out) / "metrics.json");
  write_json(json{{"eval_wall_seconds", metrics.wall_seconds}}, fs::path(out) / "timings.json");
  std::cout << "one-step " << metrics.one_step_mean << " +- " << metrics.one_step_std
            << ", rollout(" << horizon << ") " << metrics.rollout_mean << " +- "
            << metrics.rollout_std << ", windowed(" << window << ") "
            << metrics.windowed_mean << "\n";
  (void)cfg;
  return 0;
}

int run_predict(const ConfigStack& cfg, const std::string& ckpt, const std::string& data_path,
                int horizon, int max_trajectories, std::uint64_t seed,
                const std::string& out) {
  const TransitionDataset test = load_dataset_csv(data_path);
  std::vector<std::shared_ptr<void>> keep_alive;
  const StatePredictor predictor = load_predictor(ckpt, test.kind, keep_alive);
  const auto groups = group_by_trajectory(test);
  require(!groups.empty(), "predict: empty dataset");

  fs::create_directories(out);
  const int n = test.n;
  int written = 0;
  for (const auto& group : groups) {
    if (written >= max_trajectories) break;
    const int usable = test.kind == ModelKind::HNN ? static_cast<int>(group.size())
                                                   : static_cast<int>(group.size()) - 1;
    const int steps = std::min(horizon, usable);
    require(steps >= 1, "predict: trajectory too short");
    std::ofstream outfile(fs::path(out) /
                          ("prediction_" + std::to_string(group[0]->trajectory_id) + ".csv"));
    outfile << "t";
    for (int i = 0; i < n; ++i) outfile << ",q_pred" << i;
    for (int i = 0; i < n; ++i) outfile << ",q_true" << i;
    outfile << "\n";
    Vec state(2 * n);
    state << group[0]->q, group[0]->w;
    double t = 0.0;
    char buf[32];
    for (int k = 0; k < steps; ++k) {
      const TransitionSample* s = group[static_cast<size_t>(k)];
      state = predictor(state.head(n), state.tail(n), s->u, s->dt);
      t += s->dt;
      const Vec truth = test.kind == ModelKind::HNN ? s->label_q
                                                    : group[static_cast<size_t>(k) + 1]->q;
      std::snprintf(buf, sizeof(buf), "%.17g", t);
      outfile << buf;
      for (int i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", state[i]);
        outfile << ',' << buf;
      }
      for (int i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", truth[i]);
        outfile << ',' << buf;
      }
      outfile << "\n";
    }
    ++written;
  }
  std::cout << "wrote " << written << " prediction files to " << out << "\n";
  (void)cfg;
  (void)seed;
  return 0;
}

int run_control(const ConfigStack& cfg, const std::string& plant_id, const std::string& ckpt,
                const std::string& mode, const std::string& gains_text,
                const std::string& qref_text, const std::string& amp_text, double freq,
                double duration, double dt, int rate_divisor, double torque_limit,
                std::uint64_t seed, const std::string& out) {
  const Plant plant = builtin_plant(plant_id);
  std::shared_ptr<DynamicsModel> model;
  if (ckpt.empty() || ckpt == "perfect") {
    model = std::make_shared<PlantModel>(plant);
  } else {
    model = std::make_shared<StructuredModel>(load_checkpoint(ckpt).first);
    require(model->config_dim() == plant.n, "control: checkpoint does not match the plant");
  }

  const Vec gain_pair = parse_vec(gains_text, "--gains");
  require(gain_pair.size() == 2 || gain_pair.size() == 2 * plant.n,
          "--gains: expected \"kp,kd\" or per-joint pairs");
  GainSchedule gains;
  if (gain_pair.size() == 2) {
    gains = GainSchedule::uniform(plant.n, gain_pair[0], gain_pair[1]);
  } else {
    gains.kp = gain_pair.head(plant.n);
    gains.kd = gain_pair.tail(plant.n);
    gains.validate();
  }

  ReferenceSignal ref;
  if (mode == "regulate") {
    ref = ReferenceSignal::constant(parse_vec(qref_text, "--qref"));
  } else if (mode == "track") {
    const Vec center = parse_vec(qref_text, "--qref");
    const Vec amplitude = amp_text.empty() ? Vec(Vec::Constant(plant.n, 0.3))
                                           : parse_vec(amp_text, "--amp");
    ref = ReferenceSignal::sinusoid(center, amplitude, freq);
  } else {
    throw IoError("--mode: expected regulate or track");
  }

  ClosedLoopOptions options;
  options.dt = dt;
  options.duration = duration;
  options.control_decimation = rate_divisor;
  if (torque_limit > 0.0) options.torque_limit = torque_limit;

  const Controller controller = mode == "regulate"
                                    ? regulation_controller(*model, ref.q(0.0), gains)
                                    : tracking_controller(*model, ref, gains);
  Vec x0 = Vec::Zero(2 * plant.n);
  if (cfg.file.contains("x0")) {
    const auto x0_values = cfg.file["x0"].get<std::vector<double>>();
    require(x0_values.size() == static_cast<size_t>(2 * plant.n), "config x0: wrong length");
    for (size_t i = 0; i < x0_values.size(); ++i) x0[static_cast<Eigen::Index>(i)] = x0_values[i];
  }

  const ControlLog log = closed_loop(plant, controller, ref, x0, options);
  const TrackingStats stats = tracking_stats(log);

  fs::create_directories(out);
  save_control_log_csv(log, (fs::path(out) / "control_log.csv").string());
  const json resolved = {{"cmd", "control"}, {"plant", plant_id}, {"ckpt", ckpt},
                         {"mode", mode}, {"gains", gains_text}, {"qref", qref_text},
                         {"amp", amp_text}, {"freq", freq}, {"duration", duration},
                         {"dt", dt}, {"rate_divisor", rate_divisor}, {"seed", seed}};
  json j;
  j["tracking"] = {{"rmse", stats.rmse}, {"rmse_pct", stats.rmse_pct}};
  j["clip_events"] = log.clip_events;
  j["config_hash"] = config_hash(resolved);
  j["seed"] = seed;
  write_json(j, fs::path(out) / "control_metrics.json");
  std::cout << "tracking rmse " << stats.rmse << " (" << stats.rmse_pct << "% of range), log in "
            << out << "\n";
  return 0;
}

int run_inspect(const std::string& ckpt, const std::string& q_text,
                const std::string& plant_id, std::uint64_t seed) {
  if (is_blackbox_checkpoint(ckpt)) {
    const auto [model, meta] = load_blackbox(ckpt);
    std::cout << "blackbox checkpoint: n=" << model.n << " m_u=" << model.m_u << " kind="
              << (model.kind == ModelKind::LNN ? "lnn" : "hnn")
              << " parameters=" << model.mlp.parameter_count()
              << " trained_epochs=" << meta.epochs << " final_loss=" << meta.final_loss_mean
              << "\n";
    return 0;
  }
  const auto [model, meta] = load_checkpoint(ckpt);
  std::cout << "structured checkpoint: n=" << model.config_dim() << " m_u=" << model.input_dim()
            << " kind=" << (model.kind() == ModelKind::LNN ? "lnn" : "hnn")
            << " trained_epochs=" << meta.epochs << " final_loss=" << meta.final_loss_mean
            << " +- " << meta.final_loss_std << "\n";
  Eigen::IOFormat fmt(6, 0, ", ", "\n", "  [", "]");
  if (!q_text.empty()) {
    const Vec q = parse_vec(q_text, "--q");
    std::cout << "M(q) =\n" << model.mass(q).format(fmt) << "\n";
    std::cout << "D(q) =\n" << model.damping(q).format(fmt) << "\n";
    std::cout << "A(q) =\n" << model.input_matrix(q).format(fmt) << "\n";
    std::cout << "G(q) =\n" << Mat(model.potential_grad(q).transpose()).format(fmt) << "\n";
    std::cout << "V(q) = " << model.potential(q) << "\n";
  }
  if (!plant_id.empty()) {
    const Plant plant = builtin_plant(plant_id);
    require(plant.n == model.config_dim(), "inspect: plant dims do not match checkpoint");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    std::vector<Vec> grid;
    for (int i = 0; i < 32; ++i) {
      Vec q(plant.n);
      for (int j = 0; j < plant.n; ++j) q[j] = dist(rng);
      grid.push_back(std::move(q));
    }
    const ConsistencyReport report = estimate_P(model, plant, grid);
    std::cout << "consistency vs " << plant_id << ": median |G_L - P G| = " << report.median_r_g
              << ", |A_L - P A| = " << report.median_r_a << ", |D_L - P D| = "
              << report.median_r_d << "\n"
              << "transpose condition: " << (report.all_cond_transpose ? "pass" : "fail")
              << ", smallness condition: " << (report.all_cond_smallness ? "pass" : "fail")
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structured dynamics learning and control pipeline"};
  app.require_subcommand(1);
  app.fallthrough();  // app-level options may follow the subcommand

  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (lowest precedence)");

  // shared option storage
  std::string plant = "damped_pendulum", model = "lnn", hz = "100", hidden, data, ckpt,
              mode = "regulate", gains = "10,50", qref = "0", amp, out_flag;
  int states = 10, signals = 10, epochs = 200, batch = 128, horizon = 500, window = 5,
      max_traj = 4, rate = 1;
  double dt = 2e-4, duration = 10.0, noise = 0.0, lr = 1e-3, wd = 1e-4, freq = 0.25,
         cdt = 1e-3, torque_limit = 0.0;
  int smooth = 0;
  bool raw = false;
  std::uint64_t seed = 0;
  std::string q_text, inspect_plant;

  auto* gen = app.add_subcommand("gen-data", "simulate a plant and write a transition dataset");
  gen->add_option("--plant", plant, "built-in plant id");
  gen->add_option("--states", states, "number of initial states");
  gen->add_option("--signals", signals, "number of input signals");
  auto* gen_dt = gen->add_option("--dt", dt, "fine integration step [s]");
  gen->add_option("--duration", duration, "trajectory length [s]");
  gen->add_option("--hz", hz, "comma list of resample frequencies");
  gen->add_option("--model", model, "label layout: lnn or hnn");
  gen->add_option("--noise", noise, "measurement noise sigma");
  gen->add_option("--smooth", smooth, "moving-average window (samples)");
  gen->add_flag("--raw", raw, "also write fine-rate trajectory CSVs");
  auto* gen_seed = gen->add_option("--seed", seed, "rng seed");
  auto* gen_out = gen->add_option("--out", out_flag, "output directory");

  auto* tr = app.add_subcommand("train", "train a structured or blackbox model");
  tr->add_option("--data", data, "dataset csv")->required();
  tr->add_option("--model", model, "lnn, hnn or blackbox");
  tr->add_option("--epochs", epochs, "training epochs");
  tr->add_option("--batch", batch, "minibatch size");
  tr->add_option("--lr", lr, "learning rate");
  tr->add_option("--wd", wd, "weight decay");
  tr->add_option("--hidden", hidden, "hidden widths, e.g. \"32,32,32\"");
  auto* tr_seed = tr->add_option("--seed", seed, "rng seed");
  auto* tr_out = tr->add_option("--out", out_flag, "output directory");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a test dataset");
  ev->add_option("--ckpt", ckpt, "checkpoint json")->required();
  ev->add_option("--data", data, "test dataset csv")->required();
  ev->add_option("--horizon", horizon, "rollout horizon in steps");
  ev->add_option("--window", window, "windowed-rollout reset period");
  auto* ev_seed = ev->add_option("--seed", seed, "rng seed");
  auto* ev_out = ev->add_option("--out", out_flag, "output directory");

  auto* pr = app.add_subcommand("predict", "write rollout prediction CSVs");
  pr->add_option("--ckpt", ckpt, "checkpoint json")->required();
  pr->add_option("--data", data, "test dataset csv")->required();
  pr->add_option("--horizon", horizon, "rollout horizon in steps");
  pr->add_option("--trajectories", max_traj, "how many trajectories to export");
  auto* pr_seed = pr->add_option("--seed", seed, "rng seed");
  auto* pr_out = pr->add_option("--out", out_flag, "output directory");

  auto* co = app.add_subcommand("control", "closed-loop regulation or tracking on a plant");
  co->add_option("--plant", plant, "built-in plant id");
  co->add_option("--ckpt", ckpt, "learned checkpoint (omit for the perfect model)");
  co->add_option("--mode", mode, "regulate or track");
  co->add_option("--gains", gains, "\"kp,kd\" or per-joint list");
  co->add_option("--qref", qref, "setpoint / reference center");
  co->add_option("--amp", amp, "tracking amplitude per joint");
  co->add_option("--freq", freq, "tracking frequency [Hz]");
  co->add_option("--duration", duration, "simulation length [s]");
  co->add_option("--dt", cdt, "plant integration step [s]");
  co->add_option("--rate", rate, "controller update period in plant steps");
  co->add_option("--torque-limit", torque_limit, "symmetric saturation (0 = off)");
  auto* co_seed = co->add_option("--seed", seed, "rng seed");
  auto* co_out = co->add_option("--out", out_flag, "output directory");

  auto* in = app.add_subcommand("inspect", "summarize a checkpoint");
  in->add_option("--ckpt", ckpt, "checkpoint json")->required();
  in->add_option("--q", q_text, "configuration to evaluate the heads at");
  in->add_option("--plant", inspect_plant, "compare against a built-in plant");
  auto* in_seed = in->add_option("--seed", seed, "rng seed");

  try {
    app.parse(argc, argv);
    const ConfigStack cfg = load_config(config_path);

    if (gen->parsed()) {
      const std::uint64_t s = cfg.seed(gen_seed->count() > 0, seed);
      const std::string out = cfg.out_dir(gen_out->count() > 0, out_flag);
      const double fine_dt = cfg.value("dt", gen_dt->count() > 0, dt, 2e-4);
      return run_gen_data(cfg, plant, states, signals, fine_dt, duration, hz, model, noise,
                          smooth, raw, s, out);
    }
    if (tr->parsed()) {
      const std::uint64_t s = cfg.seed(tr_seed->count() > 0, seed);
      const std::string out = cfg.out_dir(tr_out->count() > 0, out_flag);
      return run_train(cfg, data, model, epochs, batch, lr, wd, hidden, s, out);
    }
    if (ev->parsed()) {
      const std::uint64_t s = cfg.seed(ev_seed->count() > 0, seed);
      const std::string out = cfg.out_dir(ev_out->count() > 0, out_flag);
      return run_eval(cfg, ckpt, data, horizon, window, s, out);
    }
    if (pr->parsed()) {
      const std::uint64_t s = cfg.seed(pr_seed->count() > 0, seed);
      const std::string out = cfg.out_dir(pr_out->count() > 0, out_flag);
      return run_predict(cfg, ckpt, data, horizon, max_traj, s, out);
    }
    if (co->parsed()) {
      const std::uint64_t s = cfg.seed(co_seed->count() > 0, seed);
      const std::string out = cfg.out_dir(co_out->count() > 0, out_flag);
      return run_control(cfg, plant, ckpt, mode, gains, qref, amp, freq, duration, cdt, rate,
                         torque_limit, s, out);
    }
    if (in->parsed()) {
      const std::uint64_t s = cfg.seed(in_seed->count() > 0, seed);
      return run_inspect(ckpt, q_text, inspect_plant, s);
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
