#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ponbranch/metrics.hpp"
#include "ponbranch/models.hpp"
#include "ponbranch/nn/params.hpp"

namespace ponbranch::train {

using models::LossWeights;
using models::Model;
using models::ModelKind;

enum class Optimizer { AdaptiveMoments, SgdMomentum };

inline std::string optimizer_name(Optimizer o) { return o == Optimizer::AdaptiveMoments ? "adam" : "sgd-momentum"; }

inline Optimizer parse_optimizer(const std::string& s) {
  if (s == "adam" || s == "adaptive-moments") return Optimizer::AdaptiveMoments;
  if (s == "sgd" || s == "sgd-momentum") return Optimizer::SgdMomentum;
  throw ValidationError("unknown optimizer: " + s);
}

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  int max_epochs = 100;
  int patience = 10;
  LossWeights loss_weights{};
  std::uint64_t rng_seed = 7;
  Optimizer optimizer = Optimizer::AdaptiveMoments;
  double momentum = 0.9;   // SGD only
  double clip_norm = 5.0;  // global gradient norm; <= 0 disables
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate > 0)) throw ValidationError("learning_rate must be > 0");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (patience < 1) throw ValidationError("patience must be >= 1");
    if (max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
    loss_weights.validate();
  }
};

inline void write_config(KeyValueConfig& kv, const TrainConfig& c) {
  kv.set("learning_rate", c.learning_rate);
  kv.set("batch_size", static_cast<std::uint64_t>(c.batch_size));
  kv.set("max_epochs", c.max_epochs);
  kv.set("patience", c.patience);
  kv.set("w_cls", c.loss_weights.w_cls);
  kv.set("w_loc", c.loss_weights.w_loc);
  kv.set("rng_seed", c.rng_seed);
  kv.set("optimizer", optimizer_name(c.optimizer));
  kv.set("momentum", c.momentum);
  kv.set("clip_norm", c.clip_norm);
}

inline TrainConfig read_train_config(const KeyValueConfig& kv, TrainConfig c = {}) {
  c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
  c.batch_size = static_cast<std::size_t>(kv.get_uint("batch_size", c.batch_size));
  c.max_epochs = static_cast<int>(kv.get_int("max_epochs", c.max_epochs));
  c.patience = static_cast<int>(kv.get_int("patience", c.patience));
  c.loss_weights.w_cls = kv.get_double("w_cls", c.loss_weights.w_cls);
  c.loss_weights.w_loc = kv.get_double("w_loc", c.loss_weights.w_loc);
  c.rng_seed = kv.get_uint("rng_seed", c.rng_seed);
  c.optimizer = parse_optimizer(kv.get_string("optimizer", optimizer_name(c.optimizer)));
  c.momentum = kv.get_double("momentum", c.momentum);
  c.clip_norm = kv.get_double("clip_norm", c.clip_norm);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// optimizer

struct OptimizerState {
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
  std::uint64_t steps = 0;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& name) : std::runtime_error("non-finite gradient in " + name), parameter(name) {}
  std::string parameter;
};

inline double global_grad_norm(const nn::ParamStore& params) {
  double sq = 0;
  for (const auto& e : params.entries())
    for (double g : e.tensor.grad) sq += g * g;
  return std::sqrt(sq);
}

/// Clips the global gradient norm, then applies one update. Gradients are
/// read from each Tensor::grad (missing grads count as zero).
inline void optimizer_step(nn::ParamStore& params, OptimizerState& state, const TrainConfig& cfg) {
  auto& entries = params.entries();
  for (const auto& e : entries)
    for (double g : e.tensor.grad)
      if (!std::isfinite(g)) throw NonFiniteGradient(e.name);
  double factor = 1.0;
  if (cfg.clip_norm > 0) {
    const double norm = global_grad_norm(params);
    if (norm > cfg.clip_norm) factor = cfg.clip_norm / norm;
  }
  if (state.first.size() != entries.size()) {
    state.first.assign(entries.size(), {});
    state.second.assign(entries.size(), {});
    for (std::size_t i = 0; i < entries.size(); ++i) {
      state.first[i].assign(entries[i].tensor.size(), 0.0);
      state.second[i].assign(entries[i].tensor.size(), 0.0);
    }
  }
  ++state.steps;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.steps));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.steps));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& t = entries[i].tensor;
    if (t.grad.empty()) continue;
    auto& m = state.first[i];
    auto& v = state.second[i];
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double g = t.grad[k] * factor;
      if (cfg.optimizer == Optimizer::AdaptiveMoments) {
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
        t.values[k] -= cfg.learning_rate * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg.epsilon);
      } else {
        m[k] = cfg.momentum * m[k] + g;
        t.values[k] -= cfg.learning_rate * m[k];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// early stopping

/// Tracks the best validation loss. Training stops once more than
/// `patience` consecutive epochs fail to improve on it.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Returns true when training should stop after this epoch.
  bool update(int epoch, double val_loss) {
    if (val_loss < best_) {
      best_ = val_loss;
      best_epoch_ = epoch;
      stale_ = 0;
      return false;
    }
    return ++stale_ > patience_;
  }

  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }
  bool improved_at(int epoch) const { return best_epoch_ == epoch; }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = 0;
  int stale_ = 0;
};

// ---------------------------------------------------------------------------
// training loop

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_acc = 0;
  double val_rmse_m = 0;
  bool operator==(const EpochRecord&) const = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;

  std::string csv() const {
    std::string out = "epoch,train_loss,val_loss,val_acc,val_rmse_m\n";
    for (const auto& e : epochs)
      out += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," + format_double(e.val_loss) + "," +
             format_double(e.val_acc) + "," + format_double(e.val_rmse_m) + "\n";
    return out;
  }
  bool operator==(const TrainHistory&) const = default;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, std::size_t batch, const std::string& what = "loss NaN")
      : std::runtime_error("training diverged (" + what + ") at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch)) {}
};

struct Evaluation {
  double loss = 0;  // mean per window
  double accuracy = 0;
  double rmse_m = 0;
  std::vector<models::Detection> detections;
};

/// Frozen-parameter pass over a window set.
inline Evaluation evaluate(const Model& model, std::span<const data::Window> ws, const LossWeights& weights,
                           double sample_spacing, std::size_t batch_size = 256) {
  if (ws.empty()) throw ValidationError("evaluate: empty window set");
  Evaluation ev;
  double total = 0;
  std::vector<const data::Window*> batch;
  for (std::size_t start = 0; start < ws.size(); start += batch_size) {
    batch.clear();
    for (std::size_t i = start; i < std::min(ws.size(), start + batch_size); ++i) batch.push_back(&ws[i]);
    nn::Tape tape;
    const auto g = model.forward(tape, models::batch_inputs(batch));
    const auto targets = models::make_targets(batch);
    total += models::multitask_loss(g.logits, g.positions, targets, weights).value().values[0];
    const auto& L = g.logits.value();
    const auto& P = g.positions.value();
    for (std::size_t b = 0; b < batch.size(); ++b) {
      models::MultiTaskOutput out;
      for (std::size_t c = 0; c < 3; ++c) out.class_logits[c] = L.at(b, c);
      for (std::size_t s = 0; s < 2; ++s) out.positions[s] = std::clamp(P.at(b, s), 0.0, 1.0);
      ev.detections.push_back(models::to_detection(out));
    }
  }
  ev.loss = total / static_cast<double>(ws.size());
  std::vector<data::EventClass> preds, labels;
  for (std::size_t i = 0; i < ws.size(); ++i) {
    preds.push_back(ev.detections[i].label);
    labels.push_back(ws[i].label);
  }
  ev.accuracy = eval::classification_metrics(preds, labels).accuracy;
  try {
    ev.rmse_m = eval::localization_metrics(ev.detections, ws, sample_spacing).rmse_m;
  } catch (const eval::NothingToLocalize&) {
    ev.rmse_m = std::numeric_limits<double>::quiet_NaN();
  }
  return ev;
}

using ProgressFn = std::function<void(const EpochRecord&)>;

/**
 * Mini-batch training with validation-loss early stopping. The model's
 * parameters are initialized from the config seed and, on return, hold the
 * best epoch's values. Only the training and validation windows are visible
 * here, so the test split cannot influence training.
 */
inline TrainHistory train(Model& model, std::span<const data::Window> train_set,
                          std::span<const data::Window> validation_set, const TrainConfig& cfg,
                          double sample_spacing, const ProgressFn& progress = {}) {
  cfg.validate();
  if (train_set.empty() || validation_set.empty()) throw ValidationError("train: empty train or validation split");
  model.initialize(sub_seed(cfg.rng_seed, "init"));
  auto& params = model.params();
  OptimizerState state;
  EarlyStopping stopper(cfg.patience);
  TrainHistory history;
  std::vector<std::vector<double>> best_values;
  auto snapshot = [&] {
    best_values.clear();
    for (const auto& e : params.entries()) best_values.push_back(e.tensor.values);
  };
  snapshot();

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<const data::Window*> batch;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::mt19937_64 rng(sub_seed(cfg.rng_seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
    double epoch_loss = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
        batch.push_back(&train_set[order[i]]);
      nn::Tape tape;
      params.zero_grad();
      const auto g = model.forward(tape, models::batch_inputs(batch), true);
      const auto targets = models::make_targets(batch);
      const auto summed = models::multitask_loss(g.logits, g.positions, targets, cfg.loss_weights);
      const auto loss = nn::scale(summed, 1.0 / static_cast<double>(batch.size()));
      const double value = loss.value().values[0];
      if (!std::isfinite(value)) throw TrainingDiverged(epoch, batch_index);
      tape.backward(loss);
      try {
        optimizer_step(params, state, cfg);
      } catch (const NonFiniteGradient& e) {
        throw TrainingDiverged(epoch, batch_index, e.what());
      }
      epoch_loss += summed.value().values[0];
    }
    const auto val = evaluate(model, validation_set, cfg.loss_weights, sample_spacing);
    EpochRecord rec{epoch, epoch_loss / static_cast<double>(train_set.size()), val.loss, val.accuracy, val.rmse_m};
    history.epochs.push_back(rec);
    const bool stop = stopper.update(epoch, val.loss);
    if (stopper.improved_at(epoch)) snapshot();
    if (progress) progress(rec);
    if (stop) break;
  }
  history.best_epoch = stopper.best_epoch();
  for (std::size_t i = 0; i < best_values.size(); ++i) params.entries()[i].tensor.values = best_values[i];
  return history;
}

// ---------------------------------------------------------------------------
// checkpoints

struct Checkpoint {
  Model model;
  nlohmann::json header;
};

inline std::string checkpoint_bytes(const Model& model, const nlohmann::json& extra = {}) {
  nlohmann::json header = model.header();
  if (extra.is_object())
    for (const auto& [k, v] : extra.items()) header[k] = v;
  return nn::serialize_params(model.params(), header.dump());
}

inline void save_checkpoint(const std::filesystem::path& path, const Model& model, const nlohmann::json& extra = {}) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  const auto bytes = checkpoint_bytes(model, extra);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

class ArchitectureMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

inline Checkpoint parse_checkpoint(std::string_view bytes, std::optional<ModelKind> expected = std::nullopt) {
  const auto blob = nn::parse_params(bytes);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.header);
  } catch (const std::exception& e) {
    throw nn::CheckpointFormatError(std::string("checkpoint header is not JSON: ") + e.what());
  }
  const auto kind = models::parse_kind(header.at("kind").get<std::string>());
  if (expected && *expected != kind)
    throw ArchitectureMismatch("architecture mismatch: checkpoint holds " + models::kind_name(kind) + ", expected " +
                               models::kind_name(*expected));
  Model model(kind, models::dims_from_json(header.at("dims")));
  if (header.at("arch_hash").get<std::string>() != Hasher::to_hex(model.params().architecture_hash()))
    throw ArchitectureMismatch("architecture mismatch: parameter layout hash differs");
  nn::assign_params(model.params(), blob);
  return {std::move(model), std::move(header)};
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<ModelKind> expected = std::nullopt) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes, expected);
}

}  // namespace ponbranch::train
