#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ponbranch/dataset.hpp"
#include "ponbranch/nn/layers.hpp"

namespace ponbranch::models {

using data::EventClass;
using data::kWindowLength;
using data::Window;

enum class ModelKind { AttnGru, Mlp, Cnn, Lstm, Gru };

inline constexpr std::array kAllKinds{ModelKind::AttnGru, ModelKind::Gru, ModelKind::Lstm, ModelKind::Cnn,
                                      ModelKind::Mlp};

inline std::string kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::AttnGru: return "attn-gru";
    case ModelKind::Mlp: return "mlp";
    case ModelKind::Cnn: return "cnn";
    case ModelKind::Lstm: return "lstm";
    case ModelKind::Gru: return "gru";
  }
  return "?";
}

inline ModelKind parse_kind(const std::string& s) {
  for (auto k : kAllKinds)
    if (kind_name(k) == s) return k;
  throw ValidationError("unknown model kind: " + s + " (expected attn-gru, gru, lstm, cnn or mlp)");
}

struct ModelDims {
  std::size_t window = kWindowLength;
  std::size_t hidden = 64;      // GRU/LSTM cells, attention width
  std::size_t head = 16;        // neurons per task-specific layer
  std::size_t mlp_hidden = 64;
  std::size_t conv1 = 16;
  std::size_t conv2 = 32;
  std::size_t kernel = 5;

  bool operator==(const ModelDims&) const = default;
};

inline nlohmann::json dims_json(const ModelDims& d) {
  return {{"window", d.window}, {"hidden", d.hidden}, {"head", d.head}, {"mlp_hidden", d.mlp_hidden},
          {"conv1", d.conv1},   {"conv2", d.conv2},   {"kernel", d.kernel}};
}

inline ModelDims dims_from_json(const nlohmann::json& j) {
  ModelDims d;
  d.window = j.at("window").get<std::size_t>();
  d.hidden = j.at("hidden").get<std::size_t>();
  d.head = j.at("head").get<std::size_t>();
  d.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
  d.conv1 = j.at("conv1").get<std::size_t>();
  d.conv2 = j.at("conv2").get<std::size_t>();
  d.kernel = j.at("kernel").get<std::size_t>();
  return d;
}

struct LossWeights {
  double w_cls = 1.0;
  double w_loc = 1.0;

  void validate() const {
    if (!(w_cls >= 0 && w_loc >= 0)) throw ValidationError("loss weights must be >= 0");
    if (w_cls == 0 && w_loc == 0) throw ValidationError("loss weights must not both be zero");
  }
};

struct MultiTaskOutput {
  std::array<double, 3> class_logits{};
  std::array<double, 2> positions{};  // normalized in-window indices
  std::vector<double> alphas;         // attention weights; empty for baselines

  EventClass predicted_class() const {
    const auto it = std::max_element(class_logits.begin(), class_logits.end());
    return data::class_from_index(static_cast<int>(it - class_logits.begin()));
  }
};

/// A class decision with its positions (normalized to [0,1], ascending,
/// only the first `count(label)` slots meaningful).
struct Detection {
  EventClass label = EventClass::C0;
  std::array<double, 2> positions{};
};

inline Detection to_detection(const MultiTaskOutput& out) {
  Detection d;
  d.label = out.predicted_class();
  d.positions = out.positions;
  if (d.label == EventClass::C2 && d.positions[0] > d.positions[1]) std::swap(d.positions[0], d.positions[1]);
  return d;
}

// ---------------------------------------------------------------------------
// batch targets

struct BatchTargets {
  std::vector<int> classes;
  nn::Tensor positions;  // [batch, 2], normalized
  nn::Tensor mask;       // [batch, 2]
};

inline BatchTargets make_targets(std::span<const Window* const> batch) {
  BatchTargets t;
  t.positions = nn::Tensor::matrix(batch.size(), 2);
  t.mask = nn::Tensor::matrix(batch.size(), 2);
  const double scale = static_cast<double>(kWindowLength - 1);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Window& w = *batch[b];
    w.validate();
    t.classes.push_back(data::class_index(w.label));
    std::array<double, 2> slots{};
    int n = 0;
    for (const auto& p : w.positions)
      if (p) slots[static_cast<std::size_t>(n++)] = *p / scale;
    if (n == 2 && slots[0] > slots[1]) std::swap(slots[0], slots[1]);
    for (int s = 0; s < n; ++s) {
      t.positions.at(b, static_cast<std::size_t>(s)) = slots[static_cast<std::size_t>(s)];
      t.mask.at(b, static_cast<std::size_t>(s)) = 1.0;
    }
  }
  return t;
}

inline nn::Tensor batch_inputs(std::span<const Window* const> batch) {
  nn::Tensor x = nn::Tensor::matrix(batch.size(), kWindowLength);
  for (std::size_t b = 0; b < batch.size(); ++b)
    std::copy(batch[b]->values.begin(), batch[b]->values.end(), x.values.begin() + static_cast<std::ptrdiff_t>(b * kWindowLength));
  return x;
}

/// Weighted sum of summed cross-entropy and summed masked MSE.
inline nn::Var multitask_loss(nn::Var logits, nn::Var positions, const BatchTargets& targets,
                              const LossWeights& weights) {
  weights.validate();
  const nn::Var ce = nn::softmax_cross_entropy(logits, targets.classes);
  const nn::Var mse = nn::masked_mse(positions, targets.positions, targets.mask);
  return nn::add(nn::scale(ce, weights.w_cls), nn::scale(mse, weights.w_loc));
}

// ---------------------------------------------------------------------------
// networks

/**
 * A trunk (attention-GRU or one of the baselines) feeding two task heads:
 * classification (dense `head` tanh -> 3 logits) and localization
 * (dense `head` tanh -> 2 sigmoid positions). Heads are identical across
 * kinds so only the trunk differs.
 */
class Model {
 public:
  struct Graph {
    nn::Var logits;
    nn::Var positions;
    std::optional<nn::Var> alphas;
  };

  explicit Model(ModelKind kind, ModelDims dims = {}) : kind_(kind), dims_(dims) {
    std::size_t features = 0;
    switch (kind) {
      case ModelKind::AttnGru:
        nn::register_gru(params_, "gru", 1, dims.hidden);
        nn::register_attention(params_, "attention", dims.hidden, dims.hidden);
        features = dims.hidden;
        break;
      case ModelKind::Gru:
        nn::register_gru(params_, "gru", 1, dims.hidden);
        features = dims.hidden;
        break;
      case ModelKind::Lstm:
        nn::register_lstm(params_, "lstm", 1, dims.hidden);
        features = dims.hidden;
        break;
      case ModelKind::Mlp:
        nn::register_dense(params_, "mlp.0", dims.window, dims.mlp_hidden);
        nn::register_dense(params_, "mlp.1", dims.mlp_hidden, dims.mlp_hidden);
        features = dims.mlp_hidden;
        break;
      case ModelKind::Cnn:
        nn::register_conv1d(params_, "conv.0", 1, dims.conv1, dims.kernel);
        nn::register_conv1d(params_, "conv.1", dims.conv1, dims.conv2, dims.kernel);
        features = dims.conv2;
        break;
    }
    nn::register_dense(params_, "cls.hidden", features, dims.head);
    nn::register_dense(params_, "cls.out", dims.head, 3);
    nn::register_dense(params_, "loc.hidden", features, dims.head);
    nn::register_dense(params_, "loc.out", dims.head, 2);
  }

  ModelKind kind() const { return kind_; }
  const ModelDims& dims() const { return dims_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  void initialize(std::uint64_t seed) { params_.initialize(seed); }

  /// Records the forward pass on `tape`. x: [batch, window].
  Graph forward(nn::Tape& tape, const nn::Tensor& x, bool trainable) {
    if (trainable) return build(nn::Binder(tape, params_), tape, x);
    return build(nn::Binder(tape, static_cast<const nn::ParamStore&>(params_)), tape, x);
  }
  Graph forward(nn::Tape& tape, const nn::Tensor& x) const {
    return build(nn::Binder(tape, params_), tape, x);
  }

  /// Frozen-parameter inference; safe to call concurrently.
  std::vector<MultiTaskOutput> infer(std::span<const Window* const> batch) const {
    nn::Tape tape;
    const auto g = forward(tape, batch_inputs(batch));
    return collect(g, batch.size());
  }

  MultiTaskOutput infer(std::span<const double> window) const {
    if (window.size() != dims_.window)
      throw ValidationError("window length " + std::to_string(window.size()) + " != configured " +
                            std::to_string(dims_.window));
    nn::Tape tape;
    nn::Tensor x({1, dims_.window}, std::vector<double>(window.begin(), window.end()));
    return collect(forward(tape, x), 1).front();
  }

  nlohmann::json header() const {
    return {{"kind", kind_name(kind_)},
            {"dims", dims_json(dims_)},
            {"arch_hash", Hasher::to_hex(params_.architecture_hash())},
            {"parameter_count", params_.parameter_count()}};
  }

 private:
  Graph build(const nn::Binder& bind, nn::Tape& tape, const nn::Tensor& x) const {
    if (x.cols() != dims_.window)
      throw ValidationError("window length " + std::to_string(x.cols()) + " != configured " +
                            std::to_string(dims_.window));
    const std::size_t batch = x.rows(), steps = x.cols();
    const nn::Var X = tape.constant(x);
    auto sequence = [&] {
      std::vector<nn::Var> xs;
      xs.reserve(steps);
      for (std::size_t t = 0; t < steps; ++t) xs.push_back(nn::slice_cols(X, t, 1));
      return xs;
    };
    Graph g;
    nn::Var features;
    switch (kind_) {
      case ModelKind::AttnGru: {
        const auto gru = nn::bind_gru(bind, "gru");
        const auto att = nn::bind_attention(bind, "attention");
        const auto hs = nn::gru_sequence(sequence(), gru);
        const auto a = nn::additive_attention(hs, att);
        features = a.context;
        g.alphas = a.alphas;
        break;
      }
      case ModelKind::Gru: {
        const auto gru = nn::bind_gru(bind, "gru");
        features = nn::gru_sequence(sequence(), gru).back();
        break;
      }
      case ModelKind::Lstm: {
        const auto lstm = nn::bind_lstm(bind, "lstm");
        features = nn::lstm_sequence(sequence(), lstm).back();
        break;
      }
      case ModelKind::Mlp: {
        const auto l0 = nn::bind_dense(bind, "mlp.0");
        const auto l1 = nn::bind_dense(bind, "mlp.1");
        features = nn::dense(nn::dense(X, l0, nn::Activation::Tanh), l1, nn::Activation::Tanh);
        break;
      }
      case ModelKind::Cnn: {
        const auto c0 = nn::bind_dense(bind, "conv.0");
        const auto c1 = nn::bind_dense(bind, "conv.1");
        const nn::Var cols = nn::reshape(X, {batch * steps, 1});
        const nn::Var h0 = nn::conv1d(cols, c0, batch, steps, dims_.kernel, nn::Activation::Relu);
        const nn::Var h1 = nn::conv1d(h0, c1, batch, steps, dims_.kernel, nn::Activation::Relu);
        features = nn::segment_mean(h1, batch, steps);
        break;
      }
    }
    const auto cls_h = nn::bind_dense(bind, "cls.hidden");
    const auto cls_o = nn::bind_dense(bind, "cls.out");
    const auto loc_h = nn::bind_dense(bind, "loc.hidden");
    const auto loc_o = nn::bind_dense(bind, "loc.out");
    g.logits = nn::dense(nn::dense(features, cls_h, nn::Activation::Tanh), cls_o, nn::Activation::None);
    g.positions = nn::dense(nn::dense(features, loc_h, nn::Activation::Tanh), loc_o, nn::Activation::Sigmoid);
    return g;
  }

  static std::vector<MultiTaskOutput> collect(const Graph& g, std::size_t batch) {
    std::vector<MultiTaskOutput> out(batch);
    const auto& L = g.logits.value();
    const auto& P = g.positions.value();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < 3; ++c) out[b].class_logits[c] = L.at(b, c);
      for (std::size_t s = 0; s < 2; ++s) out[b].positions[s] = std::clamp(P.at(b, s), 0.0, 1.0);
      if (g.alphas) {
        const auto& A = g.alphas->value();
        out[b].alphas.assign(A.values.begin() + static_cast<std::ptrdiff_t>(b * A.cols()),
                             A.values.begin() + static_cast<std::ptrdiff_t>((b + 1) * A.cols()));
      }
    }
    return out;
  }

  ModelKind kind_;
  ModelDims dims_;
  nn::ParamStore params_;
};

/// Convenience for a single example, evaluated on its own tape.
inline double multitask_loss(const MultiTaskOutput& out, const Window& label, const LossWeights& weights) {
  nn::Tape tape;
  const nn::Var logits = tape.constant(nn::Tensor({1, 3}, std::vector<double>(out.class_logits.begin(), out.class_logits.end())));
  const nn::Var pos = tape.constant(nn::Tensor({1, 2}, std::vector<double>(out.positions.begin(), out.positions.end())));
  const Window* ptr = &label;
  const auto targets = make_targets(std::span<const Window* const>(&ptr, 1));
  return multitask_loss(logits, pos, targets, weights).value().values[0];
}

// ---------------------------------------------------------------------------
// conventional threshold detector

struct ThresholdConfig {
  double theta = 0.5;
  int min_separation = 2;

  void validate() const {
    if (!(theta > 0 && theta < 1)) throw ValidationError("threshold must lie in (0, 1)");
    if (min_separation < 1) throw ValidationError("min_separation must be >= 1");
  }
};

/**
 * Interior local maxima strictly above theta (leftmost sample of a plateau);
 * maxima closer than min_separation keep the higher one. Up to two maxima
 * give the class; with more, the two highest are reported as C2.
 */
inline Detection threshold_detect(std::span<const double> w, const ThresholdConfig& cfg) {
  cfg.validate();
  const std::size_t n = w.size();
  std::vector<std::size_t> peaks;
  for (std::size_t i = 1; i + 1 < n;) {
    if (!(w[i] > w[i - 1])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && w[j + 1] == w[i]) ++j;
    if (j + 1 < n && w[j + 1] < w[i] && w[i] > cfg.theta) peaks.push_back(i);
    i = j + 1;
  }
  std::vector<std::size_t> kept;
  for (auto p : peaks) {
    if (!kept.empty() && static_cast<int>(p - kept.back()) < cfg.min_separation) {
      if (w[p] > w[kept.back()]) kept.back() = p;
      continue;
    }
    kept.push_back(p);
  }
  if (kept.size() > 2) {
    std::stable_sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
    kept.resize(2);
    std::sort(kept.begin(), kept.end());
  }
  Detection d;
  d.label = data::class_from_index(static_cast<int>(kept.size()));
  const double scale = static_cast<double>(n - 1);
  for (std::size_t k = 0; k < kept.size(); ++k) d.positions[k] = static_cast<double>(kept[k]) / scale;
  return d;
}

inline double threshold_accuracy(std::span<const Window> ws, const ThresholdConfig& cfg) {
  if (ws.empty()) throw ValidationError("threshold accuracy of an empty dataset");
  std::size_t hits = 0;
  for (const auto& w : ws) hits += threshold_detect(w.values, cfg).label == w.label;
  return static_cast<double>(hits) / static_cast<double>(ws.size());
}

inline constexpr std::array<double, 19> threshold_grid() {
  std::array<double, 19> g{};
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(i + 1) / 20.0;
  return g;
}

/// Exhaustive search over theta = 0.05, 0.10, ..., 0.95 for classification
/// accuracy; ties go to the lower theta.
inline ThresholdConfig tune_threshold(std::span<const Window> ws, int min_separation = 2) {
  if (ws.empty()) throw ValidationError("cannot tune threshold on an empty dataset");
  ThresholdConfig best{0.05, min_separation};
  double best_acc = -1;
  for (double theta : threshold_grid()) {
    const ThresholdConfig cfg{theta, min_separation};
    const double acc = threshold_accuracy(ws, cfg);
    if (acc > best_acc) {
      best_acc = acc;
      best = cfg;
    }
  }
  return best;
}

}  // namespace ponbranch::models
