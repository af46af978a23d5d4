#pragma once

#include <string>
#include <vector>

#include "ponbranch/nn/params.hpp"
#include "ponbranch/nn/tape.hpp"

// Layers in batch-row layout: every activation is [batch, features].

namespace ponbranch::nn {

/// Materializes parameters on a tape: trainable leaves when bound to a
/// mutable store, constants for frozen inference.
class Binder {
 public:
  Binder(Tape& tape, ParamStore& store) : tape_(tape), mutable_(&store), store_(store) {}
  Binder(Tape& tape, const ParamStore& store) : tape_(tape), store_(store) {}

  Var operator()(const std::string& name) const {
    if (mutable_) return tape_.parameter(mutable_->get(name));
    const Tensor& t = store_.get(name);
    return tape_.constant(Tensor(t.shape, t.values));
  }

  Tape& tape() const { return tape_; }

 private:
  Tape& tape_;
  ParamStore* mutable_ = nullptr;
  const ParamStore& store_;
};

enum class Activation { None, Tanh, Relu, Sigmoid };

inline Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::Tanh: return tanh(x);
    case Activation::Relu: return relu(x);
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::None: break;
  }
  return x;
}

struct DenseParams {
  Var W, b;
};

inline void register_dense(ParamStore& s, const std::string& name, std::size_t in, std::size_t out) {
  s.add(name + ".W", {in, out}, Init::Glorot);
  s.add(name + ".b", {out}, Init::Zeros);
}

inline DenseParams bind_dense(const Binder& bind, const std::string& name) {
  return {bind(name + ".W"), bind(name + ".b")};
}

inline Var dense(Var x, const DenseParams& p, Activation act) {
  return activate(add_bias(matmul(x, p.W), p.b), act);
}

// ---------------------------------------------------------------------------
// GRU
//   z = s(x Wz + h Uz + bz)      r = s(x Wr + h Ur + br)
//   c = tanh(x Wh + (r . h) Uh + bh)
//   h' = (1 - z) . h + z . c

struct GruParams {
  Var W_z, U_z, b_z, W_r, U_r, b_r, W_h, U_h, b_h;
  std::size_t hidden = 0;
};

inline void register_gru(ParamStore& s, const std::string& name, std::size_t in, std::size_t hidden) {
  for (const char* g : {"z", "r", "h"}) {
    s.add(name + ".W_" + g, {in, hidden}, Init::Glorot);
    s.add(name + ".U_" + g, {hidden, hidden}, Init::Recurrent);
    s.add(name + ".b_" + g, {hidden}, Init::Zeros);
  }
}

inline GruParams bind_gru(const Binder& bind, const std::string& name) {
  GruParams p{bind(name + ".W_z"), bind(name + ".U_z"), bind(name + ".b_z"),
              bind(name + ".W_r"), bind(name + ".U_r"), bind(name + ".b_r"),
              bind(name + ".W_h"), bind(name + ".U_h"), bind(name + ".b_h"), 0};
  p.hidden = p.U_z.rows();
  return p;
}

inline Var gru_cell(Var x, Var h_prev, const GruParams& p) {
  if (x.cols() != p.W_z.rows() || h_prev.cols() != p.hidden || x.rows() != h_prev.rows())
    throw ShapeError("gru_cell: input " + shape_string(x.shape()) + " / state " + shape_string(h_prev.shape()) +
                     " do not fit W " + shape_string(p.W_z.shape()));
  const Var z = sigmoid(add_bias(add(matmul(x, p.W_z), matmul(h_prev, p.U_z)), p.b_z));
  const Var r = sigmoid(add_bias(add(matmul(x, p.W_r), matmul(h_prev, p.U_r)), p.b_r));
  const Var c = tanh(add_bias(add(matmul(x, p.W_h), matmul(mul(r, h_prev), p.U_h)), p.b_h));
  return add(h_prev, mul(z, sub(c, h_prev)));
}

/// Runs the cell left to right from h0 = 0 and returns every hidden state.
inline std::vector<Var> gru_sequence(const std::vector<Var>& xs, const GruParams& p) {
  if (xs.empty()) throw ValidationError("gru_sequence: empty sequence");
  Tape& tape = *xs.front().tape;
  Var h = tape.constant(Tensor::matrix(xs.front().rows(), p.hidden));
  std::vector<Var> out;
  out.reserve(xs.size());
  for (const auto& x : xs) {
    h = gru_cell(x, h, p);
    out.push_back(h);
  }
  return out;
}

// ---------------------------------------------------------------------------
// LSTM

struct LstmParams {
  Var W_i, U_i, b_i, W_f, U_f, b_f, W_o, U_o, b_o, W_g, U_g, b_g;
  std::size_t hidden = 0;
};

inline void register_lstm(ParamStore& s, const std::string& name, std::size_t in, std::size_t hidden) {
  for (const char* g : {"i", "f", "o", "g"}) {
    s.add(name + ".W_" + g, {in, hidden}, Init::Glorot);
    s.add(name + ".U_" + g, {hidden, hidden}, Init::Recurrent);
    s.add(name + ".b_" + g, {hidden}, Init::Zeros);
  }
}

inline LstmParams bind_lstm(const Binder& bind, const std::string& name) {
  LstmParams p{bind(name + ".W_i"), bind(name + ".U_i"), bind(name + ".b_i"), bind(name + ".W_f"),
               bind(name + ".U_f"), bind(name + ".b_f"), bind(name + ".W_o"), bind(name + ".U_o"),
               bind(name + ".b_o"), bind(name + ".W_g"), bind(name + ".U_g"), bind(name + ".b_g"), 0};
  p.hidden = p.U_i.rows();
  return p;
}

struct LstmState {
  Var h, c;
};

inline LstmState lstm_cell(Var x, const LstmState& s, const LstmParams& p) {
  auto gate = [&](Var W, Var U, Var b) { return add_bias(add(matmul(x, W), matmul(s.h, U)), b); };
  const Var i = sigmoid(gate(p.W_i, p.U_i, p.b_i));
  const Var f = sigmoid(gate(p.W_f, p.U_f, p.b_f));
  const Var o = sigmoid(gate(p.W_o, p.U_o, p.b_o));
  const Var g = tanh(gate(p.W_g, p.U_g, p.b_g));
  const Var c = add(mul(f, s.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

inline std::vector<Var> lstm_sequence(const std::vector<Var>& xs, const LstmParams& p) {
  if (xs.empty()) throw ValidationError("lstm_sequence: empty sequence");
  Tape& tape = *xs.front().tape;
  const auto zero = Tensor::matrix(xs.front().rows(), p.hidden);
  LstmState s{tape.constant(zero), tape.constant(zero)};
  std::vector<Var> out;
  for (const auto& x : xs) {
    s = lstm_cell(x, s, p);
    out.push_back(s.h);
  }
  return out;
}

// ---------------------------------------------------------------------------
// additive attention
//   e_i = v . tanh(W_a h_i + b_a),  alpha = softmax(e),  c = sum_i alpha_i h_i

struct AttentionParams {
  Var W_a, b_a, v;
};

inline void register_attention(ParamStore& s, const std::string& name, std::size_t hidden, std::size_t attn) {
  s.add(name + ".W_a", {hidden, attn}, Init::Glorot);
  s.add(name + ".b_a", {attn}, Init::Zeros);
  s.add(name + ".v", {attn, 1}, Init::Glorot);
}

inline AttentionParams bind_attention(const Binder& bind, const std::string& name) {
  return {bind(name + ".W_a"), bind(name + ".b_a"), bind(name + ".v")};
}

struct AttentionResult {
  Var alphas;   // [batch, steps]
  Var context;  // [batch, hidden]
};

inline AttentionResult additive_attention(const std::vector<Var>& hs, const AttentionParams& p) {
  if (hs.empty()) throw ValidationError("additive_attention: no hidden states");
  const std::size_t steps = hs.size(), batch = hs.front().rows(), hidden = hs.front().cols();
  const Var H = concat_rows(hs);  // [steps*batch, hidden], step-major
  const Var e = matmul(tanh(add_bias(matmul(H, p.W_a), p.b_a)), p.v);
  const Var alphas = softmax_rows(transpose(reshape(e, {steps, batch})));
  const Var weights = reshape(transpose(alphas), {steps * batch, 1});
  const Var pooled = sum_rows(reshape(mul_col(H, weights), {steps, batch * hidden}));
  return {alphas, reshape(pooled, {batch, hidden})};
}

// ---------------------------------------------------------------------------
// 1-D convolution ('same' padding, stride 1)

inline void register_conv1d(ParamStore& s, const std::string& name, std::size_t in_ch, std::size_t out_ch,
                            std::size_t kernel) {
  s.add(name + ".W", {kernel * in_ch, out_ch}, Init::Glorot);
  s.add(name + ".b", {out_ch}, Init::Zeros);
}

/// x: [batch*length, in_ch] -> [batch*length, out_ch]
inline Var conv1d(Var x, const DenseParams& p, std::size_t batch, std::size_t length, std::size_t kernel,
                  Activation act) {
  return activate(add_bias(matmul(im2col(x, batch, length, kernel), p.W), p.b), act);
}

}  // namespace ponbranch::nn
