// Per-modality encoders and the per-task fusion transformer.
#pragma once

#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>

#include "emotint/attention.hpp"
#include "emotint/autodiff.hpp"
#include "emotint/init.hpp"

namespace emotint {

enum class Task { emotion, intent };

inline const char* to_string(Task t) { return t == Task::emotion ? "emotion" : "intent"; }

/// Adds i.i.d. N(0, sigma^2) noise in training mode; identity otherwise.
template <typename Scalar>
MatrixX<Scalar> add_gaussian_noise(const MatrixX<Scalar>& x, Scalar sigma, bool training,
                                   std::mt19937_64& rng) {
  if (!(sigma >= Scalar(0))) throw std::invalid_argument("add_gaussian_noise: sigma must be >= 0");
  if (!training || sigma == Scalar(0)) return x;
  std::normal_distribution<double> normal(0.0, static_cast<double>(sigma));
  MatrixX<Scalar> y = x;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    for (Eigen::Index j = 0; j < y.cols(); ++j) y(i, j) += static_cast<Scalar>(normal(rng));
  }
  return y;
}

// ---------------------------------------------------------------------------
// Recurrent encoder.

/// Single-layer LSTM. Gate blocks in the 4H axis are ordered [input, forget, cell, output].
template <typename Scalar>
struct LstmParams {
  Parameter<Scalar> w_input;   // D x 4H
  Parameter<Scalar> w_hidden;  // H x 4H
  Parameter<Scalar> bias;      // 1 x 4H

  int input_dim() const { return static_cast<int>(w_input.value.rows()); }
  int hidden() const { return static_cast<int>(w_hidden.value.rows()); }

  static LstmParams init(const std::string& prefix, int input_dim, int hidden, std::mt19937_64& rng) {
    LstmParams p;
    p.w_input = glorot_param<Scalar>(prefix + ".w_input", input_dim, 4 * hidden, rng);
    p.w_hidden = glorot_param<Scalar>(prefix + ".w_hidden", hidden, 4 * hidden, rng);
    p.bias = zeros_param<Scalar>(prefix + ".bias", 1, 4 * hidden);
    p.bias.value.middleCols(hidden, hidden).setOnes();
    return p;
  }

  template <typename Self, typename F>
  static void each(Self& self, F&& f) { f(self.w_input); f(self.w_hidden); f(self.bias); }
  template <typename F> void visit(F&& f) { each(*this, f); }
  template <typename F> void visit(F&& f) const { each(*this, f); }
};

/// Hidden states h_1..h_T stacked as a T x H matrix.
template <typename Scalar>
Var<Scalar> lstm_states(Var<Scalar> seq, const LstmParams<Scalar>& p) {
  if (seq.cols() != p.input_dim()) {
    throw std::invalid_argument("recurrent_encode: input dim " + std::to_string(seq.cols()) +
                                " does not match encoder input dim " + std::to_string(p.input_dim()));
  }
  if (seq.rows() < 1) throw std::invalid_argument("recurrent_encode: empty sequence");
  Tape<Scalar>& t = *seq.tape;
  const int hidden = p.hidden();
  const auto wx = t.parameter(p.w_input);
  const auto wh = t.parameter(p.w_hidden);
  const auto b = t.parameter(p.bias);
  // Input projections for every step at once.
  const auto projected = affine(seq, wx, b);

  std::vector<Var<Scalar>> states;
  Var<Scalar> h{};
  Var<Scalar> c{};
  for (Eigen::Index step = 0; step < seq.rows(); ++step) {
    auto gates = slice_rows(projected, step, 1);
    if (step > 0) gates = add(gates, matmul(h, wh));
    const auto i = sigmoid(slice_cols(gates, 0, hidden));
    const auto f = sigmoid(slice_cols(gates, hidden, hidden));
    const auto g = tanh(slice_cols(gates, 2 * hidden, hidden));
    const auto o = sigmoid(slice_cols(gates, 3 * hidden, hidden));
    c = step > 0 ? add(hadamard(f, c), hadamard(i, g)) : hadamard(i, g);
    h = hadamard(o, tanh(c));
    states.push_back(h);
  }
  return states.size() == 1 ? states.front() : concat_rows(states);
}

template <typename Scalar>
Var<Scalar> recurrent_encode(Var<Scalar> seq, const LstmParams<Scalar>& p) {
  return max_rows(lstm_states(seq, p));
}

template <typename Scalar>
RowVectorX<Scalar> recurrent_encode(const MatrixX<Scalar>& seq, const LstmParams<Scalar>& p) {
  Tape<Scalar> t;
  return recurrent_encode(t.constant(seq), p).value();
}

// ---------------------------------------------------------------------------
// Text convolution encoder.

template <typename Scalar>
struct TextConvParams {
  int kernel = 1;
  Parameter<Scalar> weight;  // (kernel * D) x H, row block j applies to window offset j
  Parameter<Scalar> bias;    // 1 x H

  int input_dim() const { return static_cast<int>(weight.value.rows()) / kernel; }
  int hidden() const { return static_cast<int>(weight.value.cols()); }

  static TextConvParams init(const std::string& prefix, int input_dim, int hidden, int kernel,
                             std::mt19937_64& rng) {
    if (kernel < 1) throw std::invalid_argument("text conv kernel width must be >= 1");
    TextConvParams p;
    p.kernel = kernel;
    p.weight = glorot_param<Scalar>(prefix + ".weight", kernel * input_dim, hidden, rng);
    p.bias = zeros_param<Scalar>(prefix + ".bias", 1, hidden);
    return p;
  }

  template <typename Self, typename F>
  static void each(Self& self, F&& f) { f(self.weight); f(self.bias); }
  template <typename F> void visit(F&& f) { each(*this, f); }
  template <typename F> void visit(F&& f) const { each(*this, f); }
};

/// Sliding windows of `width` consecutive rows, each flattened into one row:
/// (T x D) -> ((T - width + 1) x width*D).
template <typename Scalar>
Var<Scalar> unfold_rows(Var<Scalar> seq, Eigen::Index width) {
  const auto& x = seq.value();
  const Eigen::Index d = x.cols();
  const Eigen::Index positions = x.rows() - width + 1;
  if (width < 1 || positions < 1) throw std::invalid_argument("unfold_rows: window wider than sequence");
  MatrixX<Scalar> out(positions, width * d);
  for (Eigen::Index p = 0; p < positions; ++p) {
    for (Eigen::Index j = 0; j < width; ++j) out.block(p, j * d, 1, d) = x.row(p + j);
  }
  return seq.tape->record(std::move(out), {seq},
                          [seq, width, positions, d](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                            const auto& xv = tp.value(seq);
                            MatrixX<Scalar> dx = MatrixX<Scalar>::Zero(xv.rows(), xv.cols());
                            for (Eigen::Index p = 0; p < positions; ++p) {
                              for (Eigen::Index j = 0; j < width; ++j) {
                                dx.row(p + j) += g.block(p, j * d, 1, d);
                              }
                            }
                            tp.accumulate(seq, dx);
                          });
}

/// Valid 1-D convolution over time, ReLU, max over positions. The kernel is
/// clamped to T for short sequences (only the leading weight blocks are used).
template <typename Scalar>
Var<Scalar> text_conv_encode(Var<Scalar> seq, const TextConvParams<Scalar>& p) {
  if (seq.cols() != p.input_dim()) {
    throw std::invalid_argument("text_conv_encode: input dim " + std::to_string(seq.cols()) +
                                " does not match encoder input dim " + std::to_string(p.input_dim()));
  }
  if (seq.rows() < 1) throw std::invalid_argument("text_conv_encode: empty sequence");
  Tape<Scalar>& t = *seq.tape;
  const Eigen::Index width = std::min<Eigen::Index>(p.kernel, seq.rows());
  auto weight = t.parameter(p.weight);
  if (width < p.kernel) weight = slice_rows(weight, 0, width * seq.cols());
  const auto pre = affine(unfold_rows(seq, width), weight, t.parameter(p.bias));
  return max_rows(relu(pre));
}

template <typename Scalar>
RowVectorX<Scalar> text_conv_encode(const MatrixX<Scalar>& seq, const TextConvParams<Scalar>& p) {
  Tape<Scalar> t;
  return text_conv_encode(t.constant(seq), p).value();
}

template <typename Scalar>
struct EncoderParams {
  LstmParams<Scalar> visual;
  LstmParams<Scalar> audio;
  TextConvParams<Scalar> text;

  static EncoderParams init(const std::string& prefix, int visual_dim, int audio_dim, int text_dim,
                            int hidden, int text_kernel, std::mt19937_64& rng) {
    EncoderParams p;
    p.visual = LstmParams<Scalar>::init(prefix + ".visual", visual_dim, hidden, rng);
    p.audio = LstmParams<Scalar>::init(prefix + ".audio", audio_dim, hidden, rng);
    p.text = TextConvParams<Scalar>::init(prefix + ".text", text_dim, hidden, text_kernel, rng);
    return p;
  }

  template <typename Self, typename F>
  static void each(Self& self, F&& f) { self.visual.visit(f); self.audio.visit(f); self.text.visit(f); }
  template <typename F> void visit(F&& f) { each(*this, f); }
  template <typename F> void visit(F&& f) const { each(*this, f); }
};

// ---------------------------------------------------------------------------
// Fusion transformer.

/// Three modality tokens for one task branch; rows are [visual, audio, text].
template <typename Scalar>
struct TaskTokens {
  Task task = Task::emotion;
  MatrixX<Scalar> tokens;
};

template <typename Scalar>
struct FusionParams {
  Parameter<Scalar> ln1_gain, ln1_bias;
  AttentionParams<Scalar> attention;
  Parameter<Scalar> ln2_gain, ln2_bias;
  Parameter<Scalar> ff_w1, ff_b1;  // H x F, 1 x F
  Parameter<Scalar> ff_w2, ff_b2;  // F x H, 1 x H

  int width() const { return attention.width(); }

  static FusionParams init(const std::string& prefix, int hidden, int ff_dim, int heads,
                           std::mt19937_64& rng) {
    FusionParams p;
    p.ln1_gain = Parameter<Scalar>(prefix + ".ln1_gain", MatrixX<Scalar>::Ones(1, hidden));
    p.ln1_bias = zeros_param<Scalar>(prefix + ".ln1_bias", 1, hidden);
    p.attention = AttentionParams<Scalar>::init(prefix + ".attention", hidden, heads, rng);
    p.ln2_gain = Parameter<Scalar>(prefix + ".ln2_gain", MatrixX<Scalar>::Ones(1, hidden));
    p.ln2_bias = zeros_param<Scalar>(prefix + ".ln2_bias", 1, hidden);
    p.ff_w1 = glorot_param<Scalar>(prefix + ".ff_w1", hidden, ff_dim, rng);
    p.ff_b1 = zeros_param<Scalar>(prefix + ".ff_b1", 1, ff_dim);
    p.ff_w2 = glorot_param<Scalar>(prefix + ".ff_w2", ff_dim, hidden, rng);
    p.ff_b2 = zeros_param<Scalar>(prefix + ".ff_b2", 1, hidden);
    return p;
  }

  template <typename Self, typename F>
  static void each(Self& self, F&& f) {
    f(self.ln1_gain); f(self.ln1_bias);
    self.attention.visit(f);
    f(self.ln2_gain); f(self.ln2_bias);
    f(self.ff_w1); f(self.ff_b1); f(self.ff_w2); f(self.ff_b2);
  }
  template <typename F> void visit(F&& f) { each(*this, f); }
  template <typename F> void visit(F&& f) const { each(*this, f); }
};

/// Pre-norm encoder layer: x + MHA(LN(x)), then + FFN(LN(.)) with ReLU.
template <typename Scalar>
Var<Scalar> fuse(Var<Scalar> tokens, const FusionParams<Scalar>& p) {
  if (tokens.cols() != p.width()) throw std::invalid_argument("fuse_modalities: token width mismatch");
  Tape<Scalar>& t = *tokens.tape;
  const auto n1 = layer_norm_rows(tokens, t.parameter(p.ln1_gain), t.parameter(p.ln1_bias));
  const auto x1 = add(tokens, attend(n1, n1, n1, p.attention).output);
  const auto n2 = layer_norm_rows(x1, t.parameter(p.ln2_gain), t.parameter(p.ln2_bias));
  const auto inner = relu(affine(n2, t.parameter(p.ff_w1), t.parameter(p.ff_b1)));
  return add(x1, affine(inner, t.parameter(p.ff_w2), t.parameter(p.ff_b2)));
}

template <typename Scalar>
TaskTokens<Scalar> fuse_modalities(const RowVectorX<Scalar>& visual, const RowVectorX<Scalar>& audio,
                                   const RowVectorX<Scalar>& text, const FusionParams<Scalar>& p,
                                   Task task) {
  const auto h = p.width();
  if (visual.cols() != h || audio.cols() != h || text.cols() != h) {
    throw std::invalid_argument("fuse_modalities: modality vectors must have width H");
  }
  if (!visual.allFinite() || !audio.allFinite() || !text.allFinite()) {
    throw std::invalid_argument("fuse_modalities: non-finite input");
  }
  MatrixX<Scalar> stacked(3, h);
  stacked << visual, audio, text;
  Tape<Scalar> t;
  return TaskTokens<Scalar>{task, fuse(t.constant(std::move(stacked)), p).value()};
}

}  // namespace emotint
