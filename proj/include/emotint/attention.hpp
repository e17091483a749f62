// Multi-head scaled dot-product attention, shared by the fusion transformer
// and the cross-task interaction steps.
#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "emotint/autodiff.hpp"
#include "emotint/init.hpp"

namespace emotint {

/// Projections for one attention block over width H. Weights are H x H
/// (applied as x W), biases 1 x H. Per-head width is H / heads.
template <typename Scalar>
struct AttentionParams {
  int heads = 1;
  Parameter<Scalar> wq, bq, wk, bk, wv, bv, wo, bo;

  int width() const { return static_cast<int>(wq.value.rows()); }
  int head_width() const { return width() / heads; }

  static AttentionParams init(const std::string& prefix, int width, int heads, std::mt19937_64& rng) {
    if (heads < 1 || width < 1 || width % heads != 0) {
      throw std::invalid_argument("attention: heads (" + std::to_string(heads) +
                                  ") must divide width (" + std::to_string(width) + ")");
    }
    AttentionParams p;
    p.heads = heads;
    p.wq = glorot_param<Scalar>(prefix + ".wq", width, width, rng);
    p.bq = zeros_param<Scalar>(prefix + ".bq", 1, width);
    p.wk = glorot_param<Scalar>(prefix + ".wk", width, width, rng);
    p.bk = zeros_param<Scalar>(prefix + ".bk", 1, width);
    p.wv = glorot_param<Scalar>(prefix + ".wv", width, width, rng);
    p.bv = zeros_param<Scalar>(prefix + ".bv", 1, width);
    p.wo = glorot_param<Scalar>(prefix + ".wo", width, width, rng);
    p.bo = zeros_param<Scalar>(prefix + ".bo", 1, width);
    return p;
  }

  template <typename Self, typename F>
  static void each(Self& self, F&& f) {
    f(self.wq); f(self.bq); f(self.wk); f(self.bk);
    f(self.wv); f(self.bv); f(self.wo); f(self.bo);
  }
  template <typename F> void visit(F&& f) { each(*this, f); }
  template <typename F> void visit(F&& f) const { each(*this, f); }
};

template <typename Scalar>
struct AttentionOutput {
  Var<Scalar> output;
  std::vector<Var<Scalar>> weights;  // one n x m row-stochastic matrix per head
};

/// Queries n x H attend over keys/values m x H.
template <typename Scalar>
AttentionOutput<Scalar> attend(Var<Scalar> query, Var<Scalar> key, Var<Scalar> value,
                               const AttentionParams<Scalar>& p) {
  const int width = p.width();
  if (p.heads < 1 || width % p.heads != 0) {
    throw std::invalid_argument("attention: heads must divide width");
  }
  if (query.cols() != width || key.cols() != width || value.cols() != width) {
    throw std::invalid_argument("attention: input width does not match projections");
  }
  if (key.rows() != value.rows() || key.rows() < 1 || query.rows() < 1) {
    throw std::invalid_argument("attention: key/value row counts must match and be >= 1");
  }
  Tape<Scalar>& t = *query.tape;
  const auto q = affine(query, t.parameter(p.wq), t.parameter(p.bq));
  const auto k = affine(key, t.parameter(p.wk), t.parameter(p.bk));
  const auto v = affine(value, t.parameter(p.wv), t.parameter(p.bv));

  const int dh = p.head_width();
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  AttentionOutput<Scalar> out;
  std::vector<Var<Scalar>> heads;
  for (int h = 0; h < p.heads; ++h) {
    const auto qh = slice_cols(q, h * dh, dh);
    const auto kh = slice_cols(k, h * dh, dh);
    const auto vh = slice_cols(v, h * dh, dh);
    const auto weights = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
    out.weights.push_back(weights);
    heads.push_back(matmul(weights, vh));
  }
  const auto merged = p.heads == 1 ? heads.front() : concat_cols(heads);
  out.output = affine(merged, t.parameter(p.wo), t.parameter(p.bo));
  return out;
}

/// Evaluation-only form of attend().
template <typename Scalar>
MatrixX<Scalar> multi_head_attention(const MatrixX<Scalar>& query, const MatrixX<Scalar>& key,
                                     const MatrixX<Scalar>& value, const AttentionParams<Scalar>& p) {
  Tape<Scalar> t;
  return attend(t.constant(query), t.constant(key), t.constant(value), p).output.value();
}

template <typename Scalar>
std::vector<MatrixX<Scalar>> attention_weights(const MatrixX<Scalar>& query, const MatrixX<Scalar>& key,
                                               const MatrixX<Scalar>& value,
                                               const AttentionParams<Scalar>& p) {
  Tape<Scalar> t;
  const auto out = attend(t.constant(query), t.constant(key), t.constant(value), p);
  std::vector<MatrixX<Scalar>> w;
  for (const auto& v : out.weights) w.push_back(v.value());
  return w;
}

}  // namespace emotint
