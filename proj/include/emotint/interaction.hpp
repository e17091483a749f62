// Cross-task interaction between the emotion and intent token matrices.
//
// For one branch with own tokens Q and the other branch's tokens O:
//   A = MHA1(Q, O, O)           first interaction result
//   B = MHA2(Q, A, A)           refinement with A as key and value
//   g = sigmoid([Q | B] Wg + bg)
//   F = Q + g * B               gated residual
#pragma once

#include <random>
#include <stdexcept>
#include <string>

#include "emotint/attention.hpp"
#include "emotint/autodiff.hpp"
#include "emotint/encoding.hpp"
#include "emotint/init.hpp"

namespace emotint {

template <typename Scalar>
struct GateParams {
  Parameter<Scalar> weight;  // 2H x H
  Parameter<Scalar> bias;    // 1 x H

  static GateParams init(const std::string& prefix, int hidden, std::mt19937_64& rng) {
    GateParams p;
    p.weight = glorot_param<Scalar>(prefix + ".weight", 2 * hidden, hidden, rng);
    p.bias = zeros_param<Scalar>(prefix + ".bias", 1, hidden);
    return p;
  }

  template <typename Self, typename F>
  static void each(Self& self, F&& f) { f(self.weight); f(self.bias); }
  template <typename F> void visit(F&& f) { each(*this, f); }
  template <typename F> void visit(F&& f) const { each(*this, f); }
};

/// The two attention steps and the gate of one task branch.
template <typename Scalar>
struct InteractionParams {
  AttentionParams<Scalar> first;
  AttentionParams<Scalar> second;
  GateParams<Scalar> gate;

  static InteractionParams init(const std::string& prefix, int hidden, int heads, std::mt19937_64& rng) {
    InteractionParams p;
    p.first = AttentionParams<Scalar>::init(prefix + ".first", hidden, heads, rng);
    p.second = AttentionParams<Scalar>::init(prefix + ".second", hidden, heads, rng);
    p.gate = GateParams<Scalar>::init(prefix + ".gate", hidden, rng);
    return p;
  }

  template <typename Self, typename F>
  static void each(Self& self, F&& f) { self.first.visit(f); self.second.visit(f); self.gate.visit(f); }
  template <typename F> void visit(F&& f) { each(*this, f); }
  template <typename F> void visit(F&& f) const { each(*this, f); }
};

template <typename Scalar>
struct InteractionVars {
  Var<Scalar> a, b, gate, feature;
};

/// Evaluated interaction of one branch; every matrix is 3 x H.
template <typename Scalar>
struct InteractionState {
  MatrixX<Scalar> a;
  MatrixX<Scalar> b;
  MatrixX<Scalar> gate;
  MatrixX<Scalar> feature;
};

template <typename Scalar>
InteractionVars<Scalar> interact(Var<Scalar> query, Var<Scalar> other,
                                 const AttentionParams<Scalar>& first,
                                 const AttentionParams<Scalar>& second,
                                 const GateParams<Scalar>& gate) {
  if (query.rows() != other.rows() || query.cols() != other.cols()) {
    throw std::invalid_argument("cross_task_interact: token matrices differ in shape");
  }
  Tape<Scalar>& t = *query.tape;
  InteractionVars<Scalar> s;
  s.a = attend(query, other, other, first).output;
  s.b = attend(query, s.a, s.a, second).output;
  s.gate = sigmoid(affine(concat_cols<Scalar>({query, s.b}), t.parameter(gate.weight),
                          t.parameter(gate.bias)));
  s.feature = add(query, hadamard(s.gate, s.b));
  return s;
}

template <typename Scalar>
InteractionVars<Scalar> interact(Var<Scalar> query, Var<Scalar> other, const InteractionParams<Scalar>& p) {
  return interact(query, other, p.first, p.second, p.gate);
}

template <typename Scalar>
InteractionState<Scalar> cross_task_interact(const TaskTokens<Scalar>& query, const TaskTokens<Scalar>& other,
                                             const AttentionParams<Scalar>& first,
                                             const AttentionParams<Scalar>& second,
                                             const GateParams<Scalar>& gate) {
  if (query.tokens.rows() != 3 || other.tokens.rows() != 3 ||
      query.tokens.cols() != other.tokens.cols()) {
    throw std::invalid_argument("cross_task_interact: both token matrices must be 3 x H");
  }
  Tape<Scalar> t;
  const auto s = interact(t.constant(query.tokens), t.constant(other.tokens), first, second, gate);
  return {s.a.value(), s.b.value(), s.gate.value(), s.feature.value()};
}

/// Q + g * B.
template <typename Scalar>
MatrixX<Scalar> gate_combine(const MatrixX<Scalar>& query, const MatrixX<Scalar>& second,
                             const MatrixX<Scalar>& gate) {
  if (query.rows() != second.rows() || query.cols() != second.cols() ||
      query.rows() != gate.rows() || query.cols() != gate.cols()) {
    throw std::invalid_argument("gate_combine: shape mismatch");
  }
  return query + gate.cwiseProduct(second);
}

/// Mean of the three modality tokens.
template <typename Scalar>
RowVectorX<Scalar> pool_tokens(const MatrixX<Scalar>& feature) {
  if (feature.rows() != 3) throw std::invalid_argument("pool_tokens: expected exactly 3 rows");
  return feature.colwise().mean();
}

}  // namespace emotint
