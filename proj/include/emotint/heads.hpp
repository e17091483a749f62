// Classifier heads, the joint two-task loss and finite-difference checking.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "emotint/autodiff.hpp"
#include "emotint/init.hpp"

namespace emotint {

/// Shift-stable softmax of one logit row.
template <typename Scalar>
RowVectorX<Scalar> softmax(const RowVectorX<Scalar>& logits) {
  if (logits.size() == 0) throw std::invalid_argument("softmax: empty logits");
  if (!logits.allFinite()) throw std::invalid_argument("softmax: non-finite logits");
  const Scalar m = logits.maxCoeff();
  RowVectorX<Scalar> p = (logits.array() - m).exp().matrix();
  return p / p.sum();
}

template <typename Scalar>
struct ClassifierParams {
  Parameter<Scalar> emotion_weight;  // H x C_e
  Parameter<Scalar> emotion_bias;    // 1 x C_e
  Parameter<Scalar> intent_weight;   // H x C_i
  Parameter<Scalar> intent_bias;     // 1 x C_i

  int hidden() const { return static_cast<int>(emotion_weight.value.rows()); }
  int n_emotion() const { return static_cast<int>(emotion_weight.value.cols()); }
  int n_intent() const { return static_cast<int>(intent_weight.value.cols()); }

  static ClassifierParams init(const std::string& prefix, int hidden, int n_emotion, int n_intent,
                               std::mt19937_64& rng) {
    if (n_emotion < 2 || n_intent < 2) throw std::invalid_argument("classifier: class counts must be >= 2");
    ClassifierParams p;
    p.emotion_weight = glorot_param<Scalar>(prefix + ".emotion_weight", hidden, n_emotion, rng);
    p.emotion_bias = zeros_param<Scalar>(prefix + ".emotion_bias", 1, n_emotion);
    p.intent_weight = glorot_param<Scalar>(prefix + ".intent_weight", hidden, n_intent, rng);
    p.intent_bias = zeros_param<Scalar>(prefix + ".intent_bias", 1, n_intent);
    return p;
  }

  template <typename Self, typename F>
  static void each(Self& self, F&& f) {
    f(self.emotion_weight); f(self.emotion_bias); f(self.intent_weight); f(self.intent_bias);
  }
  template <typename F> void visit(F&& f) { each(*this, f); }
  template <typename F> void visit(F&& f) const { each(*this, f); }
};

template <typename Scalar>
struct LogitsPair {
  RowVectorX<Scalar> emotion;
  RowVectorX<Scalar> intent;
};

template <typename Scalar>
struct LogitVars {
  Var<Scalar> emotion;
  Var<Scalar> intent;
};

/// The emotion head reads the emotion branch's pooled feature, the intent head the intent branch's.
template <typename Scalar>
LogitVars<Scalar> classify(Var<Scalar> emotion_feature, Var<Scalar> intent_feature,
                           const ClassifierParams<Scalar>& p) {
  if (emotion_feature.cols() != p.hidden() || intent_feature.cols() != p.hidden()) {
    throw std::invalid_argument("classify: feature width does not match classifier input");
  }
  Tape<Scalar>& t = *emotion_feature.tape;
  return {affine(emotion_feature, t.parameter(p.emotion_weight), t.parameter(p.emotion_bias)),
          affine(intent_feature, t.parameter(p.intent_weight), t.parameter(p.intent_bias))};
}

template <typename Scalar>
LogitsPair<Scalar> classify(const RowVectorX<Scalar>& emotion_feature, const RowVectorX<Scalar>& intent_feature,
                            const ClassifierParams<Scalar>& p) {
  Tape<Scalar> t;
  const auto v = classify(t.constant(emotion_feature), t.constant(intent_feature), p);
  return {v.emotion.value(), v.intent.value()};
}

struct LossWeights {
  double emotion = 1.0;
  double intent = 1.0;

  void validate() const {
    if (!(emotion >= 0.0) || !(intent >= 0.0) || !(emotion + intent > 0.0)) {
      throw std::invalid_argument("loss weights must be non-negative with a positive sum");
    }
  }
};

/// w_e * CE(emotion) + w_i * CE(intent).
template <typename Scalar>
Var<Scalar> joint_loss(const LogitVars<Scalar>& logits, int emotion_label, int intent_label,
                       const LossWeights& w) {
  w.validate();
  if (emotion_label < 0 || emotion_label >= logits.emotion.cols() || intent_label < 0 ||
      intent_label >= logits.intent.cols()) {
    throw std::invalid_argument("joint_loss: label out of range");
  }
  const auto e = scale(softmax_cross_entropy(logits.emotion, emotion_label), static_cast<Scalar>(w.emotion));
  const auto i = scale(softmax_cross_entropy(logits.intent, intent_label), static_cast<Scalar>(w.intent));
  return add(e, i);
}

template <typename Scalar>
Scalar joint_loss(const LogitsPair<Scalar>& logits, int emotion_label, int intent_label, const LossWeights& w) {
  Tape<Scalar> t;
  const LogitVars<Scalar> v{t.constant(logits.emotion), t.constant(logits.intent)};
  return joint_loss(v, emotion_label, intent_label, w).value()(0, 0);
}

// ---------------------------------------------------------------------------
// Finite-difference checking.

/// |a - n| / max(|a|, |n|), or |a - n| when both magnitudes are below 1e-8.
inline double gradient_relative_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  const double diff = std::abs(analytic - numeric);
  return scale < 1e-8 ? diff : diff / scale;
}

/// Max relative error between `analytic` and central differences of `fn` at `point`.
inline double grad_check(const std::function<double(const Eigen::VectorXd&)>& fn,
                         const Eigen::VectorXd& point, const Eigen::VectorXd& analytic, double step) {
  if (analytic.size() != point.size()) throw std::invalid_argument("grad_check: gradient size mismatch");
  double worst = 0.0;
  Eigen::VectorXd x = point;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x(i) = point(i) + step;
    const double up = fn(x);
    x(i) = point(i) - step;
    const double down = fn(x);
    x(i) = point(i);
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::domain_error("grad_check: non-finite function value");
    }
    worst = std::max(worst, gradient_relative_error(analytic(i), (up - down) / (2.0 * step)));
  }
  return worst;
}

/// Checks d(loss)/d(params) from the tape's backward pass against central
/// differences over every parameter coordinate. `loss` builds the scalar on a
/// fresh tape from the current parameter values.
template <typename Scalar, typename LossFn>
double check_parameter_gradients(const std::vector<Parameter<Scalar>*>& params, LossFn&& loss,
                                 double step = 1e-5) {
  Eigen::Index total = 0;
  for (auto* p : params) total += p->value.size();
  Eigen::VectorXd point(total);
  Eigen::VectorXd analytic(total);
  {
    Tape<Scalar> t;
    const Var<Scalar> root = loss(t);
    t.backward(root);
    Eigen::Index k = 0;
    for (auto* p : params) {
      p->zero_grad();
      t.accumulate_into(*p);
      for (Eigen::Index i = 0; i < p->value.size(); ++i, ++k) {
        point(k) = static_cast<double>(p->value.data()[i]);
        analytic(k) = static_cast<double>(p->grad.data()[i]);
      }
    }
  }
  auto assign = [&](const Eigen::VectorXd& x) {
    Eigen::Index k = 0;
    for (auto* p : params) {
      for (Eigen::Index i = 0; i < p->value.size(); ++i, ++k) p->value.data()[i] = static_cast<Scalar>(x(k));
    }
  };
  auto eval = [&](const Eigen::VectorXd& x) {
    assign(x);
    Tape<Scalar> t;
    return static_cast<double>(loss(t).value()(0, 0));
  };
  const double err = grad_check(eval, point, analytic, step);
  assign(point);
  return err;
}

}  // namespace emotint
