#pragma once

#include <cmath>
#include <vector>

#include "emotint/autodiff.hpp"

namespace emotint {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Scales every gradient so the global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename Scalar, typename Model>
double clip_grad_norm(Model& model, double max_norm) {
  double sq = 0.0;
  model.visit([&](const Parameter<Scalar>& p) { sq += static_cast<double>(p.grad.squaredNorm()); });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto s = static_cast<Scalar>(max_norm / norm);
    model.visit([&](Parameter<Scalar>& p) { p.grad *= s; });
  }
  return norm;
}

template <typename Scalar>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  long steps() const { return step_; }

  /// Applies one update from the gradients currently stored in the model,
  /// visiting parameters in the model's fixed order.
  template <typename Model>
  void step(Model& model) {
    ++step_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    std::size_t k = 0;
    model.visit([&](Parameter<Scalar>& p) {
      if (k == first_.size()) {
        first_.push_back(MatrixX<Scalar>::Zero(p.value.rows(), p.value.cols()));
        second_.push_back(MatrixX<Scalar>::Zero(p.value.rows(), p.value.cols()));
      }
      auto& m = first_[k];
      auto& v = second_[k];
      m = config_.beta1 * m + (1.0 - config_.beta1) * p.grad;
      v = config_.beta2 * v + (1.0 - config_.beta2) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= config_.learning_rate * (m.array() / c1) /
                         ((v.array() / c2).sqrt() + config_.eps);
      ++k;
    });
  }

 private:
  AdamConfig config_;
  long step_ = 0;
  std::vector<MatrixX<Scalar>> first_;
  std::vector<MatrixX<Scalar>> second_;
};

}  // namespace emotint
