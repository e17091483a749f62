#pragma once

#include <cmath>
#include <random>

#include "emotint/autodiff.hpp"

namespace emotint {

/// Uniform(-a, a) with a = sqrt(6 / (rows + cols)).
template <typename Scalar>
MatrixX<Scalar> glorot_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-a, a);
  MatrixX<Scalar> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(u(rng));
  }
  return m;
}

template <typename Scalar>
Parameter<Scalar> zeros_param(std::string name, Eigen::Index rows, Eigen::Index cols) {
  return Parameter<Scalar>(std::move(name), MatrixX<Scalar>::Zero(rows, cols));
}

template <typename Scalar>
Parameter<Scalar> glorot_param(std::string name, Eigen::Index rows, Eigen::Index cols,
                               std::mt19937_64& rng) {
  return Parameter<Scalar>(std::move(name), glorot_uniform<Scalar>(rows, cols, rng));
}

}  // namespace emotint
