#pragma once

#include <stdexcept>
#include <string>

namespace emotint {

/// Malformed or inconsistent on-disk data (embedding files, manifests, reports).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid run configuration or pipeline precondition.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or checkpoint incompatibility between a model and its inputs.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace emotint
