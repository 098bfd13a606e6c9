#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace sgne {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<Vector>;
using ConstVectorRef = Eigen::Ref<const Vector>;

/// Bad argument to an operation: wrong length, index out of range, value outside its domain.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent model data detected while building a dynamics/game object.
struct ConstructionError : std::logic_error {
  using std::logic_error::logic_error;
};

/// A user oracle could not be evaluated at the requested point.
struct EvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ArgumentError(what);
}

inline void require_length(Eigen::Index actual, Eigen::Index expected, const char* name) {
  if (actual != expected) {
    throw ArgumentError(std::string(name) + ": expected length " + std::to_string(expected) +
                        ", got " + std::to_string(actual));
  }
}

}  // namespace detail
}  // namespace sgne
