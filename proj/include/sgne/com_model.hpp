#pragma once

// Concentration-of-measure functions h(theta) bounding
//   P{ |phi(w) - E phi(w)| > theta } <= h(theta)
// for regular phi, together with the generalized inverse used to tighten
// chance constraints into expected-value constraints.

#include "sgne/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

namespace sgne {

/// h(theta) = min{2 exp(-2 theta^2 / pi^2), 1}, valid for 1-Lipschitz functions of a standard Gaussian.
inline double h_gaussian(double theta) {
  if (!(theta >= 0.0)) throw ArgumentError("h_gaussian: theta must be nonnegative");
  const double pi = std::numbers::pi;
  return std::min(2.0 * std::exp(-2.0 * theta * theta / (pi * pi)), 1.0);
}

/// inf{theta >= 0 : h(theta) <= gamma} for a nonincreasing h, by bracket doubling and bisection.
/// Returns the upper end of the final bracket, so h(result) <= gamma always holds.
inline double h_inverse_bisection(const std::function<double(double)>& h, double gamma, double tol = 1e-10) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ArgumentError("h_inverse: gamma must lie in (0, 1]");
  if (h(0.0) <= gamma) return 0.0;
  double lo = 0.0;
  double hi = 1.0;
  int doublings = 0;
  while (h(hi) > gamma) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 1100) throw ArgumentError("h_inverse: h never drops to gamma");
  }
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (h(mid) <= gamma) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

enum class ComKind { gaussian_standard, user_tabulated };

inline std::string to_string(ComKind kind) {
  return kind == ComKind::gaussian_standard ? "gaussian-standard" : "user-tabulated";
}

class ComModel {
 public:
  ComModel() = default;

  static ComModel gaussian_standard() { return ComModel(); }

  /// Piecewise-linear h through (theta_k, h_k); theta starts at 0 and increases, h is
  /// nonincreasing in [0, 1]. Past the last knot h stays at the last value.
  static ComModel tabulated(std::vector<double> theta, std::vector<double> values) {
    if (theta.size() < 2 || theta.size() != values.size()) {
      throw ArgumentError("tabulated h: need at least two (theta, h) pairs of equal length");
    }
    if (theta.front() != 0.0) throw ArgumentError("tabulated h: first theta must be 0");
    for (std::size_t i = 0; i < theta.size(); ++i) {
      if (!(values[i] >= 0.0 && values[i] <= 1.0)) throw ArgumentError("tabulated h: values must lie in [0, 1]");
      if (i > 0 && !(theta[i] > theta[i - 1])) throw ArgumentError("tabulated h: theta must be strictly increasing");
      if (i > 0 && values[i] > values[i - 1]) throw ArgumentError("tabulated h: values must be nonincreasing");
    }
    ComModel m;
    m.kind_ = ComKind::user_tabulated;
    m.theta_ = std::move(theta);
    m.values_ = std::move(values);
    return m;
  }

  ComKind kind() const { return kind_; }
  const std::vector<double>& tableTheta() const { return theta_; }
  const std::vector<double>& tableValues() const { return values_; }

  double h(double theta) const {
    if (!(theta >= 0.0)) throw ArgumentError("h: theta must be nonnegative");
    if (kind_ == ComKind::gaussian_standard) return h_gaussian(theta);
    if (theta >= theta_.back()) return values_.back();
    const auto it = std::upper_bound(theta_.begin(), theta_.end(), theta);
    const auto i = static_cast<std::size_t>(it - theta_.begin());
    const double x0 = theta_[i - 1], x1 = theta_[i];
    const double y0 = values_[i - 1], y1 = values_[i];
    return y0 + (y1 - y0) * (theta - x0) / (x1 - x0);
  }

  bool operator==(const ComModel&) const = default;

 private:
  ComKind kind_ = ComKind::gaussian_standard;
  std::vector<double> theta_;
  std::vector<double> values_;
};

/// inf{theta >= 0 : h(theta) <= gamma}. Closed form for the Gaussian model, bisection otherwise.
inline double h_inverse(const ComModel& model, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ArgumentError("h_inverse: gamma must lie in (0, 1]");
  if (model.kind() == ComKind::gaussian_standard) {
    if (gamma >= 1.0) return 0.0;
    double theta = std::numbers::pi * std::sqrt(std::log(2.0 / gamma) / 2.0);
    // Rounding may leave h(theta) a hair above gamma.
    while (h_gaussian(theta) > gamma) theta = std::nextafter(theta, INFINITY);
    return theta;
  }
  if (gamma < model.tableValues().back()) {
    throw ArgumentError("h_inverse: gamma is below the tabulated tail of h");
  }
  return h_inverse_bisection([&model](double t) { return model.h(t); }, gamma);
}

}  // namespace sgne
