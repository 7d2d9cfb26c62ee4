#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stablerelu/errors.hpp"

namespace stablerelu {

// A named regression target. The name is what gets serialized; the function
// is what gets evaluated.
struct GroundTruth {
  std::string name;
  std::function<double(double)> fn;

  double operator()(double x) const { return fn(x); }
};

// Fixed-design regression sample. xs are sorted ascending with distinct
// values, all inside [-x_max, x_max].
struct Dataset {
  std::vector<double> xs;
  std::vector<double> ys;
  double x_max = 1.0;
  std::optional<GroundTruth> ground_truth;
  std::optional<double> sigma;
  std::optional<std::vector<double>> noises;

  std::size_t size() const { return xs.size(); }

  // Throws InvalidConfig when an invariant is broken.
  void validate() const {
    if (xs.size() != ys.size()) {
      throw Error(ErrorKind::kInvalidConfig, "xs and ys differ in length");
    }
    if (xs.size() < 2) {
      throw Error(ErrorKind::kInvalidConfig, "dataset needs at least 2 points");
    }
    if (!(x_max > 0.0) || !std::isfinite(x_max)) {
      throw Error(ErrorKind::kInvalidConfig, "x_max must be positive");
    }
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) {
        throw Error(ErrorKind::kInvalidConfig,
                    "non-finite entry at index " + std::to_string(i));
      }
      if (std::fabs(xs[i]) > x_max) {
        throw Error(ErrorKind::kInvalidConfig,
                    "x[" + std::to_string(i) + "] outside [-x_max, x_max]");
      }
      if (i > 0 && !(xs[i] > xs[i - 1])) {
        throw Error(ErrorKind::kInvalidConfig,
                    "xs must be strictly increasing (index " +
                        std::to_string(i) + ")");
      }
    }
    if (sigma && !(*sigma >= 0.0)) {
      throw Error(ErrorKind::kInvalidConfig, "sigma must be >= 0");
    }
    if (noises && noises->size() != xs.size()) {
      throw Error(ErrorKind::kInvalidConfig, "noises length mismatch");
    }
  }

  double x_lo() const { return xs.front(); }
  double x_hi() const { return xs.back(); }
};

inline double hat_function(double x) {
  return x <= 0.0 ? 2.0 * x + 1.0 : -2.0 * x + 1.0;
}

inline GroundTruth hat_ground_truth() { return {"hat", hat_function}; }

inline GroundTruth zero_ground_truth() {
  return {"zero", [](double) { return 0.0; }};
}

// Resolves a serialized ground-truth name; nullopt for unknown names.
inline std::optional<GroundTruth> ground_truth_by_name(const std::string& name) {
  if (name == "hat") return hat_ground_truth();
  if (name == "zero") return zero_ground_truth();
  return std::nullopt;
}

}  // namespace stablerelu
