#pragma once

#include <cstddef>
#include <optional>

#include "stablerelu/dataset.hpp"
#include "stablerelu/errors.hpp"
#include "stablerelu/relu_net.hpp"

namespace stablerelu {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const { return x >= lo && x <= hi; }
};

inline std::size_t count_in(const Dataset& d, const Interval& iv) {
  std::size_t c = 0;
  for (double x : d.xs) c += iv.contains(x) ? 1 : 0;
  return c;
}

// (1/n_I) sum_{x_i in I} (f(x_i) - f0(x_i))^2; all points when no interval.
inline double mse(const NetParams& p, const Dataset& d,
                  const std::optional<Interval>& interval = std::nullopt) {
  if (!d.ground_truth) {
    throw Error(ErrorKind::kMissingGroundTruth, "MSE needs a ground truth");
  }
  double acc = 0.0;
  std::size_t count = 0;
  for (double x : d.xs) {
    if (interval && !interval->contains(x)) continue;
    const double e = forward(p, x) - (*d.ground_truth)(x);
    acc += e * e;
    ++count;
  }
  if (count == 0) throw Error(ErrorKind::kEmptyInterval, "no data inside the interval");
  return acc / static_cast<double>(count);
}

// (1/2n) sum_i (f0(x_i) - y_i)^2. Evaluated through f0 rather than the
// stored noises so that a network computing f0 compares equal to it.
inline double ground_truth_loss(const Dataset& d) {
  if (!d.ground_truth) {
    throw Error(ErrorKind::kMissingGroundTruth, "ground-truth loss needs f0");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double e = (*d.ground_truth)(d.xs[i]) - d.ys[i];
    acc += e * e;
  }
  return acc / (2.0 * static_cast<double>(d.size()));
}

// Restricted to the interval: sum (f(x_i) - y_i)^2 <= sum (f0(x_i) - y_i)^2.
inline bool optimized_on(const NetParams& p, const Dataset& d, const Interval& iv) {
  if (!d.ground_truth) {
    throw Error(ErrorKind::kMissingGroundTruth, "optimized check needs f0");
  }
  double fit = 0.0, truth = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!iv.contains(d.xs[i])) continue;
    const double a = forward(p, d.xs[i]) - d.ys[i];
    const double b = (*d.ground_truth)(d.xs[i]) - d.ys[i];
    fit += a * a;
    truth += b * b;
  }
  return fit <= truth;
}

}  // namespace stablerelu
