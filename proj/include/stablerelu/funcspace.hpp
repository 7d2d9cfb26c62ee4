#pragma once

// Function-space side of the stability analysis: the data-dependent weight
//
//   g(x)  = min{g-(x), g+(x)}
//   g-(x) = P(X<x)^2 E[x-X | X<x] sqrt(1 + E[X | X<x]^2)
//   g+(x) = P(X>x)^2 E[X-x | X>x] sqrt(1 + E[X | X>x]^2)
//
// for X uniform on the sample, weighted and plain TV(1) of linear splines,
// and the closed-form right-hand sides of the curvature/TV bounds.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "stablerelu/dataset.hpp"
#include "stablerelu/errors.hpp"
#include "stablerelu/relu_net.hpp"

namespace stablerelu {

class EmpiricalWeight {
 public:
  explicit EmpiricalWeight(std::span<const double> xs)
      : xs_(xs.begin(), xs.end()) {
    if (xs_.size() < 2) {
      throw Error(ErrorKind::kInvalidConfig, "weight needs at least 2 points");
    }
    std::sort(xs_.begin(), xs_.end());
    prefix_.assign(xs_.size() + 1, 0.0);
    for (std::size_t i = 0; i < xs_.size(); ++i) prefix_[i + 1] = prefix_[i] + xs_[i];
  }

  explicit EmpiricalWeight(const Dataset& d)
      : EmpiricalWeight(std::span<const double>(d.xs)) {}

  std::size_t n() const { return xs_.size(); }
  const std::vector<double>& xs() const { return xs_; }
  double lo() const { return xs_.front(); }
  double hi() const { return xs_.back(); }

  // Strict sides: {X < x} and {X > x}.
  double operator()(double x) const {
    return combine(x, count_below(x), first_above(x));
  }
  double eval(double x) const { return (*this)(x); }

  double g_minus(double x) const { return side_minus(x, count_below(x)); }
  double g_plus(double x) const { return side_plus(x, first_above(x)); }

  // One-sided limits at x: g(x-) uses {X < x} and {X >= x}; g(x+) uses
  // {X <= x} and {X > x}.
  double left_limit(double x) const {
    return combine(x, count_below(x), count_below(x));
  }
  double right_limit(double x) const {
    return combine(x, first_above(x), first_above(x));
  }

 private:
  std::size_t count_below(double x) const {
    return static_cast<std::size_t>(
        std::lower_bound(xs_.begin(), xs_.end(), x) - xs_.begin());
  }
  std::size_t first_above(double x) const {
    return static_cast<std::size_t>(
        std::upper_bound(xs_.begin(), xs_.end(), x) - xs_.begin());
  }

  // g- over the first m sorted points.
  double side_minus(double x, std::size_t m) const {
    if (m == 0) return 0.0;
    const double nn = static_cast<double>(xs_.size());
    const double mean = prefix_[m] / static_cast<double>(m);
    const double p = static_cast<double>(m) / nn;
    return p * p * (x - mean) * std::sqrt(1.0 + mean * mean);
  }

  // g+ over sorted points with index >= start.
  double side_plus(double x, std::size_t start) const {
    const std::size_t cnt = xs_.size() - start;
    if (cnt == 0) return 0.0;
    const double nn = static_cast<double>(xs_.size());
    const double mean = (prefix_.back() - prefix_[start]) / static_cast<double>(cnt);
    const double p = static_cast<double>(cnt) / nn;
    return p * p * (mean - x) * std::sqrt(1.0 + mean * mean);
  }

  double combine(double x, std::size_t below, std::size_t above_start) const {
    return std::min(side_minus(x, below), side_plus(x, above_start));
  }

  std::vector<double> xs_;
  std::vector<double> prefix_;
};

// Sum of |dslope| g(t) over knots strictly inside (min x, max x).
inline double weighted_tv(const PiecewiseLinear& f, const EmpiricalWeight& g) {
  double acc = 0.0;
  for (const Knot& kn : f.knots) {
    if (kn.position > g.lo() && kn.position < g.hi()) {
      acc += std::fabs(kn.dslope) * g(kn.position);
    }
  }
  return acc;
}

// Sum of |dslope| over knots in the closed interval [lo, hi].
inline double tv_on_interval(const PiecewiseLinear& f, double lo, double hi) {
  if (!(lo < hi)) throw Error(ErrorKind::kInvalidConfig, "tv interval needs lo < hi");
  double acc = 0.0;
  for (const Knot& kn : f.knots) {
    if (kn.position >= lo && kn.position <= hi) acc += std::fabs(kn.dslope);
  }
  return acc;
}

inline std::size_t knots_in_range(const PiecewiseLinear& f, double lo, double hi) {
  return static_cast<std::size_t>(std::count_if(
      f.knots.begin(), f.knots.end(),
      [&](const Knot& kn) { return kn.position >= lo && kn.position <= hi; }));
}

// ---------------------------------------------------------------------------
// Bound right-hand sides.

// Curvature enters the bounds either as a measured lambda_max or through a
// step size (lambda := 2/eta for a stable solution).
struct Curvature {
  double lambda = 0.0;

  static Curvature from_lambda(double lambda) { return {lambda}; }
  static Curvature from_eta(double eta) { return {2.0 / eta}; }
};

// The bounds assume x_max >= 1; smaller domains use 1.
inline double bound_scale(double x_max) { return std::max(x_max, 1.0); }

// lambda/2 - 1/2 + max{x_max,1} sqrt(2 L)
inline double stability_tv_bound(Curvature c, double loss_value, double x_max) {
  return c.lambda / 2.0 - 0.5 +
         bound_scale(x_max) * std::sqrt(2.0 * std::max(loss_value, 0.0));
}

// Gaussian-complexity constant multiplying sigma max{x_max,1}.
inline double noise_term_factor(long k, long n, double delta) {
  const double nn = static_cast<double>(n);
  const double dimension_free = 4.0 * std::sqrt(std::log(4.0 * nn / delta));
  const double parametric =
      14.0 * std::sqrt(static_cast<double>(k) * std::log(13.0 * nn / delta) / nn);
  return std::min(dimension_free, parametric);
}

// lambda/2 - 1/2 + sigma M min{4 sqrt(log(4n/delta)), 14 sqrt(k log(13n/delta)/n)}
//   + 2 M sqrt(MSE),   M = max{x_max, 1}
inline double noisy_tv_bound(Curvature c, double mse_value, double sigma,
                             double x_max, long k, long n, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw Error(ErrorKind::kInvalidConfig, "delta must lie in (0, 1)");
  }
  if (!(sigma >= 0.0)) throw Error(ErrorKind::kInvalidConfig, "sigma must be >= 0");
  const double m = bound_scale(x_max);
  return c.lambda / 2.0 - 0.5 + sigma * m * noise_term_factor(k, n, delta) +
         2.0 * m * std::sqrt(std::max(mse_value, 0.0));
}

// ---------------------------------------------------------------------------
// Intervals where g is bounded below.

struct IntervalReport {
  double lo = 0.0;
  double hi = 0.0;
  double c_inf = 0.0;
  long n_in = 0;
  double grid_step = 0.0;
};

// Exact infimum of g over [lo, hi]. Between data points g- increases and g+
// decreases, so the infimum is attained among the interval ends, the data
// points and their one-sided limits. The uniform grid is evaluated as well.
inline double infimum_on(const EmpiricalWeight& g, double lo, double hi,
                         double grid_step) {
  if (!(lo <= hi)) throw Error(ErrorKind::kInvalidConfig, "infimum_on needs lo <= hi");
  if (!(grid_step > 0.0)) throw Error(ErrorKind::kInvalidConfig, "grid_step must be positive");
  double m = std::min(g(lo), g(hi));
  const auto steps = static_cast<long>(std::floor((hi - lo) / grid_step));
  for (long i = 1; i <= steps; ++i) {
    const double x = lo + static_cast<double>(i) * grid_step;
    if (x > hi) break;
    m = std::min(m, g(x));
  }
  for (double x : g.xs()) {
    if (x < lo || x > hi) continue;
    m = std::min(m, g(x));
    if (x > lo) m = std::min(m, g.left_limit(x));
    if (x < hi) m = std::min(m, g.right_limit(x));
  }
  return m;
}

// Longest run of grid points over [min x, max x] with g >= c; ties go to
// the run nearest the sample median.
inline IntervalReport select_interval(const EmpiricalWeight& g, double c,
                                      double grid_step) {
  if (!(c > 0.0)) throw Error(ErrorKind::kInvalidConfig, "c must be positive");
  if (!(grid_step > 0.0)) throw Error(ErrorKind::kInvalidConfig, "grid_step must be positive");
  const double lo = g.lo();
  const double hi = g.hi();
  const auto count = static_cast<long>(std::floor((hi - lo) / grid_step)) + 1;
  const double median = g.xs()[(g.n() - 1) / 2];

  long best_start = -1, best_len = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  long run_start = -1;
  auto close_run = [&](long end_exclusive) {
    if (run_start < 0) return;
    const long len = end_exclusive - run_start;
    const double a = lo + static_cast<double>(run_start) * grid_step;
    const double b = lo + static_cast<double>(end_exclusive - 1) * grid_step;
    const double dist = median < a ? a - median : (median > b ? median - b : 0.0);
    if (len > best_len || (len == best_len && dist < best_dist)) {
      best_start = run_start;
      best_len = len;
      best_dist = dist;
    }
    run_start = -1;
  };
  for (long i = 0; i < count; ++i) {
    const double x = lo + static_cast<double>(i) * grid_step;
    if (g(x) >= c) {
      if (run_start < 0) run_start = i;
    } else {
      close_run(i);
    }
  }
  close_run(count);
  if (best_len < 2) {
    throw Error(ErrorKind::kNoInterval, "no grid interval with g >= c");
  }
  IntervalReport rep;
  rep.lo = lo + static_cast<double>(best_start) * grid_step;
  rep.hi = lo + static_cast<double>(best_start + best_len - 1) * grid_step;
  rep.grid_step = grid_step;
  rep.c_inf = std::numeric_limits<double>::infinity();
  for (long i = best_start; i < best_start + best_len; ++i) {
    rep.c_inf = std::min(rep.c_inf, g(lo + static_cast<double>(i) * grid_step));
  }
  rep.n_in = static_cast<long>(std::count_if(
      g.xs().begin(), g.xs().end(),
      [&](double x) { return x >= rep.lo && x <= rep.hi; }));
  return rep;
}

// ---------------------------------------------------------------------------
// Data-only lower bound on the curvature of any interpolant.

enum class LowerBoundMode { kPlainMiddle, kWeightedMiddle };

struct MiddleLowerBound {
  double bound = 0.0;
  double lo = 0.0;       // x at the first middle index
  double hi = 0.0;       // x at the last middle index
  double g_inf = 1.0;    // infimum of g on [lo, hi] (weighted mode only)
  std::size_t triples = 0;
};

// Middle half of the design in 0-based indices: [floor(n/4), ceil(3n/4)]
// in 1-based terms, clamped to the sample.
inline std::pair<std::size_t, std::size_t> middle_index_range(std::size_t n) {
  const std::size_t first1 = std::max<std::size_t>(1, n / 4);
  const std::size_t last1 = std::min<std::size_t>(n, (3 * n + 3) / 4);
  return {first1 - 1, last1 - 1};
}

inline MiddleLowerBound interpolant_tv_lower_bound(const Dataset& d,
                                                   LowerBoundMode mode) {
  const std::size_t n = d.size();
  if (n < 3) {
    throw Error(ErrorKind::kInvalidConfig, "lower bound needs at least 3 points");
  }
  const double h = (d.xs.back() - d.xs.front()) / static_cast<double>(n - 1);
  for (std::size_t i = 1; i < n; ++i) {
    const double gap = d.xs[i] - d.xs[i - 1];
    if (std::fabs(gap - h) > 1e-9 * std::fabs(h)) {
      throw Error(ErrorKind::kNotEquispaced,
                  "gap " + std::to_string(i) + " differs from mean spacing");
    }
  }
  const auto [first, last] = middle_index_range(n);
  MiddleLowerBound out;
  out.lo = d.xs[first];
  out.hi = d.xs[last];
  // Each disjoint triple (j, j+1, j+2) forces slope change
  // |y_{j+2} - 2 y_{j+1} + y_j| / h between its two secants.
  double acc = 0.0;
  for (std::size_t j = first; j + 2 <= last; j += 3) {
    acc += std::fabs(d.ys[j + 2] - 2.0 * d.ys[j + 1] + d.ys[j]) / h;
    ++out.triples;
  }
  out.bound = acc;
  if (mode == LowerBoundMode::kWeightedMiddle) {
    const EmpiricalWeight g(d);
    out.g_inf = infimum_on(g, out.lo, out.hi, d.x_max / 2000.0);
    out.bound *= out.g_inf;
  }
  return out;
}

}  // namespace stablerelu
