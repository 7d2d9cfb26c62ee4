#pragma once

// Two-layer univariate ReLU network
//
//   f(x) = sum_j w2_j * relu(w1_j * x + b1_j) + b2
//
// with closed-form parameter derivatives and its canonical linear-spline
// form. The flattened parameter order is (w1_1..w1_k, b1_1..b1_k,
// w2_1..w2_k, b2), dimension 3k+1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stablerelu/dataset.hpp"
#include "stablerelu/errors.hpp"
#include "stablerelu/random.hpp"

namespace stablerelu {

inline constexpr double kDefaultDiffTol = 1e-8;

inline double relu(double u) { return u > 0.0 ? u : 0.0; }

struct NetParams {
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;

  NetParams() = default;
  explicit NetParams(std::size_t k) : w1(k, 0.0), b1(k, 0.0), w2(k, 0.0) {}

  std::size_t k() const { return w1.size(); }
  std::size_t dim() const { return 3 * k() + 1; }

  std::size_t idx_w1(std::size_t j) const { return j; }
  std::size_t idx_b1(std::size_t j) const { return k() + j; }
  std::size_t idx_w2(std::size_t j) const { return 2 * k() + j; }
  std::size_t idx_b2() const { return 3 * k(); }

  Eigen::VectorXd flatten() const {
    const std::size_t k = this->k();
    Eigen::VectorXd theta(dim());
    for (std::size_t j = 0; j < k; ++j) {
      theta[idx_w1(j)] = w1[j];
      theta[idx_b1(j)] = b1[j];
      theta[idx_w2(j)] = w2[j];
    }
    theta[idx_b2()] = b2;
    return theta;
  }

  static NetParams unflatten(const Eigen::Ref<const Eigen::VectorXd>& theta) {
    const auto n = static_cast<std::size_t>(theta.size());
    if (n < 4 || (n - 1) % 3 != 0) {
      throw Error(ErrorKind::kInvalidConfig,
                  "parameter vector length must be 3k+1 with k >= 1");
    }
    NetParams p((n - 1) / 3);
    for (std::size_t j = 0; j < p.k(); ++j) {
      p.w1[j] = theta[p.idx_w1(j)];
      p.b1[j] = theta[p.idx_b1(j)];
      p.w2[j] = theta[p.idx_w2(j)];
    }
    p.b2 = theta[p.idx_b2()];
    return p;
  }

  bool all_finite() const {
    auto finite = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(),
                         [](double d) { return std::isfinite(d); });
    };
    return finite(w1) && finite(b1) && finite(w2) && std::isfinite(b2);
  }

  void validate() const {
    if (k() == 0) throw Error(ErrorKind::kInvalidConfig, "k must be >= 1");
    if (b1.size() != k() || w2.size() != k()) {
      throw Error(ErrorKind::kInvalidConfig, "layer sizes disagree");
    }
    if (!all_finite()) {
      throw Error(ErrorKind::kInvalidConfig, "non-finite parameter");
    }
  }

  double inf_norm() const {
    double m = std::fabs(b2);
    for (std::size_t j = 0; j < k(); ++j) {
      m = std::max({m, std::fabs(w1[j]), std::fabs(b1[j]), std::fabs(w2[j])});
    }
    return m;
  }

  friend bool operator==(const NetParams&, const NetParams&) = default;
};

inline double forward(const NetParams& p, double x) {
  double out = p.b2;
  for (std::size_t j = 0; j < p.k(); ++j) {
    out += p.w2[j] * relu(p.w1[j] * x + p.b1[j]);
  }
  return out;
}

// Gradient of f(x) with respect to the flattened parameters. The ReLU
// derivative at exactly zero is taken as 0.
inline Eigen::VectorXd param_gradient(const NetParams& p, double x) {
  Eigen::VectorXd g(p.dim());
  for (std::size_t j = 0; j < p.k(); ++j) {
    const double pre = p.w1[j] * x + p.b1[j];
    const bool on = pre > 0.0;
    g[p.idx_w1(j)] = on ? x * p.w2[j] : 0.0;
    g[p.idx_b1(j)] = on ? p.w2[j] : 0.0;
    g[p.idx_w2(j)] = on ? pre : 0.0;
  }
  g[p.idx_b2()] = 1.0;
  return g;
}

namespace detail {

inline void require_twice_differentiable(const NetParams& p, double x,
                                         double diff_tol, long datum) {
  for (std::size_t j = 0; j < p.k(); ++j) {
    const double pre = p.w1[j] * x + p.b1[j];
    if (std::fabs(pre) <= diff_tol) {
      throw NotTwiceDifferentiable(datum, static_cast<long>(j), pre);
    }
  }
}

}  // namespace detail

// Hessian of f(x) in the parameters. Only the (w1_j, w2_j) and (b1_j, w2_j)
// couplings survive away from the kinks.
inline Eigen::MatrixXd param_hessian(const NetParams& p, double x,
                                     double diff_tol = kDefaultDiffTol) {
  detail::require_twice_differentiable(p, x, diff_tol, -1);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p.dim(), p.dim());
  for (std::size_t j = 0; j < p.k(); ++j) {
    if (!(p.w1[j] * x + p.b1[j] > 0.0)) continue;
    h(p.idx_w1(j), p.idx_w2(j)) = x;
    h(p.idx_w2(j), p.idx_w1(j)) = x;
    h(p.idx_b1(j), p.idx_w2(j)) = 1.0;
    h(p.idx_w2(j), p.idx_b1(j)) = 1.0;
  }
  return h;
}

// Matrix-free param_hessian(p, x) * v.
inline Eigen::VectorXd hessian_vector_product(
    const NetParams& p, double x, const Eigen::Ref<const Eigen::VectorXd>& v,
    double diff_tol = kDefaultDiffTol) {
  detail::require_twice_differentiable(p, x, diff_tol, -1);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(p.dim());
  for (std::size_t j = 0; j < p.k(); ++j) {
    if (!(p.w1[j] * x + p.b1[j] > 0.0)) continue;
    const double vw2 = v[p.idx_w2(j)];
    out[p.idx_w1(j)] = x * vw2;
    out[p.idx_b1(j)] = vw2;
    out[p.idx_w2(j)] = x * v[p.idx_w1(j)] + v[p.idx_b1(j)];
  }
  return out;
}

// min_{i,j} |w1_j x_i + b1_j|; +inf when there are no points.
inline double differentiability_margin(const NetParams& p,
                                       std::span<const double> xs) {
  double m = std::numeric_limits<double>::infinity();
  for (double x : xs) {
    for (std::size_t j = 0; j < p.k(); ++j) {
      m = std::min(m, std::fabs(p.w1[j] * x + p.b1[j]));
    }
  }
  return m;
}

inline double differentiability_margin(const NetParams& p, const Dataset& d) {
  return differentiability_margin(p, std::span<const double>(d.xs));
}

// ---------------------------------------------------------------------------
// Linear-spline form.

struct Knot {
  double position = 0.0;
  double dslope = 0.0;
};

struct KnotOptions {
  double merge_tol = 1e-9;
  double zero_tol = 1e-12;
};

// f(x) = base_value + base_slope*(x - base_point) + sum_{t_j < x} d_j (x - t_j)
struct PiecewiseLinear {
  double base_point = 0.0;
  double base_value = 0.0;
  double base_slope = 0.0;
  std::vector<Knot> knots;  // strictly increasing positions

  double operator()(double x) const {
    double out = base_value + base_slope * (x - base_point);
    for (const Knot& kn : knots) {
      if (!(kn.position < x)) break;
      out += kn.dslope * (x - kn.position);
    }
    return out;
  }

  // Slope on the open piece containing x (x not at a knot).
  double slope_at(double x) const {
    double s = base_slope;
    for (const Knot& kn : knots) {
      if (!(kn.position < x)) break;
      s += kn.dslope;
    }
    return s;
  }
};

inline PiecewiseLinear extract_knots(const NetParams& p,
                                     const KnotOptions& opts = {}) {
  std::vector<Knot> raw;
  raw.reserve(p.k());
  double constant = p.b2;
  double left_slope = 0.0;
  double left_intercept = 0.0;  // intercept of the affine piece at -infinity
  for (std::size_t j = 0; j < p.k(); ++j) {
    const double w = p.w1[j];
    if (w == 0.0) {
      constant += p.w2[j] * relu(p.b1[j]);
      continue;
    }
    raw.push_back({-p.b1[j] / w, p.w2[j] * std::fabs(w)});
    if (w < 0.0) {
      // Active to the left of its knot.
      left_slope += p.w2[j] * w;
      left_intercept += p.w2[j] * p.b1[j];
    }
  }
  std::sort(raw.begin(), raw.end(),
            [](const Knot& a, const Knot& b) { return a.position < b.position; });

  PiecewiseLinear out;
  std::size_t i = 0;
  while (i < raw.size()) {
    std::size_t end = i + 1;
    double sum = raw[i].dslope;
    double pos_sum = raw[i].position;
    while (end < raw.size() &&
           raw[end].position - raw[end - 1].position <= opts.merge_tol) {
      sum += raw[end].dslope;
      pos_sum += raw[end].position;
      ++end;
    }
    if (std::fabs(sum) > opts.zero_tol) {
      const double pos = end - i == 1 ? raw[i].position
                                      : pos_sum / static_cast<double>(end - i);
      out.knots.push_back({pos, sum});
    }
    i = end;
  }
  out.base_point = out.knots.empty() ? 0.0 : out.knots.front().position;
  out.base_slope = left_slope;
  out.base_value = constant + left_intercept + left_slope * out.base_point;
  return out;
}

// ---------------------------------------------------------------------------
// Initialization.

struct InitScheme {
  enum class Kind { kUniformFanin, kUniformCustom };
  Kind kind = Kind::kUniformFanin;
  // Half-widths for kUniformCustom; w2 and b2 share a_w2.
  double a_w1 = 1.0;
  double a_b1 = 1.0;
  double a_w2 = 1.0;

  static InitScheme uniform_fanin() { return {}; }
  static InitScheme uniform_custom(double a_w1, double a_b1, double a_w2) {
    return {Kind::kUniformCustom, a_w1, a_b1, a_w2};
  }
};

// Draw order: all w1, all b1, all w2, then b2.
inline NetParams init_params(long k, const InitScheme& scheme,
                             std::uint64_t seed) {
  if (k < 1) throw Error(ErrorKind::kInvalidConfig, "k must be >= 1");
  double a_w1 = 1.0, a_b1 = 1.0;
  double a_w2 = 1.0 / std::sqrt(static_cast<double>(k));
  if (scheme.kind == InitScheme::Kind::kUniformCustom) {
    if (!(scheme.a_w1 > 0.0) || !(scheme.a_b1 > 0.0) || !(scheme.a_w2 > 0.0)) {
      throw Error(ErrorKind::kInvalidConfig, "init ranges must be positive");
    }
    a_w1 = scheme.a_w1;
    a_b1 = scheme.a_b1;
    a_w2 = scheme.a_w2;
  }
  Rng rng(seed);
  NetParams p(static_cast<std::size_t>(k));
  for (auto& w : p.w1) w = rng.uniform(-a_w1, a_w1);
  for (auto& b : p.b1) b = rng.uniform(-a_b1, a_b1);
  for (auto& w : p.w2) w = rng.uniform(-a_w2, a_w2);
  p.b2 = rng.uniform(-a_w2, a_w2);
  return p;
}

}  // namespace stablerelu
