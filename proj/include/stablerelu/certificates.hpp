#pragma once

// Numeric certificates for the curvature/complexity inequalities at a single
// parameter. Each check records lhs <= rhs with slack = rhs - lhs.
// Hard checks are deterministic consequences of the analysis and must pass
// at every admissible parameter; soft checks are verdicts or
// high-probability statements and are reported only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stablerelu/dataset.hpp"
#include "stablerelu/funcspace.hpp"
#include "stablerelu/landscape.hpp"
#include "stablerelu/metrics.hpp"
#include "stablerelu/random.hpp"
#include "stablerelu/relu_net.hpp"

namespace stablerelu {

inline constexpr double kCertificateSlack = 1e-8;

struct Certificate {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  bool pass = false;
  bool hard = false;
};

inline Certificate make_certificate(std::string name, double lhs, double rhs,
                                    bool hard) {
  Certificate c{std::move(name), lhs, rhs, rhs - lhs, false, hard};
  c.pass = c.slack >= -kCertificateSlack;
  return c;
}

struct CertificateReport {
  std::vector<Certificate> checks;
  double eta = 0.0;
  double delta = 0.05;
  bool stable = false;
  std::optional<long> beos_index;
  std::optional<bool> optimized_vs_ground_truth;
  std::optional<bool> optimized_vs_sigma;
  std::optional<bool> optimized_on_interval;

  bool hard_pass() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const Certificate& c) { return !c.hard || c.pass; });
  }

  const Certificate* find(const std::string& name) const {
    for (const auto& c : checks) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }
};

// max over sampled unit v and data x_i of |v^T hess f(x_i) v|.
inline double sampled_hessian_quadform(const NetParams& p, const Dataset& d,
                                       int samples, std::uint64_t seed,
                                       const Eigen::VectorXd* extra = nullptr,
                                       double diff_tol = kDefaultDiffTol) {
  Rng rng(seed);
  std::vector<Eigen::VectorXd> dirs;
  dirs.reserve(static_cast<std::size_t>(samples) + 1);
  for (int s = 0; s < samples; ++s) {
    Eigen::VectorXd v(p.dim());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
    dirs.push_back(v.normalized());
  }
  if (extra != nullptr && extra->norm() > 0.0) dirs.push_back(extra->normalized());
  double worst = 0.0;
  for (double x : d.xs) {
    for (const auto& v : dirs) {
      worst = std::max(worst, std::fabs(v.dot(hessian_vector_product(p, x, v, diff_tol))));
    }
  }
  return worst;
}

struct VerifyOptions {
  SpectrumOptions spectrum;
  int op_norm_samples = 64;
  std::uint64_t op_norm_seed = 7;
  std::optional<Interval> interval;  // enables the interval-optimized check
};

inline CertificateReport verify_bounds(const NetParams& p, const Dataset& d,
                                       double eta, double delta,
                                       const VerifyOptions& opts = {}) {
  const SpectrumReport spec = spectrum_report(p, d, opts.spectrum);
  const double train_loss = loss(p, d);
  const EmpiricalWeight g(d);
  const PiecewiseLinear pwl = extract_knots(p);
  const double wtv = weighted_tv(pwl, g);
  const double m = bound_scale(d.x_max);

  CertificateReport rep;
  rep.eta = eta;
  rep.delta = delta;
  rep.stable = is_stable_value(spec.lambda_max_full, eta);

  rep.checks.push_back(make_certificate(
      "tv_bound_lambda", wtv,
      stability_tv_bound(Curvature::from_lambda(spec.lambda_max_full), train_loss,
                         d.x_max),
      true));
  rep.checks.push_back(make_certificate(
      "tv_bound_eta", wtv,
      stability_tv_bound(Curvature::from_eta(eta), train_loss, d.x_max), false));
  rep.checks.push_back(
      make_certificate("gn_lower_bound", 1.0 + 2.0 * wtv, spec.lambda_max_gn, true));
  rep.checks.push_back(make_certificate(
      "rayleigh_sandwich", spec.lambda_max_gn + spec.residual_quadform,
      spec.lambda_max_full, true));
  rep.checks.push_back(make_certificate(
      "hessian_op_norm",
      sampled_hessian_quadform(p, d, opts.op_norm_samples, opts.op_norm_seed,
                               &spec.top_eigvec, opts.spectrum.diff_tol),
      2.0 * m, true));
  rep.checks.push_back(
      make_certificate("stability", spec.lambda_max_full, 2.0 / eta, false));

  if (d.ground_truth) {
    const double mse_value = mse(p, d);
    if (d.sigma) {
      rep.checks.push_back(make_certificate(
          "noisy_tv_bound_lambda", wtv,
          noisy_tv_bound(Curvature::from_lambda(spec.lambda_max_full), mse_value,
                         *d.sigma, d.x_max, static_cast<long>(p.k()),
                         static_cast<long>(d.size()), delta),
          false));
      rep.checks.push_back(make_certificate(
          "noisy_tv_bound_eta", wtv,
          noisy_tv_bound(Curvature::from_eta(eta), mse_value, *d.sigma, d.x_max,
                         static_cast<long>(p.k()), static_cast<long>(d.size()),
                         delta),
          false));
    }
    rep.optimized_vs_ground_truth = train_loss <= ground_truth_loss(d);
    if (opts.interval) rep.optimized_on_interval = optimized_on(p, d, *opts.interval);
  }
  if (d.sigma) rep.optimized_vs_sigma = train_loss <= (*d.sigma) * (*d.sigma) / 2.0;
  return rep;
}

}  // namespace stablerelu
