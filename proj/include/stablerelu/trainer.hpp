#pragma once

// Full-batch gradient descent theta <- theta - eta * grad L(theta), with
// periodic metric records and the second-layer min-norm baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stablerelu/certificates.hpp"
#include "stablerelu/dataset.hpp"
#include "stablerelu/errors.hpp"
#include "stablerelu/funcspace.hpp"
#include "stablerelu/landscape.hpp"
#include "stablerelu/metrics.hpp"
#include "stablerelu/relu_net.hpp"

namespace stablerelu {

struct TrainConfig {
  long k = 100;
  double eta = 0.1;
  long max_steps = 200000;
  long log_every = 100;
  // Full-Hessian lambda_max is evaluated on logged steps that are multiples
  // of this (and always on the final step). 0 means every logged step.
  long spectrum_every = 0;
  std::uint64_t seed = 0;
  InitScheme init;
  double stop_grad_norm = 0.0;
  long steady_window = 20;
  double steady_rel_tol = 0.05;
  double beos_eps = 0.25;
  double diff_tol = kDefaultDiffTol;
  double delta = 0.05;

  void validate() const {
    auto bad = [](const std::string& key, const std::string& why) {
      throw Error(ErrorKind::kInvalidValue, key + ": " + why);
    };
    if (k < 1) bad("k", "must be >= 1");
    if (!(eta > 0.0) || !std::isfinite(eta)) bad("eta", "must be > 0");
    if (max_steps < 0) bad("max_steps", "must be >= 0");
    if (log_every < 1) bad("log_every", "must be >= 1");
    if (log_every > std::max(max_steps, 1L)) bad("log_every", "must be <= max_steps");
    if (spectrum_every < 0) bad("spectrum_every", "must be >= 0");
    if (!(stop_grad_norm >= 0.0)) bad("stop_grad_norm", "must be >= 0");
    if (steady_window < 2) bad("steady_window", "must be >= 2");
    if (!(steady_rel_tol > 0.0)) bad("steady_rel_tol", "must be > 0");
    if (!(beos_eps >= 0.0)) bad("beos_eps", "must be >= 0");
    if (!(diff_tol > 0.0)) bad("diff_tol", "must be > 0");
    if (!(delta > 0.0 && delta < 1.0)) bad("delta", "must lie in (0, 1)");
  }
};

struct TrainRecord {
  long step = 0;
  double loss = 0.0;
  std::optional<double> mse;
  double grad_norm = 0.0;
  std::optional<double> lambda_max_full;
  double lambda_max_gn = 0.0;
  double weighted_tv = 0.0;
  double tv_plain = 0.0;
  long knot_count = 0;  // knots within the data range
  double diff_margin = 0.0;
};

class Diverged : public Error {
 public:
  Diverged(long step, std::optional<TrainRecord> last)
      : Error(ErrorKind::kDiverged,
              "non-finite parameters or loss at step " + std::to_string(step)),
        step_(step),
        last_(std::move(last)) {}

  long step() const noexcept { return step_; }
  const std::optional<TrainRecord>& last_record() const noexcept { return last_; }

 private:
  long step_;
  std::optional<TrainRecord> last_;
};

struct RunSummary {
  TrainConfig config;
  NetParams final_params;
  TrainRecord final_record;
  double param_inf_norm = 0.0;
  std::optional<bool> stable;  // unset when the final iterate sits on a kink
  std::optional<long> beos_step;
  std::optional<long> steady_step;
  bool optimized = false;
  std::optional<bool> optimized_vs_ground_truth;
  std::optional<bool> optimized_vs_sigma;
  std::optional<CertificateReport> certificates;
};

struct TrainResult {
  NetParams params;
  std::vector<TrainRecord> records;
  RunSummary summary;
};

inline NetParams gd_step(const NetParams& p, const Dataset& d, double eta) {
  Eigen::VectorXd g;
  loss_and_gradient(p, d, g);
  NetParams out = NetParams::unflatten(p.flatten() - eta * g);
  if (!out.all_finite()) throw Diverged(1, std::nullopt);
  return out;
}

namespace detail {

inline void apply_step(NetParams& p, const Eigen::VectorXd& g, double eta) {
  const std::size_t k = p.k();
  for (std::size_t j = 0; j < k; ++j) {
    p.w1[j] -= eta * g[static_cast<Eigen::Index>(j)];
    p.b1[j] -= eta * g[static_cast<Eigen::Index>(k + j)];
    p.w2[j] -= eta * g[static_cast<Eigen::Index>(2 * k + j)];
  }
  p.b2 -= eta * g[static_cast<Eigen::Index>(3 * k)];
}

}  // namespace detail

inline TrainRecord make_record(const NetParams& p, const Dataset& d,
                               const EmpiricalWeight& g, long step,
                               double loss_value, double grad_norm,
                               bool with_full, double diff_tol) {
  TrainRecord r;
  r.step = step;
  r.loss = loss_value;
  r.grad_norm = grad_norm;
  if (d.ground_truth) r.mse = mse(p, d);
  const PiecewiseLinear pwl = extract_knots(p);
  r.weighted_tv = weighted_tv(pwl, g);
  r.tv_plain = tv_on_interval(pwl, -d.x_max, d.x_max);
  r.knot_count = static_cast<long>(knots_in_range(pwl, d.x_lo(), d.x_hi()));
  r.diff_margin = differentiability_margin(p, d);
  if (with_full && r.diff_margin > diff_tol) {
    SpectrumOptions so;
    so.diff_tol = diff_tol;
    const SpectrumReport s = spectrum_report(p, d, so);
    r.lambda_max_full = s.lambda_max_full;
    r.lambda_max_gn = s.lambda_max_gn;
  } else {
    r.lambda_max_gn = gauss_newton_lambda_max(p, d);
  }
  return r;
}

// Earliest logged step from which every trailing window of `window` records
// has (max - min) of both loss and lambda_max_gn within rel_tol times the
// largest magnitude of that trace.
inline std::optional<long> detect_steady_state(std::span<const TrainRecord> records,
                                               long window, double rel_tol) {
  if (window < 2) throw Error(ErrorKind::kInvalidConfig, "window must be >= 2");
  const auto w = static_cast<std::size_t>(window);
  if (records.size() < w) return std::nullopt;
  double scale_loss = 0.0, scale_gn = 0.0;
  for (const auto& r : records) {
    scale_loss = std::max(scale_loss, std::fabs(r.loss));
    scale_gn = std::max(scale_gn, std::fabs(r.lambda_max_gn));
  }
  auto flat = [&](std::size_t s, auto field, double scale) {
    double lo = field(records[s]), hi = lo;
    for (std::size_t i = s + 1; i < s + w; ++i) {
      lo = std::min(lo, field(records[i]));
      hi = std::max(hi, field(records[i]));
    }
    return hi - lo <= rel_tol * scale;
  };
  std::optional<long> first;
  for (std::size_t s = records.size() - w + 1; s-- > 0;) {
    const bool ok =
        flat(s, [](const TrainRecord& r) { return r.loss; }, scale_loss) &&
        flat(s, [](const TrainRecord& r) { return r.lambda_max_gn; }, scale_gn);
    if (!ok) break;
    first = records[s].step;
  }
  return first;
}

enum class OptimizedMode { kVsGroundTruth, kVsSigma };

inline bool check_optimized(const NetParams& p, const Dataset& d, OptimizedMode mode) {
  if (mode == OptimizedMode::kVsGroundTruth) {
    if (!d.ground_truth) {
      throw Error(ErrorKind::kMissingGroundTruth, "optimized check needs f0");
    }
    return loss(p, d) <= ground_truth_loss(d);
  }
  if (!d.sigma) throw Error(ErrorKind::kMissingSigma, "optimized check needs sigma");
  return loss(p, d) <= (*d.sigma) * (*d.sigma) / 2.0;
}

inline TrainResult train(const TrainConfig& cfg, const Dataset& d,
                         std::optional<NetParams> start = std::nullopt) {
  cfg.validate();
  d.validate();
  NetParams p = start ? std::move(*start) : init_params(cfg.k, cfg.init, cfg.seed);
  p.validate();
  const EmpiricalWeight g(d);
  TrainResult out;
  out.records.reserve(static_cast<std::size_t>(cfg.max_steps / cfg.log_every) + 2);
  Eigen::VectorXd grad;
  for (long step = 0;; ++step) {
    const double l = loss_and_gradient(p, d, grad);
    const double gn = grad.norm();
    if (!std::isfinite(l) || !std::isfinite(gn)) {
      throw Diverged(step, out.records.empty()
                               ? std::nullopt
                               : std::optional<TrainRecord>(out.records.back()));
    }
    const bool last = step >= cfg.max_steps ||
                      (cfg.stop_grad_norm > 0.0 && gn < cfg.stop_grad_norm);
    if (last || step % cfg.log_every == 0) {
      const bool full = last || cfg.spectrum_every == 0 || step % cfg.spectrum_every == 0;
      out.records.push_back(make_record(p, d, g, step, l, gn, full, cfg.diff_tol));
    }
    if (last) break;
    detail::apply_step(p, grad, cfg.eta);
    if (!p.all_finite()) throw Diverged(step + 1, out.records.back());
  }

  RunSummary& s = out.summary;
  s.config = cfg;
  s.final_params = p;
  s.final_record = out.records.back();
  s.param_inf_norm = p.inf_norm();
  if (s.final_record.lambda_max_full) {
    s.stable = is_stable_value(*s.final_record.lambda_max_full, cfg.eta);
  }
  std::vector<double> trace;
  std::vector<long> trace_steps;
  for (const auto& r : out.records) {
    if (!r.lambda_max_full) continue;
    trace.push_back(*r.lambda_max_full);
    trace_steps.push_back(r.step);
  }
  if (auto idx = beos_first_index(trace, cfg.eta, cfg.beos_eps)) {
    s.beos_step = trace_steps[*idx];
  }
  s.steady_step = detect_steady_state(out.records, cfg.steady_window, cfg.steady_rel_tol);
  if (d.ground_truth) {
    s.optimized_vs_ground_truth = check_optimized(p, d, OptimizedMode::kVsGroundTruth);
  }
  if (d.sigma) s.optimized_vs_sigma = check_optimized(p, d, OptimizedMode::kVsSigma);
  s.optimized = s.optimized_vs_ground_truth.value_or(s.optimized_vs_sigma.value_or(false));
  if (s.final_record.diff_margin > cfg.diff_tol) {
    VerifyOptions vo;
    vo.spectrum.diff_tol = cfg.diff_tol;
    s.certificates = verify_bounds(p, d, cfg.eta, cfg.delta, vo);
    if (s.beos_step) s.certificates->beos_index = *s.beos_step;
  }
  out.params = std::move(p);
  return out;
}

// ---------------------------------------------------------------------------
// Second-layer-only baseline.

inline constexpr double kInterpTol = 1e-8;

struct MinNormFit {
  NetParams params;
  double residual_rms = 0.0;
};

// Freezes (w1, b1), then solves for the minimum-norm least-squares (w2, b2)
// over the features relu(w1_j x + b1_j) and a constant column.
inline MinNormFit min_norm_interpolant(std::span<const double> w1,
                                       std::span<const double> b1,
                                       const Dataset& d, bool strict = false,
                                       double interp_tol = kInterpTol) {
  if (w1.size() != b1.size() || w1.empty()) {
    throw Error(ErrorKind::kInvalidConfig, "first layer needs matching nonempty w1, b1");
  }
  const auto n = static_cast<Eigen::Index>(d.size());
  const auto k = static_cast<Eigen::Index>(w1.size());
  Eigen::MatrixXd phi(n, k + 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = d.xs[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < k; ++j) {
      phi(i, j) = relu(w1[static_cast<std::size_t>(j)] * x + b1[static_cast<std::size_t>(j)]);
    }
    phi(i, k) = 1.0;
    y[i] = d.ys[static_cast<std::size_t>(i)];
  }
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(phi);
  const Eigen::VectorXd sol = cod.solve(y);

  MinNormFit fit;
  fit.params = NetParams(static_cast<std::size_t>(k));
  fit.params.w1.assign(w1.begin(), w1.end());
  fit.params.b1.assign(b1.begin(), b1.end());
  for (Eigen::Index j = 0; j < k; ++j) fit.params.w2[static_cast<std::size_t>(j)] = sol[j];
  fit.params.b2 = sol[k];
  fit.residual_rms = (phi * sol - y).norm() / std::sqrt(static_cast<double>(n));
  if (strict && fit.residual_rms > interp_tol) {
    throw Error(ErrorKind::kNotInterpolating,
                "residual RMS " + std::to_string(fit.residual_rms) + " exceeds " +
                    std::to_string(interp_tol));
  }
  return fit;
}

}  // namespace stablerelu
