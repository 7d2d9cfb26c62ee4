#pragma once

// Data designs, held-out metrics, sweep drivers and spline diagnostics.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "stablerelu/certificates.hpp"
#include "stablerelu/dataset.hpp"
#include "stablerelu/errors.hpp"
#include "stablerelu/funcspace.hpp"
#include "stablerelu/landscape.hpp"
#include "stablerelu/metrics.hpp"
#include "stablerelu/random.hpp"
#include "stablerelu/relu_net.hpp"
#include "stablerelu/trainer.hpp"

namespace stablerelu {

// ---------------------------------------------------------------------------
// Designs.

// n equispaced points on [-x_max, x_max]; y = hat(x) + sigma * eps with eps
// drawn in index order from Rng(seed).
inline Dataset gen_hat_dataset(long n, double sigma, std::uint64_t seed,
                               double x_max = 0.5) {
  if (n < 2) throw Error(ErrorKind::kInvalidConfig, "n must be >= 2");
  if (!(sigma >= 0.0)) throw Error(ErrorKind::kInvalidConfig, "sigma must be >= 0");
  if (!(x_max > 0.0)) throw Error(ErrorKind::kInvalidConfig, "x_max must be > 0");
  Dataset d;
  d.x_max = x_max;
  d.ground_truth = hat_ground_truth();
  d.sigma = sigma;
  d.noises.emplace();
  Rng rng(seed);
  const double step = 2.0 * x_max / static_cast<double>(n - 1);
  for (long i = 0; i < n; ++i) {
    const double x = i == n - 1 ? x_max : -x_max + static_cast<double>(i) * step;
    const double e = sigma * rng.normal();
    d.xs.push_back(x);
    d.noises->push_back(e);
    d.ys.push_back(hat_function(x) + e);
  }
  return d;
}

// x_i = 2 x_max i/(n-1) - (n+1) x_max/(n-1) for i = 1..n, labels pure noise.
inline Dataset gen_counterexample(long n, double sigma, std::uint64_t seed,
                                  double x_max) {
  if (n < 2) throw Error(ErrorKind::kInvalidConfig, "n must be >= 2");
  if (!(sigma >= 0.0)) throw Error(ErrorKind::kInvalidConfig, "sigma must be >= 0");
  if (!(x_max > 0.0)) throw Error(ErrorKind::kInvalidConfig, "x_max must be > 0");
  Dataset d;
  d.x_max = x_max;
  d.ground_truth = zero_ground_truth();
  d.sigma = sigma;
  d.noises.emplace();
  Rng rng(seed);
  const double nm1 = static_cast<double>(n - 1);
  for (long i = 1; i <= n; ++i) {
    double x = 2.0 * x_max * static_cast<double>(i) / nm1 -
               static_cast<double>(n + 1) * x_max / nm1;
    if (i == 1) x = -x_max;
    if (i == n) x = x_max;
    const double e = sigma * rng.normal();
    d.xs.push_back(x);
    d.noises->push_back(e);
    d.ys.push_back(e);
  }
  return d;
}

// First layer with one knot drawn uniformly inside every gap between
// consecutive inputs and the remaining knots uniform over the data range.
// Slopes have random sign and magnitude in [0.5, 1.5]; b1 = -w1 * t.
inline std::pair<std::vector<double>, std::vector<double>> stratified_first_layer(
    long k, std::span<const double> xs, std::uint64_t seed) {
  if (xs.size() < 2) throw Error(ErrorKind::kInvalidConfig, "need at least 2 inputs");
  if (k < static_cast<long>(xs.size()) - 1) {
    throw Error(ErrorKind::kInvalidConfig, "k must be >= n - 1 to cover every gap");
  }
  Rng rng(seed);
  std::vector<double> w1(static_cast<std::size_t>(k)), b1(static_cast<std::size_t>(k));
  for (std::size_t j = 0; j < w1.size(); ++j) {
    const double t = j + 1 < xs.size() ? rng.uniform(xs[j], xs[j + 1])
                                       : rng.uniform(xs.front(), xs.back());
    const double mag = rng.uniform(0.5, 1.5);
    const double w = rng.uniform01() < 0.5 ? -mag : mag;
    w1[j] = w;
    b1[j] = -w * t;
  }
  return {std::move(w1), std::move(b1)};
}

// ---------------------------------------------------------------------------
// Held-out error.

// |mean (f(x) - y)^2 over m fresh draws with x ~ U(interval), y = f0(x) + noise
//  - mean (f(x_i) - y_i)^2 over the training points inside the interval|.
inline double generalization_gap(const NetParams& p, const Dataset& d,
                                 const Interval& interval, std::uint64_t test_seed,
                                 long m) {
  if (!d.ground_truth) throw Error(ErrorKind::kMissingGroundTruth, "gap needs f0");
  if (!d.sigma) throw Error(ErrorKind::kMissingSigma, "gap needs sigma");
  if (m < 1) throw Error(ErrorKind::kInvalidConfig, "m must be >= 1");
  double train_err = 0.0;
  std::size_t n_in = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!interval.contains(d.xs[i])) continue;
    const double r = forward(p, d.xs[i]) - d.ys[i];
    train_err += r * r;
    ++n_in;
  }
  if (n_in == 0) throw Error(ErrorKind::kEmptyInterval, "no data inside the interval");
  train_err /= static_cast<double>(n_in);
  Rng rng(test_seed);
  double test_err = 0.0;
  for (long s = 0; s < m; ++s) {
    const double x = rng.uniform(interval.lo, interval.hi);
    const double y = (*d.ground_truth)(x) + (*d.sigma) * rng.normal();
    const double r = forward(p, x) - y;
    test_err += r * r;
  }
  test_err /= static_cast<double>(m);
  return std::fabs(test_err - train_err);
}

// ---------------------------------------------------------------------------
// Spline diagnostics.

struct SparsityRecord {
  long knot_count = 0;       // |dslope| > tol and inside the data range
  long knot_count_all = 0;   // |dslope| > tol anywhere
  double l1 = 0.0;           // sum |dslope| over knots with |dslope| > tol
  std::optional<std::array<double, 5>> quantiles;  // 10/25/50/75/90% of in-range knots
  std::optional<double> min_knot_data_distance;
};

inline double quantile_sorted(std::span<const double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline SparsityRecord sparsity_metrics(const NetParams& p, double dslope_tol,
                                       const Dataset& d) {
  const PiecewiseLinear pwl = extract_knots(p);
  SparsityRecord out;
  std::vector<double> in_range;
  double best = std::numeric_limits<double>::infinity();
  for (const Knot& kn : pwl.knots) {
    if (!(std::fabs(kn.dslope) > dslope_tol)) continue;
    ++out.knot_count_all;
    out.l1 += std::fabs(kn.dslope);
    if (kn.position >= d.x_lo() && kn.position <= d.x_hi()) in_range.push_back(kn.position);
    for (double x : d.xs) best = std::min(best, std::fabs(kn.position - x));
  }
  out.knot_count = static_cast<long>(in_range.size());
  if (!in_range.empty()) {
    std::array<double, 5> q{};
    const double levels[5] = {0.10, 0.25, 0.50, 0.75, 0.90};
    for (int i = 0; i < 5; ++i) q[static_cast<std::size_t>(i)] = quantile_sorted(in_range, levels[i]);
    out.quantiles = q;
  }
  if (std::isfinite(best)) out.min_knot_data_distance = best;
  return out;
}

struct BasisExport {
  std::vector<double> grid;
  Eigen::MatrixXd rows;  // k x m, row j is w2_j relu(w1_j x + b1_j)
};

inline BasisExport export_basis(const NetParams& p, double grid_lo, double grid_hi,
                                long m_points) {
  if (m_points < 2) throw Error(ErrorKind::kInvalidConfig, "m_points must be >= 2");
  if (!(grid_lo < grid_hi)) throw Error(ErrorKind::kInvalidConfig, "grid needs lo < hi");
  BasisExport out;
  out.grid.resize(static_cast<std::size_t>(m_points));
  const double step = (grid_hi - grid_lo) / static_cast<double>(m_points - 1);
  for (long i = 0; i < m_points; ++i) {
    out.grid[static_cast<std::size_t>(i)] =
        i == m_points - 1 ? grid_hi : grid_lo + static_cast<double>(i) * step;
  }
  out.rows.resize(static_cast<Eigen::Index>(p.k()), m_points);
  for (std::size_t j = 0; j < p.k(); ++j) {
    for (long i = 0; i < m_points; ++i) {
      out.rows(static_cast<Eigen::Index>(j), i) =
          p.w2[j] * relu(p.w1[j] * out.grid[static_cast<std::size_t>(i)] + p.b1[j]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration.

enum class Design { kHat, kCounterexample, kCustomFile };

inline const char* design_name(Design d) {
  switch (d) {
    case Design::kHat: return "hat";
    case Design::kCounterexample: return "counterexample";
    case Design::kCustomFile: return "custom-file";
  }
  return "?";
}

struct DatasetSpec {
  Design design = Design::kHat;
  long n = 30;
  double sigma = 0.5;
  double x_max = 0.5;
  std::uint64_t seed = 1;
  std::string file;          // custom-file only
  std::string ground_truth;  // custom-file only: "", "hat" or "zero"
};

// Either an explicit [lo, hi] or the longest run with g >= c.
struct IntervalSpec {
  std::optional<Interval> fixed;
  double c = 1.0 / 4320.0;
  double grid_step = 1e-3;
};

struct ExperimentConfig {
  TrainConfig train;
  DatasetSpec data;
  double delta = 0.05;
  long reps = 1;
  std::vector<double> eta_grid;
  std::vector<long> n_grid;
  IntervalSpec interval;
  // Sweep: when set, each cell runs train.max_steps * train.eta / eta steps
  // (same eta * t budget), with log_every and spectrum_every scaled alike.
  bool equal_time = false;
  // Rate experiment: eta_n = eta * (n / n_grid.front())^eta_exponent.
  double eta_exponent = 0.0;
  // Counterexample study: hidden width k = width_per_n * n.
  long width_per_n = 2;
  double dslope_tol = 1e-6;
  long basis_points = 201;
  long gap_samples = 100000;
  long workers = 0;  // 0: take the environment default

  void validate() const {
    train.validate();
    auto bad = [](const std::string& key, const std::string& why) {
      throw Error(ErrorKind::kInvalidValue, key + ": " + why);
    };
    if (data.n < 2) bad("n", "must be >= 2");
    if (!(data.sigma >= 0.0)) bad("sigma", "must be >= 0");
    if (!(data.x_max > 0.0)) bad("x_max", "must be > 0");
    if (!(delta > 0.0 && delta < 1.0)) bad("delta", "must lie in (0, 1)");
    if (reps < 1) bad("reps", "must be >= 1");
    for (double e : eta_grid) {
      if (!(e > 0.0)) bad("eta_grid", "entries must be > 0");
    }
    for (long n : n_grid) {
      if (n < 2) bad("n_grid", "entries must be >= 2");
    }
    if (interval.fixed && !(interval.fixed->lo < interval.fixed->hi)) {
      bad("interval", "needs lo < hi");
    }
    if (!(interval.c > 0.0)) bad("interval_c", "must be > 0");
    if (!(interval.grid_step > 0.0)) bad("interval_grid_step", "must be > 0");
    if (width_per_n < 1) bad("width_per_n", "must be >= 1");
    if (!(dslope_tol >= 0.0)) bad("dslope_tol", "must be >= 0");
    if (basis_points < 2) bad("basis_points", "must be >= 2");
    if (gap_samples < 1) bad("gap_samples", "must be >= 1");
    if (workers < 0) bad("workers", "must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Worker pool.

inline constexpr const char* kWorkersEnv = "STABLERELU_WORKERS";

inline long default_workers() {
  if (const char* env = std::getenv(kWorkersEnv)) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<long>(hw);
}

// Runs job(i) for i in [0, count) on up to `workers` threads. Each job
// writes only its own slot, so results do not depend on scheduling. The
// first exception (by job index) is rethrown after all jobs finish.
inline void run_jobs(std::size_t count, long workers,
                     const std::function<void(std::size_t)>& job) {
  const auto nthreads = static_cast<std::size_t>(
      std::clamp<long>(workers > 0 ? workers : default_workers(), 1,
                       static_cast<long>(std::max<std::size_t>(count, 1))));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline Dataset make_dataset(const DatasetSpec& spec, long n, std::uint64_t seed) {
  switch (spec.design) {
    case Design::kHat: return gen_hat_dataset(n, spec.sigma, seed, spec.x_max);
    case Design::kCounterexample:
      return gen_counterexample(n, spec.sigma, seed, spec.x_max);
    case Design::kCustomFile:
      break;
  }
  throw Error(ErrorKind::kInvalidConfig, "custom-file data must be loaded by the caller");
}

// ---------------------------------------------------------------------------
// Step-size sweep.

struct SweepCell {
  double eta = 0.0;
  long rep = 0;
  std::uint64_t data_seed = 0;
  std::uint64_t init_seed = 0;
  std::optional<std::string> error;  // set when the cell diverged or failed
  std::optional<TrainRecord> final_record;
  std::optional<RunSummary> summary;
  std::vector<TrainRecord> records;
};

struct SweepMedians {
  double eta = 0.0;
  long ok_cells = 0;
  double loss = 0.0;
  double mse = 0.0;
  double weighted_tv = 0.0;
  double tv_plain = 0.0;
  double knot_count = 0.0;
  double lambda_max_full = 0.0;
  double lambda_max_gn = 0.0;
};

struct SweepTable {
  std::vector<SweepCell> cells;  // eta-major, then rep
  std::vector<SweepMedians> medians;
};

inline void scale_budget(TrainConfig& tc, double factor) {
  auto scale = [factor](long v) { return std::max(1L, std::lround(static_cast<double>(v) * factor)); };
  tc.max_steps = tc.max_steps == 0 ? 0 : scale(tc.max_steps);
  tc.log_every = std::min(scale(tc.log_every), std::max(tc.max_steps, 1L));
  if (tc.spectrum_every > 0) tc.spectrum_every = scale(tc.spectrum_every);
}

// Cells for rep r share the data seed data.seed + r and the init seed
// train.seed + r across the eta grid.
inline SweepTable eta_sweep(const ExperimentConfig& cfg,
                            const std::optional<Dataset>& fixed_data = std::nullopt) {
  cfg.validate();
  if (cfg.eta_grid.empty()) throw Error(ErrorKind::kInvalidValue, "eta_grid: must be nonempty");
  SweepTable table;
  const auto reps = static_cast<std::size_t>(cfg.reps);
  table.cells.resize(cfg.eta_grid.size() * reps);
  for (std::size_t e = 0; e < cfg.eta_grid.size(); ++e) {
    for (std::size_t r = 0; r < reps; ++r) {
      SweepCell& c = table.cells[e * reps + r];
      c.eta = cfg.eta_grid[e];
      c.rep = static_cast<long>(r);
      c.data_seed = cfg.data.seed + r;
      c.init_seed = cfg.train.seed + r;
    }
  }
  run_jobs(table.cells.size(), cfg.workers, [&](std::size_t i) {
    SweepCell& c = table.cells[i];
    const Dataset d = fixed_data ? *fixed_data
                                 : make_dataset(cfg.data, cfg.data.n, c.data_seed);
    TrainConfig tc = cfg.train;
    tc.eta = c.eta;
    tc.seed = c.init_seed;
    tc.delta = cfg.delta;
    if (cfg.equal_time) scale_budget(tc, cfg.train.eta / c.eta);
    try {
      TrainResult res = train(tc, d);
      c.final_record = res.summary.final_record;
      c.records = std::move(res.records);
      c.summary = std::move(res.summary);
    } catch (const Diverged& ex) {
      c.error = ex.what();
      c.final_record = ex.last_record();
    }
  });
  for (std::size_t e = 0; e < cfg.eta_grid.size(); ++e) {
    std::vector<double> loss, mse_v, wtv, tv, knots, lf, lg;
    SweepMedians m;
    m.eta = cfg.eta_grid[e];
    for (std::size_t r = 0; r < reps; ++r) {
      const SweepCell& c = table.cells[e * reps + r];
      if (c.error || !c.final_record) continue;
      const TrainRecord& f = *c.final_record;
      ++m.ok_cells;
      loss.push_back(f.loss);
      if (f.mse) mse_v.push_back(*f.mse);
      wtv.push_back(f.weighted_tv);
      tv.push_back(f.tv_plain);
      knots.push_back(static_cast<double>(f.knot_count));
      if (f.lambda_max_full) lf.push_back(*f.lambda_max_full);
      lg.push_back(f.lambda_max_gn);
    }
    m.loss = median(loss);
    m.mse = median(mse_v);
    m.weighted_tv = median(wtv);
    m.tv_plain = median(tv);
    m.knot_count = median(knots);
    m.lambda_max_full = median(lf);
    m.lambda_max_gn = median(lg);
    table.medians.push_back(m);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Rate experiment.

struct RateCell {
  long n = 0;
  long rep = 0;
  double eta = 0.0;
  std::optional<std::string> error;
  Interval interval;
  long n_in = 0;
  double mse_interval = std::numeric_limits<double>::quiet_NaN();
  double loss = std::numeric_limits<double>::quiet_NaN();
  bool optimized_global = false;
  bool optimized_interval = false;
  bool included = false;
};

struct RateRow {
  long n = 0;
  long n_in = 0;
  long valid = 0;
  double median_mse_interval = std::numeric_limits<double>::quiet_NaN();
};

struct RateResult {
  std::optional<double> slope;  // of log median MSE_I against log n_I
  bool noiseless_control = false;
  std::vector<RateCell> cells;  // n-major, then rep
  std::vector<RateRow> rows;
};

// Least-squares slope of y on x.
inline double fit_slope(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

inline Interval resolve_interval(const IntervalSpec& spec, const Dataset& d) {
  if (spec.fixed) return *spec.fixed;
  const IntervalReport rep = select_interval(EmpiricalWeight(d), spec.c, spec.grid_step);
  return {rep.lo, rep.hi};
}

inline RateResult rate_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.n_grid.size() < 4) {
    throw Error(ErrorKind::kInvalidValue, "n_grid: needs at least 4 sizes");
  }
  RateResult out;
  out.noiseless_control = cfg.data.sigma == 0.0;
  const auto reps = static_cast<std::size_t>(cfg.reps);
  out.cells.resize(cfg.n_grid.size() * reps);
  const double n0 = static_cast<double>(cfg.n_grid.front());
  for (std::size_t a = 0; a < cfg.n_grid.size(); ++a) {
    for (std::size_t r = 0; r < reps; ++r) {
      RateCell& c = out.cells[a * reps + r];
      c.n = cfg.n_grid[a];
      c.rep = static_cast<long>(r);
      c.eta = cfg.train.eta *
              std::pow(static_cast<double>(c.n) / n0, cfg.eta_exponent);
    }
  }
  run_jobs(out.cells.size(), cfg.workers, [&](std::size_t i) {
    RateCell& c = out.cells[i];
    const Dataset d = make_dataset(cfg.data, c.n, cfg.data.seed + static_cast<std::uint64_t>(c.rep));
    c.interval = resolve_interval(cfg.interval, d);
    c.n_in = static_cast<long>(count_in(d, c.interval));
    TrainConfig tc = cfg.train;
    tc.eta = c.eta;
    tc.seed = cfg.train.seed + static_cast<std::uint64_t>(c.rep);
    tc.delta = cfg.delta;
    try {
      const TrainResult res = train(tc, d);
      c.loss = res.summary.final_record.loss;
      c.mse_interval = mse(res.params, d, c.interval);
      c.optimized_global = res.summary.optimized_vs_ground_truth.value_or(false);
      c.optimized_interval = optimized_on(res.params, d, c.interval);
      c.included = out.noiseless_control || c.optimized_interval;
    } catch (const Diverged& ex) {
      c.error = ex.what();
    }
  });
  std::vector<double> lx, ly;
  for (std::size_t a = 0; a < cfg.n_grid.size(); ++a) {
    RateRow row;
    row.n = cfg.n_grid[a];
    std::vector<double> v;
    for (std::size_t r = 0; r < reps; ++r) {
      const RateCell& c = out.cells[a * reps + r];
      row.n_in = c.n_in;
      if (c.included) v.push_back(c.mse_interval);
    }
    row.valid = static_cast<long>(v.size());
    if (!v.empty()) {
      row.median_mse_interval = median(v);
      if (row.median_mse_interval > 0.0 && row.n_in > 0) {
        lx.push_back(std::log(static_cast<double>(row.n_in)));
        ly.push_back(std::log(row.median_mse_interval));
      }
    }
    out.rows.push_back(row);
  }
  if (out.noiseless_control) return out;
  if (lx.size() < 4) {
    throw Error(ErrorKind::kInsufficientData,
                "only " + std::to_string(lx.size()) + " sizes passed the optimized check");
  }
  out.slope = fit_slope(lx, ly);
  return out;
}

// ---------------------------------------------------------------------------
// Interpolating solutions on the pure-noise design.

struct CounterexampleCell {
  long n = 0;
  long rep = 0;
  long k = 0;
  std::optional<std::string> error;
  double residual_rms = 0.0;
  double weighted_tv = 0.0;
  double tv_plain = 0.0;
  double tv_middle = 0.0;
  MiddleLowerBound lower_plain;
  MiddleLowerBound lower_weighted;
  double lambda_max_full = 0.0;
  double lambda_max_gn = 0.0;
  double gn_bound = 0.0;     // 1 + 2 weighted_tv
  double eta_ceiling = 0.0;  // 2 / lambda_max_full
  bool lower_bound_pass = false;
  bool curvature_pass = false;
  NetParams params;
};

struct CounterexampleRow {
  long n = 0;
  double median_weighted_tv = 0.0;
  double median_lambda_max = 0.0;
  double median_eta_ceiling = 0.0;
};

struct CounterexampleTable {
  std::vector<CounterexampleCell> cells;  // n-major, then rep
  std::vector<CounterexampleRow> rows;
};

inline CounterexampleTable counterexample_study(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.n_grid.empty()) throw Error(ErrorKind::kInvalidValue, "n_grid: must be nonempty");
  CounterexampleTable out;
  const auto reps = static_cast<std::size_t>(cfg.reps);
  out.cells.resize(cfg.n_grid.size() * reps);
  for (std::size_t a = 0; a < cfg.n_grid.size(); ++a) {
    for (std::size_t r = 0; r < reps; ++r) {
      CounterexampleCell& c = out.cells[a * reps + r];
      c.n = cfg.n_grid[a];
      c.rep = static_cast<long>(r);
      c.k = cfg.width_per_n * c.n;
    }
  }
  run_jobs(out.cells.size(), cfg.workers, [&](std::size_t i) {
    CounterexampleCell& c = out.cells[i];
    const auto rep = static_cast<std::uint64_t>(c.rep);
    const Dataset d = gen_counterexample(c.n, cfg.data.sigma, cfg.data.seed + rep,
                                         cfg.data.x_max);
    const auto [w1, b1] = stratified_first_layer(c.k, d.xs, cfg.train.seed + rep);
    try {
      MinNormFit fit = min_norm_interpolant(w1, b1, d, true);
      c.residual_rms = fit.residual_rms;
      c.params = std::move(fit.params);
    } catch (const Error& ex) {
      if (ex.kind() != ErrorKind::kNotInterpolating) throw;
      c.error = ex.what();
      return;
    }
    const PiecewiseLinear pwl = extract_knots(c.params);
    const EmpiricalWeight g(d);
    c.weighted_tv = weighted_tv(pwl, g);
    c.tv_plain = tv_on_interval(pwl, -d.x_max, d.x_max);
    c.lower_plain = interpolant_tv_lower_bound(d, LowerBoundMode::kPlainMiddle);
    c.lower_weighted = interpolant_tv_lower_bound(d, LowerBoundMode::kWeightedMiddle);
    c.tv_middle = tv_on_interval(pwl, c.lower_plain.lo, c.lower_plain.hi);
    c.lower_bound_pass = c.tv_middle - c.lower_plain.bound >= -kCertificateSlack &&
                         c.weighted_tv - c.lower_weighted.bound >= -kCertificateSlack;
    const SpectrumReport s = spectrum_report(c.params, d);
    c.lambda_max_full = s.lambda_max_full;
    c.lambda_max_gn = s.lambda_max_gn;
    c.gn_bound = 1.0 + 2.0 * c.weighted_tv;
    c.eta_ceiling = 2.0 / c.lambda_max_full;
    c.curvature_pass = c.lambda_max_full - c.gn_bound >= -kCertificateSlack;
  });
  for (std::size_t a = 0; a < cfg.n_grid.size(); ++a) {
    std::vector<double> wtv, lam, ceil;
    for (std::size_t r = 0; r < reps; ++r) {
      const CounterexampleCell& c = out.cells[a * reps + r];
      if (c.error) continue;
      wtv.push_back(c.weighted_tv);
      lam.push_back(c.lambda_max_full);
      ceil.push_back(c.eta_ceiling);
    }
    out.rows.push_back({cfg.n_grid[a], median(wtv), median(lam), median(ceil)});
  }
  return out;
}

}  // namespace stablerelu
