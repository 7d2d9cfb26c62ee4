#pragma once

// Subcommand dispatch and artifact writing.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "stablerelu/cli/config.hpp"
#include "stablerelu/experiments.hpp"
#include "stablerelu/io/csv.hpp"
#include "stablerelu/io/json_io.hpp"
#include "stablerelu/io/svg.hpp"

namespace stablerelu::cli {

struct CliConfig {
  std::string subcommand;
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  bool plot = false;
};

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s{"train", "sweep", "rate", "counterexample",
                                          "interpolate", "verify", "basis", "report"};
  return s;
}

// Exit statuses: 0 success, 1 a hard certificate failed, 2 usage, 3
// unexpected failure, 10 + ErrorKind for each error family.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCertificate = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInternal = 3;

inline int exit_code(ErrorKind kind) { return 10 + static_cast<int>(kind); }

namespace detail {

using io::Json;

inline std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline Dataset load_data(const RunConfig& c) {
  const auto& spec = c.exp.data;
  if (spec.design != Design::kCustomFile) return make_dataset(spec, spec.n, spec.seed);
  Dataset d = io::load_dataset_csv(spec.file, std::nullopt);
  d.x_max = std::max(d.x_max, spec.x_max);
  if (!spec.ground_truth.empty()) d.ground_truth = ground_truth_by_name(spec.ground_truth);
  d.sigma = spec.sigma;
  d.validate();
  return d;
}

inline Json certificate_json_or_null(const std::optional<CertificateReport>& r) {
  return r ? io::to_json(*r) : Json(nullptr);
}

inline std::vector<double> grid(double lo, double hi, int m) {
  std::vector<double> g(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) g[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (m - 1);
  return g;
}

inline void plot_fit(const std::string& path, const NetParams& p, const Dataset& d,
                     const std::string& title) {
  const auto xs = grid(-d.x_max, d.x_max, 401);
  std::vector<io::Series> s;
  io::Series data{"data", d.xs, d.ys, io::palette(7), true, false};
  s.push_back(data);
  if (d.ground_truth) {
    std::vector<double> y;
    for (double x : xs) y.push_back((*d.ground_truth)(x));
    s.push_back({"ground truth", xs, y, io::palette(2), false, true, true});
  }
  std::vector<double> y;
  for (double x : xs) y.push_back(forward(p, x));
  s.push_back({"network", xs, y, io::palette(0)});
  io::save_svg(path, {title, "x", "f(x)"}, s);
}

inline void plot_learning_curves(const std::string& path, const std::vector<TrainRecord>& recs,
                                 const Dataset& d) {
  std::vector<double> step, loss, mse_v, mse_steps;
  for (const auto& r : recs) {
    step.push_back(static_cast<double>(std::max(r.step, 1L)));
    loss.push_back(r.loss);
    if (r.mse) {
      mse_steps.push_back(static_cast<double>(std::max(r.step, 1L)));
      mse_v.push_back(*r.mse);
    }
  }
  std::vector<io::Series> s{{"training loss", step, loss, io::palette(0)}};
  if (!mse_v.empty()) s.push_back({"MSE vs ground truth", mse_steps, mse_v, io::palette(1)});
  if (d.sigma && *d.sigma > 0.0 && !step.empty()) {
    const double s2 = (*d.sigma) * (*d.sigma);
    s.push_back({"sigma^2", {step.front(), step.back()}, {s2, s2}, io::palette(7), false, true, true});
    s.push_back({"sigma^2 / 2", {step.front(), step.back()}, {s2 / 2, s2 / 2}, io::palette(3), false, true, true});
  }
  io::save_svg(path, {"Learning curves", "step", "value", true, true}, s);
}

inline void plot_sharpness(const std::string& path, const std::vector<TrainRecord>& recs,
                           double eta) {
  std::vector<double> step, full, gn, gstep;
  for (const auto& r : recs) {
    gstep.push_back(static_cast<double>(r.step));
    gn.push_back(r.lambda_max_gn);
    if (r.lambda_max_full) {
      step.push_back(static_cast<double>(r.step));
      full.push_back(*r.lambda_max_full);
    }
  }
  std::vector<io::Series> s{{"lambda_max (full)", step, full, io::palette(0)},
                            {"lambda_max (Gauss-Newton)", gstep, gn, io::palette(2)}};
  if (!gstep.empty()) {
    s.push_back({"2/eta", {gstep.front(), gstep.back()}, {2 / eta, 2 / eta}, io::palette(1), false, true, true});
  }
  io::save_svg(path, {"Sharpness", "step", "lambda_max"}, s);
}

inline void plot_basis(const std::string& path, const NetParams& p, double lo, double hi,
                       long m) {
  const BasisExport b = export_basis(p, lo, hi, m);
  std::vector<io::Series> s;
  for (Eigen::Index j = 0; j < b.rows.rows(); ++j) {
    std::vector<double> y(b.grid.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = b.rows(j, static_cast<Eigen::Index>(i));
    if (std::all_of(y.begin(), y.end(), [](double v) { return v == 0.0; })) continue;
    s.push_back({"", b.grid, y, io::palette(static_cast<std::size_t>(j))});
  }
  io::save_svg(path, {"Learned basis functions", "x", "w2_j relu(w1_j x + b1_j)"}, s);
}

inline void write_basis_csv(const std::string& path, const NetParams& p, double lo, double hi,
                            long m) {
  const BasisExport b = export_basis(p, lo, hi, m);
  std::vector<std::string> header{"x"};
  for (std::size_t j = 0; j < p.k(); ++j) header.push_back("neuron_" + std::to_string(j));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kMissingFile, "cannot write " + path);
  for (std::size_t j = 0; j < header.size(); ++j) f << (j ? "," : "") << header[j];
  f << '\n';
  for (std::size_t i = 0; i < b.grid.size(); ++i) {
    f << io::fmt_double(b.grid[i]);
    for (Eigen::Index j = 0; j < b.rows.rows(); ++j) {
      f << ',' << io::fmt_double(b.rows(j, static_cast<Eigen::Index>(i)));
    }
    f << '\n';
  }
}

inline Json sparsity_json(const SparsityRecord& s) {
  Json q = nullptr;
  if (s.quantiles) q = Json(std::vector<double>(s.quantiles->begin(), s.quantiles->end()));
  return Json{{"knot_count", s.knot_count},
              {"knot_count_all", s.knot_count_all},
              {"l1", s.l1},
              {"quantiles_10_25_50_75_90", q},
              {"min_knot_data_distance", io::opt(s.min_knot_data_distance)}};
}

inline std::optional<Interval> try_interval(const RunConfig& c, const Dataset& d) {
  try {
    return resolve_interval(c.exp.interval, d);
  } catch (const Error& ex) {
    if (ex.kind() != ErrorKind::kNoInterval) throw;
    return std::nullopt;
  }
}

inline int run_train(const RunConfig& c, const CliConfig& cli, std::ostream& log) {
  const Dataset d = load_data(c);
  TrainConfig tc = c.exp.train;
  tc.delta = c.exp.delta;
  TrainResult res = train(tc, d);
  const std::optional<Interval> iv = try_interval(c, d);
  if (res.summary.certificates && iv && d.ground_truth) {
    res.summary.certificates->optimized_on_interval = optimized_on(res.params, d, *iv);
  }
  io::records_csv(res.records).save(join_path(cli.out_dir, "records.csv"));
  Json summary = io::to_json(res.summary);
  if (iv) {
    summary["interval"] = Json{{"lo", iv->lo}, {"hi", iv->hi}, {"n_in", count_in(d, *iv)}};
    if (d.ground_truth) summary["mse_interval"] = mse(res.params, d, *iv);
  }
  summary["sparsity"] = sparsity_json(sparsity_metrics(res.params, c.exp.dslope_tol, d));
  io::write_json(join_path(cli.out_dir, "summary.json"), summary);
  io::write_json(join_path(cli.out_dir, "params.json"), io::to_json(res.params));
  io::write_json(join_path(cli.out_dir, "certificates.json"),
                 certificate_json_or_null(res.summary.certificates));
  io::weight_profile_csv(EmpiricalWeight(d), 1001).save(join_path(cli.out_dir, "weight.csv"));
  if (cli.plot) {
    plot_fit(join_path(cli.out_dir, "fit.svg"), res.params, d, "Fit at eta = " + io::fmt_shortest(tc.eta));
    plot_learning_curves(join_path(cli.out_dir, "learning_curves.svg"), res.records, d);
    plot_sharpness(join_path(cli.out_dir, "sharpness.svg"), res.records, tc.eta);
    plot_basis(join_path(cli.out_dir, "basis.svg"), res.params, -d.x_max, d.x_max, c.exp.basis_points);
  }
  const TrainRecord& f = res.summary.final_record;
  log << "final step " << f.step << " loss " << io::fmt_shortest(f.loss) << " weighted_tv "
      << io::fmt_shortest(f.weighted_tv);
  if (f.lambda_max_full) log << " lambda_max " << io::fmt_shortest(*f.lambda_max_full);
  log << " (2/eta = " << io::fmt_shortest(2.0 / tc.eta) << ")\n";
  if (res.summary.certificates && !res.summary.certificates->hard_pass()) {
    log << "hard certificate failed\n";
    return kExitCertificate;
  }
  return kExitOk;
}

inline double slack_of(const std::optional<RunSummary>& s, const char* name) {
  if (!s || !s->certificates) return std::nan("");
  const Certificate* c = s->certificates->find(name);
  return c ? c->slack : std::nan("");
}

inline int run_sweep(const RunConfig& c, const CliConfig& cli, std::ostream& log) {
  ExperimentConfig e = c.exp;
  if (e.eta_grid.empty()) e.eta_grid = {e.train.eta};
  std::optional<Dataset> fixed;
  if (e.data.design == Design::kCustomFile) fixed = load_data(c);
  const SweepTable t = eta_sweep(e, fixed);
  io::CsvWriter cells({"eta", "rep", "data_seed", "init_seed", "status", "loss", "mse",
                       "grad_norm", "lambda_max_full", "lambda_max_gn", "weighted_tv",
                       "tv_plain", "knot_count", "diff_margin", "tv_bound_rhs", "tv_bound_slack",
                       "gn_bound_slack", "sandwich_slack", "op_norm_slack", "noisy_tv_slack",
                       "stable", "optimized"});
  Json certs = Json::array();
  bool hard_ok = true;
  for (const auto& cell : t.cells) {
    const std::optional<TrainRecord>& f = cell.final_record;
    std::optional<double> tv_bound_rhs;
    if (cell.summary && cell.summary->certificates) {
      if (const Certificate* q = cell.summary->certificates->find("tv_bound_lambda")) tv_bound_rhs = q->rhs;
      hard_ok = hard_ok && cell.summary->certificates->hard_pass();
    }
    auto field = [&](auto get) -> std::optional<double> {
      if (!f) return std::nullopt;
      return get(*f);
    };
    cells.row(cell.eta, cell.rep, cell.data_seed, cell.init_seed,
              std::string(cell.error ? "diverged" : "ok"),
              field([](const TrainRecord& r) { return std::optional<double>(r.loss); }),
              field([](const TrainRecord& r) { return r.mse; }),
              field([](const TrainRecord& r) { return std::optional<double>(r.grad_norm); }),
              field([](const TrainRecord& r) { return r.lambda_max_full; }),
              field([](const TrainRecord& r) { return std::optional<double>(r.lambda_max_gn); }),
              field([](const TrainRecord& r) { return std::optional<double>(r.weighted_tv); }),
              field([](const TrainRecord& r) { return std::optional<double>(r.tv_plain); }),
              f ? std::optional<long>(f->knot_count) : std::nullopt,
              field([](const TrainRecord& r) { return std::optional<double>(r.diff_margin); }),
              tv_bound_rhs, slack_of(cell.summary, "tv_bound_lambda"), slack_of(cell.summary, "gn_lower_bound"),
              slack_of(cell.summary, "rayleigh_sandwich"), slack_of(cell.summary, "hessian_op_norm"),
              slack_of(cell.summary, "noisy_tv_bound_lambda"),
              cell.summary && cell.summary->stable ? std::optional<bool>(*cell.summary->stable)
                                                   : std::nullopt,
              cell.summary ? std::optional<bool>(cell.summary->optimized) : std::nullopt);
    certs.push_back(Json{{"eta", cell.eta},
                         {"rep", cell.rep},
                         {"error", io::opt(cell.error)},
                         {"certificates", cell.summary ? certificate_json_or_null(cell.summary->certificates)
                                                       : Json(nullptr)}});
  }
  cells.save(join_path(cli.out_dir, "sweep.csv"));
  io::CsvWriter med({"eta", "ok_cells", "loss", "mse", "weighted_tv", "tv_plain", "knot_count",
                     "lambda_max_full", "lambda_max_gn"});
  for (const auto& m : t.medians) {
    med.row(m.eta, m.ok_cells, m.loss, m.mse, m.weighted_tv, m.tv_plain, m.knot_count,
            m.lambda_max_full, m.lambda_max_gn);
  }
  med.save(join_path(cli.out_dir, "medians.csv"));
  io::write_json(join_path(cli.out_dir, "certificates.json"), certs);
  io::write_json(join_path(cli.out_dir, "summary.json"),
                 Json{{"cells", t.cells.size()}, {"hard_pass", hard_ok}});
  if (cli.plot) {
    std::vector<double> inv, mse_v, wtv;
    for (const auto& m : t.medians) {
      inv.push_back(1.0 / m.eta);
      mse_v.push_back(m.mse);
      wtv.push_back(m.weighted_tv);
    }
    io::save_svg(join_path(cli.out_dir, "sweep_mse.svg"),
                 {"Median MSE against 1/eta", "1/eta", "MSE", true, false},
                 {{"median MSE", inv, mse_v, io::palette(0), true}});
    io::save_svg(join_path(cli.out_dir, "sweep_tv.svg"),
                 {"Median weighted TV against 1/eta", "1/eta", "weighted TV", true, false},
                 {{"median weighted TV", inv, wtv, io::palette(1), true}});
  }
  log << t.cells.size() << " cells\n";
  return hard_ok ? kExitOk : kExitCertificate;
}

inline int run_rate(const RunConfig& c, const CliConfig& cli, std::ostream& log) {
  const RateResult r = rate_experiment(c.exp);
  io::CsvWriter cells({"n", "rep", "eta", "status", "lo", "hi", "n_in", "mse_interval", "loss",
                       "optimized_global", "optimized_interval", "included"});
  for (const auto& x : r.cells) {
    cells.row(x.n, x.rep, x.eta, std::string(x.error ? "diverged" : "ok"), x.interval.lo,
              x.interval.hi, x.n_in, x.mse_interval, x.loss, x.optimized_global,
              x.optimized_interval, x.included);
  }
  cells.save(join_path(cli.out_dir, "rate.csv"));
  io::CsvWriter med({"n", "n_in", "valid", "median_mse_interval"});
  for (const auto& row : r.rows) med.row(row.n, row.n_in, row.valid, row.median_mse_interval);
  med.save(join_path(cli.out_dir, "medians.csv"));
  io::write_json(join_path(cli.out_dir, "summary.json"),
                 Json{{"slope", io::opt(r.slope)}, {"noiseless_control", r.noiseless_control}});
  if (cli.plot) {
    std::vector<double> x, y;
    for (const auto& row : r.rows) {
      x.push_back(static_cast<double>(row.n_in));
      y.push_back(row.median_mse_interval);
    }
    io::save_svg(join_path(cli.out_dir, "rate.svg"),
                 {"Median interval MSE against n_I", "n_I", "MSE_I", true, true},
                 {{"median MSE_I", x, y, io::palette(0), true}});
  }
  if (r.slope) log << "slope " << io::fmt_shortest(*r.slope) << "\n";
  return kExitOk;
}

inline int run_counterexample(const RunConfig& c, const CliConfig& cli, std::ostream& log) {
  ExperimentConfig e = c.exp;
  if (e.n_grid.empty()) e.n_grid = {e.data.n};
  const CounterexampleTable t = counterexample_study(e);
  io::CsvWriter cells({"n", "rep", "k", "status", "residual_rms", "weighted_tv", "tv_plain",
                       "tv_middle", "lower_bound_plain", "lower_bound_weighted",
                       "lambda_max_full", "lambda_max_gn", "gn_bound", "eta_ceiling",
                       "lower_bound_pass", "curvature_pass"});
  Json certs = Json::array();
  bool ok = true;
  for (const auto& x : t.cells) {
    cells.row(x.n, x.rep, x.k, std::string(x.error ? "not_interpolating" : "ok"), x.residual_rms,
              x.weighted_tv, x.tv_plain, x.tv_middle, x.lower_plain.bound, x.lower_weighted.bound,
              x.lambda_max_full, x.lambda_max_gn, x.gn_bound, x.eta_ceiling, x.lower_bound_pass,
              x.curvature_pass);
    if (x.error) continue;
    ok = ok && x.lower_bound_pass && x.curvature_pass;
    Json checks = Json::array();
    checks.push_back(io::to_json(make_certificate("middle_tv_lower_bound", x.lower_plain.bound, x.tv_middle, true)));
    checks.push_back(io::to_json(make_certificate("weighted_tv_lower_bound", x.lower_weighted.bound, x.weighted_tv, true)));
    checks.push_back(io::to_json(make_certificate("gn_lower_bound", x.gn_bound, x.lambda_max_full, true)));
    certs.push_back(Json{{"n", x.n}, {"rep", x.rep}, {"checks", checks}});
  }
  cells.save(join_path(cli.out_dir, "counterexample.csv"));
  io::CsvWriter med({"n", "median_weighted_tv", "median_lambda_max", "median_eta_ceiling"});
  for (const auto& row : t.rows) {
    med.row(row.n, row.median_weighted_tv, row.median_lambda_max, row.median_eta_ceiling);
  }
  med.save(join_path(cli.out_dir, "medians.csv"));
  io::write_json(join_path(cli.out_dir, "certificates.json"), certs);
  io::write_json(join_path(cli.out_dir, "summary.json"), Json{{"hard_pass", ok}});
  if (cli.plot) {
    std::vector<double> n, w;
    for (const auto& row : t.rows) {
      n.push_back(static_cast<double>(row.n));
      w.push_back(row.median_weighted_tv);
    }
    io::save_svg(join_path(cli.out_dir, "counterexample.svg"),
                 {"Interpolant weighted TV against n", "n", "weighted TV", true, true},
                 {{"median weighted TV", n, w, io::palette(1), true}});
  }
  log << t.cells.size() << " interpolants\n";
  return ok ? kExitOk : kExitCertificate;
}

inline int run_interpolate(const RunConfig& c, const CliConfig& cli, std::ostream& log) {
  const Dataset d = load_data(c);
  std::vector<double> w1, b1;
  if (c.first_layer == FirstLayer::kStratified) {
    std::tie(w1, b1) = stratified_first_layer(c.exp.train.k, d.xs, c.exp.train.seed);
  } else {
    const NetParams init = init_params(c.exp.train.k, c.exp.train.init, c.exp.train.seed);
    w1 = init.w1;
    b1 = init.b1;
  }
  const MinNormFit fit = min_norm_interpolant(w1, b1, d, false);
  const bool interpolating = fit.residual_rms <= kInterpTol;
  Json summary{{"residual_rms", fit.residual_rms},
               {"interpolating", interpolating},
               {"weighted_tv", weighted_tv(extract_knots(fit.params), EmpiricalWeight(d))},
               {"sparsity", sparsity_json(sparsity_metrics(fit.params, c.exp.dslope_tol, d))}};
  bool ok = true;
  Json certs = nullptr;
  if (differentiability_margin(fit.params, d) > c.exp.train.diff_tol) {
    VerifyOptions vo;
    vo.spectrum.diff_tol = c.exp.train.diff_tol;
    CertificateReport rep = verify_bounds(fit.params, d, c.exp.train.eta, c.exp.delta, vo);
    if (interpolating && d.size() >= 3) {
      try {
        const MiddleLowerBound lb = interpolant_tv_lower_bound(d, LowerBoundMode::kPlainMiddle);
        rep.checks.push_back(make_certificate(
            "middle_tv_lower_bound", lb.bound,
            tv_on_interval(extract_knots(fit.params), lb.lo, lb.hi), true));
      } catch (const Error& ex) {
        if (ex.kind() != ErrorKind::kNotEquispaced) throw;
      }
    }
    ok = rep.hard_pass();
    certs = io::to_json(rep);
  }
  io::write_json(join_path(cli.out_dir, "params.json"), io::to_json(fit.params));
  io::write_json(join_path(cli.out_dir, "summary.json"), summary);
  io::write_json(join_path(cli.out_dir, "certificates.json"), certs);
  if (cli.plot) plot_fit(join_path(cli.out_dir, "fit.svg"), fit.params, d, "Min-norm second-layer fit");
  log << "residual RMS " << io::fmt_shortest(fit.residual_rms) << "\n";
  return ok ? kExitOk : kExitCertificate;
}

inline NetParams load_params(const RunConfig& c) {
  if (c.params_file.empty()) throw Error(ErrorKind::kInvalidValue, "params_file: required");
  return io::params_from_json(io::read_json(c.params_file));
}

inline int run_verify(const RunConfig& c, const CliConfig& cli, std::ostream& log) {
  const Dataset d = load_data(c);
  const NetParams p = load_params(c);
  VerifyOptions vo;
  vo.spectrum.diff_tol = c.exp.train.diff_tol;
  if (d.ground_truth) vo.interval = try_interval(c, d);
  const CertificateReport rep = verify_bounds(p, d, c.exp.train.eta, c.exp.delta, vo);
  io::write_json(join_path(cli.out_dir, "certificates.json"), io::to_json(rep));
  io::write_json(join_path(cli.out_dir, "summary.json"),
                 Json{{"loss", loss(p, d)},
                      {"spectrum", io::to_json(spectrum_report(p, d, vo.spectrum))},
                      {"hard_pass", rep.hard_pass()}});
  for (const auto& ch : rep.checks) {
    log << (ch.pass ? "PASS " : "FAIL ") << ch.name << " slack " << io::fmt_shortest(ch.slack)
        << (ch.hard ? "" : " (reported)") << "\n";
  }
  return rep.hard_pass() ? kExitOk : kExitCertificate;
}

inline int run_basis(const RunConfig& c, const CliConfig& cli, std::ostream&) {
  const Dataset d = load_data(c);
  const NetParams p = load_params(c);
  write_basis_csv(join_path(cli.out_dir, "basis.csv"), p, -d.x_max, d.x_max, c.exp.basis_points);
  io::write_json(join_path(cli.out_dir, "sparsity.json"),
                 sparsity_json(sparsity_metrics(p, c.exp.dslope_tol, d)));
  if (cli.plot) plot_basis(join_path(cli.out_dir, "basis.svg"), p, -d.x_max, d.x_max, c.exp.basis_points);
  return kExitOk;
}

// Rebuilds the plots of a finished train run from its directory.
inline int run_report(const RunConfig& c, const CliConfig& cli, std::ostream& log) {
  const Dataset d = load_data(c);
  const io::CsvTable t = io::read_csv(join_path(cli.out_dir, "records.csv"));
  std::vector<TrainRecord> recs;
  for (const auto& row : t.rows) {
    TrainRecord r;
    r.step = static_cast<long>(row[t.column("step")]);
    r.loss = row[t.column("loss")];
    if (const double m = row[t.column("mse")]; !std::isnan(m)) r.mse = m;
    r.grad_norm = row[t.column("grad_norm")];
    if (const double l = row[t.column("lambda_max_full")]; !std::isnan(l)) r.lambda_max_full = l;
    r.lambda_max_gn = row[t.column("lambda_max_gn")];
    r.weighted_tv = row[t.column("weighted_tv")];
    r.tv_plain = row[t.column("tv_plain")];
    r.knot_count = static_cast<long>(row[t.column("knot_count")]);
    r.diff_margin = row[t.column("diff_margin")];
    recs.push_back(r);
  }
  const NetParams p = io::params_from_json(io::read_json(join_path(cli.out_dir, "params.json")));
  plot_fit(join_path(cli.out_dir, "fit.svg"), p, d, "Fit at eta = " + io::fmt_shortest(c.exp.train.eta));
  plot_learning_curves(join_path(cli.out_dir, "learning_curves.svg"), recs, d);
  plot_sharpness(join_path(cli.out_dir, "sharpness.svg"), recs, c.exp.train.eta);
  plot_basis(join_path(cli.out_dir, "basis.svg"), p, -d.x_max, d.x_max, c.exp.basis_points);
  log << "report written for " << recs.size() << " records\n";
  return kExitOk;
}

}  // namespace detail

// Runs one subcommand; errors from the library map to exit codes.
inline int run(const CliConfig& cli, std::ostream& log = std::cerr) {
  try {
    const RunConfig c = parse_config(cli.config_path, cli.overrides);
    std::filesystem::create_directories(cli.out_dir);
    {
      std::ofstream echo(detail::join_path(cli.out_dir, "config.resolved.yaml"), std::ios::binary);
      echo << echo_config(c);
    }
    const std::string& s = cli.subcommand;
    if (s == "train") return detail::run_train(c, cli, log);
    if (s == "sweep") return detail::run_sweep(c, cli, log);
    if (s == "rate") return detail::run_rate(c, cli, log);
    if (s == "counterexample") return detail::run_counterexample(c, cli, log);
    if (s == "interpolate") return detail::run_interpolate(c, cli, log);
    if (s == "verify") return detail::run_verify(c, cli, log);
    if (s == "basis") return detail::run_basis(c, cli, log);
    if (s == "report") return detail::run_report(c, cli, log);
    log << "unknown subcommand " << s << "\n";
    return kExitUsage;
  } catch (const Error& ex) {
    log << "error: " << ex.what() << "\n";
    return exit_code(ex.kind());
  } catch (const std::exception& ex) {
    log << "error: " << ex.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace stablerelu::cli
