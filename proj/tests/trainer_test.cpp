#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "stablerelu/experiments.hpp"
#include "stablerelu/io/csv.hpp"
#include "stablerelu/trainer.hpp"
#include "test_util.hpp"

namespace sr = stablerelu;
using sr::test::unit_params;

namespace {

sr::TrainConfig base_config(double eta, long steps, long log_every) {
  sr::TrainConfig c;
  c.k = 100;
  c.eta = eta;
  c.max_steps = steps;
  c.log_every = log_every;
  c.seed = 1;
  return c;
}

sr::TrainRecord rec(long step, double loss, double gn) {
  sr::TrainRecord r;
  r.step = step;
  r.loss = loss;
  r.lambda_max_gn = gn;
  return r;
}

sr::NetParams hat_network() {
  sr::NetParams f0(2);
  f0.w1 = {1.0, -1.0};
  f0.w2 = {-2.0, -2.0};
  f0.b2 = 1.0;
  return f0;
}

}  // namespace

TEST(GdStep, HandComputedUpdate) {
  sr::Dataset one;
  one.xs = {2.0};
  one.ys = {0.0};
  one.x_max = 2.0;
  const auto q = sr::gd_step(unit_params(), one, 0.1);
  sr::test::expect_vec(q.flatten(), {0.6, -0.2, 0.6, -0.2}, 1e-15);
}

TEST(GdStep, FixedPointWhenGradientVanishes) {
  sr::Dataset one;
  one.xs = {2.0};
  one.ys = {2.0};
  one.x_max = 2.0;
  EXPECT_EQ(sr::gd_step(unit_params(), one, 0.3), unit_params());
}

TEST(GdStep, OverflowRaisesDiverged) {
  sr::Dataset one;
  one.xs = {2.0};
  one.ys = {0.0};
  one.x_max = 2.0;
  EXPECT_THROW(sr::gd_step(unit_params(), one, 1e308), sr::Diverged);
}

TEST(GdStep, TinyStepsDecreaseLoss) {
  const auto d = sr::gen_hat_dataset(30, 0.5, 1);
  auto p = sr::init_params(100, sr::InitScheme::uniform_fanin(), 1);
  double prev = sr::loss(p, d);
  for (int t = 0; t < 10; ++t) {
    p = sr::gd_step(p, d, 1e-6);
    const double now = sr::loss(p, d);
    EXPECT_LT(now, prev);
    prev = now;
  }
}

TEST(GdStep, DescentRegimeIsMonotone) {
  const auto d = sr::gen_hat_dataset(30, 0.5, 2);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto p = sr::init_params(100, sr::InitScheme::uniform_fanin(), seed);
    const double eta = 1.0 / sr::spectrum_report(p, d).lambda_max_full;
    double prev = sr::loss(p, d);
    for (int t = 0; t < 100; ++t) {
      p = sr::gd_step(p, d, eta);
      const double now = sr::loss(p, d);
      EXPECT_LE(now, prev + 1e-15) << "seed " << seed << " step " << t;
      prev = now;
    }
  }
}

TEST(Train, ZeroStepsReturnsInitialization) {
  const auto d = sr::gen_hat_dataset(30, 0.5, 1);
  auto cfg = base_config(0.4, 0, 1);
  const auto res = sr::train(cfg, d);
  ASSERT_EQ(res.records.size(), 1u);
  EXPECT_EQ(res.records[0].step, 0);
  EXPECT_EQ(res.params, sr::init_params(100, cfg.init, cfg.seed));
}

TEST(Train, LogsOnCadenceAndFinalStep) {
  const auto d = sr::gen_hat_dataset(30, 0.5, 1);
  auto cfg = base_config(0.1, 250, 100);
  cfg.spectrum_every = 200;
  const auto res = sr::train(cfg, d);
  std::vector<long> steps;
  for (const auto& r : res.records) steps.push_back(r.step);
  EXPECT_EQ(steps, (std::vector<long>{0, 100, 200, 250}));
  EXPECT_TRUE(res.records[0].lambda_max_full.has_value());
  EXPECT_FALSE(res.records[1].lambda_max_full.has_value());
  EXPECT_TRUE(res.records[2].lambda_max_full.has_value());
  EXPECT_TRUE(res.records[3].lambda_max_full.has_value());
}

TEST(Train, StopsOnSmallGradient) {
  const auto d = sr::gen_hat_dataset(30, 0.5, 1);
  auto cfg = base_config(0.1, 10000, 10);
  cfg.stop_grad_norm = 1e9;
  const auto res = sr::train(cfg, d);
  EXPECT_EQ(res.records.size(), 1u);
}

TEST(Train, DivergesAtHugeStep) {
  const auto d = sr::gen_hat_dataset(30, 0.5, 1);
  try {
    sr::train(base_config(1e6, 1000, 1), d);
    FAIL() << "expected Diverged";
  } catch (const sr::Diverged& ex) {
    EXPECT_GT(ex.step(), 0);
    ASSERT_TRUE(ex.last_record().has_value());
    EXPECT_TRUE(std::isfinite(ex.last_record()->loss));
  }
}

TEST(Train, BitIdenticalRecords) {
  const auto d = sr::gen_hat_dataset(30, 0.5, 3);
  const auto cfg = base_config(0.4, 2000, 100);
  const auto a = sr::train(cfg, d);
  const auto b = sr::train(cfg, d);
  EXPECT_EQ(sr::io::records_csv(a.records).str(), sr::io::records_csv(b.records).str());
  EXPECT_EQ(a.params, b.params);
}

TEST(Train, HatRunFitsBelowNoiseAndIsOptimized) {
  const auto d = sr::gen_hat_dataset(30, 0.5, 1);
  const auto res = sr::train(base_config(0.4, 20000, 1000), d);
  EXPECT_LE(res.summary.final_record.loss, 0.25);
  EXPECT_TRUE(res.summary.optimized_vs_ground_truth.value_or(false));
  ASSERT_TRUE(res.summary.certificates.has_value());
  EXPECT_TRUE(res.summary.certificates->hard_pass());
  EXPECT_DOUBLE_EQ(res.summary.param_inf_norm, res.params.inf_norm());
  ASSERT_TRUE(res.summary.stable.has_value());
  EXPECT_EQ(*res.summary.stable,
            *res.summary.final_record.lambda_max_full <= 2.0 / 0.4);
}

TEST(Train, SmallStepFitsTighterAtEqualTime) {
  const auto d = sr::gen_hat_dataset(30, 0.5, 1);
  auto fast = base_config(0.4, 20000, 20000);
  auto slow = base_config(0.01, 800000, 800000);
  const double l_fast = sr::train(fast, d).summary.final_record.loss;
  const double l_slow = sr::train(slow, d).summary.final_record.loss;
  EXPECT_LT(l_slow, l_fast);
}

TEST(TrainConfig, ValidationNamesKey) {
  auto expect_key = [](sr::TrainConfig c, const std::string& key) {
    try {
      c.validate();
      FAIL() << "accepted bad " << key;
    } catch (const sr::Error& ex) {
      EXPECT_EQ(ex.kind(), sr::ErrorKind::kInvalidValue);
      EXPECT_NE(std::string(ex.what()).find(key), std::string::npos) << ex.what();
    }
  };
  auto c = base_config(0.1, 100, 10);
  c.eta = -1;
  expect_key(c, "eta");
  c = base_config(0.1, 100, 200);
  expect_key(c, "log_every");
  c = base_config(0.1, 100, 10);
  c.k = 0;
  expect_key(c, "k");
  c = base_config(0.1, 100, 10);
  c.steady_window = 1;
  expect_key(c, "steady_window");
}

TEST(SteadyState, ConstantTraceStartsAtFirstStep) {
  std::vector<sr::TrainRecord> r;
  for (long t = 0; t < 10; ++t) r.push_back(rec(t * 10, 0.3, 2.0));
  EXPECT_EQ(sr::detect_steady_state(r, 3, 1e-3), 0);
}

TEST(SteadyState, DoublingTraceNeverSettles) {
  std::vector<sr::TrainRecord> r;
  double l = 1.0;
  for (long t = 0; t < 30; ++t, l *= 2) r.push_back(rec(t, l, 1.0));
  EXPECT_FALSE(sr::detect_steady_state(r, 3, 1e-3).has_value());
}

TEST(SteadyState, GeometricDecay) {
  std::vector<sr::TrainRecord> r;
  for (long t = 0; t < 40; ++t) r.push_back(rec(t, std::pow(0.5, t), 1.0));
  // Window [t, t+2] spans 0.5^t - 0.5^(t+2) = 0.75 * 0.5^t against the
  // trace maximum 1.
  long want = -1;
  for (long t = 0; t + 2 < 40; ++t) {
    if (0.75 * std::pow(0.5, t) <= 1e-3) {
      want = t;
      break;
    }
  }
  EXPECT_EQ(want, 10);
  EXPECT_EQ(sr::detect_steady_state(r, 3, 1e-3), want);
}

TEST(SteadyState, ShortTraceAndBadWindow) {
  std::vector<sr::TrainRecord> r{rec(0, 1, 1)};
  EXPECT_FALSE(sr::detect_steady_state(r, 3, 0.1).has_value());
  EXPECT_THROW(sr::detect_steady_state(r, 1, 0.1), sr::Error);
}

TEST(CheckOptimized, Examples) {
  const auto d = sr::gen_hat_dataset(30, 0.5, 4);
  EXPECT_TRUE(sr::check_optimized(hat_network(), d, sr::OptimizedMode::kVsGroundTruth));

  sr::Dataset big;
  big.xs = {-1.0, 1.0};
  big.ys = {50.0, -40.0};
  big.ground_truth = sr::zero_ground_truth();
  big.sigma = 0.5;
  const sr::NetParams zero(1);
  EXPECT_FALSE(sr::check_optimized(zero, big, sr::OptimizedMode::kVsSigma));
  // Zero network equals the zero truth, so it ties.
  EXPECT_TRUE(sr::check_optimized(zero, big, sr::OptimizedMode::kVsGroundTruth));

  sr::Dataset bare;
  bare.xs = {0.0, 1.0};
  bare.ys = {0.0, 0.0};
  try {
    sr::check_optimized(zero, bare, sr::OptimizedMode::kVsGroundTruth);
    FAIL();
  } catch (const sr::Error& ex) {
    EXPECT_EQ(ex.kind(), sr::ErrorKind::kMissingGroundTruth);
  }
  try {
    sr::check_optimized(zero, bare, sr::OptimizedMode::kVsSigma);
    FAIL();
  } catch (const sr::Error& ex) {
    EXPECT_EQ(ex.kind(), sr::ErrorKind::kMissingSigma);
  }
}

TEST(MinNorm, TwoByTwoSolve) {
  sr::Dataset d;
  d.xs = {-1.0, 1.0};
  d.ys = {0.0, 2.0};
  d.x_max = 1.0;
  const std::vector<double> w1{1.0}, b1{2.0};
  const auto fit = sr::min_norm_interpolant(w1, b1, d, true);
  EXPECT_NEAR(fit.params.w2[0], 1.0, 1e-12);
  EXPECT_NEAR(fit.params.b2, -1.0, 1e-12);
  EXPECT_NEAR(fit.residual_rms, 0.0, 1e-12);
}

TEST(MinNorm, WideLayerInterpolatesHat) {
  const auto d = sr::gen_hat_dataset(30, 0.5, 5);
  const auto [w1, b1] = sr::stratified_first_layer(30, d.xs, 6);
  const auto fit = sr::min_norm_interpolant(w1, b1, d, true);
  EXPECT_LE(fit.residual_rms, 1e-8);
  EXPECT_LE(sr::loss(fit.params, d), 1e-16 * 30);
}

TEST(MinNorm, NarrowLayerLeavesResidual) {
  const auto d = sr::gen_hat_dataset(30, 0.5, 5);
  const std::vector<double> w1{1.0}, b1{0.1};
  const auto fit = sr::min_norm_interpolant(w1, b1, d, false);
  EXPECT_GT(fit.residual_rms, 1e-3);
  try {
    sr::min_norm_interpolant(w1, b1, d, true);
    FAIL();
  } catch (const sr::Error& ex) {
    EXPECT_EQ(ex.kind(), sr::ErrorKind::kNotInterpolating);
  }
}

TEST(MinNorm, SmallestAmongAllSolutions) {
  // 6 points, 12 features: every solution is x_min + N z for the kernel N.
  sr::Dataset d;
  d.xs = {-0.5, -0.3, -0.1, 0.1, 0.3, 0.5};
  d.ys = {0.2, -0.4, 0.9, 0.1, -0.3, 0.5};
  d.x_max = 0.5;
  const auto [w1, b1] = sr::stratified_first_layer(12, d.xs, 8);
  const auto fit = sr::min_norm_interpolant(w1, b1, d, true);
  Eigen::MatrixXd phi(6, 13);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 12; ++j) phi(i, j) = sr::relu(w1[j] * d.xs[i] + b1[j]);
    phi(i, 12) = 1.0;
  }
  Eigen::VectorXd sol(13);
  for (int j = 0; j < 12; ++j) sol[j] = fit.params.w2[j];
  sol[12] = fit.params.b2;
  const Eigen::MatrixXd kernel = Eigen::FullPivLU<Eigen::MatrixXd>(phi).kernel();
  EXPECT_LE((kernel.transpose() * sol).norm(), 1e-10);
  sr::Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd z(kernel.cols());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    const Eigen::VectorXd other = sol + kernel * z;
    EXPECT_LE((phi * other - phi * sol).norm(), 1e-10);
    EXPECT_LE(sol.norm(), other.norm());
  }
}
