#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "stablerelu/experiments.hpp"
#include "stablerelu/funcspace.hpp"
#include "test_util.hpp"

namespace sr = stablerelu;

namespace {

// g straight from the definition: loops over the sample, no prefix sums.
double g_oracle(const std::vector<double>& xs, double x) {
  const double n = static_cast<double>(xs.size());
  double cl = 0, sl = 0, cr = 0, sr_ = 0;
  for (double v : xs) {
    if (v < x) ++cl, sl += v;
    if (v > x) ++cr, sr_ += v;
  }
  double gm = 0, gp = 0;
  if (cl > 0) {
    const double m = sl / cl;
    gm = (cl / n) * (cl / n) * (x - m) * std::sqrt(1 + m * m);
  }
  if (cr > 0) {
    const double m = sr_ / cr;
    gp = (cr / n) * (cr / n) * (m - x) * std::sqrt(1 + m * m);
  }
  return std::min(gm, gp);
}

std::vector<double> equispaced(long n, double lo, double hi) {
  std::vector<double> xs;
  for (long i = 0; i < n; ++i) xs.push_back(lo + (hi - lo) * i / static_cast<double>(n - 1));
  return xs;
}

sr::PiecewiseLinear spline(std::vector<sr::Knot> knots) {
  sr::PiecewiseLinear f;
  f.knots = std::move(knots);
  return f;
}

sr::Dataset labelled(std::vector<double> xs, std::vector<double> ys, double x_max) {
  sr::Dataset d;
  d.xs = std::move(xs);
  d.ys = std::move(ys);
  d.x_max = x_max;
  return d;
}

}  // namespace

TEST(EmpiricalWeight, ClosedFormExamples) {
  const std::vector<double> two{-1.0, 1.0};
  const sr::EmpiricalWeight g(two);
  EXPECT_DOUBLE_EQ(g(0.0), std::sqrt(2.0) / 4.0);
  EXPECT_EQ(g(-2.0), 0.0);
  EXPECT_EQ(g(3.0), 0.0);
  const double a = 0.7;
  const std::vector<double> sym{-a, a};
  EXPECT_DOUBLE_EQ(sr::EmpiricalWeight(sym)(0.0), 0.25 * a * std::sqrt(1 + a * a));
}

TEST(EmpiricalWeight, DenseDesignCenterValue) {
  const auto xs = equispaced(1000, -1.0, 1.0);
  const sr::EmpiricalWeight g(xs);
  EXPECT_NEAR(g(0.0), g_oracle(xs, 0.0), 1e-14);
  EXPECT_NEAR(g(0.0), std::sqrt(5.0) / 16.0, 0.01 * std::sqrt(5.0) / 16.0);
}

TEST(EmpiricalWeight, MatchesDefinitionEverywhere) {
  sr::Rng rng(21);
  std::vector<double> xs;
  for (int i = 0; i < 57; ++i) xs.push_back(rng.uniform(-2.0, 1.5));
  const sr::EmpiricalWeight g(xs);
  for (int t = 0; t < 2000; ++t) {
    const double x = rng.uniform(-2.5, 2.0);
    EXPECT_NEAR(g(x), g_oracle(xs, x), 1e-13);
  }
  // Data points use the strict-count convention.
  for (double x : xs) EXPECT_NEAR(g(x), g_oracle(xs, x), 1e-13);
}

TEST(EmpiricalWeight, VanishesAtExtremesAndIsSymmetric) {
  const auto xs = equispaced(41, -0.8, 0.8);
  const sr::EmpiricalWeight g(xs);
  EXPECT_EQ(g(xs.front()), 0.0);
  EXPECT_EQ(g(xs.back()), 0.0);
  // Off the data: at a data point the strict count is one-sided.
  for (int i = 0; i < 400; ++i) {
    const double x = -1.0 + 2.0 * (i + 0.5) / 400.0;
    EXPECT_GE(g(x), 0.0);
    EXPECT_NEAR(g(x), g(-x), 1e-12);
  }
}

TEST(WeightedTv, Examples) {
  const auto xs = equispaced(1000, -0.5, 0.5);
  const sr::EmpiricalWeight g(xs);
  sr::PiecewiseLinear affine;
  affine.base_slope = 3.0;
  EXPECT_EQ(sr::weighted_tv(affine, g), 0.0);

  // Hat: slope +2 then -2 at 0. Oracle value frozen from g_oracle.
  const auto hat = spline({{0.0, -4.0}});
  EXPECT_NEAR(g_oracle(xs, 0.0), 0.06449181241205876, 1e-12);
  EXPECT_NEAR(sr::weighted_tv(hat, g), 4.0 * 0.06449181241205876, 1e-12);

  EXPECT_EQ(sr::weighted_tv(spline({{-3.0, 1.0}, {0.5, 2.0}, {4.0, 5.0}}), g), 0.0);
}

TEST(WeightedTv, AddingAnInteriorKnotNeverDecreases) {
  const auto xs = equispaced(30, -0.5, 0.5);
  const sr::EmpiricalWeight g(xs);
  sr::Rng rng(5);
  std::vector<sr::Knot> knots;
  double prev = 0.0;
  for (int t = 0; t < 50; ++t) {
    knots.push_back({rng.uniform(-0.5, 0.5), rng.uniform(-3.0, 3.0)});
    std::sort(knots.begin(), knots.end(),
              [](const sr::Knot& a, const sr::Knot& b) { return a.position < b.position; });
    const double now = sr::weighted_tv(spline(knots), g);
    EXPECT_GE(now, prev);
    prev = now;
  }
}

TEST(TvOnInterval, Examples) {
  const auto hat = spline({{0.0, -4.0}});
  EXPECT_EQ(sr::tv_on_interval(hat, -0.1, 0.2), 4.0);
  EXPECT_EQ(sr::tv_on_interval(hat, 0.5, 0.9), 0.0);
  EXPECT_EQ(sr::tv_on_interval(spline({{0.1, 1.0}, {0.2, -3.0}}), 0.0, 1.0), 4.0);
  EXPECT_THROW(sr::tv_on_interval(hat, 1.0, 1.0), sr::Error);
}

TEST(StabilityBound, Examples) {
  using sr::Curvature;
  EXPECT_NEAR(sr::stability_tv_bound(Curvature::from_eta(0.4), 0.12, 1.0),
              2.0 + std::sqrt(0.24), 1e-14);
  EXPECT_NEAR(sr::stability_tv_bound(Curvature::from_eta(0.4), 0.12, 1.0), 2.4899, 1e-4);
  EXPECT_DOUBLE_EQ(sr::stability_tv_bound(Curvature::from_lambda(7.0), 0.0, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(sr::stability_tv_bound(Curvature::from_lambda(1.0), 0.0, 2.0), 0.0);
  // Small domains use scale 1.
  EXPECT_DOUBLE_EQ(sr::stability_tv_bound(Curvature::from_lambda(1.0), 0.5, 0.25), 1.0);
  EXPECT_DOUBLE_EQ(sr::stability_tv_bound(Curvature::from_lambda(1.0), 0.5, 3.0), 3.0);
}

TEST(NoisyBound, Examples) {
  using sr::Curvature;
  EXPECT_DOUBLE_EQ(sr::noisy_tv_bound(Curvature::from_lambda(5.0), 0.0, 0.0, 1.0, 100, 30, 0.05),
                   2.0);
  const double noise = sr::noisy_tv_bound(Curvature::from_lambda(1.0), 0.0, 0.5, 1.0, 30, 30, 0.05);
  EXPECT_NEAR(noise, 2.0 * std::sqrt(std::log(2400.0)), 1e-12);
  EXPECT_NEAR(noise, 5.5796, 1e-4);
  const double parametric = 14.0 * std::sqrt(std::log(13e6 / 0.05) / 1e6);
  EXPECT_DOUBLE_EQ(sr::noise_term_factor(1, 1000000, 0.05), parametric);
  EXPECT_DOUBLE_EQ(sr::noisy_tv_bound(Curvature::from_lambda(1.0), 0.25, 0.0, 0.5, 1, 10, 0.05),
                   1.0);
  EXPECT_THROW(sr::noisy_tv_bound(Curvature::from_lambda(1.0), 0.0, 0.5, 1.0, 1, 10, 1.0),
               sr::Error);
}

TEST(SelectInterval, UniformDesignCoversTwoThirds) {
  sr::Rng rng(2024);
  std::vector<double> xs;
  for (int i = 0; i < 10000; ++i) xs.push_back(rng.uniform(-1.0, 1.0));
  const sr::EmpiricalWeight g(xs);
  const auto rep = sr::select_interval(g, 1.0 / 4320.0, 1e-3);
  EXPECT_LE(rep.lo, -2.0 / 3.0);
  EXPECT_GE(rep.hi, 2.0 / 3.0);
  EXPECT_GE(rep.c_inf, 1.0 / 4320.0);
  EXPECT_EQ(rep.n_in, std::count_if(xs.begin(), xs.end(),
                                    [&](double x) { return x >= rep.lo && x <= rep.hi; }));
}

TEST(SelectInterval, TwoPointsAndImpossibleLevel) {
  const std::vector<double> two{-1.0, 1.0};
  const sr::EmpiricalWeight g(two);
  const auto rep = sr::select_interval(g, 0.3, 1e-3);
  EXPECT_LE(rep.lo, 0.0);
  EXPECT_GE(rep.hi, 0.0);
  EXPECT_THROW(sr::select_interval(g, 10.0, 1e-3), sr::Error);
  try {
    sr::select_interval(g, 10.0, 1e-3);
  } catch (const sr::Error& ex) {
    EXPECT_EQ(ex.kind(), sr::ErrorKind::kNoInterval);
  }
}

TEST(InfimumOn, CatchesJumpsAtDataPoints) {
  const auto xs = equispaced(9, -1.0, 1.0);
  const sr::EmpiricalWeight g(xs);
  double brute = 1e9;
  for (int i = 0; i <= 200000; ++i) brute = std::min(brute, g(-0.5 + 1.0 * i / 200000.0));
  const double inf = sr::infimum_on(g, -0.5, 0.5, 0.1);
  EXPECT_LE(inf, brute + 1e-12);
  EXPECT_GE(inf, 0.0);
}

TEST(LowerBound, LinearLabelsGiveZero) {
  const auto xs = equispaced(12, -1.0, 1.0);
  std::vector<double> ys;
  for (double x : xs) ys.push_back(3.0 * x - 1.0);
  const auto lb = sr::interpolant_tv_lower_bound(labelled(xs, ys, 1.0),
                                                 sr::LowerBoundMode::kPlainMiddle);
  EXPECT_NEAR(lb.bound, 0.0, 1e-12);
}

TEST(LowerBound, ThreePointToyIsTight) {
  const auto d = labelled({-1.0, 0.0, 1.0}, {0.0, 1.0, 0.0}, 1.0);
  const auto lb = sr::interpolant_tv_lower_bound(d, sr::LowerBoundMode::kPlainMiddle);
  EXPECT_DOUBLE_EQ(lb.bound, 2.0);
  EXPECT_EQ(lb.triples, 1u);
  // 1 - |x| = 1 - relu(x) - relu(-x), one kink at 0.
  sr::NetParams p(2);
  p.w1 = {1.0, -1.0};
  p.b1 = {0.0, 0.0};
  p.w2 = {-1.0, -1.0};
  p.b2 = 1.0;
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(sr::forward(p, d.xs[i]), d.ys[i]);
  EXPECT_DOUBLE_EQ(sr::tv_on_interval(sr::extract_knots(p), lb.lo, lb.hi), 2.0);
}

TEST(LowerBound, RejectsUnevenDesign) {
  const auto d = labelled({-1.0, 0.1, 0.5, 1.0}, {0, 0, 0, 0}, 1.0);
  try {
    sr::interpolant_tv_lower_bound(d, sr::LowerBoundMode::kPlainMiddle);
    FAIL();
  } catch (const sr::Error& ex) {
    EXPECT_EQ(ex.kind(), sr::ErrorKind::kNotEquispaced);
  }
}

TEST(LowerBound, MinNormInterpolantOnCounterexampleDesign) {
  const auto d = sr::gen_counterexample(60, 0.5, 17, 1.0);
  const auto [w1, b1] = sr::stratified_first_layer(120, d.xs, 18);
  const auto fit = sr::min_norm_interpolant(w1, b1, d, true);
  const auto pwl = sr::extract_knots(fit.params);
  const auto plain = sr::interpolant_tv_lower_bound(d, sr::LowerBoundMode::kPlainMiddle);
  const auto weighted = sr::interpolant_tv_lower_bound(d, sr::LowerBoundMode::kWeightedMiddle);
  EXPECT_GT(plain.bound, 0.0);
  EXPECT_GE(sr::tv_on_interval(pwl, plain.lo, plain.hi), plain.bound - 1e-8);
  EXPECT_GE(sr::weighted_tv(pwl, sr::EmpiricalWeight(d)), weighted.bound - 1e-8);
  EXPECT_LE(weighted.bound, plain.bound);
}

TEST(LowerBound, MiddleRangeIndices) {
  EXPECT_EQ(sr::middle_index_range(3), (std::pair<std::size_t, std::size_t>{0, 2}));
  EXPECT_EQ(sr::middle_index_range(60), (std::pair<std::size_t, std::size_t>{14, 44}));
}
