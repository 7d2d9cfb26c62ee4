#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "stablerelu/experiments.hpp"
#include "stablerelu/landscape.hpp"
#include "test_util.hpp"

namespace sr = stablerelu;
using sr::test::unit_params;

namespace {

sr::Dataset points(std::vector<double> xs, std::vector<double> ys, double x_max = 2.0) {
  sr::Dataset d;
  d.xs = std::move(xs);
  d.ys = std::move(ys);
  d.x_max = x_max;
  return d;
}

// Random network fitted to the hat design, away from every kink.
sr::NetParams admissible(const sr::Dataset& d, long k, std::uint64_t& seed) {
  for (;;) {
    auto p = sr::init_params(k, sr::InitScheme::uniform_fanin(), seed++);
    if (sr::differentiability_margin(p, d) > 1e-3) return p;
  }
}

// Strict interpolant of d with a frozen random first layer.
sr::NetParams interpolant(const sr::Dataset& d, long k, std::uint64_t seed) {
  const auto [w1, b1] = sr::stratified_first_layer(k, d.xs, seed);
  return sr::min_norm_interpolant(w1, b1, d, true).params;
}

Eigen::MatrixXd random_symmetric(Eigen::Index n, sr::Rng& rng) {
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = rng.normal();
  }
  return 0.5 * (a + a.transpose());
}

}  // namespace

TEST(Loss, Examples) {
  const sr::NetParams zero(3);
  EXPECT_EQ(sr::loss(zero, points({0.0, 1.0}, {0.0, 0.0})), 0.0);
  EXPECT_DOUBLE_EQ(sr::loss(unit_params(), points({-0.5, 2.0}, {0.0, 0.0})), 1.0);
  sr::Dataset one;
  one.xs = {2.0};
  one.ys = {0.0};
  one.x_max = 2.0;
  EXPECT_DOUBLE_EQ(sr::loss(unit_params(), one), 2.0);
}

TEST(Loss, HatTruthEqualsHalfMeanSquaredNoise) {
  const auto d = sr::gen_hat_dataset(30, 0.5, 3);
  // hat(x) = 1 - 2|x|: two neurons and a bias reproduce it on [-0.5, 0.5].
  sr::NetParams f0(2);
  f0.w1 = {1.0, -1.0};
  f0.w2 = {-2.0, -2.0};
  f0.b2 = 1.0;
  double oracle = 0.0;
  for (double e : *d.noises) oracle += e * e;
  oracle /= 2.0 * 30;
  EXPECT_NEAR(sr::loss(f0, d), oracle, 1e-15);
}

TEST(LossGradient, Examples) {
  sr::Dataset one;
  one.xs = {2.0};
  one.ys = {0.0};
  one.x_max = 2.0;
  sr::test::expect_vec(sr::loss_gradient(unit_params(), one), {4, 2, 4, 2}, 1e-15);
  one.ys = {2.0};
  sr::test::expect_vec(sr::loss_gradient(unit_params(), one), {0, 0, 0, 0});
}

TEST(LossGradient, MatchesFiniteDifferences) {
  const auto d = sr::gen_hat_dataset(30, 0.5, 4);
  std::uint64_t seed = 100;
  for (int t = 0; t < 10; ++t) {
    const auto p = admissible(d, 40, seed);
    const Eigen::VectorXd g = sr::loss_gradient(p, d);
    const Eigen::VectorXd fd = sr::test::fd_loss_gradient(p, d, 1e-6);
    EXPECT_LE((g - fd).norm(), 1e-6 * std::max(1.0, g.norm()));
  }
}

TEST(LossHessian, MatchesFiniteDifferencesAndSplits) {
  const auto d = sr::gen_hat_dataset(30, 0.5, 5);
  std::uint64_t seed = 200;
  for (int t = 0; t < 5; ++t) {
    const auto p = admissible(d, 30, seed);
    const auto h = sr::loss_hessian(p, d);
    const Eigen::MatrixXd fd = sr::test::fd_loss_hessian(p, d, 1e-6);
    EXPECT_LE((h.full - fd).norm(), 1e-5 * std::max(1.0, h.full.norm()));
    EXPECT_EQ(h.full, h.gn + h.residual);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h.gn).eigenvalues().minCoeff(),
              -1e-10);
  }
}

TEST(LossHessian, SinglePointGaussNewtonIsOuterProduct) {
  sr::Dataset one;
  one.xs = {0.3};
  one.ys = {1.0};
  one.x_max = 1.0;
  const auto p = sr::init_params(5, sr::InitScheme::uniform_fanin(), 8);
  const Eigen::VectorXd g = sr::param_gradient(p, 0.3);
  EXPECT_LE((sr::loss_hessian(p, one).gn - g * g.transpose()).norm(), 1e-15);
}

TEST(LossHessian, InterpolantHasZeroResidualTerm) {
  const auto d = sr::gen_counterexample(12, 0.5, 2, 1.0);
  const auto p = interpolant(d, 24, 3);
  const auto h = sr::loss_hessian(p, d);
  EXPECT_LE(h.residual.cwiseAbs().maxCoeff(), 1e-9);
  const auto rep = sr::spectrum_report(p, d);
  EXPECT_NEAR(rep.residual_quadform, 0.0, 1e-9);
  EXPECT_NEAR(rep.lambda_max_full, rep.lambda_max_gn, 1e-8 * (1 + rep.lambda_max_gn));
}

TEST(LossHessian, ReportsOffendingDatumAndNeuron) {
  sr::NetParams p(2);
  p.w1 = {1.0, 1.0};
  p.b1 = {5.0, -1.0};
  p.w2 = {1.0, 1.0};
  try {
    sr::loss_hessian(p, points({0.0, 1.0}, {0.0, 0.0}));
    FAIL() << "expected NotTwiceDifferentiable";
  } catch (const sr::NotTwiceDifferentiable& ex) {
    EXPECT_EQ(ex.datum(), 1);
    EXPECT_EQ(ex.neuron(), 1);
  }
}

TEST(LambdaMax, SmallExamples) {
  Eigen::MatrixXd d2 = Eigen::Vector2d(3.0, 1.0).asDiagonal();
  EXPECT_DOUBLE_EQ(sr::lambda_max(d2).value, 3.0);
  sr::EigenOptions power;
  power.method = sr::EigenMethod::kPower;
  EXPECT_NEAR(sr::lambda_max(d2, power).value, 3.0, 1e-9);

  const Eigen::Vector3d u(1.0, -2.0, 0.5);
  const Eigen::MatrixXd r1 = u * u.transpose();
  EXPECT_NEAR(sr::lambda_max(r1).value, u.squaredNorm(), 1e-12);
  EXPECT_NEAR(sr::lambda_max(r1, power).value, u.squaredNorm(), 1e-9);
}

TEST(LambdaMax, NegativeSpectrumHandledByShift) {
  Eigen::MatrixXd a = Eigen::Vector3d(-5.0, -2.0, -1.0).asDiagonal();
  sr::EigenOptions power;
  power.method = sr::EigenMethod::kPower;
  EXPECT_NEAR(sr::lambda_max(a, power).value, -1.0, 1e-9);
}

TEST(LambdaMax, PowerAgreesWithDense301) {
  sr::Rng rng(301);
  const Eigen::MatrixXd a = random_symmetric(301, rng);
  sr::EigenOptions power;
  power.method = sr::EigenMethod::kPower;
  power.tol = 1e-11;
  const double dense = sr::lambda_max(a).value;
  const auto pw = sr::lambda_max(a, power);
  EXPECT_LE(std::fabs(dense - pw.value), 1e-8 * (1 + std::fabs(dense)));
  EXPECT_NEAR(pw.vec.norm(), 1.0, 1e-12);
}

TEST(LambdaMax, PowerAgreesWithDenseOnManyMatrices) {
  sr::Rng rng(42);
  sr::EigenOptions power;
  power.method = sr::EigenMethod::kPower;
  power.tol = 1e-11;
  for (int t = 0; t < 200; ++t) {
    const auto n = static_cast<Eigen::Index>(2 + rng.next_u64() % 600);
    // Loss Hessians have a separated top eigenvalue; a rank-one spike gives
    // the same structure and keeps power iteration short.
    Eigen::MatrixXd a = random_symmetric(n, rng) / std::sqrt(static_cast<double>(n));
    Eigen::VectorXd u(n);
    for (Eigen::Index i = 0; i < n; ++i) u[i] = rng.normal();
    a += 4.0 * u.normalized() * u.normalized().transpose();
    const double dense = sr::lambda_max(a).value;
    const double pw = sr::lambda_max(a, power).value;
    EXPECT_LE(std::fabs(dense - pw), 1e-8 * (1 + std::fabs(dense))) << "dim " << n;
  }
}

TEST(LambdaMax, PowerThrowsNoConvergence) {
  sr::Rng rng(7);
  const Eigen::MatrixXd a = random_symmetric(50, rng);
  sr::EigenOptions power;
  power.method = sr::EigenMethod::kPower;
  power.max_iters = 3;
  EXPECT_THROW(sr::lambda_max(a, power), sr::NoConvergence);
}

TEST(SpectrumReport, SandwichAndMethodsAgree) {
  const auto d = sr::gen_hat_dataset(30, 0.5, 6);
  std::uint64_t seed = 300;
  for (int t = 0; t < 5; ++t) {
    const auto p = admissible(d, 100, seed);
    const auto dense = sr::spectrum_report(p, d);
    EXPECT_GE(dense.lambda_max_full, dense.lambda_max_gn + dense.residual_quadform - 1e-8);
    EXPECT_EQ(std::string(sr::eigen_method_name(dense.method)), "dense");
    const auto h = sr::loss_hessian(p, d);
    const double rq = dense.top_eigvec.dot(h.full * dense.top_eigvec);
    EXPECT_GE(dense.lambda_max_full, rq - 1e-10);
    EXPECT_NEAR(sr::gauss_newton_lambda_max(p, d), dense.lambda_max_gn,
                1e-10 * dense.lambda_max_gn);

    sr::SpectrumOptions so;
    so.method = sr::EigenMethod::kPower;
    so.power_tol = 1e-11;
    const auto power = sr::spectrum_report(p, d, so);
    EXPECT_NEAR(power.lambda_max_full, dense.lambda_max_full, 1e-8 * (1 + dense.lambda_max_full));
    EXPECT_NEAR(power.lambda_max_gn, dense.lambda_max_gn, 1e-8 * (1 + dense.lambda_max_gn));
  }
}

TEST(SpectrumReport, NoiselessTruthMatchesGaussNewton) {
  // 30 equispaced points skip x = 0, so the hat network is admissible.
  const auto d = sr::gen_hat_dataset(30, 0.0, 1);
  sr::NetParams f0(2);
  f0.w1 = {1.0, -1.0};
  f0.w2 = {-2.0, -2.0};
  f0.b2 = 1.0;
  const auto rep = sr::spectrum_report(f0, d);
  EXPECT_NEAR(rep.residual_quadform, 0.0, 1e-14);
  EXPECT_NEAR(rep.lambda_max_full, rep.lambda_max_gn, 1e-10);
}

TEST(GaussNewton, PositiveSemidefiniteOnRandomDirections) {
  const auto d = sr::gen_hat_dataset(30, 0.5, 9);
  std::uint64_t seed = 400;
  const auto p = admissible(d, 50, seed);
  const Eigen::MatrixXd gn = sr::loss_hessian(p, d).gn;
  sr::Rng rng(1);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    Eigen::VectorXd v(p.dim());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
    v.normalize();
    worst = std::min(worst, v.dot(gn * v));
  }
  EXPECT_GE(worst, -1e-10);
}

TEST(Stability, ThresholdIsInclusive) {
  EXPECT_TRUE(sr::is_stable_value(4.9, 0.4));
  EXPECT_FALSE(sr::is_stable_value(5.1, 0.4));
  EXPECT_TRUE(sr::is_stable_value(5.0, 0.4));
}

TEST(Beos, FirstIndex) {
  const std::vector<double> trace{5.2, 5.1, 4.9, 4.95};
  EXPECT_EQ(sr::beos_first_index(trace, 0.4, 0.1), 0u);
  EXPECT_EQ(sr::beos_first_index(trace, 0.4, 0.0), 2u);
  const std::vector<double> high{6.0, 7.0};
  EXPECT_FALSE(sr::beos_first_index(high, 0.4, 0.1).has_value());
  EXPECT_THROW(sr::beos_first_index(trace, 0.4, -1.0), sr::Error);
}

namespace {

sr::LinearizedTrace scalar_run(double curvature, double eta, int steps) {
  sr::LinearOperator op = [curvature](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    out = curvature * in;
  };
  return sr::linearized_dynamics(Eigen::VectorXd::Zero(1), op, eta,
                                 Eigen::VectorXd::Constant(1, 1e-3), steps);
}

}  // namespace

TEST(LinearizedDynamics, ScalarQuadratics) {
  const auto decay = scalar_run(1.0, 1.9, 50);
  const auto grow = scalar_run(1.0, 2.1, 50);
  const auto flat = scalar_run(1.0, 2.0, 1000);
  for (std::size_t t = 1; t < decay.norms.size(); ++t) {
    EXPECT_NEAR(decay.norms[t] / decay.norms[t - 1], 0.9, 1e-12);
    EXPECT_NEAR(grow.norms[t] / grow.norms[t - 1], 1.1, 1e-12);
  }
  for (double v : flat.norms) EXPECT_NEAR(v, 1e-3, 1e-12);
  EXPECT_EQ(flat.grad_norm, 0.0);
}

TEST(LinearizedDynamics, BoundedIffBelowThreshold) {
  sr::Rng rng(50);
  for (int t = 0; t < 50; ++t) {
    const double lambda = rng.uniform(0.5, 20.0);
    const double eta = rng.uniform(0.01, 1.0);
    if (std::fabs(lambda - 2.0 / eta) < 1e-3) continue;
    // Diagonal quadratic with top eigenvalue lambda.
    Eigen::VectorXd diag(3);
    diag << lambda, 0.5 * lambda, 0.1 * lambda;
    sr::LinearOperator op = [&diag](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
      out = diag.cwiseProduct(in);
    };
    const auto tr = sr::linearized_dynamics(Eigen::VectorXd::Zero(3), op, eta,
                                            Eigen::VectorXd::Ones(3), 2000);
    const bool bounded = tr.norms.back() <= tr.norms.front();
    EXPECT_EQ(bounded, lambda <= 2.0 / eta) << lambda << " " << eta;
  }
}

TEST(LinearizedDynamics, NetworkVersionReportsGradient) {
  const auto d = sr::gen_hat_dataset(30, 0.5, 2);
  std::uint64_t seed = 500;
  const auto p = admissible(d, 10, seed);
  const auto tr = sr::linearized_dynamics(p, d, 0.01, Eigen::VectorXd::Zero(p.dim()), 3);
  EXPECT_NEAR(tr.grad_norm, sr::loss_gradient(p, d).norm(), 1e-14);
  EXPECT_EQ(tr.norms.front(), 0.0);
  EXPECT_GT(tr.norms.back(), 0.0);  // the gradient term drives a non-minimum
}
