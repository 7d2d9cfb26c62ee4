#pragma once

// Training loss L(theta) = 1/(2n) sum_i (f(x_i) - y_i)^2, its derivatives,
// and the split of the loss Hessian into a Gauss-Newton part
// (1/n) sum_i grad f(x_i) grad f(x_i)^T and a residual part
// (1/n) sum_i (f(x_i) - y_i) hess f(x_i).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stablerelu/dataset.hpp"
#include "stablerelu/errors.hpp"
#include "stablerelu/random.hpp"
#include "stablerelu/relu_net.hpp"

namespace stablerelu {

inline Eigen::VectorXd residuals(const NetParams& p, const Dataset& d) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(d.size()));
  for (std::size_t i = 0; i < d.size(); ++i) r[i] = forward(p, d.xs[i]) - d.ys[i];
  return r;
}

inline double loss(const NetParams& p, const Dataset& d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double r = forward(p, d.xs[i]) - d.ys[i];
    acc += r * r;
  }
  return acc / (2.0 * static_cast<double>(d.size()));
}

// Fills grad (resized to 3k+1) and returns the loss. Single pass over the
// data; this is the training hot path.
inline double loss_and_gradient(const NetParams& p, const Dataset& d,
                                Eigen::VectorXd& grad) {
  const std::size_t k = p.k();
  const std::size_t n = d.size();
  grad.setZero(static_cast<Eigen::Index>(p.dim()));
  double* gw1 = grad.data();
  double* gb1 = gw1 + k;
  double* gw2 = gb1 + k;
  double gb2 = 0.0;
  double acc = 0.0;
  std::vector<double> pre(k);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = d.xs[i];
    double f = p.b2;
    for (std::size_t j = 0; j < k; ++j) {
      pre[j] = p.w1[j] * x + p.b1[j];
      if (pre[j] > 0.0) f += p.w2[j] * pre[j];
    }
    const double r = f - d.ys[i];
    acc += r * r;
    for (std::size_t j = 0; j < k; ++j) {
      if (!(pre[j] > 0.0)) continue;
      const double rw = r * p.w2[j];
      gw1[j] += rw * x;
      gb1[j] += rw;
      gw2[j] += r * pre[j];
    }
    gb2 += r;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  grad *= inv_n;
  grad[static_cast<Eigen::Index>(p.idx_b2())] = gb2 * inv_n;
  return acc * 0.5 * inv_n;
}

inline Eigen::VectorXd loss_gradient(const NetParams& p, const Dataset& d) {
  Eigen::VectorXd g;
  loss_and_gradient(p, d, g);
  return g;
}

// Rows are param_gradient(p, x_i).
inline Eigen::MatrixXd jacobian(const NetParams& p, const Dataset& d) {
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(d.size()),
                      static_cast<Eigen::Index>(p.dim()));
  for (std::size_t i = 0; i < d.size(); ++i) {
    jac.row(static_cast<Eigen::Index>(i)) = param_gradient(p, d.xs[i]).transpose();
  }
  return jac;
}

inline void require_twice_differentiable(const NetParams& p, const Dataset& d,
                                         double diff_tol = kDefaultDiffTol) {
  for (std::size_t i = 0; i < d.size(); ++i) {
    detail::require_twice_differentiable(p, d.xs[i], diff_tol,
                                         static_cast<long>(i));
  }
}

// The residual Hessian (1/n) sum_i r_i hess f(x_i) is block diagonal over
// neurons; neuron j contributes c_w[j] at (w1_j, w2_j) and c_b[j] at
// (b1_j, w2_j), plus the symmetric entries.
struct ResidualCoupling {
  std::vector<double> c_w;
  std::vector<double> c_b;

  // Exact spectral norm: each 3x3 block has eigenvalues 0, +-sqrt(cw^2+cb^2).
  double norm() const {
    double m = 0.0;
    for (std::size_t j = 0; j < c_w.size(); ++j) {
      m = std::max(m, std::hypot(c_w[j], c_b[j]));
    }
    return m;
  }
};

inline ResidualCoupling residual_coupling(const NetParams& p, const Dataset& d,
                                          const Eigen::VectorXd& res) {
  ResidualCoupling rc{std::vector<double>(p.k(), 0.0),
                      std::vector<double>(p.k(), 0.0)};
  const double inv_n = 1.0 / static_cast<double>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double x = d.xs[i];
    for (std::size_t j = 0; j < p.k(); ++j) {
      if (p.w1[j] * x + p.b1[j] > 0.0) {
        rc.c_w[j] += res[i] * x;
        rc.c_b[j] += res[i];
      }
    }
  }
  for (std::size_t j = 0; j < p.k(); ++j) {
    rc.c_w[j] *= inv_n;
    rc.c_b[j] *= inv_n;
  }
  return rc;
}

inline void add_residual_coupling(const NetParams& p, const ResidualCoupling& rc,
                                  Eigen::MatrixXd& m) {
  for (std::size_t j = 0; j < p.k(); ++j) {
    const auto w1 = static_cast<Eigen::Index>(p.idx_w1(j));
    const auto b1 = static_cast<Eigen::Index>(p.idx_b1(j));
    const auto w2 = static_cast<Eigen::Index>(p.idx_w2(j));
    m(w1, w2) += rc.c_w[j];
    m(w2, w1) += rc.c_w[j];
    m(b1, w2) += rc.c_b[j];
    m(w2, b1) += rc.c_b[j];
  }
}

inline double residual_quadratic_form(const NetParams& p,
                                      const ResidualCoupling& rc,
                                      const Eigen::VectorXd& v) {
  double q = 0.0;
  for (std::size_t j = 0; j < p.k(); ++j) {
    q += 2.0 * v[static_cast<Eigen::Index>(p.idx_w2(j))] *
         (rc.c_w[j] * v[static_cast<Eigen::Index>(p.idx_w1(j))] +
          rc.c_b[j] * v[static_cast<Eigen::Index>(p.idx_b1(j))]);
  }
  return q;
}

struct LossHessian {
  Eigen::MatrixXd full;
  Eigen::MatrixXd gn;
  Eigen::MatrixXd residual;
};

inline LossHessian loss_hessian(const NetParams& p, const Dataset& d,
                                double diff_tol = kDefaultDiffTol) {
  require_twice_differentiable(p, d, diff_tol);
  const Eigen::MatrixXd jac = jacobian(p, d);
  const double inv_n = 1.0 / static_cast<double>(d.size());
  LossHessian h;
  h.gn = (jac.transpose() * jac) * inv_n;
  h.residual = Eigen::MatrixXd::Zero(h.gn.rows(), h.gn.cols());
  add_residual_coupling(p, residual_coupling(p, d, residuals(p, d)), h.residual);
  h.full = h.gn + h.residual;
  return h;
}

// ---------------------------------------------------------------------------
// Top eigenvalue of a symmetric operator.

enum class EigenMethod { kDense, kPower };

inline const char* eigen_method_name(EigenMethod m) {
  return m == EigenMethod::kDense ? "dense" : "power";
}

using LinearOperator =
    std::function<void(const Eigen::VectorXd& in, Eigen::VectorXd& out)>;

struct EigenOptions {
  EigenMethod method = EigenMethod::kDense;
  // Power method: stop once ||A v - rho v|| <= tol, which places rho within
  // tol of an eigenvalue.
  double tol = 1e-10;
  int max_iters = 200000;
  // Upper bound on the operator norm used as the spectral shift. When unset
  // the power method estimates one (see below).
  std::optional<double> norm_bound;
  std::uint64_t seed = 0x9e3779b97f4a7c15ULL;
};

struct EigenResult {
  double value = 0.0;
  Eigen::VectorXd vec;
  int iterations = 0;
  double residual = 0.0;
};

namespace detail {

// Sign convention so that results are reproducible: largest |entry| > 0.
inline void canonical_sign(Eigen::VectorXd& v) {
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v[arg] < 0.0) v = -v;
}

inline EigenResult top_eigen_dense(const Eigen::MatrixXd& a) {
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  EigenResult out;
  const Eigen::Index last = sym.rows() - 1;
  out.value = es.eigenvalues()[last];
  out.vec = es.eigenvectors().col(last);
  canonical_sign(out.vec);
  return out;
}

inline EigenResult top_eigen_power(const LinearOperator& op, Eigen::Index dim,
                                   const EigenOptions& opts) {
  Rng rng(opts.seed);
  Eigen::VectorXd v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = rng.normal();
  v.normalize();
  Eigen::VectorXd av(dim);

  double shift = 0.0;
  if (opts.norm_bound) {
    shift = *opts.norm_bound;
  } else {
    // Unshifted power steps converge to the largest |eigenvalue|; twice that
    // estimate plus one is a safe shift in practice.
    Eigen::VectorXd u = v;
    double rho = 0.0;
    for (int it = 0; it < 100; ++it) {
      op(u, av);
      rho = av.norm();
      if (rho == 0.0) break;
      u = av / rho;
    }
    shift = 2.0 * rho + 1.0;
  }

  double rayleigh = 0.0;
  double residual = 0.0;
  for (int it = 1; it <= opts.max_iters; ++it) {
    op(v, av);
    rayleigh = v.dot(av);
    residual = (av - rayleigh * v).norm();
    if (residual <= opts.tol) {
      EigenResult out{rayleigh, v, it, residual};
      canonical_sign(out.vec);
      return out;
    }
    av += shift * v;
    const double nrm = av.norm();
    if (nrm == 0.0) break;
    v = av / nrm;
  }
  throw NoConvergence(opts.max_iters, rayleigh, residual);
}

}  // namespace detail

inline EigenResult lambda_max(const LinearOperator& op, Eigen::Index dim,
                              const EigenOptions& opts = {}) {
  if (opts.method == EigenMethod::kPower) {
    return detail::top_eigen_power(op, dim, opts);
  }
  Eigen::MatrixXd a(dim, dim);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd col(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    e[j] = 1.0;
    op(e, col);
    a.col(j) = col;
    e[j] = 0.0;
  }
  return detail::top_eigen_dense(a);
}

inline EigenResult lambda_max(const Eigen::MatrixXd& a,
                              const EigenOptions& opts = {}) {
  if (opts.method == EigenMethod::kDense) return detail::top_eigen_dense(a);
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  LinearOperator op = [&sym](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    out.noalias() = sym * in;
  };
  return detail::top_eigen_power(op, sym.rows(), opts);
}

// ---------------------------------------------------------------------------
// Spectrum of the loss Hessian at a parameter.

struct SpectrumReport {
  double lambda_max_full = 0.0;
  double lambda_max_gn = 0.0;
  // v^T R v at the Gauss-Newton top eigenvector v.
  double residual_quadform = 0.0;
  // Top eigenvector of the Gauss-Newton matrix (the test vector v).
  Eigen::VectorXd top_eigvec;
  EigenMethod method = EigenMethod::kDense;
};

struct SpectrumOptions {
  std::optional<EigenMethod> method;  // unset: dense up to dense_max_dim
  std::size_t dense_max_dim = 2000;
  double diff_tol = kDefaultDiffTol;
  double power_tol = 1e-10;
  int power_max_iters = 200000;
};

namespace detail {

// Largest eigenvalue of a symmetric matrix, eigenvalues only. Rows and
// columns that are identically zero are dropped first; they only add
// zero eigenvalues.
inline double top_eigenvalue_compressed(const Eigen::MatrixXd& m) {
  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (m.col(i).cwiseAbs().maxCoeff() != 0.0) keep.push_back(i);
  }
  const bool dropped = keep.size() < static_cast<std::size_t>(m.rows());
  if (keep.empty()) return 0.0;
  const auto r = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd sub(r, r);
  for (Eigen::Index a = 0; a < r; ++a) {
    for (Eigen::Index b = 0; b < r; ++b) sub(a, b) = m(keep[a], keep[b]);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sub, Eigen::EigenvaluesOnly);
  const double top = es.eigenvalues()[r - 1];
  return dropped ? std::max(top, 0.0) : top;
}

}  // namespace detail

inline SpectrumReport spectrum_report(const NetParams& p, const Dataset& d,
                                      const SpectrumOptions& opts = {}) {
  require_twice_differentiable(p, d, opts.diff_tol);
  const EigenMethod method =
      opts.method.value_or(p.dim() <= opts.dense_max_dim ? EigenMethod::kDense
                                                         : EigenMethod::kPower);
  const Eigen::MatrixXd jac = jacobian(p, d);
  const double inv_n = 1.0 / static_cast<double>(d.size());
  const Eigen::VectorXd res = residuals(p, d);
  const ResidualCoupling rc = residual_coupling(p, d, res);
  const auto dim = static_cast<Eigen::Index>(p.dim());

  SpectrumReport rep;
  rep.method = method;
  if (method == EigenMethod::kDense) {
    if (jac.rows() < dim) {
      // Nonzero spectrum of J^T J / n equals that of J J^T / n.
      const Eigen::MatrixXd gram = (jac * jac.transpose()) * inv_n;
      const EigenResult top = detail::top_eigen_dense(gram);
      rep.lambda_max_gn = top.value;
      Eigen::VectorXd v = jac.transpose() * top.vec;
      const double nrm = v.norm();
      if (nrm > 0.0) {
        rep.top_eigvec = v / nrm;
      } else {
        rep.top_eigvec = Eigen::VectorXd::Unit(dim, dim - 1);
      }
    } else {
      const EigenResult top =
          detail::top_eigen_dense((jac.transpose() * jac) * inv_n);
      rep.lambda_max_gn = top.value;
      rep.top_eigvec = top.vec;
    }
    detail::canonical_sign(rep.top_eigvec);
    Eigen::MatrixXd full = (jac.transpose() * jac) * inv_n;
    add_residual_coupling(p, rc, full);
    rep.lambda_max_full = detail::top_eigenvalue_compressed(full);
  } else {
    const double trace_gn = jac.squaredNorm() * inv_n;
    LinearOperator gn_op = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
      out.noalias() = jac.transpose() * (jac * in);
      out *= inv_n;
    };
    LinearOperator full_op = [&](const Eigen::VectorXd& in,
                                 Eigen::VectorXd& out) {
      gn_op(in, out);
      for (std::size_t j = 0; j < p.k(); ++j) {
        const auto w1 = static_cast<Eigen::Index>(p.idx_w1(j));
        const auto b1 = static_cast<Eigen::Index>(p.idx_b1(j));
        const auto w2 = static_cast<Eigen::Index>(p.idx_w2(j));
        out[w1] += rc.c_w[j] * in[w2];
        out[b1] += rc.c_b[j] * in[w2];
        out[w2] += rc.c_w[j] * in[w1] + rc.c_b[j] * in[b1];
      }
    };
    EigenOptions eo;
    eo.method = EigenMethod::kPower;
    eo.tol = opts.power_tol;
    eo.max_iters = opts.power_max_iters;
    eo.norm_bound = 1.0 + trace_gn;
    const EigenResult gn = lambda_max(gn_op, dim, eo);
    eo.norm_bound = 1.0 + trace_gn + rc.norm();
    const EigenResult full = lambda_max(full_op, dim, eo);
    rep.lambda_max_gn = gn.value;
    rep.top_eigvec = gn.vec;
    rep.lambda_max_full = full.value;
  }
  rep.residual_quadform = residual_quadratic_form(p, rc, rep.top_eigvec);
  return rep;
}

// Top eigenvalue of the Gauss-Newton term alone. Needs no
// twice-differentiability; cheap through the smaller Gram side.
inline double gauss_newton_lambda_max(const NetParams& p, const Dataset& d) {
  const Eigen::MatrixXd jac = jacobian(p, d);
  const double inv_n = 1.0 / static_cast<double>(d.size());
  Eigen::MatrixXd m = jac.rows() < jac.cols() ? Eigen::MatrixXd(jac * jac.transpose())
                                              : Eigen::MatrixXd(jac.transpose() * jac);
  m *= inv_n;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()[m.rows() - 1];
}

// ---------------------------------------------------------------------------
// Stability verdicts.

inline bool is_stable_value(double lambda_max_full, double eta) {
  return lambda_max_full <= 2.0 / eta;
}

inline bool is_stable(const NetParams& p, const Dataset& d, double eta,
                      const SpectrumOptions& opts = {}) {
  return is_stable_value(spectrum_report(p, d, opts).lambda_max_full, eta);
}

// Smallest t* such that trace[t] <= 2 e^eps / eta for every t >= t*.
inline std::optional<std::size_t> beos_first_index(std::span<const double> trace,
                                                   double eta, double eps) {
  if (eps < 0.0) throw Error(ErrorKind::kInvalidConfig, "eps must be >= 0");
  const double threshold = 2.0 * std::exp(eps) / eta;
  std::optional<std::size_t> first;
  for (std::size_t t = trace.size(); t-- > 0;) {
    if (!(trace[t] <= threshold)) break;
    first = t;
  }
  return first;
}

// Linearized GD around theta*: delta_{t+1} = delta_t - eta (g + H delta_t),
// with g the loss gradient at theta*.
struct LinearizedTrace {
  std::vector<double> norms;  // ||delta_t|| for t = 0..steps
  double grad_norm = 0.0;     // ||g||; ~0 at a true minimum
};

inline LinearizedTrace linearized_dynamics(const Eigen::VectorXd& grad_at_star,
                                           const LinearOperator& hessian,
                                           double eta,
                                           const Eigen::VectorXd& delta0,
                                           int steps) {
  LinearizedTrace out;
  out.grad_norm = grad_at_star.norm();
  out.norms.reserve(static_cast<std::size_t>(steps) + 1);
  Eigen::VectorXd delta = delta0;
  Eigen::VectorXd hd(delta.size());
  out.norms.push_back(delta.norm());
  for (int t = 0; t < steps; ++t) {
    hessian(delta, hd);
    delta -= eta * (grad_at_star + hd);
    out.norms.push_back(delta.norm());
  }
  return out;
}

inline LinearizedTrace linearized_dynamics(const NetParams& star,
                                           const Dataset& d, double eta,
                                           const Eigen::VectorXd& delta0,
                                           int steps,
                                           double diff_tol = kDefaultDiffTol) {
  const LossHessian h = loss_hessian(star, d, diff_tol);
  const Eigen::VectorXd g = loss_gradient(star, d);
  LinearOperator op = [&h](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    out.noalias() = h.full * in;
  };
  return linearized_dynamics(g, op, eta, delta0, steps);
}

}  // namespace stablerelu
