#ifndef GPOS_GP_HPP
#define GPOS_GP_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "gpos/common.hpp"

namespace gpos {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Matern 5/2 hyperparameters. Both live in standardized units once attached
/// to a GPModel.
struct KernelParams {
  double signal_variance = 1.0;
  VectorXd lengthscales = VectorXd::Ones(3);

  void validate() const {
    if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
      throw UsageError("kernel: signal variance must be > 0");
    if (lengthscales.size() == 0) throw UsageError("kernel: no lengthscales");
    for (Eigen::Index d = 0; d < lengthscales.size(); ++d)
      if (!(lengthscales[d] > 0.0) || !std::isfinite(lengthscales[d]))
        throw UsageError("kernel: lengthscales must be > 0");
  }
};

/// k(x, y) = s2 (1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r),
/// r^2 = sum_d ((x_d - y_d) / l_d)^2.
template <typename A, typename B>
double matern52(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y,
                const KernelParams& k) {
  double r2 = 0.0;
  for (Eigen::Index d = 0; d < k.lengthscales.size(); ++d) {
    const double t = (x.derived().coeff(d) - y.derived().coeff(d)) / k.lengthscales[d];
    r2 += t * t;
  }
  const double r = std::sqrt(r2);
  const double sr = std::sqrt(5.0) * r;
  return k.signal_variance * (1.0 + sr + sr * sr / 3.0) * std::exp(-sr);
}

namespace detail {

inline double matern52_profile(double r2, double signal_variance) {
  const double sr = std::sqrt(5.0 * r2);
  return signal_variance * (1.0 + sr + sr * sr / 3.0) * std::exp(-sr);
}

/// Rows divided by the lengthscales, stored transposed so each point is a
/// contiguous column.
inline MatrixXd scaled_columns(const MatrixXd& a, const KernelParams& k) {
  if (a.cols() != k.lengthscales.size())
    throw UsageError("kernel: input dimension does not match lengthscale count");
  return (a.array().rowwise() / k.lengthscales.transpose().array()).matrix().transpose();
}

}  // namespace detail

/// Gram matrix K(A, B) over the rows of A and B.
inline MatrixXd kernel_matrix(const MatrixXd& a, const MatrixXd& b, const KernelParams& k) {
  const MatrixXd za = detail::scaled_columns(a, k), zb = detail::scaled_columns(b, k);
  MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      out(i, j) = detail::matern52_profile((za.col(i) - zb.col(j)).squaredNorm(), k.signal_variance);
  return out;
}

inline MatrixXd kernel_matrix(const MatrixXd& a, const KernelParams& k) {
  const MatrixXd z = detail::scaled_columns(a, k);
  const Eigen::Index n = a.rows();
  MatrixXd out(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    out(j, j) = k.signal_variance;
    for (Eigen::Index i = j + 1; i < n; ++i)
      out(i, j) = out(j, i) = detail::matern52_profile((z.col(i) - z.col(j)).squaredNorm(), k.signal_variance);
  }
  return out;
}

struct PredictiveMoments {
  double mean = 0.0;
  double std = 0.0;
};

/// Affine maps between raw and standardized inputs/targets.
struct Standardization {
  VectorXd input_mean;
  VectorXd input_scale;
  double target_mean = 0.0;
  double target_scale = 1.0;
};

struct GPOptions {
  double jitter_start = 1e-8;  ///< relative to the mean diagonal
  double jitter_growth = 100.0;
  int jitter_levels = 3;       ///< 1e-8, 1e-6, 1e-4
  /// Add the mean training noise variance to predictive variances.
  bool include_noise = false;
};

namespace detail {

struct Factorization {
  MatrixXd lower;
  double jitter = 0.0;
};

/// Cholesky of K + diag(noise) + jitter I with jitter escalation. Returns
/// nothing if every level fails.
inline std::optional<Factorization> factorize(MatrixXd gram, const VectorXd& noise, const GPOptions& opt) {
  gram.diagonal() += noise;
  const double base = gram.diagonal().mean() * opt.jitter_start;
  double jitter = base;
  MatrixXd work(gram.rows(), gram.cols());
  for (int level = 0; level < opt.jitter_levels; ++level, jitter *= opt.jitter_growth) {
    work = gram;
    work.diagonal().array() += jitter;
    Eigen::LLT<Eigen::Ref<MatrixXd>> llt(work);  // in place, lower triangle
    if (llt.info() != Eigen::Success) continue;
    const auto d = work.diagonal();
    if (!d.allFinite() || (d.array() <= 0.0).any()) continue;
    work.triangularView<Eigen::StrictlyUpper>().setZero();
    return Factorization{std::move(work), jitter};
  }
  return std::nullopt;
}

inline double log_marginal_likelihood(const Factorization& f, const VectorXd& y) {
  const VectorXd z = f.lower.triangularView<Eigen::Lower>().solve(y);
  const double n = static_cast<double>(y.size());
  return -0.5 * z.squaredNorm() - f.lower.diagonal().array().log().sum() -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

inline Standardization standardize(const MatrixXd& x, const VectorXd& y) {
  Standardization s;
  const double n = static_cast<double>(x.rows());
  s.input_mean = x.colwise().mean().transpose();
  s.input_scale.resize(x.cols());
  for (Eigen::Index d = 0; d < x.cols(); ++d) {
    const double var = (x.col(d).array() - s.input_mean[d]).square().sum() / n;
    s.input_scale[d] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  s.target_mean = y.mean();
  const double var = (y.array() - s.target_mean).square().sum() / n;
  s.target_scale = var > 0.0 ? std::sqrt(var) : 1.0;
  return s;
}

inline MatrixXd apply_inputs(const Standardization& s, const MatrixXd& x) {
  return (x.rowwise() - s.input_mean.transpose()).array().rowwise() /
         s.input_scale.transpose().array();
}

inline void check_shapes(const MatrixXd& x, const VectorXd& y, const VectorXd& noise, Eigen::Index min_n,
                         const char* who) {
  if (x.rows() != y.size() || noise.size() != y.size())
    throw UsageError(std::string(who) + ": inputs, targets and noise differ in length");
  if (x.rows() < min_n)
    throw InsufficientDataError(std::string(who) + ": need at least " + std::to_string(min_n) +
                                " points, got " + std::to_string(x.rows()));
  if (!x.allFinite() || !y.allFinite() || !noise.allFinite())
    throw DataError(std::string(who) + ": non-finite training data");
  if ((noise.array() < 0.0).any())
    throw UsageError(std::string(who) + ": noise variances must be >= 0");
}

}  // namespace detail

/// Trained exact GP on standardized data. Immutable after construction.
class GPModel {
 public:
  /// Build from already standardized training data (the persistence path).
  GPModel(KernelParams kernel, MatrixXd std_inputs, VectorXd std_targets, VectorXd std_noise,
          Standardization standardization, GPOptions options = {})
      : kernel_(std::move(kernel)),
        inputs_(std::move(std_inputs)),
        targets_(std::move(std_targets)),
        noise_(std::move(std_noise)),
        standardization_(std::move(standardization)),
        options_(options) {
    kernel_.validate();
    detail::check_shapes(inputs_, targets_, noise_, 2, "gp train");
    if (kernel_.lengthscales.size() != inputs_.cols())
      throw UsageError("gp train: lengthscale count does not match input dimension");
    reject_conflicting_duplicates();
    auto f = detail::factorize(kernel_matrix(inputs_, kernel_), noise_, options_);
    if (!f)
      throw NumericError("gp train: covariance factorization failed after jitter escalation");
    factor_ = std::move(f->lower);
    jitter_ = f->jitter;
    const VectorXd z = factor_.triangularView<Eigen::Lower>().solve(targets_);
    weights_ = factor_.transpose().triangularView<Eigen::Upper>().solve(z);
    mean_noise_ = noise_.mean();
  }

  PredictiveMoments predict(const VectorXd& x) const {
    const VectorXd xs = (x - standardization_.input_mean).cwiseQuotient(standardization_.input_scale);
    VectorXd k(inputs_.rows());
    for (Eigen::Index i = 0; i < inputs_.rows(); ++i) k[i] = matern52(inputs_.row(i).transpose(), xs, kernel_);
    const double mean_s = k.dot(weights_);
    const VectorXd v = factor_.triangularView<Eigen::Lower>().solve(k);
    double var_s = std::max(0.0, kernel_.signal_variance - v.squaredNorm());
    if (options_.include_noise) var_s += mean_noise_;
    return {standardization_.target_mean + standardization_.target_scale * mean_s,
            standardization_.target_scale * std::sqrt(var_s)};
  }

  /// One Gaussian draw from the predictive distribution at x.
  double sample_posterior(const VectorXd& x, std::uint64_t seed) const {
    const auto m = predict(x);
    Rng rng(seed);
    return rng.normal(m.mean, m.std);
  }

  double log_marginal_likelihood() const {
    return detail::log_marginal_likelihood({factor_, jitter_}, targets_);
  }

  const KernelParams& kernel() const { return kernel_; }
  const MatrixXd& inputs() const { return inputs_; }
  const VectorXd& targets() const { return targets_; }
  const VectorXd& noise_variances() const { return noise_; }
  const Standardization& standardization() const { return standardization_; }
  const GPOptions& options() const { return options_; }
  const MatrixXd& factor() const { return factor_; }
  const VectorXd& weights() const { return weights_; }
  double jitter() const { return jitter_; }
  Eigen::Index size() const { return inputs_.rows(); }

 private:
  // Identical noise-free inputs with different targets make the covariance
  // exactly singular; jitter would hide that and interpolate neither.
  void reject_conflicting_duplicates() const {
    const Eigen::Index n = inputs_.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (noise_[i] > 0.0) continue;
      for (Eigen::Index j = 0; j < i; ++j)
        if (noise_[j] == 0.0 && targets_[i] != targets_[j] && inputs_.row(i) == inputs_.row(j))
          throw NumericError("gp train: singular covariance (duplicate noise-free inputs at rows " +
                             std::to_string(j) + " and " + std::to_string(i) +
                             " with different targets)");
    }
  }

  KernelParams kernel_;
  MatrixXd inputs_;
  VectorXd targets_;
  VectorXd noise_;
  Standardization standardization_;
  GPOptions options_;
  MatrixXd factor_;
  VectorXd weights_;
  double jitter_ = 0.0;
  double mean_noise_ = 0.0;
};

/// Standardize raw data and train. `kernel` is in standardized units; noise
/// variances are in raw target units.
inline GPModel train(const MatrixXd& inputs, const VectorXd& targets, const VectorXd& noise_variances,
                     const KernelParams& kernel, const GPOptions& options = {}) {
  detail::check_shapes(inputs, targets, noise_variances, 2, "gp train");
  const auto s = detail::standardize(inputs, targets);
  VectorXd ys = (targets.array() - s.target_mean) / s.target_scale;
  VectorXd ns = noise_variances / (s.target_scale * s.target_scale);
  return GPModel(kernel, detail::apply_inputs(s, inputs), std::move(ys), std::move(ns), s, options);
}

// ---------------------------------------------------------------------------
// Hyperparameter search

struct HyperSearch {
  int restarts = 5;
  double lengthscale_min = 1e-2;
  double lengthscale_max = 1e2;
  double signal_variance_min = 1e-4;
  double signal_variance_max = 1e2;
  double init_min = 0.1;  ///< log-uniform initialization range, both params
  double init_max = 10.0;
  double window = 2.3;        ///< largest half-width of a line search, log units
  double min_window = 0.05;   ///< smallest half-width
  double resolution = 1e-3;   ///< golden-section stops at this bracket width
  int golden_iterations = 20; ///< cap per line search
  int max_passes = 30;
  double rel_tol = 1e-6;
  std::size_t threads = 1;
};

struct HyperResult {
  KernelParams kernel;
  double lml = -std::numeric_limits<double>::infinity();
  std::vector<double> initial_lml;  ///< per restart
  std::vector<double> final_lml;    ///< per restart
  std::vector<int> passes;          ///< per restart
};

namespace detail {

class LmlObjective {
 public:
  LmlObjective(const MatrixXd& x, const VectorXd& y, const VectorXd& noise, const GPOptions& opt)
      : x_(x), y_(y), noise_(noise), opt_(opt) {}

  /// theta = (log s2, log l_1, ..., log l_d); -inf where factorization fails.
  double operator()(const VectorXd& theta) const {
    KernelParams k;
    k.signal_variance = std::exp(theta[0]);
    k.lengthscales = theta.tail(theta.size() - 1).array().exp();
    auto f = factorize(kernel_matrix(x_, k), noise_, opt_);
    if (!f) return -std::numeric_limits<double>::infinity();
    return log_marginal_likelihood(*f, y_);
  }

 private:
  const MatrixXd& x_;
  const VectorXd& y_;
  const VectorXd& noise_;
  GPOptions opt_;
};

/// Golden-section maximization of f over [lo, hi].
template <typename F>
std::pair<double, double> golden_max(F&& f, double lo, double hi, int iterations) {
  constexpr double invphi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iterations; ++i) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return fc >= fd ? std::pair{c, fc} : std::pair{d, fd};
}

}  // namespace detail

/// Maximize the log marginal likelihood of the standardized data over log
/// hyperparameters by coordinate-wise golden-section passes, best of
/// `restarts` seeded initializations (restart 0 starts at all-ones).
inline HyperResult fit_hyperparams_detailed(const MatrixXd& inputs, const VectorXd& targets,
                                            const VectorXd& noise_variances, std::uint64_t seed,
                                            const HyperSearch& search = {},
                                            const GPOptions& options = {}) {
  detail::check_shapes(inputs, targets, noise_variances, 5, "fit_hyperparams");
  if (search.restarts < 1) throw UsageError("fit_hyperparams: restarts must be >= 1");
  const auto s = detail::standardize(inputs, targets);
  const MatrixXd xs = detail::apply_inputs(s, inputs);
  const VectorXd ys = (targets.array() - s.target_mean) / s.target_scale;
  const VectorXd ns = noise_variances / (s.target_scale * s.target_scale);
  const detail::LmlObjective objective(xs, ys, ns, options);

  const Eigen::Index dim = inputs.cols();
  VectorXd lo(dim + 1), hi(dim + 1);
  lo[0] = std::log(search.signal_variance_min);
  hi[0] = std::log(search.signal_variance_max);
  lo.tail(dim).setConstant(std::log(search.lengthscale_min));
  hi.tail(dim).setConstant(std::log(search.lengthscale_max));

  const auto restarts = static_cast<std::size_t>(search.restarts);
  std::vector<VectorXd> best_theta(restarts);
  std::vector<double> init_lml(restarts), final_lml(restarts);
  std::vector<int> passes(restarts, 0);

  parallel_for(restarts, search.threads, [&](std::size_t r) {
    VectorXd theta = VectorXd::Zero(dim + 1);
    if (r > 0) {
      Rng rng(derive_seed(seed, r));
      for (Eigen::Index i = 0; i <= dim; ++i)
        theta[i] = rng.uniform(std::log(search.init_min), std::log(search.init_max));
    }
    theta = theta.cwiseMax(lo).cwiseMin(hi);
    double f = objective(theta);
    init_lml[r] = f;
    // Each coordinate's window follows its last move: wide at first, then
    // narrow around a settled value, widened again whenever a step hits the edge.
    VectorXd window = VectorXd::Constant(dim + 1, search.window);
    for (int pass = 0; pass < search.max_passes; ++pass) {
      ++passes[r];
      const double before = f;
      const VectorXd start = theta;
      for (Eigen::Index c = 0; c <= dim; ++c) {
        const double a = std::max(lo[c], theta[c] - window[c]);
        const double b = std::min(hi[c], theta[c] + window[c]);
        VectorXd probe = theta;
        auto line = [&](double t) {
          probe[c] = t;
          return objective(probe);
        };
        const int iters = std::clamp(
            static_cast<int>(std::ceil(std::log((b - a) / search.resolution) / std::log(1.618033988749895))), 1,
            search.golden_iterations);
        const auto [t, ft] = detail::golden_max(line, a, b, iters);
        double step = 0.0;
        if (ft > f) {
          step = std::abs(t - theta[c]);
          theta[c] = t;
          f = ft;
        }
        window[c] = std::clamp(step >= 0.9 * window[c] ? 2.0 * window[c] : 3.0 * step, search.min_window,
                               search.window);
      }
      // Pattern move along the net displacement of the pass; coordinate
      // ascent alone zigzags when lengthscales are correlated.
      const VectorXd dir = theta - start;
      if (dir.norm() > 0.0) {
        auto along = [&](double t) { return objective((start + t * dir).cwiseMax(lo).cwiseMin(hi)); };
        const auto [t, ft] = detail::golden_max(along, 1.0, 4.0, 10);
        if (ft > f) {
          theta = (start + t * dir).cwiseMax(lo).cwiseMin(hi);
          f = ft;
        }
      }
      if (std::isfinite(before) && f - before <= search.rel_tol * std::max(1.0, std::abs(before))) break;
    }
    best_theta[r] = theta;
    final_lml[r] = f;
  });

  std::size_t best = 0;
  for (std::size_t r = 1; r < restarts; ++r)
    if (final_lml[r] > final_lml[best]) best = r;
  if (!std::isfinite(final_lml[best]))
    throw NumericError("fit_hyperparams: covariance factorization failed at every restart");

  HyperResult out;
  out.kernel.signal_variance = std::exp(best_theta[best][0]);
  out.kernel.lengthscales = best_theta[best].tail(dim).array().exp();
  out.lml = final_lml[best];
  out.initial_lml = std::move(init_lml);
  out.final_lml = std::move(final_lml);
  out.passes = std::move(passes);
  return out;
}

inline KernelParams fit_hyperparams(const MatrixXd& inputs, const VectorXd& targets,
                                    const VectorXd& noise_variances, int restarts, std::uint64_t seed,
                                    const GPOptions& options = {}) {
  HyperSearch search;
  search.restarts = restarts;
  return fit_hyperparams_detailed(inputs, targets, noise_variances, seed, search, options).kernel;
}

}  // namespace gpos

#endif
