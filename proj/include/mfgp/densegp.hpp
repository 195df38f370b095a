#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "mfgp/error.hpp"
#include "mfgp/optimize.hpp"

namespace mfgp {

/// Single-output GP with an RBF kernel over R^d: amplitude * exp(-0.5 sum_k (dx_k / l_k)^2),
/// plus white noise. `lengths` has one entry (isotropic) or d entries.
struct DenseGpParams {
  double amplitude = 1.0;
  Eigen::VectorXd lengths = Eigen::VectorXd::Ones(1);
  double noise = 0.1;
};

namespace detail {

inline double rbf_nd(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                     const Eigen::Ref<const Eigen::RowVectorXd>& b, const DenseGpParams& p) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double l = p.lengths.size() == 1 ? p.lengths(0) : p.lengths(k);
    const double d = (a(k) - b(k)) / l;
    acc += d * d;
  }
  return p.amplitude * std::exp(-0.5 * acc);
}

inline Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& x, const DenseGpParams& p) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    k(j, j) = p.amplitude + p.noise;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = rbf_nd(x.row(i), x.row(j), p);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

}  // namespace detail

/// Negative log marginal likelihood of already-centred targets.
inline double dense_gp_nlml(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            const DenseGpParams& p) {
  Eigen::LLT<Eigen::MatrixXd> llt(detail::rbf_gram(x, p));
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const Eigen::VectorXd alpha = llt.solve(y);
  const double half_logdet = Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  const double v = 0.5 * y.dot(alpha) + half_logdet +
                   0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

struct DenseGpFitOptions {
  bool ard = false;
  double noise_floor = 0.0;
  long size_cap = 5000;
  NelderMeadOptions optimizer{};
};

/// Fitted GP regression with constant mean equal to the training sample mean.
class DenseGp {
 public:
  DenseGp() = default;
  DenseGp(Eigen::MatrixXd x, const Eigen::VectorXd& y, DenseGpParams p, double noise_floor = 0.0)
      : x_(std::move(x)), mean_(y.mean()), p_(std::move(p)) {
    p_.noise = std::max(p_.noise, noise_floor);
    llt_.compute(detail::rbf_gram(x_, p_));
    if (llt_.info() != Eigen::Success) throw CholeskyFailure("dense GP Gram not positive definite");
    alpha_ = llt_.solve((y.array() - mean_).matrix());
  }

  const DenseGpParams& params() const { return p_; }
  double mean_offset() const { return mean_; }

  Eigen::VectorXd predict_mean(const Eigen::MatrixXd& xs) const {
    return cross(xs) * alpha_ + Eigen::VectorXd::Constant(xs.rows(), mean_);
  }

  /// Predictive variance; `with_noise` adds the white-noise variance.
  Eigen::VectorXd predict_variance(const Eigen::MatrixXd& xs, bool with_noise) const {
    const Eigen::MatrixXd c = cross(xs);
    const Eigen::MatrixXd v = llt_.matrixL().solve(c.transpose());
    Eigen::VectorXd out = Eigen::VectorXd::Constant(xs.rows(), p_.amplitude + (with_noise ? p_.noise : 0.0));
    out -= v.colwise().squaredNorm().transpose();
    return out.cwiseMax(1e-300);
  }

 private:
  Eigen::MatrixXd cross(const Eigen::MatrixXd& xs) const {
    Eigen::MatrixXd c(xs.rows(), x_.rows());
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
      for (Eigen::Index j = 0; j < x_.rows(); ++j) c(i, j) = detail::rbf_nd(xs.row(i), x_.row(j), p_);
    }
    return c;
  }

  Eigen::MatrixXd x_;
  double mean_ = 0.0;
  DenseGpParams p_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
};

/*
 * Maximum-likelihood fit of amplitude, length scale(s) and noise on log scale.
 * Initial values: sample variance of y for the amplitude, per-column sample
 * standard deviation for the length scales, a tenth of the variance for noise.
 */
inline DenseGp fit_dense_gp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            const DenseGpFitOptions& opt = {}) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n < 2 || y.size() != n) throw InvalidArgument("fit_dense_gp: need at least two rows");
  if (n > opt.size_cap) throw DenseSizeExceeded(n, opt.size_cap);

  const Eigen::VectorXd yc = y.array() - y.mean();
  double var = yc.squaredNorm() / static_cast<double>(n - 1);
  // rounding noise on a constant target is not a usable scale
  const double scale = std::max(1.0, y.array().abs().maxCoeff());
  if (!(var > 1e-20 * scale * scale)) var = 1.0;
  const Eigen::Index nl = opt.ard ? d : 1;
  Eigen::VectorXd sd(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const Eigen::VectorXd c = x.col(k).array() - x.col(k).mean();
    const double s = std::sqrt(c.squaredNorm() / static_cast<double>(n - 1));
    sd(k) = s > 0.0 ? s : 1.0;
  }

  Eigen::VectorXd theta(nl + 2);
  theta(0) = std::log(var);
  for (Eigen::Index k = 0; k < nl; ++k) theta(1 + k) = std::log(opt.ard ? sd(k) : sd.mean());
  theta(nl + 1) = std::log(0.1 * var);

  auto unpack = [&](const Eigen::VectorXd& t) {
    DenseGpParams p;
    p.amplitude = std::exp(t(0));
    p.lengths = t.segment(1, nl).array().exp();
    p.noise = std::max(std::exp(t(nl + 1)), opt.noise_floor);
    return p;
  };
  auto objective = [&](const Eigen::VectorXd& t) {
    if ((t.array().abs() > std::log(1e10)).any()) return std::numeric_limits<double>::infinity();
    return dense_gp_nlml(x, yc, unpack(t));
  };
  const OptimResult r = minimize(objective, theta, opt.optimizer);
  return DenseGp(x, y, unpack(r.x), opt.noise_floor);
}

}  // namespace mfgp
