#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mfgp/error.hpp"

namespace mfgp {

/// A spatial site. Equality is exact coordinate equality.
struct Location {
  double s1 = 0.0;
  double s2 = 0.0;

  friend bool operator==(const Location&, const Location&) = default;
  friend auto operator<=>(const Location&, const Location&) = default;
};

/// Spatial coordinates plus time; the unit of every kernel evaluation.
struct SpaceTimePoint {
  double s1 = 0.0;
  double s2 = 0.0;
  double t = 0.0;

  Location location() const { return {s1, s2}; }
  bool finite() const { return std::isfinite(s1) && std::isfinite(s2) && std::isfinite(t); }

  friend bool operator==(const SpaceTimePoint&, const SpaceTimePoint&) = default;
  friend auto operator<=>(const SpaceTimePoint&, const SpaceTimePoint&) = default;
};

/*
 * Separable squared-exponential parameters
 *
 *   k((s,t),(s',t')) = amplitude * exp(-|s-s'|^2 / (2 ls^2)) * exp(-(t-t')^2 / (2 lt^2))
 *
 * NOTE: `amplitude` is the covariance at zero lag and is used as is, it is
 * NOT squared. Many GP libraries parameterise the same kernel with sigma^2.
 */
struct KernelParams {
  double amplitude = 1.0;
  double length_space = 1.0;
  double length_time = 1.0;

  bool valid() const {
    return std::isfinite(amplitude) && std::isfinite(length_space) &&
           std::isfinite(length_time) && amplitude > 0.0 && length_space > 0.0 &&
           length_time > 0.0;
  }

  void validate() const {
    if (!valid()) throw InvalidArgument("kernel parameters must be finite and positive");
  }

  friend bool operator==(const KernelParams&, const KernelParams&) = default;
};

/// Diagonal jitter used whenever a factorisation of a Gram matrix is needed.
inline double default_jitter(const KernelParams& kp, double relative = 1e-8) {
  return relative * kp.amplitude;
}

namespace detail {

inline double scaled_sq_distance(const SpaceTimePoint& p, const SpaceTimePoint& q,
                                 double inv_ls2, double inv_lt2) {
  const double d1 = p.s1 - q.s1;
  const double d2 = p.s2 - q.s2;
  const double dt = p.t - q.t;
  return (d1 * d1 + d2 * d2) * inv_ls2 + dt * dt * inv_lt2;
}

}  // namespace detail

inline double eval_separable(const SpaceTimePoint& p, const SpaceTimePoint& q,
                             const KernelParams& kp) {
  const double inv_ls2 = 1.0 / (kp.length_space * kp.length_space);
  const double inv_lt2 = 1.0 / (kp.length_time * kp.length_time);
  return kp.amplitude * std::exp(-0.5 * detail::scaled_sq_distance(p, q, inv_ls2, inv_lt2));
}

/// Spatial factor of the separable kernel (amplitude excluded).
inline double space_correlation(const Location& a, const Location& b, double length_space) {
  const double d1 = a.s1 - b.s1;
  const double d2 = a.s2 - b.s2;
  return std::exp(-0.5 * (d1 * d1 + d2 * d2) / (length_space * length_space));
}

/// Temporal factor of the separable kernel (amplitude excluded).
inline double time_correlation(double t, double u, double length_time) {
  const double dt = t - u;
  return std::exp(-0.5 * dt * dt / (length_time * length_time));
}

inline Eigen::MatrixXd gram(std::span<const SpaceTimePoint> points, const KernelParams& kp,
                            double jitter) {
  kp.validate();
  if (points.empty()) throw InvalidArgument("gram: empty point list");
  const auto n = static_cast<Eigen::Index>(points.size());
  const double inv_ls2 = 1.0 / (kp.length_space * kp.length_space);
  const double inv_lt2 = 1.0 / (kp.length_time * kp.length_time);
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    k(j, j) = kp.amplitude + jitter;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v =
          kp.amplitude *
          std::exp(-0.5 * detail::scaled_sq_distance(points[i], points[j], inv_ls2, inv_lt2));
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

inline Eigen::MatrixXd cross_gram(std::span<const SpaceTimePoint> rows,
                                  std::span<const SpaceTimePoint> cols, const KernelParams& kp) {
  kp.validate();
  if (rows.empty() || cols.empty()) throw InvalidArgument("cross_gram: empty point list");
  const double inv_ls2 = 1.0 / (kp.length_space * kp.length_space);
  const double inv_lt2 = 1.0 / (kp.length_time * kp.length_time);
  Eigen::MatrixXd k(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(cols.size()));
  for (Eigen::Index j = 0; j < k.cols(); ++j) {
    for (Eigen::Index i = 0; i < k.rows(); ++i) {
      k(i, j) = kp.amplitude * std::exp(-0.5 * detail::scaled_sq_distance(rows[i], cols[j],
                                                                          inv_ls2, inv_lt2));
    }
  }
  return k;
}

/*
 * Covariance of a latent process that carries a small white-noise jitter:
 * k(p,q) + jitter * 1{p == q}. Every route through the library (Vecchia
 * factors, dense oracle, prediction cross-covariances) uses this same
 * definition so that exact and approximate pipelines agree.
 */
inline double latent_cov(const SpaceTimePoint& p, const SpaceTimePoint& q, const KernelParams& kp,
                         double jitter) {
  return eval_separable(p, q, kp) + (p == q ? jitter : 0.0);
}

}  // namespace mfgp
