#pragma once

#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

#include "mfgp/error.hpp"
#include "mfgp/kernels.hpp"
#include "mfgp/meanmodel.hpp"
#include "mfgp/model.hpp"
#include "mfgp/rho.hpp"

namespace mfgp {

inline void check_dense_cap(long n, long cap) {
  if (n > cap) throw DenseSizeExceeded(n, cap);
}

/*
 * Exact joint covariance of [y_L; y_H]:
 *   LF,LF  k_L(x,x') + g_L^2 1{x=x'}
 *   HF,LF  rho(s) k_L(link, x')
 *   HF,HF  rho(s) rho(s') k_L(link, link') + k_d(x,x') + g_d^2 1{x=x'}
 * with the jitter-carrying latent covariance for both processes.
 */
inline Eigen::MatrixXd dense_K(const MfData& data, const MfHyperParams& p,
                               double jitter_relative = 1e-8, long cap = 5000) {
  data.validate();
  check_dense_cap(data.n_obs(), cap);
  const int nl = data.n_lf(), nh = data.n_hf();
  const double jl = default_jitter(p.kernel_lf, jitter_relative);
  const double jh = default_jitter(p.kernel_hf, jitter_relative);
  const auto locs = data.hf_locations();
  const Eigen::VectorXd rho = evaluate(p.rho, locs);
  Eigen::MatrixXd k(nl + nh, nl + nh);
  for (int a = 0; a < nl; ++a) {
    for (int b = a; b < nl; ++b) {
      double v = latent_cov(data.lf[a], data.lf[b], p.kernel_lf, jl);
      if (a == b) v += p.noise.lf;
      k(a, b) = v;
      k(b, a) = v;
    }
  }
  for (int h = 0; h < nh; ++h) {
    for (int b = 0; b < nl; ++b) {
      const double v = rho(h) * latent_cov(data.link(h), data.lf[b], p.kernel_lf, jl);
      k(nl + h, b) = v;
      k(b, nl + h) = v;
    }
    for (int g = h; g < nh; ++g) {
      double v = rho(h) * rho(g) * latent_cov(data.link(h), data.link(g), p.kernel_lf, jl) +
                 latent_cov(data.hf[h], data.hf[g], p.kernel_hf, jh);
      if (g == h) v += p.noise.hf;
      k(nl + h, nl + g) = v;
      k(nl + g, nl + h) = v;
    }
  }
  return k;
}

/// The same matrix assembled as A Sigma_w A^T + D with dense factors.
inline Eigen::MatrixXd dense_decomposed_K(const MfData& data, const MfHyperParams& p,
                                          double jitter_relative = 1e-8, long cap = 5000) {
  data.validate();
  const FidelityLayout lay = data.layout();
  check_dense_cap(lay.n_latent_lf() + lay.n_hf(), cap);
  const int nl = lay.n_lf(), nh = lay.n_hf(), nlat = lay.n_latent_lf();
  const Eigen::VectorXd rho = evaluate(p.rho, data.hf_locations());

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nl + nh, nlat + nh);
  for (int r = 0; r < nl; ++r) a(r, lay.lf_index[r]) = 1.0;
  for (int h = 0; h < nh; ++h) {
    a(nl + h, lay.hf_index[h]) = rho(h);
    a(nl + h, nlat + h) = 1.0;
  }
  Eigen::MatrixXd sw = Eigen::MatrixXd::Zero(nlat + nh, nlat + nh);
  sw.topLeftCorner(nlat, nlat) =
      gram(lay.latent_lf, p.kernel_lf, default_jitter(p.kernel_lf, jitter_relative));
  if (nh > 0) {
    sw.bottomRightCorner(nh, nh) =
        gram(lay.hf_points, p.kernel_hf, default_jitter(p.kernel_hf, jitter_relative));
  }
  Eigen::VectorXd d(nl + nh);
  d.head(nl).setConstant(p.noise.lf);
  d.tail(nh).setConstant(p.noise.hf);
  Eigen::MatrixXd k = a * sw * a.transpose();
  k.diagonal() += d;
  return k;
}

/// Dense Cholesky solver exposing the same interface as MfSystem.
class DenseSolver {
 public:
  explicit DenseSolver(const Eigen::MatrixXd& k) : llt_(k) {
    if (llt_.info() != Eigen::Success) throw CholeskyFailure("dense Cholesky of K failed");
    logdet_ = 2.0 * Eigen::MatrixXd(llt_.matrixL()).diagonal().array().log().sum();
    if (!std::isfinite(logdet_)) throw CholeskyFailure("non-finite log|K|");
  }
  Eigen::MatrixXd solve(const Eigen::MatrixXd& v) const { return llt_.solve(v); }
  Eigen::VectorXd solve(const Eigen::VectorXd& v) const { return llt_.solve(v); }
  double logdet() const { return logdet_; }
  int n_obs() const { return static_cast<int>(llt_.rows()); }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double logdet_ = 0.0;
};

inline Eigen::MatrixXd gls_design(const MfData& data, const FidelityLayout& lay, GlsKind kind) {
  const Location centre = kind == GlsKind::Adaptive ? data.coordinate_centre() : Location{};
  return build_design(lay, kind, centre);
}

/*
 * Negative log marginal likelihood given any solver for K.
 *   no GLS:        0.5 y^T K^-1 y + 0.5 log|K| + n/2 log 2pi
 *   GLS, ML:       residual in place of y
 *   GLS, REML:     + 0.5 log|G^T K^-1 G|, constant (n-P)/2 log 2pi
 */
template <class Solver>
double nlml_from_solver(const Solver& solver, const Eigen::VectorXd& y, const GlsMode& mode,
                        const Eigen::MatrixXd& g, GlsFit* fit_out = nullptr) {
  const double n = static_cast<double>(y.size());
  const double log2pi = std::log(2.0 * std::numbers::pi);
  if (mode.kind == GlsKind::None) {
    return 0.5 * y.dot(solver.solve(y)) + 0.5 * solver.logdet() + 0.5 * n * log2pi;
  }
  GlsFit fit = gls_fit(solver, y, g);
  double v = 0.5 * fit.residual.dot(fit.kinv_residual) + 0.5 * solver.logdet();
  if (mode.reml) {
    v += fit.half_logdet_gram + 0.5 * (n - fit.columns()) * log2pi;
  } else {
    v += 0.5 * n * log2pi;
  }
  if (fit_out != nullptr) *fit_out = std::move(fit);
  return v;
}

inline double dense_nlml(const MfData& data, const MfHyperParams& p, const GlsMode& mode,
                         double jitter_relative = 1e-8, long cap = 5000) {
  const DenseSolver solver(dense_K(data, p, jitter_relative, cap));
  const Eigen::MatrixXd g =
      mode.kind == GlsKind::None ? Eigen::MatrixXd() : gls_design(data, data.layout(), mode.kind);
  return nlml_from_solver(solver, data.y(), mode, g);
}

}  // namespace mfgp
