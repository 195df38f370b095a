#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include <Eigen/Dense>

#include "mfgp/inference.hpp"
#include "mfgp/oracle.hpp"

namespace mfgp {

/// Vecchia against exact inference on identical data and fixed hyperparameters.
struct ValidationReport {
  double rel_kinv_y = 0.0;
  double rel_logdet = 0.0;
  double rel_quadform = 0.0;
  double diff_abs = 0.0;
  double diff_rel = 0.0;
  double rmse = std::numeric_limits<double>::quiet_NaN();
  long nnz_R = 0;
  long nnz_H = 0;
  double density_H = 0.0;
  double nlml_vecchia = 0.0;
  double nlml_exact = 0.0;
};

/// `targets`/`y_targets` are optional held-out HF rows for the RMSE field.
inline ValidationReport validate(const MfData& data, const MfHyperParams& params,
                                 const ModelConfig& cfg, std::span<const SpaceTimePoint> targets = {},
                                 const Eigen::VectorXd& y_targets = Eigen::VectorXd()) {
  ModelConfig vcfg = cfg;
  vcfg.backend = Backend::Vecchia;
  MfHyperParams p = params;
  p.rho = prepare_rho(data, params.rho);
  const MfLikelihood lik(data, vcfg);
  const MfSystem sys = lik.system(p);
  const DenseSolver exact(dense_K(data, p, cfg.vecchia.jitter_relative, cfg.dense_cap));

  const Eigen::VectorXd y = data.y();
  const Eigen::VectorXd kv = sys.solve(y);
  const Eigen::VectorXd ke = exact.solve(y);

  ValidationReport r;
  r.rel_kinv_y = (kv - ke).norm() / ke.norm();
  r.rel_logdet = std::abs(sys.logdet() - exact.logdet()) / std::abs(exact.logdet());
  const double qv = y.dot(kv), qe = y.dot(ke);
  r.rel_quadform = std::abs(qv - qe) / std::abs(qe);
  r.nlml_vecchia = nlml_from_solver(sys, y, cfg.gls, lik.design());
  r.nlml_exact = nlml_from_solver(exact, y, cfg.gls, lik.design());
  r.diff_abs = std::abs(r.nlml_vecchia - r.nlml_exact);
  r.diff_rel = r.diff_abs / std::max(std::abs(r.nlml_exact), 1e-12);
  const SparsityReport sp = sys.sparsity();
  r.nnz_R = sp.nnz_chol;
  r.nnz_H = sp.nnz_H;
  r.density_H = sp.density_H;
  if (!targets.empty()) {
    const Prediction pr = predict(p, data, vcfg, targets);
    r.rmse = std::sqrt((pr.mean - y_targets).squaredNorm() / static_cast<double>(y_targets.size()));
  }
  return r;
}

}  // namespace mfgp
