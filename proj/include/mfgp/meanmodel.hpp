#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "mfgp/error.hpp"
#include "mfgp/kernels.hpp"
#include "mfgp/mfstruct.hpp"

namespace mfgp {

enum class GlsKind { None, Global, Adaptive };

struct GlsMode {
  GlsKind kind = GlsKind::None;
  bool reml = true;
};

/*
 * Global:   one intercept per fidelity (a single column if there are no HF rows).
 * Adaptive: [1, s1 - c1, s2 - c2] per fidelity, c being the `centre` offset.
 * Columns are ordered LF block first, then HF block.
 */
inline int design_columns(GlsKind kind, bool has_hf) {
  const int per = kind == GlsKind::Adaptive ? 3 : kind == GlsKind::Global ? 1 : 0;
  return has_hf ? 2 * per : per;
}

/// Design row of a single HF observation at location `s`.
inline Eigen::RowVectorXd hf_design_row(GlsKind kind, const Location& s,
                                        const Location& centre = {}) {
  const int p = design_columns(kind, true);
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(p);
  if (kind == GlsKind::Global) {
    row(1) = 1.0;
  } else if (kind == GlsKind::Adaptive) {
    row(3) = 1.0;
    row(4) = s.s1 - centre.s1;
    row(5) = s.s2 - centre.s2;
  }
  return row;
}

inline Eigen::MatrixXd build_design(const FidelityLayout& layout, GlsKind kind,
                                    const Location& centre = {}) {
  if (kind == GlsKind::None) throw InvalidArgument("build_design: GLS mode is None");
  const int nl = layout.n_lf();
  const int nh = layout.n_hf();
  const int per = kind == GlsKind::Adaptive ? 3 : 1;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(nl + nh, design_columns(kind, nh > 0));
  auto fill = [&](int row, int col0, const SpaceTimePoint& p) {
    g(row, col0) = 1.0;
    if (per == 3) {
      g(row, col0 + 1) = p.s1 - centre.s1;
      g(row, col0 + 2) = p.s2 - centre.s2;
    }
  };
  for (int r = 0; r < nl; ++r) fill(r, 0, layout.latent_lf[layout.lf_index[r]]);
  for (int h = 0; h < nh; ++h) fill(nl + h, per, layout.hf_points[h]);
  return g;
}

struct GlsFit {
  Eigen::MatrixXd design;
  Eigen::VectorXd beta;
  Eigen::VectorXd residual;        // y - G beta
  Eigen::VectorXd kinv_residual;   // K^{-1} (y - G beta)
  Eigen::MatrixXd beta_cov;        // (G^T K^{-1} G)^{-1}
  double half_logdet_gram = 0.0;   // 0.5 log|G^T K^{-1} G|

  int columns() const { return static_cast<int>(design.cols()); }
};

namespace detail {

inline Eigen::LLT<Eigen::MatrixXd> factor_gramian(Eigen::MatrixXd m, double& half_logdet) {
  m = 0.5 * (m + m.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || !(hi / lo <= 1e12)) {
    throw SingularGramian("G^T K^{-1} G is singular or ill-conditioned (cond > 1e12)");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw SingularGramian("G^T K^{-1} G not positive definite");
  half_logdet = Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  return llt;
}

}  // namespace detail

/// `Solver` provides Eigen::MatrixXd solve(const Eigen::MatrixXd&) returning K^{-1} X.
template <class Solver>
GlsFit gls_fit(const Solver& solver, const Eigen::VectorXd& y, const Eigen::MatrixXd& g) {
  if (g.rows() != y.size()) throw InvalidArgument("gls_fit: design and data sizes differ");
  Eigen::MatrixXd rhs(y.size(), g.cols() + 1);
  rhs.col(0) = y;
  rhs.rightCols(g.cols()) = g;
  const Eigen::MatrixXd sol = solver.solve(rhs);
  const Eigen::VectorXd kiy = sol.col(0);
  const Eigen::MatrixXd kig = sol.rightCols(g.cols());

  GlsFit fit;
  fit.design = g;
  auto llt = detail::factor_gramian(g.transpose() * kig, fit.half_logdet_gram);
  fit.beta = llt.solve(g.transpose() * kiy);
  fit.residual = y - g * fit.beta;
  fit.kinv_residual = kiy - kig * fit.beta;
  fit.beta_cov = llt.solve(Eigen::MatrixXd::Identity(g.cols(), g.cols()));
  return fit;
}

/// 0.5 log|G^T K^{-1} G|
template <class Solver>
double reml_correction(const Solver& solver, const Eigen::MatrixXd& g) {
  double half = 0.0;
  detail::factor_gramian(g.transpose() * solver.solve(g), half);
  return half;
}

}  // namespace mfgp
