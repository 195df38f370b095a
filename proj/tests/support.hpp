#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mfgp/mfgp.hpp"

namespace testsupport {

inline std::vector<mfgp::SpaceTimePoint> random_points(int n, std::uint64_t seed,
                                                       double extent = 4.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, extent);
  std::uniform_real_distribution<double> ut(0.0, 1.0);
  std::vector<mfgp::SpaceTimePoint> pts;
  for (int i = 0; i < n; ++i) pts.push_back({u(rng), u(rng), ut(rng)});
  return pts;
}

inline Eigen::VectorXd random_vector(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

/*
 * Mixed LF/HF data on scattered points. HF points are a mix of LF points
 * (nested part) and fresh points (non-nested part).
 */
inline mfgp::MfData random_mf_data(int n_lf, int n_hf, std::uint64_t seed, int n_shared = -1) {
  auto lf = random_points(n_lf, seed);
  auto extra = random_points(n_hf, seed + 7919);
  if (n_shared < 0) n_shared = n_hf / 2;
  n_shared = std::min({n_shared, n_hf, n_lf});
  mfgp::MfData d;
  d.lf = lf;
  for (int h = 0; h < n_hf; ++h) d.hf.push_back(h < n_shared ? lf[h] : extra[h]);
  d.y_lf = random_vector(n_lf, seed + 1);
  d.y_hf = random_vector(n_hf, seed + 2) * 1.5 + Eigen::VectorXd::Constant(n_hf, 0.7);
  for (int h = 0; h < n_hf; ++h) d.hf_station.push_back(h);
  return d;
}

inline mfgp::MfHyperParams default_params() {
  mfgp::MfHyperParams p;
  p.kernel_lf = {1.3, 1.1, 0.4};
  p.kernel_hf = {0.8, 0.9, 0.3};
  p.noise = {0.2, 0.15};
  p.rho = mfgp::ConstantRho{0.7};
  return p;
}

/// Configuration whose Vecchia factors are exact (every predecessor conditioned on).
inline mfgp::ModelConfig exact_config(mfgp::OrderingKind ord, mfgp::ConditioningKind cond,
                                      mfgp::GlsKind gls = mfgp::GlsKind::None, int n = 100000) {
  mfgp::ModelConfig c;
  c.vecchia.ordering = {ord, 11};
  c.vecchia.conditioning = {cond, n};
  c.gls = {gls, true};
  return c;
}

}  // namespace testsupport
