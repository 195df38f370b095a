#include <gtest/gtest.h>

#include <numbers>
#include <numeric>
#include <random>

#include "support.hpp"

using namespace mfgp;
using namespace testsupport;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// Hand-rolled NLML through LU, no Cholesky or shared helpers.
double lu_nlml(const Eigen::MatrixXd& k, const Eigen::VectorXd& y, const Eigen::MatrixXd& g, bool reml) {
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(k);
  const double logdet = std::log(std::abs(lu.determinant()));
  const double n = static_cast<double>(y.size());
  if (g.cols() == 0) return 0.5 * y.dot(lu.solve(y)) + 0.5 * logdet + 0.5 * n * kLog2Pi;
  const Eigen::MatrixXd kg = lu.solve(g);
  const Eigen::MatrixXd m = g.transpose() * kg;
  const Eigen::VectorXd beta = m.partialPivLu().solve(kg.transpose() * y);
  const Eigen::VectorXd r = y - g * beta;
  double v = 0.5 * r.dot(lu.solve(r)) + 0.5 * logdet;
  if (reml) {
    v += 0.5 * std::log(m.determinant()) + 0.5 * (n - static_cast<double>(g.cols())) * kLog2Pi;
  } else {
    v += 0.5 * n * kLog2Pi;
  }
  return v;
}

MfData scalar_data() {
  MfData d;
  d.lf = {{0.3, 0.4, 0.5}};
  d.hf = {{0.3, 0.4, 0.5}};
  d.y_lf = Eigen::VectorXd::Constant(1, 0.7);
  d.y_hf = Eigen::VectorXd::Constant(1, -1.1);
  return d;
}

}  // namespace

TEST(DenseK, ScalarBlocks) {
  const auto d = scalar_data();
  const auto p = default_params();
  const Eigen::MatrixXd k = dense_K(d, p, 0.0);
  const double sl = p.kernel_lf.amplitude, sd = p.kernel_hf.amplitude, r = 0.7;
  EXPECT_NEAR(k(0, 0), sl + p.noise.lf, 1e-14);
  EXPECT_NEAR(k(0, 1), r * sl, 1e-14);
  EXPECT_NEAR(k(1, 0), r * sl, 1e-14);
  EXPECT_NEAR(k(1, 1), r * r * sl + sd + p.noise.hf, 1e-14);
}

TEST(DenseK, ZeroRhoIsBlockDiagonal) {
  const auto d = random_mf_data(30, 20, 1);
  auto p = default_params();
  p.rho = ConstantRho{0.0};
  const Eigen::MatrixXd k = dense_K(d, p);
  EXPECT_TRUE(k.topRightCorner(30, 20).isZero(0.0));
  EXPECT_TRUE(k.bottomLeftCorner(20, 30).isZero(0.0));
  const Eigen::MatrixXd kd = gram(d.hf, p.kernel_hf, default_jitter(p.kernel_hf)) +
                             p.noise.hf * Eigen::MatrixXd::Identity(20, 20);
  EXPECT_LT((k.bottomRightCorner(20, 20) - kd).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(DenseK, IsSymmetric) {
  const auto d = random_mf_data(40, 30, 2);
  auto p = default_params();
  p.rho = QuadraticRho{0.4, 0.1, -0.2, 0.05, 0.02};
  const Eigen::MatrixXd k = dense_K(d, p);
  EXPECT_TRUE(k.isApprox(k.transpose(), 0.0));
}

TEST(DenseK, DecompositionIdentityWithVaryingRho) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto d = random_mf_data(30, 25, 60 + seed, 10);
    auto p = default_params();
    const Eigen::VectorXd c = random_vector(5, 70 + seed);
    p.rho = QuadraticRho{c(0), c(1), c(2), 0.3 * c(3), 0.3 * c(4)};
    EXPECT_LT((dense_decomposed_K(d, p) - dense_K(d, p)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(DenseK, CapIsEnforced) {
  const auto d = random_mf_data(30, 20, 3);
  EXPECT_THROW(dense_K(d, default_params(), 1e-8, 49), DenseSizeExceeded);
  EXPECT_NO_THROW(dense_K(d, default_params(), 1e-8, 50));
}

TEST(DenseNlml, SingleObservation) {
  MfData d;
  d.lf = {{0, 0, 0}};
  d.y_lf = Eigen::VectorXd::Constant(1, 1.7);
  const auto p = default_params();
  const double c = p.kernel_lf.amplitude + p.noise.lf;
  const double ref = 0.5 * 1.7 * 1.7 / c + 0.5 * std::log(c) + 0.5 * kLog2Pi;
  EXPECT_NEAR(dense_nlml(d, p, {GlsKind::None}, 0.0), ref, 1e-13);
}

TEST(DenseNlml, MatchesIndependentLuComputation) {
  const auto d = random_mf_data(50, 35, 4);
  auto p = default_params();
  p.rho = LinearRho{0.6, 0.05, -0.1};
  const Eigen::MatrixXd k = dense_K(d, p);
  const Eigen::VectorXd y = d.y();
  EXPECT_LT(rel_err(dense_nlml(d, p, {GlsKind::None}), lu_nlml(k, y, {}, false)), 1e-10);
  for (auto kind : {GlsKind::Global, GlsKind::Adaptive}) {
    const Eigen::MatrixXd g = gls_design(d, d.layout(), kind);
    EXPECT_LT(rel_err(dense_nlml(d, p, {kind, true}), lu_nlml(k, y, g, true)), 1e-10);
    EXPECT_LT(rel_err(dense_nlml(d, p, {kind, false}), lu_nlml(k, y, g, false)), 1e-10);
  }
}

TEST(DenseNlml, InvariantUnderRowPermutation) {
  const auto d = random_mf_data(45, 30, 5);
  const auto p = default_params();
  MfData s = d;
  std::vector<int> pl(45), ph(30);
  std::iota(pl.begin(), pl.end(), 0);
  std::iota(ph.begin(), ph.end(), 0);
  std::mt19937_64 gen(11);
  std::shuffle(pl.begin(), pl.end(), gen);
  std::shuffle(ph.begin(), ph.end(), gen);
  for (int i = 0; i < 45; ++i) {
    s.lf[i] = d.lf[pl[i]];
    s.y_lf(i) = d.y_lf(pl[i]);
  }
  for (int i = 0; i < 30; ++i) {
    s.hf[i] = d.hf[ph[i]];
    s.y_hf(i) = d.y_hf(ph[i]);
    if (!d.hf_station.empty()) s.hf_station[i] = d.hf_station[ph[i]];
    if (!d.hf_link.empty()) s.hf_link[i] = d.hf_link[ph[i]];
  }
  for (auto kind : {GlsKind::None, GlsKind::Global, GlsKind::Adaptive}) {
    EXPECT_LT(rel_err(dense_nlml(s, p, {kind}), dense_nlml(d, p, {kind})), 1e-11);
  }
}

TEST(Validate, ExactConditioningGivesZeroErrors) {
  const auto d = random_mf_data(90, 60, 6);
  const auto p = default_params();
  for (auto cond : {ConditioningKind::NearestNeighbor, ConditioningKind::Correlation}) {
    const auto r = validate(d, p, exact_config(OrderingKind::TimeMajor, cond));
    EXPECT_LT(r.rel_kinv_y, 1e-8);
    EXPECT_LT(r.rel_logdet, 1e-8);
    EXPECT_LT(r.rel_quadform, 1e-8);
    EXPECT_LT(r.diff_abs, 1e-6);
    EXPECT_LT(r.diff_rel, 1e-8);
    EXPECT_GT(r.nnz_R, 0);
    EXPECT_TRUE(std::isnan(r.rmse));
  }
}

TEST(Validate, ErrorsShrinkTowardsExact) {
  const auto d = random_mf_data(150, 100, 7);
  const auto p = default_params();
  double prev = std::numeric_limits<double>::infinity();
  for (int m : {2, 8, 30, 250}) {
    const auto r = validate(d, p, exact_config(OrderingKind::SpaceMajor, ConditioningKind::Correlation,
                                               GlsKind::None, m));
    EXPECT_GE(r.rel_kinv_y, 0.0);
    EXPECT_LE(r.rel_kinv_y, prev * 1.05 + 1e-12);
    prev = r.rel_kinv_y;
  }
  EXPECT_LT(prev, 1e-8);
}

TEST(Validate, RmseAgainstTargets) {
  const auto d = random_mf_data(60, 40, 8);
  const auto p = default_params();
  const std::vector<SpaceTimePoint> t{d.hf[0], d.hf[1]};
  Eigen::VectorXd yt(2);
  yt << d.y_hf(0), d.y_hf(1);
  const auto r = validate(d, p, ModelConfig{}, t, yt);
  EXPECT_TRUE(std::isfinite(r.rmse));
  EXPECT_GE(r.rmse, 0.0);
}
