#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace mfgp;
using namespace testsupport;

namespace {

std::vector<StationSlope> slopes_at(const std::vector<Location>& where, const std::vector<double>& values) {
  std::vector<StationSlope> out;
  for (std::size_t k = 0; k < where.size(); ++k) out.push_back({int(k), where[k], values[k]});
  return out;
}

std::vector<Location> station_grid() {
  std::vector<Location> out;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) out.push_back({1.0 + i, 1.0 + j});
  return out;
}

}  // namespace

TEST(RhoEvaluate, ConstantIsBroadcast) {
  const std::vector<Location> where{{0, 0}, {1, 2}, {5, -3}};
  const Eigen::VectorXd r = evaluate(RhoModel{ConstantRho{0.6}}, where);
  EXPECT_TRUE(r.isApprox(Eigen::VectorXd::Constant(3, 0.6)));
}

TEST(RhoEvaluate, LinearAffine) {
  const std::vector<Location> where{{0.5, 7}};
  EXPECT_DOUBLE_EQ(evaluate(RhoModel{LinearRho{1, 2, 0}}, where)(0), 2.0);
}

TEST(RhoEvaluate, QuadraticSquareTerm) {
  const std::vector<Location> where{{3, 0}};
  EXPECT_DOUBLE_EQ(evaluate(RhoModel{QuadraticRho{0, 0, 0, 1, 0}}, where)(0), 9.0);
}

TEST(RhoEvaluate, UnfittedEmpiricalThrows) {
  const std::vector<Location> where{{0, 0}};
  EXPECT_THROW(evaluate(RhoModel{EmpiricalGpRho{}}, where), UnfittedEmpiricalModel);
}

TEST(RhoEvaluate, TrainableRoundTrip) {
  const RhoModel q = QuadraticRho{0.1, 0.2, 0.3, 0.4, 0.5};
  EXPECT_EQ(trainable_count(q), 5);
  EXPECT_EQ(trainable_count(RhoModel{LinearRho{}}), 3);
  EXPECT_EQ(trainable_count(RhoModel{ConstantRho{}}), 1);
  EXPECT_EQ(trainable_count(RhoModel{EmpiricalGpRho{}}), 0);
  const Eigen::VectorXd v = trainable_values(q);
  const auto back = with_trainable_values(q, v * 2.0);
  EXPECT_TRUE(trainable_values(back).isApprox(v * 2.0));
}

TEST(Slopes, ExactMultiple) {
  std::vector<double> lf{0.3, -1.2, 2.5, 0.7}, hf;
  for (double v : lf) hf.push_back(2.0 * v);
  EXPECT_NEAR(slope_of(lf, hf, 0), 2.0, 1e-14);
}

TEST(Slopes, HandDataset) {
  EXPECT_NEAR(slope_of({0, 1, 2}, {1, 3, 5}, 0), 2.0, 1e-14);
}

TEST(Slopes, IndependentSeriesGiveSmallSlope) {
  std::mt19937_64 gen(2024);
  std::normal_distribution<double> z;
  std::vector<double> lf(10000), hf(10000);
  for (auto& v : lf) v = z(gen);
  for (auto& v : hf) v = z(gen);
  EXPECT_LT(std::abs(slope_of(lf, hf, 0)), 0.1);
}

TEST(Slopes, ConstantLfIsDegenerate) {
  EXPECT_THROW(slope_of({1, 1, 1, 1}, {0, 1, 2, 3}, 4), DegenerateVariance);
}

TEST(Slopes, TooFewPointsRejected) {
  EXPECT_THROW(slope_of({0, 1}, {0, 1}, 0), InvalidArgument);
}

TEST(Slopes, FromMatchedData) {
  MfData d;
  for (int s = 0; s < 3; ++s)
    for (int t = 0; t < 5; ++t) {
      const double v = std::sin(1.3 * t + s);
      d.lf.push_back({double(s), 0, double(t)});
      d.hf.push_back({double(s), 0, double(t)});
      d.y_lf.conservativeResize(d.y_lf.size() + 1);
      d.y_lf(d.y_lf.size() - 1) = v;
      d.y_hf.conservativeResize(d.y_hf.size() + 1);
      d.y_hf(d.y_hf.size() - 1) = (s + 1.0) * v + 0.5;
    }
  const auto slopes = empirical_slopes(d.matched_series());
  ASSERT_EQ(slopes.size(), 3u);
  for (int s = 0; s < 3; ++s) EXPECT_NEAR(slopes[s].slope, s + 1.0, 1e-12);
}

TEST(EmpiricalGp, ConstantSlopesGiveConstantField) {
  const auto where = station_grid();
  const auto model = fit_empirical_gp(slopes_at(where, std::vector<double>(where.size(), 0.8)));
  const std::vector<Location> probe{{0, 0}, {2.5, 1.5}, {10, -4}};
  const Eigen::VectorXd r = model.evaluate(probe);
  EXPECT_LT((r.array() - 0.8).abs().maxCoeff(), 1e-6);
}

TEST(EmpiricalGp, InterpolatesAtStations) {
  const auto where = station_grid();
  std::vector<double> vals;
  for (const auto& w : where) vals.push_back(0.5 + 0.2 * w.s1 - 0.1 * w.s2);
  SmootherOptions o;
  o.fit_hyperparameters = false;
  o.fixed.amplitude = 1.0;
  o.fixed.lengths = Eigen::VectorXd::Constant(1, 2.0);
  o.fixed.noise = 0.0;
  const auto model = fit_empirical_gp(slopes_at(where, vals), o);
  const Eigen::VectorXd r = model.evaluate(where);
  for (std::size_t k = 0; k < where.size(); ++k) EXPECT_NEAR(r(k), vals[k], 1e-4);
}

TEST(EmpiricalGp, MidpointIsBracketed) {
  SmootherOptions o;
  o.fit_hyperparameters = false;
  o.fixed.amplitude = 1.0;
  o.fixed.lengths = Eigen::VectorXd::Constant(1, 10.0);
  o.fixed.noise = 0.0;
  const auto model = fit_empirical_gp(slopes_at({{0, 0}, {2, 0}}, {1.0, 2.0}), o);
  const std::vector<Location> mid{{1, 0}};
  const double v = model.evaluate(mid)(0);
  EXPECT_GT(v, 1.0);
  EXPECT_LT(v, 2.0);
}

TEST(EmpiricalGp, ScalesLinearlyWithFixedHyperparameters) {
  const auto where = station_grid();
  std::vector<double> vals, scaled;
  for (const auto& w : where) vals.push_back(std::cos(w.s1) + 0.3 * w.s2);
  for (double v : vals) scaled.push_back(-2.5 * v);
  SmootherOptions o;
  o.fit_hyperparameters = false;
  o.fixed.amplitude = 0.7;
  o.fixed.lengths = Eigen::VectorXd::Constant(1, 1.5);
  o.fixed.noise = 0.05;
  const std::vector<Location> probe{{0.3, 0.2}, {2.2, 2.9}, {4.5, 1.1}};
  const Eigen::VectorXd a = fit_empirical_gp(slopes_at(where, vals), o).evaluate(probe);
  const Eigen::VectorXd b = fit_empirical_gp(slopes_at(where, scaled), o).evaluate(probe);
  EXPECT_LT((b + 2.5 * a).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(EmpiricalGp, TooFewStations) {
  EXPECT_THROW(fit_empirical_gp(slopes_at({{0, 0}}, {1.0})), InvalidArgument);
}

TEST(RhoProperties, InducedHfBlockIsPositiveDefinite) {
  const MfHyperParams base = default_params();
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto pts = random_points(60, 500 + seed);
    std::vector<Location> locs;
    for (const auto& p : pts) locs.push_back(p.location());
    const Eigen::VectorXd c = random_vector(5, 900 + seed);
    const RhoModel model = seed % 2 ? RhoModel{QuadraticRho{c(0), c(1), c(2), c(3), c(4)}}
                                    : RhoModel{LinearRho{c(0), c(1), c(2)}};
    const Eigen::VectorXd r = evaluate(model, locs);
    const Eigen::MatrixXd kl = gram(pts, base.kernel_lf, default_jitter(base.kernel_lf));
    const Eigen::MatrixXd kd = gram(pts, base.kernel_hf, default_jitter(base.kernel_hf));
    const Eigen::MatrixXd khh = r.asDiagonal() * kl * r.asDiagonal() + kd;
    EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(khh).info(), Eigen::Success);
  }
}

TEST(RhoProperties, EmpiricalWithEqualSlopesMatchesConstantNlml) {
  const auto d = random_mf_data(60, 40, 77);
  MfHyperParams p = default_params();
  p.rho = ConstantRho{0.9};
  const ModelConfig cfg;
  const double ref = nlml(p, d, cfg);

  std::vector<Location> where;
  for (const auto& h : d.hf) where.push_back(h.location());
  std::sort(where.begin(), where.end());
  where.erase(std::unique(where.begin(), where.end()), where.end());
  ASSERT_GE(where.size(), 2u);
  p.rho = fit_empirical_gp(slopes_at(where, std::vector<double>(where.size(), 0.9)));
  EXPECT_NEAR(nlml(p, d, cfg), ref, 1e-6 * std::abs(ref));
}
