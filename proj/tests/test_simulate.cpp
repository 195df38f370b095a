#include <gtest/gtest.h>

#include <random>
#include <set>

#include "support.hpp"

using namespace mfgp;
using namespace testsupport;

TEST(LengthScale, HalfExponentGivesUnit) {
  EXPECT_NEAR(lengthscale_from_corr(std::exp(-0.5), 1.0), 1.0, 1e-14);
}

TEST(LengthScale, HandValue) {
  EXPECT_NEAR(lengthscale_from_corr(0.8, 1.0), 1.4969001499, 1e-9);
}

TEST(LengthScale, RoundTrip) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> uc(0.01, 0.99), ud(0.05, 20.0);
  for (int i = 0; i < 200; ++i) {
    const double c = uc(gen), d = ud(gen);
    const double l = lengthscale_from_corr(c, d);
    EXPECT_NEAR(std::exp(-0.5 * (d / l) * (d / l)), c, 1e-12);
  }
}

TEST(LengthScale, RejectsOutOfRange) {
  EXPECT_THROW(lengthscale_from_corr(1.0, 1.0), InvalidArgument);
  EXPECT_THROW(lengthscale_from_corr(0.0, 1.0), InvalidArgument);
  EXPECT_THROW(lengthscale_from_corr(0.5, 0.0), InvalidArgument);
}

TEST(Split, RoundsHalfUp) {
  EXPECT_EQ(split_stations(36, 0.3, 1).first.size(), 11u);
  EXPECT_EQ(split_stations(10, 0.25, 1).first.size(), 3u);
}

TEST(Split, OverridePinsTwelveOfThirtySix) {
  const auto [train, test] = split_stations(36, 0.3, 4, 12);
  EXPECT_EQ(train.size(), 12u);
  EXPECT_EQ(test.size(), 24u);
}

TEST(Split, DisjointExhaustiveDeterministic) {
  const auto a = split_stations(50, 0.4, 9);
  const auto b = split_stations(50, 0.4, 9);
  EXPECT_EQ(a, b);
  std::set<int> all(a.first.begin(), a.first.end());
  for (int s : a.second) EXPECT_TRUE(all.insert(s).second);
  EXPECT_EQ(all.size(), 50u);
  EXPECT_EQ(*all.begin(), 0);
  EXPECT_EQ(*all.rbegin(), 49);
  EXPECT_NE(split_stations(50, 0.4, 10), a);
}

TEST(Split, KeepsOneOnEachSide) {
  auto s = split_stations(5, 0.01, 1);
  EXPECT_EQ(s.first.size(), 1u);
  s = split_stations(5, 0.99, 1);
  EXPECT_EQ(s.second.size(), 1u);
}

TEST(Generate, DefaultShapes) {
  SimConfig c;
  c.n_train_stations = 12;
  const auto ds = generate(c);
  EXPECT_EQ(ds.stations.size(), 36u);
  EXPECT_EQ(ds.points.size(), 360u);
  EXPECT_EQ(ds.y_lf.size(), 360);
  EXPECT_EQ(ds.y_hf.size(), 360);
  EXPECT_EQ(ds.train_stations.size(), 12u);
  EXPECT_EQ(ds.test_stations.size(), 24u);
  const auto d = ds.training_data();
  EXPECT_EQ(d.n_lf(), 360);
  EXPECT_EQ(d.n_hf(), 120);
  EXPECT_TRUE(d.layout().nested);
}

TEST(Generate, StationMajorTimeFastest) {
  SimConfig c;
  c.n_space = 3;
  c.n_time = 4;
  const auto ds = generate(c);
  EXPECT_EQ(ds.points[0], (SpaceTimePoint{1, 1, 0}));
  EXPECT_EQ(ds.points[1], (SpaceTimePoint{1, 1, 1.0 / 3}));
  EXPECT_EQ(ds.points[4], (SpaceTimePoint{1, 2, 0}));
  EXPECT_EQ(ds.stations[5].id, 5);
  EXPECT_EQ(ds.stations[5].where, (Location{2, 3}));
}

TEST(Generate, BitReproducible) {
  SimConfig c;
  c.seed = 77;
  const auto a = generate(c), b = generate(c);
  EXPECT_TRUE(a.y_lf == b.y_lf);
  EXPECT_TRUE(a.y_hf == b.y_hf);
  EXPECT_EQ(a.train_stations, b.train_stations);
  c.seed = 78;
  EXPECT_FALSE(generate(c).y_lf == a.y_lf);
}

TEST(Generate, SeparableCovarianceMatchesKernel) {
  SimConfig c;
  c.n_space = 3;
  c.n_time = 5;
  const auto ds = generate(c);
  const auto kp = c.lf_kernel();
  const Eigen::MatrixXd full = gram(ds.points, kp, 0.0);
  Eigen::MatrixXd ks(9, 9), kt(5, 5);
  for (int a = 0; a < 9; ++a)
    for (int b = 0; b < 9; ++b)
      ks(a, b) = c.var_lf * space_correlation(ds.stations[a].where, ds.stations[b].where, kp.length_space);
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b)
      kt(a, b) = c.var_lf * time_correlation(a / 4.0, b / 4.0, kp.length_time);
  for (int j = 0; j < 9; ++j)
    for (int k = 0; k < 5; ++k)
      for (int jj = 0; jj < 9; ++jj)
        for (int kk = 0; kk < 5; ++kk)
          EXPECT_NEAR(full(ds.row(j, k), ds.row(jj, kk)), ks(j, jj) * kt(k, kk), 1e-12);
}

TEST(Generate, TargetCorrelationsReproduced) {
  // pooled second moments, mean known to be zero
  double lag_t = 0, lag_s = 0, sq = 0;
  SimConfig c;
  for (std::uint64_t r = 0; r < 200; ++r) {
    c.seed = 1000 + r;
    const auto ds = generate(c);
    const auto& d = ds.latent_lf;
    for (int s = 0; s < c.n_stations(); ++s) {
      for (int k = 0; k < c.n_time; ++k) {
        sq += d(ds.row(s, k)) * d(ds.row(s, k));
        if (k + 1 < c.n_time) lag_t += d(ds.row(s, k)) * d(ds.row(s, k + 1));
        if (s % c.side2() + 1 < c.side2()) lag_s += d(ds.row(s, k)) * d(ds.row(s + 1, k));
      }
    }
  }
  const double per_t = double(c.n_time - 1) / c.n_time;
  const double per_s = double(c.side2() - 1) / c.side2();
  EXPECT_NEAR(lag_t / (sq * per_t), 0.80, 0.05);
  EXPECT_NEAR(lag_s / (sq * per_s), 0.72, 0.05);
}

TEST(Generate, NoiselessLimitRecoversRho) {
  SimConfig c;
  c.var_hf = 1e-6;
  c.noise_lf = c.noise_hf = 0.0;
  c.jitter = 0.0;
  const auto ds = generate(c);
  const Eigen::VectorXd x = ds.y_lf.array() - ds.y_lf.mean();
  const Eigen::VectorXd y = ds.y_hf.array() - ds.y_hf.mean();
  EXPECT_NEAR(x.dot(y) / x.squaredNorm(), c.rho, 0.02);
}

TEST(Generate, DegenerateLimitGivesNearZeroHf) {
  SimConfig c;
  c.rho = 0.0;
  c.var_hf = 1e-6;
  c.noise_lf = c.noise_hf = 0.0;
  c.jitter = 1e-12;
  const auto ds = generate(c);
  EXPECT_LT(ds.y_hf.cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Generate, RejectsBadConfig) {
  SimConfig c;
  c.corr_time = 1.0;
  EXPECT_THROW(generate(c), InvalidArgument);
  c = SimConfig{};
  c.n_time = 1;
  EXPECT_THROW(generate(c), InvalidArgument);
}

TEST(Generate, TruthFoldsJitterIntoNuggets) {
  SimConfig c;
  const auto p = c.truth();
  EXPECT_DOUBLE_EQ(p.kernel_hf.amplitude, 4.0);
  EXPECT_NEAR(p.noise.lf, c.noise_lf + c.jitter, 1e-15);
  EXPECT_NEAR(p.noise.hf, 0.36 * (c.noise_lf + c.jitter) + c.noise_hf + c.jitter, 1e-15);
}
