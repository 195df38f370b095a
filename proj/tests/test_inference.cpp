#include <gtest/gtest.h>

#include <numbers>

#include "support.hpp"

using namespace mfgp;
using namespace testsupport;

namespace {

std::vector<RhoModel> rho_models() {
  return {ConstantRho{0.7}, LinearRho{0.5, 0.08, -0.05}, QuadraticRho{0.4, 0.1, -0.1, 0.02, 0.01}};
}

// Dense conditional obtained by appending targets as extra HF rows and reading off K.
struct Augmented {
  Eigen::MatrixXd cross;  // training rows x targets
  Eigen::VectorXd prior;
};

Augmented augmented_blocks(const MfData& d, const MfHyperParams& p, const std::vector<SpaceTimePoint>& t) {
  MfData a = d;
  for (const auto& x : t) {
    a.hf.push_back(x);
    a.hf_station.push_back(100000 + int(a.hf_station.size()));
  }
  a.y_hf = Eigen::VectorXd::Zero(a.n_hf());
  a.y_hf.head(d.n_hf()) = d.y_hf;
  const Eigen::MatrixXd k = dense_K(a, p);
  const int n = d.n_obs(), nt = int(t.size());
  // training LF rows first, then training HF rows, then targets
  Eigen::MatrixXd cross(n, nt);
  cross.topRows(d.n_lf()) = k.block(0, d.n_lf() + d.n_hf(), d.n_lf(), nt);
  cross.bottomRows(d.n_hf()) = k.block(d.n_lf(), d.n_lf() + d.n_hf(), d.n_hf(), nt);
  return {cross, k.bottomRightCorner(nt, nt).diagonal()};
}

MfData small_nested(std::uint64_t seed) {
  SimConfig c;
  c.n_space = 4;
  c.n_time = 6;
  c.n_train_stations = 5;
  c.seed = seed;
  return generate(c).training_data();
}

NelderMeadOptions quick_optimizer(std::uint64_t seed = 1) {
  NelderMeadOptions o;
  o.max_evals = 250;
  o.restarts = 2;
  o.seed = seed;
  return o;
}

}  // namespace

TEST(Nlml, ExactConditioningMatchesDenseAcrossConfigs) {
  const auto d = random_mf_data(110, 70, 21);
  for (const auto& rho : rho_models()) {
    auto p = default_params();
    p.rho = rho;
    for (auto ord : {OrderingKind::SpaceMajor, OrderingKind::TimeMajor, OrderingKind::TimeMajorRandSpace,
                     OrderingKind::Random}) {
      for (auto cond : {ConditioningKind::NearestNeighbor, ConditioningKind::Correlation}) {
        for (auto gls : {GlsKind::None, GlsKind::Global, GlsKind::Adaptive}) {
          for (bool reml : {true, false}) {
            if (gls == GlsKind::None && !reml) continue;
            auto cfg = exact_config(ord, cond, gls);
            cfg.gls.reml = reml;
            const double ref = dense_nlml(d, p, cfg.gls);
            EXPECT_LT(rel_err(nlml(p, d, cfg), ref), 1e-8);
          }
        }
      }
    }
  }
}

TEST(Nlml, DenseBackendMatchesOracle) {
  const auto d = random_mf_data(60, 40, 22);
  const auto p = default_params();
  ModelConfig cfg;
  cfg.backend = Backend::Dense;
  cfg.gls = {GlsKind::Adaptive, true};
  EXPECT_LT(rel_err(nlml(p, d, cfg), dense_nlml(d, p, cfg.gls)), 1e-12);
}

TEST(Nlml, LfOnlyReducesToSingleGp) {
  auto d = random_mf_data(80, 0, 23);
  const auto p = default_params();
  const Eigen::MatrixXd k = gram(d.lf, p.kernel_lf, default_jitter(p.kernel_lf)) +
                            p.noise.lf * Eigen::MatrixXd::Identity(80, 80);
  const Eigen::LLT<Eigen::MatrixXd> llt(k);
  const Eigen::MatrixXd l = llt.matrixL();
  const double ref = 0.5 * d.y_lf.dot(llt.solve(d.y_lf)) + l.diagonal().array().log().sum() +
                     40.0 * std::log(2.0 * std::numbers::pi);
  EXPECT_LT(rel_err(nlml(p, d, exact_config(OrderingKind::Random, ConditioningKind::Correlation)), ref),
            1e-9);
}

TEST(Nlml, InvalidParametersGiveSentinel) {
  const auto d = random_mf_data(30, 20, 24);
  auto p = default_params();
  p.kernel_lf.amplitude = -1.0;
  EXPECT_TRUE(std::isinf(nlml(p, d, ModelConfig{})));
  p = default_params();
  p.noise.hf = 0.0;
  EXPECT_TRUE(std::isinf(nlml(p, d, ModelConfig{})));
  EXPECT_THROW(MfLikelihood(d, ModelConfig{}).evaluate(p), InvalidArgument);
}

TEST(Nlml, ApproximationErrorIsSmallAtModerateM) {
  SimConfig c;
  c.n_train_stations = 12;
  c.seed = 5;
  const auto ds = generate(c);
  const auto d = ds.training_data();
  ModelConfig cfg;
  cfg.vecchia.ordering = {OrderingKind::TimeMajor};
  cfg.vecchia.conditioning = {ConditioningKind::Correlation, 40};
  const auto r = validate(d, c.truth(), cfg);
  EXPECT_LT(r.diff_rel, 0.02);
}

TEST(Params, PackUnpackRoundTrip) {
  for (const auto& rho : rho_models()) {
    auto p = default_params();
    p.rho = rho;
    const auto names = parameter_names(p);
    const Eigen::VectorXd x = pack(p);
    ASSERT_EQ(x.size(), static_cast<Eigen::Index>(names.size()));
    const auto q = unpack(x, p);
    ASSERT_TRUE(q.has_value());
    EXPECT_LT(rel_err(pack(*q), x), 1e-14);
  }
  EXPECT_EQ(parameter_names(default_params()).size(), 9u);
  EXPECT_EQ(parameter_names(default_params()).back(), "rho");
}

TEST(Params, OutOfRangeLogValuesRejected) {
  Eigen::VectorXd x = pack(default_params());
  x(2) = 40.0;
  EXPECT_FALSE(unpack(x, default_params()).has_value());
}

TEST(Fit, DoesNotWorsenTruthStart) {
  const auto d = small_nested(3);
  SimConfig c;
  const auto init = c.truth();
  ModelConfig cfg;
  cfg.vecchia.conditioning = {ConditioningKind::Correlation, 15};
  FitOptions fo;
  fo.optimizer = quick_optimizer();
  const auto r = fit(d, cfg, init, fo);
  EXPECT_TRUE(std::isfinite(r.nlml));
  EXPECT_LE(r.nlml, nlml(init, d, cfg) + 1e-12);
  EXPECT_GT(r.evaluations, 0);
  EXPECT_FALSE(r.gls.has_value());
}

TEST(Fit, FixedParametersStayPut) {
  const auto d = small_nested(4);
  const auto init = SimConfig{}.truth();
  ModelConfig cfg;
  cfg.gls = {GlsKind::Global, true};
  FitOptions fo;
  fo.optimizer = quick_optimizer();
  fo.fixed = {"rho", "length_time_lf"};
  const auto r = fit(d, cfg, init, fo);
  EXPECT_DOUBLE_EQ(std::get<ConstantRho>(r.params.rho).value, 0.6);
  EXPECT_NEAR(r.params.kernel_lf.length_time, init.kernel_lf.length_time, 1e-12 * init.kernel_lf.length_time);
  ASSERT_TRUE(r.gls.has_value());
  EXPECT_EQ(r.gls->beta.size(), 2);
  EXPECT_THROW(fit(d, cfg, init, FitOptions{quick_optimizer(), {"nope"}}), InvalidArgument);
}

TEST(Fit, SeedsAgreeOnFinalNlml) {
  const auto d = small_nested(5);
  ModelConfig cfg;
  const auto init = initial_guess(d);
  FitOptions a, b;
  a.optimizer = quick_optimizer(1);
  b.optimizer = quick_optimizer(2);
  a.optimizer.max_evals = b.optimizer.max_evals = 600;
  a.optimizer.restarts = b.optimizer.restarts = 3;
  const double fa = fit(d, cfg, init, a).nlml;
  const double fb = fit(d, cfg, init, b).nlml;
  EXPECT_LT(std::abs(fa - fb), 0.01 * std::abs(fa));
}

TEST(Fit, DeterministicGivenSeed) {
  const auto d = small_nested(6);
  ModelConfig cfg;
  FitOptions fo;
  fo.optimizer = quick_optimizer(9);
  const auto a = fit(d, cfg, initial_guess(d), fo);
  const auto b = fit(d, cfg, initial_guess(d), fo);
  EXPECT_EQ(a.nlml, b.nlml);
  EXPECT_TRUE(pack(a.params) == pack(b.params));
}

TEST(Fit, LfOnlyMasksHfParameters) {
  auto d = random_mf_data(40, 0, 25);
  FitOptions fo;
  fo.optimizer = quick_optimizer();
  const auto init = default_params();
  const auto r = fit(d, ModelConfig{}, init, fo);
  EXPECT_EQ(r.params.kernel_hf.amplitude, init.kernel_hf.amplitude);
  EXPECT_EQ(std::get<ConstantRho>(r.params.rho).value, 0.7);
}

TEST(Fit, InitialGuessIsValid) {
  const auto d = small_nested(7);
  const auto p = initial_guess(d);
  EXPECT_TRUE(p.kernel_lf.valid());
  EXPECT_TRUE(p.kernel_hf.valid());
  EXPECT_TRUE(p.noise.valid());
  EXPECT_TRUE(std::isfinite(nlml(p, d, ModelConfig{})));
}

TEST(Predict, MatchesAugmentedDenseConditional) {
  const auto d = random_mf_data(70, 45, 26);
  const auto targets = random_points(6, 27);
  for (const auto& rho : rho_models()) {
    auto p = default_params();
    p.rho = rho;
    const auto aug = augmented_blocks(d, p, targets);
    const Eigen::MatrixXd k = dense_K(d, p);
    const Eigen::LLT<Eigen::MatrixXd> llt(k);
    const Eigen::VectorXd mean = aug.cross.transpose() * llt.solve(d.y());
    const Eigen::VectorXd var =
        aug.prior - (aug.cross.array() * llt.solve(aug.cross).array()).colwise().sum().transpose().matrix();
    for (auto backend : {Backend::Vecchia, Backend::Dense}) {
      auto cfg = exact_config(OrderingKind::TimeMajor, ConditioningKind::Correlation);
      cfg.backend = backend;
      const auto pr = predict(p, d, cfg, targets);
      EXPECT_LT(rel_err(pr.mean, mean), 1e-8);
      EXPECT_LT(rel_err(pr.variance, var), 1e-8);
    }
  }
}

TEST(Predict, GlsTrendIsAddedBack) {
  const auto d = random_mf_data(70, 45, 28);
  const auto targets = random_points(5, 29);
  const auto p = default_params();
  const auto aug = augmented_blocks(d, p, targets);
  const Eigen::MatrixXd k = dense_K(d, p);
  const Eigen::LLT<Eigen::MatrixXd> llt(k);
  for (auto kind : {GlsKind::Global, GlsKind::Adaptive}) {
    const Eigen::MatrixXd g = gls_design(d, d.layout(), kind);
    const Eigen::MatrixXd kg = llt.solve(g);
    const Eigen::VectorXd beta = (g.transpose() * kg).ldlt().solve(kg.transpose() * d.y());
    const Eigen::VectorXd resid = d.y() - g * beta;
    Eigen::VectorXd mean = aug.cross.transpose() * llt.solve(resid);
    for (int t = 0; t < 5; ++t) {
      mean(t) += hf_design_row(kind, targets[t].location(), d.coordinate_centre()).dot(beta);
    }
    const auto pr = predict(p, d, exact_config(OrderingKind::SpaceMajor, ConditioningKind::Correlation, kind),
                            targets);
    EXPECT_LT(rel_err(pr.mean, mean), 1e-8);
  }
}

TEST(Predict, InterpolatesObservedHfWithTinyNuggets) {
  const auto d = small_nested(8);
  auto p = SimConfig{}.truth();
  p.noise = {1e-9, 1e-9};
  const std::vector<SpaceTimePoint> t{d.hf[0], d.hf[7], d.hf[13]};
  const auto pr = predict(p, d, exact_config(OrderingKind::SpaceMajor, ConditioningKind::Correlation), t);
  EXPECT_NEAR(pr.mean(0), d.y_hf(0), 1e-4);
  EXPECT_NEAR(pr.mean(1), d.y_hf(7), 1e-4);
  EXPECT_NEAR(pr.mean(2), d.y_hf(13), 1e-4);
}

TEST(Predict, ZeroRhoEqualsSingleGpOnHfRows) {
  const auto d = random_mf_data(60, 40, 30);
  auto p = default_params();
  p.rho = ConstantRho{0.0};
  const auto targets = random_points(7, 31);
  const double jd = default_jitter(p.kernel_hf);
  const Eigen::MatrixXd k = gram(d.hf, p.kernel_hf, jd) + p.noise.hf * Eigen::MatrixXd::Identity(40, 40);
  const Eigen::MatrixXd c = cross_gram(d.hf, targets, p.kernel_hf);
  const Eigen::LLT<Eigen::MatrixXd> llt(k);
  const Eigen::VectorXd mean = c.transpose() * llt.solve(d.y_hf);
  const Eigen::VectorXd var =
      (p.kernel_hf.amplitude + jd + p.noise.hf) -
      (c.array() * llt.solve(c).array()).colwise().sum().transpose();
  const auto pr = predict(p, d, exact_config(OrderingKind::Random, ConditioningKind::NearestNeighbor), targets);
  EXPECT_LT(rel_err(pr.mean, mean), 1e-8);
  EXPECT_LT(rel_err(pr.variance, var), 1e-8);
}

TEST(Predict, SmallNeighbourhoodKeepsVarianceAboveNugget) {
  SimConfig s;
  s.n_space = 4;
  s.n_time = 6;
  s.n_train_stations = 6;
  s.seed = 5;
  const SimDataset ds = generate(s);
  const MfData d = ds.training_data();
  auto p = s.truth();
  p.kernel_hf.amplitude *= 3.0;
  std::vector<SpaceTimePoint> targets = ds.points_of(ds.test_stations);
  targets.push_back(d.hf[0]);
  targets.push_back({2.5, 2.5, 0.45});
  for (auto cond : {ConditioningKind::NearestNeighbor, ConditioningKind::Correlation}) {
    ModelConfig dense;
    dense.backend = Backend::Dense;
    const auto pd = predict(p, d, dense, targets);
    ModelConfig coarse;
    coarse.vecchia.conditioning = {cond, 4};
    EXPECT_GE(predict(p, d, coarse, targets).variance.minCoeff(), p.noise.hf);
    ModelConfig fine;
    fine.vecchia.conditioning = {cond, 40};
    const auto pf = predict(p, d, fine, targets);
    EXPECT_LT(rel_err(pf.variance, pd.variance), 0.01);
    EXPECT_LT(((pf.mean - pd.mean).array().abs() / pd.variance.array().sqrt()).maxCoeff(), 0.1);
  }
}

TEST(Predict, ExactNeighbourhoodMatchesDenseWithLinksAndGls) {
  const auto d = random_mf_data(60, 30, 32);
  const auto targets = random_points(8, 33);
  const auto links = random_points(8, 34);
  for (auto kind : {GlsKind::None, GlsKind::Adaptive}) {
    auto cfg = exact_config(OrderingKind::Random, ConditioningKind::NearestNeighbor, kind);
    auto dense = cfg;
    dense.backend = Backend::Dense;
    const auto pv = predict(default_params(), d, cfg, targets, links);
    const auto pd = predict(default_params(), d, dense, targets, links);
    EXPECT_LT(rel_err(pv.mean, pd.mean), 1e-8);
    EXPECT_LT(rel_err(pv.variance, pd.variance), 1e-8);
  }
}

TEST(Predict, VarianceShrinksTowardsTrainingPoint) {
  const auto d = small_nested(9);
  const auto p = SimConfig{}.truth();
  const auto anchor = d.hf[3];
  std::vector<SpaceTimePoint> line;
  for (double f : {1.0, 0.6, 0.3, 0.1, 0.0}) line.push_back({anchor.s1 + 0.9 * f, anchor.s2 + 0.7 * f, anchor.t});
  const auto pr = predict(p, d, ModelConfig{}, line);
  EXPECT_TRUE((pr.variance.array() > 0.0).all());
  for (int k = 1; k < 5; ++k) EXPECT_LE(pr.variance(k), pr.variance(k - 1) + 1e-12);
  const Eigen::VectorXd width = pr.upper - pr.lower;
  EXPECT_LT((width - 2 * 1.96 * pr.variance.cwiseSqrt()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Predict, UnfittedEmpiricalRhoIsPrepared) {
  const auto d = small_nested(10);
  auto p = SimConfig{}.truth();
  p.rho = EmpiricalGpRho{};
  const std::vector<SpaceTimePoint> t{{2.5, 2.5, 0.5}};
  const auto pr = predict(p, d, ModelConfig{}, t);
  EXPECT_TRUE(pr.mean.allFinite());
}

TEST(Baselines, InputShapes) {
  EXPECT_EQ(input_dimension(BaselineKind::GP_L), 1);
  EXPECT_EQ(input_dimension(BaselineKind::GP_3D), 3);
  EXPECT_EQ(input_dimension(BaselineKind::GP_4D), 4);
  const std::vector<SpaceTimePoint> pts{{1, 2, 0.5}, {3, 4, 0.25}};
  const Eigen::Vector2d lf(0.1, -0.2);
  const Eigen::MatrixXd x = baseline_inputs(BaselineKind::GP_4D, pts, lf);
  EXPECT_EQ(x.cols(), 4);
  EXPECT_EQ(x.row(1), Eigen::RowVector4d(-0.2, 3, 4, 0.25));
}

TEST(Baselines, IdenticalFidelitiesGiveTinyErrorForLfInput) {
  SimConfig c;
  c.n_space = 4;
  c.n_train_stations = 6;
  const auto ds = generate(c);
  auto d = ds.training_data();
  for (int h = 0; h < d.n_hf(); ++h) d.y_hf(h) = lf_values_at(d, std::vector<SpaceTimePoint>{d.hf[h]})(0);
  const auto targets = ds.points_of(ds.test_stations);
  const Eigen::VectorXd truth = lf_values_at(d, targets);
  const auto pr = baseline_fit_predict(BaselineKind::GP_L, d, targets);
  EXPECT_LT((pr.mean - truth).cwiseAbs().mean(), 1e-2);
}

TEST(Baselines, AllKindsProduceFinitePredictions) {
  const auto d = small_nested(11);
  const std::vector<SpaceTimePoint> targets{d.lf[0], d.lf[5]};
  for (auto kind : {BaselineKind::GP_L, BaselineKind::GP_3D, BaselineKind::GP_4D}) {
    const auto pr = baseline_fit_predict(kind, d, targets);
    EXPECT_TRUE(pr.mean.allFinite());
    EXPECT_TRUE((pr.variance.array() > 0).all());
  }
}

TEST(Baselines, SizeCapEnforced) {
  const auto d = small_nested(12);
  BaselineOptions o;
  o.size_cap = 10;
  EXPECT_THROW(baseline_fit_predict(BaselineKind::GP_3D, d, std::vector<SpaceTimePoint>{d.lf[0]}, {}, o),
               DenseSizeExceeded);
}
