#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfgp/error.hpp"
#include "mfgp/kernels.hpp"
#include "mfgp/meanmodel.hpp"
#include "mfgp/mfstruct.hpp"
#include "mfgp/model.hpp"
#include "mfgp/optimize.hpp"
#include "mfgp/oracle.hpp"
#include "mfgp/rho.hpp"
#include "mfgp/vecchia.hpp"

namespace mfgp {

/// Ordering and (optionally frozen) conditioning sets of one latent process.
class ProcessPlan {
 public:
  ProcessPlan() = default;
  ProcessPlan(std::vector<SpaceTimePoint> points, const VecchiaConfig& cfg)
      : points_(std::move(points)), cfg_(cfg) {
    if (points_.empty()) return;
    perm_ = order_points(points_, cfg.ordering);
    ordered_ = apply_permutation(points_, perm_);
  }

  bool empty() const { return points_.empty(); }
  int size() const { return static_cast<int>(points_.size()); }
  const std::vector<SpaceTimePoint>& points() const { return points_; }
  const Permutation& permutation() const { return perm_; }

  void freeze(const KernelParams& kp) { frozen_ = neighbor_sets(ordered_, cfg_.conditioning, kp); }
  void unfreeze() { frozen_.reset(); }

  VecchiaFactor factor(const KernelParams& kp) const {
    const double jitter = default_jitter(kp, cfg_.jitter_relative);
    if (frozen_) return build_factor(points_, perm_, *frozen_, kp, jitter);
    return build_factor(points_, perm_, neighbor_sets(ordered_, cfg_.conditioning, kp), kp, jitter);
  }

 private:
  std::vector<SpaceTimePoint> points_;
  VecchiaConfig cfg_;
  Permutation perm_;
  std::vector<SpaceTimePoint> ordered_;
  std::optional<std::vector<std::vector<int>>> frozen_;
};

/*
 * Likelihood of one data set under one model configuration. Orderings are
 * computed once; conditioning sets are recomputed per evaluation unless frozen.
 */
class MfLikelihood {
 public:
  MfLikelihood(MfData data, ModelConfig cfg) : data_(std::move(data)), cfg_(std::move(cfg)) {
    data_.validate();
    layout_ = data_.layout();
    y_ = data_.y();
    locations_ = data_.hf_locations();
    if (cfg_.gls.kind != GlsKind::None) design_ = gls_design(data_, layout_, cfg_.gls.kind);
    if (cfg_.backend == Backend::Vecchia) {
      plan_lf_ = ProcessPlan(layout_.latent_lf, cfg_.vecchia);
      plan_hf_ = ProcessPlan(layout_.hf_points, cfg_.vecchia);
    } else {
      check_dense_cap(data_.n_obs(), cfg_.dense_cap);
    }
  }

  const MfData& data() const { return data_; }
  const ModelConfig& config() const { return cfg_; }
  const FidelityLayout& layout() const { return layout_; }
  const Eigen::MatrixXd& design() const { return design_; }

  void freeze_neighbors(const MfHyperParams& p) {
    if (cfg_.backend != Backend::Vecchia) return;
    plan_lf_.freeze(p.kernel_lf);
    if (!plan_hf_.empty()) plan_hf_.freeze(p.kernel_hf);
  }

  Eigen::VectorXd rho_at_hf(const MfHyperParams& p) const { return mfgp::evaluate(p.rho, locations_); }

  /// The fill order of H is picked on the first call and reused; any order
  /// is valid, so later changes to the conditioning sets only cost speed.
  MfSystem system(const MfHyperParams& p) const {
    const VecchiaFactor fl = plan_lf_.factor(p.kernel_lf);
    std::shared_ptr<const FillOrder> order;
    {
      const std::lock_guard lock(fill_->mu);
      order = fill_->order;
    }
    auto build = [&] {
      if (plan_hf_.empty()) return MfSystem(layout_, fl, nullptr, Eigen::VectorXd(0), p.noise, order);
      const VecchiaFactor fh = plan_hf_.factor(p.kernel_hf);
      return MfSystem(layout_, fl, &fh, rho_at_hf(p), p.noise, order);
    };
    MfSystem sys = build();
    if (!order) {
      auto best = min_fill_order(sys, layout_);
      const std::lock_guard lock(fill_->mu);
      if (!fill_->order) fill_->order = std::move(best);
    }
    return sys;
  }

  /// Throws on numerical failure.
  double evaluate(const MfHyperParams& p, GlsFit* fit_out = nullptr) const {
    if (!p.kernel_lf.valid() || !p.kernel_hf.valid() || !p.noise.valid()) {
      throw InvalidArgument("hyperparameters must be finite and positive");
    }
    if (cfg_.backend == Backend::Dense) {
      const DenseSolver solver(dense_K(data_, p, cfg_.vecchia.jitter_relative, cfg_.dense_cap));
      return nlml_from_solver(solver, y_, cfg_.gls, design_, fit_out);
    }
    const MfSystem sys = system(p);
    return nlml_from_solver(sys, y_, cfg_.gls, design_, fit_out);
  }

  /// +inf on numerical failure, for use as an optimisation objective.
  double operator()(const MfHyperParams& p) const {
    try {
      const double v = evaluate(p);
      return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    } catch (const InvalidArgument&) {
      return std::numeric_limits<double>::infinity();
    }
  }

 private:
  MfData data_;
  ModelConfig cfg_;
  FidelityLayout layout_;
  Eigen::VectorXd y_;
  std::vector<Location> locations_;
  Eigen::MatrixXd design_;
  ProcessPlan plan_lf_, plan_hf_;
  struct FillCache {
    std::mutex mu;
    std::shared_ptr<const FillOrder> order;
  };
  std::shared_ptr<FillCache> fill_ = std::make_shared<FillCache>();
};

inline double nlml(const MfHyperParams& p, const MfData& data, const ModelConfig& cfg) {
  return MfLikelihood(data, cfg)(p);
}

// Optimisation vector: log of the 8 positive parameters, then the rho coefficients.
//   [g_L^2, g_d^2, amp_L, ls_L, lt_L, amp_d, ls_d, lt_d, rho...]
inline std::vector<std::string> parameter_names(const MfHyperParams& p) {
  std::vector<std::string> names{"noise_lf", "noise_hf", "amplitude_lf", "length_space_lf",
                                 "length_time_lf", "amplitude_hf", "length_space_hf",
                                 "length_time_hf"};
  const int nr = trainable_count(p.rho);
  static const char* rho_names[] = {"rho_intercept", "rho_s1", "rho_s2", "rho_s1sq", "rho_s2sq"};
  if (nr == 1) {
    names.emplace_back("rho");
  } else {
    for (int k = 0; k < nr; ++k) names.emplace_back(rho_names[k]);
  }
  return names;
}

inline Eigen::VectorXd pack(const MfHyperParams& p) {
  const int nr = trainable_count(p.rho);
  Eigen::VectorXd x(8 + nr);
  x << std::log(p.noise.lf), std::log(p.noise.hf), std::log(p.kernel_lf.amplitude),
      std::log(p.kernel_lf.length_space), std::log(p.kernel_lf.length_time),
      std::log(p.kernel_hf.amplitude), std::log(p.kernel_hf.length_space),
      std::log(p.kernel_hf.length_time), trainable_values(p.rho);
  return x;
}

/// Inverse of pack; returns nullopt when a positive parameter leaves [1e-10, 1e10].
inline std::optional<MfHyperParams> unpack(const Eigen::VectorXd& x, const MfHyperParams& like) {
  const double lim = std::log(1e10);
  if ((x.head(8).array().abs() > lim).any() || !x.allFinite()) return std::nullopt;
  MfHyperParams p = like;
  p.noise = {std::exp(x(0)), std::exp(x(1))};
  p.kernel_lf = {std::exp(x(2)), std::exp(x(3)), std::exp(x(4))};
  p.kernel_hf = {std::exp(x(5)), std::exp(x(6)), std::exp(x(7))};
  p.rho = with_trainable_values(like.rho, x.tail(x.size() - 8));
  return p;
}

struct FitOptions {
  NelderMeadOptions optimizer{};
  /// Parameter names (see parameter_names) held at their initial values.
  std::vector<std::string> fixed;
};

struct FitResult {
  MfHyperParams params;
  double nlml = std::numeric_limits<double>::infinity();
  std::optional<GlsFit> gls;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Fits the empirical rho model from matched station series if it is not fitted yet.
inline RhoModel prepare_rho(const MfData& data, const RhoModel& model,
                            const SmootherOptions& opt = {}) {
  if (const auto* e = std::get_if<EmpiricalGpRho>(&model); e != nullptr && !e->fitted()) {
    return fit_empirical_gp(empirical_slopes(data.matched_series()), opt);
  }
  return model;
}

/*
 * Data-driven starting point: LF amplitude from the LF sample variance, length
 * scales from coordinate spreads, rho from the pooled HF-on-LF slope, and the
 * discrepancy amplitude from the variance of y_H - rho * y_L. Nuggets start at a
 * tenth of the respective amplitude.
 */
inline MfHyperParams initial_guess(const MfData& data, const RhoModel& rho_kind = ConstantRho{}) {
  auto var_of = [](const std::vector<double>& v) {
    if (v.size() < 2) return 1.0;
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    const double r = s / static_cast<double>(v.size() - 1);
    return r > 0.0 ? r : 1.0;
  };
  auto sd_of = [&](auto get, const std::vector<SpaceTimePoint>& pts) {
    std::vector<double> v;
    for (const auto& p : pts) v.push_back(get(p));
    return std::sqrt(var_of(v));
  };
  std::vector<SpaceTimePoint> all = data.lf;
  all.insert(all.end(), data.hf.begin(), data.hf.end());
  const double ls = 0.5 * (sd_of([](const SpaceTimePoint& p) { return p.s1; }, all) +
                           sd_of([](const SpaceTimePoint& p) { return p.s2; }, all));
  const double lt = sd_of([](const SpaceTimePoint& p) { return p.t; }, all);

  MfHyperParams p;
  const double vl = var_of(std::vector<double>(data.y_lf.data(), data.y_lf.data() + data.y_lf.size()));
  p.kernel_lf = {0.9 * vl, ls, lt};
  p.noise.lf = 0.1 * vl;

  std::vector<double> lf_pool, hf_pool;
  for (const auto& s : data.matched_series()) {
    lf_pool.insert(lf_pool.end(), s.lf.begin(), s.lf.end());
    hf_pool.insert(hf_pool.end(), s.hf.begin(), s.hf.end());
  }
  double rho = 0.5;
  if (lf_pool.size() >= 3) {
    try {
      rho = slope_of(lf_pool, hf_pool, -1);
    } catch (const Error&) {
    }
  }
  std::vector<double> resid;
  for (std::size_t k = 0; k < lf_pool.size(); ++k) resid.push_back(hf_pool[k] - rho * lf_pool[k]);
  const double vd = resid.size() >= 2
                        ? var_of(resid)
                        : var_of(std::vector<double>(data.y_hf.data(), data.y_hf.data() + data.y_hf.size()));
  p.kernel_hf = {0.9 * vd, ls, lt};
  p.noise.hf = 0.1 * vd;

  if (std::holds_alternative<ConstantRho>(rho_kind)) {
    p.rho = ConstantRho{rho};
  } else if (std::holds_alternative<LinearRho>(rho_kind)) {
    p.rho = LinearRho{rho, 0.0, 0.0};
  } else if (std::holds_alternative<QuadraticRho>(rho_kind)) {
    p.rho = QuadraticRho{rho, 0.0, 0.0, 0.0, 0.0};
  } else {
    p.rho = rho_kind;
  }
  return p;
}

inline FitResult fit(const MfData& data, const ModelConfig& cfg, const MfHyperParams& init,
                     const FitOptions& opt = {}) {
  MfHyperParams start = init;
  start.rho = prepare_rho(data, init.rho);
  MfLikelihood lik(data, cfg);
  if (cfg.vecchia.freeze_neighbors) lik.freeze_neighbors(start);

  const auto names = parameter_names(start);
  std::vector<bool> mask(names.size(), false);
  for (const auto& f : opt.fixed) {
    const auto it = std::find(names.begin(), names.end(), f);
    if (it == names.end()) throw InvalidArgument("unknown parameter to fix: " + f);
    mask[static_cast<std::size_t>(it - names.begin())] = true;
  }
  if (data.n_hf() == 0) {
    for (std::size_t k = 1; k < names.size(); ++k) {
      if (names[k].find("_hf") != std::string::npos || names[k].rfind("rho", 0) == 0) mask[k] = true;
    }
  }

  auto objective = [&](const Eigen::VectorXd& x) {
    const auto p = unpack(x, start);
    if (!p) return std::numeric_limits<double>::infinity();
    return lik(*p);
  };
  const OptimResult r = minimize(objective, pack(start), opt.optimizer, mask);

  FitResult out;
  out.params = *unpack(r.x, start);
  out.iterations = r.iterations;
  out.evaluations = r.evaluations;
  out.converged = r.converged;
  if (cfg.gls.kind != GlsKind::None) {
    GlsFit g;
    out.nlml = lik.evaluate(out.params, &g);
    out.gls = std::move(g);
  } else {
    out.nlml = lik.evaluate(out.params);
  }
  return out;
}

struct Prediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;  // observation level: includes the HF nugget
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

inline Prediction make_prediction(Eigen::VectorXd mean, Eigen::VectorXd variance) {
  Prediction p;
  p.mean = std::move(mean);
  p.variance = std::move(variance);
  const Eigen::ArrayXd half = 1.96 * p.variance.array().sqrt();
  p.lower = p.mean.array() - half;
  p.upper = p.mean.array() + half;
  return p;
}

/*
 * A latent value at a new point read off the training latents: exact when
 * the point is one of them, otherwise the Vecchia conditional on its m
 * nearest training points (all of them count as predecessors).
 */
struct LatentReading {
  std::vector<int> index;
  std::vector<double> weight;
  double residual_var = 0.0;
};

inline LatentReading read_latent(const SpaceTimePoint& x, std::span<const SpaceTimePoint> pts,
                                 const std::map<SpaceTimePoint, int>& position, const AxisWeights& w, int m,
                                 const KernelParams& kp, double jitter) {
  LatentReading r;
  if (const auto it = position.find(x); it != position.end()) {
    r.index = {it->second};
    r.weight = {1.0};
    return r;
  }
  r.residual_var = kp.amplitude + jitter;
  if (pts.empty()) return r;
  std::vector<std::pair<double, int>> cand;
  cand.reserve(pts.size());
  for (int j = 0; j < static_cast<int>(pts.size()); ++j) cand.emplace_back(w.sq_distance(x, pts[j]), j);
  detail::rank_and_truncate(cand, m, r.index);
  const auto mc = static_cast<Eigen::Index>(r.index.size());
  Eigen::MatrixXd kcc(mc, mc);
  Eigen::VectorXd kcx(mc);
  for (Eigen::Index a = 0; a < mc; ++a) {
    for (Eigen::Index b = 0; b <= a; ++b) {
      kcc(a, b) = kcc(b, a) = latent_cov(pts[r.index[a]], pts[r.index[b]], kp, jitter);
    }
    kcx(a) = latent_cov(pts[r.index[a]], x, kp, jitter);
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(kcc);
  if (llt.info() != Eigen::Success) throw CholeskyFailure("prediction: conditioning block not positive definite");
  const Eigen::VectorXd b = llt.solve(kcx);
  r.weight.assign(b.data(), b.data() + mc);
  r.residual_var = std::max(r.residual_var - kcx.dot(b), 0.0);
  return r;
}

/*
 * HF predictive distribution at `targets`, whose LF process is read at
 * `target_links` (default: the targets themselves).
 */
inline Prediction predict(const MfHyperParams& fitted, const MfData& data, const ModelConfig& cfg,
                          std::span<const SpaceTimePoint> targets,
                          std::span<const SpaceTimePoint> target_links = {}) {
  if (!target_links.empty() && target_links.size() != targets.size()) {
    throw InvalidArgument("predict: one link per target required");
  }
  MfHyperParams params = fitted;
  params.rho = prepare_rho(data, fitted.rho);
  const MfLikelihood lik(data, cfg);
  const int nl = data.n_lf(), nh = data.n_hf();
  const auto nt = static_cast<Eigen::Index>(targets.size());
  const KernelParams& kl = params.kernel_lf;
  const KernelParams& kd = params.kernel_hf;
  const double jl = default_jitter(kl, cfg.vecchia.jitter_relative);
  const double jd = default_jitter(kd, cfg.vecchia.jitter_relative);
  const Eigen::VectorXd rho_tr = lik.rho_at_hf(params);
  std::vector<Location> tlocs;
  for (const auto& t : targets) tlocs.push_back(t.location());
  const Eigen::VectorXd rho_t = evaluate(params.rho, tlocs);
  warn_if_extreme(rho_tr);

  auto link_of = [&](Eigen::Index k) -> const SpaceTimePoint& {
    return target_links.empty() ? targets[static_cast<std::size_t>(k)]
                                : target_links[static_cast<std::size_t>(k)];
  };
  Eigen::MatrixXd ct;  // cross-covariance, training rows x targets (dense backend only)
  Eigen::VectorXd prior(nt);
  if (cfg.backend == Backend::Dense) ct.resize(nl + nh, nt);
  for (Eigen::Index k = 0; cfg.backend == Backend::Dense && k < nt; ++k) {
    const auto& x = targets[static_cast<std::size_t>(k)];
    const auto& lk = link_of(k);
    for (int r = 0; r < nl; ++r) ct(r, k) = rho_t(k) * latent_cov(lk, data.lf[r], kl, jl);
    for (int h = 0; h < nh; ++h) {
      ct(nl + h, k) = rho_t(k) * rho_tr(h) * latent_cov(lk, data.link(h), kl, jl) +
                      latent_cov(x, data.hf[h], kd, jd);
    }
    prior(k) = rho_t(k) * rho_t(k) * (kl.amplitude + jl) + kd.amplitude + jd + params.noise.hf;
  }

  auto finish = [&](const auto& solver) {
    const Eigen::VectorXd y = data.y();
    Eigen::VectorXd kiy;
    Eigen::VectorXd trend = Eigen::VectorXd::Zero(nt);
    if (cfg.gls.kind == GlsKind::None) {
      kiy = solver.solve(y);
    } else {
      const GlsFit g = gls_fit(solver, y, lik.design());
      kiy = g.kinv_residual;
      const Location centre =
          cfg.gls.kind == GlsKind::Adaptive ? data.coordinate_centre() : Location{};
      for (Eigen::Index k = 0; k < nt; ++k) {
        const Eigen::RowVectorXd row = hf_design_row(cfg.gls.kind, tlocs[k], centre);
        trend(k) = nh > 0 ? row.dot(g.beta) : g.beta(0);
      }
    }
    const Eigen::MatrixXd kic = solver.solve(ct);
    const Eigen::VectorXd mean = ct.transpose() * kiy + trend;
    const Eigen::VectorXd var =
        (prior.array() - (ct.array() * kic.array()).colwise().sum().transpose()).cwiseMax(1e-12);
    return make_prediction(mean, var);
  };
  if (cfg.backend == Backend::Dense) {
    return finish(DenseSolver(dense_K(data, params, cfg.vecchia.jitter_relative, cfg.dense_cap)));
  }

  // Vecchia: H is the posterior precision of the latent fields, so each target
  // is a sparse read-out of them plus its own conditional variance.
  const MfSystem sys = lik.system(params);
  const FidelityLayout& lay = lik.layout();
  const int n_lat = lay.n_latent_lf();
  Eigen::VectorXd resid = data.y();
  Eigen::VectorXd trend = Eigen::VectorXd::Zero(nt);
  if (cfg.gls.kind != GlsKind::None) {
    const GlsFit g = gls_fit(sys, resid, lik.design());
    resid = g.residual;
    const Location centre = cfg.gls.kind == GlsKind::Adaptive ? data.coordinate_centre() : Location{};
    for (Eigen::Index k = 0; k < nt; ++k) {
      const Eigen::RowVectorXd row = hf_design_row(cfg.gls.kind, tlocs[k], centre);
      trend(k) = nh > 0 ? row.dot(g.beta) : g.beta(0);
    }
  }
  const Eigen::VectorXd mu = sys.latent_mean(resid);

  std::map<SpaceTimePoint, int> at_lf, at_hf;
  for (int j = 0; j < n_lat; ++j) at_lf.emplace(lay.latent_lf[j], j);
  for (int h = 0; h < nh; ++h) at_hf.emplace(lay.hf_points[h], h);
  const int m = cfg.vecchia.conditioning.m;
  const AxisWeights wl = axis_weights(lay.latent_lf, cfg.vecchia.conditioning, kl);
  const AxisWeights wd = nh > 0 ? axis_weights(lay.hf_points, cfg.vecchia.conditioning, kd) : AxisWeights{};

  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd var(nt);
  for (Eigen::Index k = 0; k < nt; ++k) {
    const LatentReading rl = read_latent(link_of(k), lay.latent_lf, at_lf, wl, m, kl, jl);
    const LatentReading rd = read_latent(targets[static_cast<std::size_t>(k)], lay.hf_points, at_hf, wd, m, kd, jd);
    const auto col = static_cast<int>(k);
    for (std::size_t a = 0; a < rl.index.size(); ++a) trip.emplace_back(rl.index[a], col, rho_t(k) * rl.weight[a]);
    for (std::size_t a = 0; a < rd.index.size(); ++a) trip.emplace_back(n_lat + rd.index[a], col, rd.weight[a]);
    var(k) = rho_t(k) * rho_t(k) * rl.residual_var + rd.residual_var + params.noise.hf;
  }
  Eigen::SparseMatrix<double> g(n_lat + nh, nt);
  g.setFromTriplets(trip.begin(), trip.end());
  const Eigen::VectorXd mean = g.transpose() * mu + trend;
  constexpr Eigen::Index kChunk = 256;
  for (Eigen::Index c0 = 0; c0 < nt; c0 += kChunk) {
    const Eigen::Index w = std::min(kChunk, nt - c0);
    const Eigen::MatrixXd gc = Eigen::MatrixXd(g.middleCols(c0, w));
    const Eigen::MatrixXd hg = sys.solve_H(gc);
    var.segment(c0, w) += (gc.array() * hg.array()).colwise().sum().transpose().matrix();
  }
  return make_prediction(mean, var);
}

inline Prediction predict(const FitResult& fr, const MfData& data, const ModelConfig& cfg,
                          std::span<const SpaceTimePoint> targets,
                          std::span<const SpaceTimePoint> target_links = {}) {
  return predict(fr.params, data, cfg, targets, target_links);
}

}  // namespace mfgp
