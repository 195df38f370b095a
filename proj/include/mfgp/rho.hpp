#pragma once

#include <cmath>
#include <iostream>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "mfgp/densegp.hpp"
#include "mfgp/error.hpp"
#include "mfgp/kernels.hpp"

namespace mfgp {

struct ConstantRho {
  double value = 0.6;
};

/// intercept + slope_s1 * s1 + slope_s2 * s2
struct LinearRho {
  double intercept = 0.6;
  double slope_s1 = 0.0;
  double slope_s2 = 0.0;
};

/// LinearRho plus curv_s1 * s1^2 + curv_s2 * s2^2
struct QuadraticRho {
  double intercept = 0.6;
  double slope_s1 = 0.0;
  double slope_s2 = 0.0;
  double curv_s1 = 0.0;
  double curv_s2 = 0.0;
};

/// Per-station least-squares slope of HF on LF.
struct StationSlope {
  int station = 0;
  Location where;
  double slope = 0.0;
};

/// Aligned LF and HF series of one station.
struct MatchedSeries {
  int station = 0;
  Location where;
  std::vector<double> lf;
  std::vector<double> hf;
};

/*
 * Slope field smoothed by a spatial RBF GP regression on station slopes.
 * Data-driven and held fixed once fitted.
 */
class EmpiricalGpRho {
 public:
  EmpiricalGpRho() = default;
  EmpiricalGpRho(std::vector<StationSlope> slopes, DenseGp smoother)
      : slopes_(std::move(slopes)), gp_(std::make_shared<const DenseGp>(std::move(smoother))) {}

  bool fitted() const { return gp_ != nullptr; }
  const std::vector<StationSlope>& slopes() const { return slopes_; }
  const DenseGpParams& smoother_params() const {
    if (!gp_) throw UnfittedEmpiricalModel();
    return gp_->params();
  }

  Eigen::VectorXd evaluate(std::span<const Location> where) const {
    if (!gp_) throw UnfittedEmpiricalModel();
    Eigen::MatrixXd xs(static_cast<Eigen::Index>(where.size()), 2);
    for (std::size_t k = 0; k < where.size(); ++k) {
      xs(static_cast<Eigen::Index>(k), 0) = where[k].s1;
      xs(static_cast<Eigen::Index>(k), 1) = where[k].s2;
    }
    return gp_->predict_mean(xs);
  }

 private:
  std::vector<StationSlope> slopes_;
  std::shared_ptr<const DenseGp> gp_;
};

using RhoModel = std::variant<ConstantRho, LinearRho, QuadraticRho, EmpiricalGpRho>;

inline Eigen::VectorXd evaluate(const RhoModel& model, std::span<const Location> where) {
  const auto n = static_cast<Eigen::Index>(where.size());
  Eigen::VectorXd out(n);
  if (const auto* c = std::get_if<ConstantRho>(&model)) {
    out.setConstant(c->value);
  } else if (const auto* l = std::get_if<LinearRho>(&model)) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto& s = where[static_cast<std::size_t>(k)];
      out(k) = l->intercept + l->slope_s1 * s.s1 + l->slope_s2 * s.s2;
    }
  } else if (const auto* q = std::get_if<QuadraticRho>(&model)) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto& s = where[static_cast<std::size_t>(k)];
      out(k) = q->intercept + q->slope_s1 * s.s1 + q->slope_s2 * s.s2 + q->curv_s1 * s.s1 * s.s1 +
               q->curv_s2 * s.s2 * s.s2;
    }
  } else {
    out = std::get<EmpiricalGpRho>(model).evaluate(where);
  }
  return out;
}

/// Number of coefficients optimised jointly with the kernels.
inline int trainable_count(const RhoModel& model) {
  switch (model.index()) {
    case 0: return 1;
    case 1: return 3;
    case 2: return 5;
    default: return 0;
  }
}

inline Eigen::VectorXd trainable_values(const RhoModel& model) {
  if (const auto* c = std::get_if<ConstantRho>(&model)) return Eigen::VectorXd::Constant(1, c->value);
  if (const auto* l = std::get_if<LinearRho>(&model)) {
    return Eigen::Vector3d(l->intercept, l->slope_s1, l->slope_s2);
  }
  if (const auto* q = std::get_if<QuadraticRho>(&model)) {
    Eigen::VectorXd v(5);
    v << q->intercept, q->slope_s1, q->slope_s2, q->curv_s1, q->curv_s2;
    return v;
  }
  return Eigen::VectorXd(0);
}

inline RhoModel with_trainable_values(const RhoModel& model, const Eigen::VectorXd& v) {
  if (v.size() != trainable_count(model)) throw InvalidArgument("wrong number of rho coefficients");
  if (std::holds_alternative<ConstantRho>(model)) return ConstantRho{v(0)};
  if (std::holds_alternative<LinearRho>(model)) return LinearRho{v(0), v(1), v(2)};
  if (std::holds_alternative<QuadraticRho>(model)) return QuadraticRho{v(0), v(1), v(2), v(3), v(4)};
  return model;
}

inline void warn_if_extreme(const Eigen::VectorXd& rho, double limit = 10.0) {
  if (rho.size() > 0 && rho.cwiseAbs().maxCoeff() > limit) {
    std::cerr << "warning: |rho| exceeds " << limit << " at some HF location (max "
              << rho.cwiseAbs().maxCoeff() << ")\n";
  }
}

/// Sample cov(hf, lf) / sample var(lf), both with the n-1 convention.
inline double slope_of(const std::vector<double>& lf, const std::vector<double>& hf, int station) {
  if (lf.size() != hf.size()) throw InvalidArgument("slope: series lengths differ");
  if (lf.size() < 3) throw InvalidArgument("slope: station needs at least 3 common time points");
  const auto n = static_cast<double>(lf.size());
  double ml = 0.0, mh = 0.0;
  for (std::size_t k = 0; k < lf.size(); ++k) {
    ml += lf[k];
    mh += hf[k];
  }
  ml /= n;
  mh /= n;
  double sll = 0.0, slh = 0.0;
  for (std::size_t k = 0; k < lf.size(); ++k) {
    sll += (lf[k] - ml) * (lf[k] - ml);
    slh += (lf[k] - ml) * (hf[k] - mh);
  }
  const double var = sll / (n - 1.0);
  if (var < 1e-12) throw DegenerateVariance(station);
  return (slh / (n - 1.0)) / var;
}

inline std::vector<StationSlope> empirical_slopes(const std::vector<MatchedSeries>& series) {
  std::vector<StationSlope> out;
  out.reserve(series.size());
  for (const auto& s : series) out.push_back({s.station, s.where, slope_of(s.lf, s.hf, s.station)});
  return out;
}

struct SmootherOptions {
  bool fit_hyperparameters = true;
  DenseGpParams fixed{};  // used when fit_hyperparameters is false
  NelderMeadOptions optimizer{};
};

/*
 * Spatial GP regression of station slopes: constant mean equal to the sample
 * mean of the slopes, noise variance floored at 1e-6 times their sample variance.
 */
inline EmpiricalGpRho fit_empirical_gp(std::vector<StationSlope> slopes,
                                       const SmootherOptions& opt = {}) {
  if (slopes.size() < 2) throw InvalidArgument("empirical rho needs at least two stations");
  const auto n = static_cast<Eigen::Index>(slopes.size());
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& s = slopes[static_cast<std::size_t>(k)];
    x(k, 0) = s.where.s1;
    x(k, 1) = s.where.s2;
    y(k) = s.slope;
  }
  const double var = (y.array() - y.mean()).square().sum() / static_cast<double>(n - 1);
  const double floor = std::max(1e-6 * var, 1e-14);
  if (!opt.fit_hyperparameters) {
    return EmpiricalGpRho(std::move(slopes), DenseGp(x, y, opt.fixed, floor));
  }
  DenseGpFitOptions fo;
  fo.noise_floor = floor;
  fo.optimizer = opt.optimizer;
  fo.size_cap = 100000;
  return EmpiricalGpRho(std::move(slopes), fit_dense_gp(x, y, fo));
}

}  // namespace mfgp
