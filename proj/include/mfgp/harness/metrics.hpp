#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "mfgp/error.hpp"
#include "mfgp/inference.hpp"

namespace mfgp::harness {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct MetricSet {
  double mae = kNaN;
  double rmse = kNaN;
  double corr = kNaN;
  double cov95 = kNaN;
  double nlml = kNaN;
};

/// Pearson correlation; NaN when either side has zero variance.
inline double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::ArrayXd x = a.array() - a.mean();
  const Eigen::ArrayXd y = b.array() - b.mean();
  const double den = std::sqrt((x * x).sum() * (y * y).sum());
  return den > 0.0 ? (x * y).sum() / den : kNaN;
}

/// Coverage is taken against the interval carried by the prediction.
inline MetricSet compute_metrics(const Eigen::VectorXd& observed, const Prediction& pred,
                                 double nlml = kNaN) {
  const Eigen::Index n = observed.size();
  if (n == 0 || pred.mean.size() != n) throw InvalidArgument("metrics: size mismatch or empty");
  const Eigen::ArrayXd e = pred.mean.array() - observed.array();
  MetricSet m;
  m.mae = e.abs().mean();
  m.rmse = std::sqrt(e.square().mean());
  m.corr = pearson(pred.mean, observed);
  long inside = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (observed(i) >= pred.lower(i) && observed(i) <= pred.upper(i)) ++inside;
  }
  m.cov95 = static_cast<double>(inside) / static_cast<double>(n);
  m.nlml = nlml;
  return m;
}

struct MeanSd {
  double mean = kNaN;
  double sd = kNaN;  // absent for fewer than two finite values
};

/// Sample mean and (n-1) standard deviation over finite entries.
inline MeanSd mean_sd(const std::vector<double>& v) {
  double s = 0.0;
  int n = 0;
  for (double x : v) {
    if (std::isfinite(x)) {
      s += x;
      ++n;
    }
  }
  MeanSd r;
  if (n == 0) return r;
  r.mean = s / n;
  if (n < 2) return r;
  double q = 0.0;
  for (double x : v) {
    if (std::isfinite(x)) q += (x - r.mean) * (x - r.mean);
  }
  r.sd = std::sqrt(q / (n - 1));
  return r;
}

}  // namespace mfgp::harness
