#pragma once

#include <map>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "mfgp/densegp.hpp"
#include "mfgp/error.hpp"
#include "mfgp/inference.hpp"
#include "mfgp/model.hpp"

namespace mfgp {

/*
 * Single-fidelity reference models trained on HF rows only:
 *   GP_L   input y_L (LF value at the row's link)
 *   GP_3D  input (s1, s2, t)
 *   GP_4D  input (y_L, s1, s2, t)
 */
enum class BaselineKind { GP_L, GP_3D, GP_4D };

inline std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::GP_L: return "GP-L";
    case BaselineKind::GP_3D: return "GP-3D";
    case BaselineKind::GP_4D: return "GP-4D";
  }
  return "?";
}

inline int input_dimension(BaselineKind k) {
  return k == BaselineKind::GP_L ? 1 : k == BaselineKind::GP_3D ? 3 : 4;
}

struct BaselineOptions {
  bool ard = false;
  long size_cap = 5000;
  NelderMeadOptions optimizer{};
};

inline Eigen::MatrixXd baseline_inputs(BaselineKind k, std::span<const SpaceTimePoint> pts,
                                       const Eigen::VectorXd& lf_values) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  if (k != BaselineKind::GP_3D && lf_values.size() != n) {
    throw InvalidArgument("baseline: LF values required at every input point");
  }
  Eigen::MatrixXd x(n, input_dimension(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = pts[static_cast<std::size_t>(i)];
    switch (k) {
      case BaselineKind::GP_L: x(i, 0) = lf_values(i); break;
      case BaselineKind::GP_3D: x.row(i) << p.s1, p.s2, p.t; break;
      case BaselineKind::GP_4D: x.row(i) << lf_values(i), p.s1, p.s2, p.t; break;
    }
  }
  return x;
}

/// LF observations looked up at the given points; throws if one is missing.
inline Eigen::VectorXd lf_values_at(const MfData& data, std::span<const SpaceTimePoint> pts) {
  std::map<SpaceTimePoint, double> lookup;
  for (int r = 0; r < data.n_lf(); ++r) lookup.emplace(data.lf[static_cast<std::size_t>(r)], data.y_lf(r));
  Eigen::VectorXd out(static_cast<Eigen::Index>(pts.size()));
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const auto it = lookup.find(pts[k]);
    if (it == lookup.end()) throw InvalidArgument("no LF observation at a required point");
    out(static_cast<Eigen::Index>(k)) = it->second;
  }
  return out;
}

/// `target_links` default to the targets themselves.
inline Prediction baseline_fit_predict(BaselineKind kind, const MfData& data,
                                       std::span<const SpaceTimePoint> targets,
                                       std::span<const SpaceTimePoint> target_links = {},
                                       const BaselineOptions& opt = {}) {
  data.validate();
  if (data.n_hf() > opt.size_cap) throw DenseSizeExceeded(data.n_hf(), opt.size_cap);
  Eigen::VectorXd lf_train, lf_target;
  if (kind != BaselineKind::GP_3D) {
    std::vector<SpaceTimePoint> links;
    for (int h = 0; h < data.n_hf(); ++h) links.push_back(data.link(h));
    lf_train = lf_values_at(data, links);
    lf_target = lf_values_at(data, target_links.empty() ? targets : target_links);
  }
  DenseGpFitOptions fo;
  fo.ard = opt.ard;
  fo.size_cap = opt.size_cap;
  fo.optimizer = opt.optimizer;
  const DenseGp gp = fit_dense_gp(baseline_inputs(kind, data.hf, lf_train), data.y_hf, fo);
  const Eigen::MatrixXd xs = baseline_inputs(kind, targets, lf_target);
  return make_prediction(gp.predict_mean(xs), gp.predict_variance(xs, true));
}

}  // namespace mfgp
