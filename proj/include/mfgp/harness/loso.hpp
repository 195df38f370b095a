#pragma once

#include <functional>
#include <iostream>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "mfgp/baselines.hpp"
#include "mfgp/harness/metrics.hpp"
#include "mfgp/harness/pool.hpp"
#include "mfgp/inference.hpp"

namespace mfgp::harness {

/// Multi-fidelity model: configuration, fit options and a starting-point rule.
struct MfgpMethod {
  std::string label = "MFGP";
  ModelConfig config{};
  FitOptions fit{};
  std::function<MfHyperParams(const MfData&)> init = [](const MfData& d) { return initial_guess(d); };
};

struct BaselineMethod {
  BaselineKind kind = BaselineKind::GP_3D;
  BaselineOptions options{};
};

using Method = std::variant<MfgpMethod, BaselineMethod>;

inline std::string label_of(const Method& m) {
  if (const auto* f = std::get_if<MfgpMethod>(&m)) return f->label;
  return to_string(std::get<BaselineMethod>(m).kind);
}

struct FitPrediction {
  Prediction prediction;
  double nlml = kNaN;  // absent for baselines
};

inline FitPrediction fit_predict(const Method& method, const MfData& train,
                                 std::span<const SpaceTimePoint> targets,
                                 std::span<const SpaceTimePoint> target_links = {}) {
  if (const auto* f = std::get_if<MfgpMethod>(&method)) {
    const FitResult r = fit(train, f->config, f->init(train), f->fit);
    return {predict(r, train, f->config, targets, target_links), r.nlml};
  }
  const auto& b = std::get<BaselineMethod>(method);
  return {baseline_fit_predict(b.kind, train, targets, target_links, b.options), kNaN};
}

struct StationSeries {
  std::vector<double> t, observed, predicted, lower, upper;
};

struct LosoFold {
  int station = 0;
  bool ok = false;
  std::string message;
  MetricSet metrics;
  StationSeries series;
};

struct LosoResult {
  std::vector<LosoFold> folds;  // sorted by station id
  MetricSet aggregate;          // unweighted mean over successful folds
  int failed = 0;
};

/// Training data with every HF row of `station` removed; LF rows are all kept.
inline MfData without_station(const MfData& d, int station) {
  MfData out;
  out.lf = d.lf;
  out.y_lf = d.y_lf;
  std::vector<int> keep;
  for (int h = 0; h < d.n_hf(); ++h) {
    if (d.station_of(h) != station) keep.push_back(h);
  }
  out.y_hf.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const int h = keep[k];
    out.hf.push_back(d.hf[static_cast<std::size_t>(h)]);
    if (!d.hf_link.empty()) out.hf_link.push_back(d.hf_link[static_cast<std::size_t>(h)]);
    out.hf_station.push_back(d.hf_station[static_cast<std::size_t>(h)]);
    out.y_hf(static_cast<Eigen::Index>(k)) = d.y_hf(h);
  }
  return out;
}

/*
 * Throws if a row of `station` survived into `train` or if any other HF row
 * went missing. Rows are matched by station id, not by coordinates: two
 * stations may share a location.
 */
inline void check_no_leak(const MfData& full, const MfData& train, int station) {
  long held = 0;
  for (int h = 0; h < full.n_hf(); ++h) held += full.station_of(h) == station;
  for (int h = 0; h < train.n_hf(); ++h) {
    if (train.station_of(h) == station) throw std::logic_error("LOSO leak: held-out station in training set");
  }
  if (train.n_hf() != full.n_hf() - held || train.n_lf() != full.n_lf()) {
    throw std::logic_error("LOSO fold: training rows do not add up");
  }
}

struct LosoOptions {
  int threads = 0;
  /// Called with each fold's training data before fitting (instrumentation).
  std::function<void(int station, const MfData& train)> on_fold;
};

inline LosoResult loso_cv(const MfData& data, const Method& method, const LosoOptions& opt = {}) {
  data.validate();
  if (data.hf_station.empty()) throw InvalidArgument("loso: HF rows need station ids");
  const std::set<int> ids(data.hf_station.begin(), data.hf_station.end());
  if (ids.size() < 2) throw InvalidArgument("loso: at least two HF stations required");
  const std::vector<int> stations(ids.begin(), ids.end());

  LosoResult res;
  res.folds.resize(stations.size());
  parallel_for(
      static_cast<int>(stations.size()),
      [&](int i) {
        const int s = stations[static_cast<std::size_t>(i)];
        LosoFold& fold = res.folds[static_cast<std::size_t>(i)];
        fold.station = s;
        std::vector<SpaceTimePoint> targets, links;
        std::vector<double> obs;
        for (int h = 0; h < data.n_hf(); ++h) {
          if (data.station_of(h) != s) continue;
          targets.push_back(data.hf[static_cast<std::size_t>(h)]);
          links.push_back(data.link(h));
          obs.push_back(data.y_hf(h));
        }
        const MfData train = without_station(data, s);
        check_no_leak(data, train, s);
        if (opt.on_fold) opt.on_fold(s, train);
        try {
          const auto fp = fit_predict(method, train, targets, links);
          const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(obs.data(), static_cast<Eigen::Index>(obs.size()));
          fold.metrics = compute_metrics(y, fp.prediction, fp.nlml);
          for (std::size_t k = 0; k < targets.size(); ++k) {
            const auto kk = static_cast<Eigen::Index>(k);
            fold.series.t.push_back(targets[k].t);
            fold.series.observed.push_back(obs[k]);
            fold.series.predicted.push_back(fp.prediction.mean(kk));
            fold.series.lower.push_back(fp.prediction.lower(kk));
            fold.series.upper.push_back(fp.prediction.upper(kk));
          }
          fold.ok = true;
        } catch (const Error& e) {
          fold.message = e.what();
        }
      },
      opt.threads);

  std::vector<double> mae, rmse, corr, cov, nl;
  for (const auto& f : res.folds) {
    if (!f.ok) {
      ++res.failed;
      std::cerr << "warning: LOSO fold for station " << f.station << " failed: " << f.message << '\n';
      continue;
    }
    mae.push_back(f.metrics.mae);
    rmse.push_back(f.metrics.rmse);
    corr.push_back(f.metrics.corr);
    cov.push_back(f.metrics.cov95);
    nl.push_back(f.metrics.nlml);
  }
  res.aggregate = {mean_sd(mae).mean, mean_sd(rmse).mean, mean_sd(corr).mean, mean_sd(cov).mean, mean_sd(nl).mean};
  return res;
}

inline Table loso_table(const LosoResult& r, const std::string& model) {
  Table t{{"model", "station_id", "status", "mae", "rmse", "corr", "cov95", "nlml"}, {}};
  for (const auto& f : r.folds) {
    t.add({model, long(f.station), std::string(f.ok ? "ok" : "failed"), f.metrics.mae, f.metrics.rmse,
           f.metrics.corr, f.metrics.cov95, f.metrics.nlml});
  }
  const auto& a = r.aggregate;
  t.add({model, std::string("mean"), std::string(r.failed ? "partial" : "ok"), a.mae, a.rmse, a.corr, a.cov95,
         a.nlml});
  return t;
}

/// station_id,t,observed,predicted,lower95,upper95
inline Table station_series_table(const LosoResult& r) {
  Table t{{"station_id", "t", "observed", "predicted", "lower95", "upper95"}, {}};
  for (const auto& f : r.folds) {
    for (std::size_t k = 0; k < f.series.t.size(); ++k) {
      t.add({long(f.station), f.series.t[k], f.series.observed[k], f.series.predicted[k], f.series.lower[k],
             f.series.upper[k]});
    }
  }
  return t;
}

}  // namespace mfgp::harness
