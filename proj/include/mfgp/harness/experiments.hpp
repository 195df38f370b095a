#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "mfgp/harness/config.hpp"
#include "mfgp/harness/csv.hpp"
#include "mfgp/harness/loso.hpp"
#include "mfgp/harness/metrics.hpp"
#include "mfgp/harness/pool.hpp"
#include "mfgp/simulate.hpp"
#include "mfgp/validation.hpp"

namespace mfgp::harness {

/// Simulator config of replication r: same settings, seed offset by r.
inline SimConfig replication_sim(const RunConfig& c, int r) {
  SimConfig s = c.sim;
  s.seed = c.seed + static_cast<std::uint64_t>(r);
  return s;
}

struct HeldOut {
  MfData train;
  std::vector<SpaceTimePoint> targets;
  Eigen::VectorXd y;
  std::vector<int> target_station;
};

inline HeldOut held_out_split(const SimDataset& ds) {
  HeldOut h{ds.training_data(), ds.points_of(ds.test_stations), ds.y_hf_of(ds.test_stations), {}};
  for (int s : ds.test_stations) {
    for (int k = 0; k < ds.n_time(); ++k) h.target_station.push_back(s);
  }
  return h;
}

/*
 * Summary of per-replication rows: one row per group key, mean and sd of each
 * value column. `key_cols` and `value_cols` index into `rows.header`.
 */
inline Table summarize(const Table& rows, const std::vector<std::size_t>& key_cols,
                       const std::vector<std::size_t>& value_cols) {
  Table out;
  for (auto k : key_cols) out.header.push_back(rows.header[k]);
  out.header.push_back("n");
  for (auto v : value_cols) {
    out.header.push_back(rows.header[v] + "_mean");
    out.header.push_back(rows.header[v] + "_sd");
  }
  std::vector<std::vector<std::string>> order;
  std::map<std::vector<std::string>, std::vector<std::vector<double>>> groups;
  for (const auto& r : rows.rows) {
    std::vector<std::string> key;
    for (auto k : key_cols) key.push_back(render(r[k]));
    auto [it, fresh] = groups.try_emplace(key, value_cols.size());
    if (fresh) order.push_back(key);
    for (std::size_t j = 0; j < value_cols.size(); ++j) {
      const auto& cell = r[value_cols[j]];
      double v = kNaN;
      if (const auto* d = std::get_if<double>(&cell)) v = *d;
      if (const auto* l = std::get_if<long>(&cell)) v = static_cast<double>(*l);
      it->second[j].push_back(v);
    }
  }
  for (const auto& key : order) {
    std::vector<Cell> row;
    for (std::size_t k = 0; k < key.size(); ++k) {
      const auto& orig = rows.rows.front()[key_cols[k]];
      if (std::holds_alternative<long>(orig)) {
        row.emplace_back(std::stol(key[k]));
      } else {
        row.emplace_back(key[k]);
      }
    }
    const auto& cols = groups.at(key);
    row.emplace_back(static_cast<long>(cols.front().size()));
    for (const auto& col : cols) {
      const MeanSd ms = mean_sd(col);
      row.emplace_back(ms.mean);
      row.emplace_back(ms.sd);
    }
    out.add(std::move(row));
  }
  return out;
}

struct Report {
  Table rows;
  Table summary;
};

/// Receives each replication's rows as soon as it finishes (completion order).
using RowSink = std::function<void(const std::vector<std::string>& header, const std::vector<std::vector<Cell>>& rows)>;

/// Runs body(r) -> rows of replication r in parallel and concatenates in replication order.
inline Table replicate(const RunConfig& c, std::vector<std::string> header,
                       const std::function<std::vector<std::vector<Cell>>(int)>& body, const RowSink& sink = {}) {
  std::vector<std::vector<std::vector<Cell>>> slots(static_cast<std::size_t>(c.replications));
  std::mutex mu;
  parallel_for(
      c.replications,
      [&](int r) {
        auto rows = body(r);
        if (sink) {
          const std::lock_guard lock(mu);
          sink(header, rows);
        }
        slots[static_cast<std::size_t>(r)] = std::move(rows);
      },
      c.threads);
  Table t{std::move(header), {}};
  for (auto& s : slots) {
    for (auto& row : s) t.add(std::move(row));
  }
  return t;
}

/*
 * Vecchia against exact inference over orderings x conditioning rules x m,
 * with hyperparameters held at the exact-model fit of each replication
 * (started from the generating values; validate_at_truth skips the fit).
 * RMSE is on held-out stations.
 */
inline Report run_validation(const RunConfig& c, const RowSink& sink = {}) {
  Table rows = replicate(
      c,
      {"replication", "seed", "ordering", "conditioning", "m", "rel_kinv_y", "rel_logdet", "rel_quadform",
       "diff_abs", "diff_rel", "rmse", "nnz_R"},
      [&](int r) {
        const SimConfig s = replication_sim(c, r);
        const HeldOut h = held_out_split(generate(s));
        MfHyperParams params = s.truth();
        if (!c.validate_at_truth) {
          ModelConfig exact = c.model;
          exact.backend = Backend::Dense;
          FitOptions fo;
          fo.optimizer = c.optimizer;
          fo.optimizer.seed = c.optimizer.seed + static_cast<std::uint64_t>(r);
          params = fit(h.train, exact, params, fo).params;
        }
        std::vector<std::vector<Cell>> out;
        for (auto ord : c.orderings) {
          for (auto cond : c.conditionings) {
            for (int m : c.m_grid) {
              ModelConfig mc = c.model;
              mc.backend = Backend::Vecchia;
              mc.vecchia.ordering = {ord, s.seed};
              mc.vecchia.conditioning = {cond, m};
              const auto v = validate(h.train, params, mc, h.targets, h.y);
              out.push_back({long(r), long(s.seed), to_string(ord), to_string(cond), long(m), v.rel_kinv_y,
                             v.rel_logdet, v.rel_quadform, v.diff_abs, v.diff_rel, v.rmse, v.nnz_R});
            }
          }
        }
        return out;
      },
      sink);
  Table summary = summarize(rows, {2, 3, 4}, {5, 6, 7, 8, 9, 10, 11});
  return {std::move(rows), std::move(summary)};
}

/// Models compared by the benchmark, in report order.
inline std::vector<Method> benchmark_methods(const RunConfig& c, const SimConfig& s, long n_obs, int r) {
  std::vector<Method> out;
  FitOptions fo;
  fo.optimizer = c.optimizer;
  fo.optimizer.seed = c.optimizer.seed + static_cast<std::uint64_t>(r);
  auto init = c.fit_from_truth ? std::function<MfHyperParams(const MfData&)>([s](const MfData&) { return s.truth(); })
                               : std::function<MfHyperParams(const MfData&)>(
                                     [c](const MfData& d) { return starting_params(c, d); });
  if (c.classic && n_obs <= c.model.dense_cap) {
    MfgpMethod m{"MFGP-Classic", c.model, fo, init};
    m.config.backend = Backend::Dense;
    out.emplace_back(m);
  }
  MfgpMethod v{"MFGP-Vecchia", c.model, fo, init};
  v.config.backend = Backend::Vecchia;
  out.emplace_back(v);
  BaselineOptions bo;
  bo.ard = c.baseline_ard;
  bo.size_cap = c.model.dense_cap;
  bo.optimizer = fo.optimizer;
  for (auto k : {BaselineKind::GP_L, BaselineKind::GP_3D, BaselineKind::GP_4D}) out.emplace_back(BaselineMethod{k, bo});
  return out;
}

struct BenchmarkReport {
  Table rows;
  Table summary;
  Table predictions;  // first replication, every model
};

/// Held-out-station comparison of MFGP (exact and Vecchia) with single-fidelity baselines.
inline BenchmarkReport run_benchmark(const RunConfig& c, const RowSink& sink = {}) {
  std::vector<std::vector<std::vector<Cell>>> pred_slots(static_cast<std::size_t>(c.replications));
  Table rows = replicate(
      c, {"replication", "seed", "model", "mae", "rmse", "corr", "cov95", "nlml"}, [&](int r) {
        const SimConfig s = replication_sim(c, r);
        const HeldOut h = held_out_split(generate(s));
        std::vector<std::vector<Cell>> out;
        for (const auto& m : benchmark_methods(c, s, h.train.n_obs(), r)) {
          const auto fp = fit_predict(m, h.train, h.targets);
          const MetricSet ms = compute_metrics(h.y, fp.prediction, fp.nlml);
          out.push_back({long(r), long(s.seed), label_of(m), ms.mae, ms.rmse, ms.corr, ms.cov95, ms.nlml});
          if (r == 0) {
            for (std::size_t k = 0; k < h.targets.size(); ++k) {
              const auto kk = static_cast<Eigen::Index>(k);
              pred_slots[0].push_back({label_of(m), long(h.target_station[k]), h.targets[k].t, h.y(kk),
                                       fp.prediction.mean(kk), fp.prediction.lower(kk), fp.prediction.upper(kk)});
            }
          }
        }
        return out;
      },
      sink);
  Table summary = summarize(rows, {2}, {3, 4, 5, 6, 7});
  Table preds{{"model", "station_id", "t", "observed", "predicted", "lower95", "upper95"}, {}};
  for (auto& row : pred_slots[0]) preds.add(std::move(row));
  return {std::move(rows), std::move(summary), std::move(preds)};
}

/// NLML error and sparsity per ordering and m, at the exact-fit hyperparameters (see run_validation).
inline Report run_orderings(const RunConfig& c, const RowSink& sink = {}) {
  Table rows = replicate(
      c,
      {"replication", "seed", "ordering", "conditioning", "m", "nlml_vecchia", "nlml_exact", "diff_abs",
       "diff_rel", "nnz_H", "density_H", "nnz_R"},
      [&](int r) {
        const SimConfig s = replication_sim(c, r);
        const HeldOut h = held_out_split(generate(s));
        MfHyperParams params = s.truth();
        if (!c.validate_at_truth) {
          ModelConfig exact = c.model;
          exact.backend = Backend::Dense;
          FitOptions fo;
          fo.optimizer = c.optimizer;
          fo.optimizer.seed = c.optimizer.seed + static_cast<std::uint64_t>(r);
          params = fit(h.train, exact, params, fo).params;
        }
        std::vector<std::vector<Cell>> out;
        for (auto ord : c.orderings) {
          for (auto cond : c.conditionings) {
            for (int m : c.m_grid) {
              ModelConfig mc = c.model;
              mc.backend = Backend::Vecchia;
              mc.vecchia.ordering = {ord, s.seed};
              mc.vecchia.conditioning = {cond, m};
              const auto v = validate(h.train, params, mc);
              out.push_back({long(r), long(s.seed), to_string(ord), to_string(cond), long(m), v.nlml_vecchia,
                             v.nlml_exact, v.diff_abs, v.diff_rel, v.nnz_H, v.density_H, v.nnz_R});
            }
          }
        }
        return out;
      },
      sink);
  Table summary = summarize(rows, {2, 3, 4}, {7, 8, 9, 10, 11});
  return {std::move(rows), std::move(summary)};
}

/// Sparsity of H per ordering on one dataset (no dense oracle involved).
inline Table run_sparsity(const RunConfig& c) {
  const SimConfig s = replication_sim(c, 0);
  const HeldOut h = held_out_split(generate(s));
  Table t{{"ordering", "conditioning", "m", "dim", "nnz_H", "density_H", "nnz_chol"}, {}};
  for (auto ord : c.orderings) {
    ModelConfig mc = c.model;
    mc.backend = Backend::Vecchia;
    mc.vecchia.ordering = {ord, s.seed};
    const auto sp = MfLikelihood(h.train, mc).system(s.truth()).sparsity();
    t.add({to_string(ord), to_string(mc.vecchia.conditioning.kind), long(mc.vecchia.conditioning.m), long(sp.dim),
           sp.nnz_H, sp.density_H, sp.nnz_chol});
  }
  return t;
}

/// Seconds per likelihood evaluation as the series length grows on a fixed station grid.
inline double seconds_per_evaluation(const MfLikelihood& lik, const MfHyperParams& p, double min_seconds = 0.3) {
  using clock = std::chrono::steady_clock;
  (void)lik(p);  // warm-up
  int reps = 0;
  const auto t0 = clock::now();
  double elapsed = 0.0;
  do {
    (void)lik(p);
    ++reps;
    elapsed = std::chrono::duration<double>(clock::now() - t0).count();
  } while (elapsed < min_seconds);
  return elapsed / reps;
}

inline Table run_timing(const RunConfig& c) {
  Table t{{"n_stations", "n_time", "n_obs", "m", "seconds_per_eval", "nnz_H", "nnz_chol"}, {}};
  for (int nt : c.n_time_grid) {
    SimConfig s = replication_sim(c, 0);
    s.n_time = nt;
    const MfData d = generate(s).training_data();
    ModelConfig mc = c.model;
    mc.backend = Backend::Vecchia;
    const MfLikelihood lik(d, mc);
    const auto sp = lik.system(s.truth()).sparsity();
    t.add({long(s.n_stations()), long(nt), long(d.n_obs()), long(mc.vecchia.conditioning.m),
           seconds_per_evaluation(lik, s.truth()), sp.nnz_H, sp.nnz_chol});
  }
  return t;
}

/// Error-vs-m curve: one row per (ordering, conditioning, m) from a summary table.
inline Table error_vs_m(const Table& summary, const std::vector<std::string>& metrics) {
  Table t{{"ordering", "conditioning", "m"}, {}};
  std::vector<std::size_t> idx;
  for (const auto& m : metrics) {
    t.header.push_back(m);
    const auto it = std::find(summary.header.begin(), summary.header.end(), m + "_mean");
    if (it == summary.header.end()) throw InvalidArgument("error_vs_m: no column " + m);
    idx.push_back(static_cast<std::size_t>(it - summary.header.begin()));
  }
  for (const auto& r : summary.rows) {
    std::vector<Cell> row{r[0], r[1], r[2]};
    for (auto i : idx) row.push_back(r[i]);
    t.add(std::move(row));
  }
  return t;
}

}  // namespace mfgp::harness
