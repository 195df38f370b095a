// mfgp: command-line front end for fitting, cross-validation and the replicated experiments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mfgp/harness/harness.hpp"
#include "mfgp/mfgp.hpp"

using namespace mfgp;
using namespace mfgp::harness;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum Exit { kOk = 0, kConfig = 1, kNumerical = 2, kPartial = 3 };

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  int threads = -1;
};

RunConfig resolve(const Common& o) {
  RunConfig c;
  if (!o.config_path.empty()) {
    if (!fs::exists(o.config_path)) throw ConfigError("config file not found: " + o.config_path);
    c = load_config(o.config_path);
  }
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + kv + "'");
    set_option(c, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (!o.out_dir.empty()) c.out_dir = o.out_dir;
  if (o.threads >= 0) c.threads = o.threads;
  validate(c);
  fs::create_directories(c.out_dir);
  std::ofstream(fs::path(c.out_dir) / "resolved_config.ini") << resolved_ini(c);
  return c;
}

std::string out(const RunConfig& c, const std::string& name) { return (fs::path(c.out_dir) / name).string(); }

void write(const RunConfig& c, const std::string& name, const Table& t) {
  t.write(out(c, name));
  std::cerr << "wrote " << out(c, name) << '\n';
}

/// Appends finished replications to `<name>.partial`; removed once the full report exists.
RowSink partial_sink(const RunConfig& c, const std::string& name) {
  const std::string path = out(c, name + ".partial");
  std::ofstream(path, std::ios::trunc);
  auto fresh = std::make_shared<bool>(true);
  return [path, fresh](const std::vector<std::string>& header, const std::vector<std::vector<Cell>>& rows) {
    Table t{header, rows};
    std::string s = t.str();
    if (!*fresh) s.erase(0, s.find('\n') + 1);
    *fresh = false;
    std::ofstream(path, std::ios::app) << s;
  };
}

void finish_partial(const RunConfig& c, const std::string& name) { fs::remove(out(c, name + ".partial")); }

RealDataset load_real(const RunConfig& c) {
  if (c.lf_path.empty() || c.hf_path.empty()) throw ConfigError("[data] lf and hf paths are required");
  for (const auto& p : {c.lf_path, c.hf_path}) {
    if (!fs::exists(p)) throw ConfigError("data file not found: " + p);
  }
  RealDataset ds = ingest(c.lf_path, c.hf_path);
  const auto& r = ds.report;
  std::cerr << "ingested " << ds.lf.size() << " LF rows, " << ds.hf.size() << " HF rows from " << ds.matches.size()
            << " stations";
  if (r.duplicate_lf || r.duplicate_hf) {
    std::cerr << "; dropped duplicates LF " << r.duplicate_lf << ", HF " << r.duplicate_hf;
  }
  if (r.hf_without_lf) std::cerr << "; " << r.hf_without_lf << " HF rows without an LF value at their cell";
  std::cerr << '\n';
  write(c, "station_matching.csv", matching_table(ds));
  return ds;
}

json params_json(const MfHyperParams& p) {
  json j = json::object();
  const auto names = parameter_names(p);
  const Eigen::VectorXd x = pack(p);
  for (std::size_t k = 0; k < names.size(); ++k) {
    const double v = k < 8 ? std::exp(x(long(k))) : x(long(k));
    j[names[k]] = v;
  }
  return j;
}

MfHyperParams params_from_json(const json& j, MfHyperParams like) {
  const auto names = parameter_names(like);
  Eigen::VectorXd x = pack(like);
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (!j.contains(names[k])) continue;
    const double v = j.at(names[k]).get<double>();
    if (k < 8 && !(v > 0.0)) throw ConfigError("parameter " + names[k] + " must be positive");
    x(long(k)) = k < 8 ? std::log(v) : v;
  }
  const auto p = unpack(x, like);
  if (!p) throw ConfigError("parameters out of range");
  return *p;
}

FitOptions fit_options(const RunConfig& c) { return {c.optimizer, {}}; }

int cmd_simulate(const RunConfig& c) {
  SimConfig s = c.sim;
  s.seed = c.seed;
  const SimDataset ds = generate(s);
  Table lf{{"s1", "s2", "t", "y_L"}, {}};
  Table hf{{"station_id", "s1", "s2", "t", "y_H"}, {}};
  for (std::size_t r = 0; r < ds.points.size(); ++r) {
    const auto& p = ds.points[r];
    const long st = long(r) / ds.n_time();
    lf.add({p.s1, p.s2, p.t, ds.y_lf(long(r))});
    hf.add({st, p.s1, p.s2, p.t, ds.y_hf(long(r))});
  }
  Table split{{"station_id", "s1", "s2", "role"}, {}};
  for (const auto& st : ds.stations) {
    const bool train = std::find(ds.train_stations.begin(), ds.train_stations.end(), st.id) != ds.train_stations.end();
    split.add({long(st.id), st.where.s1, st.where.s2, std::string(train ? "train" : "test")});
  }
  auto subset = [&](const std::vector<int>& ids) {
    Table t{hf.header, {}};
    for (int id : ids) {
      for (int k = 0; k < ds.n_time(); ++k) t.add(hf.rows[static_cast<std::size_t>(ds.row(id, k))]);
    }
    return t;
  };
  write(c, "lf.csv", lf);
  write(c, "hf.csv", hf);
  write(c, "hf_train.csv", subset(ds.train_stations));
  write(c, "hf_test.csv", subset(ds.test_stations));
  write(c, "stations.csv", split);
  json truth = params_json(s.truth());
  std::ofstream(out(c, "truth.json")) << truth.dump(2) << '\n';
  return kOk;
}

int cmd_fit(const RunConfig& c) {
  const MfData d = load_real(c).to_mfdata();
  const FitResult r = fit(d, c.model, starting_params(c, d), fit_options(c));
  json j;
  j["nlml"] = r.nlml;
  j["converged"] = r.converged;
  j["evaluations"] = r.evaluations;
  j["parameters"] = params_json(r.params);
  if (r.gls) {
    j["gls_beta"] = std::vector<double>(r.gls->beta.data(), r.gls->beta.data() + r.gls->beta.size());
  }
  const MfHyperParams prepared{r.params.kernel_lf, r.params.kernel_hf, r.params.noise, prepare_rho(d, r.params.rho)};
  json rho_at = json::array();
  std::vector<Location> where;
  std::vector<int> ids;
  for (const auto& s : d.matched_series()) {
    where.push_back(s.where);
    ids.push_back(s.station);
  }
  const Eigen::VectorXd rv = evaluate(prepared.rho, where);
  for (std::size_t k = 0; k < where.size(); ++k) {
    rho_at.push_back({{"station_id", ids[k]}, {"s1", where[k].s1}, {"s2", where[k].s2}, {"rho", rv(long(k))}});
  }
  j["rho_at_stations"] = rho_at;
  std::ofstream(out(c, "fit.json")) << j.dump(2) << '\n';
  std::cout << j.dump(2) << '\n';
  return kOk;
}

/// Targets `s1,s2,t`; each reads the LF process at the nearest LF location.
int cmd_predict(const RunConfig& c, const std::string& targets_path, const std::string& params_path) {
  const RealDataset ds = load_real(c);
  const MfData d = ds.to_mfdata();
  if (!fs::exists(targets_path)) throw ConfigError("targets file not found: " + targets_path);
  const CsvContent tc = read_csv(targets_path);
  if (tc.header != std::vector<std::string>{"s1", "s2", "t"}) throw SchemaError(targets_path + ": header must be 's1,s2,t'");
  std::set<Location> cells;
  for (const auto& r : ds.lf) cells.insert({r.s1, r.s2});
  std::vector<SpaceTimePoint> targets, links;
  for (std::size_t k = 0; k < tc.rows.size(); ++k) {
    const auto& r = tc.rows[k];
    double v[3];
    for (int i = 0; i < 3; ++i) {
      std::size_t pos = 0;
      try {
        if (r.size() != 3) throw std::invalid_argument("width");
        v[i] = std::stod(r[i], &pos);
        if (pos != r[i].size() || !std::isfinite(v[i])) throw std::invalid_argument("tail");
      } catch (const std::logic_error&) {
        throw NonFiniteValue(targets_path, long(k) + 1, tc.header[i]);
      }
    }
    Location best = *cells.begin();
    double dist = std::numeric_limits<double>::infinity();
    for (const auto& cl : cells) {
      const double dd = std::hypot(cl.s1 - v[0], cl.s2 - v[1]);
      if (dd < dist) {
        dist = dd;
        best = cl;
      }
    }
    targets.push_back({v[0], v[1], v[2]});
    links.push_back({best.s1, best.s2, v[2]});
  }
  FitResult r;
  if (!params_path.empty()) {
    std::ifstream f(params_path);
    if (!f) throw ConfigError("parameter file not found: " + params_path);
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ConfigError(params_path + ": invalid JSON");
    if (j.contains("parameters")) j = j["parameters"];
    r.params = params_from_json(j, starting_params(c, d));
  } else {
    r = fit(d, c.model, starting_params(c, d), fit_options(c));
  }
  const Prediction p = predict(r, d, c.model, targets, links);
  Table t{{"s1", "s2", "t", "predicted", "variance", "lower95", "upper95"}, {}};
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const long kk = long(k);
    t.add({targets[k].s1, targets[k].s2, targets[k].t, p.mean(kk), p.variance(kk), p.lower(kk), p.upper(kk)});
  }
  write(c, "predictions.csv", t);
  return kOk;
}

std::vector<Method> loso_methods(const RunConfig& c, const std::string& which) {
  std::vector<Method> all;
  MfgpMethod m{"MFGP", c.model, fit_options(c), [c](const MfData& d) { return starting_params(c, d); }};
  BaselineOptions bo{c.baseline_ard, c.model.dense_cap, c.optimizer};
  if (which == "mfgp" || which == "all") all.emplace_back(m);
  for (auto k : {BaselineKind::GP_L, BaselineKind::GP_3D, BaselineKind::GP_4D}) {
    std::string name = to_string(k);
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (which == name || which == "all" || which == "baselines") all.emplace_back(BaselineMethod{k, bo});
  }
  if (all.empty()) throw ConfigError("unknown model '" + which + "' (mfgp, gp-l, gp-3d, gp-4d, baselines, all)");
  return all;
}

int cmd_loso(const RunConfig& c, const std::string& which, bool simulated) {
  MfData d;
  if (simulated) {
    SimConfig s = c.sim;
    s.seed = c.seed;
    d = generate(s).training_data();
  } else {
    d = load_real(c).to_mfdata();
  }
  Table report{{"model", "station_id", "status", "mae", "rmse", "corr", "cov95", "nlml"}, {}};
  Table series{{"model", "station_id", "t", "observed", "predicted", "lower95", "upper95"}, {}};
  int failed = 0;
  for (const auto& m : loso_methods(c, which)) {
    const std::string label = label_of(m);
    std::cerr << "LOSO " << label << '\n';
    const LosoResult r = loso_cv(d, m, {c.threads, {}});
    failed += r.failed;
    for (auto& row : loso_table(r, label).rows) report.add(std::move(row));
    for (auto& row : station_series_table(r).rows) {
      row.insert(row.begin(), label);
      series.add(std::move(row));
    }
  }
  write(c, "report_loso.csv", report);
  write(c, "plot_station_series.csv", series);
  std::cout << report.str();
  return failed ? kPartial : kOk;
}

int cmd_validate(const RunConfig& c) {
  const Report r = run_validation(c, partial_sink(c, "report_validation.csv"));
  write(c, "report_validation.csv", r.rows);
  finish_partial(c, "report_validation.csv");
  write(c, "report_validation_summary.csv", r.summary);
  write(c, "plot_error_vs_m.csv", error_vs_m(r.summary, {"rel_kinv_y", "rel_logdet", "rel_quadform", "diff_rel"}));
  std::cout << r.summary.str();
  return kOk;
}

int cmd_benchmark(const RunConfig& c) {
  const BenchmarkReport r = run_benchmark(c, partial_sink(c, "report_benchmark.csv"));
  write(c, "report_benchmark.csv", r.rows);
  finish_partial(c, "report_benchmark.csv");
  write(c, "report_benchmark_summary.csv", r.summary);
  write(c, "plot_benchmark_predictions.csv", r.predictions);
  std::cout << r.summary.str();
  return kOk;
}

int cmd_orderings(const RunConfig& c) {
  const Report r = run_orderings(c, partial_sink(c, "report_orderings.csv"));
  write(c, "report_orderings.csv", r.rows);
  finish_partial(c, "report_orderings.csv");
  write(c, "report_orderings_summary.csv", r.summary);
  write(c, "report_sparsity.csv", run_sparsity(c));
  write(c, "plot_orderings_error_vs_m.csv", error_vs_m(r.summary, {"diff_abs", "diff_rel", "nnz_H"}));
  std::cout << r.summary.str();
  return kOk;
}

int cmd_timing(const RunConfig& c) {
  const Table t = run_timing(c);
  write(c, "report_timing.csv", t);
  std::cout << t.str();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-fidelity spatio-temporal Gaussian process regression"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* s) {
    s->add_option("-c,--config", common.config_path, "INI configuration file");
    s->add_option("-s,--set", common.sets, "Override one key: section.key=value (repeatable)");
    s->add_option("-o,--out", common.out_dir, "Output directory (overrides [data] out_dir)");
    s->add_option("-j,--threads", common.threads, "Worker threads (0: MFGP_THREADS or all cores)");
  };
  std::string targets, params, model = "mfgp";
  bool simulated = false;

  auto* sim = app.add_subcommand("simulate", "Write a simulated LF/HF dataset in the ingest schema");
  auto* fitc = app.add_subcommand("fit", "Fit the multi-fidelity model to [data] and write fit.json");
  auto* pred = app.add_subcommand("predict", "Predict the HF process at target points");
  pred->add_option("--targets", targets, "CSV with header s1,s2,t")->required();
  pred->add_option("--params", params, "fit.json to reuse instead of refitting");
  auto* loso = app.add_subcommand("loso", "Leave-one-station-out cross-validation");
  loso->add_option("--model", model, "mfgp, gp-l, gp-3d, gp-4d, baselines or all");
  loso->add_flag("--simulated", simulated, "Use the simulator's training stations instead of [data]");
  auto* val = app.add_subcommand("validate", "Replicated Vecchia-vs-exact validation at fixed hyperparameters");
  auto* bench = app.add_subcommand("benchmark", "Replicated held-out comparison with single-fidelity baselines");
  auto* ord = app.add_subcommand("orderings", "Likelihood error and sparsity per ordering and m");
  auto* tim = app.add_subcommand("timing", "Seconds per likelihood evaluation as the series grows");
  for (auto* s : {sim, fitc, pred, loso, val, bench, ord, tim}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    const RunConfig c = resolve(common);
    if (sim->parsed()) return cmd_simulate(c);
    if (fitc->parsed()) return cmd_fit(c);
    if (pred->parsed()) return cmd_predict(c, targets, params);
    if (loso->parsed()) return cmd_loso(c, model, simulated);
    if (val->parsed()) return cmd_validate(c);
    if (bench->parsed()) return cmd_benchmark(c);
    if (ord->parsed()) return cmd_orderings(c);
    if (tim->parsed()) return cmd_timing(c);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const SchemaError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kConfig;
  } catch (const EmptyFidelity& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kConfig;
  } catch (const NonFiniteValue& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kConfig;
  } catch (const DenseSizeExceeded& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  }
  return kConfig;
}
