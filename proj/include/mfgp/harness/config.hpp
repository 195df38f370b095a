#pragma once

#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mfgp/baselines.hpp"
#include "mfgp/error.hpp"
#include "mfgp/harness/csv.hpp"
#include "mfgp/inference.hpp"
#include "mfgp/simulate.hpp"

namespace mfgp::harness {

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class RhoKind { Constant, Linear, Quadratic, Empirical };

/// Everything a CLI run needs; every field has a default and an INI key.
struct RunConfig {
  // [data]
  std::string lf_path, hf_path;
  std::string out_dir = ".";
  // [vecchia]
  ModelConfig model{};
  // [rho]
  RhoKind rho_kind = RhoKind::Constant;
  double rho_init = std::numeric_limits<double>::quiet_NaN();  // NaN: data-driven
  // [gls] lives in model.gls
  // [kernel] optional starting values; NaN means data-driven
  double amplitude_lf = kNaNInit(), length_space_lf = kNaNInit(), length_time_lf = kNaNInit();
  double amplitude_hf = kNaNInit(), length_space_hf = kNaNInit(), length_time_hf = kNaNInit();
  double noise_lf = kNaNInit(), noise_hf = kNaNInit();
  // [optimizer]
  NelderMeadOptions optimizer{};
  // [experiment]
  SimConfig sim{};
  int replications = 1;
  std::uint64_t seed = 1;
  std::vector<int> m_grid{10, 20, 30, 40, 60};
  std::vector<OrderingKind> orderings{OrderingKind::SpaceMajor};
  std::vector<ConditioningKind> conditionings{ConditioningKind::NearestNeighbor, ConditioningKind::Correlation};
  std::vector<int> n_time_grid{10, 20, 40};
  int threads = 0;  // 0: MFGP_THREADS or hardware
  bool baseline_ard = false;
  bool classic = true;  // run the dense MFGP in benchmarks when within the cap
  bool fit_from_truth = false;
  bool validate_at_truth = false;  // validation: skip the exact fit, use the generating parameters

  static constexpr double kNaNInit() { return std::numeric_limits<double>::quiet_NaN(); }
};

inline std::string to_string(OrderingKind k) {
  switch (k) {
    case OrderingKind::SpaceMajor: return "space_major";
    case OrderingKind::TimeMajor: return "time_major";
    case OrderingKind::TimeMajorRandSpace: return "time_major_rand_space";
    case OrderingKind::Random: return "random";
  }
  return "?";
}

inline std::string to_string(ConditioningKind k) {
  return k == ConditioningKind::NearestNeighbor ? "nn" : "corr";
}

inline std::string to_string(GlsKind k) {
  return k == GlsKind::None ? "none" : k == GlsKind::Global ? "global" : "adaptive";
}

inline std::string to_string(RhoKind k) {
  switch (k) {
    case RhoKind::Constant: return "constant";
    case RhoKind::Linear: return "linear";
    case RhoKind::Quadratic: return "quadratic";
    case RhoKind::Empirical: return "egp";
  }
  return "?";
}

inline OrderingKind parse_ordering(const std::string& s) {
  for (auto k : {OrderingKind::SpaceMajor, OrderingKind::TimeMajor, OrderingKind::TimeMajorRandSpace,
                 OrderingKind::Random}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown ordering '" + s + "'");
}

inline ConditioningKind parse_conditioning(const std::string& s) {
  if (s == "nn") return ConditioningKind::NearestNeighbor;
  if (s == "corr") return ConditioningKind::Correlation;
  throw ConfigError("unknown conditioning '" + s + "' (nn or corr)");
}

inline GlsKind parse_gls(const std::string& s) {
  for (auto k : {GlsKind::None, GlsKind::Global, GlsKind::Adaptive}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown gls mode '" + s + "'");
}

inline RhoKind parse_rho(const std::string& s) {
  for (auto k : {RhoKind::Constant, RhoKind::Linear, RhoKind::Quadratic, RhoKind::Empirical}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown rho model '" + s + "'");
}

namespace detail {

inline double to_double(const std::string& s) {
  if (s == "NA" || s == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw ConfigError("not a number: '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("not a number: '" + s + "'");
  }
}

inline long to_long(const std::string& s) {
  const double v = to_double(s);
  if (v != std::floor(v)) throw ConfigError("not an integer: '" + s + "'");
  return static_cast<long>(v);
}

inline bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("not a boolean: '" + s + "'");
}

template <class T, class F>
std::vector<T> to_list(const std::string& s, F parse) {
  std::vector<T> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse(item));
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& v, F show) {
  std::string out;
  for (const auto& x : v) out += (out.empty() ? "" : ",") + show(x);
  return out;
}

}  // namespace detail

struct ConfigKey {
  std::string section, key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline const std::vector<ConfigKey>& config_keys() {
  using namespace detail;
  auto num = [](double RunConfig::*f) {
    return std::pair{std::function<std::string(const RunConfig&)>([f](const RunConfig& c) { return fmt(c.*f); }),
                     std::function<void(RunConfig&, const std::string&)>(
                         [f](RunConfig& c, const std::string& s) { c.*f = to_double(s); })};
  };
  auto simnum = [](double SimConfig::*f) {
    return std::pair{
        std::function<std::string(const RunConfig&)>([f](const RunConfig& c) { return fmt(c.sim.*f); }),
        std::function<void(RunConfig&, const std::string&)>(
            [f](RunConfig& c, const std::string& s) { c.sim.*f = to_double(s); })};
  };
  auto simint = [](int SimConfig::*f) {
    return std::pair{
        std::function<std::string(const RunConfig&)>([f](const RunConfig& c) { return std::to_string(c.sim.*f); }),
        std::function<void(RunConfig&, const std::string&)>(
            [f](RunConfig& c, const std::string& s) { c.sim.*f = static_cast<int>(to_long(s)); })};
  };
  auto mk = [](std::string sec, std::string key, auto pr) {
    return ConfigKey{std::move(sec), std::move(key), pr.first, pr.second};
  };
  auto fn = [](std::string sec, std::string key, std::function<std::string(const RunConfig&)> g,
               std::function<void(RunConfig&, const std::string&)> s) {
    return ConfigKey{std::move(sec), std::move(key), std::move(g), std::move(s)};
  };

  static const std::vector<ConfigKey> keys = {
      fn("data", "lf", [](const RunConfig& c) { return c.lf_path; },
         [](RunConfig& c, const std::string& s) { c.lf_path = s; }),
      fn("data", "hf", [](const RunConfig& c) { return c.hf_path; },
         [](RunConfig& c, const std::string& s) { c.hf_path = s; }),
      fn("data", "out_dir", [](const RunConfig& c) { return c.out_dir; },
         [](RunConfig& c, const std::string& s) { c.out_dir = s; }),

      fn("vecchia", "ordering", [](const RunConfig& c) { return to_string(c.model.vecchia.ordering.kind); },
         [](RunConfig& c, const std::string& s) { c.model.vecchia.ordering.kind = parse_ordering(s); }),
      fn("vecchia", "ordering_seed", [](const RunConfig& c) { return std::to_string(c.model.vecchia.ordering.seed); },
         [](RunConfig& c, const std::string& s) { c.model.vecchia.ordering.seed = to_long(s); }),
      fn("vecchia", "conditioning",
         [](const RunConfig& c) { return to_string(c.model.vecchia.conditioning.kind); },
         [](RunConfig& c, const std::string& s) { c.model.vecchia.conditioning.kind = parse_conditioning(s); }),
      fn("vecchia", "m", [](const RunConfig& c) { return std::to_string(c.model.vecchia.conditioning.m); },
         [](RunConfig& c, const std::string& s) { c.model.vecchia.conditioning.m = static_cast<int>(to_long(s)); }),
      fn("vecchia", "freeze_neighbors",
         [](const RunConfig& c) { return std::string(c.model.vecchia.freeze_neighbors ? "true" : "false"); },
         [](RunConfig& c, const std::string& s) { c.model.vecchia.freeze_neighbors = to_bool(s); }),
      fn("vecchia", "jitter_relative", [](const RunConfig& c) { return fmt(c.model.vecchia.jitter_relative); },
         [](RunConfig& c, const std::string& s) { c.model.vecchia.jitter_relative = to_double(s); }),
      fn("vecchia", "backend",
         [](const RunConfig& c) { return std::string(c.model.backend == Backend::Dense ? "dense" : "vecchia"); },
         [](RunConfig& c, const std::string& s) {
           if (s != "dense" && s != "vecchia") throw ConfigError("backend must be dense or vecchia");
           c.model.backend = s == "dense" ? Backend::Dense : Backend::Vecchia;
         }),
      fn("vecchia", "dense_cap", [](const RunConfig& c) { return std::to_string(c.model.dense_cap); },
         [](RunConfig& c, const std::string& s) { c.model.dense_cap = to_long(s); }),

      fn("rho", "model", [](const RunConfig& c) { return to_string(c.rho_kind); },
         [](RunConfig& c, const std::string& s) { c.rho_kind = parse_rho(s); }),
      mk("rho", "initial", num(&RunConfig::rho_init)),

      fn("gls", "mode", [](const RunConfig& c) { return to_string(c.model.gls.kind); },
         [](RunConfig& c, const std::string& s) { c.model.gls.kind = parse_gls(s); }),
      fn("gls", "reml", [](const RunConfig& c) { return std::string(c.model.gls.reml ? "true" : "false"); },
         [](RunConfig& c, const std::string& s) { c.model.gls.reml = to_bool(s); }),

      mk("kernel", "amplitude_lf", num(&RunConfig::amplitude_lf)),
      mk("kernel", "length_space_lf", num(&RunConfig::length_space_lf)),
      mk("kernel", "length_time_lf", num(&RunConfig::length_time_lf)),
      mk("kernel", "amplitude_hf", num(&RunConfig::amplitude_hf)),
      mk("kernel", "length_space_hf", num(&RunConfig::length_space_hf)),
      mk("kernel", "length_time_hf", num(&RunConfig::length_time_hf)),
      mk("kernel", "noise_lf", num(&RunConfig::noise_lf)),
      mk("kernel", "noise_hf", num(&RunConfig::noise_hf)),

      fn("optimizer", "max_evals", [](const RunConfig& c) { return std::to_string(c.optimizer.max_evals); },
         [](RunConfig& c, const std::string& s) { c.optimizer.max_evals = static_cast<int>(to_long(s)); }),
      fn("optimizer", "restarts", [](const RunConfig& c) { return std::to_string(c.optimizer.restarts); },
         [](RunConfig& c, const std::string& s) { c.optimizer.restarts = static_cast<int>(to_long(s)); }),
      fn("optimizer", "ftol", [](const RunConfig& c) { return fmt(c.optimizer.ftol); },
         [](RunConfig& c, const std::string& s) { c.optimizer.ftol = to_double(s); }),
      fn("optimizer", "initial_step", [](const RunConfig& c) { return fmt(c.optimizer.initial_step); },
         [](RunConfig& c, const std::string& s) { c.optimizer.initial_step = to_double(s); }),
      fn("optimizer", "seed", [](const RunConfig& c) { return std::to_string(c.optimizer.seed); },
         [](RunConfig& c, const std::string& s) { c.optimizer.seed = to_long(s); }),

      fn("experiment", "replications", [](const RunConfig& c) { return std::to_string(c.replications); },
         [](RunConfig& c, const std::string& s) { c.replications = static_cast<int>(to_long(s)); }),
      fn("experiment", "seed", [](const RunConfig& c) { return std::to_string(c.seed); },
         [](RunConfig& c, const std::string& s) { c.seed = to_long(s); }),
      fn("experiment", "m_grid", [](const RunConfig& c) { return join(c.m_grid, [](int m) { return std::to_string(m); }); },
         [](RunConfig& c, const std::string& s) {
           c.m_grid = to_list<int>(s, [](const std::string& x) { return static_cast<int>(to_long(x)); });
         }),
      fn("experiment", "orderings",
         [](const RunConfig& c) { return join(c.orderings, [](OrderingKind k) { return to_string(k); }); },
         [](RunConfig& c, const std::string& s) { c.orderings = to_list<OrderingKind>(s, parse_ordering); }),
      fn("experiment", "conditionings",
         [](const RunConfig& c) { return join(c.conditionings, [](ConditioningKind k) { return to_string(k); }); },
         [](RunConfig& c, const std::string& s) {
           c.conditionings = to_list<ConditioningKind>(s, parse_conditioning);
         }),
      fn("experiment", "n_time_grid",
         [](const RunConfig& c) { return join(c.n_time_grid, [](int m) { return std::to_string(m); }); },
         [](RunConfig& c, const std::string& s) {
           c.n_time_grid = to_list<int>(s, [](const std::string& x) { return static_cast<int>(to_long(x)); });
         }),
      fn("experiment", "threads", [](const RunConfig& c) { return std::to_string(c.threads); },
         [](RunConfig& c, const std::string& s) { c.threads = static_cast<int>(to_long(s)); }),
      fn("experiment", "baseline_ard", [](const RunConfig& c) { return std::string(c.baseline_ard ? "true" : "false"); },
         [](RunConfig& c, const std::string& s) { c.baseline_ard = to_bool(s); }),
      fn("experiment", "classic", [](const RunConfig& c) { return std::string(c.classic ? "true" : "false"); },
         [](RunConfig& c, const std::string& s) { c.classic = to_bool(s); }),
      fn("experiment", "validate_at_truth",
         [](const RunConfig& c) { return std::string(c.validate_at_truth ? "true" : "false"); },
         [](RunConfig& c, const std::string& s) { c.validate_at_truth = to_bool(s); }),
      fn("experiment", "fit_from_truth",
         [](const RunConfig& c) { return std::string(c.fit_from_truth ? "true" : "false"); },
         [](RunConfig& c, const std::string& s) { c.fit_from_truth = to_bool(s); }),
      mk("experiment", "n_space", simint(&SimConfig::n_space)),
      mk("experiment", "n_space2", simint(&SimConfig::n_space2)),
      mk("experiment", "n_time", simint(&SimConfig::n_time)),
      mk("experiment", "n_train_stations", simint(&SimConfig::n_train_stations)),
      mk("experiment", "rho_true", simnum(&SimConfig::rho)),
      mk("experiment", "corr_space_lf", simnum(&SimConfig::corr_space_lf)),
      mk("experiment", "corr_space_hf", simnum(&SimConfig::corr_space_hf)),
      mk("experiment", "corr_time", simnum(&SimConfig::corr_time)),
      mk("experiment", "var_lf", simnum(&SimConfig::var_lf)),
      mk("experiment", "var_hf", simnum(&SimConfig::var_hf)),
      mk("experiment", "noise_var_lf", simnum(&SimConfig::noise_lf)),
      mk("experiment", "noise_var_hf", simnum(&SimConfig::noise_hf)),
      mk("experiment", "jitter", simnum(&SimConfig::jitter)),
      mk("experiment", "train_fraction", simnum(&SimConfig::train_fraction)),
  };
  return keys;
}

/// Sets one `section.key` value.
inline void set_option(RunConfig& c, const std::string& dotted, const std::string& value) {
  const auto dot = dotted.find('.');
  if (dot == std::string::npos) throw ConfigError("option must look like section.key: '" + dotted + "'");
  const std::string sec = dotted.substr(0, dot), key = dotted.substr(dot + 1);
  for (const auto& k : config_keys()) {
    if (k.section == sec && k.key == key) {
      try {
        k.set(c, value);
      } catch (const ConfigError& e) {
        throw ConfigError("[" + sec + "] " + key + ": " + e.what());
      }
      return;
    }
  }
  throw ConfigError("unknown configuration key [" + sec + "] " + key);
}

inline void validate(const RunConfig& c) {
  if (c.replications < 1) throw ConfigError("[experiment] replications must be at least 1");
  if (c.model.vecchia.conditioning.m < 1) throw ConfigError("[vecchia] m must be at least 1");
  for (int m : c.m_grid) {
    if (m < 1) throw ConfigError("[experiment] m_grid entries must be positive");
  }
  if (c.optimizer.max_evals < 1 || c.optimizer.restarts < 1) throw ConfigError("[optimizer] budget must be positive");
  try {
    c.sim.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("[experiment] ") + e.what());
  }
}

/// Reads a flat-sectioned INI file on top of `base`; unknown keys are errors.
inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::read_ini(path, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  for (const auto& [sec, body] : pt) {
    if (body.empty()) throw ConfigError("key '" + sec + "' outside any section");
    for (const auto& [key, val] : body) set_option(base, sec + "." + key, trim(val.data()));
  }
  validate(base);
  return base;
}

inline std::string resolved_ini(const RunConfig& c) {
  boost::property_tree::ptree pt;
  for (const auto& k : config_keys()) pt.put(boost::property_tree::ptree::path_type(k.section + "." + k.key, '.'), k.get(c));
  std::ostringstream os;
  boost::property_tree::write_ini(os, pt);
  return os.str();
}

/// Starting hyperparameters: data-driven guesses overridden by configured values.
inline MfHyperParams starting_params(const RunConfig& c, const MfData& data) {
  RhoModel kind = ConstantRho{};
  switch (c.rho_kind) {
    case RhoKind::Constant: kind = ConstantRho{}; break;
    case RhoKind::Linear: kind = LinearRho{}; break;
    case RhoKind::Quadratic: kind = QuadraticRho{}; break;
    case RhoKind::Empirical: kind = EmpiricalGpRho{}; break;
  }
  MfHyperParams p = initial_guess(data, kind);
  auto over = [](double& dst, double v) {
    if (std::isfinite(v)) dst = v;
  };
  over(p.kernel_lf.amplitude, c.amplitude_lf);
  over(p.kernel_lf.length_space, c.length_space_lf);
  over(p.kernel_lf.length_time, c.length_time_lf);
  over(p.kernel_hf.amplitude, c.amplitude_hf);
  over(p.kernel_hf.length_space, c.length_space_hf);
  over(p.kernel_hf.length_time, c.length_time_hf);
  over(p.noise.lf, c.noise_lf);
  over(p.noise.hf, c.noise_hf);
  if (std::isfinite(c.rho_init)) {
    if (auto* r = std::get_if<ConstantRho>(&p.rho)) r->value = c.rho_init;
    if (auto* r = std::get_if<LinearRho>(&p.rho)) r->intercept = c.rho_init;
    if (auto* r = std::get_if<QuadraticRho>(&p.rho)) r->intercept = c.rho_init;
  }
  return p;
}

}  // namespace mfgp::harness
