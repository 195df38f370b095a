#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mfgp/error.hpp"
#include "mfgp/kernels.hpp"
#include "mfgp/model.hpp"

namespace mfgp {

/// Length scale giving correlation c at distance d under exp(-0.5 (d/l)^2).
inline double lengthscale_from_corr(double c, double d) {
  if (!(c > 0.0 && c < 1.0)) throw InvalidArgument("target correlation must lie in (0, 1)");
  if (!(d > 0.0)) throw InvalidArgument("distance must be positive");
  return d / std::sqrt(-2.0 * std::log(c));
}

/*
 * Grid simulator. Stations sit at integer coordinates 1..n_space (by
 * 1..n_space2 if set), times are equispaced on [0, 1]. Each component's
 * spatial and temporal kernels both carry the signal variance, so the
 * space-time covariance at zero lag is variance^2.
 */
struct SimConfig {
  int n_space = 6;
  int n_space2 = 0;  // 0: square grid
  int n_time = 10;
  double rho = 0.6;
  double corr_space_lf = 0.72;
  double corr_space_hf = 0.72;
  double corr_time = 0.8;
  double var_lf = 1.0;
  double var_hf = 2.0;
  double noise_lf = 0.1;
  double noise_hf = 0.1;
  double jitter = 1e-6;
  double train_fraction = 0.3;
  int n_train_stations = 0;  // overrides train_fraction when > 0
  std::uint64_t seed = 1;

  int side2() const { return n_space2 > 0 ? n_space2 : n_space; }
  int n_stations() const { return n_space * side2(); }

  void validate() const {
    if (n_space < 2 || side2() < 1 || n_time < 2) throw InvalidArgument("grid too small");
    for (double c : {corr_space_lf, corr_space_hf, corr_time}) {
      if (!(c > 0.0 && c < 1.0)) throw InvalidArgument("target correlations must lie in (0, 1)");
    }
    if (!(var_lf > 0.0) || !(var_hf > 0.0) || !(noise_lf >= 0.0) || !(noise_hf >= 0.0) ||
        !(jitter >= 0.0)) {
      throw InvalidArgument("variances must be positive");
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
      throw InvalidArgument("train_fraction must lie in (0, 1)");
    }
  }

  /// Kernel parameters of the LF process in the library's parameterisation.
  KernelParams lf_kernel() const {
    return {var_lf * var_lf, lengthscale_from_corr(corr_space_lf, 1.0),
            lengthscale_from_corr(corr_time, 1.0 / (n_time - 1))};
  }
  KernelParams hf_kernel() const {
    return {var_hf * var_hf, lengthscale_from_corr(corr_space_hf, 1.0),
            lengthscale_from_corr(corr_time, 1.0 / (n_time - 1))};
  }
  /// Generating parameters; the latent jitter is folded into the nuggets.
  MfHyperParams truth() const {
    MfHyperParams p;
    p.kernel_lf = lf_kernel();
    p.kernel_hf = hf_kernel();
    p.noise = {noise_lf + jitter, rho * rho * (noise_lf + jitter) + noise_hf + jitter};
    p.rho = ConstantRho{rho};
    return p;
  }
};

struct Station {
  int id = 0;
  Location where;
};

struct SimDataset {
  SimConfig config;
  std::vector<Station> stations;
  std::vector<SpaceTimePoint> points;  // station-major, time fastest
  Eigen::VectorXd y_lf, y_hf;
  Eigen::VectorXd latent_lf, latent_hf;  // d_L and d_delta before noise
  std::vector<int> train_stations, test_stations;

  int n_time() const { return config.n_time; }
  int row(int station, int k) const { return station * config.n_time + k; }

  std::vector<int> rows_of(const std::vector<int>& ids) const {
    std::vector<int> out;
    for (int s : ids) {
      for (int k = 0; k < n_time(); ++k) out.push_back(row(s, k));
    }
    return out;
  }

  /// All LF rows plus the HF rows of `hf_ids` (default: training stations).
  MfData training_data(const std::vector<int>* hf_ids = nullptr) const {
    const auto& ids = hf_ids ? *hf_ids : train_stations;
    MfData d;
    d.lf = points;
    d.y_lf = y_lf;
    const auto rows = rows_of(ids);
    d.y_hf.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      d.hf.push_back(points[static_cast<std::size_t>(rows[k])]);
      d.y_hf(static_cast<Eigen::Index>(k)) = y_hf(rows[k]);
      d.hf_station.push_back(rows[k] / n_time());
    }
    return d;
  }

  std::vector<SpaceTimePoint> points_of(const std::vector<int>& ids) const {
    std::vector<SpaceTimePoint> out;
    for (int r : rows_of(ids)) out.push_back(points[static_cast<std::size_t>(r)]);
    return out;
  }

  Eigen::VectorXd y_hf_of(const std::vector<int>& ids) const {
    const auto rows = rows_of(ids);
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) out(static_cast<Eigen::Index>(k)) = y_hf(rows[k]);
    return out;
  }
};

enum SimStream : std::uint64_t { kStreamLatentLf = 1, kStreamNoiseLf, kStreamLatentHf, kStreamNoiseHf, kStreamSplit };

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

/// round-half-up(fraction * n) training stations unless overridden; at least one of each.
inline std::pair<std::vector<int>, std::vector<int>> split_stations(int n_stations, double fraction,
                                                                    std::uint64_t seed,
                                                                    int n_train_override = 0) {
  if (n_stations < 2) throw InvalidArgument("need at least two stations to split");
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidArgument("fraction must lie in (0, 1)");
  int n_train = n_train_override > 0 ? n_train_override
                                     : static_cast<int>(std::floor(fraction * n_stations + 0.5));
  n_train = std::clamp(n_train, 1, n_stations - 1);
  std::vector<int> ids(static_cast<std::size_t>(n_stations));
  std::iota(ids.begin(), ids.end(), 0);
  auto rng = make_stream(seed, kStreamSplit);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<int> train(ids.begin(), ids.begin() + n_train);
  std::vector<int> test(ids.begin() + n_train, ids.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

namespace detail {

// Draw from N(0, Ks (x) Kt + eta I) with time fastest, via the eigenpairs of both factors.
inline Eigen::VectorXd sample_separable(const Eigen::MatrixXd& ks, const Eigen::MatrixXd& kt,
                                        double eta, std::mt19937_64& rng) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ks), et(kt);
  const Eigen::Index ns = ks.rows(), nt = kt.rows();
  std::normal_distribution<double> normal;
  Eigen::MatrixXd w(nt, ns);
  for (Eigen::Index j = 0; j < ns; ++j) {
    for (Eigen::Index k = 0; k < nt; ++k) {
      const double lam = es.eigenvalues()(j) * et.eigenvalues()(k) + eta;
      if (lam < -1e-10 * (es.eigenvalues().maxCoeff() * et.eigenvalues().maxCoeff() + eta)) {
        throw CholeskyFailure("simulator covariance is not positive semi-definite");
      }
      w(k, j) = std::sqrt(std::max(lam, 0.0)) * normal(rng);
    }
  }
  const Eigen::MatrixXd d = et.eigenvectors() * w * es.eigenvectors().transpose();
  return Eigen::Map<const Eigen::VectorXd>(d.data(), d.size());
}

inline Eigen::VectorXd white_noise(Eigen::Index n, double var, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(var));
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

}  // namespace detail

inline SimDataset generate(const SimConfig& cfg) {
  cfg.validate();
  SimDataset ds;
  ds.config = cfg;
  const int n1 = cfg.n_space, n2 = cfg.side2(), nt = cfg.n_time;
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) ds.stations.push_back({i * n2 + j, {i + 1.0, j + 1.0}});
  }
  std::vector<double> times(static_cast<std::size_t>(nt));
  for (int k = 0; k < nt; ++k) times[static_cast<std::size_t>(k)] = static_cast<double>(k) / (nt - 1);
  for (const auto& s : ds.stations) {
    for (double t : times) ds.points.push_back({s.where.s1, s.where.s2, t});
  }

  const auto ns = static_cast<Eigen::Index>(ds.stations.size());
  auto space_gram = [&](double var, double ls) {
    Eigen::MatrixXd k(ns, ns);
    for (Eigen::Index a = 0; a < ns; ++a) {
      for (Eigen::Index b = 0; b < ns; ++b) {
        k(a, b) = var * space_correlation(ds.stations[a].where, ds.stations[b].where, ls);
      }
    }
    return k;
  };
  auto time_gram = [&](double var, double lt) {
    Eigen::MatrixXd k(nt, nt);
    for (int a = 0; a < nt; ++a) {
      for (int b = 0; b < nt; ++b) k(a, b) = var * time_correlation(times[a], times[b], lt);
    }
    return k;
  };
  const double lt = lengthscale_from_corr(cfg.corr_time, 1.0 / (nt - 1));
  const Eigen::Index n = ns * nt;

  auto r1 = make_stream(cfg.seed, kStreamLatentLf);
  auto r2 = make_stream(cfg.seed, kStreamNoiseLf);
  auto r3 = make_stream(cfg.seed, kStreamLatentHf);
  auto r4 = make_stream(cfg.seed, kStreamNoiseHf);
  ds.latent_lf = detail::sample_separable(
      space_gram(cfg.var_lf, lengthscale_from_corr(cfg.corr_space_lf, 1.0)),
      time_gram(cfg.var_lf, lt), cfg.jitter, r1);
  ds.y_lf = ds.latent_lf + detail::white_noise(n, cfg.noise_lf, r2);
  ds.latent_hf = detail::sample_separable(
      space_gram(cfg.var_hf, lengthscale_from_corr(cfg.corr_space_hf, 1.0)),
      time_gram(cfg.var_hf, lt), cfg.jitter, r3);
  ds.y_hf = cfg.rho * ds.y_lf + ds.latent_hf + detail::white_noise(n, cfg.noise_hf, r4);

  std::tie(ds.train_stations, ds.test_stations) =
      split_stations(static_cast<int>(ns), cfg.train_fraction, cfg.seed, cfg.n_train_stations);
  return ds;
}

}  // namespace mfgp
