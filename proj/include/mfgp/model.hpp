#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mfgp/error.hpp"
#include "mfgp/kernels.hpp"
#include "mfgp/meanmodel.hpp"
#include "mfgp/mfstruct.hpp"
#include "mfgp/rho.hpp"
#include "mfgp/vecchia.hpp"

namespace mfgp {

/*
 * Training data of both fidelities. HF row h reads the LF process at
 * link(h): its own point unless `hf_link` is given (matched real data).
 * `hf_station` is optional; without it stations are identified by location.
 */
struct MfData {
  std::vector<SpaceTimePoint> lf;
  Eigen::VectorXd y_lf;
  std::vector<SpaceTimePoint> hf;
  Eigen::VectorXd y_hf;
  std::vector<SpaceTimePoint> hf_link;
  std::vector<int> hf_station;

  int n_lf() const { return static_cast<int>(lf.size()); }
  int n_hf() const { return static_cast<int>(hf.size()); }
  int n_obs() const { return n_lf() + n_hf(); }

  const SpaceTimePoint& link(int h) const {
    return hf_link.empty() ? hf[static_cast<std::size_t>(h)] : hf_link[static_cast<std::size_t>(h)];
  }

  Eigen::VectorXd y() const {
    Eigen::VectorXd out(n_obs());
    out << y_lf, y_hf;
    return out;
  }

  std::vector<Location> hf_locations() const {
    std::vector<Location> out;
    out.reserve(hf.size());
    for (const auto& p : hf) out.push_back(p.location());
    return out;
  }

  int station_of(int h) const {
    return hf_station.empty() ? -1 : hf_station[static_cast<std::size_t>(h)];
  }

  void validate() const {
    if (y_lf.size() != n_lf() || y_hf.size() != n_hf()) {
      throw InvalidArgument("data: number of values does not match number of points");
    }
    if (!hf_link.empty() && hf_link.size() != hf.size()) {
      throw InvalidArgument("data: one link point per HF row required");
    }
    if (!hf_station.empty() && hf_station.size() != hf.size()) {
      throw InvalidArgument("data: one station id per HF row required");
    }
    if (!y_lf.allFinite() || !y_hf.allFinite()) throw InvalidArgument("data: non-finite value");
    if (n_obs() == 0) throw InvalidArgument("data: empty");
  }

  FidelityLayout layout() const {
    return build_layout(lf, hf, hf_link.empty() ? std::span<const SpaceTimePoint>{}
                                                : std::span<const SpaceTimePoint>(hf_link));
  }

  /// Mean of all LF and HF spatial coordinates.
  Location coordinate_centre() const {
    Location c;
    const double n = static_cast<double>(n_obs());
    for (const auto& p : lf) {
      c.s1 += p.s1;
      c.s2 += p.s2;
    }
    for (const auto& p : hf) {
      c.s1 += p.s1;
      c.s2 += p.s2;
    }
    c.s1 /= n;
    c.s2 /= n;
    return c;
  }

  /// Per-station series of (LF at link, HF) over time stamps where both exist.
  std::vector<MatchedSeries> matched_series() const {
    std::map<SpaceTimePoint, double> lf_value;
    for (int r = 0; r < n_lf(); ++r) lf_value.emplace(lf[static_cast<std::size_t>(r)], y_lf(r));
    std::map<std::pair<int, Location>, std::vector<std::pair<double, int>>> rows;
    for (int h = 0; h < n_hf(); ++h) {
      const Location key_loc = hf_station.empty() ? hf[static_cast<std::size_t>(h)].location() : Location{};
      rows[{station_of(h), key_loc}].emplace_back(hf[static_cast<std::size_t>(h)].t, h);
    }
    std::vector<MatchedSeries> out;
    int ordinal = 0;
    for (auto& [key, list] : rows) {
      std::sort(list.begin(), list.end());
      MatchedSeries s;
      s.station = key.first >= 0 ? key.first : ordinal;
      s.where = hf[static_cast<std::size_t>(list.front().second)].location();
      for (const auto& [t, h] : list) {
        const auto it = lf_value.find(link(h));
        if (it == lf_value.end()) continue;
        s.lf.push_back(it->second);
        s.hf.push_back(y_hf(h));
      }
      out.push_back(std::move(s));
      ++ordinal;
    }
    return out;
  }
};

struct MfHyperParams {
  KernelParams kernel_lf{};
  KernelParams kernel_hf{};
  NoiseModel noise{};
  RhoModel rho = ConstantRho{};
};

struct VecchiaConfig {
  OrderingStrategy ordering{};
  ConditioningRule conditioning{};
  bool freeze_neighbors = false;
  double jitter_relative = 1e-8;
};

enum class Backend { Vecchia, Dense };

struct ModelConfig {
  VecchiaConfig vecchia{};
  GlsMode gls{};
  Backend backend = Backend::Vecchia;
  long dense_cap = 5000;
};

}  // namespace mfgp
