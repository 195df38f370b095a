#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include "mfgp/error.hpp"
#include "mfgp/kernels.hpp"

namespace mfgp {

/// ordered position -> original index
using Permutation = std::vector<int>;

enum class OrderingKind { SpaceMajor, TimeMajor, TimeMajorRandSpace, Random };

/*
 * SpaceMajor:         grouped by location (lexicographic in (s1, s2)), time
 *                     increasing within a location.
 * TimeMajor:          grouped by time, locations in lexicographic order.
 * TimeMajorRandSpace: grouped by time, locations shuffled per time step.
 * Random:             uniform random permutation.
 */
struct OrderingStrategy {
  OrderingKind kind = OrderingKind::SpaceMajor;
  std::uint64_t seed = 0;
};

enum class ConditioningKind { NearestNeighbor, Correlation };

/*
 * NearestNeighbor ranks predecessors by Euclidean distance after scaling
 * every axis to unit sample standard deviation. Correlation ranks them by
 * kernel value; for the separable squared exponential this is the same as
 * ranking by (|ds|/ls)^2 + (dt/lt)^2, which is what is computed (it keeps
 * far-apart points distinguishable where the kernel underflows to zero).
 */
struct ConditioningRule {
  ConditioningKind kind = ConditioningKind::Correlation;
  int m = 10;
};

inline Permutation order_points(std::span<const SpaceTimePoint> points,
                                const OrderingStrategy& strategy) {
  const int n = static_cast<int>(points.size());
  if (n == 0) throw InvalidArgument("order_points: empty point list");
  for (const auto& p : points) {
    if (!p.finite()) throw InvalidArgument("order_points: non-finite coordinate");
  }

  Permutation by_space(n);
  std::iota(by_space.begin(), by_space.end(), 0);
  std::sort(by_space.begin(), by_space.end(),
            [&](int a, int b) { return points[a] < points[b]; });
  for (int k = 1; k < n; ++k) {
    if (points[by_space[k]] == points[by_space[k - 1]]) {
      throw InvalidArgument("order_points: duplicate space-time point");
    }
  }

  std::mt19937_64 rng(strategy.seed);
  switch (strategy.kind) {
    case OrderingKind::SpaceMajor:
      return by_space;
    case OrderingKind::TimeMajor:
    case OrderingKind::TimeMajorRandSpace: {
      Permutation perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      std::sort(perm.begin(), perm.end(), [&](int a, int b) {
        const auto& p = points[a];
        const auto& q = points[b];
        if (p.t != q.t) return p.t < q.t;
        return p.location() < q.location();
      });
      if (strategy.kind == OrderingKind::TimeMajorRandSpace) {
        auto first = perm.begin();
        while (first != perm.end()) {
          const double t = points[*first].t;
          auto last = std::find_if(first, perm.end(), [&](int k) { return points[k].t != t; });
          std::shuffle(first, last, rng);
          first = last;
        }
      }
      return perm;
    }
    case OrderingKind::Random: {
      Permutation perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      return perm;
    }
  }
  throw InvalidArgument("order_points: unknown ordering");
}

inline std::vector<SpaceTimePoint> apply_permutation(std::span<const SpaceTimePoint> points,
                                                     const Permutation& perm) {
  std::vector<SpaceTimePoint> out;
  out.reserve(perm.size());
  for (int k : perm) out.push_back(points[k]);
  return out;
}

/// Weights on squared coordinate differences defining the ranking metric.
struct AxisWeights {
  double s1 = 1.0;
  double s2 = 1.0;
  double t = 1.0;

  double sq_distance(const SpaceTimePoint& p, const SpaceTimePoint& q) const {
    const double d1 = p.s1 - q.s1;
    const double d2 = p.s2 - q.s2;
    const double dt = p.t - q.t;
    // Summing the spatial part before scaling keeps grid ties exact.
    const double space = s1 == s2 ? (d1 * d1 + d2 * d2) * s1 : d1 * d1 * s1 + d2 * d2 * s2;
    return space + dt * dt * t;
  }
};

inline AxisWeights axis_weights(std::span<const SpaceTimePoint> points,
                                const ConditioningRule& rule, const KernelParams& kp) {
  if (rule.kind == ConditioningKind::Correlation) {
    kp.validate();
    const double ws = 1.0 / (kp.length_space * kp.length_space);
    return {ws, ws, 1.0 / (kp.length_time * kp.length_time)};
  }
  const double n = static_cast<double>(points.size());
  auto inv_var = [&](auto coord) {
    if (points.size() < 2) return 1.0;
    double mean = 0.0;
    for (const auto& p : points) mean += coord(p);
    mean /= n;
    double ss = 0.0;
    for (const auto& p : points) ss += (coord(p) - mean) * (coord(p) - mean);
    const double var = ss / (n - 1.0);
    return var > 0.0 ? 1.0 / var : 1.0;
  };
  return {inv_var([](const SpaceTimePoint& p) { return p.s1; }),
          inv_var([](const SpaceTimePoint& p) { return p.s2; }),
          inv_var([](const SpaceTimePoint& p) { return p.t; })};
}

namespace detail {

inline void rank_and_truncate(std::vector<std::pair<double, int>>& cand, int m,
                              std::vector<int>& out) {
  const auto keep = std::min<std::size_t>(static_cast<std::size_t>(m), cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end());
  out.clear();
  for (std::size_t k = 0; k < keep; ++k) out.push_back(cand[k].second);
}

}  // namespace detail

/*
 * Conditioning set of ordered position i (0-based): the min(m, i) closest
 * predecessors under the rule's metric, nearest first, ties broken by lower
 * position. Brute force over all predecessors.
 */
inline std::vector<int> select_neighbors(int i, std::span<const SpaceTimePoint> ordered,
                                         const ConditioningRule& rule, const KernelParams& kp) {
  if (rule.m < 1) throw InvalidArgument("conditioning set size must be >= 1");
  if (i < 0 || i >= static_cast<int>(ordered.size())) {
    throw InvalidArgument("select_neighbors: index out of range");
  }
  const AxisWeights w = axis_weights(ordered, rule, kp);
  std::vector<std::pair<double, int>> cand;
  cand.reserve(static_cast<std::size_t>(i));
  for (int j = 0; j < i; ++j) cand.emplace_back(w.sq_distance(ordered[i], ordered[j]), j);
  std::vector<int> out;
  detail::rank_and_truncate(cand, rule.m, out);
  return out;
}

/// Conditioning sets for every ordered position; same result as calling
/// select_neighbors for each i, computed with an incremental R-tree.
inline std::vector<std::vector<int>> neighbor_sets(std::span<const SpaceTimePoint> ordered,
                                                   const ConditioningRule& rule,
                                                   const KernelParams& kp) {
  namespace bg = boost::geometry;
  namespace bgi = boost::geometry::index;
  using BPoint = bg::model::point<double, 3, bg::cs::cartesian>;
  using BBox = bg::model::box<BPoint>;
  using Value = std::pair<BPoint, int>;

  if (rule.m < 1) throw InvalidArgument("conditioning set size must be >= 1");
  const int n = static_cast<int>(ordered.size());
  const AxisWeights w = axis_weights(ordered, rule, kp);
  const double r1 = std::sqrt(w.s1), r2 = std::sqrt(w.s2), rt = std::sqrt(w.t);
  auto embed = [&](const SpaceTimePoint& p) { return BPoint(p.s1 * r1, p.s2 * r2, p.t * rt); };

  std::vector<std::vector<int>> sets(static_cast<std::size_t>(n));
  std::vector<std::pair<double, int>> cand;
  std::vector<Value> hits;
  bgi::rtree<Value, bgi::rstar<16>> tree;
  for (int i = 0; i < n; ++i) {
    const SpaceTimePoint& p = ordered[i];
    cand.clear();
    if (i <= rule.m) {
      for (int j = 0; j < i; ++j) cand.emplace_back(w.sq_distance(p, ordered[j]), j);
    } else {
      const BPoint q = embed(p);
      hits.clear();
      tree.query(bgi::nearest(q, static_cast<unsigned>(rule.m)), std::back_inserter(hits));
      double radius2 = 0.0;
      for (const auto& h : hits) {
        radius2 = std::max(radius2, w.sq_distance(p, ordered[h.second]));
      }
      // Collect every predecessor within the m-th distance so that ties
      // are resolved by index rather than by tree traversal order.
      const double r = std::sqrt(radius2) * (1.0 + 1e-9) + 1e-12;
      const BBox box(BPoint(q.get<0>() - r, q.get<1>() - r, q.get<2>() - r),
                     BPoint(q.get<0>() + r, q.get<1>() + r, q.get<2>() + r));
      hits.clear();
      tree.query(bgi::intersects(box), std::back_inserter(hits));
      for (const auto& h : hits) {
        const double d = w.sq_distance(p, ordered[h.second]);
        if (d <= radius2) cand.emplace_back(d, h.second);
      }
    }
    detail::rank_and_truncate(cand, rule.m, sets[static_cast<std::size_t>(i)]);
    tree.insert(Value(embed(p), i));
  }
  return sets;
}

/*
 * Sparse inverse-Cholesky factor of a Vecchia approximation,
 *
 *   Sigma_hat^{-1} = U U^T,  U[i,i] = 1/sqrt(d_i),  U[C(i),i] = -b_i/sqrt(d_i)
 *
 * in the ordered index space. Conditioning sets and coefficients are stored
 * in compressed form, indexed by ordered position.
 */
struct VecchiaFactor {
  Permutation permutation;
  std::vector<int> offsets{0};
  std::vector<int> neighbors;
  std::vector<double> coeffs;
  Eigen::VectorXd cond_var;

  int size() const { return static_cast<int>(permutation.size()); }
  std::span<const int> neighbors_of(int i) const {
    return {neighbors.data() + offsets[i], static_cast<std::size_t>(offsets[i + 1] - offsets[i])};
  }
  std::span<const double> coeffs_of(int i) const {
    return {coeffs.data() + offsets[i], static_cast<std::size_t>(offsets[i + 1] - offsets[i])};
  }
  std::size_t stored_coefficients() const { return coeffs.size(); }
};

/*
 * b_i = K(C,C)^{-1} K(C,i),  d_i = K(i,i) - K(i,C) b_i
 *
 * where K is the latent covariance with `jitter` on its diagonal (plus an
 * optional extra `nugget`). `points` are in original order; `sets` are the
 * conditioning sets in ordered positions.
 */
inline VecchiaFactor build_factor(std::span<const SpaceTimePoint> points,
                                  const Permutation& permutation,
                                  const std::vector<std::vector<int>>& sets,
                                  const KernelParams& kp, double jitter, double nugget = 0.0) {
  kp.validate();
  const int n = static_cast<int>(permutation.size());
  if (n != static_cast<int>(points.size()) || n != static_cast<int>(sets.size())) {
    throw InvalidArgument("build_factor: size mismatch");
  }
  const double diag = kp.amplitude + jitter + nugget;
  const double floor = 1e-12 * kp.amplitude;
  const double inv_ls2 = 1.0 / (kp.length_space * kp.length_space);
  const double inv_lt2 = 1.0 / (kp.length_time * kp.length_time);
  auto k = [&](const SpaceTimePoint& a, const SpaceTimePoint& b) {
    return kp.amplitude * std::exp(-0.5 * detail::scaled_sq_distance(a, b, inv_ls2, inv_lt2));
  };

  VecchiaFactor f;
  f.permutation = permutation;
  f.cond_var.resize(n);
  f.offsets.assign(1, 0);
  f.offsets.reserve(static_cast<std::size_t>(n) + 1);
  std::size_t total = 0;
  for (const auto& s : sets) total += s.size();
  f.neighbors.reserve(total);
  f.coeffs.reserve(total);

  Eigen::MatrixXd kcc;
  Eigen::VectorXd kci;
  Eigen::LLT<Eigen::MatrixXd> llt;
  for (int i = 0; i < n; ++i) {
    const auto& c = sets[static_cast<std::size_t>(i)];
    const auto& pi = points[permutation[i]];
    const auto mc = static_cast<Eigen::Index>(c.size());
    double d = diag;
    if (mc > 0) {
      kcc.resize(mc, mc);
      kci.resize(mc);
      for (Eigen::Index a = 0; a < mc; ++a) {
        if (c[a] >= i || c[a] < 0) throw InvalidArgument("build_factor: set is not a predecessor set");
        const auto& pa = points[permutation[c[a]]];
        kcc(a, a) = diag;
        for (Eigen::Index b = a + 1; b < mc; ++b) {
          const double v = k(pa, points[permutation[c[b]]]);
          kcc(a, b) = v;
          kcc(b, a) = v;
        }
        kci(a) = k(pa, pi);
      }
      llt.compute(kcc);
      if (llt.info() != Eigen::Success) throw NonPositiveConditionalVariance(i, 0.0);
      const Eigen::VectorXd b = llt.solve(kci);
      d -= kci.dot(b);
      for (Eigen::Index a = 0; a < mc; ++a) {
        f.neighbors.push_back(c[a]);
        f.coeffs.push_back(b(a));
      }
    }
    if (!(d > floor)) throw NonPositiveConditionalVariance(i, d);
    f.cond_var(i) = d;
    f.offsets.push_back(static_cast<int>(f.neighbors.size()));
  }
  return f;
}

inline VecchiaFactor build_factor(std::span<const SpaceTimePoint> points,
                                  const OrderingStrategy& ordering, const ConditioningRule& rule,
                                  const KernelParams& kp, double jitter, double nugget = 0.0) {
  const Permutation perm = order_points(points, ordering);
  const auto ordered = apply_permutation(points, perm);
  return build_factor(points, perm, neighbor_sets(ordered, rule, kp), kp, jitter, nugget);
}

/// log|Sigma_hat| = sum_i log d_i
inline double logdet(const VecchiaFactor& f) { return f.cond_var.array().log().sum(); }

/// Sigma_hat^{-1} v = U (U^T v), in original index order.
inline Eigen::VectorXd apply_precision(const VecchiaFactor& f, const Eigen::VectorXd& v) {
  const int n = f.size();
  if (v.size() != n) throw InvalidArgument("apply_precision: size mismatch");
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) {
    double acc = v(f.permutation[i]);
    const auto nb = f.neighbors_of(i);
    const auto b = f.coeffs_of(i);
    for (std::size_t a = 0; a < nb.size(); ++a) acc -= b[a] * v(f.permutation[nb[a]]);
    w(i) = acc / std::sqrt(f.cond_var(i));
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    const double s = w(i) / std::sqrt(f.cond_var(i));
    out(f.permutation[i]) += s;
    const auto nb = f.neighbors_of(i);
    const auto b = f.coeffs_of(i);
    for (std::size_t a = 0; a < nb.size(); ++a) out(f.permutation[nb[a]]) -= b[a] * s;
  }
  return out;
}

/// U with rows and columns relabelled to original indices (so it is no
/// longer triangular, but U U^T is still the precision in original order).
inline Eigen::SparseMatrix<double> upper_factor(const VecchiaFactor& f) {
  const int n = f.size();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(f.neighbors.size() + static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double s = 1.0 / std::sqrt(f.cond_var(i));
    const int col = f.permutation[i];
    trip.emplace_back(col, col, s);
    const auto nb = f.neighbors_of(i);
    const auto b = f.coeffs_of(i);
    for (std::size_t a = 0; a < nb.size(); ++a) {
      trip.emplace_back(f.permutation[nb[a]], col, -b[a] * s);
    }
  }
  Eigen::SparseMatrix<double> u(n, n);
  u.setFromTriplets(trip.begin(), trip.end());
  return u;
}

/// Sigma_hat^{-1} as a sparse matrix in original index order.
inline Eigen::SparseMatrix<double> precision(const VecchiaFactor& f) {
  const Eigen::SparseMatrix<double> u = upper_factor(f);
  Eigen::SparseMatrix<double> q = u * Eigen::SparseMatrix<double>(u.transpose());
  return q;
}

}  // namespace mfgp
