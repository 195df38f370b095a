#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/OrderingMethods>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "mfgp/error.hpp"
#include "mfgp/kernels.hpp"
#include "mfgp/vecchia.hpp"

namespace mfgp {

/*
 * Index bookkeeping between observations and latent processes.
 *
 * The latent LF process lives on the distinct union of LF observation points
 * and the points where HF rows read the LF process ("links"), sorted
 * space-major. For nested designs the link of an HF row is the row's own
 * point; for matched real data it is the paired LF cell at the same time.
 * The discrepancy process lives on the HF rows themselves.
 */
struct FidelityLayout {
  std::vector<SpaceTimePoint> latent_lf;
  std::vector<SpaceTimePoint> hf_points;
  std::vector<int> lf_index;  // Z1: LF row -> latent LF index
  std::vector<int> hf_index;  // Z21: HF row -> latent LF index of its link
  int n_locations = 0;        // distinct spatial sites over LF and HF rows
  bool nested = false;        // every HF link location is an LF location

  int n_lf() const { return static_cast<int>(lf_index.size()); }
  int n_hf() const { return static_cast<int>(hf_index.size()); }
  int n_latent_lf() const { return static_cast<int>(latent_lf.size()); }
  int n_obs() const { return n_lf() + n_hf(); }
};

inline FidelityLayout build_layout(std::span<const SpaceTimePoint> lf_points,
                                   std::span<const SpaceTimePoint> hf_points,
                                   std::span<const SpaceTimePoint> hf_links = {}) {
  if (!hf_links.empty() && hf_links.size() != hf_points.size()) {
    throw InvalidArgument("build_layout: one link per HF row required");
  }
  if (lf_points.empty() && hf_points.empty()) throw InvalidArgument("build_layout: no data");
  auto check_unique = [](std::span<const SpaceTimePoint> pts, const char* what) {
    std::vector<SpaceTimePoint> v(pts.begin(), pts.end());
    std::sort(v.begin(), v.end());
    if (std::adjacent_find(v.begin(), v.end()) != v.end()) {
      throw InvalidArgument(std::string("build_layout: duplicate space-time point in ") + what);
    }
    for (const auto& p : v) {
      if (!p.finite()) throw InvalidArgument("build_layout: non-finite coordinate");
    }
  };
  check_unique(lf_points, "LF rows");
  check_unique(hf_points, "HF rows");

  const auto link = [&](std::size_t h) { return hf_links.empty() ? hf_points[h] : hf_links[h]; };

  FidelityLayout lay;
  lay.hf_points.assign(hf_points.begin(), hf_points.end());
  std::set<SpaceTimePoint> latent(lf_points.begin(), lf_points.end());
  for (std::size_t h = 0; h < hf_points.size(); ++h) latent.insert(link(h));
  lay.latent_lf.assign(latent.begin(), latent.end());

  std::map<SpaceTimePoint, int> where;
  for (int k = 0; k < lay.n_latent_lf(); ++k) where.emplace(lay.latent_lf[k], k);
  for (const auto& p : lf_points) lay.lf_index.push_back(where.at(p));
  for (std::size_t h = 0; h < hf_points.size(); ++h) lay.hf_index.push_back(where.at(link(h)));

  std::set<Location> lf_locs, all_locs;
  for (const auto& p : lf_points) lf_locs.insert(p.location());
  all_locs = lf_locs;
  lay.nested = true;
  for (std::size_t h = 0; h < hf_points.size(); ++h) {
    all_locs.insert(hf_points[h].location());
    all_locs.insert(link(h).location());
    if (!lf_locs.contains(link(h).location())) lay.nested = false;
  }
  lay.n_locations = static_cast<int>(all_locs.size());
  return lay;
}

/// Nugget variances g_L^2 and g_delta^2.
struct NoiseModel {
  double lf = 0.1;
  double hf = 0.1;

  bool valid() const { return std::isfinite(lf) && std::isfinite(hf) && lf > 0.0 && hf > 0.0; }
};

struct SparsityReport {
  long nnz_H = 0;
  double density_H = 0.0;
  long nnz_chol = 0;
  int dim = 0;
};

/*
 * K = A Sigma_w A^T + D with
 *   A = [[Z1, 0], [R Z21, I]],  Sigma_w = blkdiag(Sigma_L, Sigma_delta),
 *   D = blkdiag(g_L^2 I, g_delta^2 I),  R = diag(rho at HF rows),
 * and Sigma_w^{-1} taken from the two Vecchia factors. All solves go through
 * H = Sigma_w^{-1} + A^T D^{-1} A and its fill-reduced sparse Cholesky factor.
 *
 * The fill-reducing permutation is AMD unless the caller supplies one (see
 * min_fill_order). L L^T = P H P^T with P applied as x -> P x.
 */
using FillOrder = Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int>;

class MfSystem {
 public:
  using SpMat = Eigen::SparseMatrix<double>;
  using Chol = Eigen::SimplicialLLT<SpMat, Eigen::Lower, Eigen::NaturalOrdering<int>>;

  MfSystem(const FidelityLayout& layout, const VecchiaFactor& factor_lf,
           const VecchiaFactor* factor_hf, const Eigen::VectorXd& rho_hf, const NoiseModel& noise,
           std::shared_ptr<const FillOrder> order = nullptr)
      : n_lf_(layout.n_lf()),
        n_hf_(layout.n_hf()),
        n_lat_(layout.n_latent_lf()),
        lf_index_(layout.lf_index),
        hf_index_(layout.hf_index),
        rho_(rho_hf),
        noise_(noise) {
    if (!noise.valid()) throw InvalidArgument("nugget variances must be finite and positive");
    if (factor_lf.size() != n_lat_) throw InvalidArgument("LF factor does not match layout");
    if (rho_hf.size() != n_hf_) throw InvalidArgument("rho vector does not match HF rows");
    if (n_hf_ > 0 && (factor_hf == nullptr || factor_hf->size() != n_hf_)) {
      throw InvalidArgument("discrepancy factor does not match layout");
    }
    if (!rho_hf.allFinite()) throw InvalidArgument("non-finite rho");

    logdet_w_ = mfgp::logdet(factor_lf) + (n_hf_ > 0 ? mfgp::logdet(*factor_hf) : 0.0);
    logdet_d_ = n_lf_ * std::log(noise.lf) + n_hf_ * std::log(noise.hf);

    const int dim = n_lat_ + n_hf_;
    std::vector<Eigen::Triplet<double>> trip;
    auto push_block = [&](const SpMat& q, int offset) {
      for (int k = 0; k < q.outerSize(); ++k) {
        for (SpMat::InnerIterator it(q, k); it; ++it) {
          trip.emplace_back(offset + it.row(), offset + it.col(), it.value());
        }
      }
    };
    const SpMat q_lf = precision(factor_lf);
    trip.reserve(static_cast<std::size_t>(q_lf.nonZeros()) * 2 + 4 * static_cast<std::size_t>(dim));
    push_block(q_lf, 0);
    if (n_hf_ > 0) push_block(precision(*factor_hf), n_lat_);

    const double inv_l = 1.0 / noise.lf;
    const double inv_h = 1.0 / noise.hf;
    for (int r = 0; r < n_lf_; ++r) trip.emplace_back(lf_index_[r], lf_index_[r], inv_l);
    for (int h = 0; h < n_hf_; ++h) {
      const int a = hf_index_[h];
      const int b = n_lat_ + h;
      trip.emplace_back(a, a, rho_(h) * rho_(h) * inv_h);
      trip.emplace_back(a, b, rho_(h) * inv_h);
      trip.emplace_back(b, a, rho_(h) * inv_h);
      trip.emplace_back(b, b, inv_h);
    }
    SpMat h(dim, dim);
    h.setFromTriplets(trip.begin(), trip.end());
    SpMat ht = h.transpose();
    h_ = 0.5 * (h + ht);
    h_.prune(0.0);
    h_.makeCompressed();

    if (order && order->size() != dim) throw InvalidArgument("fill order does not match H");
    order_ = order ? std::move(order) : amd_order(h_);
    SpMat hp;
    hp = h_.selfadjointView<Eigen::Lower>().twistedBy(*order_);
    chol_ = std::make_unique<Chol>();
    chol_->compute(hp);
    if (chol_->info() != Eigen::Success) throw CholeskyFailure("sparse Cholesky of H failed");
    const auto& l = chol_->matrixL().nestedExpression();
    logdet_h_ = 2.0 * l.diagonal().array().log().sum();
    if (!std::isfinite(logdet_h_)) throw CholeskyFailure("non-finite log|H|");
  }

  MfSystem(const MfSystem&) = delete;
  MfSystem& operator=(const MfSystem&) = delete;
  MfSystem(MfSystem&&) noexcept = default;
  MfSystem& operator=(MfSystem&&) noexcept = default;

  int n_obs() const { return n_lf_ + n_hf_; }
  int n_lf() const { return n_lf_; }
  int n_hf() const { return n_hf_; }
  int n_latent_lf() const { return n_lat_; }

  /// K^{-1} V by the Woodbury identity; V has n_lf + n_hf rows.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& v) const {
    if (v.rows() != n_obs()) throw InvalidArgument("solve_K: right-hand side has wrong length");
    Eigen::MatrixXd w = v;
    w.topRows(n_lf_) /= noise_.lf;
    w.bottomRows(n_hf_) /= noise_.hf;
    const Eigen::MatrixXd s = solve_H(apply_At(w));
    Eigen::MatrixXd as = apply_A(s);
    as.topRows(n_lf_) /= noise_.lf;
    as.bottomRows(n_hf_) /= noise_.hf;
    return w - as;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& v) const {
    return solve(Eigen::MatrixXd(v)).col(0);
  }

  /// log|K| = log|Sigma_w| + log|H| + log|D|
  double logdet() const { return logdet_w_ + logdet_h_ + logdet_d_; }
  double logdet_sigma_w() const { return logdet_w_; }
  double logdet_H() const { return logdet_h_; }
  double logdet_D() const { return logdet_d_; }

  const SpMat& H() const { return h_; }
  const std::shared_ptr<const FillOrder>& fill_order() const { return order_; }

  static std::shared_ptr<const FillOrder> amd_order(const SpMat& h) {
    const SpMat full = h.selfadjointView<Eigen::Lower>();
    FillOrder inverse;
    Eigen::AMDOrdering<int>()(full, inverse);
    return std::make_shared<const FillOrder>(inverse.inverse());
  }

  /// H^{-1} X: the posterior covariance of the latent fields applied to X.
  Eigen::MatrixXd solve_H(const Eigen::MatrixXd& x) const {
    if (x.rows() != h_.rows()) throw InvalidArgument("solve_H: right-hand side has wrong length");
    const Eigen::MatrixXd px = *order_ * x;
    return order_->transpose() * Eigen::MatrixXd(chol_->solve(px));
  }

  /// Posterior mean of the latent fields given observations v: H^{-1} A^T D^{-1} v.
  Eigen::VectorXd latent_mean(const Eigen::VectorXd& v) const {
    if (v.size() != n_obs()) throw InvalidArgument("latent_mean: data vector has wrong length");
    Eigen::MatrixXd w = v;
    w.topRows(n_lf_) /= noise_.lf;
    w.bottomRows(n_hf_) /= noise_.hf;
    return solve_H(apply_At(w)).col(0);
  }

  SparsityReport sparsity() const {
    SparsityReport r;
    r.dim = static_cast<int>(h_.rows());
    r.nnz_H = h_.nonZeros();
    r.density_H = static_cast<double>(r.nnz_H) / (static_cast<double>(r.dim) * r.dim);
    r.nnz_chol = chol_->matrixL().nestedExpression().nonZeros();
    return r;
  }

  /// A^T X for X with n_obs rows.
  Eigen::MatrixXd apply_At(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_lat_ + n_hf_, x.cols());
    for (int r = 0; r < n_lf_; ++r) out.row(lf_index_[r]) += x.row(r);
    for (int h = 0; h < n_hf_; ++h) {
      out.row(hf_index_[h]) += rho_(h) * x.row(n_lf_ + h);
      out.row(n_lat_ + h) = x.row(n_lf_ + h);
    }
    return out;
  }

  /// A X for X with n_latent_lf + n_hf rows.
  Eigen::MatrixXd apply_A(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out(n_obs(), x.cols());
    for (int r = 0; r < n_lf_; ++r) out.row(r) = x.row(lf_index_[r]);
    for (int h = 0; h < n_hf_; ++h) {
      out.row(n_lf_ + h) = rho_(h) * x.row(hf_index_[h]) + x.row(n_lat_ + h);
    }
    return out;
  }

 private:
  int n_lf_, n_hf_, n_lat_;
  std::vector<int> lf_index_, hf_index_;
  Eigen::VectorXd rho_;
  NoiseModel noise_;
  SpMat h_;
  std::shared_ptr<const FillOrder> order_;
  std::unique_ptr<Chol> chol_;
  double logdet_w_ = 0.0, logdet_h_ = 0.0, logdet_d_ = 0.0;
};

/*
 * Latent rows sorted by time (LF latents and discrepancies interleaved, ties
 * by index). For long series on a fixed site set H is banded in this order
 * and its factor fills linearly in the series length, where AMD does not.
 */
inline std::shared_ptr<const FillOrder> time_order(const FidelityLayout& layout) {
  std::vector<double> t;
  t.reserve(layout.latent_lf.size() + layout.hf_points.size());
  for (const auto& q : layout.latent_lf) t.push_back(q.t);
  for (const auto& q : layout.hf_points) t.push_back(q.t);
  std::vector<int> idx(t.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return t[a] < t[b]; });
  auto p = std::make_shared<FillOrder>(static_cast<int>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) p->indices()[idx[k]] = static_cast<int>(k);
  return p;
}

/// Whichever of the system's own order and the time order gives the sparser factor.
inline std::shared_ptr<const FillOrder> min_fill_order(const MfSystem& sys, const FidelityLayout& layout) {
  const auto by_time = time_order(layout);
  MfSystem::SpMat hp;
  hp = sys.H().selfadjointView<Eigen::Lower>().twistedBy(*by_time);
  MfSystem::Chol chol;
  chol.compute(hp);
  if (chol.info() != Eigen::Success) return sys.fill_order();
  return chol.matrixL().nestedExpression().nonZeros() < sys.sparsity().nnz_chol ? by_time : sys.fill_order();
}

}  // namespace mfgp
