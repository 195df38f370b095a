#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mfgp/error.hpp"

namespace mfgp {

struct NelderMeadOptions {
  int max_evals = 500;       // per restart
  double ftol = 1e-6;        // simplex spread of objective values
  int restarts = 3;
  double initial_step = 0.5;
  std::uint64_t seed = 0;
};

struct OptimResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

struct Simplex {
  std::vector<Eigen::VectorXd> x;
  std::vector<double> f;
};

// Standard Nelder-Mead (reflection 1, expansion 2, contraction 0.5, shrink 0.5).
// Non-finite objective values are treated as +inf and simply lose every comparison.
inline OptimResult nelder_mead_run(const std::function<double(const Eigen::VectorXd&)>& fn,
                                   Simplex s, const NelderMeadOptions& opt) {
  const auto n = static_cast<int>(s.x.size()) - 1;
  OptimResult res;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++res.evaluations;
    const double v = fn(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };
  for (std::size_t k = 0; k < s.x.size(); ++k) s.f[k] = eval(s.x[k]);

  std::vector<int> idx(static_cast<std::size_t>(n) + 1);
  while (true) {
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return s.f[a] < s.f[b]; });
    const int best = idx.front(), worst = idx.back(), second = idx[idx.size() - 2];
    const double spread = s.f[worst] - s.f[best];
    if (std::isfinite(s.f[worst]) && spread < opt.ftol) {
      res.converged = true;
      break;
    }
    if (res.evaluations >= opt.max_evals) break;
    ++res.iterations;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(s.x[0].size());
    for (int k = 0; k <= n; ++k) {
      if (k != worst) centroid += s.x[k];
    }
    centroid /= n;
    const Eigen::VectorXd xr = centroid + (centroid - s.x[worst]);
    const double fr = eval(xr);
    if (fr < s.f[best]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - s.x[worst]);
      const double fe = eval(xe);
      if (fe < fr) {
        s.x[worst] = xe;
        s.f[worst] = fe;
      } else {
        s.x[worst] = xr;
        s.f[worst] = fr;
      }
      continue;
    }
    if (fr < s.f[second]) {
      s.x[worst] = xr;
      s.f[worst] = fr;
      continue;
    }
    const bool outside = fr < s.f[worst];
    const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                       : Eigen::VectorXd(centroid + 0.5 * (s.x[worst] - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : s.f[worst])) {
      s.x[worst] = xc;
      s.f[worst] = fc;
      continue;
    }
    for (int k = 0; k <= n; ++k) {
      if (k == best) continue;
      s.x[k] = s.x[best] + 0.5 * (s.x[k] - s.x[best]);
      s.f[k] = eval(s.x[k]);
    }
  }
  const auto it = std::min_element(s.f.begin(), s.f.end());
  res.f = *it;
  res.x = s.x[static_cast<std::size_t>(it - s.f.begin())];
  return res;
}

}  // namespace detail

/*
 * Derivative-free minimisation with seeded restarts. The first run starts from
 * an axis-aligned simplex around x0; later runs restart from the incumbent with
 * a randomly scaled and signed simplex. Coordinates flagged in `fixed` are held
 * at their x0 values. `converged` reports whether the run that produced the
 * returned point met the spread tolerance.
 */
inline OptimResult minimize(const std::function<double(const Eigen::VectorXd&)>& fn,
                            const Eigen::VectorXd& x0, const NelderMeadOptions& opt,
                            const std::vector<bool>& fixed = {}) {
  if (!fixed.empty() && fixed.size() != static_cast<std::size_t>(x0.size())) {
    throw InvalidArgument("minimize: fixed mask has wrong length");
  }
  std::vector<int> free;
  for (int k = 0; k < x0.size(); ++k) {
    if (fixed.empty() || !fixed[static_cast<std::size_t>(k)]) free.push_back(k);
  }
  auto expand = [&](const Eigen::VectorXd& z) {
    Eigen::VectorXd x = x0;
    for (std::size_t k = 0; k < free.size(); ++k) x(free[k]) = z(static_cast<Eigen::Index>(k));
    return x;
  };
  const auto nf = static_cast<Eigen::Index>(free.size());
  if (nf == 0) {
    OptimResult r;
    r.x = x0;
    r.f = fn(x0);
    r.evaluations = 1;
    r.converged = std::isfinite(r.f);
    return r;
  }
  auto reduced = [&](const Eigen::VectorXd& z) { return fn(expand(z)); };

  Eigen::VectorXd z0(nf);
  for (Eigen::Index k = 0; k < nf; ++k) z0(k) = x0(free[static_cast<std::size_t>(k)]);

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  std::bernoulli_distribution coin(0.5);

  OptimResult best;
  best.x = z0;
  int total_evals = 0, total_iters = 0;
  for (int r = 0; r < std::max(1, opt.restarts); ++r) {
    detail::Simplex s;
    const Eigen::VectorXd base = r == 0 ? z0 : best.x;
    s.x.push_back(base);
    for (Eigen::Index k = 0; k < nf; ++k) {
      Eigen::VectorXd v = base;
      double step = opt.initial_step;
      if (r > 0) step *= unif(rng) * (coin(rng) ? 1.0 : -1.0);
      v(k) += step;
      s.x.push_back(v);
    }
    s.f.assign(s.x.size(), 0.0);
    OptimResult run = detail::nelder_mead_run(reduced, std::move(s), opt);
    total_evals += run.evaluations;
    total_iters += run.iterations;
    if (run.f < best.f || r == 0) best = run;
  }
  if (!std::isfinite(best.f)) throw OptimizationFailed("every optimisation restart returned +inf");
  best.x = expand(best.x);
  best.evaluations = total_evals;
  best.iterations = total_iters;
  return best;
}

}  // namespace mfgp
