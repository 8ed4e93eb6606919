#pragma once

#include <span>

#include "moce/lorentz.hpp"

namespace moce::frechet {

struct FrechetConfig {
  int max_iters = 100;
  /// Threshold on the weight-normalized Riemannian gradient norm.
  double tol = 1e-8;
  /// Initial step of each fixed-point update, in (0, 1].
  double step = 1.0;

  void validate() const;
};

struct KarcherResult {
  lorentz::LorentzPoint<double> mean;
  int iterations;
  double gradient_norm;
};

/// Weighted Frechet (Karcher) mean by fixed-point iteration
///   mu <- exp_mu(step * sum_i w_i log_mu(p_i) / sum_i w_i),
/// started at the heaviest point (lowest index on ties). The step is halved
/// (at most 20 times) whenever a full step increases the objective.
///
/// Throws ConvergenceError carrying the last iterate when the gradient norm
/// is still above cfg.tol after cfg.max_iters updates.
KarcherResult karcher_mean(const lorentz::PointBatch<double>& batch, std::span<const double> weights,
                           const FrechetConfig& cfg);

/// Weighted Frechet mean for either scalar type.
///
/// On tape variables the solver runs on detached values and the result is
/// re-attached through one Newton step on the first-order optimality
/// condition, so derivatives with respect to the points, weights and the
/// curvature are those of the exact minimizer (implicit function theorem).
template <Real T>
lorentz::LorentzPoint<T> weighted_frechet_mean(const lorentz::PointBatch<T>& batch, std::span<const T> weights,
                                               const FrechetConfig& cfg);

template <Real T>
lorentz::LorentzPoint<T> frechet_mean(const lorentz::PointBatch<T>& batch, const FrechetConfig& cfg);

/// sum_i w_i d^2(mean, p_i) / sum_i w_i
template <Real T>
T frechet_variance(const lorentz::PointBatch<T>& batch, std::span<const T> weights,
                   const lorentz::LorentzPoint<T>& mean);

/// Uniform-weight variance (1/M normalization).
template <Real T>
T frechet_variance(const lorentz::PointBatch<T>& batch, const lorentz::LorentzPoint<T>& mean);

/// Gradient of (1/2) sum_i w_i d^2(mu(x), p_i) with respect to the space
/// coordinates x of mu. Zero exactly at the weighted Frechet mean.
template <Real T>
Vec<T> stationarity_residual(const Vec<T>& x, const std::vector<Vec<T>>& points, std::span<const T> weights,
                             const T& k);

}  // namespace moce::frechet
