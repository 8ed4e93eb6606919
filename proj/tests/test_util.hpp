#pragma once

#include <random>
#include <vector>

#include "moce/lorentz.hpp"

namespace moce::testing {

using lorentz::Curvature;
using lorentz::LorentzPoint;

inline Vec<double> gaussian_vec(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vec<double> v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = nd(rng);
  return v;
}

/// Random point at a geodesic radius of roughly `scale` from the origin.
inline LorentzPoint<double> random_point(std::mt19937_64& rng, Eigen::Index n, double k, double scale = 1.0) {
  const Vec<double> x = gaussian_vec(rng, n, scale / std::sqrt(static_cast<double>(n)));
  return lorentz::exp_map_origin<double>(x, Curvature<double>(k));
}

/// Random tangent at `base` with Lorentz norm of roughly `scale`: drawn at
/// the origin and parallel-transported, so its size does not grow with the
/// distance of `base` from the origin.
inline lorentz::TangentVector<double> random_tangent(std::mt19937_64& rng, const LorentzPoint<double>& base,
                                                     double scale = 1.0) {
  const auto o = lorentz::origin<double>(base.dim(), base.curvature());
  const Vec<double> x = gaussian_vec(rng, base.dim(), scale / std::sqrt(static_cast<double>(base.dim())));
  return lorentz::parallel_transport(o, base, lorentz::origin_tangent(o, x));
}

inline Vec<double> unit(Eigen::Index n, Eigen::Index i) {
  Vec<double> e = Vec<double>::Zero(n);
  e[i] = 1.0;
  return e;
}

inline double max_abs_diff(const Vec<double>& a, const Vec<double>& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace moce::testing
