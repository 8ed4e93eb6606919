#pragma once

#include <cmath>
#include <concepts>

#include <Eigen/Core>

#include "moce/ad/var.hpp"

namespace moce {

/// Scalars every numeric kernel is instantiated for: plain doubles for
/// inference, tape variables for training.
template <typename T>
concept Real = std::same_as<T, double> || std::same_as<T, ad::Var>;

template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

using ad::value_of;

template <typename T>
Vec<double> values_of(const Vec<T>& v) {
  Vec<double> out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = value_of(v[i]);
  return out;
}

/// Smooth closed forms of the ratios that appear in exp/log maps.
///
/// Each is written as a function of a squared quantity so that derivatives
/// stay finite at the origin and at coincident points; below a small
/// threshold a Taylor series replaces the direct formula.
namespace smooth {

inline constexpr double kSeriesCutoff = 1e-6;

/// cosh(sqrt(z)), z >= 0.
template <Real T>
T cosh_sqrt(const T& z) {
  using std::cosh, std::sqrt;
  if (value_of(z) < kSeriesCutoff) return 1.0 + z * (0.5 + z * (1.0 / 24.0 + z * (1.0 / 720.0)));
  return cosh(sqrt(z));
}

/// sinh(sqrt(z)) / sqrt(z), z >= 0.
template <Real T>
T sinhc_sqrt(const T& z) {
  using std::sinh, std::sqrt;
  if (value_of(z) < kSeriesCutoff) return 1.0 + z * (1.0 / 6.0 + z * (1.0 / 120.0 + z * (1.0 / 5040.0)));
  const T s = sqrt(z);
  return sinh(s) / s;
}

/// asinh(sqrt(z)) / sqrt(z), z >= 0.
template <Real T>
T asinhc_sqrt(const T& z) {
  using std::asinh, std::sqrt;
  if (value_of(z) < kSeriesCutoff) return 1.0 + z * (-1.0 / 6.0 + z * (3.0 / 40.0 - z * (5.0 / 112.0)));
  const T s = sqrt(z);
  return asinh(s) / s;
}

/// acosh(u) / sqrt(u^2 - 1), u >= 1; equals 1 at u = 1.
template <Real T>
T acosh_ratio(const T& u) {
  using std::acosh, std::sqrt;
  const T t = u - 1.0;
  if (value_of(t) <= 0.0) return T(1.0);
  if (value_of(t) < kSeriesCutoff) return 1.0 + t * (-1.0 / 3.0 + t * (2.0 / 15.0));
  return acosh(u) / sqrt(t * (2.0 + t));
}

/// acosh(max(u, 1))^2.
template <Real T>
T acosh_sq(const T& u) {
  using std::acosh;
  const T t = u - 1.0;
  if (value_of(t) <= 0.0) return T(0.0);
  if (value_of(t) < kSeriesCutoff) return t * (2.0 + t * (-1.0 / 3.0 + t * (4.0 / 45.0)));
  const T a = acosh(u);
  return a * a;
}

}  // namespace smooth

template <Real T>
T softplus(const T& x) {
  using std::exp, std::log1p;
  if (value_of(x) > 30.0) return x;
  return log1p(exp(x));
}

template <Real T>
T elu(const T& x) {
  using std::exp;
  if (value_of(x) > 0.0) return x;
  return exp(x) - 1.0;
}

template <Real T>
T relu(const T& x) {
  if (value_of(x) > 0.0) return x;
  return T(0.0);
}

}  // namespace moce
