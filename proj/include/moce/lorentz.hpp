#pragma once

// Lorentz (hyperboloid) model of hyperbolic space with curvature K < 0.
//
// Points are stored in ambient coordinates [p_t, p_s] with
// <p, p>_L = 1/K and p_t > 0. Every kernel is a template over the scalar
// type so the same code runs on doubles and on tape variables.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "moce/errors.hpp"
#include "moce/scalar.hpp"

namespace moce::lorentz {

/// Bounds a learnable curvature is clamped to.
inline constexpr double kCurvatureMin = -10.0;
inline constexpr double kCurvatureMax = -0.1;

/// Constant sectional curvature K < 0.
template <Real T>
class Curvature {
 public:
  explicit Curvature(T k) : k_(std::move(k)) {
    const double v = value_of(k_);
    if (!std::isfinite(v) || !(v < 0.0)) {
      throw GeometryError("curvature must be finite and negative, got " + std::to_string(v));
    }
  }

  const T& value() const { return k_; }
  /// sqrt(-K), the inverse radius of curvature.
  T sqrt_neg() const {
    using std::sqrt;
    return sqrt(-k_);
  }
  /// 1/K, the Lorentzian self-product of every point on the sheet.
  T inverse() const { return 1.0 / k_; }

  bool same_as(const Curvature& o) const { return value_of(k_) == value_of(o.k_); }

 private:
  T k_;
};

template <Real T>
class LorentzPoint {
 public:
  /// Wraps ambient coordinates as given; use project_to_hyperboloid() to
  /// enforce the constraint on raw data.
  LorentzPoint(Vec<T> coords, Curvature<T> k) : coords_(std::move(coords)), k_(std::move(k)) {
    if (coords_.size() < 2) throw DimensionError("LorentzPoint needs at least 2 ambient coordinates");
  }

  const Vec<T>& coords() const { return coords_; }
  const T& time() const { return coords_[0]; }
  auto space() const { return coords_.tail(coords_.size() - 1); }
  /// Intrinsic dimension n (ambient size n+1).
  Eigen::Index dim() const { return coords_.size() - 1; }
  const Curvature<T>& curvature() const { return k_; }

 private:
  Vec<T> coords_;
  Curvature<T> k_;
};

struct AssumeTangent {};

template <Real T>
class TangentVector {
 public:
  /// Projects `v` onto the tangent space at `base` (v - K<base, v>_L base),
  /// absorbing drift from upstream arithmetic.
  TangentVector(LorentzPoint<T> base, Vec<T> v);
  /// For results that are tangent by construction.
  TangentVector(LorentzPoint<T> base, Vec<T> v, AssumeTangent) : base_(std::move(base)), coords_(std::move(v)) {}

  const LorentzPoint<T>& base() const { return base_; }
  const Vec<T>& coords() const { return coords_; }

 private:
  LorentzPoint<T> base_;
  Vec<T> coords_;
};

/// Non-empty list of points sharing one curvature and dimension.
template <Real T>
class PointBatch {
 public:
  explicit PointBatch(std::vector<LorentzPoint<T>> points) : points_(std::move(points)) {
    if (points_.empty()) throw DimensionError("PointBatch must be non-empty");
    const auto& first = points_.front();
    for (const auto& p : points_) {
      if (p.dim() != first.dim()) throw DimensionError("PointBatch: mixed dimensions");
      if (!p.curvature().same_as(first.curvature())) throw GeometryError("PointBatch: mixed curvatures");
    }
  }

  std::size_t size() const { return points_.size(); }
  const LorentzPoint<T>& operator[](std::size_t i) const { return points_[i]; }
  const std::vector<LorentzPoint<T>>& points() const { return points_; }
  const Curvature<T>& curvature() const { return points_.front().curvature(); }
  Eigen::Index dim() const { return points_.front().dim(); }
  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }

 private:
  std::vector<LorentzPoint<T>> points_;
};

// ---------------------------------------------------------------------------
// Checks

template <Real T>
void require_same_manifold(const LorentzPoint<T>& p, const LorentzPoint<T>& q, const char* op) {
  if (p.dim() != q.dim()) throw DimensionError(std::string(op) + ": dimension mismatch");
  if (!p.curvature().same_as(q.curvature())) throw GeometryError(std::string(op) + ": curvature mismatch");
}

template <Real T>
void require_finite(const Vec<T>& v, const char* op) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(value_of(v[i]))) throw NumericError(std::string(op) + ": non-finite input");
  }
}

// ---------------------------------------------------------------------------
// Metric

/// <p, q>_L = p_s . q_s - p_t q_t
template <Real T>
T lorentz_inner(const Vec<T>& p, const Vec<T>& q) {
  if (p.size() != q.size() || p.size() < 2) throw DimensionError("lorentz_inner: lengths must match and be >= 2");
  const Eigen::Index n = p.size() - 1;
  return p.tail(n).dot(q.tail(n)) - p[0] * q[0];
}

/// |<p, p>_L - 1/K|
template <Real T>
double constraint_residual(const LorentzPoint<T>& p) {
  const Vec<double> c = values_of(p.coords());
  return std::abs(lorentz_inner<double>(c, c) - 1.0 / value_of(p.curvature().value()));
}

template <Real T>
TangentVector<T>::TangentVector(LorentzPoint<T> base, Vec<T> v) : base_(std::move(base)) {
  if (v.size() != base_.coords().size()) throw DimensionError("TangentVector: length mismatch with base");
  const T c = base_.curvature().value() * lorentz_inner<T>(base_.coords(), v);
  coords_ = v - base_.coords() * c;
}

template <Real T>
LorentzPoint<T> origin(Eigen::Index n, const Curvature<T>& k) {
  using std::sqrt;
  Vec<T> c = Vec<T>::Zero(n + 1);
  c[0] = sqrt(-k.inverse());
  return LorentzPoint<T>(std::move(c), k);
}

/// Keeps the space part and recomputes p_t = sqrt(|p_s|^2 - 1/K).
template <Real T>
LorentzPoint<T> project_to_hyperboloid(const Vec<T>& raw, const Curvature<T>& k) {
  using std::sqrt;
  if (raw.size() < 2) throw DimensionError("project_to_hyperboloid: need at least 2 coordinates");
  const Eigen::Index n = raw.size() - 1;
  require_finite<T>(Vec<T>(raw.tail(n)), "project_to_hyperboloid");
  Vec<T> c(raw.size());
  c.tail(n) = raw.tail(n);
  c[0] = sqrt(raw.tail(n).squaredNorm() - k.inverse());
  return LorentzPoint<T>(std::move(c), k);
}

/// Builds a point from its space components.
template <Real T>
LorentzPoint<T> from_space(const Vec<T>& space, const Curvature<T>& k) {
  using std::sqrt;
  Vec<T> c(space.size() + 1);
  c.tail(space.size()) = space;
  c[0] = sqrt(space.squaredNorm() - k.inverse());
  return LorentzPoint<T>(std::move(c), k);
}

/// Squared geodesic distance; smooth at coincident points.
template <Real T>
T squared_distance(const LorentzPoint<T>& p, const LorentzPoint<T>& q) {
  require_same_manifold(p, q, "squared_distance");
  // With s = <q - p, q - p>_L = 2 (K<p,q>_L - 1) / K:  d^2 = s asinhc(sqrt(-K s / 4))^2.
  // Working from the difference avoids the cancellation in K<p,q>_L - 1
  // for nearby points far from the origin.
  const Vec<T> diff = q.coords() - p.coords();
  const T s = lorentz_inner<T>(diff, diff);
  if (value_of(s) <= 0.0) return T(0.0);
  const T a = smooth::asinhc_sqrt(T(-p.curvature().value() * s * 0.25));
  return s * a * a;
}

/// d(p, q) = acosh(K <p, q>_L) / sqrt(-K), argument clamped to >= 1.
template <Real T>
T geodesic_distance(const LorentzPoint<T>& p, const LorentzPoint<T>& q) {
  using std::asinh, std::sqrt;
  require_same_manifold(p, q, "geodesic_distance");
  // acosh(1 + e) = 2 asinh(sqrt(e / 2)) with e = -K s / 2; see squared_distance.
  const Vec<T> diff = q.coords() - p.coords();
  const T s = lorentz_inner<T>(diff, diff);
  if (value_of(s) <= 0.0) return T(0.0);
  const T& rk = p.curvature().sqrt_neg();
  return 2.0 * asinh(rk * sqrt(s) * 0.5) / rk;
}

// ---------------------------------------------------------------------------
// Exponential and logarithmic maps

/// exp_p(v) = cosh(a) p + sinh(a) v / a with a = sqrt(-K) |v|_L.
template <Real T>
LorentzPoint<T> exp_map(const LorentzPoint<T>& base, const TangentVector<T>& v) {
  require_same_manifold(base, v.base(), "exp_map");
  require_finite(v.coords(), "exp_map");
  const T& k = base.curvature().value();
  T z = -k * lorentz_inner<T>(v.coords(), v.coords());
  if (value_of(z) < 0.0) z = T(0.0);
  const Vec<T> c = base.coords() * smooth::cosh_sqrt(z) + v.coords() * smooth::sinhc_sqrt(z);
  // Recomputing the time component keeps far points on the sheet.
  return from_space<T>(Vec<T>(c.tail(c.size() - 1)), base.curvature());
}

template <Real T>
LorentzPoint<T> exp_map(const TangentVector<T>& v) {
  return exp_map(v.base(), v);
}

/// log_p(q) = acosh(b) / sqrt(b^2 - 1) (q - b p) with b = K <p, q>_L.
template <Real T>
TangentVector<T> log_map(const LorentzPoint<T>& base, const LorentzPoint<T>& q) {
  using std::sqrt;
  require_same_manifold(base, q, "log_map");
  // q - b p = diff - (b - 1) p with b - 1 = -K <diff, diff>_L / 2, and
  // acosh(b) / sqrt(b^2 - 1) = sqrt(2) asinhc(sqrt(e / 2)) / sqrt(2 + e), e = b - 1:
  // no cancellation when q is close to p, and smooth at q = p.
  const Vec<T> diff = q.coords() - base.coords();
  T e = -base.curvature().value() * lorentz_inner<T>(diff, diff) * 0.5;
  if (value_of(e) < 0.0) e = T(0.0);
  const T ratio = std::sqrt(2.0) * smooth::asinhc_sqrt(T(e * 0.5)) / sqrt(2.0 + e);
  Vec<T> v = (diff - base.coords() * e) * ratio;
  // Tangency by the time component alone: projecting along p would turn the
  // eps * t^2 constraint error of far points into a radial displacement.
  const Eigen::Index n = v.size() - 1;
  v[0] = v.tail(n).dot(base.coords().tail(n)) / base.coords()[0];
  return TangentVector<T>(base, std::move(v), AssumeTangent{});
}

/// exp at the origin for a Euclidean n-vector; lifts R^n to L^n_K.
template <Real T>
LorentzPoint<T> exp_map_origin(const Vec<T>& x, const Curvature<T>& k) {
  require_finite(x, "exp_map_origin");
  const T z = -k.value() * x.squaredNorm();
  Vec<T> c(x.size() + 1);
  c[0] = smooth::cosh_sqrt(z) / k.sqrt_neg();
  c.tail(x.size()) = x * smooth::sinhc_sqrt(z);
  return LorentzPoint<T>(std::move(c), k);
}

/// log at the origin, returned as the Euclidean n-vector of space components
/// (the time component of a tangent vector at the origin is zero).
template <Real T>
Vec<T> log_map_origin(const LorentzPoint<T>& p) {
  const Vec<T> s = p.space();
  const T z = -p.curvature().value() * s.squaredNorm();
  return s * smooth::asinhc_sqrt(z);
}

template <Real T>
TangentVector<T> origin_tangent(const LorentzPoint<T>& o, const Vec<T>& x) {
  Vec<T> c(x.size() + 1);
  c[0] = T(0.0);
  c.tail(x.size()) = x;
  return TangentVector<T>(o, std::move(c), AssumeTangent{});
}

// ---------------------------------------------------------------------------
// Transport and gyrovector structure

/// PT_{p->q}(v) = v - K<q, v>_L / (1 + K<p, q>_L) (p + q)
template <Real T>
TangentVector<T> parallel_transport(const LorentzPoint<T>& p, const LorentzPoint<T>& q, const TangentVector<T>& v) {
  require_same_manifold(p, q, "parallel_transport");
  require_same_manifold(p, v.base(), "parallel_transport");
  const T& k = p.curvature().value();
  const T num = k * lorentz_inner<T>(q.coords(), v.coords());
  const T den = 1.0 + k * lorentz_inner<T>(p.coords(), q.coords());
  Vec<T> out = v.coords() - (p.coords() + q.coords()) * (num / den);
  return TangentVector<T>(q, std::move(out));
}

/// (-)p = [p_t, -p_s]
template <Real T>
LorentzPoint<T> gyro_inverse(const LorentzPoint<T>& p) {
  Vec<T> c = -p.coords();
  c[0] = p.time();
  return LorentzPoint<T>(std::move(c), p.curvature());
}

/// p (+) q: carries log_o(q) to p by parallel transport and shoots the
/// geodesic from p. This is the gyro-translation by p, an isometry sending
/// the origin to p.
template <Real T>
LorentzPoint<T> gyro_add(const LorentzPoint<T>& p, const LorentzPoint<T>& q) {
  require_same_manifold(p, q, "gyro_add");
  const LorentzPoint<T> o = origin(p.dim(), p.curvature());
  const TangentVector<T> v = origin_tangent(o, log_map_origin(q));
  return exp_map(p, parallel_transport(o, p, v));
}

/// t (.) p = exp_o(t log_o(p))
template <Real T>
LorentzPoint<T> gyro_scale(const T& t, const LorentzPoint<T>& p) {
  require_finite<T>(Vec<T>::Constant(1, t), "gyro_scale");
  return exp_map_origin<T>(Vec<T>(log_map_origin(p) * t), p.curvature());
}

/// Point at fraction t along the geodesic from p to q.
template <Real T>
LorentzPoint<T> geodesic_interpolate(const LorentzPoint<T>& p, const LorentzPoint<T>& q, const T& t) {
  const TangentVector<T> v = log_map(p, q);
  return exp_map(p, TangentVector<T>(p, Vec<T>(v.coords() * t), AssumeTangent{}));
}

/// exp_o^{K_new}( sqrt(K_old / K_new) log_o^{K_old}(p) ): moves a point to a
/// manifold of another curvature, scaling radial distances by
/// sqrt(K_old / K_new) and keeping the direction.
template <Real T>
LorentzPoint<T> rescale_curvature(const LorentzPoint<T>& p, const Curvature<T>& k_new) {
  using std::sqrt;
  const T scale = sqrt(p.curvature().value() / k_new.value());
  return exp_map_origin<T>(Vec<T>(log_map_origin(p) * scale), k_new);
}

/// Converts a point between scalar types (e.g. detaching from the tape).
template <Real To, Real From>
LorentzPoint<To> cast_point(const LorentzPoint<From>& p) {
  Vec<To> c(p.coords().size());
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    if constexpr (std::is_same_v<To, double>) {
      c[i] = value_of(p.coords()[i]);
    } else {
      c[i] = To(p.coords()[i]);
    }
  }
  To k;
  if constexpr (std::is_same_v<To, double>) {
    k = value_of(p.curvature().value());
  } else {
    k = To(p.curvature().value());
  }
  return LorentzPoint<To>(std::move(c), Curvature<To>(k));
}

}  // namespace moce::lorentz
