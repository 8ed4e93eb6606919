#pragma once

// Manifold-preserving layers on the Lorentz model.

#include <string>
#include <vector>

#include "moce/lorentz.hpp"

namespace moce::layers {

using lorentz::Curvature;
using lorentz::LorentzPoint;

enum class Activation { none, relu, elu };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

template <Real T>
Vec<T> apply_activation(const Vec<T>& x, Activation a) {
  switch (a) {
    case Activation::none:
      return x;
    case Activation::relu:
      return x.unaryExpr([](const T& v) { return relu(v); });
    case Activation::elu:
      return x.unaryExpr([](const T& v) { return elu(v); });
  }
  return x;
}

/// W is d' x (n+1) and acts on the full ambient vector.
template <Real T>
struct LorentzLinearParams {
  Mat<T> W;
  Vec<T> b;
  Activation activation = Activation::none;

  Eigen::Index in_dim() const { return W.cols() - 1; }
  Eigen::Index out_dim() const { return W.rows(); }
};

/// Space part psi(W p + b); time part rebuilt as sqrt(|.|^2 - 1/K).
template <Real T>
LorentzPoint<T> lorentz_linear(const LorentzPoint<T>& p, const LorentzLinearParams<T>& params) {
  if (params.W.cols() != p.coords().size()) throw DimensionError("lorentz_linear: W must have n+1 columns");
  if (params.b.size() != params.W.rows()) throw DimensionError("lorentz_linear: bias length must equal rows of W");
  const Vec<T> s = apply_activation<T>(Vec<T>(params.W * p.coords() + params.b), params.activation);
  return lorentz::from_space<T>(s, p.curvature());
}

/// Activation on the space components only.
template <Real T>
LorentzPoint<T> lorentz_activation(const LorentzPoint<T>& p, Activation a) {
  if (a == Activation::none) return p;
  return lorentz::from_space<T>(apply_activation<T>(Vec<T>(p.space()), a), p.curvature());
}

/// Direct concatenation: stacked space parts, time sqrt(sum p_t^2 + (N-1)/K).
template <Real T>
LorentzPoint<T> hyperbolic_concat(const std::vector<LorentzPoint<T>>& points) {
  using std::sqrt;
  if (points.empty()) throw DimensionError("hyperbolic_concat: need at least one point");
  const auto& first = points.front();
  const Eigen::Index n = first.dim();
  const auto count = static_cast<Eigen::Index>(points.size());
  Vec<T> c(n * count + 1);
  T time_sq(0.0);
  for (Eigen::Index i = 0; i < count; ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    lorentz::require_same_manifold(first, p, "hyperbolic_concat");
    time_sq += p.time() * p.time();
    c.segment(1 + i * n, n) = p.space();
  }
  c[0] = sqrt(time_sq + static_cast<double>(count - 1) * first.curvature().inverse());
  return LorentzPoint<T>(std::move(c), first.curvature());
}

inline constexpr double kLayerNormEps = 1e-5;

/// Standardizes the space coordinates, applies scale/shift, rebuilds time.
template <Real T>
LorentzPoint<T> hyperbolic_layer_norm(const LorentzPoint<T>& p, const Vec<T>& scale, const Vec<T>& shift) {
  using std::sqrt;
  const Eigen::Index n = p.dim();
  if (n < 2) throw DimensionError("hyperbolic_layer_norm: need n >= 2");
  if (scale.size() != n || shift.size() != n) throw DimensionError("hyperbolic_layer_norm: affine length mismatch");
  const Vec<T> s = p.space();
  const T mean = s.sum() / static_cast<double>(n);
  const Vec<T> centered = s.array() - mean;
  const T var = centered.squaredNorm() / static_cast<double>(n);
  const Vec<T> out = (centered / sqrt(var + kLayerNormEps)).cwiseProduct(scale) + shift;
  return lorentz::from_space<T>(out, p.curvature());
}

/// Per class c: offset a_c and direction z_c (row c of z).
template <Real T>
struct HMLRParams {
  Vec<T> a;
  Mat<T> z;

  Eigen::Index classes() const { return a.size(); }
};

/// Signed geodesic distance of p to each class hyperplane, scaled by beta_c:
///   alpha_c = cosh(sqrt(-K) a_c) <z_c, p_s> - sinh(sqrt(-K) a_c) |z_c| p_t
///   beta_c  = sqrt(|cosh(sqrt(-K) a_c) z_c|^2 - (sinh(sqrt(-K) a_c) |z_c|)^2) = |z_c|
///   l_c     = beta_c / sqrt(-K) * asinh(sqrt(-K) alpha_c / beta_c)
template <Real T>
Vec<T> hmlr_logits(const LorentzPoint<T>& p, const HMLRParams<T>& params) {
  using std::asinh, std::cosh, std::sinh, std::sqrt;
  if (params.z.cols() != p.dim() || params.z.rows() != params.a.size()) {
    throw DimensionError("hmlr_logits: direction matrix must be C x n");
  }
  const T sk = p.curvature().sqrt_neg();
  Vec<T> out(params.a.size());
  for (Eigen::Index c = 0; c < params.a.size(); ++c) {
    const Vec<T> zc = params.z.row(c).transpose();
    const T znorm_sq = zc.squaredNorm();
    if (!(value_of(znorm_sq) > 0.0) || !std::isfinite(value_of(znorm_sq))) {
      throw ParameterError("hmlr_logits: class direction must be non-zero and finite");
    }
    // cosh^2 - sinh^2 = 1, so beta_c is exactly |z_c|.
    const T beta = sqrt(znorm_sq);
    const T ang = sk * params.a[c];
    const T alpha = cosh(ang) * zc.dot(p.space()) - sinh(ang) * beta * p.time();
    out[c] = beta / sk * asinh(sk * alpha / beta);
  }
  return out;
}

}  // namespace moce::layers
