#pragma once

// Curvature-oriented cross-modal fusion on a shared Lorentz manifold.

#include <algorithm>
#include <cmath>
#include <vector>

#include "moce/frechet.hpp"
#include "moce/layers.hpp"

namespace moce::fusion {

using layers::LorentzLinearParams;
using lorentz::Curvature;
using lorentz::LorentzPoint;

/// Arithmetic mean of the modality curvatures.
template <Real T>
Curvature<T> fusion_curvature(const std::vector<Curvature<T>>& ks) {
  if (ks.empty()) throw DimensionError("fusion_curvature: need at least one curvature");
  T sum(0.0);
  for (const auto& k : ks) sum += k.value();
  return Curvature<T>(sum / static_cast<double>(ks.size()));
}

/// exp_o^{K_f}( sqrt(K_m / K_f) log_o^{K_m}(z) )
template <Real T>
LorentzPoint<T> project_between_manifolds(const LorentzPoint<T>& z, const Curvature<T>& k_f) {
  return lorentz::rescale_curvature<T>(z, k_f);
}

/// tau0 / sqrt(|K|)
template <Real T>
T curvature_temperature(const Curvature<T>& k, double tau0) {
  if (!(tau0 > 0.0) || !std::isfinite(tau0)) throw ParameterError("curvature_temperature: tau0 must be > 0");
  return tau0 / k.sqrt_neg();
}

/// Softmax over j != m of -d^2(q, k_j) / tau_m + lambda log(|K_j| + eps),
/// the prior term only when apply_prior is set. `keys` and `curvatures`
/// are indexed by modality; the result has one entry per j != m, in order.
template <Real T>
std::vector<T> attention_weights(std::size_t m, const LorentzPoint<T>& query, const std::vector<LorentzPoint<T>>& keys,
                                 const std::vector<Curvature<T>>& curvatures, double tau0, const T& lambda,
                                 double eps_prior, bool apply_prior) {
  using std::exp, std::log;
  if (keys.size() != curvatures.size()) throw DimensionError("attention_weights: one curvature per key required");
  if (m >= keys.size()) throw DimensionError("attention_weights: query modality out of range");
  if (keys.size() < 2) throw DimensionError("attention_weights: no key besides the query modality");
  const T tau = curvature_temperature(curvatures[m], tau0);
  std::vector<T> logits;
  logits.reserve(keys.size() - 1);
  for (std::size_t j = 0; j < keys.size(); ++j) {
    if (j == m) continue;
    T s = -lorentz::squared_distance(query, keys[j]) / tau;
    if (apply_prior) s += lambda * log(-curvatures[j].value() + eps_prior);
    logits.push_back(s);
  }
  double top = -INFINITY;
  for (const T& s : logits) top = std::max(top, value_of(s));
  T total(0.0);
  for (T& s : logits) {
    s = exp(s - top);
    total += s;
  }
  for (T& s : logits) s = s / total;
  return logits;
}

template <Real T>
struct HeadParams {
  LorentzLinearParams<T> query;
  LorentzLinearParams<T> key;
  LorentzLinearParams<T> value;
};

template <Real T>
struct FusionLayerParams {
  std::vector<HeadParams<T>> heads;
  Vec<T> ln_scale;
  Vec<T> ln_shift;
};

template <Real T>
struct FusionParams {
  double tau0 = 1.0;
  double eps_prior = 1e-6;
  /// lambda = softplus(lambda_raw)
  T lambda_raw = T(0.0);
  std::vector<FusionLayerParams<T>> layers;
  /// Applied after pooling.
  LorentzLinearParams<T> output;

  T lambda() const { return softplus(lambda_raw); }
};

/// One cross-attention layer. Each modality queries the others per head;
/// a head's output is the attention-weighted Frechet mean of the values,
/// heads are merged by a uniform Frechet mean, and the result is layer
/// normalized. `reps` live on the fusion manifold, `curvatures` are the
/// modality curvatures (temperature and prior).
template <Real T>
std::vector<LorentzPoint<T>> cross_attention_layer(const std::vector<LorentzPoint<T>>& reps,
                                                   const std::vector<Curvature<T>>& curvatures,
                                                   const FusionParams<T>& params, std::size_t layer,
                                                   const frechet::FrechetConfig& fcfg) {
  if (reps.size() < 2) throw DimensionError("cross_attention_layer: need at least two modalities");
  if (layer >= params.layers.size()) throw DimensionError("cross_attention_layer: layer index out of range");
  const FusionLayerParams<T>& lp = params.layers[layer];
  if (lp.heads.empty()) throw DimensionError("cross_attention_layer: need at least one head");
  const std::size_t n_mod = reps.size();
  const bool prior = layer == 0;
  const T lambda = params.lambda();

  // head -> modality -> projected point
  std::vector<std::vector<LorentzPoint<T>>> q(lp.heads.size()), k(lp.heads.size()), v(lp.heads.size());
  for (std::size_t h = 0; h < lp.heads.size(); ++h) {
    for (const auto& r : reps) {
      q[h].push_back(layers::lorentz_linear(r, lp.heads[h].query));
      k[h].push_back(layers::lorentz_linear(r, lp.heads[h].key));
      v[h].push_back(layers::lorentz_linear(r, lp.heads[h].value));
    }
  }

  std::vector<LorentzPoint<T>> out;
  out.reserve(n_mod);
  for (std::size_t m = 0; m < n_mod; ++m) {
    std::vector<LorentzPoint<T>> head_out;
    head_out.reserve(lp.heads.size());
    for (std::size_t h = 0; h < lp.heads.size(); ++h) {
      const std::vector<T> w =
          attention_weights<T>(m, q[h][m], k[h], curvatures, params.tau0, lambda, params.eps_prior, prior);
      std::vector<LorentzPoint<T>> vals;
      vals.reserve(n_mod - 1);
      for (std::size_t j = 0; j < n_mod; ++j) {
        if (j != m) vals.push_back(v[h][j]);
      }
      if (vals.size() == 1) {
        head_out.push_back(vals.front());
      } else {
        head_out.push_back(frechet::weighted_frechet_mean<T>(lorentz::PointBatch<T>(std::move(vals)), w, fcfg));
      }
    }
    const LorentzPoint<T> merged = head_out.size() == 1
                                       ? head_out.front()
                                       : frechet::frechet_mean<T>(lorentz::PointBatch<T>(std::move(head_out)), fcfg);
    out.push_back(layers::hyperbolic_layer_norm<T>(merged, lp.ln_scale, lp.ln_shift));
  }
  return out;
}

/// Projects modality representations to the fusion manifold (mean
/// curvature), runs every fusion layer (prior in the first only), pools by
/// a uniform Frechet mean and applies the output Lorentz linear map.
template <Real T>
LorentzPoint<T> fuse(const std::vector<LorentzPoint<T>>& reps, const FusionParams<T>& params,
                     const frechet::FrechetConfig& fcfg) {
  if (reps.empty()) throw DimensionError("fuse: need at least one modality");
  std::vector<Curvature<T>> ks;
  ks.reserve(reps.size());
  for (const auto& r : reps) ks.push_back(r.curvature());
  const Curvature<T> k_f = fusion_curvature(ks);
  std::vector<LorentzPoint<T>> cur;
  cur.reserve(reps.size());
  for (const auto& r : reps) cur.push_back(project_between_manifolds(r, k_f));
  for (std::size_t l = 0; l < params.layers.size(); ++l) cur = cross_attention_layer<T>(cur, ks, params, l, fcfg);
  const LorentzPoint<T> pooled = frechet::frechet_mean<T>(lorentz::PointBatch<T>(std::move(cur)), fcfg);
  return layers::lorentz_linear(pooled, params.output);
}

}  // namespace moce::fusion
