#pragma once

// The mixture-of-curvature-experts classifier: one hyperbolic expert per
// modality, curvature-oriented fusion, and a hyperbolic MLR head. A
// Euclidean control with the same encoders and parameter shapes is selected
// by ModelSpec::variant.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "moce/fusion.hpp"
#include "moce/hbn.hpp"
#include "moce/layers.hpp"

namespace moce::model {

using layers::Activation;
using layers::Mode;
using lorentz::Curvature;
using lorentz::LorentzPoint;

enum class Variant { hyperbolic, euclidean };

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);

inline constexpr double kMinAbsCurvature = 0.1;
inline constexpr double kMaxAbsCurvature = 10.0;

/// Architecture and non-trainable settings.
struct ModelSpec {
  std::vector<std::string> modalities;  // sorted; fixes the canonical order
  std::vector<int> input_dims;
  int classes = 2;
  int d = 8;
  int hidden = 16;
  int layers = 2;
  int heads = 4;
  double tau0 = 1.0;
  double lambda_init = 0.3;
  std::vector<double> k_init;  // one per modality
  Activation activation = Activation::elu;
  Variant variant = Variant::hyperbolic;
  layers::HBNConfig hbn;
  frechet::FrechetConfig frechet;
  /// Assert manifold constraints after every pipeline stage.
  bool debug_checks = false;

  void validate() const;
  std::size_t modality_index(const std::string& name) const;
};

template <Real T>
struct ExpertParams {
  // Encoder: W2 tanh(W1 x + b1) + b2
  Mat<T> W1;
  Vec<T> b1;
  Mat<T> W2;
  Vec<T> b2;
  /// K = -clamp(exp(k_raw), 0.1, 10)
  T k_raw = T(0.0);
  T gamma = T(1.0);  // HBN scale
  layers::LorentzLinearParams<T> post;
};

template <Real T>
struct ModelParams {
  std::vector<ExpertParams<T>> experts;
  fusion::FusionParams<T> fusion;
  layers::HMLRParams<T> head;
};

template <Real T>
T curvature_from_raw(const T& raw) {
  using std::exp;
  const T e = exp(raw);
  if (value_of(e) < kMinAbsCurvature) return T(-kMinAbsCurvature);
  if (value_of(e) > kMaxAbsCurvature) return T(-kMaxAbsCurvature);
  return -e;
}

/// Calls f(path, tensor0, tensor1, ...) for every trainable tensor, with
/// the same field taken from each params object. Tensors are Mat<T>,
/// Vec<T> or scalar T.
template <class F, class P0, class... P>
void visit_params(const std::vector<std::string>& names, F&& f, P0& p0, P&... ps) {
  auto linear = [&](const std::string& pre, auto& l0, auto&... ls) {
    f(pre + ".W", l0.W, ls.W...);
    f(pre + ".b", l0.b, ls.b...);
  };
  for (std::size_t m = 0; m < p0.experts.size(); ++m) {
    const std::string pre = "experts." + (m < names.size() ? names[m] : std::to_string(m));
    f(pre + ".encoder.W1", p0.experts[m].W1, ps.experts[m].W1...);
    f(pre + ".encoder.b1", p0.experts[m].b1, ps.experts[m].b1...);
    f(pre + ".encoder.W2", p0.experts[m].W2, ps.experts[m].W2...);
    f(pre + ".encoder.b2", p0.experts[m].b2, ps.experts[m].b2...);
    f(pre + ".curvature_raw", p0.experts[m].k_raw, ps.experts[m].k_raw...);
    f(pre + ".hbn_gamma", p0.experts[m].gamma, ps.experts[m].gamma...);
    linear(pre + ".post", p0.experts[m].post, ps.experts[m].post...);
  }
  f(std::string("fusion.lambda_raw"), p0.fusion.lambda_raw, ps.fusion.lambda_raw...);
  for (std::size_t l = 0; l < p0.fusion.layers.size(); ++l) {
    const std::string pre = "fusion.layers[" + std::to_string(l) + "]";
    auto& L0 = p0.fusion.layers[l];
    for (std::size_t h = 0; h < L0.heads.size(); ++h) {
      const std::string hp = pre + ".heads[" + std::to_string(h) + "]";
      linear(hp + ".query", L0.heads[h].query, ps.fusion.layers[l].heads[h].query...);
      linear(hp + ".key", L0.heads[h].key, ps.fusion.layers[l].heads[h].key...);
      linear(hp + ".value", L0.heads[h].value, ps.fusion.layers[l].heads[h].value...);
    }
    f(pre + ".ln_scale", L0.ln_scale, ps.fusion.layers[l].ln_scale...);
    f(pre + ".ln_shift", L0.ln_shift, ps.fusion.layers[l].ln_shift...);
  }
  linear("fusion.output", p0.fusion.output, ps.fusion.output...);
  f(std::string("head.a"), p0.head.a, ps.head.a...);
  f(std::string("head.z"), p0.head.z, ps.head.z...);
}

/// Number of scalars in a tensor and access to the i-th one.
template <Real T>
Eigen::Index scalar_count(const T&) {
  return 1;
}
template <class Derived>
Eigen::Index scalar_count(const Eigen::DenseBase<Derived>& t) {
  return t.size();
}
template <Real T>
T& scalar_at(T& x, Eigen::Index) {
  return x;
}
template <Real T>
const T& scalar_at(const T& x, Eigen::Index) {
  return x;
}
template <class Derived>
auto& scalar_at(Eigen::PlainObjectBase<Derived>& t, Eigen::Index i) {
  return t.data()[i];
}
template <class Derived>
const auto& scalar_at(const Eigen::PlainObjectBase<Derived>& t, Eigen::Index i) {
  return t.data()[i];
}

/// Same structure with every scalar mapped through fn(double or Var).
template <Real To, Real From, class Fn>
ModelParams<To> map_params(const ModelParams<From>& p, Fn&& fn) {
  auto mat = [&](const Mat<From>& m) {
    Mat<To> out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i) out.data()[i] = fn(m.data()[i]);
    return out;
  };
  auto vec = [&](const Vec<From>& v) {
    Vec<To> out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = fn(v[i]);
    return out;
  };
  auto linear = [&](const layers::LorentzLinearParams<From>& l) {
    return layers::LorentzLinearParams<To>{mat(l.W), vec(l.b), l.activation};
  };
  ModelParams<To> out;
  for (const auto& e : p.experts) {
    out.experts.push_back({mat(e.W1), vec(e.b1), mat(e.W2), vec(e.b2), fn(e.k_raw), fn(e.gamma), linear(e.post)});
  }
  out.fusion.tau0 = p.fusion.tau0;
  out.fusion.eps_prior = p.fusion.eps_prior;
  out.fusion.lambda_raw = fn(p.fusion.lambda_raw);
  for (const auto& l : p.fusion.layers) {
    fusion::FusionLayerParams<To> lo;
    for (const auto& h : l.heads) lo.heads.push_back({linear(h.query), linear(h.key), linear(h.value)});
    lo.ln_scale = vec(l.ln_scale);
    lo.ln_shift = vec(l.ln_shift);
    out.fusion.layers.push_back(std::move(lo));
  }
  out.fusion.output = linear(p.fusion.output);
  out.head.a = vec(p.head.a);
  out.head.z = mat(p.head.z);
  return out;
}

std::size_t parameter_count(const ModelSpec& spec, const ModelParams<double>& p);
std::vector<double> flatten(const ModelSpec& spec, const ModelParams<double>& p);
void assign_flat(const ModelSpec& spec, ModelParams<double>& p, const std::vector<double>& flat);
/// Path of the parameter holding flat index i.
std::string parameter_path(const ModelSpec& spec, const ModelParams<double>& p, std::size_t i);

/// Per-domain running statistics of the Euclidean control's batch norm;
/// same momentum rules as HBN.
struct EuclideanBNState {
  struct Stats {
    Vec<double> mean;
    double variance;
  };
  Eigen::Index dim = 0;
  layers::HBNConfig config;
  std::map<int, Stats> domains;

  void update(int domain, const Vec<double>& mean, double var, double eta);
  Stats unseen_init() const;
};

struct ModelState {
  std::vector<layers::HBNState> hbn;
  std::vector<EuclideanBNState> ebn;
};

/// Largest constraint residual seen at each pipeline stage.
struct ForwardTrace {
  std::vector<std::pair<std::string, double>> stages;
  void record(const std::string& stage, double residual);
  double max_residual() const;
};

/// Manifold residual relative to the point's scale: |<p,p> - 1/K| / max(1, p_t^2).
template <Real T>
double relative_residual(const LorentzPoint<T>& p) {
  const double t = value_of(p.time());
  return lorentz::constraint_residual(p) / std::max(1.0, t * t);
}

inline constexpr double kDebugResidualTol = 1e-9;

/// inputs[m] holds one row per sample of the batch (all from `domain`).
/// Returns one logit vector per row. Train mode updates the running
/// statistics in `state`.
template <Real T>
std::vector<Vec<T>> forward(const ModelSpec& spec, const ModelParams<T>& params, ModelState& state,
                            const std::vector<Mat<double>>& inputs, int domain, Mode mode, int step,
                            ForwardTrace* trace = nullptr);

/// Encoder output of every row of `x`, lifted onto the expert's manifold.
template <Real T>
std::vector<LorentzPoint<T>> lift(const ExpertParams<T>& expert, const Mat<double>& x);

/// Output of one hyperbolic expert for every row of `x`.
template <Real T>
std::vector<LorentzPoint<T>> expert_forward(const ModelSpec& spec, const ModelParams<T>& params, ModelState& state,
                                            std::size_t m, const Mat<double>& x, int domain, Mode mode, int step,
                                            ForwardTrace* trace = nullptr);

/// Softmax cross-entropy.
template <Real T>
T cross_entropy(const Vec<T>& logits, int label) {
  using std::exp, std::log;
  if (label < 0 || label >= logits.size()) throw InputError("cross_entropy: label out of range");
  double top = -INFINITY;
  for (Eigen::Index c = 0; c < logits.size(); ++c) top = std::max(top, value_of(logits[c]));
  T sum(0.0);
  for (Eigen::Index c = 0; c < logits.size(); ++c) sum += exp(logits[c] - top);
  return log(sum) + top - logits[label];
}

struct MoceModel {
  ModelSpec spec;
  ModelParams<double> params;
  ModelState state;

  static MoceModel init(ModelSpec spec, std::uint64_t seed);

  std::vector<double> curvatures() const;
  double lambda() const;

  /// Clamps every k_raw into the curvature range and moves the HBN running
  /// statistics to the current curvatures. Call after each parameter update.
  void sync_curvatures();

  /// Eval-mode logits on a copy of the running state; `inputs` as in forward().
  std::vector<Vec<double>> logits(const std::vector<Mat<double>>& inputs, int domain) const;
};

/// Reorders named per-modality inputs into the model's canonical order.
std::vector<Mat<double>> canonical_inputs(const ModelSpec& spec, const std::vector<std::string>& names,
                                          const std::vector<Mat<double>>& mats);

}  // namespace moce::model
