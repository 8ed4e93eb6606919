#include "moce/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "moce/errors.hpp"

namespace moce::model {

using layers::LorentzLinearParams;
using lorentz::PointBatch;

Variant parse_variant(const std::string& name) {
  if (name == "hyperbolic") return Variant::hyperbolic;
  if (name == "euclidean") return Variant::euclidean;
  throw InputError("unknown model variant '" + name + "' (expected hyperbolic or euclidean)");
}

std::string to_string(Variant v) { return v == Variant::hyperbolic ? "hyperbolic" : "euclidean"; }

void ModelSpec::validate() const {
  if (modalities.empty()) throw InputError("model: need at least one modality");
  if (!std::is_sorted(modalities.begin(), modalities.end()) ||
      std::adjacent_find(modalities.begin(), modalities.end()) != modalities.end()) {
    throw InputError("model: modality names must be unique and sorted");
  }
  if (input_dims.size() != modalities.size()) throw InputError("model: one input dim per modality required");
  for (int dim : input_dims) {
    if (dim < 1) throw InputError("model: input dims must be >= 1");
  }
  if (k_init.size() != modalities.size()) throw InputError("model: one initial curvature per modality required");
  for (double k : k_init) {
    if (!(k <= -kMinAbsCurvature && k >= -kMaxAbsCurvature)) {
      throw InputError("model: initial curvatures must lie in [-10, -0.1]");
    }
  }
  if (classes < 2) throw InputError("model: classes must be >= 2");
  if (d < 2) throw InputError("model: d must be >= 2");
  if (hidden < 1) throw InputError("model: hidden must be >= 1");
  if (layers < 0) throw InputError("model: layers must be >= 0");
  if (heads < 1) throw InputError("model: heads must be >= 1");
  if (layers > 0 && modalities.size() < 2) throw InputError("model: fusion layers need at least two modalities");
  if (!(tau0 > 0.0) || !std::isfinite(tau0)) throw InputError("model: tau0 must be > 0");
  if (!(lambda_init > 0.0) || !std::isfinite(lambda_init)) throw InputError("model: lambda_init must be > 0");
  hbn.validate();
}

std::size_t ModelSpec::modality_index(const std::string& name) const {
  const auto it = std::lower_bound(modalities.begin(), modalities.end(), name);
  if (it == modalities.end() || *it != name) throw InputError("model has no modality '" + name + "'");
  return static_cast<std::size_t>(it - modalities.begin());
}

std::size_t parameter_count(const ModelSpec& spec, const ModelParams<double>& p) {
  std::size_t n = 0;
  visit_params(spec.modalities, [&](const std::string&, const auto& t) { n += scalar_count(t); }, p);
  return n;
}

std::vector<double> flatten(const ModelSpec& spec, const ModelParams<double>& p) {
  std::vector<double> out;
  visit_params(
      spec.modalities,
      [&](const std::string&, const auto& t) {
        for (Eigen::Index i = 0; i < scalar_count(t); ++i) out.push_back(scalar_at(t, i));
      },
      p);
  return out;
}

void assign_flat(const ModelSpec& spec, ModelParams<double>& p, const std::vector<double>& flat) {
  if (flat.size() != parameter_count(spec, p)) throw DimensionError("assign_flat: length mismatch");
  std::size_t k = 0;
  visit_params(
      spec.modalities,
      [&](const std::string&, auto& t) {
        for (Eigen::Index i = 0; i < scalar_count(t); ++i) scalar_at(t, i) = flat[k++];
      },
      p);
}

std::string parameter_path(const ModelSpec& spec, const ModelParams<double>& p, std::size_t i) {
  std::string found;
  std::size_t k = 0;
  visit_params(
      spec.modalities,
      [&](const std::string& path, const auto& t) {
        const auto n = static_cast<std::size_t>(scalar_count(t));
        if (found.empty() && i < k + n) found = path + "[" + std::to_string(i - k) + "]";
        k += n;
      },
      p);
  if (found.empty()) throw DimensionError("parameter_path: index out of range");
  return found;
}

void EuclideanBNState::update(int domain, const Vec<double>& mean, double var, double eta) {
  const auto it = domains.find(domain);
  if (it == domains.end()) {
    domains.emplace(domain, Stats{mean, var});
    return;
  }
  it->second.mean = (1.0 - eta) * it->second.mean + eta * mean;
  it->second.variance = (1.0 - eta) * it->second.variance + eta * var;
}

EuclideanBNState::Stats EuclideanBNState::unseen_init() const {
  if (domains.empty()) return {Vec<double>::Zero(dim), 1.0};
  Stats s{Vec<double>::Zero(dim), 0.0};
  for (const auto& [id, st] : domains) {
    s.mean += st.mean;
    s.variance += st.variance;
  }
  const auto n = static_cast<double>(domains.size());
  s.mean /= n;
  s.variance /= n;
  return s;
}

void ForwardTrace::record(const std::string& stage, double residual) {
  for (auto& [name, r] : stages) {
    if (name == stage) {
      r = std::max(r, residual);
      return;
    }
  }
  stages.emplace_back(stage, residual);
}

double ForwardTrace::max_residual() const {
  double r = 0.0;
  for (const auto& s : stages) r = std::max(r, s.second);
  return r;
}

namespace {

template <Real T>
void check_stage(const ModelSpec& spec, ForwardTrace* trace, const std::string& stage,
                 const std::vector<LorentzPoint<T>>& points) {
  if (!spec.debug_checks && trace == nullptr) return;
  double worst = 0.0;
  for (const auto& p : points) worst = std::max(worst, relative_residual(p));
  if (trace) trace->record(stage, worst);
  if (spec.debug_checks && !(worst <= kDebugResidualTol)) {
    throw GeometryError("manifold constraint violated after stage '" + stage + "' (relative residual " +
                        std::to_string(worst) + ")");
  }
}

template <Real T>
Vec<T> encode(const ExpertParams<T>& e, const Vec<double>& x) {
  using std::tanh;
  if (x.size() != e.W1.cols()) {
    throw DimensionError("encoder expects " + std::to_string(e.W1.cols()) + " input features, got " +
                         std::to_string(x.size()));
  }
  const Vec<T> h = (e.W1 * x.cast<T>() + e.b1).unaryExpr([](const T& v) { return T(tanh(v)); });
  return e.W2 * h + e.b2;
}

template <Real T>
std::vector<Vec<T>> encode_rows(const ExpertParams<T>& e, const Mat<double>& x) {
  std::vector<Vec<T>> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) out.push_back(encode(e, Vec<double>(x.row(r).transpose())));
  return out;
}

// ---- Euclidean control ---------------------------------------------------

template <Real T>
Vec<T> euclid_linear(const Vec<T>& x, const LorentzLinearParams<T>& p) {
  if (p.W.cols() != x.size() + 1) throw DimensionError("euclidean linear: W must have n+1 columns");
  Vec<T> aug(x.size() + 1);
  aug[0] = T(1.0);
  aug.tail(x.size()) = x;
  return layers::apply_activation<T>(Vec<T>(p.W * aug + p.b), p.activation);
}

template <Real T>
Vec<T> euclid_layer_norm(const Vec<T>& x, const Vec<T>& scale, const Vec<T>& shift) {
  using std::sqrt;
  const auto n = static_cast<double>(x.size());
  T mean(0.0);
  for (Eigen::Index i = 0; i < x.size(); ++i) mean += x[i];
  mean = mean / n;
  T var(0.0);
  for (Eigen::Index i = 0; i < x.size(); ++i) var += (x[i] - mean) * (x[i] - mean);
  var = var / n;
  const T inv = 1.0 / sqrt(var + layers::kLayerNormEps);
  Vec<T> out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = scale[i] * (x[i] - mean) * inv + shift[i];
  return out;
}

template <Real T>
std::vector<Vec<T>> ebn_forward(const std::vector<Vec<T>>& batch, int domain, EuclideanBNState& state,
                                const T& gamma, Mode mode, int step) {
  using std::sqrt;
  const auto n = static_cast<double>(batch.size());
  const double eps = state.config.eps;
  auto normalize = [&](const Vec<T>& mu, const T& var) {
    const T scale = gamma / sqrt(var + eps);
    std::vector<Vec<T>> out;
    for (const auto& x : batch) out.push_back((x - mu) * scale);
    return out;
  };
  if (mode == Mode::train) {
    Vec<T> mu = Vec<T>::Zero(batch.front().size());
    for (const auto& x : batch) mu += x;
    mu = mu / n;
    T var(0.0);
    for (const auto& x : batch) var += (x - mu).squaredNorm();
    var = var / n;
    auto out = normalize(mu, var);
    state.update(domain, values_of(mu), value_of(var), state.config.momentum(step));
    return out;
  }
  Vec<double> mu = Vec<double>::Zero(batch.front().size());
  for (const auto& x : batch) mu += values_of(x);
  mu /= n;
  double var = 0.0;
  for (const auto& x : batch) var += (values_of(x) - mu).squaredNorm();
  var /= n;
  if (!state.domains.count(domain)) state.domains.emplace(domain, state.unseen_init());
  state.update(domain, mu, var, state.config.eta_test);
  const auto& s = state.domains.at(domain);
  return normalize(s.mean.cast<T>(), T(s.variance));
}

template <Real T>
std::vector<Vec<T>> euclid_attention_layer(const std::vector<Vec<T>>& reps, const fusion::FusionLayerParams<T>& lp) {
  using std::exp, std::sqrt;
  const std::size_t M = reps.size();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(reps.front().size()));
  std::vector<Vec<T>> out;
  for (std::size_t m = 0; m < M; ++m) {
    Vec<T> merged = Vec<T>::Zero(reps.front().size());
    for (const auto& head : lp.heads) {
      const Vec<T> q = euclid_linear(reps[m], head.query);
      std::vector<T> logits;
      std::vector<Vec<T>> values;
      double top = -INFINITY;
      for (std::size_t j = 0; j < M; ++j) {
        if (j == m) continue;
        const T s = q.dot(euclid_linear(reps[j], head.key)) * inv_sqrt_d;
        top = std::max(top, value_of(s));
        logits.push_back(s);
        values.push_back(euclid_linear(reps[j], head.value));
      }
      T z(0.0);
      for (auto& l : logits) {
        l = exp(l - top);
        z += l;
      }
      Vec<T> h = Vec<T>::Zero(values.front().size());
      for (std::size_t j = 0; j < values.size(); ++j) h += values[j] * (logits[j] / z);
      merged += h;
    }
    merged = merged / static_cast<double>(lp.heads.size());
    out.push_back(euclid_layer_norm(merged, lp.ln_scale, lp.ln_shift));
  }
  return out;
}

template <Real T>
std::vector<Vec<T>> forward_euclidean(const ModelSpec& spec, const ModelParams<T>& params, ModelState& state,
                                      const std::vector<Mat<double>>& inputs, int domain, Mode mode, int step) {
  const std::size_t M = spec.modalities.size();
  const auto rows = static_cast<std::size_t>(inputs.front().rows());
  // reps[m][i]
  std::vector<std::vector<Vec<T>>> reps(M);
  for (std::size_t m = 0; m < M; ++m) {
    const auto& e = params.experts[m];
    auto normed = ebn_forward<T>(encode_rows(e, inputs[m]), domain, state.ebn[m], e.gamma, mode, step);
    for (auto& x : normed) {
      x = layers::apply_activation<T>(x, spec.activation);
      reps[m].push_back(euclid_linear(x, e.post));
    }
  }
  std::vector<Vec<T>> out;
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<Vec<T>> cur;
    for (std::size_t m = 0; m < M; ++m) cur.push_back(reps[m][i]);
    for (const auto& lp : params.fusion.layers) cur = euclid_attention_layer(cur, lp);
    Vec<T> pooled = Vec<T>::Zero(cur.front().size());
    for (const auto& c : cur) pooled += c;
    pooled = pooled / static_cast<double>(cur.size());
    const Vec<T> fused = euclid_linear(pooled, params.fusion.output);
    Vec<T> logits(params.head.a.size());
    for (Eigen::Index c = 0; c < logits.size(); ++c) {
      logits[c] = params.head.z.row(c).dot(fused) + params.head.a[c];
    }
    out.push_back(std::move(logits));
  }
  return out;
}

void check_inputs(const ModelSpec& spec, const std::vector<Mat<double>>& inputs) {
  if (inputs.size() != spec.modalities.size()) {
    throw DimensionError("model expects " + std::to_string(spec.modalities.size()) + " modalities, got " +
                         std::to_string(inputs.size()));
  }
  for (std::size_t m = 0; m < inputs.size(); ++m) {
    if (inputs[m].cols() != spec.input_dims[m]) {
      throw DimensionError("modality '" + spec.modalities[m] + "' expects " + std::to_string(spec.input_dims[m]) +
                           " features, got " + std::to_string(inputs[m].cols()));
    }
    if (inputs[m].rows() != inputs.front().rows()) throw DimensionError("modalities differ in row count");
    if (!inputs[m].allFinite()) throw InputError("modality '" + spec.modalities[m] + "' has non-finite inputs");
  }
  if (inputs.front().rows() == 0) throw InputError("empty batch");
}

}  // namespace

template <Real T>
std::vector<LorentzPoint<T>> lift(const ExpertParams<T>& expert, const Mat<double>& x) {
  const Curvature<T> k(curvature_from_raw(expert.k_raw));
  std::vector<LorentzPoint<T>> out;
  for (const auto& v : encode_rows(expert, x)) out.push_back(lorentz::exp_map_origin<T>(v, k));
  return out;
}

template <Real T>
std::vector<LorentzPoint<T>> expert_forward(const ModelSpec& spec, const ModelParams<T>& params, ModelState& state,
                                            std::size_t m, const Mat<double>& x, int domain, Mode mode, int step,
                                            ForwardTrace* trace) {
  const ExpertParams<T>& e = params.experts.at(m);
  const Curvature<T> k(curvature_from_raw(e.k_raw));
  layers::HBNState& hbn = state.hbn.at(m);
  if (hbn.curvature().value() != value_of(k.value())) hbn.rescale_curvature(Curvature<double>(value_of(k.value())));
  const std::string tag = spec.modalities[m] + ".";

  std::vector<LorentzPoint<T>> lifted = lift(e, x);
  check_stage(spec, trace, tag + "lift", lifted);

  auto normed = layers::hbn_forward<T>(PointBatch<T>(std::move(lifted)), domain, hbn, e.gamma, mode, step, spec.frechet);
  check_stage(spec, trace, tag + "hbn", normed);

  std::vector<LorentzPoint<T>> out;
  out.reserve(normed.size());
  for (const auto& p : normed) {
    const LorentzPoint<T> a = layers::lorentz_activation(p, spec.activation);
    out.push_back(layers::lorentz_linear(layers::hyperbolic_concat<T>({a}), e.post));
  }
  check_stage(spec, trace, tag + "expert", out);
  return out;
}

template <Real T>
std::vector<Vec<T>> forward(const ModelSpec& spec, const ModelParams<T>& params, ModelState& state,
                            const std::vector<Mat<double>>& inputs, int domain, Mode mode, int step,
                            ForwardTrace* trace) {
  check_inputs(spec, inputs);
  if (spec.variant == Variant::euclidean) return forward_euclidean(spec, params, state, inputs, domain, mode, step);

  const std::size_t M = spec.modalities.size();
  const auto rows = static_cast<std::size_t>(inputs.front().rows());
  std::vector<std::vector<LorentzPoint<T>>> reps;
  std::vector<Curvature<T>> ks;
  for (std::size_t m = 0; m < M; ++m) {
    reps.push_back(expert_forward(spec, params, state, m, inputs[m], domain, mode, step, trace));
    ks.push_back(Curvature<T>(curvature_from_raw(params.experts[m].k_raw)));
  }
  const Curvature<T> k_f = fusion::fusion_curvature(ks);

  std::vector<Vec<T>> out;
  out.reserve(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<LorentzPoint<T>> cur;
    for (std::size_t m = 0; m < M; ++m) cur.push_back(fusion::project_between_manifolds(reps[m][i], k_f));
    check_stage(spec, trace, "fusion.project", cur);
    for (std::size_t l = 0; l < params.fusion.layers.size(); ++l) {
      cur = fusion::cross_attention_layer<T>(cur, ks, params.fusion, l, spec.frechet);
      check_stage(spec, trace, "fusion.layer" + std::to_string(l), cur);
    }
    const LorentzPoint<T> pooled = frechet::frechet_mean<T>(PointBatch<T>(std::move(cur)), spec.frechet);
    const LorentzPoint<T> fused = layers::lorentz_linear(pooled, params.fusion.output);
    check_stage(spec, trace, "fusion.output", std::vector<LorentzPoint<T>>{pooled, fused});
    out.push_back(layers::hmlr_logits(fused, params.head));
  }
  return out;
}

template std::vector<Vec<double>> forward(const ModelSpec&, const ModelParams<double>&, ModelState&,
                                          const std::vector<Mat<double>>&, int, Mode, int, ForwardTrace*);
template std::vector<Vec<ad::Var>> forward(const ModelSpec&, const ModelParams<ad::Var>&, ModelState&,
                                           const std::vector<Mat<double>>&, int, Mode, int, ForwardTrace*);
template std::vector<LorentzPoint<double>> lift(const ExpertParams<double>&, const Mat<double>&);
template std::vector<LorentzPoint<ad::Var>> lift(const ExpertParams<ad::Var>&, const Mat<double>&);
template std::vector<LorentzPoint<double>> expert_forward(const ModelSpec&, const ModelParams<double>&, ModelState&,
                                                          std::size_t, const Mat<double>&, int, Mode, int,
                                                          ForwardTrace*);
template std::vector<LorentzPoint<ad::Var>> expert_forward(const ModelSpec&, const ModelParams<ad::Var>&, ModelState&,
                                                           std::size_t, const Mat<double>&, int, Mode, int,
                                                           ForwardTrace*);

MoceModel MoceModel::init(ModelSpec spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  auto gauss = [&](Eigen::Index r, Eigen::Index c, double sd) {
    Mat<double> m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = sd * nd(rng);
    return m;
  };
  const Eigen::Index d = spec.d;
  // Near-identity map on the space part: [0 | I] plus small noise.
  auto near_identity = [&]() {
    LorentzLinearParams<double> l;
    l.W = gauss(d, d + 1, 0.1 / std::sqrt(static_cast<double>(d)));
    l.W.rightCols(d) += Mat<double>::Identity(d, d);
    l.b = Vec<double>::Zero(d);
    return l;
  };

  MoceModel model;
  for (std::size_t m = 0; m < spec.modalities.size(); ++m) {
    ExpertParams<double> e;
    e.W1 = gauss(spec.hidden, spec.input_dims[m], 1.0 / std::sqrt(static_cast<double>(spec.input_dims[m])));
    e.b1 = Vec<double>::Zero(spec.hidden);
    e.W2 = gauss(d, spec.hidden, 1.0 / std::sqrt(static_cast<double>(spec.hidden)));
    e.b2 = Vec<double>::Zero(d);
    e.k_raw = std::log(-spec.k_init[m]);
    e.gamma = 1.0;
    e.post = near_identity();
    model.params.experts.push_back(std::move(e));
  }
  model.params.fusion.tau0 = spec.tau0;
  model.params.fusion.lambda_raw = std::log(std::expm1(spec.lambda_init));
  for (int l = 0; l < spec.layers; ++l) {
    fusion::FusionLayerParams<double> lp;
    for (int h = 0; h < spec.heads; ++h) lp.heads.push_back({near_identity(), near_identity(), near_identity()});
    lp.ln_scale = Vec<double>::Ones(d);
    lp.ln_shift = Vec<double>::Zero(d);
    model.params.fusion.layers.push_back(std::move(lp));
  }
  model.params.fusion.output = near_identity();
  model.params.head.a = Vec<double>::Zero(spec.classes);
  model.params.head.z = gauss(spec.classes, d, 1.0 / std::sqrt(static_cast<double>(d)));

  for (std::size_t m = 0; m < spec.modalities.size(); ++m) {
    model.state.hbn.emplace_back(d, Curvature<double>(curvature_from_raw(model.params.experts[m].k_raw)), spec.hbn);
    model.state.ebn.push_back(EuclideanBNState{d, spec.hbn, {}});
  }
  model.spec = std::move(spec);
  return model;
}

std::vector<double> MoceModel::curvatures() const {
  std::vector<double> out;
  for (const auto& e : params.experts) out.push_back(curvature_from_raw(e.k_raw));
  return out;
}

double MoceModel::lambda() const { return params.fusion.lambda(); }

void MoceModel::sync_curvatures() {
  const double lo = std::log(kMinAbsCurvature), hi = std::log(kMaxAbsCurvature);
  for (std::size_t m = 0; m < params.experts.size(); ++m) {
    auto& e = params.experts[m];
    e.k_raw = std::clamp(e.k_raw, lo, hi);
    const double k = curvature_from_raw(e.k_raw);
    if (state.hbn[m].curvature().value() != k) state.hbn[m].rescale_curvature(Curvature<double>(k));
  }
}

std::vector<Vec<double>> MoceModel::logits(const std::vector<Mat<double>>& inputs, int domain) const {
  ModelState copy = state;
  return forward<double>(spec, params, copy, inputs, domain, Mode::eval, 0);
}

std::vector<Mat<double>> canonical_inputs(const ModelSpec& spec, const std::vector<std::string>& names,
                                          const std::vector<Mat<double>>& mats) {
  if (names.size() != mats.size()) throw DimensionError("canonical_inputs: one matrix per name required");
  if (names.size() != spec.modalities.size()) {
    throw InputError("model expects " + std::to_string(spec.modalities.size()) + " modalities, data has " +
                     std::to_string(names.size()));
  }
  std::vector<Mat<double>> out(names.size());
  std::set<std::size_t> seen;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::size_t m = spec.modality_index(names[i]);
    if (!seen.insert(m).second) throw InputError("duplicate modality '" + names[i] + "'");
    out[m] = mats[i];
  }
  return out;
}

}  // namespace moce::model
