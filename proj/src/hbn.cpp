#include "moce/hbn.hpp"

#include <cmath>
#include <string>
#include <vector>


namespace moce::layers {

using lorentz::Curvature;
using lorentz::LorentzPoint;
using lorentz::PointBatch;

void HBNConfig::validate() const {
  if (!(eps > 0.0)) throw ParameterError("hbn: eps must be > 0");
  if (!(eta0 >= 0.0 && eta0 <= 1.0)) throw ParameterError("hbn: eta0 must lie in [0, 1]");
  if (!(decay > 0.0 && decay <= 1.0)) throw ParameterError("hbn: decay must lie in (0, 1]");
  if (!(eta_test >= 0.0 && eta_test <= 1.0)) throw ParameterError("hbn: eta_test must lie in [0, 1]");
}

double HBNConfig::momentum(int step) const { return eta0 * std::pow(decay, std::max(step, 0)); }

HBNState::HBNState(Eigen::Index dim, Curvature<double> k, HBNConfig cfg) : dim_(dim), k_(k), cfg_(cfg) {
  if (dim < 1) throw DimensionError("HBNState: dimension must be >= 1");
  cfg_.validate();
}

const RunningStats& HBNState::stats(int domain) const {
  const auto it = stats_.find(domain);
  if (it == stats_.end()) throw InputError("HBNState: no statistics for domain " + std::to_string(domain));
  return it->second;
}

void HBNState::set(int domain, RunningStats s) {
  if (s.mean.dim() != dim_) throw DimensionError("HBNState: running mean dimension mismatch");
  if (!s.mean.curvature().same_as(k_)) throw GeometryError("HBNState: running mean curvature mismatch");
  if (!(s.variance >= 0.0) || !std::isfinite(s.variance)) throw ParameterError("HBNState: variance must be >= 0");
  stats_.insert_or_assign(domain, std::move(s));
}

void HBNState::update(int domain, const LorentzPoint<double>& batch_mean, double batch_var, double eta) {
  const auto it = stats_.find(domain);
  if (it == stats_.end()) {
    set(domain, {batch_mean, batch_var});
    return;
  }
  RunningStats& s = it->second;
  s.mean = lorentz::geodesic_interpolate<double>(s.mean, batch_mean, eta);
  s.variance = (1.0 - eta) * s.variance + eta * batch_var;
}

RunningStats HBNState::unseen_init(const frechet::FrechetConfig& fcfg) const {
  if (stats_.empty()) return {lorentz::origin<double>(dim_, k_), 1.0};
  std::vector<LorentzPoint<double>> means;
  double var = 0.0;
  for (const auto& [id, s] : stats_) {
    means.push_back(s.mean);
    var += s.variance;
  }
  const auto n = static_cast<double>(means.size());
  return {frechet::frechet_mean<double>(PointBatch<double>(std::move(means)), fcfg), var / n};
}

void HBNState::rescale_curvature(const Curvature<double>& k_new) {
  const double ratio = k_.value() / k_new.value();
  for (auto& [id, s] : stats_) {
    s.mean = lorentz::rescale_curvature<double>(s.mean, k_new);
    s.variance *= ratio;
  }
  k_ = k_new;
}

template <Real T>
std::vector<LorentzPoint<T>> hbn_forward(const PointBatch<T>& batch, int domain, HBNState& state, const T& gamma,
                                         Mode mode, int step, const frechet::FrechetConfig& fcfg) {
  if (batch.dim() != state.dim()) throw DimensionError("hbn_forward: batch dimension differs from state");
  if (std::abs(value_of(batch.curvature().value()) - state.curvature().value()) >
      1e-12 * std::abs(state.curvature().value())) {
    throw GeometryError("hbn_forward: batch curvature differs from state");
  }
  const double eps = state.config().eps;
  if (mode == Mode::train) {
    const LorentzPoint<T> mu = frechet::frechet_mean<T>(batch, fcfg);
    const T var = frechet::frechet_variance<T>(batch, mu);
    auto out = hbn_normalize<T>(batch, mu, var, gamma, eps);
    state.update(domain, lorentz::cast_point<double>(mu), value_of(var), state.config().momentum(step));
    return out;
  }

  // Eval: batch statistics only feed the running state, so they are
  // computed on detached values.
  std::vector<LorentzPoint<double>> detached;
  detached.reserve(batch.size());
  for (const auto& p : batch) detached.push_back(lorentz::cast_point<double>(p));
  const PointBatch<double> db(std::move(detached));
  const LorentzPoint<double> mu_d = frechet::frechet_mean<double>(db, fcfg);
  const double var_d = frechet::frechet_variance<double>(db, mu_d);

  if (!state.has(domain)) state.set(domain, state.unseen_init(fcfg));
  state.update(domain, mu_d, var_d, state.config().eta_test);
  const RunningStats& s = state.stats(domain);
  // Running statistics are constants: rebuild the mean on the batch's
  // curvature so gradients still flow through K and gamma.
  const lorentz::Curvature<T>& k = batch.curvature();
  const LorentzPoint<T> run_mu = lorentz::from_space<T>(s.mean.space().template cast<T>(), k);
  return hbn_normalize<T>(batch, run_mu, T(s.variance), gamma, eps);
}

template std::vector<LorentzPoint<double>> hbn_forward(const PointBatch<double>&, int, HBNState&, const double&, Mode,
                                                       int, const frechet::FrechetConfig&);
template std::vector<LorentzPoint<ad::Var>> hbn_forward(const PointBatch<ad::Var>&, int, HBNState&, const ad::Var&,
                                                        Mode, int, const frechet::FrechetConfig&);

}  // namespace moce::layers
