#pragma once

// Hyperbolic batch normalization with per-domain running statistics.

#include <map>
#include <optional>
#include <vector>

#include "moce/frechet.hpp"
#include "moce/lorentz.hpp"

namespace moce::layers {

struct HBNConfig {
  double eps = 1e-5;
  /// Momentum schedule eta_k = eta0 * decay^k, k counted in epochs.
  double eta0 = 0.9;
  double decay = 0.95;
  /// Fixed momentum for test-time adaptation.
  double eta_test = 0.1;

  void validate() const;
  double momentum(int step) const;
};

struct RunningStats {
  lorentz::LorentzPoint<double> mean;
  double variance;
};

/// Running statistics of one HBN layer, keyed by domain id. The learnable
/// scale gamma lives with the model parameters.
class HBNState {
 public:
  HBNState(Eigen::Index dim, lorentz::Curvature<double> k, HBNConfig cfg = {});

  Eigen::Index dim() const { return dim_; }
  const lorentz::Curvature<double>& curvature() const { return k_; }
  const HBNConfig& config() const { return cfg_; }
  const std::map<int, RunningStats>& domains() const { return stats_; }

  bool has(int domain) const { return stats_.count(domain) != 0; }
  const RunningStats& stats(int domain) const;
  void set(int domain, RunningStats s);

  /// mu~ <- geodesic point at fraction eta from mu~ to mu_batch;
  /// nu~^2 <- (1 - eta) nu~^2 + eta nu^2. A domain seen for the first time
  /// starts from the batch statistics.
  void update(int domain, const lorentz::LorentzPoint<double>& batch_mean, double batch_var, double eta);

  /// Statistics an unseen domain starts from: Frechet mean of the stored
  /// means and mean of the stored variances (origin and 1 when empty).
  RunningStats unseen_init(const frechet::FrechetConfig& fcfg) const;

  /// Moves every running mean to curvature k_new by log-scale-exp and
  /// multiplies variances by K_old / K_new.
  void rescale_curvature(const lorentz::Curvature<double>& k_new);

 private:
  Eigen::Index dim_;
  lorentz::Curvature<double> k_;
  HBNConfig cfg_;
  std::map<int, RunningStats> stats_;
};

enum class Mode { train, eval };

/// (gamma / sqrt(nu^2 + eps)) (.) ((-)mu (+) p_i) for each point.
template <Real T>
std::vector<lorentz::LorentzPoint<T>> hbn_normalize(const lorentz::PointBatch<T>& batch,
                                                    const lorentz::LorentzPoint<T>& mu, const T& var, const T& gamma,
                                                    double eps) {
  using std::sqrt;
  const lorentz::LorentzPoint<T> neg = lorentz::gyro_inverse(mu);
  const T scale = gamma / sqrt(var + eps);
  std::vector<lorentz::LorentzPoint<T>> out;
  out.reserve(batch.size());
  for (const auto& p : batch) out.push_back(lorentz::gyro_scale(scale, lorentz::gyro_add(neg, p)));
  return out;
}

/// Training mode: normalizes with the batch Frechet mean and variance, then
/// folds them into the domain's running statistics with momentum
/// cfg.momentum(step).
///
/// Eval mode: blends the batch statistics into the domain's running
/// statistics with the fixed test momentum (unseen domains start from
/// unseen_init) and normalizes with the blended statistics. Callers who
/// must not mutate a trained state pass a copy.
template <Real T>
std::vector<lorentz::LorentzPoint<T>> hbn_forward(const lorentz::PointBatch<T>& batch, int domain, HBNState& state,
                                                  const T& gamma, Mode mode, int step,
                                                  const frechet::FrechetConfig& fcfg);

}  // namespace moce::layers
