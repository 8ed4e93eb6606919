#include "moce/frechet.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

namespace moce::frechet {

using lorentz::Curvature;
using lorentz::LorentzPoint;
using lorentz::PointBatch;
using lorentz::TangentVector;

void FrechetConfig::validate() const {
  if (max_iters < 1) throw ParameterError("FrechetConfig: max_iters must be >= 1");
  if (!(tol > 0.0)) throw ParameterError("FrechetConfig: tol must be > 0");
  if (!(step > 0.0 && step <= 1.0)) throw ParameterError("FrechetConfig: step must lie in (0, 1]");
}

namespace {

constexpr int kMaxHalvings = 20;

template <Real T>
void check_weights(std::size_t n, std::span<const T> weights) {
  if (weights.size() != n) throw DimensionError("frechet: weights length must equal batch size");
  double total = 0.0;
  for (const T& w : weights) {
    const double v = value_of(w);
    if (!std::isfinite(v) || v < 0.0) throw ParameterError("frechet: weights must be finite and non-negative");
    total += v;
  }
  if (!(total > 0.0)) throw ParameterError("frechet: weights must have a positive sum");
}

double objective(const PointBatch<double>& batch, std::span<const double> w, const LorentzPoint<double>& mu) {
  double s = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) s += w[i] * lorentz::squared_distance(mu, batch[i]);
  return s;
}

Vec<double> mean_log(const PointBatch<double>& batch, std::span<const double> w, double total,
                     const LorentzPoint<double>& mu) {
  Vec<double> g = Vec<double>::Zero(mu.coords().size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (w[i] == 0.0) continue;
    g += lorentz::log_map(mu, batch[i]).coords() * (w[i] / total);
  }
  return g;
}

double lorentz_norm(const Vec<double>& v) { return std::sqrt(std::max(0.0, lorentz::lorentz_inner<double>(v, v))); }

std::vector<double> to_std(const Vec<double>& v) { return {v.data(), v.data() + v.size()}; }

std::string format_sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

}  // namespace

template <Real T>
Vec<T> stationarity_residual(const Vec<T>& x, const std::vector<Vec<T>>& points, std::span<const T> weights,
                             const T& k) {
  using std::sqrt;
  const Eigen::Index n = x.size();
  const T mu_t = sqrt(x.squaredNorm() - 1.0 / k);
  const Vec<T> dir = x / mu_t;
  Vec<T> g = Vec<T>::Zero(n);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if constexpr (std::is_same_v<T, double>) {
      if (weights[i] == 0.0) continue;
    } else {
      if (weights[i].is_constant() && weights[i].val == 0.0) continue;
    }
    const Vec<T>& p = points[i];
    const T u = k * (x.dot(p.tail(n)) - mu_t * p[0]);
    const T c = weights[i] * smooth::acosh_ratio(u);
    g += (dir * p[0] - p.tail(n)) * c;
  }
  return g;
}

namespace {

// d g / d x of the stationarity residual at detached values, by one reverse
// sweep per row on a private tape.
Mat<double> residual_jacobian(const Vec<double>& x_star, const std::vector<Vec<double>>& points,
                              std::span<const double> weights, double k) {
  using ad::Var;
  const Eigen::Index n = x_star.size();
  Mat<double> jac(n, n);
  ad::Tape scratch;
  ad::TapeScope scope(scratch);
  Vec<Var> x(n);
  for (Eigen::Index j = 0; j < n; ++j) x[j] = Var::variable(x_star[j]);
  std::vector<Vec<Var>> pts;
  pts.reserve(points.size());
  for (const auto& p : points) pts.push_back(p.cast<Var>());
  const std::vector<Var> w(weights.begin(), weights.end());
  const Vec<Var> g = stationarity_residual<Var>(x, pts, w, Var(k));
  std::vector<double> adj;
  for (Eigen::Index r = 0; r < n; ++r) {
    if (g[r].is_constant()) {
      jac.row(r).setZero();
      continue;
    }
    scratch.adjoints_into(g[r].id, adj);
    for (Eigen::Index c = 0; c < n; ++c) jac(r, c) = adj[x[c].id];
  }
  return jac;
}

}  // namespace

KarcherResult karcher_mean(const PointBatch<double>& batch, std::span<const double> weights,
                           const FrechetConfig& cfg) {
  cfg.validate();
  check_weights<double>(batch.size(), weights);
  const Curvature<double>& k = batch.curvature();

  std::size_t start = 0;
  for (std::size_t i = 1; i < batch.size(); ++i) {
    if (weights[i] > weights[start]) start = i;
  }
  double total = 0.0;
  for (double w : weights) total += w;

  std::vector<Vec<double>> coords;
  coords.reserve(batch.size());
  for (const auto& p : batch) coords.push_back(p.coords());

  LorentzPoint<double> mu = batch[start];
  double f = objective(batch, weights, mu);
  Vec<double> g = mean_log(batch, weights, total, mu);
  double gnorm = lorentz_norm(g);
  int it = 0;
  while (gnorm >= cfg.tol) {
    if (it == cfg.max_iters) {
      throw ConvergenceError("weighted Frechet mean did not converge in " + std::to_string(cfg.max_iters) +
                                 " iterations (gradient norm " + format_sci(gnorm) + ")",
                             to_std(mu.coords()), gnorm);
    }
    const double noise = 1e-13 * (1.0 + f);
    // Near the minimum the objective changes by less than its rounding
    // noise, so there the gradient norm decides.
    auto accept = [&](double f_new, double g_new) {
      return f_new < f - noise || (f_new <= f + noise && g_new < gnorm);
    };

    // Newton candidate on the space coordinates. Spread-out batches make the
    // fixed-point map contract very slowly; Newton restores fast local
    // convergence and is only kept when it passes the same test.
    {
      const Vec<double> x = mu.space();
      const Vec<double> r = stationarity_residual<double>(x, coords, weights, k.value());
      const Vec<double> dx = residual_jacobian(x, coords, weights, k.value()).partialPivLu().solve(r);
      if (dx.allFinite()) {
        LorentzPoint<double> cand = lorentz::from_space<double>(Vec<double>(x - dx), k);
        const double fc = objective(batch, weights, cand);
        Vec<double> gc = mean_log(batch, weights, total, cand);
        const double gcn = lorentz_norm(gc);
        if (accept(fc, gcn)) {
          mu = std::move(cand);
          f = fc;
          g = std::move(gc);
          gnorm = gcn;
          ++it;
          continue;
        }
      }
    }

    double step = cfg.step;
    LorentzPoint<double> next = mu;
    double f_next = f;
    Vec<double> g_next = g;
    double gnorm_next = gnorm;
    for (int h = 0; h <= kMaxHalvings; ++h) {
      next = lorentz::exp_map(mu, TangentVector<double>(mu, Vec<double>(g * step), lorentz::AssumeTangent{}));
      f_next = objective(batch, weights, next);
      g_next = mean_log(batch, weights, total, next);
      gnorm_next = lorentz_norm(g_next);
      if (accept(f_next, gnorm_next)) break;
      step *= 0.5;
    }
    mu = std::move(next);
    f = f_next;
    g = std::move(g_next);
    gnorm = gnorm_next;
    ++it;
  }
  return {std::move(mu), it, gnorm};
}

namespace {

// Attaches a converged mean to the tape: x = x* - H^{-1} g(x*; points, w, K),
// with H = dg/dx evaluated on detached values.
LorentzPoint<ad::Var> attach_to_tape(const Vec<double>& x_star, const PointBatch<ad::Var>& batch,
                                     std::span<const ad::Var> weights) {
  using ad::Var;
  const Eigen::Index n = x_star.size();
  const std::size_t m = batch.size();

  std::vector<Vec<double>> detached;
  std::vector<double> w(m);
  detached.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    detached.push_back(values_of(batch[i].coords()));
    w[i] = value_of(weights[i]);
  }
  const Mat<double> hess = residual_jacobian(x_star, detached, w, value_of(batch.curvature().value()));
  const Mat<double> inv = hess.partialPivLu().inverse();

  std::vector<Vec<Var>> pts;
  pts.reserve(m);
  for (std::size_t i = 0; i < m; ++i) pts.push_back(batch[i].coords());
  const Vec<Var> xs = x_star.cast<Var>();
  const Vec<Var> g = stationarity_residual<Var>(xs, pts, weights, batch.curvature().value());

  Vec<Var> x(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    Var acc(x_star[r]);
    for (Eigen::Index c = 0; c < n; ++c) {
      if (inv(r, c) != 0.0) acc -= g[c] * inv(r, c);
    }
    x[r] = acc;
  }
  return lorentz::from_space<Var>(x, batch.curvature());
}

}  // namespace

template <Real T>
LorentzPoint<T> weighted_frechet_mean(const PointBatch<T>& batch, std::span<const T> weights,
                                      const FrechetConfig& cfg) {
  check_weights<T>(batch.size(), weights);
  if constexpr (std::is_same_v<T, double>) {
    return karcher_mean(batch, weights, cfg).mean;
  } else {
    std::vector<LorentzPoint<double>> detached;
    detached.reserve(batch.size());
    for (const auto& p : batch) detached.push_back(lorentz::cast_point<double>(p));
    std::vector<double> w(weights.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = value_of(weights[i]);
    const KarcherResult r = karcher_mean(PointBatch<double>(std::move(detached)), w, cfg);
    return attach_to_tape(Vec<double>(r.mean.space()), batch, weights);
  }
}

template <Real T>
LorentzPoint<T> frechet_mean(const PointBatch<T>& batch, const FrechetConfig& cfg) {
  const std::vector<T> w(batch.size(), T(1.0));
  return weighted_frechet_mean<T>(batch, w, cfg);
}

template <Real T>
T frechet_variance(const PointBatch<T>& batch, std::span<const T> weights, const LorentzPoint<T>& mean) {
  check_weights<T>(batch.size(), weights);
  T num(0.0);
  T den(0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    num += weights[i] * lorentz::squared_distance(mean, batch[i]);
    den += weights[i];
  }
  return num / den;
}

template <Real T>
T frechet_variance(const PointBatch<T>& batch, const LorentzPoint<T>& mean) {
  const std::vector<T> w(batch.size(), T(1.0));
  return frechet_variance<T>(batch, w, mean);
}

template LorentzPoint<double> weighted_frechet_mean(const PointBatch<double>&, std::span<const double>,
                                                    const FrechetConfig&);
template LorentzPoint<ad::Var> weighted_frechet_mean(const PointBatch<ad::Var>&, std::span<const ad::Var>,
                                                     const FrechetConfig&);
template LorentzPoint<double> frechet_mean(const PointBatch<double>&, const FrechetConfig&);
template LorentzPoint<ad::Var> frechet_mean(const PointBatch<ad::Var>&, const FrechetConfig&);
template double frechet_variance(const PointBatch<double>&, std::span<const double>, const LorentzPoint<double>&);
template ad::Var frechet_variance(const PointBatch<ad::Var>&, std::span<const ad::Var>,
                                  const LorentzPoint<ad::Var>&);
template double frechet_variance(const PointBatch<double>&, const LorentzPoint<double>&);
template ad::Var frechet_variance(const PointBatch<ad::Var>&, const LorentzPoint<ad::Var>&);
template Vec<double> stationarity_residual(const Vec<double>&, const std::vector<Vec<double>>&,
                                           std::span<const double>, const double&);
template Vec<ad::Var> stationarity_residual(const Vec<ad::Var>&, const std::vector<Vec<ad::Var>>&,
                                            std::span<const ad::Var>, const ad::Var&);

}  // namespace moce::frechet
