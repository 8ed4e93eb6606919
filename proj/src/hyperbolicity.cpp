#include "moce/hyperbolicity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "moce/errors.hpp"

namespace moce::hyperbolicity {

MetricCloud MetricCloud::from_points(Mat<double> points) {
  if (points.rows() == 0 || points.cols() == 0) throw InputError("point cloud is empty");
  if (!points.allFinite()) throw InputError("point cloud has non-finite entries");
  return MetricCloud(Metric::euclidean, std::move(points));
}

MetricCloud MetricCloud::from_distances(Mat<double> d) {
  if (d.rows() != d.cols()) throw InputError("distance matrix must be square");
  if (d.rows() == 0) throw InputError("distance matrix is empty");
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    if (d(i, i) != 0.0) throw InputError("distance matrix must have a zero diagonal");
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      if (!std::isfinite(d(i, j)) || d(i, j) < 0.0) throw InputError("distances must be finite and non-negative");
      if (d(i, j) != d(j, i)) throw InputError("distance matrix must be symmetric");
    }
  }
  return MetricCloud(Metric::precomputed, std::move(d));
}

double MetricCloud::distance(std::size_t i, std::size_t j) const {
  const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
  if (metric_ == Metric::precomputed) return data_(a, b);
  return (data_.row(a) - data_.row(b)).norm();
}

Mat<double> MetricCloud::distance_matrix(const std::vector<std::size_t>& idx) const {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Mat<double> d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = distance(idx[i], idx[j]);
  }
  return d;
}

Mat<double> MetricCloud::distance_matrix() const {
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), 0);
  return distance_matrix(idx);
}

double gromov_product(const Mat<double>& d, std::size_t x, std::size_t y, std::size_t w) {
  const auto n = static_cast<std::size_t>(d.rows());
  if (x >= n || y >= n || w >= n) throw DimensionError("gromov_product: index out of range");
  const auto X = static_cast<Eigen::Index>(x), Y = static_cast<Eigen::Index>(y), W = static_cast<Eigen::Index>(w);
  return 0.5 * (d(W, X) + d(W, Y) - d(X, Y));
}

double delta_exact(const Mat<double>& d) {
  const Eigen::Index n = d.rows();
  if (n < 4) throw InputError("delta needs at least 4 points, got " + std::to_string(n));
  if (static_cast<std::size_t>(n) > kExactLimit) {
    throw ParameterError("delta_exact: " + std::to_string(n) + " points exceed the exact limit of " +
                         std::to_string(kExactLimit) + "; use delta_rel_sampled");
  }
  double best = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dij = d(i, j);
      for (Eigen::Index k = j + 1; k < n; ++k) {
        const double dik = d(i, k), djk = d(j, k);
        for (Eigen::Index l = k + 1; l < n; ++l) {
          const double s1 = dij + d(k, l);
          const double s2 = dik + d(j, l);
          const double s3 = d(i, l) + djk;
          // Largest minus second largest of the three sums.
          double hi = s1, mid = s2;
          if (mid > hi) std::swap(hi, mid);
          if (s3 > hi) {
            mid = hi;
            hi = s3;
          } else if (s3 > mid) {
            mid = s3;
          }
          best = std::max(best, hi - mid);
        }
      }
    }
  }
  return 0.5 * best;
}

double delta_exact(const MetricCloud& cloud) { return delta_exact(cloud.distance_matrix()); }

double diameter(const Mat<double>& d) { return d.size() == 0 ? 0.0 : d.maxCoeff(); }

DeltaReport delta_rel_sampled(const MetricCloud& cloud, std::size_t batch_size, std::size_t n_batches,
                              std::uint64_t seed) {
  if (batch_size < 4) throw InputError("batch size must be at least 4");
  if (n_batches < 1) throw InputError("need at least one batch");
  const std::size_t n = cloud.size();
  if (n < 4) throw InputError("delta needs at least 4 points, got " + std::to_string(n));

  DeltaReport rep;
  rep.points = n;
  rep.seed = seed;
  const bool whole = n <= batch_size;
  rep.batch_size = whole ? n : batch_size;
  rep.batches = whole ? 1 : n_batches;

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> pool(n);
  for (std::size_t b = 0; b < rep.batches; ++b) {
    std::iota(pool.begin(), pool.end(), 0);
    if (!whole) {
      // Partial Fisher-Yates: the first batch_size entries are the sample.
      for (std::size_t i = 0; i < batch_size; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(pool[i], pool[pick(rng)]);
      }
    }
    std::vector<std::size_t> idx(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(rep.batch_size));
    std::sort(idx.begin(), idx.end());
    const Mat<double> d = cloud.distance_matrix(idx);
    const double diam = diameter(d);
    if (!(diam > 0.0)) throw NumericError("degenerate batch: diameter is 0");
    const double delta = delta_exact(d);
    rep.batch_delta.push_back(delta);
    rep.batch_diameter.push_back(diam);
    rep.batch_delta_rel.push_back(2.0 * delta / diam);
  }
  const auto nb = static_cast<double>(rep.batches);
  auto mean = [&](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / nb; };
  rep.delta = mean(rep.batch_delta);
  rep.diameter = mean(rep.batch_diameter);
  rep.delta_rel = mean(rep.batch_delta_rel);
  double ss = 0.0;
  for (double x : rep.batch_delta_rel) ss += (x - rep.delta_rel) * (x - rep.delta_rel);
  rep.delta_rel_std = std::sqrt(ss / nb);
  return rep;
}

}  // namespace moce::hyperbolicity
