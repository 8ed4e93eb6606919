#pragma once

// Gromov delta-hyperbolicity of finite metric spaces.

#include <cstdint>
#include <vector>

#include "moce/scalar.hpp"

namespace moce::hyperbolicity {

enum class Metric { euclidean, precomputed };

/// Largest cloud delta_exact() enumerates; sample above this.
inline constexpr std::size_t kExactLimit = 400;

/// A finite metric space: Euclidean points (rows) or a distance matrix.
class MetricCloud {
 public:
  static MetricCloud from_points(Mat<double> points);
  /// Requires a symmetric, non-negative matrix with zero diagonal.
  static MetricCloud from_distances(Mat<double> distances);

  Metric metric() const { return metric_; }
  std::size_t size() const { return static_cast<std::size_t>(data_.rows()); }
  double distance(std::size_t i, std::size_t j) const;
  /// Pairwise distances among the given points, in the given order.
  Mat<double> distance_matrix(const std::vector<std::size_t>& idx) const;
  Mat<double> distance_matrix() const;

 private:
  MetricCloud(Metric m, Mat<double> data) : metric_(m), data_(std::move(data)) {}
  Metric metric_;
  Mat<double> data_;
};

/// (x, y)_w = (d(w, x) + d(w, y) - d(x, y)) / 2
double gromov_product(const Mat<double>& d, std::size_t x, std::size_t y, std::size_t w);

/// Four-point delta: the largest over quadruples of half the gap between
/// the two largest of the three pair-sums, which equals
/// max_{w,x,y,z} min{(x,y)_w, (y,z)_w} - (x,z)_w. Floored at 0.
/// Throws ParameterError above kExactLimit points.
double delta_exact(const Mat<double>& d);
double delta_exact(const MetricCloud& cloud);

double diameter(const Mat<double>& d);

struct DeltaReport {
  /// Means over batches.
  double delta = 0.0;
  double diameter = 0.0;
  double delta_rel = 0.0;
  /// Population standard deviation of per-batch delta_rel.
  double delta_rel_std = 0.0;
  std::size_t batches = 0;
  std::size_t batch_size = 0;
  std::size_t points = 0;
  std::uint64_t seed = 0;
  std::vector<double> batch_delta;
  std::vector<double> batch_diameter;
  std::vector<double> batch_delta_rel;
};

/// Draws `n_batches` subsets of `batch_size` points without replacement
/// (one batch of every point when the cloud is not larger than a batch),
/// and records 2 delta / diam per batch. Deterministic under `seed`.
DeltaReport delta_rel_sampled(const MetricCloud& cloud, std::size_t batch_size, std::size_t n_batches,
                              std::uint64_t seed);

}  // namespace moce::hyperbolicity
