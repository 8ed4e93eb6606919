#pragma once

#include <vector>

namespace moce::stats {

double mean(const std::vector<double>& x);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev(const std::vector<double>& x);

/// Average ranks, ties share the mean of their positions (1-based).
std::vector<double> ranks(const std::vector<double>& x);
/// Pearson correlation of the ranks. Returns 0 when either side is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct PairedTTest {
  double mean_difference = 0.0;
  double t = 0.0;
  double dof = 0.0;
  double p_value = 1.0;  // H1: mean(a - b) > 0
};

/// One-sided paired t-test of a against b. Identical pairs give p = 1 when
/// the mean difference is 0 and p = 0 when it is a positive constant.
PairedTTest paired_t_test_greater(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace moce::stats
