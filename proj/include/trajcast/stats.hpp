#pragma once

#include <span>
#include <vector>

namespace trajcast::stats {

double normal_cdf(double z);
double normal_quantile(double p);

double mean(std::span<const double> x);
/// Unbiased sample variance.
double variance(std::span<const double> x);
/// Empirical quantile with linear interpolation between order statistics
/// (type 7). `sorted` must be ascending.
double quantile_sorted(std::span<const double> sorted, double p);
double median(std::vector<double> x);

/// Monte-Carlo standard error of the mean of an autocorrelated series by
/// non-overlapping batch means.
double batch_means_se(std::span<const double> x, std::size_t n_batches = 50);

/// Asymptotic Kolmogorov survival function Q(lambda).
double kolmogorov_q(double lambda);

struct TestResult {
  double statistic;
  double p_value;
};

/// One-sample KS test of `u` against Uniform(0, 1).
TestResult ks_uniform(std::vector<double> u);
TestResult ks_two_sample(std::vector<double> a, std::vector<double> b);
/// One-sample KS test against an arbitrary continuous CDF.
template <class Cdf>
TestResult ks_one_sample(std::vector<double> x, Cdf cdf);
/// Pearson chi-square test of equal expected counts across bins.
TestResult chi_square_uniform(std::span<const std::size_t> counts);
/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace trajcast::stats

#include <algorithm>
#include <cmath>

namespace trajcast::stats {

template <class Cdf>
TestResult ks_one_sample(std::vector<double> x, Cdf cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)};
}

}  // namespace trajcast::stats
