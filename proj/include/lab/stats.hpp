#pragma once

#include <cstddef>
#include <vector>

namespace lab::stats {

/// Standard normal density at x.
double normal_pdf(double x);

/// Normal density with location mean and scale sd > 0.
double normal_pdf(double x, double mean, double sd);

/// Log of the standard normal density at x.
double normal_log_pdf(double x);

/// Log normal density with location mean and scale sd > 0.
double normal_log_pdf(double x, double mean, double sd);

/// Standard normal distribution function, accurate in both tails.
double normal_cdf(double x);

/// Inverse of normal_cdf on (0,1), accurate to full double precision
/// (Wichura's rational approximation). Throws std::invalid_argument for
/// p outside the open interval.
double normal_quantile(double p);

/// log(sum(exp(v))) without overflow; v must be nonempty.
double log_sum_exp(const std::vector<double>& v);

/// log(exp(a) + exp(b)) without overflow.
double log_sum_exp(double a, double b);

/// Streaming mean and central second moment (Welford update).
class RunningMoments {
 public:
  void add(double x);
  long long count() const { return n_; }
  double mean() const;
  /// Central second moment divided by n.
  double variance_population() const;
  /// Central second moment divided by n-1.
  double variance_sample() const;

 private:
  long long n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct OlsFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares of y on x. Needs at least two distinct x values.
OlsFit ols(const std::vector<double>& x, const std::vector<double>& y);

/// Correlation between the sorted standardized values and the normal
/// quantiles at (i + 1/2)/n; close to 1 when the sample looks Gaussian.
double qq_normal_correlation(std::vector<double> values);

/// Pearson correlation of two equal-length vectors.
double correlation(const std::vector<double>& x, const std::vector<double>& y);

/// 97.5% standard normal quantile, used for the 95% confidence intervals.
inline constexpr double kZ975 = 1.959963984540054;

}  // namespace lab::stats
