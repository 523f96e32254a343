#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lab/rng.hpp"

namespace lab {

/// Simpson-rule integral of g over [0,1] using `panels` sub-intervals
/// (2*panels + 1 evaluations of g).
double integrate01(const std::function<double(double)>& g,
                   std::size_t panels = 4096);

/// A density on [0,1] with a roughness exponent controlling the bin
/// schedules.  Construction validates normalisation (integral within 1e-6
/// of 1) and strict positivity on a 10^4-point grid.
class HolderDensity {
 public:
  HolderDensity(std::function<double(double)> evaluator, double alpha,
                std::string description);

  double operator()(double x) const { return evaluator_(x); }
  double alpha() const { return alpha_; }
  const std::string& description() const { return description_; }

 private:
  std::function<double(double)> evaluator_;
  double alpha_ = 0.0;
  std::string description_;
};

/// The uniform density on [0,1].
HolderDensity uniform_density(double alpha = 0.4);

/// 1 + 0.5 sin(2 pi x), the smooth non-constant test density.
HolderDensity sine_density(double alpha = 0.4);

/// Base density plus sign-modulated sine bumps on K equal bins:
/// f(x) = f0(x) + xi_k (pi/2) K^{-alpha} sin(pi(Kx - k)) on bin k.
/// Signs must be balanced (exactly K/2 positive); construction rejects
/// sign vectors whose density dips below zero on a 10^5-point grid.
class AdversarialDensity {
 public:
  AdversarialDensity(HolderDensity base, std::vector<int> signs);

  double operator()(double x) const;
  const HolderDensity& base() const { return base_; }
  const std::vector<int>& signs() const { return signs_; }
  std::size_t bins() const { return signs_.size(); }

 private:
  HolderDensity base_;
  std::vector<int> signs_;
};

/// Integral of f0 over bin k of K equal bins, by high-order quadrature.
double bin_mass(const HolderDensity& f0, std::size_t bins, std::size_t k);

/// Cross moment of the base with the unsigned bump on bin k:
/// integral over bin k of f0(x) (pi/2) K^{-alpha} sin(pi(Kx - k)) dx.
double bump_cross_moment(const HolderDensity& f0, std::size_t bins,
                         std::size_t k);

/// Total squared-bump mass  sum_k integral bump_k^2, by quadrature.
double bump_energy(std::size_t bins, double alpha);

/// Balanced signs maximally aligned with the base density: the K/2 bins
/// with the largest cross moments get +1.  This is the family member
/// hardest for the posterior-mean plug-in.
std::vector<int> adversarial_signs(const HolderDensity& f0,
                                   std::size_t bins);

/// Uniformly random balanced sign vector.
std::vector<int> sample_balanced_signs(std::size_t bins,
                                       rng::RngStream& stream);

/// Integral of the squared density.
double integral_of_square(const HolderDensity& f);

/// Same via the exact bump expansion (no grid over the bumps).
double integral_of_square(const AdversarialDensity& f);

/// Inverse-CDF sampler.  General densities use a 2^14-knot grid; the bump
/// family uses bin-aligned knots so every bin mass is quadrature-exact.
class DensitySampler {
 public:
  explicit DensitySampler(const HolderDensity& f);
  explicit DensitySampler(const AdversarialDensity& f);

  double draw(rng::RngStream& stream) const;

 private:
  void build(const std::function<double(double)>& f,
             std::size_t intervals);

  std::vector<double> knots_;
  std::vector<double> cdf_;
  std::vector<double> lo_;  ///< Scaled density at interval left endpoints.
  std::vector<double> hi_;  ///< Scaled density at interval right endpoints.
};

/// n i.i.d. draws from f.
std::vector<double> sample_density(rng::RngStream& stream,
                                   const HolderDensity& f, std::size_t n);
std::vector<double> sample_density(rng::RngStream& stream,
                                   const AdversarialDensity& f,
                                   std::size_t n);

/// Counts of points over `bins` equal-width bins of [0,1].
std::vector<long long> bin_counts(const std::vector<double>& points,
                                  std::size_t bins);

/// Histogram counts of a random equal split of the sample.
struct HistogramPair {
  std::vector<long long> counts1;
  std::vector<long long> counts2;
  long long n_half = 0;
  std::size_t bins = 0;
  bool degenerate = false;  ///< Bin count exceeded the point count.
};

/// Randomly splits the points into two equal halves and bins each half.
/// Throws std::invalid_argument for an odd point count or zero bins.
HistogramPair histogram_split(const std::vector<double>& points,
                              std::size_t bins, rng::RngStream& stream);

/// Two-split estimator of the squared-density integral:
/// (1/M) sum_m (2 f1_m f2_m - f1_m^2/2 - f2_m^2/2) + c M / n,
/// with f_jm = M count_jm / n_half and n = 2 n_half.
double theta_hat_freq(const HistogramPair& h, double c_correction = 2.0);

/// Exact expectation of theta_hat_freq under multinomial counts with bin
/// masses q (from the first two multinomial moments; no approximation).
double theta_hat_freq_expectation(const std::vector<double>& q,
                                  long long n_half, double c_correction);

/// Correction constant making theta_hat_freq exactly unbiased for the
/// binned squared integral M sum q_m^2 at the given bin masses.
double calibrated_correction(const std::vector<double>& q);

/// Exact posterior probability of the positive atom under the symmetric
/// two-point prior {+mu, -mu} and x ~ N(atom, sigma^2):
/// e^{x mu / sigma^2} / (e^{x mu / sigma^2} + e^{-x mu / sigma^2}).
double two_point_posterior(double x, double mu, double sigma);

/// First-order expansion 1/2 + x mu / (2 sigma^2) of the same posterior.
double two_point_posterior_linearized(double x, double mu, double sigma);

/// Posterior-mean plug-in of the squared-density integral under the
/// sign-bump family prior around f0 with counts.size() bins: exact
/// balanced-vector enumeration for K <= 6, independent per-bin two-point
/// posteriors for larger K.
double theta_bayes_plugin(const std::vector<long long>& counts,
                          const HolderDensity& f0);

/// Bin schedule for the two-split estimator: max(8, round(n^{1/3})).
/// The cube-root growth keeps the second-order variance term, which scales
/// like M/n relative to the leading term, negligible across the grid while
/// the binning bias M^{-2} stays far below the n^{-1/2} noise floor.
std::size_t default_freq_bins(double n);

/// Bin schedule for the bump family: (n log n)^{1/(1+2 alpha)} rounded to
/// the nearest even integer (at least 4).
std::size_t default_family_bins(double n, double alpha);

/// Monte Carlo summary for one estimator at one sample size.
struct RatePoint {
  std::string estimator;
  double n = 0.0;
  int reps = 0;
  double mean = 0.0;
  double bias = 0.0;
  double variance = 0.0;
  double rmse = 0.0;
  double mc_se = 0.0;
  double truth = 0.0;
};

/// Rate comparison across a sample-size grid.
struct RateReport {
  std::vector<RatePoint> points;
  double freq_slope = 0.0;
  double freq_r2 = 0.0;
  double bayes_slope = 0.0;
  double bayes_r2 = 0.0;
  bool has_bayes = false;
  bool low_reps_warning = false;  ///< reps < 100, slopes unstable.
};

/// Simulates the two-split estimator (and, when `adversarial` is set, the
/// posterior-mean plug-in on the least favorable family member) across
/// n_grid, fitting log-RMSE on log-n per estimator.  Replication r of grid
/// point j consumes stream.substream((j << 32) | r).
RateReport rate_experiment(const HolderDensity& f0,
                           const std::vector<double>& n_grid, int reps,
                           const rng::RngStream& stream, bool adversarial,
                           int workers = 0);

}  // namespace lab
