#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lab/rng.hpp"

namespace lab {

/// Coordinatewise Gaussian sequence model W_i = mu_i + n^{-1/2} eps_i with
/// weight sequence alpha_i = i^{-xi} and mean bounds |mu_i| <= c_i = i^{-nu}.
/// The target is the linear functional theta = sum_i alpha_i mu_i.
struct WhiteNoiseSpec {
  double n = 0.0;     ///< Sample-size scale; coordinate noise variance is 1/n.
  std::size_t p = 0;  ///< Number of observed coordinates.
  double xi = 0.0;    ///< Weight exponent, 0 < xi < 1/2.
  double nu = 0.0;    ///< Bound exponent, nu + xi > 1.

  /// Throws std::invalid_argument unless n >= 1, p >= 1, 0 < xi < 1/2,
  /// nu + xi > 1, and p is large enough to hold the default cutoff.
  void validate() const;

  /// Weight alpha_i = i^{-xi} (1-based index).
  double alpha(std::size_t i) const;

  /// Mean bound c_i = i^{-nu} (1-based index).
  double bound(std::size_t i) const;

  /// Truncation level round(n^{1/(2 nu - 1)}) clamped to [1, p].
  std::size_t default_cutoff() const;

  /// Level round(n^{1/(2 nu)}) below which coordinates carry more signal
  /// than noise; clamped to [1, p].
  std::size_t signal_cutoff() const;
};

/// A feasible mean sequence together with the implied functional value.
struct WhiteNoiseInstance {
  std::vector<double> mu;
  double theta = 0.0;

  /// Builds an instance from a mean vector, computing theta; throws
  /// std::invalid_argument if any |mu_i| exceeds the bound or the size
  /// differs from spec.p.
  static WhiteNoiseInstance from_mu(const WhiteNoiseSpec& spec,
                                    std::vector<double> mu);

  /// Checks the bound constraints and that theta matches the weighted sum
  /// within 1e-10; throws std::invalid_argument on violation.
  void validate(const WhiteNoiseSpec& spec) const;
};

/// Hardest feasible mean sequence for separating the truncated estimator
/// from the bounded-prior Bayes rule: mu_i = c_i on the band
/// (signal_cutoff, default_cutoff], zero elsewhere.
WhiteNoiseInstance worst_case_instance(const WhiteNoiseSpec& spec);

/// One draw of all p coordinates.
struct SequenceData {
  std::vector<double> w;  ///< Observations, length p.
  double n = 0.0;         ///< Noise scale: var(W_i) = 1/n.
};

/// Samples W_i = mu_i + n^{-1/2} eps_i for every coordinate.
SequenceData sample_sequence(const WhiteNoiseSpec& spec,
                             const WhiteNoiseInstance& inst,
                             rng::RngStream& stream);

/// Exact bias/variance pair of a truncated linear estimator.
struct FunctionalRisk {
  double bias = 0.0;
  double variance = 0.0;
  double rmse() const;
};

/// Truncated weighted sum  sum_{i<=m} alpha_i W_i.  Throws
/// std::invalid_argument when m is outside [1, p] or data has the wrong
/// length.
double freq_functional_estimate(const SequenceData& data,
                                const WhiteNoiseSpec& spec, std::size_t m);

/// Same with m = spec.default_cutoff().
double freq_functional_estimate(const SequenceData& data,
                                const WhiteNoiseSpec& spec);

/// Analytic risk of the truncated estimator at a given mean sequence:
/// bias = -sum_{i>m} alpha_i mu_i, variance = n^{-1} sum_{i<=m} alpha_i^2.
FunctionalRisk freq_functional_risk(const WhiteNoiseSpec& spec,
                                    const std::vector<double>& mu,
                                    std::size_t m);

/// Posterior mean of a single coordinate mean under a uniform prior on
/// [-c, c] and Gaussian noise of variance 1/n, via Gauss-Legendre quadrature
/// with prior_grid nodes plus a doubled-grid stabilisation check.
/// Throws std::invalid_argument for bad arguments and std::runtime_error if
/// refinement fails to stabilise to 1e-8.
double bounded_posterior_mean(double x, double c, double n,
                              std::size_t prior_grid);

/// Bayes estimate of the functional under independent uniform priors on
/// [-c_i, c_i]: sum_i alpha_i E[mu_i | W_i].
double bounded_bayes_functional(const SequenceData& data,
                                const WhiteNoiseSpec& spec,
                                std::size_t prior_grid = 24);

/// Scalar soft-thresholding: w -> sign(w) * max(|w| - lambda/2, 0).
double soft_threshold(double w, double lambda);

/// Coordinatewise minimiser of (W_j - b)^2 + lambda |b|.
std::vector<double> lasso_toy(const SequenceData& data, double lambda);

/// Two-component prior on a coordinate mean: point mass 1-gamma at zero and
/// a N(0, tau2) slab with probability gamma.
struct SpikeSlabPrior {
  double gamma = 0.0;  ///< Slab probability in [0, 1].
  double tau2 = 0.0;   ///< Slab variance, > 0.

  void validate() const;
};

/// Exact posterior of a coordinate mean under a spike-and-slab prior.
struct SpikeSlabPosterior {
  double mass_at_zero = 0.0;  ///< Posterior probability of beta = 0.
  double slab_mean = 0.0;     ///< Mean of the continuous component.
  double slab_var = 0.0;      ///< Variance of the continuous component.

  double mixture_mean() const { return (1.0 - mass_at_zero) * slab_mean; }
};

/// Posterior of beta given W = beta + n^{-1/2} eps, computed in log space so
/// that |W| sqrt(n) up to 40 stays finite.  Requires n >= 1.
SpikeSlabPosterior spike_slab_posterior(double w, double n,
                                        const SpikeSlabPrior& prior);

/// Near-optimal lasso penalty sqrt(8 (log p - log n / (2 alpha)) / n) for
/// means decaying like j^{-alpha}.  Throws std::invalid_argument when the
/// radicand is negative (invalid regime) or arguments are out of range.
double optimal_lambda(double n, double p, double alpha);

/// Diagnostic for the tail equation n^{1/(2 alpha)} / p = 2 (1 - Phi(sqrt(n)
/// lambda / 2)) at the returned lambda: relative residual of the two sides
/// measured on log scale, |log lhs - log rhs| / |log lhs|.
double optimal_lambda_tail_residual(double n, double p, double alpha);

}  // namespace lab
