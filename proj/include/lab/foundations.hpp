#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "lab/rng.hpp"

namespace lab {

/// Finite parameter grid with a per-point sampler, an exact log density,
/// and a loss metric.  The observation is a scalar summary whose law may
/// depend on the sample size n.
struct FiniteModel {
  std::vector<double> parameter_grid;
  std::function<double(double param, std::size_t n, rng::RngStream&)> sample;
  std::function<double(double param, std::size_t n, double x)> log_density;
  std::function<double(double, double)> loss;

  /// Throws std::invalid_argument unless the grid is nonempty with
  /// distinct points, all three callables are set, and the loss restricted
  /// to the grid is symmetric, nonnegative, and zero exactly on the
  /// diagonal.
  void validate() const;

  /// Half the minimal spacing between grid points; 0 for a single point.
  double default_threshold() const;
};

/// Grid {0, 1} with X the mean of n unit-variance Gaussian draws
/// (X ~ N(param, 1/n)) and absolute-error loss.
FiniteModel two_point_gaussian_model();

/// Estimator mapping an observation and sample size to a grid point.
using GridEstimator = std::function<double(double x, std::size_t n)>;

/// Maximum-likelihood point on the grid; ties go to the earlier point.
GridEstimator grid_mle(const FiniteModel& model);

/// Estimator that ignores the data, for demonstrating that the
/// consistency hypothesis matters.
GridEstimator constant_estimator(double value);

/// Exact posterior over the grid given prior weights (not necessarily
/// normalized) and an observation, accumulated in log space.  Throws
/// std::invalid_argument for a malformed prior and std::runtime_error when
/// every positive-prior point has zero likelihood.
std::vector<double> grid_posterior(const FiniteModel& model,
                                   const std::vector<double>& prior,
                                   std::size_t n, double x);

/// One pass of the chain parameter -> observation -> posterior draw,
/// with the estimator evaluated on the observation.
struct ChainDraw {
  double parameter = 0.0;
  double posterior_draw = 0.0;
  double estimate = 0.0;
};

ChainDraw chain_replicate(const FiniteModel& model,
                          const std::vector<double>& prior,
                          const GridEstimator& estimator, std::size_t n,
                          rng::RngStream& stream);

/// Exceedance probabilities at one sample size, with binomial MC
/// standard errors.
struct PersistenceRow {
  std::size_t n = 0;
  double p_estimator = 0.0;  ///< P(loss(parameter, estimate) > delta).
  double p_posterior = 0.0;  ///< P(loss(posterior draw, estimate) > delta).
  double p_pair = 0.0;       ///< P(loss(parameter, posterior draw) > delta).
  double se_estimator = 0.0;
  double se_posterior = 0.0;
  double se_pair = 0.0;
};

struct PersistenceReport {
  double delta = 0.0;
  std::size_t reps = 0;
  std::vector<PersistenceRow> rows;
  /// p_pair <= p_estimator + p_posterior + 3 combined SE on every row.
  /// At the default threshold the inequality holds per replication, so the
  /// slack is never needed on a discrete grid.
  bool triangle_ok = true;
  /// Every probability non-increasing along n_grid within 3 combined SE.
  bool decaying = true;
};

/// Simulates the chain at each n of n_grid and reports the three
/// exceedance probabilities at threshold delta; delta <= 0 selects the
/// model default (half the minimal grid spacing).
PersistenceReport persistence_check(const FiniteModel& model,
                                    const std::vector<double>& prior,
                                    const GridEstimator& estimator,
                                    const std::vector<std::size_t>& n_grid,
                                    std::size_t reps,
                                    rng::RngStream& stream,
                                    double delta = 0.0);

/// Exceedance probabilities of the two-point Gaussian chain under the
/// uniform prior and grid MLE, at any threshold below the grid spacing.
struct TwoPointOracle {
  double p_estimator = 0.0;
  double p_posterior = 0.0;
  double p_pair = 0.0;
};

/// The first two probabilities equal Phi(-sqrt(n)/2) exactly; the pair
/// probability is the posterior overlap integral
/// int phi(t+c) phi(t-c) / (phi(t+c) + phi(t-c)) dt with c = sqrt(n)/2,
/// evaluated by Simpson quadrature to ~1e-13.
TwoPointOracle two_point_exceedance_oracle(std::size_t n);

/// Scalar prior and likelihood with an exactly computable posterior mean.
struct JointModel {
  std::function<double(rng::RngStream&)> sample_parameter;
  std::function<double(double theta, rng::RngStream&)> sample_observation;
  std::function<double(double x)> posterior_mean;
  bool degenerate = false;  ///< The observation determines the parameter.

  void validate() const;
};

/// Beta(a, b) prior with Binomial(trials, theta) observations; the
/// posterior mean is (a + successes) / (a + b + trials).
JointModel beta_binomial_model(double a, double b, int trials);

/// N(prior_mean, prior_var) prior with X | theta ~ N(theta, noise_var);
/// noise_var = 0 marks the degenerate identity case.
JointModel normal_normal_model(double prior_mean, double prior_var,
                               double noise_var);

/// Paired comparison of the posterior mean against the parameter draw.
struct BayesBiasReport {
  std::size_t reps = 0;
  bool degenerate = false;
  double mean_estimator = 0.0;
  double mean_parameter = 0.0;
  double var_estimator = 0.0;   ///< Sample variance of the posterior means.
  double var_parameter = 0.0;   ///< Sample variance of the parameter draws.
  double mean_gap = 0.0;        ///< mean(estimator - parameter).
  double mean_gap_se = 0.0;
  double variance_gap = 0.0;    ///< var_parameter - var_estimator.
  double variance_gap_se = 0.0;
  bool mean_matched = false;    ///< |mean_gap| <= 3 mean_gap_se.
  bool variance_reduced = false;  ///< Gap > 3 SE; skipped when degenerate.
};

/// Draws reps pairs (theta, X), applies the exact posterior mean, and
/// tests that its expectation matches E theta while its variance falls
/// short of var theta.  Requires reps >= 2.
BayesBiasReport bayes_bias_check(const JointModel& model, std::size_t reps,
                                 rng::RngStream& stream);

}  // namespace lab
