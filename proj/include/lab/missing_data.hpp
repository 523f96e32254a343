#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "lab/rng.hpp"

namespace lab {

/// Per-unit records of the Bernoulli panel: success probabilities p,
/// sampling weights w, selection indicators s, and outcomes y.  Outcome
/// entries are drawn for every unit to keep stream consumption fixed, but
/// only entries with s_i = 1 carry meaning.
struct BernoulliPanel {
  std::vector<double> p;
  std::vector<double> w;
  std::vector<int> s;
  std::vector<int> y;
  double clamp_rate = 0.0;  ///< Fraction of units hit by the coupling clamp.

  std::size_t size() const { return p.size(); }

  /// The estimand: unweighted mean of the true success probabilities.
  double true_mean() const;

  /// Weight-tilted mean sum(w p) / sum(w), the naive estimator's target.
  double weighted_true_mean() const;
};

/// Generator configuration for the panel.
struct PanelGenConfig {
  enum class PLaw { constant, beta, coupled };
  enum class WLaw { constant, strata, continuous };

  std::size_t n = 0;

  PLaw p_law = PLaw::constant;
  double p_value = 0.4;   ///< Constant value, or the coupled-law base level.
  double tau = 10.0;      ///< Beta-law concentration.
  double rho = 0.4;       ///< Beta-law mean.
  double kappa = 0.0;     ///< Coupling strength of p to the weights.
  double clamp_eps = 1e-3;  ///< Coupled p is clamped to [eps, 1 - eps].

  WLaw w_law = WLaw::constant;
  double w_value = 1.0;
  std::vector<double> stratum_weights;
  std::vector<double> stratum_fractions;  ///< Positive, summing to 1.
  double w_min = 0.02;  ///< Weight floor; all laws must respect it.

  /// Throws std::invalid_argument on any malformed field combination.
  void validate() const;
};

/// Draws a panel: weights, then success probabilities, then selections,
/// then outcomes, each from its own substream.  Under the coupled law,
/// p_i = clamp(base + kappa (w_i - mean w), eps, 1 - eps); a clamping rate
/// above 5% throws std::runtime_error as a config pathology.
BernoulliPanel generate_panel(const PanelGenConfig& cfg,
                              rng::RngStream& stream);

/// Ratio form of the inverse-probability estimator:
/// sum(s y / w) / sum(s / w).  Throws std::runtime_error when no unit is
/// observed.
double ht_hajek(const BernoulliPanel& panel);

/// Plain mean of the observed outcomes, ignoring the weights.
double naive_bayes_mean(const BernoulliPanel& panel);

/// Stratified posterior-mean estimator over a weight-value partition:
/// (1/n) sum_k n_k m_k with m_k the observed mean in stratum k.  Strata
/// with no observed unit contribute the grand observed mean.  Every unit's
/// weight must match one of the stratum values exactly.
double stratified_bayes(const BernoulliPanel& panel,
                        const std::vector<double>& stratum_weights);

/// Asymptotic variance and bias functionals of the fixed panel.
struct AsymptoticVariances {
  double v_ht = 0.0;  ///< Variance of sqrt(n mean-w) (ht_hajek - mean p).
  double v_b = 0.0;   ///< Variance of the naive mean around its own target.
  double e_b = 0.0;   ///< Bias functional sqrt(mean-w / n) sum (w/mean-w - 1)(p - mean p).
};

AsymptoticVariances asymptotic_variances(const BernoulliPanel& panel);

/// Per-unit hierarchical shrinkage p-hat + (y_i - p-hat) / (tau0 + 1); the
/// output mean equals the observed mean exactly.
std::vector<double> beta_hierarchy_shrinkage(const std::vector<double>& y_obs,
                                             double tau0);

/// Summary of the hierarchy-level posterior over the mean parameter.
struct RhoPosterior {
  double mode = 0.0;
  double sd = 0.0;
};

/// Grid posterior over rho on (0,1) with 10^4 cells, proportional to
/// prior(rho) rho^(sum y) (1-rho)^(n - sum y), accumulated in log space.
/// Single-trial outcomes make the marginal likelihood free of tau0, which
/// is validated but does not enter the grid.
RhoPosterior posterior_rho_concentration(
    const std::vector<double>& y_obs,
    const std::function<double(double)>& prior_rho, double tau0);

}  // namespace lab
