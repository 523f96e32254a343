#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "lab/rng.hpp"

namespace lab {

/// One hospital's patient pair.  The first patient (x, y) is always
/// recorded; the second patient (x2, y2) is recorded exactly when w = 1,
/// and both fields hold 0.0 when w = 0.
struct HospitalRecord {
  double x = 0.0;
  double y = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
  int w = 0;
};

/// Natural parameters of the jointly Gaussian hospital model
///
///   (g, h) ~ N((mu_g, mu_h), [[var_g, cov_gh], [cov_gh, var_h]])
///   X = g + eta,           Y = h + theta X + eps
///   X' = g + eta',         Y' = h + theta X' + eps'
///
/// with (eta, eps) and (eta', eps') independent copies of a mean-zero
/// bivariate normal noise law.
struct GaussianParams {
  double theta = 1.0;
  double mu_g = 1.0;
  double mu_h = -0.3;
  double var_g = 1.0;
  double cov_gh = 0.5;
  double var_h = 0.8;
  double var_eta = 0.5;
  double cov_noise = 0.0;  ///< cov(eta, eps); the joint fit pins this at 0.
  double var_eps = 0.4;

  /// Throws std::invalid_argument unless both covariance matrices are
  /// positive semi-definite and every field is finite.
  void validate() const;
};

/// Data-generating description: model parameters plus the observation
/// mechanism w ~ Bernoulli(sigmoid(a + kappa_w (g + h))), with the
/// intercept a calibrated so the mean observation rate equals
/// observe_rate.  observe_rate = 1 records every second patient.
struct MixedModelTruth {
  GaussianParams params;
  double kappa_w = 0.0;
  double observe_rate = 0.3;

  void validate() const;
};

/// Solves E[sigmoid(a + kappa_w (g + h))] = observe_rate for the intercept
/// a by bisection, integrating the logistic link against the normal law of
/// g + h.  Requires observe_rate in (0, 1); the boundary rate 1 has no
/// finite intercept and generate_hospitals handles it directly.
double observation_intercept(const MixedModelTruth& truth);

/// Draws n hospital records from the model.  Per hospital the draw order
/// is fixed: (g, h), first-patient noise, second-patient noise, then the
/// observation coin, so records are reproducible bit-for-bit from the
/// stream state regardless of which second patients end up observed.
std::vector<HospitalRecord> generate_hospitals(const MixedModelTruth& truth,
                                               std::size_t n,
                                               rng::RngStream& stream);

/// Within-hospital differencing estimator of theta over the complete
/// records: sum dx dy / sum dx^2 with dx = x2 - x, dy = y2 - y.  It sees
/// the data only through these differences, so adding per-hospital
/// constants to (g, h) leaves the value unchanged bit-for-bit.  Throws
/// std::runtime_error when fewer than two records are complete (no data)
/// and when sum dx^2 = 0 (degenerate design).
double differencing_estimator(const std::vector<HospitalRecord>& records);

/// Total Gaussian log-likelihood of the records under the given
/// parameters.  Complete records contribute the 4-dimensional density of
/// (x, y, x2, y2); incomplete records contribute the 2-dimensional
/// marginal of (x, y) when use_incomplete is set and are dropped
/// otherwise.  Throws std::invalid_argument when the implied observation
/// covariance is not positive definite.
double joint_log_likelihood(const std::vector<HospitalRecord>& records,
                            const GaussianParams& params,
                            bool use_incomplete);

/// Unconstrained optimizer coordinates for the eight free parameters:
/// (theta, mu_g, mu_h, a11, a21, a22, log sd eta, log sd eps), where
/// [[e^a11, 0], [a21, e^a22]] is the Cholesky factor of the (g, h)
/// covariance.  cov_noise is not identified from the observable law (the
/// complete-data law exposes eight moment functionals) and stays pinned
/// at zero.
using FitCoordinates = std::array<double, 8>;

/// Expands coordinates into natural parameters (cov_noise = 0).
GaussianParams params_from_coordinates(const FitCoordinates& psi);

/// Inverts params_from_coordinates.  Throws std::invalid_argument when
/// cov_noise != 0 or any of the variance blocks fails to be strictly
/// positive definite.
FitCoordinates coordinates_from_params(const GaussianParams& params);

/// Objective the fit minimizes: negative mean log-likelihood per used
/// record.  Exposed so its gradient can be checked externally.
double fit_objective(const std::vector<HospitalRecord>& records,
                     const FitCoordinates& psi, bool use_incomplete);

/// Analytic gradient of fit_objective in the same coordinates.
FitCoordinates fit_gradient(const std::vector<HospitalRecord>& records,
                            const FitCoordinates& psi, bool use_incomplete);

/// Maximum-likelihood fit of the model, with diagnostics.
struct MixedFit {
  GaussianParams params;       ///< Fitted values; params.theta is theta_hat.
  double log_likelihood = 0.0;  ///< Total log-likelihood at the optimum.
  double gradient_norm = 0.0;  ///< Norm of the mean-log-likelihood gradient.
  int iterations = 0;
  std::size_t complete_count = 0;
  std::size_t incomplete_count = 0;
  bool used_incomplete = false;
};

/// Fits the eight free parameters by BFGS on the exact marginal
/// likelihood, started from moment estimates (non-positive-definite moment
/// blocks are repaired by clipping eigenvalues at 1e-10).  Requires at
/// least 50 records and at least two complete ones.  Throws
/// std::runtime_error when the gradient norm still exceeds 1e-5 after the
/// iteration budget, with the norm and iteration count in the message.
MixedFit gaussian_joint_fit(const std::vector<HospitalRecord>& records,
                            bool use_incomplete);

}  // namespace lab
