#pragma once

#include <cstddef>
#include <vector>

#include "lab/rng.hpp"

namespace lab {

/// Dense row-major matrix of regressors.
struct DesignMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> entries;

  double at(std::size_t i, std::size_t j) const {
    return entries[i * cols + j];
  }
};

/// Partial linear model X = phi'W + zeta, Y = psi'W + xi with independent
/// standard normal coordinates of W and bivariate normal noise; the scalar
/// of interest is beta = cov(zeta, xi) / var(zeta).
struct PlmDesign {
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t m = 0;  ///< Working model size for the subset estimators.
  std::vector<double> phi;
  std::vector<double> psi;
  double beta = 0.0;
  double var_zeta = 1.0;
  double var_xi = 1.0;
  double cov_noise = 0.0;

  /// Throws std::invalid_argument unless the noise covariance is PSD,
  /// beta equals cov(zeta, xi)/var(zeta) within 1e-12 (skipped when
  /// var_zeta = 0, which forces cov_noise = 0), choose(p, m) <= 1e5, and
  /// the coefficient vectors have length p.
  void validate() const;
};

/// Number of size-m subsets of {1..p}, saturating instead of overflowing.
std::size_t subset_count(std::size_t p, std::size_t m);

/// All size-m subsets of {0..p-1} in colexicographic order, each sorted
/// ascending.  Throws std::invalid_argument when m = 0, m > p, or the
/// enumeration would exceed 1e5 subsets.
std::vector<std::vector<int>> enumerate_subsets(std::size_t p, std::size_t m);

/// The non-overlap stress design: phi puts m^{-1/2} on the first m
/// coordinates; psi puts m^{-1/2} on the next m coordinates plus
/// sub-detection contamination n^{-7/12} on phi's support; noise
/// covariance [[1, 1], [1, 2]], so beta = 1.  Requires p >= 2m.
PlmDesign adversarial_disjoint_design(std::size_t n, std::size_t p,
                                      std::size_t m);

/// Simulated draw from the model.
struct PlmData {
  DesignMatrix w;
  std::vector<double> x;
  std::vector<double> y;
};

/// Draws W row by row, then the noise pair, per observation.  Coefficient
/// sums accumulate left to right in coordinate order, so noiseless designs
/// reproduce phi'W and psi'W bit for bit.
PlmData generate_plm(const PlmDesign& design, rng::RngStream& stream);

/// Softmax-weighted residual aggregation over a subset enumeration.
struct AggregateResult {
  std::vector<double> residuals;  ///< Length-n weighted residual vector.
  std::vector<double> weights;    ///< Per-subset weights, enumeration order.
  std::size_t rank_deficient_count = 0;
};

/// For each size-m subset M, fits V on the columns W_M by least squares
/// and weights the residual vector proportionally to exp(-RSS_M / alpha),
/// normalized in log space.  Rank-deficient subsets fall back to the
/// minimum-norm (pseudo-inverse) solution and are counted; if every subset
/// is rank-deficient the aggregation throws std::runtime_error.
AggregateResult residual_aggregate(const DesignMatrix& w,
                                   const std::vector<double>& v,
                                   std::size_t m, double alpha);

/// Same aggregation over an explicit subset list.  Weights depend only on
/// the set of subsets, not their order.
AggregateResult residual_aggregate_over(
    const DesignMatrix& w, const std::vector<double>& v,
    const std::vector<std::vector<int>>& subsets, double alpha);

/// The two weight vectors of the estimator, over the colex enumeration.
struct SubsetWeights {
  std::vector<std::vector<int>> subsets;
  std::vector<double> weights_x;
  std::vector<double> weights_y;
};

SubsetWeights subset_weights(const DesignMatrix& w,
                             const std::vector<double>& x,
                             const std::vector<double>& y, std::size_t m,
                             double alpha);

/// Exponential-weighting estimator of beta: the ratio of inner products of
/// the two aggregated residual vectors.  Replacing y by c y multiplies the
/// estimate by c only when the y-aggregation temperature is scaled by c^2;
/// with the single shared alpha used here that contract is exact for the
/// pair (c y, c^2 alpha) via residual_aggregate.  Throws
/// std::runtime_error when the denominator falls below 1e-10 n.
double beta_hat_plm(const DesignMatrix& w, const std::vector<double>& x,
                    const std::vector<double>& y, std::size_t m,
                    double alpha);

/// Single-model plug-in: fits X and Y each on their own minimum-RSS
/// subset (ties broken by enumeration order) and returns the residual
/// inner-product ratio.  Same degeneracy errors as beta_hat_plm.
double beta_hat_minrss(const DesignMatrix& w, const std::vector<double>& x,
                       const std::vector<double>& y, std::size_t m);

/// Whether alpha clears the documented stability condition
/// alpha > 4 max(var zeta, var xi).  Config validation warns (and does not
/// fail) below it: probing the unstable region is part of the lab's
/// purpose.
bool alpha_in_stable_region(const PlmDesign& design, double alpha);

/// Sparse approximation error profiles rho(m) = inf over models of size
/// < m of the residual second moment, for m = 1..p.  With independent
/// standard normal coordinates this is the noise variance plus the sum of
/// the p - m + 1 smallest squared coefficients.
struct SparseApproxProfile {
  std::vector<double> rho_phi;
  std::vector<double> rho_psi;
};

SparseApproxProfile sparse_approx_profile(const PlmDesign& design);

}  // namespace lab
