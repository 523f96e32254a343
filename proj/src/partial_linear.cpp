#include "lab/partial_linear.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "lab/stats.hpp"

namespace lab {

namespace {

constexpr std::size_t kSubsetCap = 100000;

void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument(std::string(name) + " must be finite");
  }
}

using RowMajorMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                        Eigen::RowMajor>>;

RowMajorMap mapped(const DesignMatrix& w) {
  if (w.entries.size() != w.rows * w.cols) {
    throw std::invalid_argument(
        "design matrix entry count does not match rows x cols");
  }
  return RowMajorMap(w.entries.data(), static_cast<Eigen::Index>(w.rows),
                     static_cast<Eigen::Index>(w.cols));
}

void check_response(const DesignMatrix& w, const std::vector<double>& v) {
  if (v.size() != w.rows) {
    throw std::invalid_argument("response length does not match row count");
  }
}

void check_subsets(const DesignMatrix& w,
                   const std::vector<std::vector<int>>& subsets) {
  if (subsets.empty()) {
    throw std::invalid_argument("subset list is empty");
  }
  for (const auto& s : subsets) {
    if (s.empty()) {
      throw std::invalid_argument("subsets must be nonempty");
    }
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (s[k] < 0 || static_cast<std::size_t>(s[k]) >= w.cols) {
        throw std::invalid_argument("subset index out of range");
      }
      if (k > 0 && s[k] <= s[k - 1]) {
        throw std::invalid_argument(
            "subset indices must be strictly increasing");
      }
    }
  }
}

struct SubsetFit {
  Eigen::VectorXd coef;
  double rss = 0.0;
  bool deficient = false;
};

/// Least-squares fit of v on each subset's columns, via the precomputed
/// Gram matrix; rank-deficient Gram blocks use the minimum-norm solution
/// (pinv(W'W) W'v equals pinv(W) v).
std::vector<SubsetFit> fit_subsets(const DesignMatrix& w,
                                   const std::vector<double>& v,
                                   const std::vector<std::vector<int>>& subsets) {
  const auto wm = mapped(w);
  const Eigen::Map<const Eigen::VectorXd> vm(
      v.data(), static_cast<Eigen::Index>(v.size()));
  const Eigen::MatrixXd gram = wm.transpose() * wm;
  const Eigen::VectorXd gv = wm.transpose() * vm;
  const double vv = vm.squaredNorm();

  std::vector<SubsetFit> fits(subsets.size());
  for (std::size_t k = 0; k < subsets.size(); ++k) {
    const auto& s = subsets[k];
    const Eigen::Index m = static_cast<Eigen::Index>(s.size());
    Eigen::MatrixXd gm(m, m);
    Eigen::VectorXd rhs(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      rhs(a) = gv(s[a]);
      for (Eigen::Index b = 0; b < m; ++b) {
        gm(a, b) = gram(s[a], s[b]);
      }
    }
    SubsetFit& fit = fits[k];
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(gm);
    if (lu.isInvertible()) {
      fit.coef = lu.solve(rhs);
    } else {
      fit.coef =
          Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(gm).solve(
              rhs);
      fit.deficient = true;
    }
    fit.rss = std::max(
        vv - 2.0 * fit.coef.dot(rhs) + fit.coef.dot(gm * fit.coef), 0.0);
  }
  return fits;
}

std::size_t deficient_count(const std::vector<SubsetFit>& fits) {
  std::size_t count = 0;
  for (const auto& f : fits) count += f.deficient ? 1 : 0;
  if (count == fits.size()) {
    throw std::runtime_error(
        "every subset least-squares problem is rank-deficient");
  }
  return count;
}

std::vector<double> softmax_weights(const std::vector<SubsetFit>& fits,
                                    double alpha) {
  std::vector<double> logw(fits.size());
  for (std::size_t k = 0; k < fits.size(); ++k) {
    logw[k] = -fits[k].rss / alpha;
  }
  const double lse = stats::log_sum_exp(logw);
  std::vector<double> weights(fits.size());
  for (std::size_t k = 0; k < fits.size(); ++k) {
    weights[k] = std::exp(logw[k] - lse);
  }
  return weights;
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("alpha must be positive and finite");
  }
}

/// Full-length residual vector of one subset fit.
std::vector<double> subset_residuals(const DesignMatrix& w,
                                     const std::vector<double>& v,
                                     const std::vector<int>& subset,
                                     const Eigen::VectorXd& coef) {
  Eigen::VectorXd embedded = Eigen::VectorXd::Zero(
      static_cast<Eigen::Index>(w.cols));
  for (std::size_t a = 0; a < subset.size(); ++a) {
    embedded(subset[a]) = coef(static_cast<Eigen::Index>(a));
  }
  const Eigen::VectorXd fitted = mapped(w) * embedded;
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    r[i] = v[i] - fitted(static_cast<Eigen::Index>(i));
  }
  return r;
}

std::size_t argmin_rss(const std::vector<SubsetFit>& fits) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < fits.size(); ++k) {
    if (fits[k].rss < fits[best].rss) best = k;
  }
  return best;
}

double residual_ratio(const std::vector<double>& zeta,
                      const std::vector<double>& xi) {
  long double num = 0.0;
  long double den = 0.0;
  for (std::size_t i = 0; i < zeta.size(); ++i) {
    num += static_cast<long double>(zeta[i]) * xi[i];
    den += static_cast<long double>(zeta[i]) * zeta[i];
  }
  if (static_cast<double>(den) < 1e-10 * static_cast<double>(zeta.size())) {
    throw std::runtime_error(
        "degenerate residual denominator: aggregated x-residuals are "
        "numerically zero");
  }
  return static_cast<double>(num / den);
}

}  // namespace

void PlmDesign::validate() const {
  if (n == 0) {
    throw std::invalid_argument("n must be positive");
  }
  if (p == 0 || m == 0 || m > p) {
    throw std::invalid_argument("need 1 <= m <= p");
  }
  if (phi.size() != p || psi.size() != p) {
    throw std::invalid_argument("phi and psi must have length p");
  }
  for (double c : phi) require_finite(c, "phi entry");
  for (double c : psi) require_finite(c, "psi entry");
  require_finite(beta, "beta");
  require_finite(var_zeta, "var_zeta");
  require_finite(var_xi, "var_xi");
  require_finite(cov_noise, "cov_noise");
  if (var_zeta < 0.0 || var_xi < 0.0 ||
      var_zeta * var_xi - cov_noise * cov_noise <
          -1e-12 * std::max(1.0, var_zeta * var_xi)) {
    throw std::invalid_argument("noise covariance must be PSD");
  }
  if (var_zeta > 0.0) {
    const double implied = cov_noise / var_zeta;
    if (std::abs(beta - implied) > 1e-12 * std::max(1.0, std::abs(beta))) {
      throw std::invalid_argument(
          "beta must equal cov(zeta, xi)/var(zeta) within 1e-12");
    }
  }
  if (subset_count(p, m) > kSubsetCap) {
    throw std::invalid_argument("choose(p, m) exceeds the 1e5 subset cap");
  }
}

std::size_t subset_count(std::size_t p, std::size_t m) {
  if (m > p) return 0;
  m = std::min(m, p - m);
  std::size_t count = 1;
  for (std::size_t i = 1; i <= m; ++i) {
    const double projected = static_cast<double>(count) *
                             static_cast<double>(p - m + i) /
                             static_cast<double>(i);
    if (projected > 1e15) {
      return std::numeric_limits<std::size_t>::max();
    }
    count = count * (p - m + i) / i;
  }
  return count;
}

std::vector<std::vector<int>> enumerate_subsets(std::size_t p,
                                                std::size_t m) {
  if (m == 0 || m > p) {
    throw std::invalid_argument("need 1 <= m <= p");
  }
  const std::size_t count = subset_count(p, m);
  if (count > kSubsetCap) {
    throw std::invalid_argument("choose(p, m) exceeds the 1e5 subset cap");
  }
  std::vector<std::vector<int>> subsets;
  subsets.reserve(count);
  std::vector<int> cur(m);
  std::iota(cur.begin(), cur.end(), 0);
  while (true) {
    subsets.push_back(cur);
    std::size_t i = 0;
    while (i < m) {
      const int limit =
          i + 1 < m ? cur[i + 1] : static_cast<int>(p);
      if (cur[i] + 1 < limit) break;
      ++i;
    }
    if (i == m) break;
    ++cur[i];
    for (std::size_t j = 0; j < i; ++j) cur[j] = static_cast<int>(j);
  }
  return subsets;
}

PlmDesign adversarial_disjoint_design(std::size_t n, std::size_t p,
                                      std::size_t m) {
  if (m == 0 || p < 2 * m) {
    throw std::invalid_argument(
        "disjoint-support design needs m >= 1 and p >= 2m");
  }
  PlmDesign design;
  design.n = n;
  design.p = p;
  design.m = m;
  design.phi.assign(p, 0.0);
  design.psi.assign(p, 0.0);
  const double main = 1.0 / std::sqrt(static_cast<double>(m));
  const double contamination =
      std::pow(static_cast<double>(n), -7.0 / 12.0);
  for (std::size_t j = 0; j < m; ++j) {
    design.phi[j] = main;
    design.psi[j] = contamination;
    design.psi[m + j] = main;
  }
  design.var_zeta = 1.0;
  design.cov_noise = 1.0;
  design.var_xi = 2.0;
  design.beta = 1.0;
  design.validate();
  return design;
}

PlmData generate_plm(const PlmDesign& design, rng::RngStream& stream) {
  design.validate();
  const double l11 = std::sqrt(design.var_zeta);
  const double l21 = l11 > 0.0 ? design.cov_noise / l11 : 0.0;
  const double l22 = std::sqrt(std::max(design.var_xi - l21 * l21, 0.0));

  PlmData data;
  data.w.rows = design.n;
  data.w.cols = design.p;
  data.w.entries.resize(design.n * design.p);
  data.x.resize(design.n);
  data.y.resize(design.n);
  for (std::size_t i = 0; i < design.n; ++i) {
    double dot_phi = 0.0;
    double dot_psi = 0.0;
    for (std::size_t j = 0; j < design.p; ++j) {
      const double wij = stream.normal(0.0, 1.0);
      data.w.entries[i * design.p + j] = wij;
      dot_phi += design.phi[j] * wij;
      dot_psi += design.psi[j] * wij;
    }
    const double z1 = stream.normal(0.0, 1.0);
    const double z2 = stream.normal(0.0, 1.0);
    data.x[i] = dot_phi + l11 * z1;
    data.y[i] = dot_psi + l21 * z1 + l22 * z2;
  }
  return data;
}

AggregateResult residual_aggregate_over(
    const DesignMatrix& w, const std::vector<double>& v,
    const std::vector<std::vector<int>>& subsets, double alpha) {
  check_alpha(alpha);
  check_response(w, v);
  check_subsets(w, subsets);
  const auto fits = fit_subsets(w, v, subsets);

  AggregateResult result;
  result.rank_deficient_count = deficient_count(fits);
  result.weights = softmax_weights(fits, alpha);

  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(
      static_cast<Eigen::Index>(w.cols));
  for (std::size_t k = 0; k < subsets.size(); ++k) {
    const auto& s = subsets[k];
    for (std::size_t a = 0; a < s.size(); ++a) {
      pooled(s[a]) +=
          result.weights[k] * fits[k].coef(static_cast<Eigen::Index>(a));
    }
  }
  const Eigen::VectorXd fitted = mapped(w) * pooled;
  result.residuals.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    result.residuals[i] = v[i] - fitted(static_cast<Eigen::Index>(i));
  }
  return result;
}

AggregateResult residual_aggregate(const DesignMatrix& w,
                                   const std::vector<double>& v,
                                   std::size_t m, double alpha) {
  return residual_aggregate_over(w, v, enumerate_subsets(w.cols, m), alpha);
}

SubsetWeights subset_weights(const DesignMatrix& w,
                             const std::vector<double>& x,
                             const std::vector<double>& y, std::size_t m,
                             double alpha) {
  check_alpha(alpha);
  check_response(w, x);
  check_response(w, y);
  SubsetWeights sw;
  sw.subsets = enumerate_subsets(w.cols, m);
  const auto fits_x = fit_subsets(w, x, sw.subsets);
  const auto fits_y = fit_subsets(w, y, sw.subsets);
  deficient_count(fits_x);
  sw.weights_x = softmax_weights(fits_x, alpha);
  sw.weights_y = softmax_weights(fits_y, alpha);
  return sw;
}

double beta_hat_plm(const DesignMatrix& w, const std::vector<double>& x,
                    const std::vector<double>& y, std::size_t m,
                    double alpha) {
  const AggregateResult zeta = residual_aggregate(w, x, m, alpha);
  const AggregateResult xi = residual_aggregate(w, y, m, alpha);
  return residual_ratio(zeta.residuals, xi.residuals);
}

double beta_hat_minrss(const DesignMatrix& w, const std::vector<double>& x,
                       const std::vector<double>& y, std::size_t m) {
  check_response(w, x);
  check_response(w, y);
  const auto subsets = enumerate_subsets(w.cols, m);
  const auto fits_x = fit_subsets(w, x, subsets);
  const auto fits_y = fit_subsets(w, y, subsets);
  deficient_count(fits_x);
  deficient_count(fits_y);
  const std::size_t kx = argmin_rss(fits_x);
  const std::size_t ky = argmin_rss(fits_y);
  const auto rx = subset_residuals(w, x, subsets[kx], fits_x[kx].coef);
  const auto ry = subset_residuals(w, y, subsets[ky], fits_y[ky].coef);
  return residual_ratio(rx, ry);
}

bool alpha_in_stable_region(const PlmDesign& design, double alpha) {
  return alpha > 4.0 * std::max(design.var_zeta, design.var_xi);
}

SparseApproxProfile sparse_approx_profile(const PlmDesign& design) {
  design.validate();
  const auto profile = [&](const std::vector<double>& coef,
                           double noise_var) {
    std::vector<double> squares(coef.size());
    for (std::size_t j = 0; j < coef.size(); ++j) {
      squares[j] = coef[j] * coef[j];
    }
    std::sort(squares.begin(), squares.end());
    std::vector<double> prefix(squares.size() + 1, 0.0);
    for (std::size_t j = 0; j < squares.size(); ++j) {
      prefix[j + 1] = prefix[j] + squares[j];
    }
    std::vector<double> rho(design.p);
    for (std::size_t m = 1; m <= design.p; ++m) {
      rho[m - 1] = noise_var + prefix[design.p - m + 1];
    }
    return rho;
  };
  SparseApproxProfile result;
  result.rho_phi = profile(design.phi, design.var_zeta);
  result.rho_psi = profile(design.psi, design.var_xi);
  return result;
}

}  // namespace lab
