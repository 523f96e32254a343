#include "lab/mixed_model.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace lab {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

using Mat2 = Eigen::Matrix2d;
using Vec2 = Eigen::Vector2d;
using Mat42 = Eigen::Matrix<double, 4, 2>;

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument(std::string(name) + " must be finite");
  }
}

void require_psd2(double a, double b, double c, const char* what) {
  if (a < 0.0 || c < 0.0) {
    throw std::invalid_argument(std::string(what) +
                                " must have nonnegative variances");
  }
  const double det = a * c - b * b;
  if (det < -1e-12 * std::max(1.0, a * c)) {
    throw std::invalid_argument(std::string(what) +
                                " must be positive semi-definite");
  }
}

/// Lower Cholesky factor of a 2x2 PSD matrix, tolerating zero variances.
Mat2 chol2(double a, double b, double c) {
  Mat2 l = Mat2::Zero();
  l(0, 0) = std::sqrt(std::max(a, 0.0));
  l(1, 0) = l(0, 0) > 0.0 ? b / l(0, 0) : 0.0;
  l(1, 1) = std::sqrt(std::max(c - l(1, 0) * l(1, 0), 0.0));
  return l;
}

/// Structural pieces shared by the 4-d and 2-d observation laws.  The
/// per-patient map is (x, y) = j2 (g, h) + noise with j2 = [[1,0],[theta,1]];
/// nn is the noise contribution to the (x, y) covariance.
struct ModelBlocks {
  double theta = 0.0;
  Vec2 mu = Vec2::Zero();
  Mat2 su = Mat2::Zero();
  Mat2 nn = Mat2::Zero();
  Mat2 j2 = Mat2::Zero();
};

ModelBlocks natural_blocks(const GaussianParams& p) {
  ModelBlocks b;
  b.theta = p.theta;
  b.mu << p.mu_g, p.mu_h;
  b.su << p.var_g, p.cov_gh, p.cov_gh, p.var_h;
  const double cross = p.theta * p.var_eta + p.cov_noise;
  b.nn << p.var_eta, cross, cross,
      p.theta * p.theta * p.var_eta + p.var_eps + 2.0 * p.theta * p.cov_noise;
  b.j2 << 1.0, 0.0, p.theta, 1.0;
  return b;
}

template <int D>
struct BlockStats {
  double n = 0.0;
  Eigen::Matrix<double, D, 1> sum = Eigen::Matrix<double, D, 1>::Zero();
  Eigen::Matrix<double, D, D> sc = Eigen::Matrix<double, D, D>::Zero();

  void add(const Eigen::Matrix<double, D, 1>& v) {
    n += 1.0;
    sum += v;
    sc += v * v.transpose();
  }
};

struct SuffStats {
  BlockStats<4> complete;
  BlockStats<2> incomplete;
  bool use_incomplete = false;

  double used_records() const {
    return complete.n + (use_incomplete ? incomplete.n : 0.0);
  }
};

SuffStats collect_stats(const std::vector<HospitalRecord>& records,
                        bool use_incomplete) {
  SuffStats s;
  s.use_incomplete = use_incomplete;
  for (const auto& r : records) {
    if (r.w != 0 && r.w != 1) {
      throw std::invalid_argument("record w must be 0 or 1");
    }
    if (r.w == 1) {
      s.complete.add(Eigen::Vector4d(r.x, r.y, r.x2, r.y2));
    } else if (use_incomplete) {
      s.incomplete.add(Vec2(r.x, r.y));
    }
  }
  return s;
}

/// Log-likelihood of one Gaussian block from its sufficient statistics.
/// Returns false (without touching out) when the covariance fails its
/// Cholesky factorization.
template <int D>
bool block_loglik(const BlockStats<D>& st,
                  const Eigen::Matrix<double, D, 1>& m,
                  const Eigen::Matrix<double, D, D>& cov, double* out) {
  if (st.n == 0.0) {
    *out = 0.0;
    return true;
  }
  Eigen::LLT<Eigen::Matrix<double, D, D>> llt(cov);
  if (llt.info() != Eigen::Success) return false;
  double logdet = 0.0;
  for (int i = 0; i < D; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  const Eigen::Matrix<double, D, D> centered =
      st.sc - st.sum * m.transpose() - m * st.sum.transpose() +
      st.n * m * m.transpose();
  const double quad = llt.solve(centered).trace();
  *out = -0.5 * (st.n * (D * kLog2Pi + logdet) + quad);
  return std::isfinite(*out);
}

/// Inner-product terms for the chain rule: d loglik = <grad_cov, dS> +
/// grad_mean . dm with <,> the Frobenius product over symmetric matrices.
template <int D>
struct BlockGradTerms {
  Eigen::Matrix<double, D, D> grad_cov;
  Eigen::Matrix<double, D, 1> grad_mean;
  bool active = false;
};

template <int D>
bool block_grad_terms(const BlockStats<D>& st,
                      const Eigen::Matrix<double, D, 1>& m,
                      const Eigen::Matrix<double, D, D>& cov,
                      BlockGradTerms<D>* out) {
  out->active = st.n > 0.0;
  if (!out->active) return true;
  Eigen::LLT<Eigen::Matrix<double, D, D>> llt(cov);
  if (llt.info() != Eigen::Success) return false;
  const Eigen::Matrix<double, D, D> inv =
      llt.solve(Eigen::Matrix<double, D, D>::Identity());
  const Eigen::Matrix<double, D, D> centered =
      st.sc - st.sum * m.transpose() - m * st.sum.transpose() +
      st.n * m * m.transpose();
  out->grad_cov = 0.5 * (inv * centered * inv - st.n * inv);
  out->grad_mean = inv * (st.sum - st.n * m);
  return out->grad_cov.allFinite() && out->grad_mean.allFinite();
}

Mat42 stack_rows(const Mat2& top, const Mat2& bottom) {
  Mat42 j;
  j.topRows<2>() = top;
  j.bottomRows<2>() = bottom;
  return j;
}

Eigen::Matrix4d four_point_cov(const ModelBlocks& b) {
  const Mat42 j4 = stack_rows(b.j2, b.j2);
  Eigen::Matrix4d cov = j4 * b.su * j4.transpose();
  cov.block<2, 2>(0, 0) += b.nn;
  cov.block<2, 2>(2, 2) += b.nn;
  return cov;
}

double total_loglik(const SuffStats& st, const ModelBlocks& b, bool* ok) {
  const Mat42 j4 = stack_rows(b.j2, b.j2);
  const Eigen::Vector4d m4 = j4 * b.mu;
  double l4 = 0.0;
  double l2 = 0.0;
  *ok = block_loglik<4>(st.complete, m4, four_point_cov(b), &l4);
  if (*ok && st.use_incomplete) {
    const Mat2 s2 = b.j2 * b.su * b.j2.transpose() + b.nn;
    *ok = block_loglik<2>(st.incomplete, Vec2(b.j2 * b.mu), s2, &l2);
  }
  return l4 + l2;
}

/// Directional structure of one optimizer coordinate: derivatives of the
/// (g,h) covariance, the noise block, the per-patient map, and the mean.
struct Variation {
  Mat2 d_su = Mat2::Zero();
  Mat2 d_nn = Mat2::Zero();
  Mat2 d_j = Mat2::Zero();
  Vec2 d_mu = Vec2::Zero();
};

std::array<Variation, 8> coordinate_variations(const FitCoordinates& psi,
                                               const ModelBlocks& b) {
  const double theta = psi[0];
  const double a21 = psi[4];
  const double l11 = std::exp(psi[3]);
  const double l22 = std::exp(psi[5]);
  const double p = std::exp(2.0 * psi[6]);
  const double r = std::exp(2.0 * psi[7]);

  std::array<Variation, 8> v;
  v[0].d_j << 0.0, 0.0, 1.0, 0.0;
  v[0].d_nn << 0.0, p, p, 2.0 * theta * p;
  v[1].d_mu << 1.0, 0.0;
  v[2].d_mu << 0.0, 1.0;
  v[3].d_su << 2.0 * b.su(0, 0), b.su(0, 1), b.su(0, 1), 0.0;
  v[4].d_su << 0.0, l11, l11, 2.0 * a21;
  v[5].d_su << 0.0, 0.0, 0.0, 2.0 * l22 * l22;
  v[6].d_nn << 2.0 * p, 2.0 * theta * p, 2.0 * theta * p,
      2.0 * theta * theta * p;
  v[7].d_nn << 0.0, 0.0, 0.0, 2.0 * r;
  return v;
}

bool total_gradient(const SuffStats& st, const FitCoordinates& psi,
                    FitCoordinates* grad) {
  const ModelBlocks b = natural_blocks(params_from_coordinates(psi));
  const Mat42 j4 = stack_rows(b.j2, b.j2);
  const Eigen::Vector4d m4 = j4 * b.mu;

  BlockGradTerms<4> t4;
  if (!block_grad_terms<4>(st.complete, m4, four_point_cov(b), &t4)) {
    return false;
  }
  BlockGradTerms<2> t2;
  t2.active = false;
  if (st.use_incomplete) {
    const Mat2 s2 = b.j2 * b.su * b.j2.transpose() + b.nn;
    if (!block_grad_terms<2>(st.incomplete, Vec2(b.j2 * b.mu), s2, &t2)) {
      return false;
    }
  }

  const auto variations = coordinate_variations(psi, b);
  for (std::size_t k = 0; k < variations.size(); ++k) {
    const Variation& v = variations[k];
    double g = 0.0;
    if (t4.active) {
      const Mat42 dj4 = stack_rows(v.d_j, v.d_j);
      Eigen::Matrix4d ds = dj4 * b.su * j4.transpose() +
                           j4 * b.su * dj4.transpose() +
                           j4 * v.d_su * j4.transpose();
      ds.block<2, 2>(0, 0) += v.d_nn;
      ds.block<2, 2>(2, 2) += v.d_nn;
      const Eigen::Vector4d dm = dj4 * b.mu + j4 * v.d_mu;
      g += t4.grad_cov.cwiseProduct(ds).sum() + t4.grad_mean.dot(dm);
    }
    if (t2.active) {
      const Mat2 ds = v.d_j * b.su * b.j2.transpose() +
                      b.j2 * b.su * v.d_j.transpose() +
                      b.j2 * v.d_su * b.j2.transpose() + v.d_nn;
      const Vec2 dm = v.d_j * b.mu + b.j2 * v.d_mu;
      g += t2.grad_cov.cwiseProduct(ds).sum() + t2.grad_mean.dot(dm);
    }
    (*grad)[k] = g;
  }
  return true;
}

/// Moment-based starting point for the optimizer, built from the complete
/// records; covariance blocks that come out indefinite are repaired by
/// clipping eigenvalues at 1e-10.
FitCoordinates moment_start(const std::vector<HospitalRecord>& records) {
  double n = 0.0;
  Eigen::Vector4d s = Eigen::Vector4d::Zero();
  Eigen::Matrix4d sc = Eigen::Matrix4d::Zero();
  for (const auto& r : records) {
    if (r.w == 1) {
      const Eigen::Vector4d v(r.x, r.y, r.x2, r.y2);
      n += 1.0;
      s += v;
      sc += v * v.transpose();
    }
  }
  const Eigen::Vector4d mean = s / n;
  const Eigen::Matrix4d cov = sc / n - mean * mean.transpose();

  double theta0;
  try {
    theta0 = differencing_estimator(records);
  } catch (const std::runtime_error&) {
    theta0 = 0.0;
  }
  if (!std::isfinite(theta0) || std::abs(theta0) > 50.0) theta0 = 0.0;

  const double vx = 0.5 * (cov(0, 0) + cov(2, 2));
  const double vy = 0.5 * (cov(1, 1) + cov(3, 3));
  const double cross_xy = 0.5 * (cov(0, 3) + cov(1, 2));
  const double a0 = cov(0, 2);
  const double p0 = std::max(vx - a0, 1e-10);
  const double b0 = cross_xy - theta0 * a0;
  const double c0 = cov(1, 3) - theta0 * theta0 * a0 - 2.0 * theta0 * b0;
  const double r0 = std::max(
      vy - theta0 * theta0 * vx - c0 - 2.0 * theta0 * b0, 1e-10);

  Mat2 su;
  su << a0, b0, b0, c0;
  Eigen::SelfAdjointEigenSolver<Mat2> es(su);
  const Vec2 lam = es.eigenvalues().cwiseMax(1e-10);
  su = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();

  GaussianParams init;
  init.theta = theta0;
  init.mu_g = 0.5 * (mean(0) + mean(2));
  init.mu_h = 0.5 * (mean(1) + mean(3)) - theta0 * init.mu_g;
  init.var_g = su(0, 0);
  init.cov_gh = su(0, 1);
  init.var_h = su(1, 1);
  init.var_eta = p0;
  init.cov_noise = 0.0;
  init.var_eps = r0;
  return coordinates_from_params(init);
}

struct FitContext {
  const SuffStats* stats;
  double scale;
};

FitCoordinates from_gsl(const gsl_vector* v) {
  FitCoordinates psi;
  for (std::size_t k = 0; k < psi.size(); ++k) {
    psi[k] = gsl_vector_get(v, k);
  }
  return psi;
}

double objective_cb(const gsl_vector* v, void* raw) {
  const auto* ctx = static_cast<const FitContext*>(raw);
  bool ok = true;
  const ModelBlocks b =
      natural_blocks(params_from_coordinates(from_gsl(v)));
  const double l = total_loglik(*ctx->stats, b, &ok);
  if (!ok) return GSL_NAN;
  return -ctx->scale * l;
}

void gradient_cb(const gsl_vector* v, void* raw, gsl_vector* out) {
  const auto* ctx = static_cast<const FitContext*>(raw);
  FitCoordinates grad;
  if (!total_gradient(*ctx->stats, from_gsl(v), &grad)) {
    gsl_vector_set_all(out, GSL_NAN);
    return;
  }
  for (std::size_t k = 0; k < grad.size(); ++k) {
    gsl_vector_set(out, k, -ctx->scale * grad[k]);
  }
}

void objective_gradient_cb(const gsl_vector* v, void* raw, double* f,
                           gsl_vector* out) {
  *f = objective_cb(v, raw);
  gradient_cb(v, raw, out);
}

double euclidean_norm(const FitCoordinates& g) {
  double s = 0.0;
  for (double v : g) s += v * v;
  return std::sqrt(s);
}

}  // namespace

void GaussianParams::validate() const {
  require_finite(theta, "theta");
  require_finite(mu_g, "mu_g");
  require_finite(mu_h, "mu_h");
  require_finite(var_g, "var_g");
  require_finite(cov_gh, "cov_gh");
  require_finite(var_h, "var_h");
  require_finite(var_eta, "var_eta");
  require_finite(cov_noise, "cov_noise");
  require_finite(var_eps, "var_eps");
  require_psd2(var_g, cov_gh, var_h, "(g,h) covariance");
  require_psd2(var_eta, cov_noise, var_eps, "noise covariance");
}

void MixedModelTruth::validate() const {
  params.validate();
  require_finite(kappa_w, "kappa_w");
  if (!(observe_rate > 0.0 && observe_rate <= 1.0)) {
    throw std::invalid_argument("observe_rate must lie in (0, 1]");
  }
}

double observation_intercept(const MixedModelTruth& truth) {
  truth.validate();
  const double rate = truth.observe_rate;
  if (rate >= 1.0) {
    throw std::invalid_argument(
        "observe_rate 1 has no finite intercept; the generator records "
        "every second patient directly");
  }
  const GaussianParams& p = truth.params;
  const double mean_s = p.mu_g + p.mu_h;
  const double var_s = p.var_g + 2.0 * p.cov_gh + p.var_h;
  const double kappa = truth.kappa_w;
  if (kappa == 0.0 || var_s == 0.0) {
    return std::log(rate / (1.0 - rate)) - kappa * mean_s;
  }

  const double sd = std::sqrt(var_s);
  const auto mean_rate = [&](double a) {
    const double lo = mean_s - 12.0 * sd;
    const double hi = mean_s + 12.0 * sd;
    const int panels = 4096;
    const double h = (hi - lo) / panels;
    const auto integrand = [&](double s) {
      const double z = (s - mean_s) / sd;
      return sigmoid(a + kappa * s) *
             std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * M_PI));
    };
    long double acc = integrand(lo) + integrand(hi);
    for (int i = 1; i < panels; ++i) {
      acc += integrand(lo + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    }
    return static_cast<double>(acc * h / 3.0);
  };

  const double span = std::abs(kappa) * (std::abs(mean_s) + 12.0 * sd);
  double lo = -(span + 40.0);
  double hi = span + 40.0;
  for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, std::abs(lo));
       ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_rate(mid) < rate ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<HospitalRecord> generate_hospitals(const MixedModelTruth& truth,
                                               std::size_t n,
                                               rng::RngStream& stream) {
  truth.validate();
  if (n == 0) {
    throw std::invalid_argument("need at least one hospital");
  }
  const GaussianParams& p = truth.params;
  const Mat2 lu = chol2(p.var_g, p.cov_gh, p.var_h);
  const Mat2 le = chol2(p.var_eta, p.cov_noise, p.var_eps);
  const bool always = truth.observe_rate >= 1.0;
  const double intercept = always ? 0.0 : observation_intercept(truth);

  std::vector<HospitalRecord> records(n);
  for (auto& r : records) {
    const double z1 = stream.normal(0.0, 1.0);
    const double z2 = stream.normal(0.0, 1.0);
    const double g = p.mu_g + lu(0, 0) * z1;
    const double h = p.mu_h + lu(1, 0) * z1 + lu(1, 1) * z2;

    const double z3 = stream.normal(0.0, 1.0);
    const double z4 = stream.normal(0.0, 1.0);
    r.x = g + le(0, 0) * z3;
    r.y = h + p.theta * r.x + le(1, 0) * z3 + le(1, 1) * z4;

    const double z5 = stream.normal(0.0, 1.0);
    const double z6 = stream.normal(0.0, 1.0);
    const double x2 = g + le(0, 0) * z5;
    const double y2 = h + p.theta * x2 + le(1, 0) * z5 + le(1, 1) * z6;

    const double prob =
        always ? 1.0 : sigmoid(intercept + truth.kappa_w * (g + h));
    r.w = stream.bernoulli(prob);
    if (r.w == 1) {
      r.x2 = x2;
      r.y2 = y2;
    }
  }
  return records;
}

double differencing_estimator(const std::vector<HospitalRecord>& records) {
  long double sxx = 0.0;
  long double sxy = 0.0;
  std::size_t complete = 0;
  for (const auto& r : records) {
    if (r.w != 0 && r.w != 1) {
      throw std::invalid_argument("record w must be 0 or 1");
    }
    if (r.w != 1) continue;
    ++complete;
    const double dx = r.x2 - r.x;
    const double dy = r.y2 - r.y;
    sxx += static_cast<long double>(dx) * dx;
    sxy += static_cast<long double>(dx) * dy;
  }
  if (complete < 2) {
    throw std::runtime_error(
        "differencing estimator needs at least two complete records");
  }
  if (sxx == 0.0) {
    throw std::runtime_error(
        "degenerate design: within-hospital x differences are all zero");
  }
  return static_cast<double>(sxy / sxx);
}

double joint_log_likelihood(const std::vector<HospitalRecord>& records,
                            const GaussianParams& params,
                            bool use_incomplete) {
  params.validate();
  const SuffStats stats = collect_stats(records, use_incomplete);
  bool ok = true;
  const double l = total_loglik(stats, natural_blocks(params), &ok);
  if (!ok) {
    throw std::invalid_argument(
        "implied observation covariance is not positive definite");
  }
  return l;
}

GaussianParams params_from_coordinates(const FitCoordinates& psi) {
  const double l11 = std::exp(psi[3]);
  const double l21 = psi[4];
  const double l22 = std::exp(psi[5]);
  GaussianParams p;
  p.theta = psi[0];
  p.mu_g = psi[1];
  p.mu_h = psi[2];
  p.var_g = l11 * l11;
  p.cov_gh = l21 * l11;
  p.var_h = l21 * l21 + l22 * l22;
  p.var_eta = std::exp(2.0 * psi[6]);
  p.cov_noise = 0.0;
  p.var_eps = std::exp(2.0 * psi[7]);
  return p;
}

FitCoordinates coordinates_from_params(const GaussianParams& params) {
  params.validate();
  if (params.cov_noise != 0.0) {
    throw std::invalid_argument(
        "fit coordinates pin cov_noise at zero; got a nonzero value");
  }
  if (!(params.var_g > 0.0) || !(params.var_eta > 0.0) ||
      !(params.var_eps > 0.0)) {
    throw std::invalid_argument(
        "fit coordinates need strictly positive variances");
  }
  const double l11 = std::sqrt(params.var_g);
  const double l21 = params.cov_gh / l11;
  const double l22_sq = params.var_h - l21 * l21;
  if (!(l22_sq > 0.0)) {
    throw std::invalid_argument(
        "fit coordinates need a strictly positive definite (g,h) covariance");
  }
  return {params.theta,          params.mu_g,
          params.mu_h,           std::log(l11),
          l21,                   0.5 * std::log(l22_sq),
          0.5 * std::log(params.var_eta), 0.5 * std::log(params.var_eps)};
}

double fit_objective(const std::vector<HospitalRecord>& records,
                     const FitCoordinates& psi, bool use_incomplete) {
  const SuffStats stats = collect_stats(records, use_incomplete);
  const double used = stats.used_records();
  if (used == 0.0) {
    throw std::runtime_error("no usable records for the fit objective");
  }
  bool ok = true;
  const double l =
      total_loglik(stats, natural_blocks(params_from_coordinates(psi)), &ok);
  if (!ok) {
    throw std::invalid_argument(
        "coordinates imply a covariance that is not positive definite");
  }
  return -l / used;
}

FitCoordinates fit_gradient(const std::vector<HospitalRecord>& records,
                            const FitCoordinates& psi, bool use_incomplete) {
  const SuffStats stats = collect_stats(records, use_incomplete);
  const double used = stats.used_records();
  if (used == 0.0) {
    throw std::runtime_error("no usable records for the fit objective");
  }
  FitCoordinates grad;
  if (!total_gradient(stats, psi, &grad)) {
    throw std::invalid_argument(
        "coordinates imply a covariance that is not positive definite");
  }
  for (double& g : grad) g *= -1.0 / used;
  return grad;
}

MixedFit gaussian_joint_fit(const std::vector<HospitalRecord>& records,
                            bool use_incomplete) {
  static auto* const previous_handler = gsl_set_error_handler_off();
  (void)previous_handler;

  if (records.size() < 50) {
    throw std::invalid_argument("joint fit needs at least 50 records");
  }
  const SuffStats stats = collect_stats(records, true);
  SuffStats used = stats;
  used.use_incomplete = use_incomplete;
  if (used.complete.n < 2.0) {
    throw std::runtime_error("joint fit needs at least two complete records");
  }
  FitContext ctx{&used, 1.0 / used.used_records()};

  gsl_multimin_function_fdf target;
  target.n = 8;
  target.f = &objective_cb;
  target.df = &gradient_cb;
  target.fdf = &objective_gradient_cb;
  target.params = &ctx;

  const FitCoordinates start = moment_start(records);
  gsl_vector* x0 = gsl_vector_alloc(8);
  gsl_multimin_fdfminimizer* minimizer = gsl_multimin_fdfminimizer_alloc(
      gsl_multimin_fdfminimizer_vector_bfgs2, 8);
  for (std::size_t k = 0; k < start.size(); ++k) {
    gsl_vector_set(x0, k, start[k]);
  }
  gsl_multimin_fdfminimizer_set(minimizer, &target, x0, 0.1, 0.1);

  const int budget = 800;
  int iterations = 0;
  int restarts = 0;
  while (iterations < budget) {
    ++iterations;
    const int status = gsl_multimin_fdfminimizer_iterate(minimizer);
    if (status == GSL_SUCCESS) {
      if (gsl_multimin_test_gradient(minimizer->gradient, 1e-7) ==
          GSL_SUCCESS) {
        break;
      }
      continue;
    }
    if (status == GSL_ENOPROG && restarts < 6) {
      ++restarts;
      gsl_vector_memcpy(x0, minimizer->x);
      gsl_multimin_fdfminimizer_set(minimizer, &target, x0, 0.01, 0.1);
      continue;
    }
    break;
  }

  const FitCoordinates psi = from_gsl(minimizer->x);
  gsl_multimin_fdfminimizer_free(minimizer);
  gsl_vector_free(x0);

  FitCoordinates grad;
  if (!total_gradient(used, psi, &grad)) {
    throw std::runtime_error("joint fit ended at an infeasible point");
  }
  for (double& g : grad) g *= ctx.scale;
  const double gnorm = euclidean_norm(grad);
  if (!(gnorm <= 1e-5)) {
    std::ostringstream msg;
    msg << "joint fit did not converge: gradient norm " << gnorm << " after "
        << iterations << " iterations (" << restarts << " restarts)";
    throw std::runtime_error(msg.str());
  }

  bool ok = true;
  MixedFit fit;
  fit.params = params_from_coordinates(psi);
  fit.log_likelihood = total_loglik(used, natural_blocks(fit.params), &ok);
  fit.gradient_norm = gnorm;
  fit.iterations = iterations;
  fit.complete_count = static_cast<std::size_t>(stats.complete.n);
  fit.incomplete_count = static_cast<std::size_t>(stats.incomplete.n);
  fit.used_incomplete = use_incomplete;
  return fit;
}

}  // namespace lab
