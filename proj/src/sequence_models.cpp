#include "lab/sequence_models.hpp"

#include <gsl/gsl_integration.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

#include "lab/stats.hpp"

namespace lab {

namespace {

struct GlTableDeleter {
  void operator()(gsl_integration_glfixed_table* t) const {
    gsl_integration_glfixed_table_free(t);
  }
};

using GlTable =
    std::unique_ptr<gsl_integration_glfixed_table, GlTableDeleter>;

GlTable make_gl_table(std::size_t nodes) {
  gsl_integration_glfixed_table* t =
      gsl_integration_glfixed_table_alloc(nodes);
  if (t == nullptr) {
    throw std::runtime_error("failed to allocate Gauss-Legendre table");
  }
  return GlTable(t);
}

/// Posterior mean of mu under a uniform prior on [-c, c] and a N(mu, 1/n)
/// likelihood, integrating over the 12-sigma slab around the point of [-c, c]
/// nearest to x.  The shared exponent shift keeps every weight finite.
double window_posterior_mean(double x, double lo, double hi, double n,
                             double shift,
                             const gsl_integration_glfixed_table* table,
                             std::size_t nodes) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < nodes; ++i) {
    double mu = 0.0;
    double weight = 0.0;
    gsl_integration_glfixed_point(lo, hi, i, &mu, &weight, table);
    const double log_kernel = -0.5 * n * (x - mu) * (x - mu) - shift;
    const double kernel = weight * std::exp(log_kernel);
    num += mu * kernel;
    den += kernel;
  }
  return num / den;
}

/// Gauss-Legendre rules sized to the integration window: wide windows need
/// denser rules because the nodes thin out in the middle of the interval
/// where the Gaussian kernel lives.
class BoundedPosterior {
 public:
  explicit BoundedPosterior(std::size_t prior_grid)
      : narrow_(make_rule(checked_grid(prior_grid))),
        mid_(make_rule(std::max<std::size_t>(prior_grid, 64))),
        wide_(make_rule(std::max<std::size_t>(prior_grid, 112))) {}

  double mean(double x, double c, double n) const {
    if (c == 0.0) {
      return 0.0;
    }
    const double sigma = 1.0 / std::sqrt(n);
    const double nearest = std::clamp(x, -c, c);
    const double lo = std::max(-c, nearest - 12.0 * sigma);
    const double hi = std::min(c, nearest + 12.0 * sigma);
    const double shift = -0.5 * n * (x - nearest) * (x - nearest);
    const double width = (hi - lo) / sigma;
    const Rule& rule =
        width <= 4.0 ? narrow_ : (width <= 12.0 ? mid_ : wide_);
    const double first = window_posterior_mean(x, lo, hi, n, shift,
                                               rule.coarse.get(), rule.nodes);
    const double second = window_posterior_mean(
        x, lo, hi, n, shift, rule.fine.get(), 2 * rule.nodes);
    if (std::abs(second - first) > 1e-8 * std::max(1.0, std::abs(second))) {
      throw std::runtime_error(
          "bounded posterior mean: quadrature failed to stabilise to 1e-8 at "
          "x=" +
          std::to_string(x) + ", c=" + std::to_string(c));
    }
    return second;
  }

 private:
  struct Rule {
    std::size_t nodes = 0;
    GlTable coarse;
    GlTable fine;
  };

  static std::size_t checked_grid(std::size_t prior_grid) {
    if (prior_grid < 3) {
      throw std::invalid_argument(
          "bounded posterior: prior_grid must be >= 3");
    }
    return prior_grid;
  }

  static Rule make_rule(std::size_t nodes) {
    Rule r;
    r.nodes = nodes;
    r.coarse = make_gl_table(nodes);
    r.fine = make_gl_table(2 * nodes);
    return r;
  }

  Rule narrow_;
  Rule mid_;
  Rule wide_;
};

}  // namespace

void WhiteNoiseSpec::validate() const {
  if (!(n >= 1.0)) {
    throw std::invalid_argument("WhiteNoiseSpec: n must be >= 1");
  }
  if (p < 1) {
    throw std::invalid_argument("WhiteNoiseSpec: p must be >= 1");
  }
  if (!(xi > 0.0) || !(xi < 0.5)) {
    throw std::invalid_argument("WhiteNoiseSpec: xi must lie in (0, 1/2)");
  }
  if (!(nu + xi > 1.0)) {
    throw std::invalid_argument("WhiteNoiseSpec: nu + xi must exceed 1");
  }
  const double cutoff = std::round(std::pow(n, 1.0 / (2.0 * nu - 1.0)));
  if (static_cast<double>(p) < cutoff) {
    throw std::invalid_argument(
        "WhiteNoiseSpec: p must be at least round(n^{1/(2 nu - 1)}) = " +
        std::to_string(cutoff));
  }
}

double WhiteNoiseSpec::alpha(std::size_t i) const {
  return std::pow(static_cast<double>(i), -xi);
}

double WhiteNoiseSpec::bound(std::size_t i) const {
  return std::pow(static_cast<double>(i), -nu);
}

std::size_t WhiteNoiseSpec::default_cutoff() const {
  const double raw = std::round(std::pow(n, 1.0 / (2.0 * nu - 1.0)));
  const double clamped = std::clamp(raw, 1.0, static_cast<double>(p));
  return static_cast<std::size_t>(clamped);
}

std::size_t WhiteNoiseSpec::signal_cutoff() const {
  const double raw = std::round(std::pow(n, 1.0 / (2.0 * nu)));
  const double clamped = std::clamp(raw, 1.0, static_cast<double>(p));
  return static_cast<std::size_t>(clamped);
}

WhiteNoiseInstance WhiteNoiseInstance::from_mu(const WhiteNoiseSpec& spec,
                                               std::vector<double> mu) {
  spec.validate();
  if (mu.size() != spec.p) {
    throw std::invalid_argument(
        "WhiteNoiseInstance: mu must have length spec.p");
  }
  long double theta = 0.0L;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double c = spec.bound(i + 1);
    if (!(std::abs(mu[i]) <= c * (1.0 + 1e-12))) {
      throw std::invalid_argument(
          "WhiteNoiseInstance: |mu_" + std::to_string(i + 1) +
          "| exceeds the bound " + std::to_string(c));
    }
    theta += static_cast<long double>(spec.alpha(i + 1)) * mu[i];
  }
  WhiteNoiseInstance inst;
  inst.mu = std::move(mu);
  inst.theta = static_cast<double>(theta);
  return inst;
}

void WhiteNoiseInstance::validate(const WhiteNoiseSpec& spec) const {
  WhiteNoiseInstance rebuilt = from_mu(spec, mu);
  if (std::abs(rebuilt.theta - theta) >
      1e-10 * std::max(1.0, std::abs(rebuilt.theta))) {
    throw std::invalid_argument(
        "WhiteNoiseInstance: theta does not match the weighted sum of mu");
  }
}

WhiteNoiseInstance worst_case_instance(const WhiteNoiseSpec& spec) {
  spec.validate();
  const std::size_t lo = spec.signal_cutoff();
  const std::size_t hi = spec.default_cutoff();
  std::vector<double> mu(spec.p, 0.0);
  for (std::size_t i = lo + 1; i <= hi; ++i) {
    mu[i - 1] = spec.bound(i);
  }
  return WhiteNoiseInstance::from_mu(spec, std::move(mu));
}

SequenceData sample_sequence(const WhiteNoiseSpec& spec,
                             const WhiteNoiseInstance& inst,
                             rng::RngStream& stream) {
  spec.validate();
  if (inst.mu.size() != spec.p) {
    throw std::invalid_argument("sample_sequence: instance length mismatch");
  }
  const double sigma = 1.0 / std::sqrt(spec.n);
  SequenceData data;
  data.n = spec.n;
  data.w.resize(spec.p);
  for (std::size_t i = 0; i < spec.p; ++i) {
    data.w[i] = stream.normal(inst.mu[i], sigma);
  }
  return data;
}

double FunctionalRisk::rmse() const {
  return std::sqrt(bias * bias + variance);
}

double freq_functional_estimate(const SequenceData& data,
                                const WhiteNoiseSpec& spec, std::size_t m) {
  spec.validate();
  if (data.w.size() != spec.p) {
    throw std::invalid_argument(
        "freq_functional_estimate: data length must equal spec.p");
  }
  if (m < 1 || m > spec.p) {
    throw std::invalid_argument(
        "freq_functional_estimate: cutoff m must lie in [1, p]");
  }
  long double sum = 0.0L;
  for (std::size_t i = 1; i <= m; ++i) {
    sum += static_cast<long double>(spec.alpha(i)) * data.w[i - 1];
  }
  return static_cast<double>(sum);
}

double freq_functional_estimate(const SequenceData& data,
                                const WhiteNoiseSpec& spec) {
  return freq_functional_estimate(data, spec, spec.default_cutoff());
}

FunctionalRisk freq_functional_risk(const WhiteNoiseSpec& spec,
                                    const std::vector<double>& mu,
                                    std::size_t m) {
  spec.validate();
  if (mu.size() != spec.p) {
    throw std::invalid_argument(
        "freq_functional_risk: mu length must equal spec.p");
  }
  if (m < 1 || m > spec.p) {
    throw std::invalid_argument(
        "freq_functional_risk: cutoff m must lie in [1, p]");
  }
  long double bias = 0.0L;
  for (std::size_t i = m + 1; i <= spec.p; ++i) {
    bias -= static_cast<long double>(spec.alpha(i)) * mu[i - 1];
  }
  long double variance = 0.0L;
  for (std::size_t i = 1; i <= m; ++i) {
    const long double a = spec.alpha(i);
    variance += a * a;
  }
  FunctionalRisk risk;
  risk.bias = static_cast<double>(bias);
  risk.variance = static_cast<double>(variance / spec.n);
  return risk;
}

double bounded_posterior_mean(double x, double c, double n,
                              std::size_t prior_grid) {
  if (!(c >= 0.0) || !std::isfinite(c)) {
    throw std::invalid_argument("bounded_posterior_mean: c must be >= 0");
  }
  if (!(n > 0.0)) {
    throw std::invalid_argument("bounded_posterior_mean: n must be > 0");
  }
  const BoundedPosterior quad(prior_grid);
  return quad.mean(x, c, n);
}

double bounded_bayes_functional(const SequenceData& data,
                                const WhiteNoiseSpec& spec,
                                std::size_t prior_grid) {
  spec.validate();
  if (data.w.size() != spec.p) {
    throw std::invalid_argument(
        "bounded_bayes_functional: data length must equal spec.p");
  }
  const BoundedPosterior quad(prior_grid);
  long double total = 0.0L;
  for (std::size_t i = 1; i <= spec.p; ++i) {
    total += static_cast<long double>(spec.alpha(i)) *
             quad.mean(data.w[i - 1], spec.bound(i), spec.n);
  }
  return static_cast<double>(total);
}

double soft_threshold(double w, double lambda) {
  if (!(lambda >= 0.0)) {
    throw std::invalid_argument("soft_threshold: lambda must be >= 0");
  }
  const double half = 0.5 * lambda;
  if (w > half) {
    return w - half;
  }
  if (w < -half) {
    return w + half;
  }
  return 0.0;
}

std::vector<double> lasso_toy(const SequenceData& data, double lambda) {
  if (!(lambda >= 0.0)) {
    throw std::invalid_argument("lasso_toy: lambda must be >= 0");
  }
  std::vector<double> beta(data.w.size());
  for (std::size_t i = 0; i < data.w.size(); ++i) {
    beta[i] = soft_threshold(data.w[i], lambda);
  }
  return beta;
}

void SpikeSlabPrior::validate() const {
  if (!(gamma >= 0.0) || !(gamma <= 1.0)) {
    throw std::invalid_argument("SpikeSlabPrior: gamma must lie in [0, 1]");
  }
  if (!(tau2 > 0.0)) {
    throw std::invalid_argument("SpikeSlabPrior: tau2 must be > 0");
  }
}

SpikeSlabPosterior spike_slab_posterior(double w, double n,
                                        const SpikeSlabPrior& prior) {
  prior.validate();
  if (!(n >= 1.0)) {
    throw std::invalid_argument("spike_slab_posterior: n must be >= 1");
  }
  if (!std::isfinite(w)) {
    throw std::invalid_argument("spike_slab_posterior: w must be finite");
  }
  const double noise_var = 1.0 / n;
  SpikeSlabPosterior post;
  post.slab_mean = n * prior.tau2 * w / (1.0 + n * prior.tau2);
  post.slab_var = prior.tau2 / (1.0 + n * prior.tau2);
  if (prior.gamma == 0.0) {
    post.mass_at_zero = 1.0;
    return post;
  }
  if (prior.gamma == 1.0) {
    post.mass_at_zero = 0.0;
    return post;
  }
  const double log_spike = std::log1p(-prior.gamma) +
                           stats::normal_log_pdf(w, 0.0, std::sqrt(noise_var));
  const double log_slab =
      std::log(prior.gamma) +
      stats::normal_log_pdf(w, 0.0, std::sqrt(prior.tau2 + noise_var));
  post.mass_at_zero =
      std::exp(log_spike - stats::log_sum_exp(log_spike, log_slab));
  return post;
}

double optimal_lambda(double n, double p, double alpha) {
  if (!(n > 1.0) || !(p > 1.0)) {
    throw std::invalid_argument("optimal_lambda: need n > 1 and p > 1");
  }
  if (!(alpha > 0.5)) {
    throw std::invalid_argument("optimal_lambda: need alpha > 1/2");
  }
  const double radicand = std::log(p) - std::log(n) / (2.0 * alpha);
  if (radicand < 0.0) {
    throw std::invalid_argument(
        "optimal_lambda: invalid regime, log p < log n / (2 alpha)");
  }
  return std::sqrt(8.0 * radicand / n);
}

double optimal_lambda_tail_residual(double n, double p, double alpha) {
  const double lambda = optimal_lambda(n, p, alpha);
  const double log_lhs = std::log(n) / (2.0 * alpha) - std::log(p);
  const double tail = stats::normal_cdf(-std::sqrt(n) * lambda / 2.0);
  if (tail <= 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  const double log_rhs = std::log(2.0) + std::log(tail);
  return std::abs(log_lhs - log_rhs) / std::abs(log_lhs);
}

}  // namespace lab
