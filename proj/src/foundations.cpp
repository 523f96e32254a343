#include "lab/foundations.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "lab/stats.hpp"

namespace lab {

namespace {

void check_prior(const FiniteModel& model, const std::vector<double>& prior) {
  if (prior.size() != model.parameter_grid.size()) {
    throw std::invalid_argument("prior length does not match the grid");
  }
  double total = 0.0;
  for (double w : prior) {
    if (!std::isfinite(w) || w < 0.0) {
      throw std::invalid_argument("prior weights must be finite and >= 0");
    }
    total += w;
  }
  if (total <= 0.0) {
    throw std::invalid_argument("prior weights must have positive total");
  }
}

std::size_t draw_index(const std::vector<double>& weights,
                       rng::RngStream& stream) {
  double total = 0.0;
  for (double w : weights) total += w;
  const double u = stream.uniform01() * total;
  double cum = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    cum += weights[i];
    if (u <= cum) return i;
  }
  return weights.size() - 1;
}

double binomial_se(double p, std::size_t reps) {
  return std::sqrt(std::max(p * (1.0 - p), 0.0) /
                   static_cast<double>(reps));
}

}  // namespace

void FiniteModel::validate() const {
  if (parameter_grid.empty()) {
    throw std::invalid_argument("parameter grid must be nonempty");
  }
  if (!sample || !log_density || !loss) {
    throw std::invalid_argument(
        "model needs sample, log_density, and loss callables");
  }
  for (double g : parameter_grid) {
    if (!std::isfinite(g)) {
      throw std::invalid_argument("grid points must be finite");
    }
  }
  for (std::size_t i = 0; i + 1 < parameter_grid.size(); ++i) {
    for (std::size_t j = i + 1; j < parameter_grid.size(); ++j) {
      if (parameter_grid[i] == parameter_grid[j]) {
        throw std::invalid_argument("grid points must be distinct");
      }
    }
  }
  for (std::size_t i = 0; i < parameter_grid.size(); ++i) {
    for (std::size_t j = 0; j < parameter_grid.size(); ++j) {
      const double value = loss(parameter_grid[i], parameter_grid[j]);
      if (!(value >= 0.0)) {
        throw std::invalid_argument("loss must be nonnegative");
      }
      if (std::abs(value - loss(parameter_grid[j], parameter_grid[i])) >
          1e-12) {
        throw std::invalid_argument("loss must be symmetric");
      }
      if (i == j && value != 0.0) {
        throw std::invalid_argument("loss must vanish on the diagonal");
      }
      if (i != j && value <= 0.0) {
        throw std::invalid_argument(
            "loss must be positive between distinct points");
      }
    }
  }
}

double FiniteModel::default_threshold() const {
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < parameter_grid.size(); ++i) {
    for (std::size_t j = i + 1; j < parameter_grid.size(); ++j) {
      min_gap = std::min(min_gap,
                         std::abs(parameter_grid[i] - parameter_grid[j]));
    }
  }
  return std::isfinite(min_gap) ? 0.5 * min_gap : 0.0;
}

FiniteModel two_point_gaussian_model() {
  FiniteModel model;
  model.parameter_grid = {0.0, 1.0};
  model.sample = [](double param, std::size_t n, rng::RngStream& stream) {
    return stream.normal(param, 1.0 / std::sqrt(static_cast<double>(n)));
  };
  model.log_density = [](double param, std::size_t n, double x) {
    return stats::normal_log_pdf(x, param,
                                 1.0 / std::sqrt(static_cast<double>(n)));
  };
  model.loss = [](double a, double b) { return std::abs(a - b); };
  return model;
}

GridEstimator grid_mle(const FiniteModel& model) {
  model.validate();
  return [model](double x, std::size_t n) {
    std::size_t best = 0;
    double best_ll = model.log_density(model.parameter_grid[0], n, x);
    for (std::size_t i = 1; i < model.parameter_grid.size(); ++i) {
      const double ll = model.log_density(model.parameter_grid[i], n, x);
      if (ll > best_ll) {
        best_ll = ll;
        best = i;
      }
    }
    return model.parameter_grid[best];
  };
}

GridEstimator constant_estimator(double value) {
  return [value](double, std::size_t) { return value; };
}

std::vector<double> grid_posterior(const FiniteModel& model,
                                   const std::vector<double>& prior,
                                   std::size_t n, double x) {
  check_prior(model, prior);
  if (n == 0) {
    throw std::invalid_argument("n must be positive");
  }
  const std::size_t size = model.parameter_grid.size();
  std::vector<double> logw;
  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < size; ++i) {
    if (prior[i] > 0.0) {
      const double ll = model.log_density(model.parameter_grid[i], n, x);
      if (std::isfinite(ll) || ll == -std::numeric_limits<double>::infinity()) {
        logw.push_back(std::log(prior[i]) + ll);
        support.push_back(i);
      } else {
        throw std::runtime_error("log density returned a non-finite value");
      }
    }
  }
  const double lse = stats::log_sum_exp(logw);
  if (!std::isfinite(lse)) {
    throw std::runtime_error(
        "posterior is degenerate: zero likelihood on the prior support");
  }
  std::vector<double> posterior(size, 0.0);
  for (std::size_t k = 0; k < support.size(); ++k) {
    posterior[support[k]] = std::exp(logw[k] - lse);
  }
  return posterior;
}

ChainDraw chain_replicate(const FiniteModel& model,
                          const std::vector<double>& prior,
                          const GridEstimator& estimator, std::size_t n,
                          rng::RngStream& stream) {
  check_prior(model, prior);
  if (!estimator) {
    throw std::invalid_argument("estimator must be set");
  }
  ChainDraw draw;
  const std::size_t j = draw_index(prior, stream);
  draw.parameter = model.parameter_grid[j];
  const double x = model.sample(draw.parameter, n, stream);
  const std::vector<double> posterior = grid_posterior(model, prior, n, x);
  draw.posterior_draw = model.parameter_grid[draw_index(posterior, stream)];
  draw.estimate = estimator(x, n);
  return draw;
}

PersistenceReport persistence_check(const FiniteModel& model,
                                    const std::vector<double>& prior,
                                    const GridEstimator& estimator,
                                    const std::vector<std::size_t>& n_grid,
                                    std::size_t reps,
                                    rng::RngStream& stream, double delta) {
  model.validate();
  check_prior(model, prior);
  if (!estimator) {
    throw std::invalid_argument("estimator must be set");
  }
  if (n_grid.empty()) {
    throw std::invalid_argument("n_grid must be nonempty");
  }
  for (std::size_t n : n_grid) {
    if (n == 0) throw std::invalid_argument("sample sizes must be positive");
  }
  if (reps < 1) {
    throw std::invalid_argument("reps must be at least 1");
  }

  PersistenceReport report;
  report.delta = delta > 0.0 ? delta : model.default_threshold();
  report.reps = reps;
  for (std::size_t n : n_grid) {
    std::size_t count_estimator = 0;
    std::size_t count_posterior = 0;
    std::size_t count_pair = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      const ChainDraw draw =
          chain_replicate(model, prior, estimator, n, stream);
      if (model.loss(draw.parameter, draw.estimate) > report.delta) {
        ++count_estimator;
      }
      if (model.loss(draw.posterior_draw, draw.estimate) > report.delta) {
        ++count_posterior;
      }
      if (model.loss(draw.parameter, draw.posterior_draw) > report.delta) {
        ++count_pair;
      }
    }
    PersistenceRow row;
    row.n = n;
    row.p_estimator =
        static_cast<double>(count_estimator) / static_cast<double>(reps);
    row.p_posterior =
        static_cast<double>(count_posterior) / static_cast<double>(reps);
    row.p_pair = static_cast<double>(count_pair) / static_cast<double>(reps);
    row.se_estimator = binomial_se(row.p_estimator, reps);
    row.se_posterior = binomial_se(row.p_posterior, reps);
    row.se_pair = binomial_se(row.p_pair, reps);
    report.rows.push_back(row);
  }

  for (const PersistenceRow& row : report.rows) {
    const double slack =
        3.0 * std::sqrt(row.se_estimator * row.se_estimator +
                        row.se_posterior * row.se_posterior +
                        row.se_pair * row.se_pair);
    if (row.p_pair > row.p_estimator + row.p_posterior + slack + 1e-12) {
      report.triangle_ok = false;
    }
  }
  for (std::size_t k = 0; k + 1 < report.rows.size(); ++k) {
    const PersistenceRow& a = report.rows[k];
    const PersistenceRow& b = report.rows[k + 1];
    const auto rising = [](double pa, double sa, double pb, double sb) {
      return pb > pa + 3.0 * std::sqrt(sa * sa + sb * sb) + 1e-12;
    };
    if (rising(a.p_estimator, a.se_estimator, b.p_estimator,
               b.se_estimator) ||
        rising(a.p_posterior, a.se_posterior, b.p_posterior,
               b.se_posterior) ||
        rising(a.p_pair, a.se_pair, b.p_pair, b.se_pair)) {
      report.decaying = false;
    }
  }
  return report;
}

TwoPointOracle two_point_exceedance_oracle(std::size_t n) {
  if (n == 0) {
    throw std::invalid_argument("n must be positive");
  }
  const double c = 0.5 * std::sqrt(static_cast<double>(n));
  TwoPointOracle oracle;
  oracle.p_estimator = stats::normal_cdf(-c);
  oracle.p_posterior = oracle.p_estimator;

  const double half_width = c + 14.0;
  const std::size_t panels = 1 << 15;
  const double h = 2.0 * half_width / static_cast<double>(2 * panels);
  const auto integrand = [c](double t) {
    const double la = stats::normal_log_pdf(t + c);
    const double lb = stats::normal_log_pdf(t - c);
    return std::exp(la + lb - stats::log_sum_exp(la, lb));
  };
  double sum = integrand(-half_width) + integrand(half_width);
  for (std::size_t k = 1; k < 2 * panels; ++k) {
    const double t = -half_width + static_cast<double>(k) * h;
    sum += integrand(t) * (k % 2 == 1 ? 4.0 : 2.0);
  }
  oracle.p_pair = sum * h / 3.0;
  return oracle;
}

void JointModel::validate() const {
  if (!sample_parameter || !sample_observation || !posterior_mean) {
    throw std::invalid_argument(
        "joint model needs sample_parameter, sample_observation, and "
        "posterior_mean callables");
  }
}

JointModel beta_binomial_model(double a, double b, int trials) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw std::invalid_argument("beta parameters must be positive");
  }
  if (trials < 1 || trials > 100000) {
    throw std::invalid_argument("trials must be in [1, 1e5]");
  }
  JointModel model;
  model.sample_parameter = [a, b](rng::RngStream& stream) {
    return stream.beta(a, b);
  };
  model.sample_observation = [trials](double theta, rng::RngStream& stream) {
    int successes = 0;
    for (int t = 0; t < trials; ++t) {
      successes += stream.bernoulli(theta) ? 1 : 0;
    }
    return static_cast<double>(successes);
  };
  model.posterior_mean = [a, b, trials](double x) {
    return (a + x) / (a + b + static_cast<double>(trials));
  };
  return model;
}

JointModel normal_normal_model(double prior_mean, double prior_var,
                               double noise_var) {
  if (!(prior_var > 0.0) || !std::isfinite(prior_var) ||
      !std::isfinite(prior_mean)) {
    throw std::invalid_argument("prior variance must be positive");
  }
  if (noise_var < 0.0 || !std::isfinite(noise_var)) {
    throw std::invalid_argument("noise variance must be >= 0");
  }
  JointModel model;
  const double prior_sd = std::sqrt(prior_var);
  const double noise_sd = std::sqrt(noise_var);
  model.sample_parameter = [prior_mean, prior_sd](rng::RngStream& stream) {
    return stream.normal(prior_mean, prior_sd);
  };
  model.sample_observation = [noise_sd](double theta,
                                        rng::RngStream& stream) {
    return stream.normal(theta, noise_sd);
  };
  const double shrink = prior_var / (prior_var + noise_var);
  model.posterior_mean = [prior_mean, shrink](double x) {
    return prior_mean + shrink * (x - prior_mean);
  };
  model.degenerate = noise_var == 0.0;
  return model;
}

BayesBiasReport bayes_bias_check(const JointModel& model, std::size_t reps,
                                 rng::RngStream& stream) {
  model.validate();
  if (reps < 2) {
    throw std::invalid_argument("reps must be at least 2");
  }
  std::vector<double> theta(reps);
  std::vector<double> estimate(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    theta[r] = model.sample_parameter(stream);
    const double x = model.sample_observation(theta[r], stream);
    estimate[r] = model.posterior_mean(x);
    if (!std::isfinite(theta[r]) || !std::isfinite(estimate[r])) {
      throw std::runtime_error("non-finite draw in bayes_bias_check");
    }
  }

  stats::RunningMoments m_theta;
  stats::RunningMoments m_estimate;
  stats::RunningMoments m_gap;
  for (std::size_t r = 0; r < reps; ++r) {
    m_theta.add(theta[r]);
    m_estimate.add(estimate[r]);
    m_gap.add(estimate[r] - theta[r]);
  }

  BayesBiasReport report;
  report.reps = reps;
  report.degenerate = model.degenerate;
  report.mean_estimator = m_estimate.mean();
  report.mean_parameter = m_theta.mean();
  report.var_estimator = m_estimate.variance_sample();
  report.var_parameter = m_theta.variance_sample();
  report.mean_gap = m_gap.mean();
  report.mean_gap_se =
      std::sqrt(m_gap.variance_sample() / static_cast<double>(reps));
  report.variance_gap = report.var_parameter - report.var_estimator;

  stats::RunningMoments m_vardiff;
  for (std::size_t r = 0; r < reps; ++r) {
    const double dt = theta[r] - report.mean_parameter;
    const double de = estimate[r] - report.mean_estimator;
    m_vardiff.add(dt * dt - de * de);
  }
  report.variance_gap_se =
      std::sqrt(m_vardiff.variance_sample() / static_cast<double>(reps));
  report.mean_matched =
      std::abs(report.mean_gap) <= 3.0 * report.mean_gap_se;
  report.variance_reduced =
      !report.degenerate &&
      report.variance_gap > 3.0 * report.variance_gap_se;
  return report;
}

}  // namespace lab
