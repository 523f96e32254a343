#include "lab/missing_data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

#include "lab/stats.hpp"

namespace lab {

namespace {

double require_observed_ratio(long long numerator_scale,
                              const char* who) {
  if (numerator_scale == 0) {
    throw std::runtime_error(std::string(who) + ": no observed units");
  }
  return 0.0;
}

std::vector<std::size_t> stratum_counts(const std::vector<double>& fractions,
                                        std::size_t n) {
  const std::size_t k = fractions.size();
  std::vector<std::size_t> counts(k);
  std::vector<std::pair<double, std::size_t>> remainders(k);
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < k; ++j) {
    const double exact = fractions[j] * static_cast<double>(n);
    counts[j] = static_cast<std::size_t>(std::floor(exact));
    remainders[j] = {exact - std::floor(exact), j};
    assigned += counts[j];
  }
  std::sort(remainders.begin(), remainders.end(),
            [](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first > b.first;
              return a.second < b.second;
            });
  for (std::size_t j = 0; assigned < n; ++j, ++assigned) {
    ++counts[remainders[j % k].second];
  }
  return counts;
}

}  // namespace

double BernoulliPanel::true_mean() const {
  if (p.empty()) throw std::invalid_argument("true_mean: empty panel");
  long double acc = 0.0L;
  for (double v : p) acc += v;
  return static_cast<double>(acc / static_cast<long double>(p.size()));
}

double BernoulliPanel::weighted_true_mean() const {
  if (p.empty()) {
    throw std::invalid_argument("weighted_true_mean: empty panel");
  }
  long double num = 0.0L;
  long double den = 0.0L;
  for (std::size_t i = 0; i < p.size(); ++i) {
    num += static_cast<long double>(w[i]) * p[i];
    den += w[i];
  }
  return static_cast<double>(num / den);
}

void PanelGenConfig::validate() const {
  if (n == 0) throw std::invalid_argument("panel config: n must be positive");
  if (!(w_min > 0.0 && w_min < 1.0)) {
    throw std::invalid_argument("panel config: w_min must lie in (0,1)");
  }
  switch (p_law) {
    case PLaw::constant:
    case PLaw::coupled:
      if (!(p_value > 0.0 && p_value < 1.0)) {
        throw std::invalid_argument("panel config: p_value must lie in (0,1)");
      }
      break;
    case PLaw::beta:
      if (!(tau > 0.0)) {
        throw std::invalid_argument("panel config: tau must be positive");
      }
      if (!(rho > 0.0 && rho < 1.0)) {
        throw std::invalid_argument("panel config: rho must lie in (0,1)");
      }
      break;
  }
  if (p_law == PLaw::coupled && !(clamp_eps > 0.0 && clamp_eps <= 0.25)) {
    throw std::invalid_argument(
        "panel config: clamp_eps must lie in (0, 0.25]");
  }
  switch (w_law) {
    case WLaw::constant:
      if (!(w_value >= w_min && w_value <= 1.0)) {
        throw std::invalid_argument(
            "panel config: constant weight must lie in [w_min, 1]");
      }
      break;
    case WLaw::strata: {
      if (stratum_weights.empty() ||
          stratum_weights.size() != stratum_fractions.size()) {
        throw std::invalid_argument(
            "panel config: stratum weights and fractions must align");
      }
      double total = 0.0;
      for (double f : stratum_fractions) {
        if (!(f > 0.0)) {
          throw std::invalid_argument(
              "panel config: stratum fractions must be positive");
        }
        total += f;
      }
      if (std::abs(total - 1.0) > 1e-12) {
        throw std::invalid_argument(
            "panel config: stratum fractions must sum to 1");
      }
      for (std::size_t a = 0; a < stratum_weights.size(); ++a) {
        if (!(stratum_weights[a] >= w_min && stratum_weights[a] <= 1.0)) {
          throw std::invalid_argument(
              "panel config: stratum weights must lie in [w_min, 1]");
        }
        for (std::size_t b = a + 1; b < stratum_weights.size(); ++b) {
          if (stratum_weights[a] == stratum_weights[b]) {
            throw std::invalid_argument(
                "panel config: stratum weights must be distinct");
          }
        }
      }
      break;
    }
    case WLaw::continuous:
      break;
  }
}

BernoulliPanel generate_panel(const PanelGenConfig& cfg,
                              rng::RngStream& stream) {
  cfg.validate();
  BernoulliPanel panel;
  panel.p.resize(cfg.n);
  panel.w.resize(cfg.n);
  panel.s.resize(cfg.n);
  panel.y.resize(cfg.n);

  rng::RngStream w_stream = stream.substream(0);
  rng::RngStream p_stream = stream.substream(1);
  rng::RngStream s_stream = stream.substream(2);
  rng::RngStream y_stream = stream.substream(3);

  switch (cfg.w_law) {
    case PanelGenConfig::WLaw::constant:
      std::fill(panel.w.begin(), panel.w.end(), cfg.w_value);
      break;
    case PanelGenConfig::WLaw::strata: {
      const std::vector<std::size_t> counts =
          stratum_counts(cfg.stratum_fractions, cfg.n);
      std::size_t i = 0;
      for (std::size_t k = 0; k < counts.size(); ++k) {
        for (std::size_t j = 0; j < counts[k]; ++j) {
          panel.w[i++] = cfg.stratum_weights[k];
        }
      }
      break;
    }
    case PanelGenConfig::WLaw::continuous:
      for (auto& wi : panel.w) {
        wi = cfg.w_min + (1.0 - cfg.w_min) * w_stream.uniform01();
      }
      break;
  }

  long double w_acc = 0.0L;
  for (double wi : panel.w) w_acc += wi;
  const double w_bar =
      static_cast<double>(w_acc / static_cast<long double>(cfg.n));

  std::size_t clamped = 0;
  switch (cfg.p_law) {
    case PanelGenConfig::PLaw::constant:
      std::fill(panel.p.begin(), panel.p.end(), cfg.p_value);
      break;
    case PanelGenConfig::PLaw::beta: {
      const double a = cfg.tau * cfg.rho;
      const double b = cfg.tau * (1.0 - cfg.rho);
      for (auto& pi : panel.p) pi = p_stream.beta(a, b);
      break;
    }
    case PanelGenConfig::PLaw::coupled:
      for (std::size_t i = 0; i < cfg.n; ++i) {
        const double raw = cfg.p_value + cfg.kappa * (panel.w[i] - w_bar);
        const double lo = cfg.clamp_eps;
        const double hi = 1.0 - cfg.clamp_eps;
        panel.p[i] = std::clamp(raw, lo, hi);
        if (raw < lo || raw > hi) ++clamped;
      }
      break;
  }
  panel.clamp_rate =
      static_cast<double>(clamped) / static_cast<double>(cfg.n);
  if (panel.clamp_rate > 0.05) {
    throw std::runtime_error(
        "generate_panel: config pathology, coupling clamped " +
        std::to_string(panel.clamp_rate * 100.0) + "% of units");
  }

  for (std::size_t i = 0; i < cfg.n; ++i) {
    panel.s[i] = s_stream.bernoulli(panel.w[i]);
  }
  for (std::size_t i = 0; i < cfg.n; ++i) {
    panel.y[i] = y_stream.bernoulli(panel.p[i]);
  }
  return panel;
}

double ht_hajek(const BernoulliPanel& panel) {
  long double num = 0.0L;
  long double den = 0.0L;
  long long observed = 0;
  for (std::size_t i = 0; i < panel.size(); ++i) {
    if (panel.s[i] != 1) continue;
    ++observed;
    const double inv = 1.0 / panel.w[i];
    num += inv * panel.y[i];
    den += inv;
  }
  require_observed_ratio(observed, "ht_hajek");
  return static_cast<double>(num / den);
}

double naive_bayes_mean(const BernoulliPanel& panel) {
  long long num = 0;
  long long den = 0;
  for (std::size_t i = 0; i < panel.size(); ++i) {
    if (panel.s[i] != 1) continue;
    num += panel.y[i];
    ++den;
  }
  require_observed_ratio(den, "naive_bayes_mean");
  return static_cast<double>(num) / static_cast<double>(den);
}

double stratified_bayes(const BernoulliPanel& panel,
                        const std::vector<double>& stratum_weights) {
  if (stratum_weights.empty()) {
    throw std::invalid_argument("stratified_bayes: empty partition");
  }
  const std::size_t k = stratum_weights.size();
  std::vector<long long> unit_counts(k, 0);
  std::vector<long long> observed(k, 0);
  std::vector<long long> successes(k, 0);
  for (std::size_t i = 0; i < panel.size(); ++i) {
    std::size_t match = k;
    for (std::size_t j = 0; j < k; ++j) {
      if (panel.w[i] == stratum_weights[j]) {
        match = j;
        break;
      }
    }
    if (match == k) {
      throw std::invalid_argument(
          "stratified_bayes: unit weight outside the partition");
    }
    ++unit_counts[match];
    if (panel.s[i] == 1) {
      ++observed[match];
      successes[match] += panel.y[i];
    }
  }
  long long total_observed = 0;
  long long total_successes = 0;
  for (std::size_t j = 0; j < k; ++j) {
    total_observed += observed[j];
    total_successes += successes[j];
  }
  require_observed_ratio(total_observed, "stratified_bayes");
  const double grand_mean = static_cast<double>(total_successes) /
                            static_cast<double>(total_observed);
  long double acc = 0.0L;
  for (std::size_t j = 0; j < k; ++j) {
    const double stratum_mean =
        observed[j] > 0 ? static_cast<double>(successes[j]) /
                              static_cast<double>(observed[j])
                        : grand_mean;
    acc += static_cast<long double>(unit_counts[j]) * stratum_mean;
  }
  return static_cast<double>(acc / static_cast<long double>(panel.size()));
}

AsymptoticVariances asymptotic_variances(const BernoulliPanel& panel) {
  const std::size_t n = panel.size();
  if (n == 0) throw std::invalid_argument("asymptotic_variances: empty panel");
  const double w_bar = [&] {
    long double acc = 0.0L;
    for (double wi : panel.w) acc += wi;
    return static_cast<double>(acc / static_cast<long double>(n));
  }();
  const double p_bar = panel.true_mean();
  const double p_bar_w = panel.weighted_true_mean();

  long double v_ht = 0.0L;
  long double v_b = 0.0L;
  long double e_b = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    const double pi = panel.p[i];
    const double wi = panel.w[i];
    const double bern = pi * (1.0 - pi);
    v_ht += (w_bar / wi) * bern +
            (w_bar * (1.0 - wi) / wi) * (pi - p_bar) * (pi - p_bar);
    v_b += (wi / w_bar) * bern +
           (wi * (1.0 - wi) / w_bar) * (pi - p_bar_w) * (pi - p_bar_w);
    e_b += (wi / w_bar - 1.0) * (pi - p_bar);
  }
  AsymptoticVariances out;
  out.v_ht = static_cast<double>(v_ht / static_cast<long double>(n));
  out.v_b = static_cast<double>(v_b / static_cast<long double>(n));
  out.e_b = std::sqrt(w_bar / static_cast<double>(n)) *
            static_cast<double>(e_b);
  return out;
}

std::vector<double> beta_hierarchy_shrinkage(const std::vector<double>& y_obs,
                                             double tau0) {
  if (y_obs.empty()) {
    throw std::invalid_argument("beta_hierarchy_shrinkage: empty sample");
  }
  if (!(tau0 > 0.0)) {
    throw std::invalid_argument(
        "beta_hierarchy_shrinkage: tau0 must be positive");
  }
  long double acc = 0.0L;
  for (double y : y_obs) acc += y;
  const double p_hat =
      static_cast<double>(acc / static_cast<long double>(y_obs.size()));
  std::vector<double> out(y_obs.size());
  for (std::size_t i = 0; i < y_obs.size(); ++i) {
    out[i] = p_hat + (y_obs[i] - p_hat) / (tau0 + 1.0);
  }
  return out;
}

RhoPosterior posterior_rho_concentration(
    const std::vector<double>& y_obs,
    const std::function<double(double)>& prior_rho, double tau0) {
  if (y_obs.empty()) {
    throw std::invalid_argument("posterior_rho_concentration: empty sample");
  }
  if (!prior_rho) {
    throw std::invalid_argument("posterior_rho_concentration: empty prior");
  }
  if (!(tau0 > 0.0)) {
    throw std::invalid_argument(
        "posterior_rho_concentration: tau0 must be positive");
  }
  long double successes_acc = 0.0L;
  for (double y : y_obs) {
    if (y != 0.0 && y != 1.0) {
      throw std::invalid_argument(
          "posterior_rho_concentration: outcomes must be 0/1");
    }
    successes_acc += y;
  }
  const double successes = static_cast<double>(successes_acc);
  const double failures =
      static_cast<double>(y_obs.size()) - successes;

  constexpr std::size_t kCells = 10000;
  std::vector<double> grid(kCells);
  std::vector<double> log_mass(kCells);
  for (std::size_t i = 0; i < kCells; ++i) {
    const double rho =
        (static_cast<double>(i) + 0.5) / static_cast<double>(kCells);
    grid[i] = rho;
    const double prior = prior_rho(rho);
    if (!(prior >= 0.0)) {
      throw std::invalid_argument(
          "posterior_rho_concentration: prior must be nonnegative");
    }
    log_mass[i] = prior == 0.0
                      ? -std::numeric_limits<double>::infinity()
                      : std::log(prior) + successes * std::log(rho) +
                            failures * std::log1p(-rho);
  }
  const double norm = stats::log_sum_exp(log_mass);
  if (!std::isfinite(norm)) {
    throw std::invalid_argument(
        "posterior_rho_concentration: prior places no mass on (0,1)");
  }
  RhoPosterior out;
  std::size_t arg_mode = 0;
  long double mean = 0.0L;
  long double second = 0.0L;
  for (std::size_t i = 0; i < kCells; ++i) {
    if (log_mass[i] > log_mass[arg_mode]) arg_mode = i;
    const double mass = std::exp(log_mass[i] - norm);
    mean += mass * grid[i];
    second += mass * grid[i] * grid[i];
  }
  out.mode = grid[arg_mode];
  const double variance = std::max(
      0.0, static_cast<double>(second - mean * mean));
  out.sd = std::sqrt(variance);
  return out;
}

}  // namespace lab
