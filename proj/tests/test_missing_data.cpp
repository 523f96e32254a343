#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "lab/missing_data.hpp"
#include "lab/rng.hpp"
#include "lab/stats.hpp"

using lab::AsymptoticVariances;
using lab::BernoulliPanel;
using lab::PanelGenConfig;
using lab::RhoPosterior;
using lab::rng::RngStream;

namespace {

PanelGenConfig coupled_two_strata(std::size_t n, double kappa) {
  PanelGenConfig cfg;
  cfg.n = n;
  cfg.p_law = PanelGenConfig::PLaw::coupled;
  cfg.p_value = 0.4;
  cfg.kappa = kappa;
  cfg.w_law = PanelGenConfig::WLaw::strata;
  cfg.stratum_weights = {0.1, 0.9};
  cfg.stratum_fractions = {0.5, 0.5};
  return cfg;
}

BernoulliPanel manual_panel(std::vector<double> p, std::vector<double> w,
                            std::vector<int> s, std::vector<int> y) {
  BernoulliPanel panel;
  panel.p = std::move(p);
  panel.w = std::move(w);
  panel.s = std::move(s);
  panel.y = std::move(y);
  return panel;
}

/// Exact beta-law conditional means via quadrature: the observed-outcome
/// tilt E(p|Y=1) - E(p|Y=0) against var(p)/(E p (1 - E p)).
double beta_tilt_gap(double a, double b) {
  const std::size_t cells = 200000;
  long double m0 = 0.0L;
  long double m1 = 0.0L;
  long double m2 = 0.0L;
  for (std::size_t i = 0; i < cells; ++i) {
    const double x =
        (static_cast<double>(i) + 0.5) / static_cast<double>(cells);
    const double f = std::pow(x, a - 1.0) * std::pow(1.0 - x, b - 1.0);
    m0 += f;
    m1 += f * x;
    m2 += f * x * x;
  }
  const double mean = static_cast<double>(m1 / m0);
  const double second = static_cast<double>(m2 / m0);
  const double given_one = second / mean;
  const double given_zero = (mean - second) / (1.0 - mean);
  const double variance = second - mean * mean;
  return (given_one - given_zero) - variance / (mean * (1.0 - mean));
}

}  // namespace

TEST_CASE("panel config validation rejects malformed setups") {
  PanelGenConfig cfg;
  cfg.n = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.n = 10;
  cfg.p_value = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.p_value = 0.4;
  cfg.w_value = 0.001;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.w_value = 1.0;
  CHECK_NOTHROW(cfg.validate());

  cfg.p_law = PanelGenConfig::PLaw::beta;
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.tau = 5.0;
  cfg.rho = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.rho = 0.3;
  CHECK_NOTHROW(cfg.validate());

  cfg.w_law = PanelGenConfig::WLaw::strata;
  cfg.stratum_weights = {0.5, 0.5};
  cfg.stratum_fractions = {0.5, 0.5};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.stratum_weights = {0.5, 0.8};
  cfg.stratum_fractions = {0.5, 0.4};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.stratum_fractions = {0.5, 0.5};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("panel generation honors the trivial laws") {
  RngStream stream(101, 1);

  PanelGenConfig cfg;
  cfg.n = 500;
  cfg.p_law = PanelGenConfig::PLaw::constant;
  cfg.p_value = 0.4;
  cfg.w_law = PanelGenConfig::WLaw::constant;
  cfg.w_value = 1.0;
  const BernoulliPanel panel = lab::generate_panel(cfg, stream);
  CHECK(panel.size() == 500);
  CHECK(panel.true_mean() == doctest::Approx(0.4).epsilon(1e-15));
  for (std::size_t i = 0; i < panel.size(); ++i) {
    CHECK(panel.p[i] == 0.4);
    CHECK(panel.s[i] == 1);
  }
  CHECK(panel.clamp_rate == 0.0);

  RngStream again(101, 1);
  const BernoulliPanel repeat = lab::generate_panel(cfg, again);
  CHECK(repeat.y == panel.y);
}

TEST_CASE("coupled law shifts the weighted mean by kappa var over mean") {
  RngStream stream(202, 7);
  const PanelGenConfig cfg = coupled_two_strata(2000, 0.2);
  const BernoulliPanel panel = lab::generate_panel(cfg, stream);

  // Exactly half the units sit at each weight, so the population variance
  // of the weights is 0.16 and their mean is 0.5.
  const double gap = panel.weighted_true_mean() - panel.true_mean();
  CHECK(gap == doctest::Approx(0.2 * 0.16 / 0.5).epsilon(1e-12));
  CHECK(panel.clamp_rate == 0.0);
}

TEST_CASE("heavy clamping is rejected and mild clamping is recorded") {
  RngStream stream(303, 3);
  PanelGenConfig heavy = coupled_two_strata(1000, 0.5);
  heavy.p_value = 0.95;
  CHECK_THROWS_AS(lab::generate_panel(heavy, stream), std::runtime_error);

  PanelGenConfig mild;
  mild.n = 1000;
  mild.p_law = PanelGenConfig::PLaw::coupled;
  mild.p_value = 0.5;
  mild.kappa = 1.2;
  mild.w_law = PanelGenConfig::WLaw::strata;
  mild.stratum_weights = {0.5, 0.98};
  mild.stratum_fractions = {0.96, 0.04};
  RngStream mild_stream(303, 4);
  const BernoulliPanel panel = lab::generate_panel(mild, mild_stream);
  CHECK(panel.clamp_rate == doctest::Approx(0.04).epsilon(1e-12));
  CHECK(panel.p.back() == doctest::Approx(1.0 - mild.clamp_eps));
}

TEST_CASE("weighted ratio estimator matches its closed examples") {
  const BernoulliPanel two =
      manual_panel({0.5, 0.5}, {0.5, 1.0}, {1, 1}, {1, 0});
  CHECK(lab::ht_hajek(two) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  const BernoulliPanel all =
      manual_panel({0.5, 0.5, 0.5}, {1.0, 1.0, 1.0}, {1, 1, 1}, {1, 0, 1});
  CHECK(lab::ht_hajek(all) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(lab::ht_hajek(all) == doctest::Approx(lab::naive_bayes_mean(all)));

  const BernoulliPanel one =
      manual_panel({0.5, 0.5}, {0.03, 0.9}, {1, 0}, {1, 0});
  CHECK(lab::ht_hajek(one) == 1.0);

  const BernoulliPanel none =
      manual_panel({0.5, 0.5}, {0.5, 0.5}, {0, 0}, {0, 0});
  CHECK_THROWS_AS(lab::ht_hajek(none), std::runtime_error);
  CHECK_THROWS_AS(lab::naive_bayes_mean(none), std::runtime_error);

  const BernoulliPanel naive =
      manual_panel({0.5, 0.5, 0.5}, {0.9, 0.9, 0.9}, {1, 1, 0}, {1, 0, 1});
  CHECK(lab::naive_bayes_mean(naive) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("weighted ratio estimator is scale invariant and bounded") {
  RngStream stream(404, 11);
  for (int trial = 0; trial < 40; ++trial) {
    RngStream t = stream.substream(static_cast<std::uint64_t>(trial));
    PanelGenConfig cfg;
    cfg.n = 60;
    cfg.p_law = PanelGenConfig::PLaw::beta;
    cfg.tau = 4.0;
    cfg.rho = 0.35;
    cfg.w_law = PanelGenConfig::WLaw::continuous;
    cfg.w_min = 0.05;
    BernoulliPanel panel = lab::generate_panel(cfg, t);
    bool any = false;
    for (int si : panel.s) any = any || si == 1;
    if (!any) continue;

    const double base = lab::ht_hajek(panel);
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);
    const double naive = lab::naive_bayes_mean(panel);
    CHECK(naive >= 0.0);
    CHECK(naive <= 1.0);

    BernoulliPanel scaled = panel;
    for (auto& wi : scaled.w) wi *= 0.5;
    CHECK(lab::ht_hajek(scaled) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("stratified estimator collapses and imputes as specified") {
  const BernoulliPanel panel = manual_panel(
      {0.5, 0.5, 0.5, 0.5, 0.5, 0.5}, {0.1, 0.1, 0.1, 0.9, 0.9, 0.9},
      {1, 1, 0, 1, 1, 1}, {1, 0, 0, 1, 1, 0});

  // One stratum covering everything reduces to the naive mean.
  const BernoulliPanel flat = manual_panel(
      {0.5, 0.5, 0.5}, {0.7, 0.7, 0.7}, {1, 0, 1}, {1, 0, 0});
  CHECK(lab::stratified_bayes(flat, {0.7}) ==
        doctest::Approx(lab::naive_bayes_mean(flat)).epsilon(1e-15));

  // Two strata: 3 * (1/2) + 3 * (2/3), over n = 6.
  CHECK(lab::stratified_bayes(panel, {0.1, 0.9}) ==
        doctest::Approx((3.0 * 0.5 + 3.0 * (2.0 / 3.0)) / 6.0)
            .epsilon(1e-15));

  // Fully observed panel: equals the overall mean of y.
  const BernoulliPanel full = manual_panel(
      {0.5, 0.5, 0.5, 0.5}, {0.2, 0.2, 0.8, 0.8}, {1, 1, 1, 1}, {1, 0, 1, 1});
  CHECK(lab::stratified_bayes(full, {0.2, 0.8}) ==
        doctest::Approx(0.75).epsilon(1e-15));

  // Empty observed stratum contributes the grand observed mean.
  const BernoulliPanel hole = manual_panel(
      {0.5, 0.5, 0.5, 0.5}, {0.2, 0.2, 0.8, 0.8}, {1, 1, 0, 0}, {1, 0, 1, 1});
  CHECK(lab::stratified_bayes(hole, {0.2, 0.8}) ==
        doctest::Approx((2.0 * 0.5 + 2.0 * 0.5) / 4.0).epsilon(1e-15));

  CHECK_THROWS_AS(lab::stratified_bayes(panel, {0.1, 0.5}),
                  std::invalid_argument);
  CHECK_THROWS_AS(lab::stratified_bayes(panel, {}), std::invalid_argument);
  const BernoulliPanel none = manual_panel({0.5}, {0.1}, {0}, {0});
  CHECK_THROWS_AS(lab::stratified_bayes(none, {0.1}), std::runtime_error);
}

TEST_CASE("variance functionals match their constant-law reductions") {
  const BernoulliPanel varied = manual_panel(
      {0.2, 0.3, 0.5, 0.7}, {0.6, 0.6, 0.6, 0.6}, {1, 1, 1, 1}, {0, 0, 1, 1});
  const AsymptoticVariances av = lab::asymptotic_variances(varied);
  double bern = 0.0;
  double spread = 0.0;
  const double p_bar = 0.425;
  for (double pi : {0.2, 0.3, 0.5, 0.7}) {
    bern += pi * (1.0 - pi) / 4.0;
    spread += (pi - p_bar) * (pi - p_bar) / 4.0;
  }
  CHECK(av.v_ht == doctest::Approx(bern + 0.4 * spread).epsilon(1e-12));
  CHECK(av.v_b == doctest::Approx(av.v_ht).epsilon(1e-12));
  CHECK(av.e_b == doctest::Approx(0.0));

  const BernoulliPanel flat_p = manual_panel(
      {0.4, 0.4, 0.4}, {0.2, 0.5, 0.8}, {1, 1, 1}, {0, 0, 1});
  const AsymptoticVariances fv = lab::asymptotic_variances(flat_p);
  const double w_bar = 0.5;
  double lead = 0.0;
  for (double wi : {0.2, 0.5, 0.8}) lead += (w_bar / wi) * 0.24 / 3.0;
  CHECK(fv.v_ht == doctest::Approx(lead).epsilon(1e-12));
  CHECK(fv.e_b == doctest::Approx(0.0));
}

TEST_CASE("monte carlo panel moments track the variance formulas") {
  const PanelGenConfig cfg = coupled_two_strata(4000, 0.2);
  RngStream probe(606, 1);
  const BernoulliPanel fixed = lab::generate_panel(cfg, probe);
  const AsymptoticVariances av = lab::asymptotic_variances(fixed);
  const double p_bar = fixed.true_mean();
  const double p_bar_w = fixed.weighted_true_mean();
  const double w_bar = 0.5;
  const double scale = std::sqrt(cfg.n * w_bar);

  lab::stats::RunningMoments ht_scaled;
  lab::stats::RunningMoments naive_scaled;
  RngStream stream(606, 2);
  const int reps = 600;
  for (int r = 0; r < reps; ++r) {
    RngStream rep = stream.substream(static_cast<std::uint64_t>(r));
    const BernoulliPanel panel = lab::generate_panel(cfg, rep);
    ht_scaled.add(scale * (lab::ht_hajek(panel) - p_bar));
    naive_scaled.add(scale * (lab::naive_bayes_mean(panel) - p_bar_w));
  }

  CHECK(std::abs(ht_scaled.variance_population() / av.v_ht - 1.0) < 0.15);
  CHECK(std::abs(naive_scaled.variance_population() / av.v_b - 1.0) < 0.15);

  // The weighted estimator is centered; the naive one sits e_b away in the
  // scaled units.
  const double ht_se =
      std::sqrt(ht_scaled.variance_population() / reps);
  CHECK(std::abs(ht_scaled.mean()) < 4.0 * ht_se);
  const double naive_bias_scaled =
      naive_scaled.mean() + scale * (p_bar_w - p_bar);
  CHECK(std::abs(naive_bias_scaled / av.e_b - 1.0) < 0.15);
  CHECK(av.e_b / scale == doctest::Approx(0.2 * 0.16 / 0.5).epsilon(1e-12));
}

TEST_CASE("stratified and weighted estimators agree at large samples") {
  const PanelGenConfig cfg = coupled_two_strata(20000, 0.2);
  RngStream stream(707, 5);
  double worst = 0.0;
  for (int r = 0; r < 30; ++r) {
    RngStream rep = stream.substream(static_cast<std::uint64_t>(r));
    const BernoulliPanel panel = lab::generate_panel(cfg, rep);
    const double gap = std::abs(lab::stratified_bayes(panel, {0.1, 0.9}) -
                                lab::ht_hajek(panel));
    worst = std::max(worst, gap);
  }
  CHECK(worst < 0.02);
}

TEST_CASE("hierarchical shrinkage averages back to the observed mean") {
  const std::vector<double> y = {1, 0, 0, 1, 1, 1, 0};
  const double p_hat = 4.0 / 7.0;

  const std::vector<double> half = lab::beta_hierarchy_shrinkage(y, 1.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(half[i] == doctest::Approx(p_hat + (y[i] - p_hat) / 2.0)
                         .epsilon(1e-14));
  }

  double mean = 0.0;
  for (double v : lab::beta_hierarchy_shrinkage(y, 3.7)) mean += v;
  CHECK(mean / 7.0 == doctest::Approx(p_hat).epsilon(1e-14));

  for (double v : lab::beta_hierarchy_shrinkage(y, 1e9)) {
    CHECK(v == doctest::Approx(p_hat).epsilon(1e-7));
  }

  CHECK_THROWS_AS(lab::beta_hierarchy_shrinkage({}, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(lab::beta_hierarchy_shrinkage(y, 0.0),
                  std::invalid_argument);
}

TEST_CASE("grid posterior over the hierarchy mean concentrates correctly") {
  const auto uniform_prior = [](double) { return 1.0; };

  std::vector<double> balanced(10, 0.0);
  for (std::size_t i = 0; i < 5; ++i) balanced[i] = 1.0;
  const RhoPosterior symmetric =
      lab::posterior_rho_concentration(balanced, uniform_prior, 10.0);
  CHECK(std::abs(symmetric.mode - 0.5) <= 1e-4);

  std::vector<double> big(10000, 0.0);
  for (std::size_t i = 0; i < 3000; ++i) big[i] = 1.0;
  const RhoPosterior tight =
      lab::posterior_rho_concentration(big, uniform_prior, 10.0);
  CHECK(std::abs(tight.mode - 0.3) < 0.01);
  const double beta_sd = std::sqrt(3001.0 * 7001.0 /
                                   (10002.0 * 10002.0 * 10003.0));
  CHECK(tight.sd == doctest::Approx(beta_sd).epsilon(0.01));
  CHECK(std::abs(tight.sd / std::sqrt(0.21 / 10000.0) - 1.0) < 0.2);

  const auto shifted_prior = [](double r) { return r >= 0.8 ? 1.0 : 0.0; };
  std::vector<double> low(50, 0.0);
  for (std::size_t i = 0; i < 15; ++i) low[i] = 1.0;
  const RhoPosterior boundary =
      lab::posterior_rho_concentration(low, shifted_prior, 10.0);
  CHECK(boundary.mode >= 0.8);
  CHECK(boundary.mode < 0.8 + 1e-3);

  const std::vector<double> ones(5, 1.0);
  const RhoPosterior extreme =
      lab::posterior_rho_concentration(ones, uniform_prior, 10.0);
  CHECK(extreme.mode > 0.999);

  CHECK_THROWS_AS(
      lab::posterior_rho_concentration({}, uniform_prior, 10.0),
      std::invalid_argument);
  CHECK_THROWS_AS(
      lab::posterior_rho_concentration({0.5}, uniform_prior, 10.0),
      std::invalid_argument);
  CHECK_THROWS_AS(
      lab::posterior_rho_concentration(ones, [](double) { return -1.0; },
                                       10.0),
      std::invalid_argument);
}

TEST_CASE("observed-outcome tilt identity holds under beta laws") {
  CHECK(std::abs(beta_tilt_gap(2.0, 3.0)) < 1e-8);
  CHECK(std::abs(beta_tilt_gap(5.0, 1.5)) < 1e-8);
  CHECK(std::abs(beta_tilt_gap(0.7, 0.9)) < 1e-6);
}
