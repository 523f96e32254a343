#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "lab/mixed_model.hpp"
#include "lab/rng.hpp"
#include "lab/stats.hpp"

using lab::FitCoordinates;
using lab::GaussianParams;
using lab::HospitalRecord;
using lab::MixedFit;
using lab::MixedModelTruth;
using lab::rng::RngStream;

namespace {

MixedModelTruth default_truth(double kappa_w, double rate) {
  MixedModelTruth truth;
  truth.kappa_w = kappa_w;
  truth.observe_rate = rate;
  return truth;
}

HospitalRecord complete_record(double x, double y, double x2, double y2) {
  HospitalRecord r;
  r.x = x;
  r.y = y;
  r.x2 = x2;
  r.y2 = y2;
  r.w = 1;
  return r;
}

struct Vec2 {
  double a = 0.0;
  double b = 0.0;
};
struct Sym2 {
  double aa = 0.0;
  double ab = 0.0;
  double bb = 0.0;
};

double bivariate_logpdf(double x, double y, const Vec2& m, const Sym2& s) {
  const double det = s.aa * s.bb - s.ab * s.ab;
  const double dx = x - m.a;
  const double dy = y - m.b;
  const double quad = (s.bb * dx * dx - 2.0 * s.ab * dx * dy +
                       s.aa * dy * dy) / det;
  return -std::log(2.0 * M_PI) - 0.5 * std::log(det) - 0.5 * quad;
}

/// Independent route to the record log-likelihood: marginal bivariate
/// density of the first patient times the conditional bivariate density of
/// the second, using closed-form 2x2 moment formulas.
double oracle_loglik(const std::vector<HospitalRecord>& records,
                     const GaussianParams& p, bool use_incomplete) {
  const double th = p.theta;
  const Vec2 mean{p.mu_g, p.mu_h + th * p.mu_g};
  const Sym2 within{
      p.var_g + p.var_eta,
      th * p.var_g + p.cov_gh + th * p.var_eta + p.cov_noise,
      th * th * p.var_g + p.var_h + 2.0 * th * p.cov_gh +
          th * th * p.var_eta + p.var_eps + 2.0 * th * p.cov_noise};
  const Sym2 between{p.var_g, th * p.var_g + p.cov_gh,
                     th * th * p.var_g + 2.0 * th * p.cov_gh + p.var_h};

  const double det = within.aa * within.bb - within.ab * within.ab;
  const double i_aa = within.bb / det;
  const double i_ab = -within.ab / det;
  const double i_bb = within.aa / det;
  const double k_aa = between.aa * i_aa + between.ab * i_ab;
  const double k_ab = between.aa * i_ab + between.ab * i_bb;
  const double k_ba = between.ab * i_aa + between.bb * i_ab;
  const double k_bb = between.ab * i_ab + between.bb * i_bb;
  const Sym2 cond{
      within.aa - (k_aa * between.aa + k_ab * between.ab),
      within.ab - (k_aa * between.ab + k_ab * between.bb),
      within.bb - (k_ba * between.ab + k_bb * between.bb)};

  double total = 0.0;
  for (const auto& r : records) {
    if (r.w == 1) {
      total += bivariate_logpdf(r.x, r.y, mean, within);
      const Vec2 cm{mean.a + k_aa * (r.x - mean.a) + k_ab * (r.y - mean.b),
                    mean.b + k_ba * (r.x - mean.a) + k_bb * (r.y - mean.b)};
      total += bivariate_logpdf(r.x2, r.y2, cm, cond);
    } else if (use_incomplete) {
      total += bivariate_logpdf(r.x, r.y, mean, within);
    }
  }
  return total;
}

FitCoordinates random_coordinates(RngStream& stream) {
  const auto box = [&](double lo, double hi) {
    return lo + (hi - lo) * stream.uniform01();
  };
  return {box(-1.2, 1.5), box(-1.0, 1.0), box(-1.0, 1.0), box(-0.6, 0.3),
          box(-0.6, 0.6), box(-0.6, 0.3), box(-0.8, 0.1), box(-0.8, 0.1)};
}

/// Dyadic rationals with a coarse mantissa, so shifts and differences are
/// exact in double arithmetic.
double dyadic(RngStream& stream, double scale) {
  const double grid = 256.0;
  const long long lo = -static_cast<long long>(scale * grid);
  const long long hi = static_cast<long long>(scale * grid);
  const double u = stream.uniform01();
  const long long k = lo + static_cast<long long>(u * (hi - lo + 1));
  return static_cast<double>(k) / grid;
}

}  // namespace

TEST_CASE("parameter and truth validation") {
  GaussianParams p;
  CHECK_NOTHROW(p.validate());

  GaussianParams bad = p;
  bad.var_g = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = p;
  bad.cov_gh = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = p;
  bad.cov_noise = 0.7;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = p;
  bad.theta = std::nan("");
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  MixedModelTruth truth;
  CHECK_NOTHROW(truth.validate());
  truth.observe_rate = 0.0;
  CHECK_THROWS_AS(truth.validate(), std::invalid_argument);
  truth.observe_rate = 1.2;
  CHECK_THROWS_AS(truth.validate(), std::invalid_argument);
  truth.observe_rate = 0.3;
  truth.kappa_w = std::nan("");
  CHECK_THROWS_AS(truth.validate(), std::invalid_argument);
}

TEST_CASE("observation intercept calibration") {
  MixedModelTruth flat = default_truth(0.0, 0.3);
  const double a0 = lab::observation_intercept(flat);
  CHECK(a0 == doctest::Approx(std::log(0.3 / 0.7)).epsilon(1e-12));

  CHECK_THROWS_AS(lab::observation_intercept(default_truth(0.0, 1.0)),
                  std::invalid_argument);

  MixedModelTruth coupled = default_truth(2.0, 0.3);
  RngStream stream(91, 5);
  const auto records = lab::generate_hospitals(coupled, 100000, stream);
  double observed = 0.0;
  for (const auto& r : records) observed += r.w;
  observed /= static_cast<double>(records.size());
  CHECK(observed == doctest::Approx(0.3).epsilon(0.02));
}

TEST_CASE("generator trivial laws") {
  RngStream stream(17, 0);

  SUBCASE("rate one records every second patient") {
    const auto records =
        lab::generate_hospitals(default_truth(0.0, 1.0), 500, stream);
    for (const auto& r : records) {
      REQUIRE(r.w == 1);
    }
  }

  SUBCASE("noiseless records satisfy the structural identity") {
    MixedModelTruth truth = default_truth(0.0, 0.5);
    truth.params.theta = 1.7;
    truth.params.var_eta = 0.0;
    truth.params.var_eps = 0.0;
    const auto records = lab::generate_hospitals(truth, 400, stream);
    for (const auto& r : records) {
      if (r.w != 1) continue;
      const double h1 = r.y - truth.params.theta * r.x;
      const double h2 = r.y2 - truth.params.theta * r.x2;
      REQUIRE(h1 == doctest::Approx(h2).epsilon(1e-12));
    }
  }

  SUBCASE("streams reproduce records bit for bit") {
    RngStream s1(123, 7);
    RngStream s2(123, 7);
    const auto a = lab::generate_hospitals(default_truth(2.0, 0.3), 200, s1);
    const auto b = lab::generate_hospitals(default_truth(2.0, 0.3), 200, s2);
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a[i].x == b[i].x);
      REQUIRE(a[i].y == b[i].y);
      REQUIRE(a[i].x2 == b[i].x2);
      REQUIRE(a[i].y2 == b[i].y2);
      REQUIRE(a[i].w == b[i].w);
    }
  }

  SUBCASE("coupling tilts the observed sub-sample upward") {
    const std::size_t n = 20000;
    const auto records =
        lab::generate_hospitals(default_truth(2.0, 0.3), n, stream);
    double mean_all = 0.0;
    double mean_obs = 0.0;
    double n_obs = 0.0;
    for (const auto& r : records) {
      mean_all += r.x;
      if (r.w == 1) {
        mean_obs += r.x;
        n_obs += 1.0;
      }
    }
    mean_all /= static_cast<double>(n);
    mean_obs /= n_obs;
    CHECK(n_obs / static_cast<double>(n) == doctest::Approx(0.3).epsilon(0.05));
    CHECK(mean_obs - mean_all > 0.4);
  }
}

TEST_CASE("differencing estimator hand values and errors") {
  SUBCASE("two-hospital example") {
    std::vector<HospitalRecord> records{complete_record(0.0, 0.0, 1.0, 2.0),
                                        complete_record(1.0, 2.0, 0.0, 0.0)};
    CHECK(lab::differencing_estimator(records) == 2.0);
  }

  SUBCASE("exact linear differences recover the slope exactly") {
    std::vector<HospitalRecord> records;
    RngStream stream(5, 1);
    const double slope = 1.5;
    for (int i = 0; i < 40; ++i) {
      const double x = dyadic(stream, 8.0);
      const double dx = dyadic(stream, 4.0);
      const double y = dyadic(stream, 8.0);
      records.push_back(complete_record(x, y, x + dx, y + slope * dx));
    }
    CHECK(lab::differencing_estimator(records) == slope);
  }

  SUBCASE("incomplete records are ignored") {
    std::vector<HospitalRecord> records{complete_record(0.0, 0.0, 1.0, 2.0),
                                        complete_record(1.0, 2.0, 0.0, 0.0)};
    const double base = lab::differencing_estimator(records);
    HospitalRecord partial;
    partial.x = 123.0;
    partial.y = -7.0;
    records.push_back(partial);
    CHECK(lab::differencing_estimator(records) == base);
  }

  SUBCASE("error conditions") {
    std::vector<HospitalRecord> none;
    CHECK_THROWS_AS(lab::differencing_estimator(none), std::runtime_error);

    std::vector<HospitalRecord> one{complete_record(0.0, 0.0, 1.0, 2.0)};
    CHECK_THROWS_AS(lab::differencing_estimator(one), std::runtime_error);

    std::vector<HospitalRecord> flat{complete_record(1.0, 2.0, 1.0, 3.0),
                                     complete_record(0.5, 1.0, 0.5, 0.0)};
    CHECK_THROWS_AS(lab::differencing_estimator(flat), std::runtime_error);

    std::vector<HospitalRecord> bad{complete_record(0.0, 0.0, 1.0, 2.0)};
    bad.push_back(complete_record(1.0, 2.0, 0.0, 0.0));
    bad.back().w = 2;
    CHECK_THROWS_AS(lab::differencing_estimator(bad), std::invalid_argument);
  }
}

TEST_CASE("differencing ignores per-hospital location shifts bit for bit") {
  RngStream stream(29, 3);
  std::vector<HospitalRecord> records;
  for (int i = 0; i < 50; ++i) {
    const double x = dyadic(stream, 8.0);
    const double x2 = dyadic(stream, 8.0);
    const double y = dyadic(stream, 8.0);
    const double y2 = dyadic(stream, 8.0);
    records.push_back(complete_record(x, y, x2, y2));
  }
  const double base = lab::differencing_estimator(records);

  std::vector<HospitalRecord> shifted = records;
  for (auto& r : shifted) {
    const double cg = dyadic(stream, 16.0);
    const double ch = dyadic(stream, 16.0);
    r.x += cg;
    r.x2 += cg;
    r.y += ch;
    r.y2 += ch;
  }
  CHECK(lab::differencing_estimator(shifted) == base);
}

TEST_CASE("differencing recovers theta from a large panel") {
  RngStream stream(41, 11);
  const auto records =
      lab::generate_hospitals(default_truth(0.0, 0.3), 100000, stream);
  const double est = lab::differencing_estimator(records);
  CHECK(std::abs(est - 1.0) < 0.02);
}

TEST_CASE("coordinates round-trip and reject unusable parameters") {
  GaussianParams p;
  p.theta = -0.7;
  p.mu_g = 0.4;
  p.mu_h = 1.1;
  p.var_g = 2.0;
  p.cov_gh = -0.6;
  p.var_h = 1.3;
  p.var_eta = 0.9;
  p.var_eps = 0.25;
  const FitCoordinates psi = lab::coordinates_from_params(p);
  const GaussianParams back = lab::params_from_coordinates(psi);
  CHECK(back.theta == doctest::Approx(p.theta).epsilon(1e-14));
  CHECK(back.mu_g == doctest::Approx(p.mu_g).epsilon(1e-14));
  CHECK(back.mu_h == doctest::Approx(p.mu_h).epsilon(1e-14));
  CHECK(back.var_g == doctest::Approx(p.var_g).epsilon(1e-13));
  CHECK(back.cov_gh == doctest::Approx(p.cov_gh).epsilon(1e-13));
  CHECK(back.var_h == doctest::Approx(p.var_h).epsilon(1e-13));
  CHECK(back.var_eta == doctest::Approx(p.var_eta).epsilon(1e-13));
  CHECK(back.var_eps == doctest::Approx(p.var_eps).epsilon(1e-13));
  CHECK(back.cov_noise == 0.0);

  GaussianParams tied = p;
  tied.cov_noise = 0.1;
  CHECK_THROWS_AS(lab::coordinates_from_params(tied), std::invalid_argument);

  GaussianParams flat = p;
  flat.var_eta = 0.0;
  CHECK_THROWS_AS(lab::coordinates_from_params(flat), std::invalid_argument);

  GaussianParams singular = p;
  singular.cov_gh = std::sqrt(p.var_g * p.var_h);
  CHECK_THROWS_AS(lab::coordinates_from_params(singular),
                  std::invalid_argument);
}

TEST_CASE("likelihood matches the conditional-factorization oracle") {
  RngStream stream(53, 2);
  const auto records =
      lab::generate_hospitals(default_truth(1.0, 0.4), 60, stream);

  GaussianParams at = GaussianParams{};
  CHECK(lab::joint_log_likelihood(records, at, true) ==
        doctest::Approx(oracle_loglik(records, at, true)).epsilon(1e-11));
  CHECK(lab::joint_log_likelihood(records, at, false) ==
        doctest::Approx(oracle_loglik(records, at, false)).epsilon(1e-11));

  at.theta = -0.4;
  at.mu_g = 0.2;
  at.mu_h = 0.9;
  at.var_g = 1.7;
  at.cov_gh = -0.3;
  at.var_h = 0.6;
  at.var_eta = 0.8;
  at.cov_noise = 0.25;
  at.var_eps = 0.5;
  CHECK(lab::joint_log_likelihood(records, at, true) ==
        doctest::Approx(oracle_loglik(records, at, true)).epsilon(1e-11));

  GaussianParams degenerate = at;
  degenerate.var_eta = 0.0;
  degenerate.cov_noise = 0.0;
  degenerate.var_eps = 0.0;
  CHECK_THROWS_AS(lab::joint_log_likelihood(records, degenerate, true),
                  std::invalid_argument);
}

TEST_CASE("objective agrees with the likelihood it wraps") {
  RngStream stream(53, 9);
  const auto records =
      lab::generate_hospitals(default_truth(0.5, 0.3), 80, stream);
  double complete = 0.0;
  for (const auto& r : records) complete += r.w;
  RngStream psi_stream(60, 0);
  for (int trial = 0; trial < 5; ++trial) {
    const FitCoordinates psi = random_coordinates(psi_stream);
    const GaussianParams p = lab::params_from_coordinates(psi);
    const double n_all = static_cast<double>(records.size());
    CHECK(lab::fit_objective(records, psi, true) ==
          doctest::Approx(-lab::joint_log_likelihood(records, p, true) /
                          n_all)
              .epsilon(1e-12));
    CHECK(lab::fit_objective(records, psi, false) ==
          doctest::Approx(-lab::joint_log_likelihood(records, p, false) /
                          complete)
              .epsilon(1e-12));
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  RngStream stream(71, 4);
  const auto records =
      lab::generate_hospitals(default_truth(0.0, 0.3), 150, stream);

  RngStream psi_stream(72, 0);
  for (int point = 0; point < 20; ++point) {
    const FitCoordinates psi = random_coordinates(psi_stream);
    for (const bool use_incomplete : {false, true}) {
      const FitCoordinates grad =
          lab::fit_gradient(records, psi, use_incomplete);
      for (std::size_t k = 0; k < psi.size(); ++k) {
        FitCoordinates hi = psi;
        FitCoordinates lo = psi;
        const double h = 1e-5 * (1.0 + std::abs(psi[k]));
        hi[k] += h;
        lo[k] -= h;
        const double fd = (lab::fit_objective(records, hi, use_incomplete) -
                           lab::fit_objective(records, lo, use_incomplete)) /
                          (2.0 * h);
        const double tol = 1e-5 * std::max(std::abs(grad[k]), 0.1);
        REQUIRE(std::abs(grad[k] - fd) < tol);
      }
    }
  }
}

TEST_CASE("joint fit recovers the truth and dominates it") {
  MixedModelTruth truth = default_truth(0.0, 0.3);
  RngStream stream(83, 1);
  const auto records = lab::generate_hospitals(truth, 4000, stream);

  for (const bool use_incomplete : {false, true}) {
    const MixedFit fit = lab::gaussian_joint_fit(records, use_incomplete);
    CHECK(fit.gradient_norm <= 1e-5);
    CHECK(fit.used_incomplete == use_incomplete);
    CHECK(fit.complete_count + fit.incomplete_count == records.size());
    CHECK(fit.params.cov_noise == 0.0);

    CHECK(std::abs(fit.params.theta - 1.0) < 0.08);
    CHECK(std::abs(fit.params.mu_g - 1.0) < 0.1);
    CHECK(std::abs(fit.params.mu_h + 0.3) < 0.1);
    CHECK(std::abs(fit.params.var_g - 1.0) < 0.2);
    CHECK(std::abs(fit.params.cov_gh - 0.5) < 0.15);
    CHECK(std::abs(fit.params.var_h - 0.8) < 0.15);
    CHECK(std::abs(fit.params.var_eta - 0.5) < 0.1);
    CHECK(std::abs(fit.params.var_eps - 0.4) < 0.1);

    const double at_truth =
        lab::joint_log_likelihood(records, truth.params, use_incomplete);
    CHECK(fit.log_likelihood >= at_truth);
  }
}

TEST_CASE("fitted likelihood dominates the generating parameters") {
  for (const double kappa : {0.0, 2.0}) {
    MixedModelTruth truth = default_truth(kappa, 0.3);
    for (int rep = 0; rep < 15; ++rep) {
      RngStream stream(97, static_cast<std::uint64_t>(rep) + 100 * (kappa > 0));
      const auto records = lab::generate_hospitals(truth, 800, stream);
      for (const bool use_incomplete : {false, true}) {
        const MixedFit fit = lab::gaussian_joint_fit(records, use_incomplete);
        const double at_truth =
            lab::joint_log_likelihood(records, truth.params, use_incomplete);
        REQUIRE(fit.log_likelihood >= at_truth);
      }
    }
  }
}

TEST_CASE("differencing and joint fit agree without coupling") {
  MixedModelTruth truth = default_truth(0.0, 0.3);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    RngStream stream(101, static_cast<std::uint64_t>(rep));
    const auto records = lab::generate_hospitals(truth, 100000, stream);
    const double diff = lab::differencing_estimator(records);
    const MixedFit fit = lab::gaussian_joint_fit(records, true);
    worst = std::max(worst, std::abs(diff - fit.params.theta));
  }
  CHECK(worst < 0.02);
}

TEST_CASE("coupled observation biases the joint fit but not differencing") {
  MixedModelTruth truth = default_truth(2.0, 0.3);
  const int reps = 60;
  lab::stats::RunningMoments joint;
  lab::stats::RunningMoments diff;
  for (int rep = 0; rep < reps; ++rep) {
    RngStream stream(103, static_cast<std::uint64_t>(rep));
    const auto records = lab::generate_hospitals(truth, 4000, stream);
    joint.add(lab::gaussian_joint_fit(records, true).params.theta);
    diff.add(lab::differencing_estimator(records));
  }
  const double joint_se = std::sqrt(joint.variance_sample() / reps);
  const double diff_se = std::sqrt(diff.variance_sample() / reps);
  CHECK(std::abs(joint.mean() - 1.0) > 3.0 * joint_se);
  CHECK(std::abs(diff.mean() - 1.0) < 3.0 * diff_se);
}

TEST_CASE("incomplete records do not hurt the uncoupled fit") {
  MixedModelTruth truth = default_truth(0.0, 0.3);
  const int reps = 60;
  lab::stats::RunningMoments with_marginals;
  lab::stats::RunningMoments complete_only;
  for (int rep = 0; rep < reps; ++rep) {
    RngStream stream(107, static_cast<std::uint64_t>(rep));
    const auto records = lab::generate_hospitals(truth, 4000, stream);
    with_marginals.add(lab::gaussian_joint_fit(records, true).params.theta);
    complete_only.add(lab::gaussian_joint_fit(records, false).params.theta);
  }
  CHECK(with_marginals.variance_sample() <= complete_only.variance_sample());
}

TEST_CASE("joint fit input validation") {
  RngStream stream(113, 0);
  const auto records =
      lab::generate_hospitals(default_truth(0.0, 0.3), 49, stream);
  CHECK_THROWS_AS(lab::gaussian_joint_fit(records, true),
                  std::invalid_argument);

  std::vector<HospitalRecord> incomplete_only(60);
  for (auto& r : incomplete_only) {
    r.x = stream.normal(0.0, 1.0);
    r.y = stream.normal(0.0, 1.0);
  }
  CHECK_THROWS_AS(lab::gaussian_joint_fit(incomplete_only, true),
                  std::runtime_error);

  auto bad = lab::generate_hospitals(default_truth(0.0, 0.3), 60, stream);
  bad.front().w = 2;
  CHECK_THROWS_AS(lab::gaussian_joint_fit(bad, true), std::invalid_argument);
}
