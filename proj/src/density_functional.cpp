#include "lab/density_functional.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <utility>

#include "lab/stats.hpp"

namespace lab {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

double simpson(const std::function<double(double)>& g, double a, double b,
               std::size_t panels) {
  if (panels == 0) throw std::invalid_argument("simpson: zero panels");
  const double h = (b - a) / static_cast<double>(panels);
  long double acc = 0.0L;
  for (std::size_t j = 0; j < panels; ++j) {
    const double l = a + h * static_cast<double>(j);
    const double r = (j + 1 == panels) ? b : a + h * static_cast<double>(j + 1);
    acc += (r - l) / 6.0 * (g(l) + 4.0 * g(0.5 * (l + r)) + g(r));
  }
  return static_cast<double>(acc);
}

double bump_amplitude(std::size_t bins, double alpha) {
  return 0.5 * kPi * std::pow(static_cast<double>(bins), -alpha);
}

/// Unsigned bump on bin k of K: (pi/2) K^{-alpha} sin(pi(Kx - k)).
double bump_value(double x, std::size_t bins, std::size_t k, double alpha) {
  const double t = static_cast<double>(bins) * x - static_cast<double>(k);
  if (t <= 0.0 || t >= 1.0) return 0.0;
  return bump_amplitude(bins, alpha) * std::sin(kPi * t);
}

void check_even_bins(std::size_t bins, const char* who) {
  if (bins < 2 || bins % 2 != 0) {
    throw std::invalid_argument(std::string(who) +
                                ": bin count must be even and at least 2");
  }
}

std::uint64_t uniform_index(rng::RngStream& stream, std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform_index: zero bound");
  const std::uint64_t zone =
      (std::numeric_limits<std::uint64_t>::max() / bound) * bound;
  for (;;) {
    const std::uint64_t r = stream.next_u64();
    if (r < zone) return r % bound;
  }
}

void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  if (workers <= 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    workers = hw == 0 ? 1 : static_cast<int>(hw);
  }
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&, t]() {
      for (int i = t; i < count; i += workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// Replication-independent quantities of the bump-family posterior.
struct FamilyGeometry {
  std::vector<double> bin_masses;    ///< Base mass of each bin.
  std::vector<double> cross_moments; ///< Base-times-bump integral per bin.
  double theta0 = 0.0;               ///< Squared integral of the base.
  double energy = 0.0;               ///< Total squared-bump mass.
  double mu = 0.0;                   ///< Per-bin mass shift magnitude.
};

FamilyGeometry family_geometry(const HolderDensity& f0, std::size_t bins) {
  FamilyGeometry g;
  g.bin_masses.resize(bins);
  g.cross_moments.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    g.bin_masses[k] = bin_mass(f0, bins, k);
    g.cross_moments[k] = bump_cross_moment(f0, bins, k);
  }
  g.theta0 = integral_of_square(f0);
  g.energy = bump_energy(bins, f0.alpha());
  g.mu = std::pow(static_cast<double>(bins), -(1.0 + f0.alpha()));
  return g;
}

std::vector<double> posterior_sign_means(const std::vector<long long>& counts,
                                         const FamilyGeometry& g) {
  const std::size_t bins = counts.size();
  long long total = 0;
  for (long long c : counts) {
    if (c < 0) throw std::invalid_argument("posterior: negative count");
    total += c;
  }
  if (total <= 0) throw std::invalid_argument("posterior: empty counts");
  const double n = static_cast<double>(total);

  std::vector<double> shift(bins);
  std::vector<double> sigma2(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    const double q0 = g.bin_masses[k];
    if (q0 <= 0.0 || q0 >= 1.0) {
      throw std::invalid_argument("posterior: bin mass outside (0,1)");
    }
    shift[k] = static_cast<double>(counts[k]) / n - q0;
    sigma2[k] = q0 * (1.0 - q0) / n;
  }

  std::vector<double> means(bins);
  if (bins <= 6) {
    std::vector<double> score(bins);
    for (std::size_t k = 0; k < bins; ++k) {
      score[k] = shift[k] * g.mu / sigma2[k];
    }
    std::vector<double> log_weights;
    std::vector<std::uint32_t> members;
    const std::uint32_t all = 1u << bins;
    for (std::uint32_t mask = 0; mask < all; ++mask) {
      if (std::popcount(mask) != static_cast<int>(bins / 2)) continue;
      double lw = 0.0;
      for (std::size_t k = 0; k < bins; ++k) {
        lw += (mask >> k & 1u) ? score[k] : -score[k];
      }
      log_weights.push_back(lw);
      members.push_back(mask);
    }
    const double lse = stats::log_sum_exp(log_weights);
    for (std::size_t v = 0; v < members.size(); ++v) {
      const double w = std::exp(log_weights[v] - lse);
      for (std::size_t k = 0; k < bins; ++k) {
        means[k] += ((members[v] >> k & 1u) ? 1.0 : -1.0) * w;
      }
    }
  } else {
    for (std::size_t k = 0; k < bins; ++k) {
      const double sigma = std::sqrt(sigma2[k]);
      means[k] = 2.0 * two_point_posterior(shift[k], g.mu, sigma) - 1.0;
    }
  }
  return means;
}

double bayes_from_geometry(const std::vector<long long>& counts,
                           const FamilyGeometry& g) {
  const std::vector<double> means = posterior_sign_means(counts, g);
  long double cross = 0.0L;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    cross += means[k] * g.cross_moments[k];
  }
  return g.theta0 + g.energy + 2.0 * static_cast<double>(cross);
}

}  // namespace

double integrate01(const std::function<double(double)>& g,
                   std::size_t panels) {
  return simpson(g, 0.0, 1.0, panels);
}

HolderDensity::HolderDensity(std::function<double(double)> evaluator,
                             double alpha, std::string description)
    : evaluator_(std::move(evaluator)),
      alpha_(alpha),
      description_(std::move(description)) {
  if (!evaluator_) {
    throw std::invalid_argument("HolderDensity: empty evaluator");
  }
  if (!(alpha_ > 0.25 && alpha_ < 0.5)) {
    throw std::invalid_argument(
        "HolderDensity: roughness exponent must lie in (1/4, 1/2)");
  }
  const double mass = integrate01(evaluator_, 8192);
  if (std::abs(mass - 1.0) > 1e-6) {
    throw std::invalid_argument(
        "HolderDensity: evaluator does not integrate to 1");
  }
  for (std::size_t i = 0; i < 10000; ++i) {
    const double x = (static_cast<double>(i) + 0.5) / 10000.0;
    if (!(evaluator_(x) > 0.0)) {
      throw std::invalid_argument(
          "HolderDensity: evaluator is not strictly positive");
    }
  }
}

HolderDensity uniform_density(double alpha) {
  return HolderDensity([](double) { return 1.0; }, alpha, "uniform on [0,1]");
}

HolderDensity sine_density(double alpha) {
  return HolderDensity(
      [](double x) { return 1.0 + 0.5 * std::sin(2.0 * kPi * x); }, alpha,
      "1 + 0.5 sin(2 pi x)");
}

AdversarialDensity::AdversarialDensity(HolderDensity base,
                                       std::vector<int> signs)
    : base_(std::move(base)), signs_(std::move(signs)) {
  check_even_bins(signs_.size(), "AdversarialDensity");
  std::size_t positive = 0;
  for (int s : signs_) {
    if (s != 1 && s != -1) {
      throw std::invalid_argument("AdversarialDensity: signs must be +1/-1");
    }
    if (s == 1) ++positive;
  }
  if (positive * 2 != signs_.size()) {
    throw std::invalid_argument(
        "AdversarialDensity: signs must be balanced (half positive)");
  }
  for (std::size_t i = 0; i < 100000; ++i) {
    const double x = (static_cast<double>(i) + 0.5) / 100000.0;
    if (!((*this)(x) >= 0.0)) {
      throw std::invalid_argument(
          "AdversarialDensity: perturbed density dips below zero");
    }
  }
}

double AdversarialDensity::operator()(double x) const {
  const std::size_t bins = signs_.size();
  const double scaled = x * static_cast<double>(bins);
  std::size_t k = scaled <= 0.0
                      ? 0
                      : std::min(bins - 1, static_cast<std::size_t>(scaled));
  return base_(x) +
         static_cast<double>(signs_[k]) * bump_value(x, bins, k, base_.alpha());
}

namespace {

/// Panel count keeping the per-bin Simpson error far below 1e-12 even for
/// very wide bins.
std::size_t bin_panels(std::size_t bins) {
  return std::max<std::size_t>(64, 8192 / bins);
}

}  // namespace

double bin_mass(const HolderDensity& f0, std::size_t bins, std::size_t k) {
  if (bins == 0 || k >= bins) {
    throw std::invalid_argument("bin_mass: bin index out of range");
  }
  const double a = static_cast<double>(k) / static_cast<double>(bins);
  const double b = static_cast<double>(k + 1) / static_cast<double>(bins);
  return simpson([&](double x) { return f0(x); }, a, b, bin_panels(bins));
}

double bump_cross_moment(const HolderDensity& f0, std::size_t bins,
                         std::size_t k) {
  if (bins == 0 || k >= bins) {
    throw std::invalid_argument("bump_cross_moment: bin index out of range");
  }
  const double a = static_cast<double>(k) / static_cast<double>(bins);
  const double b = static_cast<double>(k + 1) / static_cast<double>(bins);
  const double alpha = f0.alpha();
  return simpson([&](double x) { return f0(x) * bump_value(x, bins, k, alpha); },
                 a, b, bin_panels(bins));
}

double bump_energy(std::size_t bins, double alpha) {
  check_even_bins(bins, "bump_energy");
  const double b = 1.0 / static_cast<double>(bins);
  const double one_bin = simpson(
      [&](double x) {
        const double v = bump_value(x, bins, 0, alpha);
        return v * v;
      },
      0.0, b, std::max<std::size_t>(256, bin_panels(bins)));
  return static_cast<double>(bins) * one_bin;
}

std::vector<int> adversarial_signs(const HolderDensity& f0,
                                   std::size_t bins) {
  check_even_bins(bins, "adversarial_signs");
  std::vector<double> cross(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    cross[k] = bump_cross_moment(f0, bins, k);
  }
  std::vector<std::size_t> order(bins);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (cross[a] != cross[b]) return cross[a] > cross[b];
    return a < b;
  });
  std::vector<int> signs(bins, -1);
  for (std::size_t r = 0; r < bins / 2; ++r) signs[order[r]] = 1;
  return signs;
}

std::vector<int> sample_balanced_signs(std::size_t bins,
                                       rng::RngStream& stream) {
  check_even_bins(bins, "sample_balanced_signs");
  std::vector<std::size_t> order(bins);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i + 1 < bins; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(uniform_index(
                stream, static_cast<std::uint64_t>(bins - i)));
    std::swap(order[i], order[j]);
  }
  std::vector<int> signs(bins, -1);
  for (std::size_t r = 0; r < bins / 2; ++r) signs[order[r]] = 1;
  return signs;
}

double integral_of_square(const HolderDensity& f) {
  return integrate01([&](double x) { return f(x) * f(x); }, 8192);
}

double integral_of_square(const AdversarialDensity& f) {
  const HolderDensity& base = f.base();
  const std::size_t bins = f.bins();
  long double total = integral_of_square(base) + bump_energy(bins, base.alpha());
  for (std::size_t k = 0; k < bins; ++k) {
    total += 2.0 * static_cast<double>(f.signs()[k]) *
             bump_cross_moment(base, bins, k);
  }
  return static_cast<double>(total);
}

DensitySampler::DensitySampler(const HolderDensity& f) {
  build([&](double x) { return f(x); }, std::size_t{1} << 14);
}

DensitySampler::DensitySampler(const AdversarialDensity& f) {
  build([&](double x) { return f(x); }, f.bins() * 64);
}

void DensitySampler::build(const std::function<double(double)>& f,
                           std::size_t intervals) {
  if (intervals == 0) throw std::invalid_argument("DensitySampler: no knots");
  knots_.resize(intervals + 1);
  cdf_.assign(intervals + 1, 0.0);
  lo_.resize(intervals);
  hi_.resize(intervals);
  for (std::size_t j = 0; j <= intervals; ++j) {
    knots_[j] = static_cast<double>(j) / static_cast<double>(intervals);
  }
  long double total = 0.0L;
  std::vector<double> masses(intervals);
  for (std::size_t j = 0; j < intervals; ++j) {
    const double a = knots_[j];
    const double b = knots_[j + 1];
    const double fl = f(a);
    const double fr = f(b);
    const double fm = f(0.5 * (a + b));
    if (!(fl >= 0.0 && fr >= 0.0 && fm >= 0.0)) {
      throw std::invalid_argument("DensitySampler: negative density value");
    }
    const double mass = (b - a) / 6.0 * (fl + 4.0 * fm + fr);
    const double trapezoid = 0.5 * (b - a) * (fl + fr);
    const double scale = trapezoid > 0.0 ? mass / trapezoid : 0.0;
    lo_[j] = scale * fl;
    hi_[j] = scale * fr;
    masses[j] = mass;
    total += mass;
  }
  if (!(total > 0.0L)) {
    throw std::invalid_argument("DensitySampler: zero total mass");
  }
  long double running = 0.0L;
  for (std::size_t j = 0; j < intervals; ++j) {
    lo_[j] = static_cast<double>(lo_[j] / static_cast<double>(total));
    hi_[j] = static_cast<double>(hi_[j] / static_cast<double>(total));
    running += masses[j] / static_cast<double>(total);
    cdf_[j + 1] = static_cast<double>(running);
  }
  cdf_.back() = 1.0;
}

double DensitySampler::draw(rng::RngStream& stream) const {
  const double u = stream.uniform01();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  std::size_t j = it == cdf_.begin()
                      ? 0
                      : static_cast<std::size_t>(it - cdf_.begin()) - 1;
  j = std::min(j, lo_.size() - 1);
  const double h = knots_[j + 1] - knots_[j];
  const double target = u - cdf_[j];
  const double lo = lo_[j];
  const double slope = (hi_[j] - lo) / h;
  double t;
  if (std::abs(slope) * h <= 1e-12 * std::max(lo, 1e-300)) {
    t = lo > 0.0 ? target / lo : 0.5 * h;
  } else {
    const double disc = std::max(0.0, lo * lo + 2.0 * slope * target);
    t = (std::sqrt(disc) - lo) / slope;
  }
  t = std::clamp(t, 0.0, h);
  return knots_[j] + t;
}

std::vector<double> sample_density(rng::RngStream& stream,
                                   const HolderDensity& f, std::size_t n) {
  const DensitySampler sampler(f);
  std::vector<double> out(n);
  for (auto& x : out) x = sampler.draw(stream);
  return out;
}

std::vector<double> sample_density(rng::RngStream& stream,
                                   const AdversarialDensity& f,
                                   std::size_t n) {
  const DensitySampler sampler(f);
  std::vector<double> out(n);
  for (auto& x : out) x = sampler.draw(stream);
  return out;
}

std::vector<long long> bin_counts(const std::vector<double>& points,
                                  std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("bin_counts: zero bins");
  std::vector<long long> counts(bins, 0);
  for (double x : points) {
    const double scaled = x * static_cast<double>(bins);
    const std::size_t k =
        scaled <= 0.0 ? 0
                      : std::min(bins - 1, static_cast<std::size_t>(scaled));
    ++counts[k];
  }
  return counts;
}

HistogramPair histogram_split(const std::vector<double>& points,
                              std::size_t bins, rng::RngStream& stream) {
  if (bins == 0) throw std::invalid_argument("histogram_split: zero bins");
  const std::size_t n = points.size();
  if (n == 0 || n % 2 != 0) {
    throw std::invalid_argument(
        "histogram_split: point count must be even and positive");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t half = n / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(
                uniform_index(stream, static_cast<std::uint64_t>(n - i)));
    std::swap(order[i], order[j]);
  }
  HistogramPair out;
  out.bins = bins;
  out.n_half = static_cast<long long>(half);
  out.degenerate = bins > n;
  std::vector<double> first(half);
  std::vector<double> second(half);
  for (std::size_t i = 0; i < half; ++i) first[i] = points[order[i]];
  for (std::size_t i = 0; i < half; ++i) second[i] = points[order[half + i]];
  out.counts1 = bin_counts(first, bins);
  out.counts2 = bin_counts(second, bins);
  return out;
}

double theta_hat_freq(const HistogramPair& h, double c_correction) {
  if (h.bins == 0 || h.n_half <= 0) {
    throw std::invalid_argument("theta_hat_freq: empty histogram");
  }
  if (h.counts1.size() != h.bins || h.counts2.size() != h.bins) {
    throw std::invalid_argument("theta_hat_freq: count length mismatch");
  }
  const double m = static_cast<double>(h.bins);
  const double n_half = static_cast<double>(h.n_half);
  long double acc = 0.0L;
  for (std::size_t k = 0; k < h.bins; ++k) {
    const double f1 = m * static_cast<double>(h.counts1[k]) / n_half;
    const double f2 = m * static_cast<double>(h.counts2[k]) / n_half;
    acc += 2.0 * f1 * f2 - 0.5 * f1 * f1 - 0.5 * f2 * f2;
  }
  const double n = 2.0 * n_half;
  return static_cast<double>(acc) / m + c_correction * m / n;
}

double theta_hat_freq_expectation(const std::vector<double>& q,
                                  long long n_half, double c_correction) {
  if (q.empty()) throw std::invalid_argument("expectation: empty bin masses");
  if (n_half <= 0) throw std::invalid_argument("expectation: n_half <= 0");
  long double sum_q2 = 0.0L;
  long double sum_var = 0.0L;
  for (double qk : q) {
    if (!(qk >= 0.0 && qk <= 1.0)) {
      throw std::invalid_argument("expectation: bin mass outside [0,1]");
    }
    sum_q2 += static_cast<long double>(qk) * qk;
    sum_var += static_cast<long double>(qk) * (1.0 - qk);
  }
  const double m = static_cast<double>(q.size());
  const double nh = static_cast<double>(n_half);
  return m * static_cast<double>(sum_q2) -
         m / nh * static_cast<double>(sum_var) +
         c_correction * m / (2.0 * nh);
}

double calibrated_correction(const std::vector<double>& q) {
  if (q.empty()) throw std::invalid_argument("calibration: empty bin masses");
  long double sum_q2 = 0.0L;
  for (double qk : q) {
    if (!(qk >= 0.0 && qk <= 1.0)) {
      throw std::invalid_argument("calibration: bin mass outside [0,1]");
    }
    sum_q2 += static_cast<long double>(qk) * qk;
  }
  return 2.0 * (1.0 - static_cast<double>(sum_q2));
}

double two_point_posterior(double x, double mu, double sigma) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("two_point_posterior: sigma must be positive");
  }
  if (!(mu >= 0.0)) {
    throw std::invalid_argument("two_point_posterior: mu must be nonnegative");
  }
  const double t = 2.0 * x * mu / (sigma * sigma);
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double two_point_posterior_linearized(double x, double mu, double sigma) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument(
        "two_point_posterior_linearized: sigma must be positive");
  }
  return 0.5 + x * mu / (2.0 * sigma * sigma);
}

double theta_bayes_plugin(const std::vector<long long>& counts,
                          const HolderDensity& f0) {
  check_even_bins(counts.size(), "theta_bayes_plugin");
  return bayes_from_geometry(counts, family_geometry(f0, counts.size()));
}

std::size_t default_freq_bins(double n) {
  if (!(n >= 2.0)) {
    throw std::invalid_argument("default_freq_bins: n must be at least 2");
  }
  const double m = std::round(std::cbrt(n));
  return static_cast<std::size_t>(std::max(8.0, m));
}

std::size_t default_family_bins(double n, double alpha) {
  if (!(n > 1.0)) {
    throw std::invalid_argument("default_family_bins: n must exceed 1");
  }
  if (!(alpha > 0.25 && alpha < 0.5)) {
    throw std::invalid_argument("default_family_bins: alpha outside (1/4,1/2)");
  }
  const double v = std::pow(n * std::log(n), 1.0 / (1.0 + 2.0 * alpha));
  const double even = 2.0 * std::round(0.5 * v);
  return static_cast<std::size_t>(std::max(4.0, even));
}

RateReport rate_experiment(const HolderDensity& f0,
                           const std::vector<double>& n_grid, int reps,
                           const rng::RngStream& stream, bool adversarial,
                           int workers) {
  if (n_grid.empty()) {
    throw std::invalid_argument("rate_experiment: empty sample-size grid");
  }
  if (reps < 1) {
    throw std::invalid_argument("rate_experiment: reps must be positive");
  }
  RateReport report;
  report.has_bayes = adversarial;
  report.low_reps_warning = reps < 100;

  std::vector<double> freq_log_n;
  std::vector<double> freq_log_rmse;
  std::vector<double> bayes_log_n;
  std::vector<double> bayes_log_rmse;

  for (std::size_t j = 0; j < n_grid.size(); ++j) {
    const double n_real = n_grid[j];
    if (!(n_real >= 4.0)) {
      throw std::invalid_argument("rate_experiment: sample sizes must be >= 4");
    }
    const auto n = static_cast<std::size_t>(std::llround(n_real));
    if (n % 2 != 0) {
      throw std::invalid_argument("rate_experiment: sample sizes must be even");
    }
    const std::size_t m_bins = default_freq_bins(static_cast<double>(n));

    double freq_truth;
    double bayes_truth = 0.0;
    std::unique_ptr<DensitySampler> sampler;
    std::unique_ptr<AdversarialDensity> member;
    FamilyGeometry geometry;
    std::size_t k_bins = 0;
    if (adversarial) {
      k_bins = default_family_bins(static_cast<double>(n), f0.alpha());
      member = std::make_unique<AdversarialDensity>(
          f0, adversarial_signs(f0, k_bins));
      sampler = std::make_unique<DensitySampler>(*member);
      geometry = family_geometry(f0, k_bins);
      freq_truth = integral_of_square(*member);
      bayes_truth = freq_truth;
    } else {
      sampler = std::make_unique<DensitySampler>(f0);
      freq_truth = integral_of_square(f0);
    }

    std::vector<double> freq_estimates(static_cast<std::size_t>(reps));
    std::vector<double> bayes_estimates(
        adversarial ? static_cast<std::size_t>(reps) : 0);
    parallel_for(reps, workers, [&](int r) {
      const rng::RngStream rep_stream = stream.substream(
          (static_cast<std::uint64_t>(j) << 32) |
          static_cast<std::uint64_t>(static_cast<std::uint32_t>(r)));
      rng::RngStream data_stream = rep_stream.substream(0);
      rng::RngStream split_stream = rep_stream.substream(1);
      std::vector<double> points(n);
      for (auto& x : points) x = sampler->draw(data_stream);
      const HistogramPair h = histogram_split(points, m_bins, split_stream);
      freq_estimates[static_cast<std::size_t>(r)] = theta_hat_freq(h);
      if (adversarial) {
        bayes_estimates[static_cast<std::size_t>(r)] =
            bayes_from_geometry(bin_counts(points, k_bins), geometry);
      }
    });

    const auto summarize = [&](const std::string& name,
                               const std::vector<double>& estimates,
                               double truth) {
      stats::RunningMoments moments;
      for (double e : estimates) moments.add(e);
      RatePoint pt;
      pt.estimator = name;
      pt.n = static_cast<double>(n);
      pt.reps = reps;
      pt.mean = moments.mean();
      pt.bias = pt.mean - truth;
      pt.variance = moments.variance_population();
      pt.rmse = std::sqrt(pt.bias * pt.bias + pt.variance);
      pt.mc_se = std::sqrt(pt.variance / static_cast<double>(reps));
      pt.truth = truth;
      report.points.push_back(pt);
      return pt.rmse;
    };
    const double freq_rmse =
        summarize("two_split_freq", freq_estimates, freq_truth);
    if (freq_rmse > 0.0) {
      freq_log_n.push_back(std::log(static_cast<double>(n)));
      freq_log_rmse.push_back(std::log(freq_rmse));
    }
    if (adversarial) {
      const double bayes_rmse =
          summarize("posterior_plugin", bayes_estimates, bayes_truth);
      if (bayes_rmse > 0.0) {
        bayes_log_n.push_back(std::log(static_cast<double>(n)));
        bayes_log_rmse.push_back(std::log(bayes_rmse));
      }
    }
  }

  if (freq_log_n.size() >= 2) {
    const stats::OlsFit fit = stats::ols(freq_log_n, freq_log_rmse);
    report.freq_slope = fit.slope;
    report.freq_r2 = fit.r2;
  }
  if (adversarial && bayes_log_n.size() >= 2) {
    const stats::OlsFit fit = stats::ols(bayes_log_n, bayes_log_rmse);
    report.bayes_slope = fit.slope;
    report.bayes_r2 = fit.r2;
  }
  return report;
}

}  // namespace lab
