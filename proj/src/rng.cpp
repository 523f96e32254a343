#include "lab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lab/stats.hpp"

namespace lab::rng {

namespace {

constexpr std::uint64_t kPhiloxM0 = 0xD2E7470EE14C6C93ull;
constexpr std::uint64_t kPhiloxM1 = 0xCA5A826395121157ull;
constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73Bull;

inline std::uint64_t mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi) {
  const unsigned __int128 prod =
      static_cast<unsigned __int128>(a) * static_cast<unsigned __int128>(b);
  hi = static_cast<std::uint64_t>(prod >> 64);
  return static_cast<std::uint64_t>(prod);
}

std::array<std::uint64_t, 4> philox4x64_10(std::array<std::uint64_t, 4> c,
                                           std::array<std::uint64_t, 2> k) {
  for (int round = 0; round < 10; ++round) {
    std::uint64_t hi0, hi1;
    const std::uint64_t lo0 = mulhilo(kPhiloxM0, c[0], hi0);
    const std::uint64_t lo1 = mulhilo(kPhiloxM1, c[2], hi1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kWeyl0;
    k[1] += kWeyl1;
  }
  return c;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

DiscreteDensity::DiscreteDensity(std::vector<double> probs)
    : bin_probabilities(std::move(probs)) {
  if (bin_probabilities.empty()) {
    throw std::invalid_argument("DiscreteDensity: no bins");
  }
  double sum = 0.0;
  for (double p : bin_probabilities) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw std::invalid_argument("DiscreteDensity: entries must be finite and >= 0");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("DiscreteDensity: probabilities must sum to 1");
  }
}

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
    : master_seed_(master_seed), stream_id_(stream_id) {
  key_ = {master_seed, stream_id};
  counter_ = {0, 0, 0, 0};
}

RngStream RngStream::substream(std::uint64_t tag) const {
  RngStream child;
  child.master_seed_ = master_seed_;
  child.stream_id_ = stream_id_;
  child.key_ = key_;
  child.counter_[0] = 0;
  child.counter_[1] = 0;
  child.counter_[2] = splitmix64(counter_[2] ^ (tag + 1));
  child.counter_[3] = splitmix64(counter_[3] + kWeyl1 * (tag + 1));
  return child;
}

void RngStream::refill() {
  block_ = philox4x64_10(counter_, key_);
  ++counter_[0];
  block_pos_ = 0;
}

std::uint64_t RngStream::next_u64() {
  if (block_pos_ == 4) refill();
  return block_[block_pos_++];
}

double RngStream::uniform01() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal(double mean, double sd) {
  if (!std::isfinite(mean) || !std::isfinite(sd) || sd < 0.0) {
    throw std::invalid_argument("RngStream::normal: mean and sd must be finite, sd >= 0");
  }
  if (sd == 0.0) return mean;
  return mean + sd * stats::normal_quantile(uniform01());
}

int RngStream::bernoulli(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("RngStream::bernoulli: p must lie in [0,1]");
  }
  return uniform01() < p ? 1 : 0;
}

double RngStream::gamma(double shape) {
  if (!(shape > 0.0) || !std::isfinite(shape)) {
    throw std::invalid_argument("RngStream::gamma: shape must be finite and > 0");
  }
  if (shape < 1.0) {
    const double g = gamma(shape + 1.0);
    return g * std::pow(uniform01(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = stats::normal_quantile(uniform01());
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double RngStream::beta(double a, double b) {
  if (!(a > 0.0 && b > 0.0)) {
    throw std::invalid_argument("RngStream::beta: shapes must be > 0");
  }
  const double x = gamma(a);
  const double y = gamma(b);
  return x / (x + y);
}

std::vector<long long> RngStream::multinomial(long long n, const DiscreteDensity& d) {
  if (n < 0) throw std::invalid_argument("RngStream::multinomial: n must be >= 0");
  const std::size_t k = d.bin_probabilities.size();
  std::vector<double> cdf(k);
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    acc += d.bin_probabilities[i];
    cdf[i] = acc;
  }
  cdf[k - 1] = 1.0;
  std::vector<long long> counts(k, 0);
  for (long long i = 0; i < n; ++i) {
    const double u = uniform01();
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    ++counts[static_cast<std::size_t>(it - cdf.begin())];
  }
  return counts;
}

}  // namespace lab::rng
