#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace lab::rng {

/// Probability vector over K bins: entries nonnegative, summing to 1
/// within 1e-12. Validated at construction.
struct DiscreteDensity {
  std::vector<double> bin_probabilities;
  explicit DiscreteDensity(std::vector<double> probs);
};

/// Deterministic random stream identified by (master_seed, stream_id).
///
/// Draws come from the Philox4x64-10 counter-based block cipher, so the
/// sequence for any (seed, id) pair is reproducible bit-for-bit on every
/// platform and independent of how other streams are consumed. substream()
/// derives a non-overlapping child stream for a named sub-purpose; parent
/// and child can be consumed in any interleaving.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id);

  RngStream substream(std::uint64_t tag) const;

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64();

  /// Uniform on the open interval (0,1); never returns an endpoint.
  double uniform01();

  /// N(mean, sd^2) sample by inverse transform; sd = 0 returns mean exactly
  /// without consuming a draw.
  double normal(double mean, double sd);

  /// 1 with probability p, else 0.
  int bernoulli(double p);

  /// Gamma(shape, 1) via the Marsaglia-Tsang squeeze, with the power boost
  /// for shape < 1.
  double gamma(double shape);

  /// Beta(a, b) via the two-gamma ratio.
  double beta(double a, double b);

  /// K bin counts summing to n; bin k is marginally Binomial(n, d_k).
  std::vector<long long> multinomial(long long n, const DiscreteDensity& d);

 private:
  RngStream() = default;
  void refill();

  std::uint64_t master_seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::array<std::uint64_t, 2> key_{};
  std::array<std::uint64_t, 4> counter_{};
  std::array<std::uint64_t, 4> block_{};
  int block_pos_ = 4;
};

}  // namespace lab::rng
