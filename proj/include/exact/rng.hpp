#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace exact {

// Counter-based SplitMix64 generator. The i-th output is a pure function of
// (seed, i): out_i = mix(seed + i * golden_gamma), with mix the SplitMix64
// finalizer. Substreams are derived by hashing the stream id into the seed,
// so any (seed, stream, index) triple yields the same value on every
// platform. This is the generator all randomized components (phantoms,
// initialization, shuffling, bootstrap resampling, dropout) draw from.
class Rng {
 public:
  static constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static Rng substream(std::uint64_t seed, std::uint64_t stream) {
    return Rng(mix(seed ^ mix(stream + kGoldenGamma)));
  }

  std::uint64_t next_u64() { return mix(seed_ + (++counter_) * kGoldenGamma); }

  // Uniform in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_range(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Uniform in {0, ..., n-1} by modulo reduction (bias < 2^-53 for n below
  // 2^11; acceptable and, more importantly, trivially replicable).
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  bool next_bernoulli(double p) { return next_unit() < p; }

  // Box-Muller; the second deviate of each pair is cached.
  double next_gauss() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_unit();
    double u2 = next_unit();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace exact
