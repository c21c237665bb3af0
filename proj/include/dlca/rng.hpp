#pragma once

#include <cstdint>
#include <random>

namespace dlca {

/// Seeded random source for one trial or one agent.
///
/// Substreams are derived by hashing (seed, stream ids) through SplitMix64, so
/// the stream an AP sees depends only on the config seed, the trial index and
/// the AP id, never on scheduling order between threads.
class RngStream {
public:
  using engine_type = std::mt19937_64;

  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }

  /// Independent child stream, e.g. `trial_rng.substream(ap_id)`.
  RngStream substream(std::uint64_t id) const {
    return RngStream(mix(seed_ ^ mix(id + 0x632be59bd9b4e019ULL)));
  }

  engine_type& engine() { return engine_; }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  double uniform01() { return uniform(0.0, 1.0); }

  /// Uniform integer in [0, n-1]; n must be positive.
  std::int64_t below(std::int64_t n) {
    return std::uniform_int_distribution<std::int64_t>(0, n - 1)(engine_);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

private:
  std::uint64_t seed_;
  engine_type engine_;
};

} // namespace dlca
