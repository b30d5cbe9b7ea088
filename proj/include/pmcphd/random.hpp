#pragma once

#include <cstdint>
#include <random>

namespace pmcphd {

/// Seeded random stream. Streams derived with split() are statistically
/// independent of the parent and of each other, and depend only on the parent
/// seed and the split id, so an experiment replays bit-identically.
class RandomStream {
 public:
  using Engine = std::mt19937_64;

  explicit RandomStream(std::uint64_t seed, std::uint64_t stream = 0);

  RandomStream split(std::uint64_t id) const;

  double normal() { return normal_(engine_); }
  /// Uniform on [0, 1).
  double uniform() { return std::generate_canonical<double, 64>(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t poisson(double mean);
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  Engine& engine() { return engine_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  Engine engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// SplitMix64 finalizer, used for seed derivation.
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace pmcphd
