#include "pmcphd/random.hpp"

namespace pmcphd {

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(mix_seed(seed ^ mix_seed(stream + 0x632be59bd9b4e019ULL))), engine_(seed_) {}

RandomStream RandomStream::split(std::uint64_t id) const { return RandomStream(seed_, id + 1); }

std::uint64_t RandomStream::poisson(double mean) {
  if (mean <= 0.0) return 0;
  std::poisson_distribution<std::uint64_t> dist(mean);
  return dist(engine_);
}

std::size_t RandomStream::index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

}  // namespace pmcphd
