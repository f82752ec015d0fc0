#pragma once

#include <cstdint>
#include <random>

namespace rmps {

// Seeded stream of uniform doubles. The mapping from engine output to doubles
// is fixed here (53 random mantissa bits) so streams reproduce exactly across
// standard library implementations.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1).
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

// Per-rollout substream seed: master xor index.
constexpr std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index) { return master ^ index; }

// splitmix64 finalizer, used to derive independent master seeds from labels.
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace rmps
