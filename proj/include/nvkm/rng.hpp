#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace nvkm {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Deterministic random source. Normal draws use explicit Box-Muller (no
// cached state) so that the draw sequence is a pure function of the seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)), seed_(seed) {}

  // Derive an independent stream. Forks of forks are fine; streams are
  // determined by the (seed, salt...) path alone.
  Rng fork(std::uint64_t salt) const { return Rng(splitmix64(seed_ ^ splitmix64(salt + 0x51ED2701ULL))); }

  std::uint64_t seed() const { return seed_; }

  double uniform() {  // [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    // Box-Muller, one value per two uniforms; u clamped away from 0.
    double u = uniform();
    if (u <= 0.0) u = 0x1.0p-53;
    const double v = uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586476925287 * v);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    // Modulo bias is negligible for n << 2^64 and irrelevant here; keep it simple.
    return engine_() % n;
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace nvkm
