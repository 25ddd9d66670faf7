#pragma once

#include <cmath>
#include <cstdint>

namespace gmf {

// splitmix64 generator. Self-contained so parameter draws are reproducible
// across standard libraries and platforms.
struct Rng {
  std::uint64_t state;

  explicit Rng(std::uint64_t seed = 0x9e3779b97f4a7c15ull) : state(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  // Box-Muller.
  double normal(double mu = 0.0, double sigma = 1.0) {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mu + sigma * r * std::cos(6.283185307179586 * u2);
  }

  Rng fork() { return Rng(next_u64()); }
};

}  // namespace gmf
