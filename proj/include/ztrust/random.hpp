#pragma once

// Seeded randomness. The generator is std::mt19937_64, whose output sequence
// is fixed by the standard; variates are derived here rather than through
// <random> distributions, whose algorithms are implementation-defined.

#include <cstdint>
#include <random>
#include <span>

namespace ztrust {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  // Independent stream keyed by (seed, a, b). Used to give every stage and
  // purpose its own draws so that paired runs share random numbers.
  static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return Rng(splitmix64(seed ^ splitmix64(a * 0x100000001B3ull + splitmix64(b))));
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Index drawn from a probability vector. Mass below `u` is skipped, so
  // zero-probability entries are never returned.
  std::size_t categorical(std::span<const double> probs) {
    double u = uniform();
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] <= 0.0) continue;
      last = i;
      acc += probs[i];
      if (u < acc) return i;
    }
    return last;
  }

  std::uint64_t next() { return engine_(); }

private:
  std::mt19937_64 engine_;
};

}  // namespace ztrust
