#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace volcano {

// splitmix64 finalizer; used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// FNV-1a, stable across platforms.
std::uint64_t hash_string(std::string_view text);

// Seeded generator with platform-independent distributions. The standard
// <random> distributions are implementation-defined, which would break
// byte-identical replay across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform index in [0, n). n must be positive.
  std::size_t index(std::size_t n);

  // Uniform integer in [lo, hi].
  std::int64_t integer(std::int64_t lo, std::int64_t hi);

  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Seed for a child generator; advances this generator.
  std::uint64_t fork() { return mix_seed(engine_(), 0x9e3779b97f4a7c15ULL); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace volcano
