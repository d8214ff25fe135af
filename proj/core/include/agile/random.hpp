#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace agile {

// Seeded random source. The engine is mt19937_64, whose output sequence is fixed
// by the standard; the distributions below are implemented here rather than
// taken from <random> so draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Independent stream for a named purpose ("data", "reservoir", ...).
  static Rng derive(std::uint64_t master_seed, std::string_view stream);

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  // Uniform integer in [lo, hi], both inclusive.
  std::uint64_t between(std::uint64_t lo, std::uint64_t hi);

  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  double spare_normal_{0.0};
  bool has_spare_{false};
};

}  // namespace agile
