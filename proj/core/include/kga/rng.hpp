// Reproducible randomness. SeededRng wraps std::mt19937_64, whose raw output
// sequence is fixed by the C++ standard, and derives doubles from it with
// explicit arithmetic (53-bit uniforms, Box-Muller normals) so the scalar
// stream is identical on every platform. Distribution classes from <random>
// are deliberately not used; their output is implementation-defined.
#pragma once

#include <cstdint>
#include <random>

#include "kga/matrix.hpp"

namespace kga {

class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double next_uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; one value per call, the mate is cached.
  double next_normal();

  // Uniform integer in [0, bound) by rejection, bias-free.
  std::uint64_t next_below(std::uint64_t bound);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Matrix of i.i.d. N(0, stddev^2) draws. Throws std::domain_error unless
// stddev > 0. Identical seed gives a bit-identical matrix.
DenseMatrix seeded_normal(SeededRng& rng, std::size_t rows, std::size_t cols, double stddev);

}  // namespace kga
