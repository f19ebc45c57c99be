#include "kga/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace kga {

double SeededRng::next_normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller on (0,1] uniforms; 1-u keeps the log argument away from zero.
  const double u1 = 1.0 - next_uniform();
  const double u2 = next_uniform();
  const double mag = std::sqrt(-2.0 * std::log(u1));
  const double ang = 2.0 * std::numbers::pi * u2;
  spare_ = mag * std::sin(ang);
  has_spare_ = true;
  return mag * std::cos(ang);
}

std::uint64_t SeededRng::next_below(std::uint64_t bound) {
  if (bound == 0) throw std::domain_error("SeededRng::next_below: zero bound");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t v = engine_();
  while (v >= limit) v = engine_();
  return v % bound;
}

DenseMatrix seeded_normal(SeededRng& rng, std::size_t rows, std::size_t cols, double stddev) {
  if (!(stddev > 0.0)) {
    throw std::domain_error("seeded_normal: stddev must be positive, got " +
                            std::to_string(stddev));
  }
  DenseMatrix out(rows, cols);
  for (double& v : out.data()) v = rng.next_normal() * stddev;
  return out;
}

}  // namespace kga
