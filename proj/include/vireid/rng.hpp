#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace vireid::rng {

using Engine = std::mt19937_64;

/// Uniform draw in [0, 1) with 53-bit resolution. Hand-rolled instead of
/// std::uniform_real_distribution so sequences are identical across
/// standard library implementations.
inline double uniform_unit(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

inline double uniform(Engine& eng, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(eng);
}

/// Unbiased integer draw in [0, n) by rejection.
inline std::uint64_t below(Engine& eng, std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("rng::below: n must be positive");
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % n;
  std::uint64_t draw;
  do {
    draw = eng();
  } while (draw >= limit);
  return draw % n;
}

/// Standard normal via Box-Muller, one value per call (no cached spare).
inline double normal(Engine& eng) {
  double u1;
  do {
    u1 = uniform_unit(eng);
  } while (u1 <= 0.0);
  const double u2 = uniform_unit(eng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Uniform direction on the unit sphere in `dim` dimensions.
inline std::vector<double> unit_vector(Engine& eng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = normal(eng);
      norm += x * x;
    }
  } while (norm < 1e-24);
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

/// First k entries of a random permutation of {0, ..., n-1} (partial
/// Fisher-Yates); selection without replacement.
inline std::vector<std::size_t> choose_without_replacement(Engine& eng, std::size_t n, std::size_t k) {
  if (k > n) throw std::invalid_argument("rng::choose_without_replacement: k > n");
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(below(eng, n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace vireid::rng
