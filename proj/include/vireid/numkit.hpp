#pragma once

/** \file numkit.hpp
 *  Elementary numerical kernels shared by every loss: distances,
 *  similarities, normalization, and stable exponential reductions.
 *
 *  All arithmetic is double precision. Zero-norm inputs to cosine or
 *  normalization kernels are a hard error, never mapped to zero.
 */

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vireid {

/// A feature vector. Length must agree across all embeddings in one context.
using Embedding = std::vector<double>;

namespace detail {

inline void require_same_dim(std::span<const double> x, std::span<const double> y, const char* who) {
  if (x.size() != y.size()) {
    throw std::invalid_argument(std::string(who) + ": dimension mismatch (" +
                                std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  }
}

}  // namespace detail

inline double dot(std::span<const double> x, std::span<const double> y) {
  detail::require_same_dim(x, y, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline double squared_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

inline double norm(std::span<const double> x) { return std::sqrt(squared_norm(x)); }

/// Euclidean distance sqrt(sum (x_d - y_d)^2). Symmetric, zero iff x == y.
inline double euclidean_distance(std::span<const double> x, std::span<const double> y) {
  detail::require_same_dim(x, y, "euclidean_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// Cosine similarity (x.y)/(|x||y|) in [-1, 1]; invariant to positive
/// rescaling of either argument. Zero-norm input is an error.
inline double cosine_similarity(std::span<const double> x, std::span<const double> y) {
  detail::require_same_dim(x, y, "cosine_similarity");
  double d = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    d += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  if (nx == 0.0 || ny == 0.0) {
    throw std::invalid_argument("cosine_similarity: zero-norm input");
  }
  return d / (std::sqrt(nx) * std::sqrt(ny));
}

/// x / |x|; unit Euclidean norm, direction preserved. Zero norm is an error.
inline Embedding l2_normalize(std::span<const double> x) {
  const double n = norm(x);
  if (n == 0.0) throw std::invalid_argument("l2_normalize: zero-norm input");
  Embedding out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / n;
  return out;
}

/// log(1 + sum_i exp(t_i)), shifted by the max term so inputs up to +-1e4
/// evaluate without overflow. Empty input yields 0.
inline double stable_log1p_sumexp(std::span<const double> terms) {
  double m = 0.0;  // the implicit exp(0) = 1 term
  for (double t : terms) {
    if (!std::isfinite(t)) throw std::invalid_argument("stable_log1p_sumexp: non-finite term");
    m = std::max(m, t);
  }
  double s = std::exp(-m);
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

/// log(sum_i exp(t_i)) with max shift. Input must be non-empty.
inline double logsumexp(std::span<const double> terms) {
  if (terms.empty()) throw std::invalid_argument("logsumexp: empty input");
  const double m = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

/// log(1 + exp(c)) without overflow in either direction.
inline double softplus(double c) {
  if (c > 0.0) return c + std::log1p(std::exp(-c));
  return std::log1p(std::exp(c));
}

/// 1 / (1 + exp(-c)) without overflow in either direction.
inline double logistic(double c) {
  if (c >= 0.0) return 1.0 / (1.0 + std::exp(-c));
  const double e = std::exp(c);
  return e / (1.0 + e);
}

}  // namespace vireid
