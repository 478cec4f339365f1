#pragma once

/** \file classify.hpp
 *  Classification losses over a bias-free linear classifier whose columns
 *  act as class centers: plain softmax cross-entropy on inner-product
 *  logits, and the cosine variant with an additive margin on the target
 *  class. Both return gradients for the input embedding and every column.
 */

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "vireid/numkit.hpp"
#include "vireid/triplet.hpp"

namespace vireid {

/// C class centers of dimension D, stored column-wise.
struct ClassifierWeights {
  std::vector<Embedding> columns;

  int classes() const { return static_cast<int>(columns.size()); }
};

struct ClassifyParams {
  double margin = 0.3;  // m, subtracted from the target cosine logit
  double scale = 64.0;  // gamma
};

namespace detail {

inline void require_label(int label, const ClassifierWeights& weights) {
  if (weights.classes() < 2) throw std::invalid_argument("ClassifierWeights: need at least 2 classes");
  if (label < 0 || label >= weights.classes()) {
    throw std::invalid_argument("classify: label " + std::to_string(label) + " out of range [0, " +
                                std::to_string(weights.classes()) + ")");
  }
}

/// Softmax probabilities of `logits` after max-shift; gamma = 64 pushes raw
/// logits to +-64 so the shift is required, not cosmetic.
inline std::vector<double> stable_softmax(const std::vector<double>& logits) {
  double m = logits.front();
  for (double v : logits) m = std::max(m, v);
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    p[j] = std::exp(logits[j] - m);
    sum += p[j];
  }
  for (double& v : p) v /= sum;
  return p;
}

inline double nll_of(const std::vector<double>& logits, int label) {
  double m = logits.front();
  for (double v : logits) m = std::max(m, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - m);
  return std::log(sum) - (logits[label] - m);
}

}  // namespace detail

/// -log softmax(W^T x) at the true label. embedding_grads holds the single
/// gradient for x; weight_grads one gradient per column.
inline LossResult softmax_loss(const Embedding& x, int label, const ClassifierWeights& weights) {
  detail::require_label(label, weights);
  const int classes = weights.classes();
  std::vector<double> logits(classes);
  for (int j = 0; j < classes; ++j) logits[j] = dot(weights.columns[j], x);

  LossResult result;
  result.value = detail::nll_of(logits, label);
  const auto probs = detail::stable_softmax(logits);

  result.embedding_grads.assign(1, Embedding(x.size(), 0.0));
  result.weight_grads.assign(classes, Embedding(x.size(), 0.0));
  for (int j = 0; j < classes; ++j) {
    const double g = probs[j] - (j == label ? 1.0 : 0.0);
    for (std::size_t d = 0; d < x.size(); ++d) {
      result.embedding_grads[0][d] += g * weights.columns[j][d];
      result.weight_grads[j][d] = g * x[d];
    }
  }
  return result;
}

/// Cosine softmax with margin: logits are gamma * cos(W_j, x), with the
/// target logit shifted to gamma * (cos(W_y, x) - m). Invariant to positive
/// rescaling of x or any column.
inline LossResult cosine_softmax_loss(const Embedding& x, int label, const ClassifierWeights& weights,
                                      const ClassifyParams& params) {
  detail::require_label(label, weights);
  const int classes = weights.classes();
  const double x_norm = norm(x);
  if (x_norm == 0.0) throw std::invalid_argument("cosine_softmax_loss: zero-norm input");
  std::vector<double> col_norms(classes);
  std::vector<double> sims(classes);
  for (int j = 0; j < classes; ++j) {
    col_norms[j] = norm(weights.columns[j]);
    if (col_norms[j] == 0.0) {
      throw std::invalid_argument("cosine_softmax_loss: zero-norm column " + std::to_string(j));
    }
    sims[j] = dot(weights.columns[j], x) / (col_norms[j] * x_norm);
  }

  std::vector<double> logits(classes);
  for (int j = 0; j < classes; ++j) {
    logits[j] = params.scale * (sims[j] - (j == label ? params.margin : 0.0));
  }

  LossResult result;
  result.value = detail::nll_of(logits, label);
  const auto probs = detail::stable_softmax(logits);

  result.embedding_grads.assign(1, Embedding(x.size(), 0.0));
  result.weight_grads.assign(classes, Embedding(x.size(), 0.0));
  for (int j = 0; j < classes; ++j) {
    const double g = params.scale * (probs[j] - (j == label ? 1.0 : 0.0));
    const Embedding& w = weights.columns[j];
    const double cross = 1.0 / (col_norms[j] * x_norm);
    const double self_x = sims[j] / (x_norm * x_norm);
    const double self_w = sims[j] / (col_norms[j] * col_norms[j]);
    for (std::size_t d = 0; d < x.size(); ++d) {
      result.embedding_grads[0][d] += g * (w[d] * cross - x[d] * self_x);
      result.weight_grads[j][d] = g * (x[d] * cross - w[d] * self_w);
    }
  }
  return result;
}

}  // namespace vireid
