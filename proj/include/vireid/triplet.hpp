#pragma once

/** \file triplet.hpp
 *  Sample-level triplet losses over 2PK mini-batches, each returning the
 *  loss value together with its analytic gradient per input embedding:
 *
 *   - batch_hard_loss: hinge on the furthest positive / closest negative
 *     per anchor, summed over anchors (Euclidean distance).
 *   - cross_modality_batch_hard_loss: batch hard plus, per anchor, the
 *     hardest triplet restricted to the opposite modality.
 *   - batch_all_loss: hinge over every (anchor, positive, negative)
 *     triplet, averaged by 1/(2PK).
 *   - unified_batch_all_loss: smooth log(1 + sum exp) form over cosine
 *     similarities, evaluated in the factored form that needs only
 *     (2K-1) + 2(P-1)K exponentials per anchor instead of one per triplet.
 *
 *  Mining ties are broken toward the lowest canonical batch index, and the
 *  hinge subgradient at exactly zero is taken as zero, so values, gradients
 *  and diagnostics are deterministic.
 */

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "vireid/batch.hpp"
#include "vireid/numkit.hpp"

namespace vireid {

struct TripletParams {
  double margin = 0.3;  // m
  double scale = 12.0;  // gamma; used only by the unified loss
};

/// Loss value plus the gradient with respect to every input embedding
/// (and classifier weight columns, for losses that have them).
struct LossResult {
  double value = 0.0;
  std::vector<Embedding> embedding_grads;
  std::vector<Embedding> weight_grads;  // empty unless the loss owns weights
};

/// Fractions of anchors whose mined hard positive / hard negative share the
/// anchor's modality; `both` is the failure case where hard mining never
/// touches the other modality.
struct MiningDiagnostic {
  double frac_hard_pos_intra = 0.0;
  double frac_hard_neg_intra = 0.0;
  double frac_both_intra = 0.0;
};

/// Per-anchor instrumentation for unified_batch_all_loss.
struct UnifiedLossStats {
  std::vector<std::size_t> exp_evals_per_anchor;
  std::vector<double> per_anchor_terms;  // log(1 + A_a * B_a)
};

namespace detail {

inline std::vector<Embedding> zero_grads(const MiniBatch& batch) {
  std::vector<Embedding> grads(batch.samples.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    grads[i].assign(batch.samples[i].embedding.size(), 0.0);
  }
  return grads;
}

inline std::vector<std::vector<double>> pairwise_euclidean(const MiniBatch& batch) {
  const std::size_t n = batch.samples.size();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      d[i][j] = d[j][i] = euclidean_distance(batch.samples[i].embedding, batch.samples[j].embedding);
    }
  }
  return d;
}

/// Adds g * d(D(x_i, x_j))/d(x_i) and the mirrored term to the gradient
/// accumulators. The subgradient at D == 0 is zero.
inline void add_euclidean_grad(const MiniBatch& batch, std::vector<Embedding>& grads,
                               std::size_t i, std::size_t j, double dist, double g) {
  if (dist <= 0.0) return;
  const Embedding& xi = batch.samples[i].embedding;
  const Embedding& xj = batch.samples[j].embedding;
  for (std::size_t d = 0; d < xi.size(); ++d) {
    const double u = (xi[d] - xj[d]) / dist;
    grads[i][d] += g * u;
    grads[j][d] -= g * u;
  }
}

struct HardPair {
  std::size_t positive = 0;
  std::size_t negative = 0;
  double positive_dist = 0.0;
  double negative_dist = 0.0;
  bool found_positive = false;
  bool found_negative = false;
};

/// Furthest positive and closest negative for one anchor under an optional
/// modality restriction; ties go to the lowest batch index.
inline HardPair mine_hard_pair(const MiniBatch& batch, const std::vector<std::vector<double>>& dist,
                               std::size_t anchor, bool restrict_cross_modality) {
  HardPair out;
  const Sample& a = batch.samples[anchor];
  for (std::size_t j = 0; j < batch.samples.size(); ++j) {
    if (j == anchor) continue;
    const Sample& s = batch.samples[j];
    if (restrict_cross_modality && s.modality == a.modality) continue;
    if (s.identity == a.identity) {
      if (!out.found_positive || dist[anchor][j] > out.positive_dist) {
        out.found_positive = true;
        out.positive = j;
        out.positive_dist = dist[anchor][j];
      }
    } else {
      if (!out.found_negative || dist[anchor][j] < out.negative_dist) {
        out.found_negative = true;
        out.negative = j;
        out.negative_dist = dist[anchor][j];
      }
    }
  }
  return out;
}

}  // namespace detail

/// Sum over all 2PK anchors of [m + furthest-positive - closest-negative]_+
/// with Euclidean distances; no mean normalization.
inline LossResult batch_hard_loss(const MiniBatch& batch, const TripletParams& params) {
  validate_minibatch(batch);
  const auto dist = detail::pairwise_euclidean(batch);
  LossResult result;
  result.embedding_grads = detail::zero_grads(batch);
  for (std::size_t a = 0; a < batch.samples.size(); ++a) {
    const auto pair = detail::mine_hard_pair(batch, dist, a, false);
    const double hinge = params.margin + pair.positive_dist - pair.negative_dist;
    if (hinge > 0.0) {
      result.value += hinge;
      detail::add_euclidean_grad(batch, result.embedding_grads, a, pair.positive, pair.positive_dist, 1.0);
      detail::add_euclidean_grad(batch, result.embedding_grads, a, pair.negative, pair.negative_dist, -1.0);
    }
  }
  return result;
}

/// Batch hard plus, for every anchor, the hardest triplet whose positive
/// and negative both come from the opposite modality. Both terms are plain
/// sums over anchors.
inline LossResult cross_modality_batch_hard_loss(const MiniBatch& batch, const TripletParams& params) {
  validate_minibatch(batch);
  const auto dist = detail::pairwise_euclidean(batch);
  LossResult result;
  result.embedding_grads = detail::zero_grads(batch);
  for (std::size_t a = 0; a < batch.samples.size(); ++a) {
    for (const bool cross_only : {false, true}) {
      const auto pair = detail::mine_hard_pair(batch, dist, a, cross_only);
      const double hinge = params.margin + pair.positive_dist - pair.negative_dist;
      if (hinge > 0.0) {
        result.value += hinge;
        detail::add_euclidean_grad(batch, result.embedding_grads, a, pair.positive, pair.positive_dist, 1.0);
        detail::add_euclidean_grad(batch, result.embedding_grads, a, pair.negative, pair.negative_dist, -1.0);
      }
    }
  }
  return result;
}

/// Mean over anchors (factor 1/(2PK)) of the hinge summed over every
/// (positive, negative) pair of the anchor.
inline LossResult batch_all_loss(const MiniBatch& batch, const TripletParams& params) {
  validate_minibatch(batch);
  const auto dist = detail::pairwise_euclidean(batch);
  const std::size_t n = batch.samples.size();
  const double inv = 1.0 / static_cast<double>(n);
  LossResult result;
  result.embedding_grads = detail::zero_grads(batch);
  for (std::size_t a = 0; a < n; ++a) {
    const Sample& anchor = batch.samples[a];
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || batch.samples[p].identity != anchor.identity) continue;
      for (std::size_t q = 0; q < n; ++q) {
        if (batch.samples[q].identity == anchor.identity) continue;
        const double hinge = params.margin + dist[a][p] - dist[a][q];
        if (hinge > 0.0) {
          result.value += inv * hinge;
          detail::add_euclidean_grad(batch, result.embedding_grads, a, p, dist[a][p], inv);
          detail::add_euclidean_grad(batch, result.embedding_grads, a, q, dist[a][q], -inv);
        }
      }
    }
  }
  return result;
}

namespace detail {

inline std::vector<std::vector<double>> pairwise_cosine(const MiniBatch& batch) {
  const std::size_t n = batch.samples.size();
  std::vector<std::vector<double>> s(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      s[i][j] = s[j][i] = cosine_similarity(batch.samples[i].embedding, batch.samples[j].embedding);
    }
  }
  return s;
}

/// Accumulates g * d(S(x_i, x_j))/d(x_i) and the mirrored term.
inline void add_cosine_grad(const MiniBatch& batch, const std::vector<double>& norms,
                            std::vector<Embedding>& grads, std::size_t i, std::size_t j,
                            double sim, double g) {
  const Embedding& xi = batch.samples[i].embedding;
  const Embedding& xj = batch.samples[j].embedding;
  const double cross = 1.0 / (norms[i] * norms[j]);
  const double self_i = sim / (norms[i] * norms[i]);
  const double self_j = sim / (norms[j] * norms[j]);
  for (std::size_t d = 0; d < xi.size(); ++d) {
    grads[i][d] += g * (xj[d] * cross - xi[d] * self_i);
    grads[j][d] += g * (xi[d] * cross - xj[d] * self_j);
  }
}

}  // namespace detail

/// One anchor's smooth term log(1 + sum_p e^{-g s_p} * sum_n e^{g (s_n + m)}),
/// evaluated through max-shifted log-sum-exp so arguments up to |g| ~ 1e4 do
/// not overflow. `exp_count`, when given, receives the number of per-term
/// exponentials (one per positive plus one per negative).
inline double unified_log_term(std::span<const double> positive_sims,
                               std::span<const double> negative_sims,
                               const TripletParams& params,
                               std::size_t* exp_count = nullptr) {
  if (positive_sims.empty() || negative_sims.empty()) {
    throw std::invalid_argument("unified_log_term: empty positive or negative set");
  }
  std::vector<double> pos_terms(positive_sims.size());
  for (std::size_t i = 0; i < positive_sims.size(); ++i) pos_terms[i] = -params.scale * positive_sims[i];
  std::vector<double> neg_terms(negative_sims.size());
  for (std::size_t i = 0; i < negative_sims.size(); ++i) {
    neg_terms[i] = params.scale * (negative_sims[i] + params.margin);
  }
  if (exp_count) *exp_count += pos_terms.size() + neg_terms.size();
  return softplus(logsumexp(pos_terms) + logsumexp(neg_terms));
}

/// Batch-all loss in the factored exponential form of the cosine-similarity
/// objective: per anchor log(1 + [sum_p e^{-g s_ap}] [sum_n e^{g (s_an + m)}]),
/// averaged by 1/(2PK). Gradients are the exact analytic gradient of this
/// expression through cosine similarity.
inline LossResult unified_batch_all_loss(const MiniBatch& batch, const TripletParams& params,
                                         UnifiedLossStats* stats = nullptr) {
  validate_minibatch(batch);
  const std::size_t n = batch.samples.size();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = norm(batch.samples[i].embedding);
    if (norms[i] == 0.0) throw std::invalid_argument("unified_batch_all_loss: zero-norm embedding");
  }
  const auto sims = detail::pairwise_cosine(batch);
  const double inv = 1.0 / static_cast<double>(n);
  LossResult result;
  result.embedding_grads = detail::zero_grads(batch);
  if (stats) {
    stats->exp_evals_per_anchor.assign(n, 0);
    stats->per_anchor_terms.assign(n, 0.0);
  }

  std::vector<std::size_t> pos_idx, neg_idx;
  std::vector<double> pos_exp, neg_exp;
  for (std::size_t a = 0; a < n; ++a) {
    const Sample& anchor = batch.samples[a];
    pos_idx.clear();
    neg_idx.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      (batch.samples[j].identity == anchor.identity ? pos_idx : neg_idx).push_back(j);
    }

    // Factored evaluation: shift each sum by its max exponent, keep the
    // shifted exponentials for the gradient weights.
    double max_pos = -params.scale * sims[a][pos_idx[0]];
    for (std::size_t p : pos_idx) max_pos = std::max(max_pos, -params.scale * sims[a][p]);
    double max_neg = params.scale * (sims[a][neg_idx[0]] + params.margin);
    for (std::size_t q : neg_idx) max_neg = std::max(max_neg, params.scale * (sims[a][q] + params.margin));

    std::size_t exp_evals = 0;
    pos_exp.resize(pos_idx.size());
    double pos_sum = 0.0;
    for (std::size_t i = 0; i < pos_idx.size(); ++i) {
      pos_exp[i] = std::exp(-params.scale * sims[a][pos_idx[i]] - max_pos);
      ++exp_evals;
      pos_sum += pos_exp[i];
    }
    neg_exp.resize(neg_idx.size());
    double neg_sum = 0.0;
    for (std::size_t i = 0; i < neg_idx.size(); ++i) {
      neg_exp[i] = std::exp(params.scale * (sims[a][neg_idx[i]] + params.margin) - max_neg);
      ++exp_evals;
      neg_sum += neg_exp[i];
    }

    const double log_pos = max_pos + std::log(pos_sum);
    const double log_neg = max_neg + std::log(neg_sum);
    const double c = log_pos + log_neg;
    const double term = softplus(c);
    result.value += inv * term;
    if (stats) {
      stats->exp_evals_per_anchor[a] = exp_evals;
      stats->per_anchor_terms[a] = term;
    }

    // d term / d s_ap = -g * w_p * sigma(c); d term / d s_an = g * u_n * sigma(c),
    // with w, u the softmax weights inside each factor.
    const double sig = logistic(c);
    for (std::size_t i = 0; i < pos_idx.size(); ++i) {
      const double g = inv * -params.scale * (pos_exp[i] / pos_sum) * sig;
      detail::add_cosine_grad(batch, norms, result.embedding_grads, a, pos_idx[i], sims[a][pos_idx[i]], g);
    }
    for (std::size_t i = 0; i < neg_idx.size(); ++i) {
      const double g = inv * params.scale * (neg_exp[i] / neg_sum) * sig;
      detail::add_cosine_grad(batch, norms, result.embedding_grads, a, neg_idx[i], sims[a][neg_idx[i]], g);
    }
  }
  return result;
}

/// Batch-hard mining outcome per anchor, reported as modality fractions.
/// Measures how often hard mining stays inside the anchor's own modality.
inline MiningDiagnostic mining_diagnostic(const MiniBatch& batch) {
  validate_minibatch(batch);
  const auto dist = detail::pairwise_euclidean(batch);
  std::size_t pos_intra = 0, neg_intra = 0, both_intra = 0;
  for (std::size_t a = 0; a < batch.samples.size(); ++a) {
    const auto pair = detail::mine_hard_pair(batch, dist, a, false);
    const bool p_intra = batch.samples[pair.positive].modality == batch.samples[a].modality;
    const bool n_intra = batch.samples[pair.negative].modality == batch.samples[a].modality;
    pos_intra += p_intra;
    neg_intra += n_intra;
    both_intra += p_intra && n_intra;
  }
  const double n = static_cast<double>(batch.samples.size());
  return MiningDiagnostic{pos_intra / n, neg_intra / n, both_intra / n};
}

}  // namespace vireid
