#pragma once

/** \file center.hpp
 *  Hetero-center construction (per-identity, per-modality mean embeddings)
 *  and the two center triplet losses built on them:
 *
 *   - batch_hard_hetero_center_loss: hinge per identity and modality anchor
 *     on raw-mean centers under Euclidean distance; the positive is the
 *     opposite-modality center of the same identity, the negative the
 *     closest center of any other identity.
 *   - batch_all_hetero_center_loss: smooth log(1 + sum exp) over cosine
 *     similarities of centers of L2-normalized members, summed over
 *     identities with no normalization factor.
 *
 *  Gradients flow through the mean (and, for the batch-all variant, the
 *  per-member normalization) back to the member embeddings.
 */

#include <cmath>
#include <stdexcept>
#include <vector>

#include "vireid/batch.hpp"
#include "vireid/numkit.hpp"
#include "vireid/triplet.hpp"

namespace vireid {

/// 2P centers in batch identity order. `visible[i]` / `infrared[i]` average
/// the K members of block i, after per-member L2 normalization when
/// `normalized_inputs` is set.
struct CenterSet {
  std::vector<Embedding> visible;
  std::vector<Embedding> infrared;
  bool normalized_inputs = false;
};

inline CenterSet compute_centers(const MiniBatch& batch, bool normalize_first) {
  validate_minibatch(batch);
  const int P = batch.spec.persons;
  const int K = batch.spec.images_per_modality;
  const std::size_t dim = batch.samples.front().embedding.size();
  CenterSet centers;
  centers.normalized_inputs = normalize_first;
  centers.visible.assign(P, Embedding(dim, 0.0));
  centers.infrared.assign(P, Embedding(dim, 0.0));
  for (int i = 0; i < P; ++i) {
    for (int m = 0; m < 2; ++m) {
      Embedding& c = m == 0 ? centers.visible[i] : centers.infrared[i];
      for (int k = 0; k < K; ++k) {
        const Embedding& member = batch.samples[i * 2 * K + m * K + k].embedding;
        if (normalize_first) {
          const Embedding unit = l2_normalize(member);
          for (std::size_t d = 0; d < dim; ++d) c[d] += unit[d];
        } else {
          for (std::size_t d = 0; d < dim; ++d) c[d] += member[d];
        }
      }
      for (double& v : c) v /= K;
    }
  }
  return centers;
}

namespace detail {

/// Negative candidates for identity i: both modality centers of every other
/// identity, scanned in canonical order (identity ascending, visible first).
struct CenterRef {
  int identity_block;
  int modality;  // 0 visible, 1 infrared
};

inline const Embedding& center_at(const CenterSet& centers, const CenterRef& ref) {
  return ref.modality == 0 ? centers.visible[ref.identity_block] : centers.infrared[ref.identity_block];
}

/// Scatters a gradient at one raw-mean center onto its K member slots.
inline void scatter_mean_grad(const MiniBatch& batch, std::vector<Embedding>& grads,
                              int identity_block, int modality, const Embedding& center_grad) {
  const int K = batch.spec.images_per_modality;
  for (int k = 0; k < K; ++k) {
    Embedding& g = grads[identity_block * 2 * K + modality * K + k];
    for (std::size_t d = 0; d < g.size(); ++d) g[d] += center_grad[d] / K;
  }
}

/// Scatters a gradient at a normalized-member center through the
/// normalization Jacobian (I - u u^T)/|x| of each member.
inline void scatter_normalized_mean_grad(const MiniBatch& batch, std::vector<Embedding>& grads,
                                         int identity_block, int modality, const Embedding& center_grad) {
  const int K = batch.spec.images_per_modality;
  for (int k = 0; k < K; ++k) {
    const std::size_t slot = identity_block * 2 * K + modality * K + k;
    const Embedding& x = batch.samples[slot].embedding;
    const double r = norm(x);
    double along = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) along += center_grad[d] * x[d] / r;
    Embedding& g = grads[slot];
    for (std::size_t d = 0; d < x.size(); ++d) {
      g[d] += (center_grad[d] - along * x[d] / r) / (K * r);
    }
  }
}

}  // namespace detail

/// Hinge per (identity, modality) anchor center over raw-mean centers:
/// positive is the same identity's opposite-modality center, negative the
/// minimum-distance center among all other identities' centers. Ties in the
/// minimum go to the lowest (identity, modality) canonical order.
inline LossResult batch_hard_hetero_center_loss(const MiniBatch& batch, const TripletParams& params) {
  const CenterSet centers = compute_centers(batch, false);
  const int P = batch.spec.persons;
  const std::size_t dim = centers.visible.front().size();
  LossResult result;
  result.embedding_grads = detail::zero_grads(batch);
  std::vector<Embedding> center_grads_v(P, Embedding(dim, 0.0));
  std::vector<Embedding> center_grads_t(P, Embedding(dim, 0.0));

  for (int i = 0; i < P; ++i) {
    for (int anchor_mod = 0; anchor_mod < 2; ++anchor_mod) {
      const Embedding& anchor = anchor_mod == 0 ? centers.visible[i] : centers.infrared[i];
      const Embedding& positive = anchor_mod == 0 ? centers.infrared[i] : centers.visible[i];
      const double pos_dist = euclidean_distance(anchor, positive);

      bool found = false;
      detail::CenterRef best{0, 0};
      double best_dist = 0.0;
      for (int j = 0; j < P; ++j) {
        if (j == i) continue;
        for (int m = 0; m < 2; ++m) {
          const detail::CenterRef ref{j, m};
          const double d = euclidean_distance(anchor, detail::center_at(centers, ref));
          if (!found || d < best_dist) {
            found = true;
            best = ref;
            best_dist = d;
          }
        }
      }

      const double hinge = params.margin + pos_dist - best_dist;
      if (hinge <= 0.0) continue;
      result.value += hinge;

      auto& anchor_grad = anchor_mod == 0 ? center_grads_v[i] : center_grads_t[i];
      auto& positive_grad = anchor_mod == 0 ? center_grads_t[i] : center_grads_v[i];
      auto& negative_grad = best.modality == 0 ? center_grads_v[best.identity_block] : center_grads_t[best.identity_block];
      const Embedding& negative = detail::center_at(centers, best);
      for (std::size_t d = 0; d < dim; ++d) {
        if (pos_dist > 0.0) {
          const double u = (anchor[d] - positive[d]) / pos_dist;
          anchor_grad[d] += u;
          positive_grad[d] -= u;
        }
        if (best_dist > 0.0) {
          const double u = (anchor[d] - negative[d]) / best_dist;
          anchor_grad[d] -= u;
          negative_grad[d] += u;
        }
      }
    }
  }

  for (int i = 0; i < P; ++i) {
    detail::scatter_mean_grad(batch, result.embedding_grads, i, 0, center_grads_v[i]);
    detail::scatter_mean_grad(batch, result.embedding_grads, i, 1, center_grads_t[i]);
  }
  return result;
}

/// Per identity and anchor modality, log(1 + sum over the 2(P-1) other-
/// identity centers of e^{gamma (S(anchor, neg) - S(anchor, pos) + m)}) on
/// centers of L2-normalized members; summed over identities as printed.
inline LossResult batch_all_hetero_center_loss(const MiniBatch& batch, const TripletParams& params) {
  const CenterSet centers = compute_centers(batch, true);
  const int P = batch.spec.persons;
  const std::size_t dim = centers.visible.front().size();
  LossResult result;
  result.embedding_grads = detail::zero_grads(batch);
  std::vector<Embedding> center_grads_v(P, Embedding(dim, 0.0));
  std::vector<Embedding> center_grads_t(P, Embedding(dim, 0.0));

  std::vector<double> center_norms_v(P), center_norms_t(P);
  for (int i = 0; i < P; ++i) {
    center_norms_v[i] = norm(centers.visible[i]);
    center_norms_t[i] = norm(centers.infrared[i]);
    if (center_norms_v[i] == 0.0 || center_norms_t[i] == 0.0) {
      throw std::invalid_argument("batch_all_hetero_center_loss: zero-norm center");
    }
  }

  auto center_of = [&](int block, int m) -> const Embedding& {
    return m == 0 ? centers.visible[block] : centers.infrared[block];
  };
  auto norm_of = [&](int block, int m) { return m == 0 ? center_norms_v[block] : center_norms_t[block]; };
  auto grad_of = [&](int block, int m) -> Embedding& {
    return m == 0 ? center_grads_v[block] : center_grads_t[block];
  };
  auto add_center_cosine_grad = [&](int bi, int mi, int bj, int mj, double sim, double g) {
    const Embedding& a = center_of(bi, mi);
    const Embedding& b = center_of(bj, mj);
    const double na = norm_of(bi, mi), nb = norm_of(bj, mj);
    Embedding& ga = grad_of(bi, mi);
    Embedding& gb = grad_of(bj, mj);
    const double cross = 1.0 / (na * nb);
    for (std::size_t d = 0; d < dim; ++d) {
      ga[d] += g * (b[d] * cross - sim * a[d] / (na * na));
      gb[d] += g * (a[d] * cross - sim * b[d] / (nb * nb));
    }
  };

  std::vector<detail::CenterRef> negatives;
  std::vector<double> z;
  for (int i = 0; i < P; ++i) {
    for (int anchor_mod = 0; anchor_mod < 2; ++anchor_mod) {
      const int pos_mod = 1 - anchor_mod;
      const Embedding& anchor = center_of(i, anchor_mod);
      const double pos_sim = cosine_similarity(anchor, center_of(i, pos_mod));

      negatives.clear();
      z.clear();
      std::vector<double> neg_sims;
      for (int j = 0; j < P; ++j) {
        if (j == i) continue;
        for (int m = 0; m < 2; ++m) {
          negatives.push_back({j, m});
          const double s = cosine_similarity(anchor, center_of(j, m));
          neg_sims.push_back(s);
          z.push_back(params.scale * (s - pos_sim + params.margin));
        }
      }
      result.value += stable_log1p_sumexp(z);

      // Weights w_q = e^{z_q} / (1 + sum e^{z}), shifted for stability.
      double shift = 0.0;
      for (double v : z) shift = std::max(shift, v);
      double denom = std::exp(-shift);
      std::vector<double> w(z.size());
      for (std::size_t q = 0; q < z.size(); ++q) {
        w[q] = std::exp(z[q] - shift);
        denom += w[q];
      }
      double w_total = 0.0;
      for (std::size_t q = 0; q < z.size(); ++q) {
        w[q] /= denom;
        w_total += w[q];
      }

      for (std::size_t q = 0; q < negatives.size(); ++q) {
        add_center_cosine_grad(i, anchor_mod, negatives[q].identity_block, negatives[q].modality,
                               neg_sims[q], params.scale * w[q]);
      }
      add_center_cosine_grad(i, anchor_mod, i, pos_mod, pos_sim, -params.scale * w_total);
    }
  }

  for (int i = 0; i < P; ++i) {
    detail::scatter_normalized_mean_grad(batch, result.embedding_grads, i, 0, center_grads_v[i]);
    detail::scatter_normalized_mean_grad(batch, result.embedding_grads, i, 1, center_grads_t[i]);
  }
  return result;
}

}  // namespace vireid
