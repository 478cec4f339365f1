#pragma once

/** \file oracle.hpp
 *  Brute-force reference implementations used by tests and the self-test:
 *  exhaustive triplet enumeration, direct per-formula loss evaluation,
 *  central finite differences, and exhaustive average precision.
 *
 *  Everything here is written in a deliberately naive style with its own
 *  inline arithmetic and no code shared with the production kernels, so
 *  agreement between the two is independent evidence of correctness.
 *  Oracles value clarity over speed and are single-threaded.
 */

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "vireid/batch.hpp"
#include "vireid/triplet.hpp"

namespace vireid::oracle {

enum class Metric { euclidean, cosine_distance };

struct TripletRecord {
  std::size_t anchor;
  std::size_t positive;
  std::size_t negative;
  double hinge;  // [m + d_ap - d_an]_+
};

struct TripletEnumeration {
  std::vector<TripletRecord> triplets;
};

namespace impl {

inline double distance(const Sample& a, const Sample& b, Metric metric) {
  if (metric == Metric::euclidean) {
    double sum = 0.0;
    for (std::size_t d = 0; d < a.embedding.size(); ++d) {
      sum = sum + (a.embedding[d] - b.embedding[d]) * (a.embedding[d] - b.embedding[d]);
    }
    return std::sqrt(sum);
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t d = 0; d < a.embedding.size(); ++d) {
    dot = dot + a.embedding[d] * b.embedding[d];
    na = na + a.embedding[d] * a.embedding[d];
    nb = nb + b.embedding[d] * b.embedding[d];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("oracle: zero-norm embedding");
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace impl

/// Every (anchor, positive, negative) with the positive sharing the
/// anchor's identity (and not the anchor itself) and the negative from a
/// different identity. Count = 2PK * (2K-1) * 2(P-1)K.
inline TripletEnumeration enumerate_triplets(const MiniBatch& batch, const TripletParams& params,
                                             Metric metric) {
  TripletEnumeration out;
  for (std::size_t a = 0; a < batch.samples.size(); ++a) {
    for (std::size_t p = 0; p < batch.samples.size(); ++p) {
      if (p == a) continue;
      if (batch.samples[p].identity != batch.samples[a].identity) continue;
      for (std::size_t n = 0; n < batch.samples.size(); ++n) {
        if (batch.samples[n].identity == batch.samples[a].identity) continue;
        const double d_ap = impl::distance(batch.samples[a], batch.samples[p], metric);
        const double d_an = impl::distance(batch.samples[a], batch.samples[n], metric);
        double hinge = params.margin + d_ap - d_an;
        if (hinge < 0.0) hinge = 0.0;
        out.triplets.push_back(TripletRecord{a, p, n, hinge});
      }
    }
  }
  return out;
}

/// Batch-hard value from the enumeration: per-anchor maximum hinge, summed.
inline double batch_hard_value(const MiniBatch& batch, const TripletParams& params) {
  const TripletEnumeration all = enumerate_triplets(batch, params, Metric::euclidean);
  double total = 0.0;
  for (std::size_t a = 0; a < batch.samples.size(); ++a) {
    double worst = 0.0;
    for (const TripletRecord& t : all.triplets) {
      if (t.anchor == a && t.hinge > worst) worst = t.hinge;
    }
    total = total + worst;
  }
  return total;
}

/// Direct evaluation of the cross-modality batch-hard formula: the global
/// batch-hard term plus, per anchor, the hardest opposite-modality triplet.
inline double cross_modality_batch_hard_value(const MiniBatch& batch, const TripletParams& params) {
  double total = batch_hard_value(batch, params);
  for (std::size_t a = 0; a < batch.samples.size(); ++a) {
    double worst_pos = -1.0;
    double best_neg = -1.0;
    for (std::size_t j = 0; j < batch.samples.size(); ++j) {
      if (j == a) continue;
      if (batch.samples[j].modality == batch.samples[a].modality) continue;
      const double d = impl::distance(batch.samples[a], batch.samples[j], Metric::euclidean);
      if (batch.samples[j].identity == batch.samples[a].identity) {
        if (worst_pos < 0.0 || d > worst_pos) worst_pos = d;
      } else {
        if (best_neg < 0.0 || d < best_neg) best_neg = d;
      }
    }
    const double hinge = params.margin + worst_pos - best_neg;
    if (hinge > 0.0) total = total + hinge;
  }
  return total;
}

/// Batch-all value: mean over anchors of the summed enumeration hinges.
inline double batch_all_value(const MiniBatch& batch, const TripletParams& params) {
  const TripletEnumeration all = enumerate_triplets(batch, params, Metric::euclidean);
  double total = 0.0;
  for (const TripletRecord& t : all.triplets) total = total + t.hinge;
  return total / static_cast<double>(batch.samples.size());
}

/// Unified batch-all value in the unfactored per-pair form: per anchor
/// log(1 + sum over (p, n) pairs of e^{gamma (s_an - s_ap + m)}). One
/// exponential per pair; `exp_evals_per_anchor`, when given, records them.
inline double unified_batch_all_value(const MiniBatch& batch, const TripletParams& params,
                                      std::vector<std::size_t>* exp_evals_per_anchor = nullptr) {
  if (exp_evals_per_anchor) exp_evals_per_anchor->assign(batch.samples.size(), 0);
  double total = 0.0;
  for (std::size_t a = 0; a < batch.samples.size(); ++a) {
    double sum = 0.0;
    for (std::size_t p = 0; p < batch.samples.size(); ++p) {
      if (p == a) continue;
      if (batch.samples[p].identity != batch.samples[a].identity) continue;
      for (std::size_t n = 0; n < batch.samples.size(); ++n) {
        if (batch.samples[n].identity == batch.samples[a].identity) continue;
        const double s_ap = 1.0 - impl::distance(batch.samples[a], batch.samples[p], Metric::cosine_distance);
        const double s_an = 1.0 - impl::distance(batch.samples[a], batch.samples[n], Metric::cosine_distance);
        sum = sum + std::exp(params.scale * (s_an - s_ap + params.margin));
        if (exp_evals_per_anchor) (*exp_evals_per_anchor)[a] += 1;
      }
    }
    total = total + std::log(1.0 + sum);
  }
  return total / static_cast<double>(batch.samples.size());
}

/// Batch-hard hetero-center value straight from the printed formula:
/// raw-mean centers, Euclidean distance, two hinge terms per identity.
inline double batch_hard_hetero_center_value(const MiniBatch& batch, const TripletParams& params) {
  const int P = batch.spec.persons;
  const int K = batch.spec.images_per_modality;
  const std::size_t dim = batch.samples.front().embedding.size();
  std::vector<std::vector<double>> centers(2 * P, std::vector<double>(dim, 0.0));
  for (int i = 0; i < P; ++i) {
    for (int m = 0; m < 2; ++m) {
      for (int k = 0; k < K; ++k) {
        const Embedding& member = batch.samples[i * 2 * K + m * K + k].embedding;
        for (std::size_t d = 0; d < dim; ++d) centers[2 * i + m][d] += member[d] / K;
      }
    }
  }
  auto dist = [&](const std::vector<double>& x, const std::vector<double>& y) {
    double sum = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) sum += (x[d] - y[d]) * (x[d] - y[d]);
    return std::sqrt(sum);
  };
  double total = 0.0;
  for (int i = 0; i < P; ++i) {
    for (int anchor_mod = 0; anchor_mod < 2; ++anchor_mod) {
      const auto& anchor = centers[2 * i + anchor_mod];
      const auto& positive = centers[2 * i + (1 - anchor_mod)];
      double best = -1.0;
      for (int j = 0; j < P; ++j) {
        if (j == i) continue;
        for (int m = 0; m < 2; ++m) {
          const double d = dist(anchor, centers[2 * j + m]);
          if (best < 0.0 || d < best) best = d;
        }
      }
      const double hinge = params.margin + dist(anchor, positive) - best;
      if (hinge > 0.0) total = total + hinge;
    }
  }
  return total;
}

/// Batch-all hetero-center value: centers of L2-normalized members, cosine
/// similarity, one log term per (identity, anchor modality), summed.
inline double batch_all_hetero_center_value(const MiniBatch& batch, const TripletParams& params) {
  const int P = batch.spec.persons;
  const int K = batch.spec.images_per_modality;
  const std::size_t dim = batch.samples.front().embedding.size();
  std::vector<std::vector<double>> centers(2 * P, std::vector<double>(dim, 0.0));
  for (int i = 0; i < P; ++i) {
    for (int m = 0; m < 2; ++m) {
      for (int k = 0; k < K; ++k) {
        const Embedding& member = batch.samples[i * 2 * K + m * K + k].embedding;
        double r = 0.0;
        for (double v : member) r += v * v;
        r = std::sqrt(r);
        if (r == 0.0) throw std::invalid_argument("oracle: zero-norm member");
        for (std::size_t d = 0; d < dim; ++d) centers[2 * i + m][d] += member[d] / r / K;
      }
    }
  }
  auto cosine = [&](const std::vector<double>& x, const std::vector<double>& y) {
    double dot = 0.0, nx = 0.0, ny = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
      dot += x[d] * y[d];
      nx += x[d] * x[d];
      ny += y[d] * y[d];
    }
    if (nx == 0.0 || ny == 0.0) throw std::invalid_argument("oracle: zero-norm center");
    return dot / (std::sqrt(nx) * std::sqrt(ny));
  };
  double total = 0.0;
  for (int i = 0; i < P; ++i) {
    for (int anchor_mod = 0; anchor_mod < 2; ++anchor_mod) {
      const auto& anchor = centers[2 * i + anchor_mod];
      const double pos = cosine(anchor, centers[2 * i + (1 - anchor_mod)]);
      double sum = 0.0;
      for (int j = 0; j < P; ++j) {
        if (j == i) continue;
        for (int m = 0; m < 2; ++m) {
          sum = sum + std::exp(params.scale * (cosine(anchor, centers[2 * j + m]) - pos + params.margin));
        }
      }
      total = total + std::log(1.0 + sum);
    }
  }
  return total;
}

/// Central finite differences (f(x + h e_d) - f(x - h e_d)) / (2h).
inline std::vector<double> finite_diff_gradient(const std::function<double(const std::vector<double>&)>& f,
                                                const std::vector<double>& at, double step) {
  if (step <= 0.0) throw std::invalid_argument("finite_diff_gradient: step must be positive");
  std::vector<double> grad(at.size(), 0.0);
  for (std::size_t d = 0; d < at.size(); ++d) {
    std::vector<double> hi = at;
    std::vector<double> lo = at;
    hi[d] = hi[d] + step;
    lo[d] = lo[d] - step;
    grad[d] = (f(hi) - f(lo)) / (2.0 * step);
  }
  return grad;
}

/// Mean over relevant ranks k of (relevant count within the first k) / k.
inline double exhaustive_ap(const std::vector<bool>& relevance) {
  std::size_t relevant = 0;
  double sum = 0.0;
  std::size_t seen = 0;
  for (std::size_t k = 0; k < relevance.size(); ++k) {
    if (relevance[k]) {
      relevant = relevant + 1;
      seen = seen + 1;
      sum = sum + static_cast<double>(seen) / static_cast<double>(k + 1);
    }
  }
  if (relevant == 0) throw std::invalid_argument("exhaustive_ap: no relevant item");
  return sum / static_cast<double>(relevant);
}

}  // namespace vireid::oracle
