#pragma once

/** \file batch.hpp
 *  Identity/modality labeling and the 2PK sampling strategy: each
 *  mini-batch holds P identities, each contributing K visible and K
 *  infrared samples in a fixed canonical layout.
 */

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "vireid/numkit.hpp"
#include "vireid/rng.hpp"

namespace vireid {

enum class Modality { visible, infrared };

inline const char* to_string(Modality m) {
  return m == Modality::visible ? "visible" : "infrared";
}

struct Sample {
  Embedding embedding;
  int identity = 0;      // non-negative person label
  Modality modality = Modality::visible;
  int sample_index = 0;  // unique within (identity, modality)
};

struct BatchSpec {
  int persons = 2;              // P; at least 2 so negatives exist
  int images_per_modality = 1;  // K per identity per modality

  int size() const { return 2 * persons * images_per_modality; }
};

/// 2PK samples in canonical order: per identity contiguous, the K visible
/// samples first, then the K infrared ones. All loss kernels and oracles
/// iterate in this order so reductions are deterministic.
struct MiniBatch {
  std::vector<Sample> samples;
  BatchSpec spec;
};

inline void validate_batch_spec(const BatchSpec& spec) {
  if (spec.persons < 2) throw std::invalid_argument("BatchSpec: persons must be >= 2");
  if (spec.images_per_modality < 1) {
    throw std::invalid_argument("BatchSpec: images_per_modality must be >= 1");
  }
}

/// Checks every MiniBatch invariant: size 2PK, canonical per-identity
/// layout (visible block then infrared block), distinct identities,
/// uniform finite embeddings.
inline void validate_minibatch(const MiniBatch& batch) {
  validate_batch_spec(batch.spec);
  const int P = batch.spec.persons;
  const int K = batch.spec.images_per_modality;
  if (static_cast<int>(batch.samples.size()) != 2 * P * K) {
    throw std::invalid_argument("MiniBatch: expected " + std::to_string(2 * P * K) +
                                " samples, got " + std::to_string(batch.samples.size()));
  }
  const std::size_t dim = batch.samples.front().embedding.size();
  if (dim == 0) throw std::invalid_argument("MiniBatch: zero-dimensional embeddings");
  std::vector<int> seen_ids;
  for (int p = 0; p < P; ++p) {
    const int base = p * 2 * K;
    const int id = batch.samples[base].identity;
    for (int seen : seen_ids) {
      if (seen == id) throw std::invalid_argument("MiniBatch: identity " + std::to_string(id) + " appears in two blocks");
    }
    seen_ids.push_back(id);
    for (int j = 0; j < 2 * K; ++j) {
      const Sample& s = batch.samples[base + j];
      if (s.identity != id) {
        throw std::invalid_argument("MiniBatch: identity block " + std::to_string(p) + " is not contiguous");
      }
      const Modality want = j < K ? Modality::visible : Modality::infrared;
      if (s.modality != want) {
        throw std::invalid_argument("MiniBatch: block " + std::to_string(p) +
                                    " breaks the visible-then-infrared layout at offset " + std::to_string(j));
      }
      if (s.embedding.size() != dim) {
        throw std::invalid_argument("MiniBatch: embedding dimension mismatch");
      }
      for (double v : s.embedding) {
        if (!std::isfinite(v)) throw std::invalid_argument("MiniBatch: non-finite embedding entry");
      }
    }
  }
}

/// Draws a 2PK mini-batch: P identities chosen without replacement among
/// those with at least K samples per modality, then K visible and K
/// infrared samples per identity, also without replacement. Fully
/// determined by the state of `rng`.
inline MiniBatch sample_2pk(const std::vector<Sample>& dataset, const BatchSpec& spec, rng::Engine& rng) {
  validate_batch_spec(spec);
  const int K = spec.images_per_modality;

  // identity -> positions split by modality; std::map keeps identity order
  // deterministic regardless of dataset order.
  std::map<int, std::array<std::vector<std::size_t>, 2>> by_identity;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Sample& s = dataset[i];
    by_identity[s.identity][s.modality == Modality::visible ? 0 : 1].push_back(i);
  }

  std::vector<int> eligible;
  for (const auto& [id, groups] : by_identity) {
    if (static_cast<int>(groups[0].size()) >= K && static_cast<int>(groups[1].size()) >= K) {
      eligible.push_back(id);
    }
  }
  if (static_cast<int>(eligible.size()) < spec.persons) {
    for (const auto& [id, groups] : by_identity) {
      for (int m = 0; m < 2; ++m) {
        if (static_cast<int>(groups[m].size()) < K) {
          throw std::invalid_argument(
              "sample_2pk: identity " + std::to_string(id) + " has " + std::to_string(groups[m].size()) +
              " " + to_string(m == 0 ? Modality::visible : Modality::infrared) + " samples, need " +
              std::to_string(K));
        }
      }
    }
    throw std::invalid_argument("sample_2pk: dataset has " + std::to_string(eligible.size()) +
                                " identities, need " + std::to_string(spec.persons));
  }

  MiniBatch batch;
  batch.spec = spec;
  batch.samples.reserve(spec.size());
  const auto id_picks = rng::choose_without_replacement(rng, eligible.size(), spec.persons);
  for (std::size_t pick : id_picks) {
    const int id = eligible[pick];
    const auto& groups = by_identity[id];
    for (int m = 0; m < 2; ++m) {
      const auto within = rng::choose_without_replacement(rng, groups[m].size(), K);
      for (std::size_t w : within) batch.samples.push_back(dataset[groups[m][w]]);
    }
  }
  validate_minibatch(batch);
  return batch;
}

/// Synthesizes a valid mini-batch with uniform [-1, 1) entries; identities
/// are 0..P-1. Used by self-tests and property tests.
inline MiniBatch random_minibatch(const BatchSpec& spec, int dim, rng::Engine& rng) {
  validate_batch_spec(spec);
  MiniBatch batch;
  batch.spec = spec;
  batch.samples.reserve(spec.size());
  for (int p = 0; p < spec.persons; ++p) {
    for (int m = 0; m < 2; ++m) {
      for (int k = 0; k < spec.images_per_modality; ++k) {
        Sample s;
        s.identity = p;
        s.modality = m == 0 ? Modality::visible : Modality::infrared;
        s.sample_index = k;
        s.embedding.resize(dim);
        for (auto& v : s.embedding) v = rng::uniform(rng, -1.0, 1.0);
        batch.samples.push_back(std::move(s));
      }
    }
  }
  return batch;
}

}  // namespace vireid
