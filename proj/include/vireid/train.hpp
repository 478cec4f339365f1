#pragma once

/** \file train.hpp
 *  Desk-scale training of a free embedding table (one learnable vector per
 *  dataset sample, plus classifier columns) under any combination of the
 *  loss kernels, with Adam, linear warmup followed by cosine-annealed
 *  learning rate, and a seeded synthetic two-modality dataset generator.
 *
 *  Optimizing the vectors a backbone would produce isolates the behavior
 *  of each loss, which is the point of this laboratory.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "vireid/batch.hpp"
#include "vireid/center.hpp"
#include "vireid/classify.hpp"
#include "vireid/numkit.hpp"
#include "vireid/rng.hpp"
#include "vireid/triplet.hpp"

namespace vireid {

enum class LossKind {
  batch_hard,
  cm_batch_hard,
  batch_all,
  unified_batch_all,
  softmax,
  cosine_softmax,
  bh_hetero_center,
  ba_hetero_center,
};

inline const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::batch_hard: return "batch_hard";
    case LossKind::cm_batch_hard: return "cm_batch_hard";
    case LossKind::batch_all: return "batch_all";
    case LossKind::unified_batch_all: return "unified_batch_all";
    case LossKind::softmax: return "softmax";
    case LossKind::cosine_softmax: return "cosine_softmax";
    case LossKind::bh_hetero_center: return "bh_hetero_center";
    case LossKind::ba_hetero_center: return "ba_hetero_center";
  }
  throw std::invalid_argument("to_string: unknown LossKind");
}

inline LossKind parse_loss_kind(const std::string& name) {
  for (LossKind kind : {LossKind::batch_hard, LossKind::cm_batch_hard, LossKind::batch_all,
                        LossKind::unified_batch_all, LossKind::softmax, LossKind::cosine_softmax,
                        LossKind::bh_hetero_center, LossKind::ba_hetero_center}) {
    if (name == to_string(kind)) return kind;
  }
  throw std::invalid_argument("parse_loss_kind: unknown loss \"" + name + "\"");
}

struct SyntheticSpec {
  int identities = 40;
  int samples_per_modality = 8;
  int dim = 32;
  double identity_spread = 1.0;   // radius of the sphere class centers live on
  double modality_offset = 0.5;   // magnitude of the per-(identity, modality) shift
  double noise = 0.1;             // within-class isotropic standard deviation
  std::uint64_t seed = 0;
};

inline void validate_synthetic_spec(const SyntheticSpec& spec) {
  if (spec.identities < 2) throw std::invalid_argument("SyntheticSpec: identities must be >= 2");
  if (spec.samples_per_modality < 1) throw std::invalid_argument("SyntheticSpec: samples_per_modality must be >= 1");
  if (spec.dim < 1) throw std::invalid_argument("SyntheticSpec: dim must be >= 1");
  if (spec.identity_spread <= 0.0) throw std::invalid_argument("SyntheticSpec: identity_spread must be positive");
  if (spec.modality_offset < 0.0 || spec.noise < 0.0) {
    throw std::invalid_argument("SyntheticSpec: offsets and noise must be non-negative");
  }
}

/// Class centers drawn uniformly on the sphere of radius identity_spread;
/// each (identity, modality) adds a fixed random offset of magnitude
/// modality_offset; samples add isotropic noise. Fully seed-determined.
inline std::vector<Sample> generate_synthetic_dataset(const SyntheticSpec& spec) {
  validate_synthetic_spec(spec);
  rng::Engine rng(spec.seed);
  std::vector<Sample> dataset;
  dataset.reserve(static_cast<std::size_t>(spec.identities) * 2 * spec.samples_per_modality);
  for (int id = 0; id < spec.identities; ++id) {
    Embedding center = rng::unit_vector(rng, spec.dim);
    for (double& v : center) v *= spec.identity_spread;
    for (int m = 0; m < 2; ++m) {
      Embedding offset = rng::unit_vector(rng, spec.dim);
      for (double& v : offset) v *= spec.modality_offset;
      for (int k = 0; k < spec.samples_per_modality; ++k) {
        Sample s;
        s.identity = id;
        s.modality = m == 0 ? Modality::visible : Modality::infrared;
        s.sample_index = k;
        s.embedding.resize(spec.dim);
        for (int d = 0; d < spec.dim; ++d) {
          s.embedding[d] = center[d] + offset[d] + spec.noise * rng::normal(rng);
        }
        dataset.push_back(std::move(s));
      }
    }
  }
  return dataset;
}

struct TrainConfig {
  BatchSpec spec{6, 8};
  int epochs = 24;
  int warmup_epochs = 2;
  double base_lr = 6e-4;
  double weight_decay = 5e-4;
  TripletParams triplet_params{0.3, 12.0};   // margin + scale for the sample-level losses
  ClassifyParams classify_params{0.3, 64.0};
  TripletParams center_params{0.3, 12.0};
  std::vector<LossKind> losses{LossKind::unified_batch_all, LossKind::cosine_softmax,
                               LossKind::ba_hetero_center};
  std::uint64_t seed = 0;
};

inline void validate_train_config(const TrainConfig& cfg) {
  validate_batch_spec(cfg.spec);
  if (cfg.epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (cfg.warmup_epochs < 0 || cfg.warmup_epochs >= cfg.epochs) {
    throw std::invalid_argument("TrainConfig: warmup_epochs must lie in [0, epochs)");
  }
  if (cfg.base_lr <= 0.0) throw std::invalid_argument("TrainConfig: base_lr must be positive");
  if (cfg.weight_decay < 0.0) throw std::invalid_argument("TrainConfig: weight_decay must be non-negative");
  if (cfg.losses.empty()) throw std::invalid_argument("TrainConfig: at least one loss must be selected");
}

/// Linear warmup to base_lr over warmup_epochs, then cosine annealing to
/// zero across the remaining epochs.
inline double lr_at_epoch(int epoch, const TrainConfig& cfg) {
  validate_train_config(cfg);
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw std::invalid_argument("lr_at_epoch: epoch " + std::to_string(epoch) + " out of range [0, " +
                                std::to_string(cfg.epochs) + ")");
  }
  if (epoch < cfg.warmup_epochs) {
    return cfg.base_lr * (epoch + 1) / cfg.warmup_epochs;
  }
  const double progress = static_cast<double>(epoch - cfg.warmup_epochs) /
                          static_cast<double>(cfg.epochs - cfg.warmup_epochs);
  return 0.5 * cfg.base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

// --- Adam ----------------------------------------------------------------

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  long step_count = 0;
};

/// Classic Adam (beta1 0.9, beta2 0.999, eps 1e-8, bias correction) with
/// coupled L2 weight decay: wd * theta is added to the gradient of every
/// parameter before the moment updates.
inline void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
                      double lr, double weight_decay) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: shape mismatch");
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  if (state.first_moment.empty()) {
    state.first_moment.assign(params.size(), 0.0);
    state.second_moment.assign(params.size(), 0.0);
  }
  if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: state was initialized for a different shape");
  }
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(beta1, state.step_count);
  const double bc2 = 1.0 - std::pow(beta2, state.step_count);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + weight_decay * params[i];
    state.first_moment[i] = beta1 * state.first_moment[i] + (1.0 - beta1) * g;
    state.second_moment[i] = beta2 * state.second_moment[i] + (1.0 - beta2) * g * g;
    const double m_hat = state.first_moment[i] / bc1;
    const double v_hat = state.second_moment[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

// --- Embedding table -------------------------------------------------------

/// One learnable row per dataset sample (same order as the dataset) plus
/// the classifier columns, one per identity in ascending identity order.
struct EmbeddingTable {
  std::vector<Embedding> rows;
  ClassifierWeights classifier;
  std::vector<int> identity_of_class;  // sorted identities; column j is identity_of_class[j]'s center

  int class_index(int identity) const {
    const auto it = std::lower_bound(identity_of_class.begin(), identity_of_class.end(), identity);
    if (it == identity_of_class.end() || *it != identity) {
      throw std::invalid_argument("EmbeddingTable: unknown identity " + std::to_string(identity));
    }
    return static_cast<int>(it - identity_of_class.begin());
  }
};

/// Rows start at the dataset's own embeddings plus small noise; classifier
/// columns are unit-sphere projections of Gaussian draws. Keeps every
/// cosine quantity well-defined from the first step. Deterministic in
/// cfg.seed.
inline EmbeddingTable init_table(const std::vector<Sample>& dataset, const TrainConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("init_table: empty dataset");
  const std::size_t dim = dataset.front().embedding.size();
  rng::Engine rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  EmbeddingTable table;
  table.rows.reserve(dataset.size());
  double mean_norm = 0.0;
  for (const Sample& s : dataset) mean_norm += norm(s.embedding);
  mean_norm /= static_cast<double>(dataset.size());
  const double jitter = 1e-2 * mean_norm / std::sqrt(static_cast<double>(dim));
  for (const Sample& s : dataset) {
    if (s.embedding.size() != dim) throw std::invalid_argument("init_table: inconsistent dimensions");
    Embedding row = s.embedding;
    for (double& v : row) v += jitter * rng::normal(rng);
    table.rows.push_back(std::move(row));
  }
  std::set<int> identities;
  for (const Sample& s : dataset) identities.insert(s.identity);
  table.identity_of_class.assign(identities.begin(), identities.end());
  for (std::size_t c = 0; c < table.identity_of_class.size(); ++c) {
    table.classifier.columns.push_back(rng::unit_vector(rng, dim));
  }
  return table;
}

// --- Training loop ---------------------------------------------------------

struct TraceRow {
  int step = 0;
  int epoch = 0;
  double lr = 0.0;
  std::vector<double> loss_values;  // one per selected loss, cfg order
  double total = 0.0;
};

struct TrainRun {
  EmbeddingTable table;
  std::vector<TraceRow> trace;
};

namespace detail {

inline bool uses_classifier(LossKind kind) {
  return kind == LossKind::softmax || kind == LossKind::cosine_softmax;
}

}  // namespace detail

/// Runs epochs * floor(dataset / 2PK) steps. Each step samples a 2PK batch
/// of current table rows, sums every selected loss (classification losses
/// averaged over the batch), scatters gradients into the flat parameter
/// vector, and applies one Adam step. Identical seeds give bit-identical
/// traces and tables.
inline TrainRun train_run(const std::vector<Sample>& dataset, const TrainConfig& cfg) {
  validate_train_config(cfg);
  const int batch_size = cfg.spec.size();
  const int batches_per_epoch = static_cast<int>(dataset.size()) / batch_size;
  if (batches_per_epoch < 1) {
    throw std::invalid_argument("train_run: dataset smaller than one 2PK batch");
  }

  TrainRun run;
  run.table = init_table(dataset, cfg);
  const std::size_t dim = dataset.front().embedding.size();
  const std::size_t table_params = run.table.rows.size() * dim;
  const std::size_t classifier_params = run.table.classifier.columns.size() * dim;

  // (identity, modality, sample_index) -> dataset row, for scattering batch
  // gradients back into the table.
  std::map<std::tuple<int, int, int>, std::size_t> row_of;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Sample& s = dataset[i];
    const auto key = std::make_tuple(s.identity, s.modality == Modality::visible ? 0 : 1, s.sample_index);
    if (!row_of.emplace(key, i).second) {
      throw std::invalid_argument("train_run: duplicate (identity, modality, sample_index) in dataset");
    }
  }

  std::vector<double> flat_params(table_params + classifier_params);
  auto pack = [&]() {
    std::size_t at = 0;
    for (const Embedding& row : run.table.rows) {
      std::copy(row.begin(), row.end(), flat_params.begin() + at);
      at += dim;
    }
    for (const Embedding& col : run.table.classifier.columns) {
      std::copy(col.begin(), col.end(), flat_params.begin() + at);
      at += dim;
    }
  };
  auto unpack = [&]() {
    std::size_t at = 0;
    for (Embedding& row : run.table.rows) {
      std::copy(flat_params.begin() + at, flat_params.begin() + at + dim, row.begin());
      at += dim;
    }
    for (Embedding& col : run.table.classifier.columns) {
      std::copy(flat_params.begin() + at, flat_params.begin() + at + dim, col.begin());
      at += dim;
    }
  };

  rng::Engine sampler_rng(cfg.seed);
  AdamState adam;
  std::vector<double> flat_grads(flat_params.size());
  const bool any_classifier = std::any_of(cfg.losses.begin(), cfg.losses.end(), detail::uses_classifier);
  if (any_classifier && run.table.classifier.classes() < 2) {
    throw std::invalid_argument("train_run: classification losses need at least 2 identities");
  }

  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(epoch, cfg);
    for (int b = 0; b < batches_per_epoch; ++b, ++step) {
      MiniBatch batch = sample_2pk(dataset, cfg.spec, sampler_rng);
      std::vector<std::size_t> batch_rows(batch.samples.size());
      for (std::size_t i = 0; i < batch.samples.size(); ++i) {
        const Sample& s = batch.samples[i];
        const auto key = std::make_tuple(s.identity, s.modality == Modality::visible ? 0 : 1, s.sample_index);
        batch_rows[i] = row_of.at(key);
        batch.samples[i].embedding = run.table.rows[batch_rows[i]];
      }

      std::fill(flat_grads.begin(), flat_grads.end(), 0.0);
      TraceRow row;
      row.step = step;
      row.epoch = epoch;
      row.lr = lr;

      for (LossKind kind : cfg.losses) {
        double value = 0.0;
        if (detail::uses_classifier(kind)) {
          // classification losses average over the batch, matching their
          // printed 1/N reduction
          const double inv = 1.0 / static_cast<double>(batch.samples.size());
          for (std::size_t i = 0; i < batch.samples.size(); ++i) {
            const int label = run.table.class_index(batch.samples[i].identity);
            const LossResult r = kind == LossKind::softmax
                                     ? softmax_loss(batch.samples[i].embedding, label, run.table.classifier)
                                     : cosine_softmax_loss(batch.samples[i].embedding, label,
                                                           run.table.classifier, cfg.classify_params);
            value += inv * r.value;
            const std::size_t base = batch_rows[i] * dim;
            for (std::size_t d = 0; d < dim; ++d) flat_grads[base + d] += inv * r.embedding_grads[0][d];
            for (std::size_t c = 0; c < r.weight_grads.size(); ++c) {
              const std::size_t wbase = table_params + c * dim;
              for (std::size_t d = 0; d < dim; ++d) flat_grads[wbase + d] += inv * r.weight_grads[c][d];
            }
          }
        } else {
          LossResult r;
          switch (kind) {
            case LossKind::batch_hard: r = batch_hard_loss(batch, cfg.triplet_params); break;
            case LossKind::cm_batch_hard: r = cross_modality_batch_hard_loss(batch, cfg.triplet_params); break;
            case LossKind::batch_all: r = batch_all_loss(batch, cfg.triplet_params); break;
            case LossKind::unified_batch_all: r = unified_batch_all_loss(batch, cfg.triplet_params); break;
            case LossKind::bh_hetero_center: r = batch_hard_hetero_center_loss(batch, cfg.center_params); break;
            case LossKind::ba_hetero_center: r = batch_all_hetero_center_loss(batch, cfg.center_params); break;
            default: throw std::invalid_argument("train_run: unhandled loss kind");
          }
          value = r.value;
          for (std::size_t i = 0; i < batch.samples.size(); ++i) {
            const std::size_t base = batch_rows[i] * dim;
            for (std::size_t d = 0; d < dim; ++d) flat_grads[base + d] += r.embedding_grads[i][d];
          }
        }
        if (!std::isfinite(value)) {
          throw std::runtime_error("train_run: non-finite value for loss " + std::string(to_string(kind)) +
                                   " at step " + std::to_string(step));
        }
        row.loss_values.push_back(value);
        row.total += value;
      }

      pack();
      adam_step(adam, flat_params, flat_grads, lr, cfg.weight_decay);
      unpack();
      run.trace.push_back(std::move(row));
    }
  }
  return run;
}

/// CSV trace: step, epoch, lr, one column per selected loss, total.
inline void write_trace_csv(std::ostream& out, const TrainConfig& cfg, const std::vector<TraceRow>& trace) {
  const auto flags = out.flags();
  out << "step,epoch,lr";
  for (LossKind kind : cfg.losses) out << "," << to_string(kind);
  out << ",total\n";
  out << std::fixed << std::setprecision(6);
  for (const TraceRow& row : trace) {
    out << row.step << "," << row.epoch << "," << row.lr;
    for (double v : row.loss_values) out << "," << v;
    out << "," << row.total << "\n";
  }
  out.flags(flags);
}

}  // namespace vireid
