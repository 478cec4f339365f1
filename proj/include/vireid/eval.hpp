#pragma once

/** \file eval.hpp
 *  Cross-modality retrieval evaluation: cosine distance ranking, CMC and
 *  mAP under single-shot (one gallery image per identity, averaged over
 *  seeded redraws) and multi-shot (full gallery) regimes.
 *
 *  The gallery draw is identity-level: the camera-level protocol of the
 *  full-scale benchmarks has no analog on synthetic data, and the report's
 *  protocol descriptor records that abstraction.
 */

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vireid/batch.hpp"
#include "vireid/numkit.hpp"
#include "vireid/rng.hpp"

namespace vireid {

enum class ShotMode { single, multi };

inline const char* to_string(ShotMode mode) { return mode == ShotMode::single ? "single" : "multi"; }

/// 1 - cosine_similarity, in [0, 2]. The inference-time metric.
inline double cosine_distance(std::span<const double> x, std::span<const double> y) {
  return 1.0 - cosine_similarity(x, y);
}

struct RetrievalReport {
  std::vector<double> cmc;  // cmc[r] = P(match within top r+1); non-decreasing
  double map = 0.0;
  ShotMode shot = ShotMode::single;
  int trials = 1;
  std::uint64_t seed = 0;  // recorded by the caller that owned the rng
  std::string protocol;

  /// CMC at 1-indexed rank k, clamped to the gallery depth.
  double cmc_at(std::size_t k) const {
    if (cmc.empty() || k < 1) return 0.0;
    return cmc[std::min(k, cmc.size()) - 1];
  }
};

/// Ranks every query against the gallery by cosine distance (ties keep
/// canonical gallery order) and accumulates CMC and AP. Single-shot keeps
/// one uniformly drawn gallery sample per identity per trial; multi-shot
/// uses the whole gallery in one trial.
inline RetrievalReport evaluate(const std::vector<Sample>& queries, const std::vector<Sample>& gallery,
                                ShotMode shot, int trials, rng::Engine& rng) {
  if (queries.empty() || gallery.empty()) throw std::invalid_argument("evaluate: empty query or gallery set");
  const Modality query_mod = queries.front().modality;
  for (const Sample& q : queries) {
    if (q.modality != query_mod) throw std::invalid_argument("evaluate: mixed query modalities");
  }
  for (const Sample& g : gallery) {
    if (g.modality == query_mod) {
      throw std::invalid_argument("evaluate: gallery contains query-modality samples; sets must be opposite modalities");
    }
  }
  // every query identity must be answerable
  std::map<int, std::vector<std::size_t>> gallery_by_identity;
  for (std::size_t i = 0; i < gallery.size(); ++i) gallery_by_identity[gallery[i].identity].push_back(i);
  for (const Sample& q : queries) {
    if (gallery_by_identity.find(q.identity) == gallery_by_identity.end()) {
      throw std::invalid_argument("evaluate: query identity " + std::to_string(q.identity) +
                                  " absent from gallery");
    }
  }
  if (shot == ShotMode::multi) trials = 1;
  if (trials < 1) throw std::invalid_argument("evaluate: trials must be >= 1");

  const std::size_t depth =
      shot == ShotMode::single ? gallery_by_identity.size() : gallery.size();
  std::vector<double> cmc_sum(depth, 0.0);
  double ap_sum = 0.0;

  std::vector<std::size_t> kept;
  std::vector<std::size_t> order;
  for (int trial = 0; trial < trials; ++trial) {
    kept.clear();
    if (shot == ShotMode::single) {
      for (const auto& [identity, indices] : gallery_by_identity) {
        kept.push_back(indices[rng::below(rng, indices.size())]);
      }
    } else {
      for (std::size_t i = 0; i < gallery.size(); ++i) kept.push_back(i);
    }

    for (const Sample& q : queries) {
      std::vector<double> dist(kept.size());
      for (std::size_t i = 0; i < kept.size(); ++i) {
        dist[i] = cosine_distance(q.embedding, gallery[kept[i]].embedding);
      }
      order.resize(kept.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });

      std::size_t first_hit = depth;
      std::size_t relevant_seen = 0;
      std::size_t relevant_total = 0;
      double precision_sum = 0.0;
      for (std::size_t r = 0; r < order.size(); ++r) {
        if (gallery[kept[order[r]]].identity == q.identity) {
          ++relevant_total;
          ++relevant_seen;
          precision_sum += static_cast<double>(relevant_seen) / static_cast<double>(r + 1);
          if (first_hit == depth) first_hit = r;
        }
      }
      ap_sum += precision_sum / static_cast<double>(relevant_total);
      for (std::size_t r = first_hit; r < depth; ++r) cmc_sum[r] += 1.0;
    }
  }

  const double denom = static_cast<double>(queries.size()) * trials;
  RetrievalReport report;
  report.shot = shot;
  report.trials = trials;
  report.map = ap_sum / denom;
  report.cmc.resize(depth);
  for (std::size_t r = 0; r < depth; ++r) report.cmc[r] = cmc_sum[r] / denom;
  report.protocol = std::string("identity-level ") + to_string(shot) + "-shot, cosine distance, trials=" +
                    std::to_string(trials);
  return report;
}

/// JSON report: protocol descriptor, CMC at ranks 1/5/10/20, mAP, trials,
/// seed. Numbers carry six fixed decimals so artifacts diff cleanly.
inline void write_report_json(std::ostream& out, const RetrievalReport& report) {
  const auto flags = out.flags();
  out << std::fixed << std::setprecision(6);
  out << "{\n";
  out << "  \"protocol\": \"" << report.protocol << "\",\n";
  out << "  \"shot\": \"" << to_string(report.shot) << "\",\n";
  out << "  \"trials\": " << report.trials << ",\n";
  out << "  \"seed\": " << report.seed << ",\n";
  out << "  \"cmc\": {\n";
  out << "    \"rank1\": " << report.cmc_at(1) << ",\n";
  out << "    \"rank5\": " << report.cmc_at(5) << ",\n";
  out << "    \"rank10\": " << report.cmc_at(10) << ",\n";
  out << "    \"rank20\": " << report.cmc_at(20) << "\n";
  out << "  },\n";
  out << "  \"map\": " << report.map << "\n";
  out << "}\n";
  out.flags(flags);
}

}  // namespace vireid
