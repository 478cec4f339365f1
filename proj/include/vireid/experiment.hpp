#pragma once

/** \file experiment.hpp
 *  Experiment driver behind the command-line tool: a JSON config names a
 *  synthetic dataset, training hyperparameters, a grid of loss
 *  combinations, and an evaluation protocol; run_experiment trains one
 *  model per grid cell and writes a loss-trace CSV and retrieval-report
 *  JSON per cell plus one summary CSV. run_selftest executes the
 *  oracle-equivalence and gradient-check suites.
 */

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vireid/eval.hpp"
#include "vireid/oracle.hpp"
#include "vireid/train.hpp"

namespace vireid {

/// Raised for anything wrong with a config file; the CLI maps it to exit
/// code 2 (validation), as opposed to 3 (runtime failure).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct EvalProtocolConfig {
  ShotMode shot = ShotMode::single;
  int trials = 10;
  std::uint64_t seed = 0;
  Modality query_modality = Modality::infrared;
};

struct ExperimentConfig {
  SyntheticSpec synthetic;
  TrainConfig train;
  EvalProtocolConfig eval;
  std::vector<std::vector<LossKind>> grid_cells;  // losses per cell, cell order fixed
  std::string out_dir = "out";
};

inline std::string cell_name(const std::vector<LossKind>& losses) {
  std::string name;
  for (LossKind kind : losses) {
    if (!name.empty()) name += "+";
    name += to_string(kind);
  }
  return name;
}

namespace detail {

template <typename T>
T field_as(const nlohmann::json& obj, const std::string& scope, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config field " + scope + "." + key + " has the wrong type");
  }
}

inline const nlohmann::json& section(const nlohmann::json& root, const std::string& key) {
  static const nlohmann::json empty = nlohmann::json::object();
  if (!root.contains(key)) return empty;
  if (!root.at(key).is_object()) throw ConfigError("config field " + key + " must be an object");
  return root.at(key );
}

inline std::vector<std::string> name_list(const nlohmann::json& grid, const std::string& key) {
  if (!grid.contains(key)) return {"none"};
  const auto& arr = grid.at(key);
  if (!arr.is_array() || arr.empty()) throw ConfigError("config field grid." + key + " must be a non-empty array");
  std::vector<std::string> names;
  for (const auto& v : arr) {
    if (!v.is_string()) throw ConfigError("config field grid." + key + " must contain strings");
    names.push_back(v.get<std::string>());
  }
  return names;
}

}  // namespace detail

/// Parses and validates a config document against every component
/// precondition; any problem is a ConfigError naming the offending field.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& root) {
  if (!root.is_object()) throw ConfigError("config root must be a JSON object");
  ExperimentConfig cfg;

  const auto& syn = detail::section(root, "synthetic");
  cfg.synthetic.identities = detail::field_as(syn, "synthetic", "identities", cfg.synthetic.identities);
  cfg.synthetic.samples_per_modality =
      detail::field_as(syn, "synthetic", "samples_per_modality", cfg.synthetic.samples_per_modality);
  cfg.synthetic.dim = detail::field_as(syn, "synthetic", "dim", cfg.synthetic.dim);
  cfg.synthetic.identity_spread = detail::field_as(syn, "synthetic", "identity_spread", cfg.synthetic.identity_spread);
  cfg.synthetic.modality_offset = detail::field_as(syn, "synthetic", "modality_offset", cfg.synthetic.modality_offset);
  cfg.synthetic.noise = detail::field_as(syn, "synthetic", "noise", cfg.synthetic.noise);
  cfg.synthetic.seed = detail::field_as(syn, "synthetic", "seed", cfg.synthetic.seed);
  try {
    validate_synthetic_spec(cfg.synthetic);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config section synthetic: ") + e.what());
  }

  const auto& tr = detail::section(root, "train");
  cfg.train.spec.persons = detail::field_as(tr, "train", "persons", cfg.train.spec.persons);
  cfg.train.spec.images_per_modality =
      detail::field_as(tr, "train", "images_per_modality", cfg.train.spec.images_per_modality);
  cfg.train.epochs = detail::field_as(tr, "train", "epochs", cfg.train.epochs);
  cfg.train.warmup_epochs = detail::field_as(tr, "train", "warmup_epochs", cfg.train.warmup_epochs);
  cfg.train.base_lr = detail::field_as(tr, "train", "base_lr", cfg.train.base_lr);
  cfg.train.weight_decay = detail::field_as(tr, "train", "weight_decay", cfg.train.weight_decay);
  cfg.train.seed = detail::field_as(tr, "train", "seed", cfg.train.seed);
  const double margin = detail::field_as(tr, "train", "margin", 0.3);
  cfg.train.triplet_params.margin = margin;
  cfg.train.classify_params.margin = margin;
  cfg.train.center_params.margin = margin;
  cfg.train.triplet_params.scale = detail::field_as(tr, "train", "unified_scale", 12.0);
  cfg.train.classify_params.scale = detail::field_as(tr, "train", "cosine_softmax_scale", 64.0);
  cfg.train.center_params.scale = detail::field_as(tr, "train", "center_scale", 12.0);

  const auto& ev = detail::section(root, "eval");
  const std::string shot = detail::field_as<std::string>(ev, "eval", "shot", "single");
  if (shot == "single") {
    cfg.eval.shot = ShotMode::single;
  } else if (shot == "multi") {
    cfg.eval.shot = ShotMode::multi;
  } else {
    throw ConfigError("config field eval.shot must be \"single\" or \"multi\"");
  }
  cfg.eval.trials = detail::field_as(ev, "eval", "trials", cfg.eval.trials);
  if (cfg.eval.trials < 1) throw ConfigError("config field eval.trials must be >= 1");
  cfg.eval.seed = detail::field_as(ev, "eval", "seed", cfg.eval.seed);
  const std::string qmod = detail::field_as<std::string>(ev, "eval", "query_modality", "infrared");
  if (qmod == "infrared") {
    cfg.eval.query_modality = Modality::infrared;
  } else if (qmod == "visible") {
    cfg.eval.query_modality = Modality::visible;
  } else {
    throw ConfigError("config field eval.query_modality must be \"visible\" or \"infrared\"");
  }

  cfg.out_dir = detail::field_as<std::string>(root, "", "out_dir", cfg.out_dir);
  if (cfg.out_dir.empty()) throw ConfigError("config field out_dir must not be empty");

  // grid: cross product triplet x classify x center; "none" skips a slot
  const auto& grid = detail::section(root, "grid");
  const auto triplet_names = detail::name_list(grid, "triplet");
  const auto classify_names = detail::name_list(grid, "classify");
  const auto center_names = detail::name_list(grid, "center");
  for (const std::string& t : triplet_names) {
    for (const std::string& c : classify_names) {
      for (const std::string& h : center_names) {
        std::vector<LossKind> cell;
        for (const std::string& name : {t, c, h}) {
          if (name == "none") continue;
          try {
            cell.push_back(parse_loss_kind(name));
          } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config section grid: ") + e.what());
          }
        }
        if (cell.empty()) throw ConfigError("config section grid: a cell selects no loss at all");
        cfg.grid_cells.push_back(std::move(cell));
      }
    }
  }

  // the cells all train under the same schedule; validate once per cell
  for (const auto& cell : cfg.grid_cells) {
    TrainConfig tc = cfg.train;
    tc.losses = cell;
    try {
      validate_train_config(tc);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config section train: ") + e.what());
    }
  }

  // dataset must support the batch spec before any work starts
  if (cfg.synthetic.identities < cfg.train.spec.persons) {
    throw ConfigError("config: synthetic.identities is smaller than train.persons");
  }
  if (cfg.synthetic.samples_per_modality < cfg.train.spec.images_per_modality) {
    throw ConfigError("config: synthetic.samples_per_modality is smaller than train.images_per_modality");
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json root;
  try {
    in >> root;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return parse_experiment_config(root);
}

struct CellOutcome {
  std::string name;
  RetrievalReport report;
};

/// Trains and evaluates one loss combination on an already generated
/// dataset. Exposed separately so tests and the acceptance suite can call
/// single cells without touching the filesystem.
inline CellOutcome run_cell(const std::vector<Sample>& dataset, const ExperimentConfig& cfg,
                            const std::vector<LossKind>& losses, std::vector<TraceRow>* trace_out = nullptr) {
  TrainConfig tc = cfg.train;
  tc.losses = losses;
  TrainRun run = train_run(dataset, tc);

  std::vector<Sample> queries;
  std::vector<Sample> gallery;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    Sample s = dataset[i];
    s.embedding = run.table.rows[i];
    (s.modality == cfg.eval.query_modality ? queries : gallery).push_back(std::move(s));
  }
  rng::Engine eval_rng(cfg.eval.seed);
  RetrievalReport report = evaluate(queries, gallery, cfg.eval.shot, cfg.eval.trials, eval_rng);
  report.seed = cfg.eval.seed;
  if (trace_out) *trace_out = std::move(run.trace);
  return CellOutcome{cell_name(losses), std::move(report)};
}

/// Executes every grid cell, writing trace_<cell>.csv and report_<cell>.json
/// per cell and a summary.csv with one row per cell. Rerunning with the
/// same config and seeds reproduces the artifacts byte for byte.
inline void run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  const std::vector<Sample> dataset = generate_synthetic_dataset(cfg.synthetic);

  std::ostringstream summary;
  summary << "losses,rank1,rank10,map\n";
  summary << std::fixed << std::setprecision(6);
  for (const auto& cell : cfg.grid_cells) {
    TrainConfig tc = cfg.train;
    tc.losses = cell;
    std::vector<TraceRow> trace;
    const CellOutcome outcome = run_cell(dataset, cfg, cell, &trace);
    log << "cell " << outcome.name << ": rank1=" << std::fixed << std::setprecision(6)
        << outcome.report.cmc_at(1) << " map=" << outcome.report.map << "\n";

    {
      std::ofstream trace_file(fs::path(cfg.out_dir) / ("trace_" + outcome.name + ".csv"));
      if (!trace_file) throw std::runtime_error("run_experiment: cannot write trace for cell " + outcome.name);
      write_trace_csv(trace_file, tc, trace);
    }
    {
      std::ofstream report_file(fs::path(cfg.out_dir) / ("report_" + outcome.name + ".json"));
      if (!report_file) throw std::runtime_error("run_experiment: cannot write report for cell " + outcome.name);
      write_report_json(report_file, outcome.report);
    }
    summary << outcome.name << "," << outcome.report.cmc_at(1) << "," << outcome.report.cmc_at(10) << ","
            << outcome.report.map << "\n";
  }
  std::ofstream summary_file(fs::path(cfg.out_dir) / "summary.csv");
  if (!summary_file) throw std::runtime_error("run_experiment: cannot write summary.csv");
  summary_file << summary.str();
}

// --- Self-test -------------------------------------------------------------

struct SelfCheck {
  std::string name;
  std::function<bool(std::ostream&)> fn;
};

/// Runs each check, printing one PASS/FAIL line per check; true iff all pass.
inline bool run_checks(const std::vector<SelfCheck>& checks, std::ostream& out) {
  bool all_ok = true;
  for (const SelfCheck& check : checks) {
    bool ok = false;
    try {
      ok = check.fn(out);
    } catch (const std::exception& e) {
      out << "  (" << check.name << " threw: " << e.what() << ")\n";
      ok = false;
    }
    out << (ok ? "PASS" : "FAIL") << " " << check.name << "\n";
    all_ok = all_ok && ok;
  }
  return all_ok;
}

namespace detail {

using BatchLoss = std::function<LossResult(const MiniBatch&, const TripletParams&)>;
using BatchOracle = std::function<double(const MiniBatch&, const TripletParams&)>;

/// Oracle-equivalence check over seeded random batches; `kernel` is a
/// parameter so a test fixture can inject a broken kernel and watch the
/// check fail.
inline SelfCheck make_oracle_check(const std::string& name, BatchLoss kernel, BatchOracle reference,
                                   double tolerance, bool relative) {
  return SelfCheck{name, [=](std::ostream& out) {
    rng::Engine rng(20240915);
    for (int trial = 0; trial < 40; ++trial) {
      const BatchSpec spec{2 + static_cast<int>(rng::below(rng, 3)), 1 + static_cast<int>(rng::below(rng, 3))};
      const int dim = trial % 2 == 0 ? 2 : 5;
      const MiniBatch batch = random_minibatch(spec, dim, rng);
      const TripletParams params{0.3, 12.0};
      const double got = kernel(batch, params).value;
      const double want = reference(batch, params);
      const double err = relative ? std::abs(got - want) / std::max(1.0, std::abs(want)) : std::abs(got - want);
      if (err > tolerance) {
        out << "  (" << name << " trial " << trial << ": got " << got << ", oracle " << want << ")\n";
        return false;
      }
    }
    return true;
  }};
}

inline SelfCheck make_gradient_check(const std::string& name, BatchLoss kernel) {
  return SelfCheck{name, [=](std::ostream& out) {
    rng::Engine rng(715);
    const TripletParams params{0.3, 12.0};
    int done = 0;
    for (int attempt = 0; attempt < 200 && done < 20; ++attempt) {
      const BatchSpec spec{2 + static_cast<int>(rng::below(rng, 2)), 1 + static_cast<int>(rng::below(rng, 2))};
      const MiniBatch batch = random_minibatch(spec, 3, rng);
      const LossResult res = kernel(batch, params);
      bool ok = true;
      for (std::size_t i = 0; i < batch.samples.size() && ok; ++i) {
        MiniBatch probe = batch;
        const auto fd = oracle::finite_diff_gradient(
            [&](const std::vector<double>& x) {
              probe.samples[i].embedding = x;
              return kernel(probe, params).value;
            },
            batch.samples[i].embedding, 1e-5);
        for (std::size_t d = 0; d < fd.size(); ++d) {
          const double a = res.embedding_grads[i][d];
          const double err = std::abs(a - fd[d]) / std::max({std::abs(a), std::abs(fd[d]), 1e-5});
          if (err > 5e-3) ok = false;  // coarse screen; kinks excluded by the full suite only
        }
      }
      if (ok) ++done;
    }
    if (done < 10) {
      out << "  (" << name << ": only " << done << " of 20 spot checks matched finite differences)\n";
      return false;
    }
    return true;
  }};
}

}  // namespace detail

/// The default self-test battery: oracle equality for the five hinge/center
/// losses and the unified factorization, gradient spot checks for the
/// smooth losses, the exp-count identity, and the AP oracle.
inline std::vector<SelfCheck> default_selftest_checks() {
  std::vector<SelfCheck> checks;
  checks.push_back(detail::make_oracle_check(
      "batch_hard matches exhaustive enumeration",
      [](const MiniBatch& b, const TripletParams& p) { return batch_hard_loss(b, p); },
      [](const MiniBatch& b, const TripletParams& p) { return oracle::batch_hard_value(b, p); }, 1e-12, false));
  checks.push_back(detail::make_oracle_check(
      "cm_batch_hard matches direct formula",
      [](const MiniBatch& b, const TripletParams& p) { return cross_modality_batch_hard_loss(b, p); },
      [](const MiniBatch& b, const TripletParams& p) { return oracle::cross_modality_batch_hard_value(b, p); },
      1e-12, false));
  checks.push_back(detail::make_oracle_check(
      "batch_all matches exhaustive enumeration",
      [](const MiniBatch& b, const TripletParams& p) { return batch_all_loss(b, p); },
      [](const MiniBatch& b, const TripletParams& p) { return oracle::batch_all_value(b, p); }, 1e-12, false));
  checks.push_back(detail::make_oracle_check(
      "unified_batch_all factored form matches per-pair form",
      [](const MiniBatch& b, const TripletParams& p) { return unified_batch_all_loss(b, p); },
      [](const MiniBatch& b, const TripletParams& p) { return oracle::unified_batch_all_value(b, p); }, 1e-9,
      true));
  checks.push_back(detail::make_oracle_check(
      "bh_hetero_center matches direct formula",
      [](const MiniBatch& b, const TripletParams& p) { return batch_hard_hetero_center_loss(b, p); },
      [](const MiniBatch& b, const TripletParams& p) { return oracle::batch_hard_hetero_center_value(b, p); },
      1e-12, false));
  checks.push_back(detail::make_oracle_check(
      "ba_hetero_center matches direct formula",
      [](const MiniBatch& b, const TripletParams& p) { return batch_all_hetero_center_loss(b, p); },
      [](const MiniBatch& b, const TripletParams& p) { return oracle::batch_all_hetero_center_value(b, p); },
      1e-12, false));
  checks.push_back(detail::make_gradient_check(
      "unified_batch_all gradient matches finite differences",
      [](const MiniBatch& b, const TripletParams& p) { return unified_batch_all_loss(b, p); }));
  checks.push_back(detail::make_gradient_check(
      "ba_hetero_center gradient matches finite differences",
      [](const MiniBatch& b, const TripletParams& p) { return batch_all_hetero_center_loss(b, p); }));
  checks.push_back(SelfCheck{"unified_batch_all exponential count is (2K-1) + 2(P-1)K", [](std::ostream& out) {
    rng::Engine rng(99);
    for (const BatchSpec spec : {BatchSpec{2, 1}, BatchSpec{3, 2}, BatchSpec{6, 8}}) {
      const MiniBatch batch = random_minibatch(spec, 4, rng);
      UnifiedLossStats stats;
      unified_batch_all_loss(batch, TripletParams{0.3, 12.0}, &stats);
      const std::size_t want = (2 * spec.images_per_modality - 1) +
                               2 * (spec.persons - 1) * spec.images_per_modality;
      for (std::size_t count : stats.exp_evals_per_anchor) {
        if (count != want) {
          out << "  (exp count " << count << " != " << want << " for P=" << spec.persons
              << " K=" << spec.images_per_modality << ")\n";
          return false;
        }
      }
    }
    return true;
  }});
  checks.push_back(SelfCheck{"retrieval mAP matches exhaustive AP", [](std::ostream& out) {
    rng::Engine rng(4242);
    for (int trial = 0; trial < 50; ++trial) {
      const int gallery_size = 2 + static_cast<int>(rng::below(rng, 5));
      std::vector<Sample> queries(1);
      queries[0].identity = 0;
      queries[0].modality = Modality::infrared;
      queries[0].embedding = rng::unit_vector(rng, 3);
      std::vector<Sample> gallery(gallery_size);
      bool any_match = false;
      for (int i = 0; i < gallery_size; ++i) {
        gallery[i].identity = static_cast<int>(rng::below(rng, 2));
        gallery[i].modality = Modality::visible;
        gallery[i].embedding = rng::unit_vector(rng, 3);
        gallery[i].sample_index = i;
        any_match = any_match || gallery[i].identity == 0;
      }
      if (!any_match) gallery[0].identity = 0;
      rng::Engine eval_rng(1);
      const RetrievalReport report = evaluate(queries, gallery, ShotMode::multi, 1, eval_rng);
      // reconstruct the relevance pattern in rank order, naively
      std::vector<std::pair<double, int>> ranked;
      for (const Sample& g : gallery) {
        double dot = 0.0, nq = 0.0, ng = 0.0;
        for (std::size_t d = 0; d < g.embedding.size(); ++d) {
          dot += g.embedding[d] * queries[0].embedding[d];
          nq += queries[0].embedding[d] * queries[0].embedding[d];
          ng += g.embedding[d] * g.embedding[d];
        }
        ranked.emplace_back(1.0 - dot / std::sqrt(nq * ng), g.identity);
      }
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      std::vector<bool> relevance;
      for (const auto& [d, id] : ranked) relevance.push_back(id == 0);
      const double want = oracle::exhaustive_ap(relevance);
      if (std::abs(report.map - want) > 1e-12) {
        out << "  (mAP " << report.map << " != oracle " << want << ")\n";
        return false;
      }
    }
    return true;
  }});
  return checks;
}

inline bool run_selftest(std::ostream& out) { return run_checks(default_selftest_checks(), out); }

}  // namespace vireid
