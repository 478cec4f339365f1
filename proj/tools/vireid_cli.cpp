// Command-line entry point: run a configured experiment grid over the
// synthetic two-modality dataset, or run the built-in self-test.
//
// Exit codes: 0 success, 1 self-test failure, 2 invalid config, 3 runtime
// failure while an experiment was executing.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "vireid/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"vireid: cross-modality metric learning loss laboratory"};
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool selftest = false;
  app.add_option("--config", config_path, "experiment config (JSON)");
  app.add_option("--out", out_dir, "output directory (overrides config out_dir)");
  app.add_option("--seed", seed, "training seed (overrides config train.seed)")
      ->each([&](const std::string&) { seed_set = true; });
  app.add_flag("--selftest", selftest, "run oracle-equivalence and gradient checks, then exit");
  CLI11_PARSE(app, argc, argv);

  if (selftest) {
    return vireid::run_selftest(std::cout) ? 0 : 1;
  }
  if (config_path.empty()) {
    std::cerr << "error: --config is required unless --selftest is given\n";
    return 2;
  }

  vireid::ExperimentConfig cfg;
  try {
    cfg = vireid::load_experiment_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (seed_set) cfg.train.seed = seed;
  } catch (const vireid::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    vireid::run_experiment(cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 3;
  }
  std::cout << "wrote artifacts to " << cfg.out_dir << "\n";
  return 0;
}
