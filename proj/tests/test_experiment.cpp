#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "vireid/experiment.hpp"

using namespace vireid;
namespace fs = std::filesystem;

namespace {

nlohmann::json tiny_config_json() {
  return nlohmann::json{
      {"synthetic",
       {{"identities", 6},
        {"samples_per_modality", 2},
        {"dim", 6},
        {"identity_spread", 0.05},
        {"modality_offset", 0.03},
        {"noise", 0.01},
        {"seed", 3}}},
      {"train",
       {{"persons", 2},
        {"images_per_modality", 2},
        {"epochs", 2},
        {"warmup_epochs", 1},
        {"seed", 5}}},
      {"grid", {{"triplet", {"unified_batch_all"}}, {"classify", {"cosine_softmax"}}}},
      {"eval", {{"shot", "single"}, {"trials", 2}, {"seed", 7}}},
      {"out_dir", "unused"},
  };
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

TEST_CASE("grid cross product determines the cell count") {
  auto json = tiny_config_json();
  json["grid"] = {{"triplet", {"batch_hard", "batch_all"}}, {"classify", {"softmax", "cosine_softmax"}}};
  const auto cfg = parse_experiment_config(json);
  REQUIRE(cfg.grid_cells.size() == 4);
  CHECK(cell_name(cfg.grid_cells[0]) == "batch_hard+softmax");
  CHECK(cell_name(cfg.grid_cells[3]) == "batch_all+cosine_softmax");
}

TEST_CASE("config validation yields field-level errors") {
  SECTION("epochs = 0") {
    auto json = tiny_config_json();
    json["train"]["epochs"] = 0;
    try {
      parse_experiment_config(json);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("epochs") != std::string::npos);
    }
  }
  SECTION("unknown loss name") {
    auto json = tiny_config_json();
    json["grid"]["triplet"] = {"super_loss"};
    CHECK_THROWS_AS(parse_experiment_config(json), ConfigError);
  }
  SECTION("wrong field type") {
    auto json = tiny_config_json();
    json["train"]["base_lr"] = "fast";
    try {
      parse_experiment_config(json);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("base_lr") != std::string::npos);
    }
  }
  SECTION("batch larger than the dataset supports") {
    auto json = tiny_config_json();
    json["train"]["persons"] = 50;
    CHECK_THROWS_AS(parse_experiment_config(json), ConfigError);
  }
  SECTION("cell with no losses") {
    auto json = tiny_config_json();
    json["grid"] = {{"triplet", {"none"}}, {"classify", {"none"}}};
    CHECK_THROWS_AS(parse_experiment_config(json), ConfigError);
  }
}

TEST_CASE("run_experiment writes trace, report, and summary artifacts") {
  auto json = tiny_config_json();
  const fs::path out = fs::temp_directory_path() / "vireid_exp_artifacts";
  fs::remove_all(out);
  json["out_dir"] = out.string();
  const auto cfg = parse_experiment_config(json);
  std::ostringstream log;
  run_experiment(cfg, log);

  CHECK(fs::exists(out / "summary.csv"));
  CHECK(fs::exists(out / "trace_unified_batch_all+cosine_softmax.csv"));
  CHECK(fs::exists(out / "report_unified_batch_all+cosine_softmax.json"));

  const std::string summary = slurp(out / "summary.csv");
  CHECK(summary.find("losses,rank1,rank10,map") == 0);
  std::size_t rows = 0;
  for (char c : summary) rows += c == '\n';
  CHECK(rows == 1 + cfg.grid_cells.size());
  fs::remove_all(out);
}

TEST_CASE("run_experiment is byte-deterministic for a fixed config") {
  auto json = tiny_config_json();
  const fs::path out_a = fs::temp_directory_path() / "vireid_exp_a";
  const fs::path out_b = fs::temp_directory_path() / "vireid_exp_b";
  fs::remove_all(out_a);
  fs::remove_all(out_b);

  json["out_dir"] = out_a.string();
  std::ostringstream log_a, log_b;
  run_experiment(parse_experiment_config(json), log_a);
  json["out_dir"] = out_b.string();
  run_experiment(parse_experiment_config(json), log_b);

  for (const char* name : {"summary.csv", "trace_unified_batch_all+cosine_softmax.csv",
                           "report_unified_batch_all+cosine_softmax.json"}) {
    CHECK(slurp(out_a / name) == slurp(out_b / name));
  }
  fs::remove_all(out_a);
  fs::remove_all(out_b);
}

TEST_CASE("self-test passes on a healthy build") {
  std::ostringstream out;
  CHECK(run_selftest(out));
  CHECK(out.str().find("FAIL") == std::string::npos);
  CHECK(out.str().find("PASS") != std::string::npos);

  // identical output when run twice
  std::ostringstream again;
  run_selftest(again);
  CHECK(out.str() == again.str());
}

TEST_CASE("self-test catches an injected sign error") {
  // a sabotaged batch-hard kernel: margin applied with the wrong sign
  auto broken = [](const MiniBatch& batch, const TripletParams& params) {
    TripletParams flipped = params;
    flipped.margin = -params.margin;
    return batch_hard_loss(batch, flipped);
  };
  std::vector<SelfCheck> checks;
  checks.push_back(detail::make_oracle_check(
      "batch_hard matches exhaustive enumeration", broken,
      [](const MiniBatch& b, const TripletParams& p) { return oracle::batch_hard_value(b, p); }, 1e-12,
      false));
  std::ostringstream out;
  CHECK_FALSE(run_checks(checks, out));
  CHECK(out.str().find("FAIL") != std::string::npos);
}

TEST_CASE("config loading reports unreadable or invalid files") {
  CHECK_THROWS_AS(load_experiment_config("/nonexistent/config.json"), ConfigError);
  const fs::path bad = fs::temp_directory_path() / "vireid_bad.json";
  std::ofstream(bad) << "{ not json";
  CHECK_THROWS_AS(load_experiment_config(bad.string()), ConfigError);
  fs::remove(bad);
}
