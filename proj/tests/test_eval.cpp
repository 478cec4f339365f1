#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <sstream>

#include "test_support.hpp"
#include "vireid/eval.hpp"
#include "vireid/oracle.hpp"

using namespace vireid;
using vireid::testing::make_sample;
using Catch::Approx;

namespace {

/// One query plus a gallery whose cosine distances to it are fixed by
/// construction on the unit circle: angle t gives distance 1 - cos(t).
Sample query_at_origin() { return make_sample({1.0, 0.0}, 0, Modality::infrared, 0); }

Sample gallery_at(double distance, int identity, int index) {
  const double c = 1.0 - distance;
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  return make_sample({c, s}, identity, Modality::visible, index);
}

}  // namespace

TEST_CASE("cosine_distance known values") {
  CHECK(cosine_distance(Embedding{2, 1}, Embedding{4, 2}) == Approx(0.0).margin(1e-15));
  CHECK(cosine_distance(Embedding{1, 0}, Embedding{0, 3}) == Approx(1.0));
  CHECK(cosine_distance(Embedding{1, 0}, Embedding{-5, 0}) == Approx(2.0));
  CHECK_THROWS_AS(cosine_distance(Embedding{0, 0}, Embedding{1, 0}), std::invalid_argument);
}

TEST_CASE("perfect retrieval yields cmc[1] = 1 and map = 1") {
  std::vector<Sample> queries{query_at_origin()};
  std::vector<Sample> gallery{gallery_at(0.0, 0, 0)};
  rng::Engine rng(1);
  const auto report = evaluate(queries, gallery, ShotMode::multi, 1, rng);
  CHECK(report.cmc_at(1) == 1.0);
  CHECK(report.map == 1.0);
}

TEST_CASE("multi-shot AP on the three-item gallery") {
  // distances 0.1 (match), 0.2 (non-match), 0.3 (match): AP = (1 + 2/3)/2
  std::vector<Sample> queries{query_at_origin()};
  std::vector<Sample> gallery{gallery_at(0.1, 0, 0), gallery_at(0.2, 1, 0), gallery_at(0.3, 0, 1)};
  rng::Engine rng(1);
  const auto report = evaluate(queries, gallery, ShotMode::multi, 1, rng);
  CHECK(report.map == Approx(0.8333333).margin(1e-7));
  CHECK(report.cmc_at(1) == 1.0);
  CHECK(report.map == Approx(oracle::exhaustive_ap({true, false, true})).margin(1e-12));
}

TEST_CASE("match ranked last of five") {
  std::vector<Sample> queries{query_at_origin()};
  std::vector<Sample> gallery;
  for (int i = 0; i < 4; ++i) gallery.push_back(gallery_at(0.1 + 0.1 * i, i + 1, 0));
  gallery.push_back(gallery_at(0.9, 0, 0));
  rng::Engine rng(1);
  const auto report = evaluate(queries, gallery, ShotMode::multi, 1, rng);
  CHECK(report.map == Approx(0.2).margin(1e-12));
  for (std::size_t r = 1; r <= 4; ++r) CHECK(report.cmc_at(r) == 0.0);
  CHECK(report.cmc_at(5) == 1.0);
}

TEST_CASE("evaluate validates its inputs") {
  std::vector<Sample> queries{query_at_origin()};
  SECTION("query identity absent from gallery") {
    std::vector<Sample> gallery{gallery_at(0.1, 7, 0)};
    rng::Engine rng(1);
    try {
      evaluate(queries, gallery, ShotMode::multi, 1, rng);
      FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("identity 0") != std::string::npos);
    }
  }
  SECTION("gallery modality must be opposite") {
    std::vector<Sample> gallery{make_sample({1.0, 0.0}, 0, Modality::infrared, 0)};
    rng::Engine rng(1);
    CHECK_THROWS_AS(evaluate(queries, gallery, ShotMode::multi, 1, rng), std::invalid_argument);
  }
}

TEST_CASE("multi-shot evaluation is invariant to gallery permutation") {
  rng::Engine rng(71);
  std::vector<Sample> queries;
  for (int q = 0; q < 3; ++q) {
    queries.push_back(make_sample(rng::unit_vector(rng, 4), q, Modality::infrared, q));
  }
  std::vector<Sample> gallery;
  for (int i = 0; i < 9; ++i) {
    gallery.push_back(make_sample(rng::unit_vector(rng, 4), i % 3, Modality::visible, i));
  }
  rng::Engine e1(1), e2(1);
  const auto base = evaluate(queries, gallery, ShotMode::multi, 1, e1);
  std::reverse(gallery.begin(), gallery.end());
  const auto reversed = evaluate(queries, gallery, ShotMode::multi, 1, e2);
  CHECK(base.map == Approx(reversed.map).margin(1e-12));
  for (std::size_t r = 1; r <= gallery.size(); ++r) {
    CHECK(base.cmc_at(r) == Approx(reversed.cmc_at(r)).margin(1e-12));
  }
}

TEST_CASE("cmc curves are non-decreasing and reach one") {
  rng::Engine rng(72);
  for (int trial = 0; trial < 100; ++trial) {
    const int identities = 2 + static_cast<int>(rng::below(rng, 4));
    std::vector<Sample> queries, gallery;
    for (int id = 0; id < identities; ++id) {
      queries.push_back(make_sample(rng::unit_vector(rng, 3), id, Modality::infrared, 0));
      const int copies = 1 + static_cast<int>(rng::below(rng, 3));
      for (int c = 0; c < copies; ++c) {
        gallery.push_back(make_sample(rng::unit_vector(rng, 3), id, Modality::visible, c));
      }
    }
    const ShotMode mode = trial % 2 == 0 ? ShotMode::single : ShotMode::multi;
    rng::Engine eval_rng(trial);
    const auto report = evaluate(queries, gallery, mode, 3, eval_rng);
    for (std::size_t r = 1; r < report.cmc.size(); ++r) {
      CHECK(report.cmc[r] >= report.cmc[r - 1]);
    }
    CHECK(report.cmc.back() == Approx(1.0).margin(1e-12));
    CHECK(report.map >= 0.0);
    CHECK(report.map <= 1.0 + 1e-12);
  }
}

TEST_CASE("single-shot keeps one gallery item per identity and averages trials") {
  std::vector<Sample> queries{query_at_origin()};
  // identity 0 has a near and a far copy; identity 1 sits between them
  std::vector<Sample> gallery{gallery_at(0.05, 0, 0), gallery_at(0.8, 0, 1), gallery_at(0.4, 1, 0)};
  rng::Engine rng(9);
  const auto report = evaluate(queries, gallery, ShotMode::single, 400, rng);
  REQUIRE(report.cmc.size() == 2);  // two identities -> gallery depth 2
  // drawing the near copy ranks the match first (AP 1), the far copy second
  // (AP 1/2); both draws are equally likely
  CHECK(report.map == Approx(0.75).margin(0.05));
  CHECK(report.cmc.back() == Approx(1.0).margin(1e-12));
}

TEST_CASE("report JSON carries fixed six-decimal numbers") {
  std::vector<Sample> queries{query_at_origin()};
  std::vector<Sample> gallery{gallery_at(0.1, 0, 0), gallery_at(0.2, 1, 0), gallery_at(0.3, 0, 1)};
  rng::Engine rng(1);
  auto report = evaluate(queries, gallery, ShotMode::multi, 1, rng);
  report.seed = 42;
  std::ostringstream out;
  write_report_json(out, report);
  const std::string text = out.str();
  CHECK(text.find("\"map\": 0.833333") != std::string::npos);
  CHECK(text.find("\"seed\": 42") != std::string::npos);
  CHECK(text.find("\"rank1\": 1.000000") != std::string::npos);
}
