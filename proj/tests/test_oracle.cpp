#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "test_support.hpp"
#include "vireid/oracle.hpp"

using namespace vireid;
using vireid::testing::battery_b4;
using vireid::testing::coincident_batch;
using Catch::Approx;

TEST_CASE("enumerate_triplets counts follow 2PK x (2K-1) x 2(P-1)K") {
  const auto b4 = oracle::enumerate_triplets(battery_b4(), TripletParams{0.3, 1.0}, oracle::Metric::euclidean);
  CHECK(b4.triplets.size() == 8);  // 4 anchors x 1 positive x 2 negatives

  rng::Engine rng(81);
  const MiniBatch big = random_minibatch(BatchSpec{6, 8}, 3, rng);
  const auto all = oracle::enumerate_triplets(big, TripletParams{0.3, 1.0}, oracle::Metric::euclidean);
  CHECK(all.triplets.size() == 96u * 15u * 80u);  // 115200
}

TEST_CASE("enumerate_triplets hinge on a batch of identical embeddings") {
  const auto all =
      oracle::enumerate_triplets(coincident_batch(), TripletParams{0.3, 1.0}, oracle::Metric::euclidean);
  REQUIRE(all.triplets.size() == 8);
  for (const auto& t : all.triplets) CHECK(t.hinge == Approx(0.3).margin(1e-15));
}

TEST_CASE("enumerate_triplets respects the metric choice") {
  const auto cosine =
      oracle::enumerate_triplets(battery_b4(), TripletParams{0.3, 1.0}, oracle::Metric::cosine_distance);
  // anchor (1,0): positive (0,1) at cosine distance 1; negatives (-1,0) at 2
  // and (0,-1) at 1; the hinges are [0.3 + 1 - 2]_+ = 0 and [0.3]_+
  double total = 0.0;
  for (const auto& t : cosine.triplets) total += t.hinge;
  CHECK(total == Approx(4 * 0.3).margin(1e-12));
}

TEST_CASE("finite_diff_gradient known cases") {
  const auto squared = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  const auto grad = oracle::finite_diff_gradient(squared, {1.0, 2.0}, 1e-5);
  CHECK(grad[0] == Approx(2.0).margin(1e-8));
  CHECK(grad[1] == Approx(4.0).margin(1e-8));

  const auto constant = [](const std::vector<double>&) { return 7.0; };
  const auto zero = oracle::finite_diff_gradient(constant, {3.0, -1.0, 2.0}, 1e-5);
  for (double v : zero) CHECK(v == 0.0);

  const auto dist_to_origin = [](const std::vector<double>& x) {
    return std::sqrt(x[0] * x[0] + x[1] * x[1]);
  };
  const auto unit = oracle::finite_diff_gradient(dist_to_origin, {3.0, 4.0}, 1e-5);
  CHECK(unit[0] == Approx(0.6).margin(1e-8));
  CHECK(unit[1] == Approx(0.8).margin(1e-8));

  CHECK_THROWS_AS(oracle::finite_diff_gradient(constant, {1.0}, 0.0), std::invalid_argument);
}

TEST_CASE("exhaustive_ap known values") {
  CHECK(oracle::exhaustive_ap({true}) == 1.0);
  CHECK(oracle::exhaustive_ap({true, false, true}) == Approx(0.8333333).margin(1e-7));
  CHECK(oracle::exhaustive_ap({false, false, true}) == Approx(0.3333333).margin(1e-7));
  CHECK_THROWS_AS(oracle::exhaustive_ap({false, false}), std::invalid_argument);
}

TEST_CASE("batch_all equals the mean of enumeration hinges") {
  rng::Engine rng(82);
  for (int trial = 0; trial < 20; ++trial) {
    const MiniBatch batch = random_minibatch(BatchSpec{3, 2}, 3, rng);
    const TripletParams params{0.3, 1.0};
    const auto all = oracle::enumerate_triplets(batch, params, oracle::Metric::euclidean);
    double sum = 0.0;
    for (const auto& t : all.triplets) sum += t.hinge;
    CHECK(oracle::batch_all_value(batch, params) ==
          Approx(sum / batch.samples.size()).margin(1e-12));
  }
}
