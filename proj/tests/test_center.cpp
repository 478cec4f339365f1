#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "test_support.hpp"
#include "vireid/center.hpp"
#include "vireid/oracle.hpp"

using namespace vireid;
using vireid::testing::battery_b4;
using vireid::testing::make_sample;
using Catch::Approx;

namespace {

const TripletParams kDefault{0.3, 1.0};

MiniBatch two_member_batch() {
  MiniBatch batch;
  batch.spec = BatchSpec{2, 2};
  batch.samples.push_back(make_sample({1.0, 0.0}, 0, Modality::visible, 0));
  batch.samples.push_back(make_sample({0.0, 1.0}, 0, Modality::visible, 1));
  batch.samples.push_back(make_sample({2.0, 0.0}, 0, Modality::infrared, 0));
  batch.samples.push_back(make_sample({0.0, 2.0}, 0, Modality::infrared, 1));
  batch.samples.push_back(make_sample({-1.0, 0.5}, 1, Modality::visible, 0));
  batch.samples.push_back(make_sample({-1.0, -0.5}, 1, Modality::visible, 1));
  batch.samples.push_back(make_sample({-2.0, 0.5}, 1, Modality::infrared, 0));
  batch.samples.push_back(make_sample({-2.0, -0.5}, 1, Modality::infrared, 1));
  return batch;
}

}  // namespace

TEST_CASE("compute_centers takes exact means") {
  const auto batch = two_member_batch();
  const auto raw = compute_centers(batch, false);
  CHECK(raw.visible[0] == Embedding{0.5, 0.5});
  CHECK(raw.infrared[0] == Embedding{1.0, 1.0});
  CHECK_FALSE(raw.normalized_inputs);

  const auto normalized = compute_centers(batch, true);
  CHECK(normalized.normalized_inputs);
  // members (2,0) and (0,2) normalize to the axes; their mean is (0.5, 0.5)
  CHECK(normalized.infrared[0][0] == Approx(0.5).margin(1e-15));
  CHECK(normalized.infrared[0][1] == Approx(0.5).margin(1e-15));
  CHECK(norm(normalized.infrared[0]) == Approx(std::sqrt(0.5)).margin(1e-12));
}

TEST_CASE("compute_centers with K = 1 returns the members themselves") {
  const auto batch = battery_b4();
  const auto raw = compute_centers(batch, false);
  CHECK(raw.visible[0] == batch.samples[0].embedding);
  CHECK(raw.infrared[1] == batch.samples[3].embedding);
  const auto normalized = compute_centers(batch, true);
  CHECK(normalized.visible[0] == batch.samples[0].embedding);  // already unit norm
}

TEST_CASE("compute_centers rejects zero-norm members when normalizing") {
  MiniBatch batch = battery_b4();
  batch.samples[2].embedding = {0.0, 0.0};
  CHECK_THROWS_AS(compute_centers(batch, true), std::invalid_argument);
  CHECK_NOTHROW(compute_centers(batch, false));
}

TEST_CASE("batch_hard_hetero_center_loss on the reference battery") {
  // with K = 1 centers equal samples; 0.3 per anchor center
  const auto batch = battery_b4();
  CHECK(oracle::batch_hard_hetero_center_value(batch, kDefault) == Approx(1.2).margin(1e-12));
  CHECK(batch_hard_hetero_center_loss(batch, kDefault).value == Approx(1.2).margin(1e-12));

  CHECK(oracle::batch_hard_hetero_center_value(batch, TripletParams{0.0, 1.0}) == 0.0);
  CHECK(batch_hard_hetero_center_loss(batch, TripletParams{0.0, 1.0}).value == 0.0);
}

TEST_CASE("batch_hard_hetero_center_loss vanishes when modality centers coincide") {
  MiniBatch batch;
  batch.spec = BatchSpec{2, 1};
  batch.samples.push_back(make_sample({3.0, 0.0}, 0, Modality::visible, 0));
  batch.samples.push_back(make_sample({3.0, 0.0}, 0, Modality::infrared, 0));
  batch.samples.push_back(make_sample({-3.0, 0.0}, 1, Modality::visible, 0));
  batch.samples.push_back(make_sample({-3.0, 0.0}, 1, Modality::infrared, 0));
  const auto result = batch_hard_hetero_center_loss(batch, kDefault);
  CHECK(result.value == 0.0);
}

TEST_CASE("batch_all_hetero_center_loss on the reference battery") {
  // each of the 4 anchor terms is log(1 + e^-0.7 + e^0.3)
  const auto batch = battery_b4();
  const double want = oracle::batch_all_hetero_center_value(batch, kDefault);
  CHECK(want == Approx(4.1842705).margin(1e-6));
  CHECK(batch_all_hetero_center_loss(batch, kDefault).value == Approx(want).epsilon(1e-12));
}

TEST_CASE("batch_all_hetero_center_loss on coincident identities") {
  MiniBatch batch;
  batch.spec = BatchSpec{2, 1};
  batch.samples.push_back(make_sample({1.0, 1.0}, 0, Modality::visible, 0));
  batch.samples.push_back(make_sample({2.0, 2.0}, 0, Modality::infrared, 0));
  batch.samples.push_back(make_sample({1.0, 1.0}, 1, Modality::visible, 0));
  batch.samples.push_back(make_sample({2.0, 2.0}, 1, Modality::infrared, 0));
  // all normalized centers coincide, so every anchor term is log(1 + 2 e^(gamma m))
  const double want = oracle::batch_all_hetero_center_value(batch, kDefault);
  CHECK(want == Approx(4.0 * std::log(1.0 + 2.0 * std::exp(0.3))).margin(1e-12));
  CHECK(batch_all_hetero_center_loss(batch, kDefault).value == Approx(want).epsilon(1e-12));
}

TEST_CASE("batch_all_hetero_center_loss is invariant to per-embedding rescaling") {
  rng::Engine rng(51);
  for (int trial = 0; trial < 20; ++trial) {
    MiniBatch batch = random_minibatch(BatchSpec{3, 2}, 4, rng);
    const double base = batch_all_hetero_center_loss(batch, kDefault).value;
    for (Sample& s : batch.samples) {
      const double factor = rng::uniform(rng, 0.1, 7.0);
      for (double& v : s.embedding) v *= factor;
    }
    CHECK(batch_all_hetero_center_loss(batch, kDefault).value == Approx(base).margin(1e-12));
  }
}

TEST_CASE("batch_hard_hetero_center_loss is translation invariant") {
  rng::Engine rng(52);
  for (int trial = 0; trial < 20; ++trial) {
    MiniBatch batch = random_minibatch(BatchSpec{3, 2}, 4, rng);
    const double base = batch_hard_hetero_center_loss(batch, kDefault).value;
    Embedding shift(4);
    for (double& v : shift) v = rng::uniform(rng, -3, 3);
    for (Sample& s : batch.samples) {
      for (std::size_t d = 0; d < shift.size(); ++d) s.embedding[d] += shift[d];
    }
    CHECK(batch_hard_hetero_center_loss(batch, kDefault).value == Approx(base).margin(1e-12));
  }
}

TEST_CASE("hetero-center losses match oracles on random batches") {
  rng::Engine rng(53);
  for (int trial = 0; trial < 50; ++trial) {
    const BatchSpec spec{2 + static_cast<int>(rng::below(rng, 3)), 1 + static_cast<int>(rng::below(rng, 3))};
    const MiniBatch batch = random_minibatch(spec, trial % 2 ? 2 : 5, rng);
    const TripletParams params{0.3, 12.0};
    CHECK(batch_hard_hetero_center_loss(batch, params).value ==
          Approx(oracle::batch_hard_hetero_center_value(batch, params)).margin(1e-12));
    CHECK(batch_all_hetero_center_loss(batch, params).value ==
          Approx(oracle::batch_all_hetero_center_value(batch, params)).margin(1e-12));
    CHECK(batch_hard_hetero_center_loss(batch, params).value >= 0.0);
    CHECK(batch_all_hetero_center_loss(batch, params).value > 0.0);
  }
}

TEST_CASE("center count is exactly 2P") {
  rng::Engine rng(54);
  const MiniBatch batch = random_minibatch(BatchSpec{4, 2}, 3, rng);
  const auto centers = compute_centers(batch, false);
  CHECK(centers.visible.size() == 4);
  CHECK(centers.infrared.size() == 4);
}
