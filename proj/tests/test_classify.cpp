#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "vireid/classify.hpp"
#include "vireid/rng.hpp"

using namespace vireid;
using Catch::Approx;

namespace {

ClassifierWeights axis_weights() {
  ClassifierWeights w;
  w.columns = {Embedding{1, 0}, Embedding{0, 1}};
  return w;
}

ClassifierWeights random_weights(int classes, int dim, rng::Engine& rng) {
  ClassifierWeights w;
  for (int c = 0; c < classes; ++c) {
    Embedding col(dim);
    for (double& v : col) v = rng::uniform(rng, -1, 1);
    if (norm(col) < 1e-3) col[0] += 1.0;
    w.columns.push_back(std::move(col));
  }
  return w;
}

}  // namespace

TEST_CASE("softmax_loss known values") {
  // logits (1, 0): loss = log(1 + e^-1)
  const auto result = softmax_loss(Embedding{1, 0}, 0, axis_weights());
  CHECK(result.value == Approx(0.3132617).margin(1e-7));

  ClassifierWeights equal;
  equal.columns = {Embedding{0.3, -0.2}, Embedding{0.3, -0.2}, Embedding{0.3, -0.2}};
  CHECK(softmax_loss(Embedding{5, 7}, 1, equal).value == Approx(std::log(3.0)).margin(1e-12));
  CHECK(softmax_loss(Embedding{0, 0}, 0, axis_weights()).value == Approx(std::log(2.0)).margin(1e-12));
}

TEST_CASE("softmax_loss rejects bad labels") {
  CHECK_THROWS_AS(softmax_loss(Embedding{1, 0}, 2, axis_weights()), std::invalid_argument);
  CHECK_THROWS_AS(softmax_loss(Embedding{1, 0}, -1, axis_weights()), std::invalid_argument);
}

TEST_CASE("cosine_softmax_loss known values and scale invariance") {
  const ClassifyParams no_margin{0.0, 1.0};
  CHECK(cosine_softmax_loss(Embedding{1, 0}, 0, axis_weights(), no_margin).value ==
        Approx(0.3132617).margin(1e-7));
  const ClassifyParams with_margin{0.3, 1.0};
  CHECK(cosine_softmax_loss(Embedding{1, 0}, 0, axis_weights(), with_margin).value ==
        Approx(0.4031860).margin(1e-7));
  CHECK(cosine_softmax_loss(Embedding{5, 0}, 0, axis_weights(), with_margin).value ==
        Approx(cosine_softmax_loss(Embedding{1, 0}, 0, axis_weights(), with_margin).value).margin(1e-12));
  CHECK_THROWS_AS(cosine_softmax_loss(Embedding{0, 0}, 0, axis_weights(), with_margin),
                  std::invalid_argument);
}

TEST_CASE("cosine_softmax_loss with zero margin reduces to softmax over scaled cosine logits") {
  rng::Engine rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const int classes = 2 + static_cast<int>(rng::below(rng, 4));
    const int dim = 2 + static_cast<int>(rng::below(rng, 4));
    const auto w = random_weights(classes, dim, rng);
    Embedding x(dim);
    for (double& v : x) v = rng::uniform(rng, -1, 1);
    if (norm(x) < 1e-3) x[0] += 1.0;
    const int label = static_cast<int>(rng::below(rng, classes));
    const double gamma = trial % 2 ? 64.0 : 4.0;

    std::vector<double> logits(classes);
    for (int j = 0; j < classes; ++j) logits[j] = gamma * cosine_similarity(w.columns[j], x);
    const double direct = logsumexp(logits) - logits[label];
    CHECK(cosine_softmax_loss(x, label, w, ClassifyParams{0.0, gamma}).value ==
          Approx(direct).margin(1e-12));
  }
}

TEST_CASE("increasing the margin never decreases the cosine softmax value") {
  rng::Engine rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const auto w = random_weights(3, 4, rng);
    Embedding x(4);
    for (double& v : x) v = rng::uniform(rng, -1, 1);
    if (norm(x) < 1e-3) x[0] += 1.0;
    double previous = -1.0;
    for (double margin : {0.0, 0.1, 0.3, 0.6}) {
      const double value = cosine_softmax_loss(x, 1, w, ClassifyParams{margin, 16.0}).value;
      CHECK(value >= previous);
      previous = value;
    }
  }
}

TEST_CASE("classification losses stay positive") {
  rng::Engine rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const auto w = random_weights(4, 3, rng);
    Embedding x(3);
    for (double& v : x) v = rng::uniform(rng, -2, 2);
    if (norm(x) < 1e-3) x[0] += 1.0;
    const int label = static_cast<int>(rng::below(rng, 4));
    CHECK(softmax_loss(x, label, w).value >= 0.0);
    CHECK(cosine_softmax_loss(x, label, w, ClassifyParams{0.3, 12.0}).value > 0.0);
    CHECK(cosine_softmax_loss(x, label, w, ClassifyParams{0.0, 12.0}).value >= 0.0);
  }
}

TEST_CASE("logit stabilization survives gamma = 64 with aligned vectors") {
  ClassifierWeights w;
  w.columns = {Embedding{1, 0}, Embedding{0.999, 0.04}};
  const auto result = cosine_softmax_loss(Embedding{1, 0}, 0, w, ClassifyParams{0.3, 64.0});
  CHECK(std::isfinite(result.value));
  CHECK(result.value > 0.0);
}
