#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "gleason/errors.hpp"
#include "gleason/metrics.hpp"
#include "oracles.hpp"

using namespace gleason;
using namespace gleason::metrics;

namespace {

ConfusionMatrix from_rows(std::size_t k, std::vector<std::uint64_t> v) {
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) cm.at(i, j) = v[i * k + j];
  return cm;
}

}  // namespace

TEST_CASE("two-class hand count") {
  std::vector<int> truth, pred;
  auto push = [&](int t, int p, int n) {
    for (int i = 0; i < n; ++i) {
      truth.push_back(t);
      pred.push_back(p);
    }
  };
  push(1, 1, 8);  // TP
  push(0, 1, 2);  // FP
  push(1, 0, 1);  // FN
  push(0, 0, 9);  // TN
  const auto cm = build_confusion(pred, truth, 2);
  CHECK(cm.at(0, 0) == 9);
  CHECK(cm.at(0, 1) == 2);
  CHECK(cm.at(1, 0) == 1);
  CHECK(cm.at(1, 1) == 8);

  const auto m = per_class_metrics(cm)[1];
  CHECK(m.tp == 8);
  CHECK(m.fp == 2);
  CHECK(m.fn == 1);
  CHECK(m.tn == 9);
  CHECK(std::abs(m.precision - 0.8000) < 5e-5);
  CHECK(std::abs(m.recall - 0.8889) < 5e-5);
  CHECK(std::abs(m.f1 - 0.8421) < 5e-5);
  CHECK(std::abs(m.accuracy - 0.8500) < 5e-5);
}

TEST_CASE("perfect prediction") {
  std::vector<int> labels{0, 1, 2, 3, 3, 2, 1, 0, 2, 2};
  const auto cm = build_confusion(labels, labels, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      if (i != j) CHECK(cm.at(i, j) == 0);
  for (const auto& m : per_class_metrics(cm)) {
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
    CHECK(m.accuracy == 1.0);
  }
  const auto n = normalize_rows(cm);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(n.values[i * 4 + j] == (i == j ? 1.0 : 0.0));
}

TEST_CASE("zero support and zero predictions are flagged") {
  // class 3 never occurs and is never predicted
  const auto cm = from_rows(4, {5, 1, 0, 0, 0, 4, 1, 0, 1, 0, 6, 0, 0, 0, 0, 0});
  const auto m = per_class_metrics(cm)[3];
  CHECK(m.precision == 0.0);
  CHECK(m.recall == 0.0);
  CHECK(m.precision_undefined);
  CHECK(m.recall_undefined);
  CHECK(m.f1_undefined);
  CHECK_FALSE(per_class_metrics(cm)[0].precision_undefined);

  const auto n = normalize_rows(cm);
  CHECK(n.zero_support[3]);
  CHECK_FALSE(n.zero_support[0]);

  const auto j = report(cm, default_class_names());
  CHECK(j["flags"].size() == 2);
  CHECK(j["per_class"][3]["recall_undefined"] == true);
}

TEST_CASE("label tokens") {
  std::vector<std::string> truth{"benign", "g3", "g4", "g5"};
  std::vector<std::string> pred{"benign", "g4", "g4", "g5"};
  const auto cm = build_confusion(pred, truth);
  CHECK(cm.at(1, 2) == 1);
  CHECK(cm.trace() == 3);
  pred[2] = "g6";
  try {
    build_confusion(pred, truth);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }
  std::vector<int> a{0, 1}, b{0};
  CHECK_THROWS_AS(build_confusion(a, b, 2), InputError);
  std::vector<int> c{0, 4};
  CHECK_THROWS_AS(build_confusion(c, c, 4), InputError);
}

TEST_CASE("empty input") {
  const auto cm = build_confusion(std::vector<int>{}, std::vector<int>{}, 4);
  CHECK(cm.total() == 0);
  CHECK_THROWS_AS(report(cm, default_class_names()), InputError);
  CHECK_THROWS_AS(weighted_average(per_class_metrics(cm), cm.supports()), InputError);
}

TEST_CASE("Gleason2019 class supports give the expected weights") {
  const std::vector<std::uint64_t> supports{2767, 10073, 15502, 312};
  const auto w = support_weights(supports);
  const double expected[4] = {0.0966, 0.3515, 0.5410, 0.0109};
  for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(w[c] - expected[c]) <= 5e-5);
  CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(support_weights(std::vector<std::uint64_t>{0, 0}), InputError);
}

TEST_CASE("uniform support makes weighted equal macro") {
  const auto cm = from_rows(4, {7, 2, 1, 0, 1, 6, 2, 1, 0, 3, 5, 2, 2, 0, 1, 7});
  const auto pc = per_class_metrics(cm);
  const auto ws = weighted_average(pc, cm.supports());
  double p = 0, r = 0, f = 0;
  for (const auto& m : pc) {
    p += m.precision / 4;
    r += m.recall / 4;
    f += m.f1 / 4;
  }
  CHECK(ws.precision == doctest::Approx(p).epsilon(1e-14));
  CHECK(ws.recall == doctest::Approx(r).epsilon(1e-14));
  CHECK(ws.f1 == doctest::Approx(f).epsilon(1e-14));
}

TEST_CASE("imbalanced two-class fixture") {
  // 99 large-class samples all correct, the single small-class sample missed
  const auto cm = from_rows(2, {99, 0, 1, 0});
  const auto pc = per_class_metrics(cm);
  const auto ws = weighted_average(pc, cm.supports());
  CHECK(ws.weights[0] == doctest::Approx(0.99));
  CHECK(std::abs(ws.f1 - 0.99) < 0.01);
  CHECK(std::abs((pc[0].f1 + pc[1].f1) / 2 - 0.5) < 0.01);
  CHECK(pc[1].f1 == 0.0);
}

TEST_CASE("row normalization") {
  const auto one = from_rows(4, {1, 1, 1, 1, 0, 2, 0, 0, 0, 0, 3, 0, 0, 0, 0, 4});
  const auto n = normalize_rows(one);
  for (std::size_t j = 0; j < 4; ++j) CHECK(n.values[j] == 0.25);
  CHECK(n.values[5] == 1.0);

  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> cnt(0, 50);
  for (int trial = 0; trial < 100; ++trial) {
    ConfusionMatrix cm(4);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) cm.at(i, j) = static_cast<std::uint64_t>(cnt(rng) * (trial % 7 != i));
    const auto r = normalize_rows(cm);
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 4; ++j) s += r.values[i * 4 + j];
      if (r.zero_support[i])
        CHECK(s == 0.0);
      else
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("identities and brute-force equivalence on random fixtures") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 500; ++trial) {
    CAPTURE(trial);
    std::uniform_int_distribution<int> len(1, 50), cls(0, 3), noise(0, 2);
    const int n = len(rng);
    std::vector<int> truth(n), pred(n);
    for (int i = 0; i < n; ++i) {
      truth[i] = cls(rng);
      pred[i] = noise(rng) == 0 ? cls(rng) : truth[i];
    }
    const auto cm = build_confusion(pred, truth, 4);
    const auto pc = per_class_metrics(cm);
    const auto ws = weighted_average(pc, cm.supports());
    const auto ref = oracle::enumerate_metrics(truth, pred, 4);

    CHECK(cm.total() == static_cast<std::uint64_t>(n));
    std::uint64_t tp = 0;
    for (std::size_t c = 0; c < 4; ++c) {
      const auto& m = pc[c];
      tp += m.tp;
      CHECK(m.tp + m.fp + m.fn + m.tn == cm.total());
      CHECK(m.precision == ref.precision[c]);
      CHECK(m.recall == ref.recall[c]);
      CHECK(std::abs(m.f1 - ref.f1[c]) <= 1e-15);
      CHECK(m.accuracy == ref.accuracy[c]);
      if (!m.f1_undefined) {
        CHECK(m.f1 >= std::min(m.precision, m.recall) - 1e-15);
        CHECK(m.f1 <= std::max(m.precision, m.recall) + 1e-15);
      }
    }
    CHECK(tp == cm.trace());
    CHECK(ws.overall_accuracy == ref.overall);
    CHECK(std::abs(ws.recall - ws.overall_accuracy) <= 1e-12);
  }
}

TEST_CASE("shards sum to the full matrix") {
  std::vector<int> t{0, 1, 2, 3, 0, 1}, p{0, 2, 2, 3, 1, 1};
  auto a = build_confusion(std::span(p).first(3), std::span(t).first(3), 4);
  a += build_confusion(std::span(p).last(3), std::span(t).last(3), 4);
  const auto full = build_confusion(p, t, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(a.at(i, j) == full.at(i, j));
}

TEST_CASE("csv and json outputs") {
  const auto cm = from_rows(4, {3, 1, 0, 0, 0, 2, 0, 0, 0, 0, 4, 0, 0, 0, 1, 1});
  const auto names = default_class_names();
  CHECK(counts_csv(cm, names) ==
        "true\\pred,benign,g3,g4,g5\nbenign,3,1,0,0\ng3,0,2,0,0\ng4,0,0,4,0\ng5,0,0,1,1\n");
  const auto norm = normalized_csv(cm, names);
  CHECK(norm.find("benign,0.7500,0.2500,0.0000,0.0000") != std::string::npos);
  const auto j = report(cm, names);
  CHECK(j["num_samples"] == 12);
  CHECK(j["overall_accuracy"] == doctest::Approx(0.8333));
  CHECK(j["weighted"]["recall"] == j["overall_accuracy"]);
  CHECK(j["flags"].empty());
}
