#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dlm/metrics.hpp"
#include "dlm/rng.hpp"
#include "support/oracles.hpp"

using namespace dlm;

TEST_CASE("perfect separation gives AUC 1") {
  std::vector<int> labels = {0, 0, 1, 1};
  Eigen::MatrixXd probs(4, 2);
  probs << 0.9, 0.1, 0.8, 0.2, 0.1, 0.9, 0.2, 0.8;
  CHECK(roc_auc_ovo(labels, probs) == 1.0);
}

TEST_CASE("single class is rejected") {
  std::vector<int> labels = {1, 1, 1};
  Eigen::MatrixXd probs = Eigen::MatrixXd::Constant(3, 2, 0.5);
  CHECK_THROWS_AS(roc_auc_ovo(labels, probs), Error);
}

TEST_CASE("uniform random scores sit near half") {
  Rng rng(2718);
  const int n = 10000;
  std::vector<int> labels(n);
  Eigen::MatrixXd probs(n, 2);
  for (int i = 0; i < n; ++i) {
    labels[i] = i % 2;
    const double p = rng.uniform01();
    probs(i, 0) = p;
    probs(i, 1) = 1 - p;
  }
  CHECK(std::abs(roc_auc_ovo(labels, probs) - 0.5) < 0.02);
}

TEST_CASE("three-class case equals the brute-force oracle to 1e-12") {
  Rng rng(31415);
  std::vector<int> labels(30);
  Eigen::MatrixXd probs(30, 3);
  for (int i = 0; i < 30; ++i) {
    labels[i] = static_cast<int>(rng.below(3));
    double s = 0;
    for (int c = 0; c < 3; ++c) {
      probs(i, c) = rng.uniform01();
      s += probs(i, c);
    }
    probs.row(i) /= s;
  }
  CHECK(std::abs(roc_auc_ovo(labels, probs) - oracle::brute_roc_auc_ovo(labels, probs)) <
        1e-12);
}

TEST_CASE("hundred random instances equal the oracle, ties included") {
  Rng rng(16180);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.range_int(10, 200);
    const int k = rng.range_int(2, 5);
    std::vector<int> labels(n);
    Eigen::MatrixXd probs(n, k);
    bool ok = false;
    while (!ok) {
      std::set<int> seen;
      for (int i = 0; i < n; ++i) {
        labels[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
        seen.insert(labels[i]);
      }
      ok = seen.size() >= 2;
    }
    for (int i = 0; i < n; ++i) {
      double s = 0;
      for (int c = 0; c < k; ++c) {
        // Quantized probabilities force plenty of ties.
        probs(i, c) = std::floor(rng.uniform01() * 8) / 8.0 + 0.01;
        s += probs(i, c);
      }
      probs.row(i) /= s;
    }
    CHECK(std::abs(roc_auc_ovo(labels, probs) - oracle::brute_roc_auc_ovo(labels, probs)) <
          1e-12);
  }
}

TEST_CASE("nrmse hand fixtures") {
  // Fixture 1: identity.
  PositionMap truth, imputed;
  truth[{0, 0}] = CellValue::numeric(2);
  truth[{1, 0}] = CellValue::numeric(4);
  imputed = truth;
  CHECK(nrmse(truth, imputed, {10.0}) == 0.0);

  // Fixture 2: range 10, errors of 1 -> 0.1.
  imputed[{0, 0}] = CellValue::numeric(3);
  imputed[{1, 0}] = CellValue::numeric(5);
  CHECK(nrmse(truth, imputed, {10.0}) == doctest::Approx(0.1));

  // Fixture 3: zero range -> divisor 1.
  CHECK(nrmse(truth, imputed, {0.0}) == doctest::Approx(1.0));

  // Fixture 4: two columns averaged.
  truth[{0, 1}] = CellValue::numeric(0);
  imputed[{0, 1}] = CellValue::numeric(1);
  // col0 nrmse 0.1, col1 rmse 1 / range 2 = 0.5 -> mean 0.3
  CHECK(nrmse(truth, imputed, {10.0, 2.0}) == doctest::Approx(0.3));

  // Fixture 5: categorical positions are ignored by nrmse, scored separately.
  truth[{1, 1}] = CellValue::categorical("a");
  imputed[{1, 1}] = CellValue::categorical("b");
  CHECK(nrmse(truth, imputed, {10.0, 2.0}) == doctest::Approx(0.3));
  CHECK(categorical_error_rate(truth, imputed) == doctest::Approx(1.0));
  imputed[{1, 1}] = CellValue::categorical("a");
  CHECK(categorical_error_rate(truth, imputed) == doctest::Approx(0.0));
}

TEST_CASE("nrmse position mismatch") {
  PositionMap truth, imputed;
  truth[{0, 0}] = CellValue::numeric(1);
  imputed[{0, 1}] = CellValue::numeric(1);
  CHECK_THROWS_AS(nrmse(truth, imputed, {1.0, 1.0}), Error);
}

TEST_CASE("nrmse is scale invariant") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    PositionMap truth, imputed;
    const int n = rng.range_int(3, 10);
    double lo = 1e18, hi = -1e18;
    for (int i = 0; i < n; ++i) {
      const double tv = rng.normal(0, 5);
      truth[{i, 0}] = CellValue::numeric(tv);
      imputed[{i, 0}] = CellValue::numeric(tv + rng.normal(0, 1));
      lo = std::min(lo, tv);
      hi = std::max(hi, tv);
    }
    const double range = hi - lo;
    const double base = nrmse(truth, imputed, {range});
    const double c = 7.25;
    PositionMap truth_s, imputed_s;
    for (const auto& [pos, v] : truth) truth_s[pos] = CellValue::numeric(v.number() * c);
    for (const auto& [pos, v] : imputed) imputed_s[pos] = CellValue::numeric(v.number() * c);
    const double scaled = nrmse(truth_s, imputed_s, {range * c});
    CHECK(scaled == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("topk accuracy") {
  std::vector<std::vector<int>> ranked = {{3, 1, 2, 0, 4}, {0, 3, 2, 1, 4}};
  std::vector<int> truths = {3, 2};
  CHECK(topk_accuracy(ranked, truths, 1) == doctest::Approx(0.5));
  CHECK(topk_accuracy(ranked, truths, 3) == doctest::Approx(1.0));
  CHECK_THROWS_AS(topk_accuracy(ranked, truths, 6), Error);

  // Truth always at rank 3 (index 2).
  std::vector<std::vector<int>> r3 = {{9, 8, 5, 1, 0}, {7, 6, 4, 2, 3}};
  std::vector<int> t3 = {5, 4};
  CHECK(topk_accuracy(r3, t3, 1) == 0.0);
  CHECK(topk_accuracy(r3, t3, 5) == 1.0);
}

TEST_CASE("random ranking hits top-k at rate k/n") {
  Rng rng(555);
  const int n_sectors = 10, trials = 10000;
  for (int k : {1, 3}) {
    int hits = 0;
    for (int i = 0; i < trials; ++i) {
      const auto perm = rng.permutation(n_sectors);
      const int truth = static_cast<int>(rng.below(n_sectors));
      for (int j = 0; j < k; ++j) hits += (perm[j] == truth);
    }
    const double expect = static_cast<double>(k) / n_sectors;
    const double got = static_cast<double>(hits) / trials;
    CHECK(std::abs(got - expect) < 0.02);
  }
}

TEST_CASE("stratified folds balance classes within one sample") {
  Rng rng(777);
  std::vector<int> labels;
  for (int i = 0; i < 103; ++i) labels.push_back(static_cast<int>(rng.below(3)));
  const int k = 10;
  const auto fold_of = stratified_folds(labels, k, 42);
  for (int cls = 0; cls < 3; ++cls) {
    std::vector<int> counts(k, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) counts[fold_of[i]] += 1;
    }
    const int lo = *std::min_element(counts.begin(), counts.end());
    const int hi = *std::max_element(counts.begin(), counts.end());
    CHECK(hi - lo <= 1);
  }
  CHECK_THROWS_AS(stratified_folds(labels, 1, 0), Error);
  CHECK_THROWS_AS(stratified_folds(std::vector<int>{0, 1}, 5, 0), Error);
}
