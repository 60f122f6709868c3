#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "volcano/ensemble.hpp"
#include "volcano/errors.hpp"

using namespace volcano;

namespace {

Predictions probs(std::vector<std::vector<double>> rows) {
  Predictions p;
  p.rows = rows.size();
  p.cols = rows.front().size();
  for (const auto& r : rows) p.values.insert(p.values.end(), r.begin(), r.end());
  return p;
}

Configuration cfg(double x) { return {{"x", x}}; }

std::vector<double> scores_of(const ModelPool& pool) {
  std::vector<double> out;
  for (const auto& e : pool.entries()) out.push_back(e.score);
  return out;
}

}  // namespace

TEST_CASE("pool: eviction and dedup") {
  ModelPool pool(3);
  const auto p = probs({{0.5, 0.5}});
  pool.record("knn", cfg(1), p, 0.7);
  CHECK(pool.size() == 1);
  pool.record("knn", cfg(2), p, 0.8);
  pool.record("knn", cfg(3), p, 0.6);
  pool.record("knn", cfg(4), p, 0.9);
  auto s = scores_of(pool);
  std::sort(s.begin(), s.end());
  CHECK(s == std::vector<double>{0.7, 0.8, 0.9});

  pool.record("knn", cfg(4), p, 0.95);
  CHECK(pool.size() == 3);
  pool.record("knn", cfg(1), p, 0.1);
  s = scores_of(pool);
  CHECK(std::count(s.begin(), s.end(), 0.7) == 1);

  pool.record("tree", cfg(10), p, 0.2);
  CHECK(pool.size() == 4);
  CHECK_THROWS_AS(pool.record("tree", cfg(9), probs({{0.5, 0.5}, {0.1, 0.9}}), 0.3), EnsembleError);
}

TEST_CASE("select: single entry") {
  ModelPool pool;
  pool.record("a", cfg(1), probs({{0.9, 0.1}, {0.2, 0.8}}), 1.0);
  const std::vector<double> labels{0, 1};
  const auto w = ensemble_select(pool, kDefaultEnsembleSize, Metric::balanced_accuracy, labels);
  CHECK(kDefaultEnsembleSize == 50);
  CHECK(w.counts == std::vector<std::size_t>{50});
  CHECK(w.size == 50);
  CHECK(w.validation_score == 1.0);
}

TEST_CASE("select: complementary classifiers") {
  const std::vector<double> labels{0, 0, 1, 1};
  // a is right on rows 0 and 2, b on rows 1 and 3; both are confident when right
  const auto a = probs({{0.9, 0.1}, {0.4, 0.6}, {0.1, 0.9}, {0.6, 0.4}});
  const auto b = probs({{0.4, 0.6}, {0.9, 0.1}, {0.6, 0.4}, {0.1, 0.9}});
  CHECK(score(Metric::balanced_accuracy, a, labels) == 0.5);
  CHECK(score(Metric::balanced_accuracy, b, labels) == 0.5);
  ModelPool pool;
  pool.record("a", cfg(1), a, 0.5);
  pool.record("b", cfg(2), b, 0.5);
  const auto w = ensemble_select(pool, 50, Metric::balanced_accuracy, labels);
  CHECK(w.validation_score > 0.5);
  CHECK(w.counts[0] > 0);
  CHECK(w.counts[1] > 0);
  CHECK(std::accumulate(w.counts.begin(), w.counts.end(), std::size_t{0}) == w.size);
}

TEST_CASE("select: never worse than the best entry") {
  Rng rng(3);
  for (int t = 0; t < 1000; ++t) {
    const bool regression = rng.uniform() < 0.3;
    const std::size_t rows = 5 + rng.index(20);
    const std::size_t cols = regression ? 1 : 2 + rng.index(3);
    std::vector<double> labels;
    for (std::size_t r = 0; r < rows; ++r)
      labels.push_back(regression ? rng.normal() : static_cast<double>(rng.index(cols)));
    const Metric metric = regression ? Metric::mse : Metric::balanced_accuracy;
    ModelPool pool(10);
    double best = -1e300;
    const std::size_t entries = 1 + rng.index(6);
    for (std::size_t e = 0; e < entries; ++e) {
      Predictions p;
      p.rows = rows;
      p.cols = cols;
      for (std::size_t i = 0; i < rows * cols; ++i) p.values.push_back(regression ? rng.normal() : rng.uniform());
      const double value = score(metric, p, labels);
      best = std::max(best, regression ? -value : value);
      pool.record("m", cfg(static_cast<double>(e)), p, 0.0);
    }
    const auto w = ensemble_select(pool, 1 + rng.index(20), metric, labels);
    const double got = regression ? -w.validation_score : w.validation_score;
    REQUIRE(got >= best - 1e-12);
    REQUIRE(std::accumulate(w.counts.begin(), w.counts.end(), std::size_t{0}) == w.size);
  }
}

TEST_CASE("select: errors") {
  ModelPool empty;
  const std::vector<double> labels{0, 1};
  CHECK_THROWS_AS(ensemble_select(empty, 5, Metric::balanced_accuracy, labels), EnsembleError);
  ModelPool pool;
  pool.record("a", cfg(1), probs({{0.9, 0.1}, {0.2, 0.8}}), 1.0);
  CHECK_THROWS_AS(ensemble_select(pool, 0, Metric::balanced_accuracy, labels), EnsembleError);
  CHECK_THROWS_AS(ensemble_select(pool, 5, Metric::mse, labels), EnsembleError);
}

TEST_CASE("predict") {
  ModelPool pool;
  const auto p = probs({{0.2, 0.8}, {0.6, 0.4}});
  const auto q = probs({{0.6, 0.4}, {0.2, 0.8}});
  pool.record("a", cfg(1), p, 0.5);
  pool.record("b", cfg(2), q, 0.4);

  EnsembleWeights only_a{{3, 0}, 3, 0.0};
  CHECK(ensemble_predict(pool, only_a, {p, q}).values == p.values);

  EnsembleWeights both{{2, 2}, 4, 0.0};
  const auto avg = ensemble_predict(pool, both, {p, q});
  for (std::size_t i = 0; i < avg.values.size(); ++i)
    CHECK(avg.values[i] == doctest::Approx((p.values[i] + q.values[i]) / 2));
  CHECK(avg.labels() == std::vector<double>{1, 1});

  ModelPool swapped;
  swapped.record("b", cfg(2), q, 0.4);
  swapped.record("a", cfg(1), p, 0.5);
  EnsembleWeights w1{{1, 3}, 4, 0.0}, w2{{3, 1}, 4, 0.0};
  CHECK(ensemble_predict(pool, w1, {p, q}).values == ensemble_predict(swapped, w2, {q, p}).values);

  CHECK_THROWS_AS(ensemble_predict(pool, both, {p}), EnsembleError);
  CHECK_THROWS_AS(ensemble_predict(pool, both, {p, Predictions{}}), EnsembleError);
}

TEST_CASE("pool json") {
  ModelPool pool;
  pool.record("a", cfg(1), probs({{0.9, 0.1}}), 1.0);
  const auto j = to_json(pool, EnsembleWeights{{5}, 5, 1.0});
  CHECK(j.dump().find("\"a\"") != std::string::npos);
}
