#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "comt/duallearn.hpp"
#include "comt/synthgen.hpp"
#include "oracles.hpp"

using namespace comt;

namespace {

// Plain gradient descent on the L2-regularized logistic loss.
Vector fit_logistic(const Matrix& x, const Vector& y, double lambda) {
  Vector w = Vector::Zero(x.cols());
  const double n = static_cast<double>(x.rows());
  for (int it = 0; it < 2000; ++it) {
    Vector g = lambda * w;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double m = y[i] * x.row(i).dot(w);
      g -= (y[i] / (1.0 + std::exp(m))) * x.row(i).transpose() / n;
    }
    w -= 0.5 * g;
  }
  return w;
}

}  // namespace

TEST_CASE("classification balance on a tiny draw") {
  const Dataset ds = gen_classification(7, 4, 2, 2);
  CHECK((ds.labels.array() > 0).count() == 2);
  CHECK((ds.labels.array() < 0).count() == 2);
  CHECK(ds.features.rows() == 4);
  CHECK(ds.features.cols() == 2);
}

TEST_CASE("classification is deterministic per seed") {
  const Dataset a = gen_classification(7, 200, 10, 4);
  const Dataset b = gen_classification(7, 200, 10, 4);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  const Dataset c = gen_classification(8, 200, 10, 4);
  CHECK(a.features != c.features);
}

TEST_CASE("class balance within one instance for odd n") {
  const Dataset ds = gen_classification(1, 101, 3, 4);
  const auto pos = (ds.labels.array() > 0).count();
  CHECK(std::abs(2 * pos - 101) <= 1);
}

TEST_CASE("odd cluster count rejected") {
  CHECK_THROWS_AS(gen_classification(1, 10, 2, 3), Error);
  CHECK_THROWS_AS(gen_classification(1, 3, 2, 4), Error);
}

TEST_CASE("clean classification data is linearly separable enough") {
  const Dataset ds = gen_classification(7, 2000, 10, 4);
  const Matrix train = ds.features.topRows(1000);
  const Vector y_train = ds.labels.head(1000);
  const Vector w = fit_logistic(train, y_train, 1e-3);
  const Vector scores = ds.features.bottomRows(1000) * w;
  CHECK(oracle::brute_auc(ds.labels.tail(1000), scores) > 0.9);
}

TEST_CASE("regression targets are exactly linear") {
  const Dataset ds = gen_regression(3, 500, 10);
  CHECK(r_squared(ds.labels, ds.features * ds.true_w) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(ds.true_w.size() == 10);
  const Dataset again = gen_regression(3, 500, 10);
  CHECK(again.true_w == ds.true_w);
  CHECK(again.features == ds.features);
}

TEST_CASE("single-point regression") {
  const Dataset ds = gen_regression(9, 1, 4);
  REQUIRE(ds.features.rows() == 1);
  CHECK(ds.labels[0] == doctest::Approx(ds.features.row(0).dot(ds.true_w)).epsilon(1e-15));
}

TEST_CASE("zero magnitude corruption is the identity") {
  Dataset ds = gen_regression(2, 50, 3);
  Matrix x = ds.features;
  Vector y = ds.labels;
  corrupt_gaussian(x, y, {0.0, 0.0, 0.0, CorruptionMode::kGaussianFeaturesAndTargets}, 5);
  CHECK(x == ds.features);
  CHECK(y == ds.labels);
}

TEST_CASE("all-zero features stay zero") {
  Matrix x = Matrix::Zero(20, 3);
  Vector y = Vector::Ones(20);
  corrupt_gaussian(x, y, {0.5, 0.0, 0.0, CorruptionMode::kGaussianFeaturesAndTargets}, 5);
  CHECK(x.isZero(0.0));
}

TEST_CASE("feature-only mode leaves targets untouched") {
  Dataset ds = gen_regression(2, 50, 3);
  Matrix x = ds.features;
  Vector y = ds.labels;
  corrupt_gaussian(x, y, {0.5, 0.5, 0.0, CorruptionMode::kGaussianFeaturesOnly}, 5);
  CHECK(y == ds.labels);
  CHECK(x != ds.features);
}

TEST_CASE("noise scale follows the mean absolute magnitude") {
  const Dataset ds = gen_regression(4, 20000, 5);
  Matrix x = ds.features;
  Vector y = ds.labels;
  corrupt_gaussian(x, y, {0.3, 0.2, 0.0, CorruptionMode::kGaussianFeaturesAndTargets}, 6);
  const double eps_x = ds.features.cwiseAbs().sum() / static_cast<double>(ds.features.size());
  const double eps_y = ds.labels.cwiseAbs().sum() / static_cast<double>(ds.labels.size());
  const Matrix dx = x - ds.features;
  const Vector dy = y - ds.labels;
  const double sd_x = std::sqrt(dx.array().square().mean() - dx.mean() * dx.mean());
  const double sd_y = std::sqrt(dy.array().square().mean() - dy.mean() * dy.mean());
  CHECK(sd_x == doctest::Approx(0.3 * eps_x).epsilon(0.05));
  CHECK(sd_y == doctest::Approx(0.2 * eps_y).epsilon(0.05));
}

TEST_CASE("label flipping changes exactly round(fraction n) entries") {
  const Dataset ds = gen_classification(1, 10, 2, 2);
  const Vector flipped = flip_labels(ds.labels, 0.4, 9);
  CHECK((flipped.array() != ds.labels.array()).count() == 4);
  CHECK(flip_labels(ds.labels, 0.0, 9) == ds.labels);
  CHECK(flip_labels(ds.labels, 1.0, 9) == -ds.labels);
  CHECK_THROWS_AS(flip_labels(ds.labels, 1.5, 9), Error);
  CHECK_THROWS_AS(flip_labels(ds.labels, -0.1, 9), Error);

  for (int n : {7, 33, 100}) {
    const Dataset big = gen_classification(2, n, 2, 2);
    for (double f : {0.1, 0.25, 0.5}) {
      const Vector out = flip_labels(big.labels, f, 3);
      CHECK((out.array() != big.labels.array()).count() == std::llround(f * n));
      CHECK(((out.array() == big.labels.array()) || (out.array() == -big.labels.array())).all());
    }
  }
}

TEST_CASE("split arithmetic") {
  const Dataset ds = gen_classification(1, 1000, 3, 4);
  const SplitResult s = split_and_shard(ds.features, ds.labels, ds.task, {0.4, 0.01, 5, 5});
  REQUIRE(s.shards.size() == 5);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(s.shards[k].size() == 80);
    CHECK(s.trusted[k].size() == 2);
    CHECK(s.shards[k].agent_id == static_cast<int>(k));
  }
  CHECK(s.test_features.rows() == 590);

  std::set<Eigen::Index> seen;
  for (const auto& rows : s.shard_rows) seen.insert(rows.begin(), rows.end());
  for (const auto& rows : s.trusted_rows) seen.insert(rows.begin(), rows.end());
  seen.insert(s.test_rows.begin(), s.test_rows.end());
  CHECK(seen.size() == 1000);
}

TEST_CASE("single agent split") {
  const Dataset ds = gen_regression(1, 300, 3);
  const SplitResult s = split_and_shard(ds.features, ds.labels, ds.task, {0.4, 0.01, 5, 1});
  REQUIRE(s.shards.size() == 1);
  CHECK(s.shards[0].size() == 120);
  CHECK(s.trusted[0].size() == 3);
}

TEST_CASE("split is deterministic and seed-dependent") {
  const Dataset ds = gen_regression(1, 300, 3);
  const SplitResult a = split_and_shard(ds.features, ds.labels, ds.task, {0.4, 0.05, 5, 3});
  const SplitResult b = split_and_shard(ds.features, ds.labels, ds.task, {0.4, 0.05, 5, 3});
  const SplitResult c = split_and_shard(ds.features, ds.labels, ds.task, {0.4, 0.05, 6, 3});
  CHECK(a.shard_rows == b.shard_rows);
  CHECK(a.test_rows == b.test_rows);
  CHECK(a.shard_rows != c.shard_rows);
}

TEST_CASE("empty trusted shard is insufficient data") {
  const Dataset ds = gen_regression(1, 100, 3);
  try {
    split_and_shard(ds.features, ds.labels, ds.task, {0.4, 0.01, 5, 5});
    FAIL("expected InsufficientData");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInsufficientData);
  }
}

TEST_CASE("corruption touches training shards only") {
  const Dataset clean = gen_regression(12, 1000, 4);
  SplitResult s = split_and_shard(clean.features, clean.labels, clean.task, {0.4, 0.02, 8, 4});
  corrupt_shards(s.shards, {0.5, 0.5, 0.0, CorruptionMode::kGaussianFeaturesAndTargets}, 13);

  // Regenerate from the seed and compare against the provenance rows.
  const Dataset regen = gen_regression(12, 1000, 4);
  for (std::size_t k = 0; k < s.trusted.size(); ++k)
    for (std::size_t r = 0; r < s.trusted_rows[k].size(); ++r) {
      const auto src = s.trusted_rows[k][r];
      CHECK(s.trusted[k].features.row(static_cast<Eigen::Index>(r)) == regen.features.row(src));
      CHECK(s.trusted[k].labels[static_cast<Eigen::Index>(r)] == regen.labels[src]);
    }
  for (std::size_t r = 0; r < s.test_rows.size(); ++r) {
    CHECK(s.test_features.row(static_cast<Eigen::Index>(r)) == regen.features.row(s.test_rows[r]));
    CHECK(s.test_labels[static_cast<Eigen::Index>(r)] == regen.labels[s.test_rows[r]]);
  }
  bool any_changed = false;
  for (std::size_t k = 0; k < s.shards.size(); ++k)
    any_changed |= s.shards[k].features.row(0) != regen.features.row(s.shard_rows[k][0]);
  CHECK(any_changed);
}

TEST_CASE("label-flip corruption rejects regression shards") {
  const Dataset ds = gen_regression(1, 200, 3);
  SplitResult s = split_and_shard(ds.features, ds.labels, ds.task, {0.4, 0.05, 5, 2});
  CHECK_THROWS_AS(corrupt_shards(s.shards, {0.0, 0.0, 0.4, CorruptionMode::kLabelFlipOnly}, 1), Error);
}

TEST_CASE("derived seeds separate purposes and agents") {
  CHECK(derive_seed(1, "a", 0) == derive_seed(1, "a", 0));
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "b", 0));
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "a", 1));
  CHECK(derive_seed(1, "a", 0) != derive_seed(2, "a", 0));
}
