#include "comt/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace comt {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double mean_abs(const auto& values) {
  if (values.size() == 0) return 0.0;
  return values.cwiseAbs().sum() / static_cast<double>(values.size());
}

Eigen::Index take_count(double fraction, Eigen::Index n) {
  // Nudge so that e.g. 0.005 * 5000 lands on 25 rather than 24.999...
  return static_cast<Eigen::Index>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

Matrix cluster_means(std::mt19937_64& rng, Eigen::Index d, int n_clusters, double spacing) {
  const double radius = spacing / std::sqrt(2.0);
  Matrix means = Matrix::Zero(n_clusters, d);
  std::normal_distribution<double> normal;
  for (int c = 0; c < n_clusters; ++c) {
    if (c < d) {
      means(c, c) = radius;
      continue;
    }
    Vector dir(d);
    for (auto& v : dir) v = normal(rng);
    means.row(c) = radius * dir.normalized().transpose();
  }
  return means;
}

}  // namespace

std::string_view to_string(CorruptionMode mode) {
  switch (mode) {
    case CorruptionMode::kGaussianFeaturesAndTargets: return "gaussian";
    case CorruptionMode::kGaussianFeaturesOnly: return "gaussian-features";
    case CorruptionMode::kLabelFlipOnly: return "label-flip";
  }
  return "unknown";
}

CorruptionMode parse_corruption_mode(std::string_view text) {
  if (text == "gaussian") return CorruptionMode::kGaussianFeaturesAndTargets;
  if (text == "gaussian-features") return CorruptionMode::kGaussianFeaturesOnly;
  if (text == "label-flip") return CorruptionMode::kLabelFlipOnly;
  fail(ErrorCode::kInvalidArgument, "unknown corruption mode '" + std::string(text) + "'");
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t agent) {
  // FNV-1a over the tag keeps the derivation independent of std::hash.
  std::uint64_t tag = 0xCBF29CE484222325ULL;
  for (unsigned char ch : purpose) {
    tag ^= ch;
    tag *= 0x100000001B3ULL;
  }
  return splitmix64(splitmix64(seed ^ splitmix64(tag)) + agent);
}

Dataset gen_classification(std::uint64_t seed, Eigen::Index n, Eigen::Index d, int n_clusters,
                           const ClusterGeometry& geometry) {
  if (n_clusters < 2 || n_clusters % 2 != 0)
    fail(ErrorCode::kInvalidArgument, "n_clusters must be a positive even number");
  if (n < n_clusters) fail(ErrorCode::kInvalidArgument, "need at least one point per cluster");
  if (d < 1) fail(ErrorCode::kInvalidArgument, "d must be at least 1");

  std::mt19937_64 rng(derive_seed(seed, "clusters"));
  const Matrix means = cluster_means(rng, d, n_clusters, geometry.spacing);
  std::normal_distribution<double> normal(0.0, geometry.stddev);

  const int half = n_clusters / 2;
  Dataset out;
  out.task = TaskKind::kBinaryClassification;
  out.features.resize(n, d);
  out.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    // Alternate classes so the balance is within one instance, then cycle
    // through that class's clusters.
    const bool positive = (i % 2 == 0);
    const int cluster = static_cast<int>((i / 2) % half) + (positive ? 0 : half);
    out.labels[i] = positive ? 1.0 : -1.0;
    for (Eigen::Index j = 0; j < d; ++j) out.features(i, j) = means(cluster, j) + normal(rng);
  }
  return out;
}

Dataset gen_regression(std::uint64_t seed, Eigen::Index n, Eigen::Index d, const ClusterGeometry& geometry) {
  if (n < 1 || d < 1) fail(ErrorCode::kInvalidArgument, "n and d must be at least 1");
  ClusterGeometry geo = geometry;
  Dataset out;
  if (n >= geo.n_clusters) {
    out = gen_classification(seed, n, d, geo.n_clusters, geo);
  } else {
    // Too few points for the cluster layout: draw around the first cluster.
    out = gen_classification(seed, 2, d, 2, geo);
    std::mt19937_64 rng(derive_seed(seed, "small-regression"));
    std::normal_distribution<double> normal(0.0, geo.stddev);
    Matrix x(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) x(i, j) = out.features(0, j) + normal(rng);
    out.features = std::move(x);
  }
  out.task = TaskKind::kRegression;

  std::mt19937_64 rng(derive_seed(seed, "true-w"));
  std::normal_distribution<double> normal;
  out.true_w.resize(d);
  for (auto& v : out.true_w) v = normal(rng);
  out.labels = out.features * out.true_w;
  return out;
}

void corrupt_gaussian(Matrix& features, Vector& targets, const CorruptionSpec& spec, std::uint64_t seed) {
  if (spec.mode == CorruptionMode::kLabelFlipOnly)
    fail(ErrorCode::kInvalidArgument, "corrupt_gaussian needs a Gaussian corruption mode");
  if (spec.theta_x < 0.0 || spec.theta_y < 0.0) fail(ErrorCode::kInvalidArgument, "noise magnitudes must be >= 0");

  std::mt19937_64 rng(derive_seed(seed, "gaussian-noise"));
  std::normal_distribution<double> normal;

  const double eps_x = mean_abs(features);
  const double scale_x = eps_x * spec.theta_x;
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      const double zeta = normal(rng);
      features(i, j) += zeta * scale_x;
    }

  if (spec.mode != CorruptionMode::kGaussianFeaturesAndTargets) return;
  const double eps_y = mean_abs(targets);
  const double scale_y = eps_y * spec.theta_y;
  for (auto& y : targets) {
    const double zeta = normal(rng);
    y += zeta * scale_y;
  }
}

Vector flip_labels(const Vector& labels, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) fail(ErrorCode::kInvalidArgument, "flip fraction must lie in [0,1]");
  const auto n = static_cast<std::size_t>(labels.size());
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(derive_seed(seed, "label-flip"));
  std::shuffle(order.begin(), order.end(), rng);

  Vector out = labels;
  for (std::size_t i = 0; i < count; ++i) out[order[i]] = -out[order[i]];
  return out;
}

SplitResult split_and_shard(const Matrix& features, const Vector& labels, TaskKind task, const SplitSpec& spec) {
  if (features.rows() != labels.size()) fail(ErrorCode::kDimensionMismatch, "feature rows and labels differ");
  if (spec.num_agents < 1) fail(ErrorCode::kInvalidArgument, "need at least one agent");
  if (!(spec.train_fraction > 0.0 && spec.trusted_fraction > 0.0 &&
        spec.train_fraction + spec.trusted_fraction < 1.0))
    fail(ErrorCode::kInvalidArgument, "train and trusted fractions must be positive and sum below 1");

  const Eigen::Index n = features.rows();
  const Eigen::Index k = spec.num_agents;
  const Eigen::Index train_total = take_count(spec.train_fraction, n);
  const Eigen::Index trusted_total = take_count(spec.trusted_fraction, n);
  const Eigen::Index per_shard = train_total / k;
  const Eigen::Index per_trusted = trusted_total / k;
  if (per_trusted < 1) fail(ErrorCode::kInsufficientData, "a trusted shard would be empty");
  if (per_shard < 1) fail(ErrorCode::kInsufficientData, "a training shard would be empty");

  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::mt19937_64 rng(derive_seed(spec.seed, "split"));
  std::shuffle(perm.begin(), perm.end(), rng);

  auto gather = [&](Eigen::Index begin, Eigen::Index count, Matrix& x, Vector& y, std::vector<Eigen::Index>& rows) {
    x.resize(count, features.cols());
    y.resize(count);
    rows.resize(static_cast<std::size_t>(count));
    for (Eigen::Index r = 0; r < count; ++r) {
      const Eigen::Index src = perm[static_cast<std::size_t>(begin + r)];
      x.row(r) = features.row(src);
      y[r] = labels[src];
      rows[static_cast<std::size_t>(r)] = src;
    }
  };

  SplitResult out;
  out.shard_rows.resize(static_cast<std::size_t>(k));
  out.trusted_rows.resize(static_cast<std::size_t>(k));
  for (Eigen::Index a = 0; a < k; ++a) {
    LabeledShard shard;
    shard.agent_id = static_cast<int>(a);
    shard.task = task;
    gather(a * per_shard, per_shard, shard.features, shard.labels, out.shard_rows[static_cast<std::size_t>(a)]);
    out.shards.push_back(std::move(shard));

    TrustedShard trusted;
    trusted.agent_id = static_cast<int>(a);
    trusted.task = task;
    gather(train_total + a * per_trusted, per_trusted, trusted.features, trusted.labels,
           out.trusted_rows[static_cast<std::size_t>(a)]);
    out.trusted.push_back(std::move(trusted));
  }
  const Eigen::Index test_begin = train_total + trusted_total;
  gather(test_begin, n - test_begin, out.test_features, out.test_labels, out.test_rows);
  return out;
}

void corrupt_shards(std::vector<LabeledShard>& shards, const CorruptionSpec& spec, std::uint64_t seed) {
  for (auto& shard : shards) {
    const auto child = derive_seed(seed, "corrupt", static_cast<std::uint64_t>(shard.agent_id));
    if (spec.mode == CorruptionMode::kLabelFlipOnly) {
      if (shard.task != TaskKind::kBinaryClassification)
        fail(ErrorCode::kInvalidArgument, "label flipping applies to classification only");
      shard.labels = flip_labels(shard.labels, spec.flip_fraction, child);
    } else {
      if (shard.task == TaskKind::kBinaryClassification && spec.mode == CorruptionMode::kGaussianFeaturesAndTargets)
        fail(ErrorCode::kInvalidArgument, "classification labels cannot take Gaussian target noise");
      corrupt_gaussian(shard.features, shard.labels, spec, child);
    }
  }
}

}  // namespace comt
