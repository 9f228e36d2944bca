#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "comt/datamodel.hpp"

namespace comt {

enum class CorruptionMode { kGaussianFeaturesAndTargets, kGaussianFeaturesOnly, kLabelFlipOnly };

std::string_view to_string(CorruptionMode mode);
CorruptionMode parse_corruption_mode(std::string_view text);

struct CorruptionSpec {
  double theta_x = 0.0;
  double theta_y = 0.0;
  double flip_fraction = 0.0;
  CorruptionMode mode = CorruptionMode::kGaussianFeaturesAndTargets;
};

struct SplitSpec {
  double train_fraction = 0.40;
  double trusted_fraction = 0.005;
  std::uint64_t seed = 0;
  int num_agents = 5;
};

// Layout of the isotropic Gaussian clusters. Cluster c < d sits on axis c at
// distance spacing/sqrt(2) from the origin, so axis clusters are exactly
// `spacing` apart; clusters beyond d get random directions at the same radius.
struct ClusterGeometry {
  int n_clusters = 4;
  double spacing = 3.0;
  double stddev = 1.0;
};

struct Dataset {
  Matrix features;
  Vector labels;
  TaskKind task = TaskKind::kRegression;
  Vector true_w;  // regression only
};

struct SplitResult {
  std::vector<LabeledShard> shards;
  std::vector<TrustedShard> trusted;
  Matrix test_features;
  Vector test_labels;
  // Row indices into the source dataset, for provenance checks.
  std::vector<std::vector<Eigen::Index>> shard_rows;
  std::vector<std::vector<Eigen::Index>> trusted_rows;
  std::vector<Eigen::Index> test_rows;
};

// Child seed for one (purpose, agent) pair; stable across platforms.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t agent = 0);

Dataset gen_classification(std::uint64_t seed, Eigen::Index n, Eigen::Index d, int n_clusters,
                           const ClusterGeometry& geometry = {});

Dataset gen_regression(std::uint64_t seed, Eigen::Index n, Eigen::Index d, const ClusterGeometry& geometry = {});

// X' = X + zeta_x * eps_x * theta_x and Y' = Y + zeta_y * eps_y * theta_y with
// eps the mean absolute entry. Targets are untouched in kGaussianFeaturesOnly.
void corrupt_gaussian(Matrix& features, Vector& targets, const CorruptionSpec& spec, std::uint64_t seed);

// Negates exactly round(fraction * n) labels chosen without replacement.
Vector flip_labels(const Vector& labels, double fraction, std::uint64_t seed);

SplitResult split_and_shard(const Matrix& features, const Vector& labels, TaskKind task, const SplitSpec& spec);

// Applies `spec` to every training shard in place using per-agent child seeds.
void corrupt_shards(std::vector<LabeledShard>& shards, const CorruptionSpec& spec, std::uint64_t seed);

}  // namespace comt
