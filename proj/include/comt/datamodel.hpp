#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "comt/error.hpp"

namespace comt {

// Rows are instances, columns are features.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class TaskKind { kRegression, kBinaryClassification };

std::string_view to_string(TaskKind task);
TaskKind parse_task(std::string_view text);

// One agent's (possibly corrupted) training data.
struct LabeledShard {
  int agent_id = 0;
  Matrix features;
  Vector labels;
  TaskKind task = TaskKind::kRegression;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
};

// One agent's small expert-verified dataset.
struct TrustedShard {
  int agent_id = 0;
  Matrix features;
  Vector labels;
  TaskKind task = TaskKind::kRegression;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
};

// Per-agent dual variables and crafting matrices plus the global consensus
// vectors. Mutated only by the solver that owns it.
struct DualState {
  std::vector<Vector> alpha;
  std::vector<Matrix> beta;
  Vector theta_tilde;
  Vector tau;
  Vector u;

  // alpha = 0, beta = 0, theta = tau = u = 0, shaped after the shards.
  static DualState zeros(std::span<const LabeledShard> shards);

  std::size_t num_agents() const { return alpha.size(); }
  bool all_finite() const;
};

struct HyperParams {
  double lambda_w = 1.0;
  double lambda_trusted = 1.0;
  double lambda_alpha = 0.0;
  double lambda_z = 1.0;
  double rho = 1e2;
  // Per-agent step scaling; empty means gamma_k = 1 for every agent.
  std::vector<double> gamma;
  int max_rounds = 1500;
  double rel_tol = 1e-6;
  int stall_window = 10;
  double select_frac_threshold = 1e-3;
  double epsilon_box = 1e-6;
  int inner_iters = 5;
  int trusted_newton_steps = 10;

  double gamma_for(std::size_t agent) const { return gamma.empty() ? 1.0 : gamma.at(agent); }

  // Throws kInvalidArgument when an invariant is violated for a K-agent run.
  void validate(std::size_t num_agents) const;
};

struct ModelParams {
  Vector w;
  std::vector<std::vector<Eigen::Index>> selected;
  double rho_fraction = 0.0;
};

struct RoundTrace {
  int round = 0;
  double objective = 0.0;
  double primal_residual = 0.0;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
};

// Checks every shard/trusted invariant across the federation. Shards and
// trusted sets are paired by position and must carry the same agent_id.
void validate_federation(std::span<const LabeledShard> shards, std::span<const TrustedShard> trusted);

// Label-domain check shared by loaders and validators.
void check_labels(const Vector& labels, TaskKind task, std::string_view what);

}  // namespace comt
