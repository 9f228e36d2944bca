#include "comt/datamodel.hpp"

#include <string>

namespace comt {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kLabelDomainError: return "LabelDomainError";
    case ErrorCode::kEmptyTrustedSet: return "EmptyTrustedSet";
    case ErrorCode::kInsufficientData: return "InsufficientData";
    case ErrorCode::kDomainError: return "DomainError";
    case ErrorCode::kDegenerateInput: return "DegenerateInput";
    case ErrorCode::kDegenerateState: return "DegenerateState";
    case ErrorCode::kNonFiniteIterate: return "NonFiniteIterate";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIndexError: return "IndexError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

std::string_view to_string(TaskKind task) {
  return task == TaskKind::kRegression ? "regression" : "classification";
}

TaskKind parse_task(std::string_view text) {
  if (text == "regression" || text == "rr") return TaskKind::kRegression;
  if (text == "classification" || text == "lr") return TaskKind::kBinaryClassification;
  fail(ErrorCode::kInvalidArgument, "unknown task '" + std::string(text) + "'");
}

DualState DualState::zeros(std::span<const LabeledShard> shards) {
  DualState state;
  const Eigen::Index d = shards.empty() ? 0 : shards.front().dim();
  for (const auto& shard : shards) {
    state.alpha.push_back(Vector::Zero(shard.size()));
    state.beta.push_back(Matrix::Zero(shard.size(), shard.dim()));
  }
  state.theta_tilde = Vector::Zero(d);
  state.tau = Vector::Zero(d);
  state.u = Vector::Zero(d);
  return state;
}

bool DualState::all_finite() const {
  for (const auto& a : alpha)
    if (!a.allFinite()) return false;
  for (const auto& b : beta)
    if (!b.allFinite()) return false;
  return theta_tilde.allFinite() && tau.allFinite() && u.allFinite();
}

void HyperParams::validate(std::size_t num_agents) const {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::kInvalidArgument, what);
  };
  require(lambda_w > 0.0, "lambda_w must be positive");
  require(lambda_trusted >= 0.0 && lambda_alpha >= 0.0 && lambda_z >= 0.0, "regularization weights must be nonnegative");
  require(rho > 0.0, "rho must be positive");
  require(max_rounds >= 0, "max_rounds must be nonnegative");
  require(rel_tol > 0.0, "rel_tol must be positive");
  require(stall_window >= 1, "stall_window must be at least 1");
  require(select_frac_threshold > 0.0 && select_frac_threshold < 1.0, "select_frac_threshold must lie in (0,1)");
  require(epsilon_box > 0.0 && epsilon_box < 0.5, "epsilon_box must lie in (0, 0.5)");
  require(inner_iters >= 1, "inner_iters must be at least 1");
  require(trusted_newton_steps >= 1, "trusted_newton_steps must be at least 1");
  if (!gamma.empty()) {
    require(gamma.size() == num_agents, "gamma needs one entry per agent");
    for (double g : gamma)
      require(g >= 1.0 && g <= static_cast<double>(num_agents), "gamma_k must lie in [1, K]");
  }
}

void check_labels(const Vector& labels, TaskKind task, std::string_view what) {
  if (!labels.allFinite()) fail(ErrorCode::kLabelDomainError, std::string(what) + ": non-finite label");
  if (task == TaskKind::kBinaryClassification) {
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
      if (labels[i] != 1.0 && labels[i] != -1.0)
        fail(ErrorCode::kLabelDomainError,
             std::string(what) + ": classification label " + std::to_string(labels[i]) + " is not +1/-1");
    }
  }
}

namespace {

template <typename Shard>
void check_shard(const Shard& shard, Eigen::Index d, TaskKind task, const std::string& what) {
  if (shard.features.rows() != shard.labels.size())
    fail(ErrorCode::kDimensionMismatch, what + ": feature rows and label count differ");
  if (shard.dim() != d) fail(ErrorCode::kDimensionMismatch, what + ": feature width differs from the federation");
  if (shard.task != task) fail(ErrorCode::kInvalidArgument, what + ": task kind differs from the federation");
  if (!shard.features.allFinite()) fail(ErrorCode::kDomainError, what + ": non-finite feature");
  check_labels(shard.labels, task, what);
}

}  // namespace

void validate_federation(std::span<const LabeledShard> shards, std::span<const TrustedShard> trusted) {
  if (shards.empty()) fail(ErrorCode::kInvalidArgument, "federation has no agents");
  if (shards.size() != trusted.size())
    fail(ErrorCode::kDimensionMismatch, "each agent needs exactly one trusted shard");

  const Eigen::Index d = shards.front().dim();
  const TaskKind task = shards.front().task;
  if (d < 1) fail(ErrorCode::kDimensionMismatch, "feature dimension must be at least 1");

  for (std::size_t k = 0; k < shards.size(); ++k) {
    const std::string tag = "agent " + std::to_string(k);
    if (shards[k].agent_id != static_cast<int>(k) || trusted[k].agent_id != static_cast<int>(k))
      fail(ErrorCode::kInvalidArgument, tag + ": agent ids must be 0..K-1 in order and paired");
    check_shard(shards[k], d, task, tag + " training shard");
    check_shard(trusted[k], d, task, tag + " trusted shard");
    if (trusted[k].size() < 1) fail(ErrorCode::kEmptyTrustedSet, tag + ": trusted shard is empty");
    if (trusted[k].size() >= shards[k].size())
      fail(ErrorCode::kInsufficientData, tag + ": trusted shard must be smaller than the training shard");
  }
}

}  // namespace comt
