#include "comt/duallearn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace comt {

namespace {

void check_state_shapes(std::span<const Vector> alpha, std::span<const Matrix> beta,
                        std::span<const LabeledShard> shards) {
  if (alpha.size() != shards.size() || beta.size() != shards.size())
    fail(ErrorCode::kDimensionMismatch, "dual state has a different agent count than the shards");
  for (std::size_t k = 0; k < shards.size(); ++k) {
    const auto& s = shards[k];
    if (alpha[k].size() != s.size() || beta[k].rows() != s.size() || beta[k].cols() != s.dim() ||
        s.labels.size() != s.size())
      fail(ErrorCode::kDimensionMismatch, "dual state for agent " + std::to_string(k) + " does not match its shard");
    if (s.dim() != shards.front().dim()) fail(ErrorCode::kDimensionMismatch, "shards disagree on feature width");
  }
}

Vector aggregate(std::span<const Vector> alpha, std::span<const Matrix> beta, std::span<const LabeledShard> shards,
                 double lambda_w) {
  Vector sum = Vector::Zero(shards.empty() ? 0 : shards.front().dim());
  for (std::size_t k = 0; k < shards.size(); ++k) sum += agent_contribution(alpha[k], beta[k], shards[k], lambda_w);
  return sum;
}

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

}  // namespace

Vector signed_alpha(const Vector& alpha, const Vector& labels, TaskKind task) {
  if (task == TaskKind::kRegression) return alpha;
  return alpha.cwiseProduct(labels);
}

Vector agent_contribution(const Vector& alpha, const Matrix& beta, const LabeledShard& shard, double lambda_w) {
  const Vector weights = signed_alpha(alpha, shard.labels, shard.task);
  return (shard.features.transpose() * weights + beta.transpose() * weights) / lambda_w;
}

PrimalModel dual_to_primal(std::span<const Vector> alpha, std::span<const Matrix> beta,
                           std::span<const LabeledShard> shards, double lambda_w, TaskKind task) {
  check_state_shapes(alpha, beta, shards);
  for (const auto& s : shards)
    if (s.task != task) fail(ErrorCode::kInvalidArgument, "shard task differs from the requested task");
  return {aggregate(alpha, beta, shards, lambda_w), task};
}

double ridge_dual_objective(std::span<const Vector> alpha, std::span<const Matrix> beta,
                            std::span<const LabeledShard> shards, double lambda_w) {
  check_state_shapes(alpha, beta, shards);
  const Vector w = aggregate(alpha, beta, shards, lambda_w);
  double value = 0.5 * lambda_w * w.squaredNorm();
  for (std::size_t k = 0; k < shards.size(); ++k)
    value += 0.5 * alpha[k].squaredNorm() - alpha[k].dot(shards[k].labels);
  return value;
}

double logistic_dual_entropy(const Vector& alpha) {
  double value = 0.0;
  for (double a : alpha) {
    if (!(a >= 0.0 && a <= 1.0)) fail(ErrorCode::kDomainError, "logistic dual variable outside [0,1]");
    value += xlogx(a) + xlogx(1.0 - a);
  }
  return value;
}

double logistic_dual_objective(std::span<const Vector> alpha, std::span<const Matrix> beta,
                               std::span<const LabeledShard> shards, double lambda_w) {
  check_state_shapes(alpha, beta, shards);
  const Vector w = aggregate(alpha, beta, shards, lambda_w);
  double value = 0.5 * lambda_w * w.squaredNorm();
  for (const auto& a : alpha) value += logistic_dual_entropy(a);
  return value;
}

Vector predict(const PrimalModel& model, const Matrix& features) {
  if (features.cols() != model.w.size()) fail(ErrorCode::kDimensionMismatch, "feature width differs from model");
  return features * model.w;
}

double r_squared(const Vector& y_true, const Vector& y_pred) {
  if (y_true.size() != y_pred.size()) fail(ErrorCode::kDimensionMismatch, "r_squared inputs differ in length");
  if (y_true.size() < 2) fail(ErrorCode::kDegenerateInput, "r_squared needs at least two points");
  const double mean = y_true.mean();
  const double ss_tot = (y_true.array() - mean).square().sum();
  if (ss_tot == 0.0) fail(ErrorCode::kDegenerateInput, "r_squared is undefined for constant targets");
  const double ss_res = (y_true - y_pred).squaredNorm();
  return 1.0 - ss_res / ss_tot;
}

double auc(const Vector& y_true, const Vector& scores) {
  if (y_true.size() != scores.size()) fail(ErrorCode::kDimensionMismatch, "auc inputs differ in length");
  const auto n = static_cast<std::size_t>(y_true.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mann-Whitney: sum of positive midranks, ties sharing the average rank.
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (y_true[order[t]] > 0) {
        positive_rank_sum += midrank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) fail(ErrorCode::kDegenerateInput, "auc needs both classes");
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

}  // namespace comt
