#pragma once

#include <span>

#include "comt/datamodel.hpp"

namespace comt {

struct PrimalModel {
  Vector w;
  TaskKind task = TaskKind::kRegression;
};

// Effective dual weight of instance i: alpha_i for regression,
// alpha_i * y_i for classification.
Vector signed_alpha(const Vector& alpha, const Vector& labels, TaskKind task);

// One agent's image (1/lambda_w) * (X + beta)^T alpha~ in primal space.
Vector agent_contribution(const Vector& alpha, const Matrix& beta, const LabeledShard& shard, double lambda_w);

// w = (1/lambda_w) * sum_k (X^k + beta^k)^T alpha~^k.
PrimalModel dual_to_primal(std::span<const Vector> alpha, std::span<const Matrix> beta,
                           std::span<const LabeledShard> shards, double lambda_w, TaskKind task);

// (1/(2 lambda_w)) ||sum_k (X^k+beta^k)^T alpha^k||^2 + 1/2 sum ||alpha^k||^2 - sum alpha^k . Y^k.
// The quadratic term is taken over the federation-wide aggregate.
double ridge_dual_objective(std::span<const Vector> alpha, std::span<const Matrix> beta,
                            std::span<const LabeledShard> shards, double lambda_w);

// sum_i alpha_i log alpha_i + (1 - alpha_i) log(1 - alpha_i), with 0 log 0 = 0.
double logistic_dual_entropy(const Vector& alpha);

// Entropy terms plus (1/(2 lambda_w)) ||sum_k (X^k+beta^k)^T (alpha^k o Y^k)||^2.
double logistic_dual_objective(std::span<const Vector> alpha, std::span<const Matrix> beta,
                               std::span<const LabeledShard> shards, double lambda_w);

Vector predict(const PrimalModel& model, const Matrix& features);

double r_squared(const Vector& y_true, const Vector& y_pred);

// Rank statistic: P(score of random positive > random negative), ties count 1/2.
double auc(const Vector& y_true, const Vector& scores);

}  // namespace comt
