#pragma once

#include <span>
#include <vector>

#include "comt/datamodel.hpp"
#include "comt/duallearn.hpp"

namespace comt {

// Everything agent k sees during its local solve: its own shard and dual
// block, the broadcast consensus vectors, and the aggregate contribution of
// all other agents (broadcast tau minus its own stale contribution).
struct LocalSubproblem {
  const LabeledShard* shard = nullptr;
  Vector alpha;
  Matrix beta;
  Vector theta_tilde;
  Vector u;
  Vector others;
  double lambda_w = 1.0;
  double lambda_alpha = 0.0;
  double lambda_z = 1.0;
  double rho = 1e2;
  double epsilon_box = 1e-6;
  TaskKind task = TaskKind::kRegression;
  bool craft = true;  // false freezes beta at its current value
};

LocalSubproblem make_local_subproblem(const LabeledShard& shard, const Vector& alpha, const Matrix& beta,
                                      const Vector& tau, const Vector& theta_tilde, const Vector& u,
                                      const HyperParams& hp, bool craft = true);

// Retained instances per agent.
struct SelectionMask {
  std::vector<std::vector<bool>> keep;

  std::size_t count() const;
  std::size_t total() const;
};

struct ObjectiveParts {
  double dual_learner = 0.0;
  double trusted = 0.0;
  double sparsity = 0.0;  // lambda_alpha * sum |alpha|
  double crafting = 0.0;  // lambda_z * sum ||beta||^2
  double total() const { return dual_learner + trusted + sparsity + crafting; }
  double smooth() const { return dual_learner + trusted + crafting; }
};

ObjectiveParts comt_objective_parts(const DualState& state, std::span<const LabeledShard> shards,
                                    std::span<const TrustedShard> trusted, const HyperParams& hp, TaskKind task);

// Terms of the objective that depend on one agent's duals alone: its dual
// loss (or entropy), L1 and crafting penalties. The shared (lambda_w/2)||w||^2
// and the trusted losses are excluded.
double agent_private_objective(const LabeledShard& shard, const Vector& alpha, const Matrix& beta,
                               const HyperParams& hp);

// Dual learner terms + trusted-set loss of w(alpha, beta) + L1 + crafting.
double eval_comt_objective(const DualState& state, std::span<const LabeledShard> shards,
                           std::span<const TrustedShard> trusted, const HyperParams& hp, TaskKind task);

struct BlockGradient {
  std::vector<Vector> alpha;
  std::vector<Matrix> beta;
};

// Gradient of ObjectiveParts::smooth() with respect to every alpha and beta.
BlockGradient comt_objective_gradient(const DualState& state, std::span<const LabeledShard> shards,
                                      std::span<const TrustedShard> trusted, const HyperParams& hp, TaskKind task);

// Agent-k scaled-ADMM objective at (alpha, beta), other agents frozen in
// sub.others.
double eval_admm_local(const LocalSubproblem& sub, const Vector& alpha, const Matrix& beta);
inline double eval_admm_local(const LocalSubproblem& sub) { return eval_admm_local(sub, sub.alpha, sub.beta); }

// eval_admm_local without the lambda_alpha * |alpha| term.
double eval_admm_local_smooth(const LocalSubproblem& sub, const Vector& alpha, const Matrix& beta);

struct LocalGradient {
  Vector alpha;
  Matrix beta;
};

LocalGradient admm_local_gradient(const LocalSubproblem& sub, const Vector& alpha, const Matrix& beta);

Vector soft_threshold(const Vector& v, double t);

// Exact minimizer over beta with alpha fixed. The optimum is rank one,
// beta = alpha~ b^T, so the closed form costs O(n d).
Matrix solve_beta_block(const LocalSubproblem& sub, const Vector& alpha);

// Exact minimizer over alpha with beta fixed (L1 and, for classification,
// the [eps, 1-eps] box included). Solved as a strongly convex problem in the
// d-dimensional aggregate s = (X+beta)^T alpha~ / lambda_w by damped Newton.
// `warm_alpha` only seeds the Newton iteration.
Vector solve_alpha_block(const LocalSubproblem& sub, const Matrix& beta, const Vector& warm_alpha);

// Upper bound on the Lipschitz constant of the smooth alpha-gradient
// (power iteration on the local quadratic). Classification adds the entropy
// curvature at the box edge.
double alpha_lipschitz(const LocalSubproblem& sub, const Matrix& beta);

// One proximal-gradient step on alpha: gradient step on the smooth part,
// soft-threshold by step * lambda_alpha, clamp to the box for classification.
Vector alpha_prox_gradient_step(const LocalSubproblem& sub, const Vector& alpha, const Matrix& beta, double step);

enum class AlphaRule { kExactBlock, kProxGradient };

struct LocalSolveOptions {
  int inner_iters = 5;
  AlphaRule alpha_rule = AlphaRule::kExactBlock;
  int prox_steps = 20;  // per inner iteration, kProxGradient only
};

struct LocalUpdate {
  Vector delta_alpha;
  Matrix delta_beta;
  double objective_before = 0.0;
  double objective_after = 0.0;
};

// Alternating beta / alpha block minimization of eval_admm_local. Never
// increases the local objective; throws kNonFiniteIterate on divergence.
LocalUpdate solve_local(const LocalSubproblem& sub, const LocalSolveOptions& options = {});

// Agent-k trusted-set step: the increment to theta_tilde minimizing
// lambda_trusted * loss(trusted, theta + delta) + rho/2 ||theta + delta - tau + u||^2.
Vector solve_trusted(const TrustedShard& trusted, const Vector& theta, const Vector& tau, const Vector& u,
                     const HyperParams& hp);

// Global relative threshold: keep (k, i) iff |alpha_i^k| >= tau_sel * max |alpha|.
SelectionMask select_subset(std::span<const Vector> alpha, double tau_sel);

ModelParams extract_model(const DualState& state, const SelectionMask& mask, std::span<const LabeledShard> shards,
                          const HyperParams& hp, TaskKind task);

// Trusted-set loss of a primal vector: squared error for regression,
// logistic loss for classification (unweighted).
double trusted_loss(const TrustedShard& trusted, const Vector& w);
Vector trusted_loss_gradient(const TrustedShard& trusted, const Vector& w);

}  // namespace comt
