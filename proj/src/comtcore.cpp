#include "comt/comtcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace comt {

namespace {

double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

bool is_classification(TaskKind task) { return task == TaskKind::kBinaryClassification; }

// +1 for regression, y_i for classification.
Vector instance_signs(const LabeledShard& shard) {
  if (is_classification(shard.task)) return shard.labels;
  return Vector::Ones(shard.size());
}

void check_local_shapes(const LocalSubproblem& sub, const Vector& alpha, const Matrix& beta) {
  if (sub.shard == nullptr) fail(ErrorCode::kInvalidArgument, "local subproblem has no shard");
  const auto& s = *sub.shard;
  const Eigen::Index d = s.dim();
  if (alpha.size() != s.size() || beta.rows() != s.size() || beta.cols() != d || sub.theta_tilde.size() != d ||
      sub.u.size() != d || sub.others.size() != d)
    fail(ErrorCode::kDimensionMismatch, "local subproblem shapes do not match the shard");
}

// Entropy of one logistic dual coordinate; callers enforce the domain.
double entropy_term(double a) {
  double v = 0.0;
  if (a > 0.0) v += a * std::log(a);
  if (a < 1.0) v += (1.0 - a) * std::log1p(-a);
  return v;
}

// Curvature centre of the two s-quadratics of the local objective:
// lambda/2 ||o + s||^2 + rho/2 ||q - s||^2 = kappa/2 ||s - c||^2 + const.
struct SQuadratic {
  double kappa;
  Vector centre;
};

SQuadratic s_quadratic(const LocalSubproblem& sub) {
  const double kappa = sub.lambda_w + sub.rho;
  const Vector q = sub.theta_tilde + sub.u - sub.others;
  return {kappa, (sub.rho * q - sub.lambda_w * sub.others) / kappa};
}

// Per-instance conjugate pieces of the alpha-block dual in s.
struct AlphaMap {
  TaskKind task;
  double lambda_alpha;
  double t_lo;
  double t_hi;
  double eps;

  double alpha(double t) const {
    if (task == TaskKind::kRegression) {
      if (t > lambda_alpha) return t - lambda_alpha;
      if (t < -lambda_alpha) return t + lambda_alpha;
      return 0.0;
    }
    return std::clamp(sigmoid(t), eps, 1.0 - eps);
  }

  // Antiderivative of alpha(t).
  double h(double t) const {
    if (task == TaskKind::kRegression) {
      const double m = std::max(std::abs(t) - lambda_alpha, 0.0);
      return 0.5 * m * m;
    }
    if (t < t_lo) return softplus(t_lo) + eps * (t - t_lo);
    if (t > t_hi) return softplus(t_hi) + (1.0 - eps) * (t - t_hi);
    return softplus(t);
  }

  double curvature(double t) const {
    if (task == TaskKind::kRegression) return std::abs(t) > lambda_alpha ? 1.0 : 0.0;
    if (t <= t_lo || t >= t_hi) return 0.0;
    const double p = sigmoid(t);
    return p * (1.0 - p);
  }
};

double trusted_loss_impl(const TrustedShard& trusted, const Vector& w) {
  const Vector margin = trusted.features * w;
  if (trusted.task == TaskKind::kRegression) return (margin - trusted.labels).squaredNorm();
  double v = 0.0;
  for (Eigen::Index i = 0; i < margin.size(); ++i) v += softplus(-trusted.labels[i] * margin[i]);
  return v;
}

void check_alpha_box(const Vector& alpha, double eps) {
  const double slack = 1e-12;
  for (double a : alpha)
    if (!(a >= eps - slack && a <= 1.0 - eps + slack))
      fail(ErrorCode::kDomainError, "logistic dual variable outside [eps, 1-eps]");
}

}  // namespace

LocalSubproblem make_local_subproblem(const LabeledShard& shard, const Vector& alpha, const Matrix& beta,
                                      const Vector& tau, const Vector& theta_tilde, const Vector& u,
                                      const HyperParams& hp, bool craft) {
  LocalSubproblem sub;
  sub.shard = &shard;
  sub.alpha = alpha;
  sub.beta = beta;
  sub.theta_tilde = theta_tilde;
  sub.u = u;
  sub.lambda_w = hp.lambda_w;
  sub.lambda_alpha = hp.lambda_alpha;
  sub.lambda_z = hp.lambda_z;
  sub.rho = hp.rho;
  sub.epsilon_box = hp.epsilon_box;
  sub.task = shard.task;
  sub.craft = craft;
  if (alpha.size() != shard.size() || beta.rows() != shard.size() || beta.cols() != shard.dim() ||
      tau.size() != shard.dim())
    fail(ErrorCode::kDimensionMismatch, "local state does not match the shard");
  sub.others = tau - agent_contribution(alpha, beta, shard, hp.lambda_w);
  check_local_shapes(sub, alpha, beta);
  return sub;
}

std::size_t SelectionMask::count() const {
  std::size_t c = 0;
  for (const auto& agent : keep) c += static_cast<std::size_t>(std::count(agent.begin(), agent.end(), true));
  return c;
}

std::size_t SelectionMask::total() const {
  std::size_t c = 0;
  for (const auto& agent : keep) c += agent.size();
  return c;
}

double trusted_loss(const TrustedShard& trusted, const Vector& w) { return trusted_loss_impl(trusted, w); }

Vector trusted_loss_gradient(const TrustedShard& trusted, const Vector& w) {
  if (trusted.dim() != w.size()) fail(ErrorCode::kDimensionMismatch, "trusted feature width differs");
  const Vector margin = trusted.features * w;
  if (trusted.task == TaskKind::kRegression) return 2.0 * trusted.features.transpose() * (margin - trusted.labels);
  Vector coeff(margin.size());
  for (Eigen::Index i = 0; i < margin.size(); ++i)
    coeff[i] = -trusted.labels[i] * sigmoid(-trusted.labels[i] * margin[i]);
  return trusted.features.transpose() * coeff;
}

ObjectiveParts comt_objective_parts(const DualState& state, std::span<const LabeledShard> shards,
                                    std::span<const TrustedShard> trusted, const HyperParams& hp, TaskKind task) {
  if (trusted.size() != shards.size()) fail(ErrorCode::kDimensionMismatch, "one trusted shard per agent required");
  const PrimalModel model = dual_to_primal(state.alpha, state.beta, shards, hp.lambda_w, task);

  ObjectiveParts parts;
  parts.dual_learner = 0.5 * hp.lambda_w * model.w.squaredNorm();
  for (std::size_t k = 0; k < shards.size(); ++k) {
    const Vector& a = state.alpha[k];
    if (is_classification(task)) {
      check_alpha_box(a, hp.epsilon_box);
      for (double v : a) parts.dual_learner += entropy_term(v);
    } else {
      parts.dual_learner += 0.5 * a.squaredNorm() - a.dot(shards[k].labels);
    }
    parts.sparsity += hp.lambda_alpha * a.lpNorm<1>();
    parts.crafting += hp.lambda_z * state.beta[k].squaredNorm();
  }
  for (const auto& t : trusted) {
    if (t.dim() != model.w.size()) fail(ErrorCode::kDimensionMismatch, "trusted feature width differs");
    parts.trusted += hp.lambda_trusted * trusted_loss_impl(t, model.w);
  }
  return parts;
}

double agent_private_objective(const LabeledShard& shard, const Vector& alpha, const Matrix& beta,
                               const HyperParams& hp) {
  double value = 0.0;
  if (is_classification(shard.task)) {
    check_alpha_box(alpha, hp.epsilon_box);
    for (double v : alpha) value += entropy_term(v);
  } else {
    value += 0.5 * alpha.squaredNorm() - alpha.dot(shard.labels);
  }
  return value + hp.lambda_alpha * alpha.lpNorm<1>() + hp.lambda_z * beta.squaredNorm();
}

double eval_comt_objective(const DualState& state, std::span<const LabeledShard> shards,
                           std::span<const TrustedShard> trusted, const HyperParams& hp, TaskKind task) {
  return comt_objective_parts(state, shards, trusted, hp, task).total();
}

BlockGradient comt_objective_gradient(const DualState& state, std::span<const LabeledShard> shards,
                                      std::span<const TrustedShard> trusted, const HyperParams& hp, TaskKind task) {
  const PrimalModel model = dual_to_primal(state.alpha, state.beta, shards, hp.lambda_w, task);
  Vector grad_w = hp.lambda_w * model.w;
  for (const auto& t : trusted) grad_w += hp.lambda_trusted * trusted_loss_gradient(t, model.w);

  BlockGradient g;
  for (std::size_t k = 0; k < shards.size(); ++k) {
    const auto& shard = shards[k];
    const Vector& a = state.alpha[k];
    const Vector signs = instance_signs(shard);
    const Matrix crafted = shard.features + state.beta[k];
    Vector da = signs.cwiseProduct(crafted * grad_w) / hp.lambda_w;
    if (is_classification(task)) {
      for (Eigen::Index i = 0; i < a.size(); ++i) da[i] += logit(a[i]);
    } else {
      da += a - shard.labels;
    }
    const Vector weights = signs.cwiseProduct(a);
    Matrix db = (weights * grad_w.transpose()) / hp.lambda_w + 2.0 * hp.lambda_z * state.beta[k];
    g.alpha.push_back(std::move(da));
    g.beta.push_back(std::move(db));
  }
  return g;
}

double eval_admm_local_smooth(const LocalSubproblem& sub, const Vector& alpha, const Matrix& beta) {
  check_local_shapes(sub, alpha, beta);
  const auto& shard = *sub.shard;
  const Vector s = agent_contribution(alpha, beta, shard, sub.lambda_w);

  double value = 0.0;
  if (is_classification(sub.task)) {
    for (double a : alpha) {
      if (!(a >= 0.0 && a <= 1.0)) fail(ErrorCode::kDomainError, "logistic dual variable outside [0,1]");
      value += entropy_term(a);
    }
  } else {
    value += 0.5 * alpha.squaredNorm() - alpha.dot(shard.labels);
  }
  value += 0.5 * sub.lambda_w * (sub.others + s).squaredNorm();
  value += sub.lambda_z * beta.squaredNorm();
  value += 0.5 * sub.rho * (sub.theta_tilde + sub.u - sub.others - s).squaredNorm();
  return value;
}

double eval_admm_local(const LocalSubproblem& sub, const Vector& alpha, const Matrix& beta) {
  return eval_admm_local_smooth(sub, alpha, beta) + sub.lambda_alpha * alpha.lpNorm<1>();
}

LocalGradient admm_local_gradient(const LocalSubproblem& sub, const Vector& alpha, const Matrix& beta) {
  check_local_shapes(sub, alpha, beta);
  const auto& shard = *sub.shard;
  const Vector s = agent_contribution(alpha, beta, shard, sub.lambda_w);
  const Vector grad_s = sub.lambda_w * (sub.others + s) - sub.rho * (sub.theta_tilde + sub.u - sub.others - s);
  const Vector signs = instance_signs(shard);

  LocalGradient g;
  g.alpha = signs.cwiseProduct((shard.features + beta) * grad_s) / sub.lambda_w;
  if (is_classification(sub.task)) {
    for (Eigen::Index i = 0; i < alpha.size(); ++i) g.alpha[i] += logit(alpha[i]);
  } else {
    g.alpha += alpha - shard.labels;
  }
  g.beta = (signs.cwiseProduct(alpha) * grad_s.transpose()) / sub.lambda_w + 2.0 * sub.lambda_z * beta;
  return g;
}

Vector soft_threshold(const Vector& v, double t) {
  if (t < 0.0) fail(ErrorCode::kInvalidArgument, "soft_threshold needs t >= 0");
  return v.unaryExpr([t](double x) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
  });
}

Matrix solve_beta_block(const LocalSubproblem& sub, const Vector& alpha) {
  const auto& shard = *sub.shard;
  const Vector weights = instance_signs(shard).cwiseProduct(alpha);
  const auto [kappa, centre] = s_quadratic(sub);
  const double lambda = sub.lambda_w;
  const Vector s0 = shard.features.transpose() * weights / lambda;
  const double denom = 2.0 * sub.lambda_z + kappa * weights.squaredNorm() / (lambda * lambda);
  if (denom <= 0.0) return Matrix::Zero(shard.size(), shard.dim());
  const Vector direction = (kappa / lambda) * (centre - s0) / denom;
  return weights * direction.transpose();
}

Vector solve_alpha_block(const LocalSubproblem& sub, const Matrix& beta, const Vector& warm_alpha) {
  check_local_shapes(sub, warm_alpha, beta);
  const auto& shard = *sub.shard;
  const Eigen::Index n = shard.size();
  const double lambda = sub.lambda_w;
  const auto [kappa, centre] = s_quadratic(sub);
  const bool cls = is_classification(sub.task);

  const Vector signs = instance_signs(shard);
  const Matrix signed_rows = signs.asDiagonal() * (shard.features + beta);
  const AlphaMap map{sub.task, sub.lambda_alpha, logit(sub.epsilon_box), logit(1.0 - sub.epsilon_box),
                     sub.epsilon_box};
  // t_i(s) = offset_i - (kappa/lambda) a~_i . (s - c)
  const Vector offset = cls ? Vector::Constant(n, -sub.lambda_alpha) : Vector(shard.labels);
  const double slope = kappa / lambda;
  const Vector base = offset + slope * (signed_rows * centre);

  auto t_of = [&](const Vector& s) -> Vector { return base - slope * (signed_rows * s); };
  auto psi = [&](const Vector& s) {
    const Vector t = t_of(s);
    double v = 0.5 * s.squaredNorm();
    for (Eigen::Index i = 0; i < n; ++i) v += map.h(t[i]) / kappa;
    return v;
  };
  auto alpha_of = [&](const Vector& t) -> Vector { return t.unaryExpr([&](double x) { return map.alpha(x); }); };

  Vector s = signed_rows.transpose() * warm_alpha / lambda;
  double value = psi(s);
  for (int iter = 0; iter < 100; ++iter) {
    const Vector t = t_of(s);
    const Vector grad = s - signed_rows.transpose() * alpha_of(t) / lambda;
    Vector curv(n);
    for (Eigen::Index i = 0; i < n; ++i) curv[i] = map.curvature(t[i]);
    Eigen::MatrixXd hess = (slope / lambda) * (signed_rows.transpose() * curv.asDiagonal() * signed_rows);
    hess.diagonal().array() += 1.0;
    const Vector step = -hess.ldlt().solve(grad);
    if (!step.allFinite()) fail(ErrorCode::kNonFiniteIterate, "alpha block Newton step is not finite");

    const double slope_dir = grad.dot(step);
    double scale = 1.0;
    Vector trial = s + step;
    double trial_value = psi(trial);
    while (trial_value > value + 1e-4 * scale * slope_dir && scale > 1e-10) {
      scale *= 0.5;
      trial = s + scale * step;
      trial_value = psi(trial);
    }
    const double moved = (trial - s).norm();
    if (trial_value <= value) {
      s = trial;
      value = trial_value;
    }
    if (moved <= 1e-13 * (1.0 + s.norm()) || grad.norm() <= 1e-14 * (1.0 + s.norm()) || scale <= 1e-10) break;
  }
  return alpha_of(t_of(s));
}

double alpha_lipschitz(const LocalSubproblem& sub, const Matrix& beta) {
  const auto& shard = *sub.shard;
  const Matrix rows = instance_signs(shard).asDiagonal() * (shard.features + beta);
  const Eigen::MatrixXd gram = rows.transpose() * rows;
  // Power iteration for the top eigenvalue of the d x d Gram matrix.
  Vector v = Vector::Ones(gram.rows()).normalized();
  double top = 0.0;
  for (int it = 0; it < 100; ++it) {
    const Vector next = gram * v;
    const double norm = next.norm();
    if (norm == 0.0) break;
    top = v.dot(next);
    v = next / norm;
  }
  const double kappa = sub.lambda_w + sub.rho;
  double base = 1.0;
  if (is_classification(sub.task)) base = 1.0 / (sub.epsilon_box * (1.0 - sub.epsilon_box));
  return base + kappa * top / (sub.lambda_w * sub.lambda_w);
}

Vector alpha_prox_gradient_step(const LocalSubproblem& sub, const Vector& alpha, const Matrix& beta, double step) {
  const LocalGradient g = admm_local_gradient(sub, alpha, beta);
  Vector next = soft_threshold(alpha - step * g.alpha, step * sub.lambda_alpha);
  if (is_classification(sub.task))
    next = next.cwiseMax(sub.epsilon_box).cwiseMin(1.0 - sub.epsilon_box);
  return next;
}

LocalUpdate solve_local(const LocalSubproblem& sub, const LocalSolveOptions& options) {
  check_local_shapes(sub, sub.alpha, sub.beta);
  Vector alpha = sub.alpha;
  Matrix beta = sub.beta;
  if (is_classification(sub.task)) alpha = alpha.cwiseMax(sub.epsilon_box).cwiseMin(1.0 - sub.epsilon_box);

  LocalUpdate out;
  out.objective_before = eval_admm_local(sub, sub.alpha, sub.beta);
  double value = eval_admm_local(sub, alpha, beta);
  if (value > out.objective_before) {
    alpha = sub.alpha;
    value = out.objective_before;
  }

  for (int it = 0; it < options.inner_iters; ++it) {
    if (sub.craft) {
      Matrix candidate = solve_beta_block(sub, alpha);
      if (!candidate.allFinite()) fail(ErrorCode::kNonFiniteIterate, "beta block diverged");
      const double v = eval_admm_local(sub, alpha, candidate);
      if (v <= value) {
        beta = std::move(candidate);
        value = v;
      }
    }

    if (options.alpha_rule == AlphaRule::kExactBlock) {
      Vector candidate = solve_alpha_block(sub, beta, alpha);
      if (!candidate.allFinite()) fail(ErrorCode::kNonFiniteIterate, "alpha block diverged");
      const double v = eval_admm_local(sub, candidate, beta);
      if (v <= value) {
        alpha = std::move(candidate);
        value = v;
      }
    } else {
      double step = 1.0 / alpha_lipschitz(sub, beta);
      for (int p = 0; p < options.prox_steps; ++p) {
        Vector candidate = alpha_prox_gradient_step(sub, alpha, beta, step);
        double v = eval_admm_local(sub, candidate, beta);
        while (v > value && step > 1e-300) {
          step *= 0.5;
          candidate = alpha_prox_gradient_step(sub, alpha, beta, step);
          v = eval_admm_local(sub, candidate, beta);
        }
        if (!candidate.allFinite()) fail(ErrorCode::kNonFiniteIterate, "alpha prox step diverged");
        if (v > value) break;
        alpha = std::move(candidate);
        value = v;
      }
    }
  }

  if (!std::isfinite(value)) fail(ErrorCode::kNonFiniteIterate, "local objective is not finite");
  out.delta_alpha = alpha - sub.alpha;
  out.delta_beta = beta - sub.beta;
  out.objective_after = value;
  return out;
}

Vector solve_trusted(const TrustedShard& trusted, const Vector& theta, const Vector& tau, const Vector& u,
                     const HyperParams& hp) {
  const Eigen::Index d = trusted.dim();
  if (theta.size() != d || tau.size() != d || u.size() != d)
    fail(ErrorCode::kDimensionMismatch, "trusted step vectors differ from the trusted feature width");
  const Vector anchor = tau - u;
  const double lt = hp.lambda_trusted;

  if (trusted.task == TaskKind::kRegression) {
    Eigen::MatrixXd system = 2.0 * lt * (trusted.features.transpose() * trusted.features);
    system.diagonal().array() += hp.rho;
    const Vector rhs = 2.0 * lt * (trusted.features.transpose() * trusted.labels) + hp.rho * anchor;
    return system.llt().solve(rhs) - theta;
  }

  auto objective = [&](const Vector& x) { return lt * trusted_loss_impl(trusted, x) + 0.5 * hp.rho * (x - anchor).squaredNorm(); };
  Vector x = theta;
  double value = objective(x);
  for (int step = 0; step < hp.trusted_newton_steps; ++step) {
    const Vector margin = trusted.features * x;
    Vector coeff(margin.size());
    Vector curv(margin.size());
    for (Eigen::Index i = 0; i < margin.size(); ++i) {
      const double p = sigmoid(-trusted.labels[i] * margin[i]);
      coeff[i] = -trusted.labels[i] * p;
      curv[i] = p * (1.0 - p);
    }
    const Vector grad = lt * (trusted.features.transpose() * coeff) + hp.rho * (x - anchor);
    if (grad.norm() <= 1e-14 * (1.0 + x.norm())) break;
    Eigen::MatrixXd hess = lt * (trusted.features.transpose() * curv.asDiagonal() * trusted.features);
    hess.diagonal().array() += hp.rho;
    const Vector dir = -hess.llt().solve(grad);
    double scale = 1.0;
    Vector trial = x + dir;
    double trial_value = objective(trial);
    while (trial_value > value && scale > 1e-10) {
      scale *= 0.5;
      trial = x + scale * dir;
      trial_value = objective(trial);
    }
    if (trial_value > value) break;
    x = trial;
    value = trial_value;
  }
  return x - theta;
}

SelectionMask select_subset(std::span<const Vector> alpha, double tau_sel) {
  if (!(tau_sel > 0.0 && tau_sel < 1.0)) fail(ErrorCode::kInvalidArgument, "tau_sel must lie in (0,1)");
  double top = 0.0;
  for (const auto& a : alpha)
    if (a.size() > 0) top = std::max(top, a.cwiseAbs().maxCoeff());
  if (top == 0.0) fail(ErrorCode::kDegenerateState, "all dual variables are zero; nothing to select");

  const double threshold = tau_sel * top;
  SelectionMask mask;
  for (const auto& a : alpha) {
    std::vector<bool> keep(static_cast<std::size_t>(a.size()));
    for (Eigen::Index i = 0; i < a.size(); ++i) keep[static_cast<std::size_t>(i)] = std::abs(a[i]) >= threshold;
    mask.keep.push_back(std::move(keep));
  }
  return mask;
}

ModelParams extract_model(const DualState& state, const SelectionMask& mask, std::span<const LabeledShard> shards,
                          const HyperParams& hp, TaskKind task) {
  if (mask.keep.size() != shards.size() || state.alpha.size() != shards.size())
    fail(ErrorCode::kDimensionMismatch, "selection mask does not match the federation");
  if (mask.count() == 0) fail(ErrorCode::kDegenerateState, "selection mask is empty");

  ModelParams model;
  model.w = Vector::Zero(shards.front().dim());
  for (std::size_t k = 0; k < shards.size(); ++k) {
    const auto& shard = shards[k];
    if (static_cast<Eigen::Index>(mask.keep[k].size()) != shard.size())
      fail(ErrorCode::kDimensionMismatch, "selection mask row count differs from shard " + std::to_string(k));
    std::vector<Eigen::Index> kept;
    for (Eigen::Index i = 0; i < shard.size(); ++i) {
      if (!mask.keep[k][static_cast<std::size_t>(i)]) continue;
      kept.push_back(i);
      const double weight = is_classification(task) ? state.alpha[k][i] * shard.labels[i] : state.alpha[k][i];
      model.w += weight * (shard.features.row(i) + state.beta[k].row(i)).transpose();
    }
    model.selected.push_back(std::move(kept));
  }
  model.w /= hp.lambda_w;
  model.rho_fraction = static_cast<double>(mask.count()) / static_cast<double>(mask.total());
  return model;
}

}  // namespace comt
