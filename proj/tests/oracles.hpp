#pragma once

// Independent reference computations for tests. Deliberately naive: plain
// loops, no shared code paths with the library beyond the data types.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "comt/datamodel.hpp"

namespace oracle {

using comt::LabeledShard;
using comt::Matrix;
using comt::TaskKind;
using comt::TrustedShard;
using comt::Vector;

inline double brute_auc(const Vector& y, const Vector& s) {
  double wins = 0.0, pairs = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] <= 0) continue;
    for (Eigen::Index j = 0; j < y.size(); ++j) {
      if (y[j] > 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

inline double direct_r2(const Vector& y, const Vector& p) {
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - p[i]) * (y[i] - p[i]);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  return 1.0 - ss_res / ss_tot;
}

// argmin 1/2 ||X w - y||^2 + lambda/2 ||w||^2
inline Vector ridge(const Matrix& x, const Vector& y, double lambda) {
  Eigen::MatrixXd a = x.transpose() * x;
  a += lambda * Eigen::MatrixXd::Identity(x.cols(), x.cols());
  return a.fullPivLu().solve(x.transpose() * y);
}

inline std::pair<Matrix, Vector> concat(const std::vector<LabeledShard>& shards) {
  Eigen::Index n = 0;
  for (const auto& s : shards) n += s.size();
  Matrix x(n, shards.front().dim());
  Vector y(n);
  Eigen::Index r = 0;
  for (const auto& s : shards)
    for (Eigen::Index i = 0; i < s.size(); ++i, ++r) {
      x.row(r) = s.features.row(i);
      y[r] = s.labels[i];
    }
  return {x, y};
}

// w = (1/lambda) sum_k sum_i a_i (x_i + b_i), a_i label-signed for classification.
inline Vector primal(const std::vector<Vector>& alpha, const std::vector<Matrix>& beta,
                     const std::vector<LabeledShard>& shards, double lambda, TaskKind task) {
  Vector w = Vector::Zero(shards.front().dim());
  for (std::size_t k = 0; k < shards.size(); ++k)
    for (Eigen::Index i = 0; i < shards[k].size(); ++i) {
      const double a = task == TaskKind::kRegression ? alpha[k][i] : alpha[k][i] * shards[k].labels[i];
      for (Eigen::Index j = 0; j < w.size(); ++j) w[j] += a * (shards[k].features(i, j) + beta[k](i, j)) / lambda;
    }
  return w;
}

struct Weights {
  double lambda_w, lambda_trusted, lambda_alpha, lambda_z;
};

// Full teaching objective, term by term.
inline double objective(const std::vector<Vector>& alpha, const std::vector<Matrix>& beta,
                        const std::vector<LabeledShard>& shards, const std::vector<TrustedShard>& trusted,
                        const Weights& h, TaskKind task) {
  const Vector w = primal(alpha, beta, shards, h.lambda_w, task);
  double v = 0.5 * h.lambda_w * w.dot(w);
  for (std::size_t k = 0; k < shards.size(); ++k)
    for (Eigen::Index i = 0; i < shards[k].size(); ++i) {
      const double a = alpha[k][i];
      if (task == TaskKind::kRegression) {
        v += 0.5 * a * a - a * shards[k].labels[i];
      } else {
        if (a > 0) v += a * std::log(a);
        if (a < 1) v += (1 - a) * std::log(1 - a);
      }
      v += h.lambda_alpha * std::abs(a);
      for (Eigen::Index j = 0; j < beta[k].cols(); ++j) v += h.lambda_z * beta[k](i, j) * beta[k](i, j);
    }
  for (const auto& t : trusted)
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      double score = 0.0;
      for (Eigen::Index j = 0; j < w.size(); ++j) score += t.features(i, j) * w[j];
      if (task == TaskKind::kRegression)
        v += h.lambda_trusted * (score - t.labels[i]) * (score - t.labels[i]);
      else
        v += h.lambda_trusted * std::log1p(std::exp(-t.labels[i] * score));
    }
  return v;
}

// Central differences of f at x along every coordinate.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-6) {
  Vector g(x.size());
  Vector p = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double up = f(p);
    p[i] = orig - h;
    const double down = f(p);
    p[i] = orig;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

inline Vector random_signs(std::mt19937_64& rng, Eigen::Index n) {
  std::bernoulli_distribution coin(0.5);
  Vector v(n);
  for (auto& x : v) x = coin(rng) ? 1.0 : -1.0;
  return v;
}

struct Federation {
  std::vector<LabeledShard> shards;
  std::vector<TrustedShard> trusted;
};

// K agents with n training and m trusted rows each. Regression targets follow
// a hidden linear model plus noise; classification labels are random signs
// correlated with that model.
inline Federation random_federation(std::mt19937_64& rng, int K, Eigen::Index n, Eigen::Index m, Eigen::Index d,
                                    TaskKind task) {
  Federation f;
  const Vector w = random_vector(rng, d);
  auto labels = [&](const Matrix& x) {
    Vector y = x * w + random_vector(rng, x.rows(), 0.3);
    if (task == TaskKind::kBinaryClassification)
      for (auto& v : y) v = v >= 0 ? 1.0 : -1.0;
    return y;
  };
  for (int k = 0; k < K; ++k) {
    LabeledShard s;
    s.agent_id = k;
    s.task = task;
    s.features = random_matrix(rng, n, d);
    s.labels = labels(s.features);
    TrustedShard t;
    t.agent_id = k;
    t.task = task;
    t.features = random_matrix(rng, m, d);
    t.labels = labels(t.features);
    f.shards.push_back(std::move(s));
    f.trusted.push_back(std::move(t));
  }
  return f;
}

inline double rel_err(const Vector& a, const Vector& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

}  // namespace oracle
