// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "comt/experiment.hpp"
#include "comt/fedsim.hpp"
#include "comt/synthgen.hpp"
#include "oracles.hpp"

using namespace comt;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const Outcome& o, double secs) {
  std::printf("criterion %d: %s (%.1f s) %s\n", id, o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Every run made by this suite, for the traffic property.
std::vector<RunResult> audited;

// --- 1 -----------------------------------------------------------------------

constexpr int kGradInstances = 50;
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 10.0;

Outcome gradient_checks() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> agents(1, 3), rows(1, 30), dims(1, 5);
  std::uniform_real_distribution<double> box(0.05, 0.95), weight(0.2, 2.0);
  double worst = 0.0;
  for (int inst = 0; inst < kGradInstances; ++inst) {
    for (TaskKind task : {TaskKind::kRegression, TaskKind::kBinaryClassification}) {
      const int K = agents(rng);
      const Eigen::Index n = rows(rng), d = dims(rng);
      const auto f = oracle::random_federation(rng, K, n, 1 + n / 5, d, task);
      HyperParams hp;
      hp.lambda_w = weight(rng);
      hp.lambda_trusted = weight(rng);
      hp.lambda_z = weight(rng);
      hp.lambda_alpha = 0.0;
      DualState st = DualState::zeros(f.shards);
      for (std::size_t k = 0; k < f.shards.size(); ++k) {
        for (auto& a : st.alpha[k]) a = task == TaskKind::kRegression ? std::normal_distribution<double>()(rng) : box(rng);
        st.beta[k] = oracle::random_matrix(rng, n, d, 0.3);
      }
      const oracle::Weights w{hp.lambda_w, hp.lambda_trusted, 0.0, hp.lambda_z};
      const BlockGradient g = comt_objective_gradient(st, f.shards, f.trusted, hp, task);
      for (std::size_t k = 0; k < f.shards.size(); ++k) {
        const Vector fd_a = oracle::fd_gradient(
            [&](const Vector& a) {
              auto alpha = st.alpha;
              alpha[k] = a;
              return oracle::objective(alpha, st.beta, f.shards, f.trusted, w, task);
            },
            st.alpha[k]);
        const Vector flat_b = Eigen::Map<const Vector>(st.beta[k].data(), st.beta[k].size());
        const Vector fd_b = oracle::fd_gradient(
            [&](const Vector& b) {
              auto beta = st.beta;
              beta[k] = Eigen::Map<const Matrix>(b.data(), n, d);
              return oracle::objective(st.alpha, beta, f.shards, f.trusted, w, task);
            },
            flat_b);
        const Vector gb = Eigen::Map<const Vector>(g.beta[k].data(), g.beta[k].size());
        worst = std::max(worst, (g.alpha[k] - fd_a).norm() / std::max(fd_a.norm(), 1.0));
        worst = std::max(worst, (gb - fd_b).norm() / std::max(fd_b.norm(), 1.0));
      }
    }
  }
  return {worst < kGradTol, fmt("worst relative error %.2e over %d instances per task", worst, kGradInstances)};
}

// --- 2 -----------------------------------------------------------------------

constexpr double kOracleTrustedTol = 0.05;
constexpr double kOracleExactTol = 1e-3;
constexpr double kOracleSeconds = 30.0;

Outcome oracle_equivalence() {
  const Dataset ds = gen_regression(41, 2000, 10);
  const SplitResult s = split_and_shard(ds.features, ds.labels, ds.task, {0.4, 0.01, 42, 1});
  HyperParams hp;
  hp.lambda_alpha = 0.0;
  hp.lambda_z = 1e8;
  // The stall rule must not stop a slowly contracting proximal iteration early.
  hp.max_rounds = 5000;
  hp.rel_tol = 1e-13;
  const Vector ridge = oracle::ridge(s.shards[0].features, s.shards[0].labels, hp.lambda_w);

  const RunResult with_trusted = run_comt(s.shards, s.trusted, hp, TaskKind::kRegression);
  hp.lambda_trusted = 0.0;
  const RunResult plain = run_comt(s.shards, s.trusted, hp, TaskKind::kRegression);
  audited.push_back(with_trusted);
  audited.push_back(plain);
  const double e1 = oracle::rel_err(with_trusted.model.w, ridge);
  const double e2 = oracle::rel_err(plain.model.w, ridge);
  return {e1 < kOracleTrustedTol && e2 < kOracleExactTol,
          fmt("rel err %.2e with trusted term (< %.0e), %.2e without (< %.0e); rounds %d / %d", e1, kOracleTrustedTol,
              e2, kOracleExactTol, with_trusted.rounds_used, plain.rounds_used)};
}

// --- 3 -----------------------------------------------------------------------

constexpr int kDescentInstances = 20;
constexpr double kDescentSlack = 1e-8;
constexpr double kResidualRatio = 1e-3;

Outcome monotone_descent() {
  int increasing = 0, open_residual = 0;
  double worst_rise = 0.0, worst_ratio = 0.0;
  for (int inst = 0; inst < kDescentInstances; ++inst) {
    ExperimentConfig c = default_config(TaskKind::kRegression);
    c.n = 2000;
    c.split.trusted_fraction = 0.01;
    c.hp.max_rounds = 600;
    c.seed = 500 + static_cast<std::uint64_t>(inst);
    c.methods = {Method::kComt};
    const auto out = run_repetition(c, 0);
    const RunResult& r = out.front().run;
    audited.push_back(r);
    bool rose = false;
    for (std::size_t i = 1; i < r.trace.size(); ++i) {
      const double rise = r.trace[i].objective - r.trace[i - 1].objective;
      worst_rise = std::max(worst_rise, rise);
      rose |= rise > kDescentSlack;
    }
    increasing += rose;
    const double ratio = r.trace.back().primal_residual / r.state.tau.norm();
    worst_ratio = std::max(worst_ratio, ratio);
    open_residual += !(ratio < kResidualRatio);
  }
  return {increasing == 0 && open_residual == 0,
          fmt("%d/%d instances rise (worst %.2e), %d leave residual >= %.0e|tau| (worst ratio %.2e)", increasing,
              kDescentInstances, worst_rise, open_residual, kResidualRatio, worst_ratio)};
}

// --- 4, 6 --------------------------------------------------------------------

constexpr int kRepetitions = 10;
constexpr double kSubsetMargin = 0.01;
constexpr double kR2Floor = 0.9;
constexpr double kRegressionSeconds = 600.0;
constexpr double kRhoCeiling = 0.85;

std::vector<ResultRow> regression_rows;

const ResultRow& row_for(const std::vector<ResultRow>& rows, Method m) {
  for (const auto& r : rows)
    if (r.method == m) return r;
  std::fprintf(stderr, "missing result row\n");
  std::abort();
}

std::vector<ResultRow> run_grid(const ExperimentConfig& c) {
  std::vector<TrialOutcome> outcomes;
  for (int rep = 0; rep < c.repetitions; ++rep) {
    auto trial = run_repetition(c, rep);
    for (auto& t : trial) {
      audited.push_back(t.run);
      outcomes.push_back(std::move(t));
    }
  }
  return aggregate(c, outcomes);
}

Outcome robustness_ordering() {
  ExperimentConfig c = default_config(TaskKind::kRegression);
  c.n = 5000;
  c.d = 10;
  c.split.num_agents = 5;
  c.corruption = {0.6, 0.6, 0.0, CorruptionMode::kGaussianFeaturesAndTargets};
  c.split.trusted_fraction = 0.005;
  c.repetitions = kRepetitions;
  c.seed = 2024;
  regression_rows = run_grid(c);
  const double comt = row_for(regression_rows, Method::kComt).avg;
  const double subset = row_for(regression_rows, Method::kComtSubset).avg;
  const double ti = row_for(regression_rows, Method::kTiOnly).avg;
  return {comt > ti && comt >= subset - kSubsetMargin && comt >= kR2Floor,
          fmt("mean R2 comt %.4f, comt-subset %.4f, ti-only %.4f", comt, subset, ti)};
}

Outcome sparsity() {
  if (regression_rows.empty()) return {false, "criterion 4 produced no rows"};
  const auto& comt = row_for(regression_rows, Method::kComt);
  const auto& subset = row_for(regression_rows, Method::kComtSubset);
  const double a = comt.rho.value_or(1.0), b = subset.rho.value_or(1.0);
  return {a <= kRhoCeiling && b <= kRhoCeiling, fmt("rho comt %.3f, comt-subset %.3f (<= %.2f)", a, b, kRhoCeiling)};
}

// --- 5 -----------------------------------------------------------------------

constexpr double kAucGap = 0.02;
constexpr double kClassificationSeconds = 900.0;

Outcome label_flip() {
  ExperimentConfig c = default_config(TaskKind::kBinaryClassification);
  c.n = 5000;
  c.d = 10;
  c.split.num_agents = 5;
  c.corruption = {0.0, 0.0, 0.4, CorruptionMode::kLabelFlipOnly};
  c.split.trusted_fraction = 0.005;
  c.repetitions = kRepetitions;
  c.seed = 4048;
  c.methods = {Method::kComt, Method::kTiOnly};
  const auto rows = run_grid(c);
  const double comt = row_for(rows, Method::kComt).avg;
  const double ti = row_for(rows, Method::kTiOnly).avg;
  return {comt - ti >= kAucGap, fmt("mean AUC comt %.4f, ti-only %.4f, gap %.4f (>= %.2f)", comt, ti, comt - ti, kAucGap)};
}

// --- 7 -----------------------------------------------------------------------

Outcome privacy_schema() {
  std::size_t bad = 0;
  for (const auto& r : audited) bad += !comm_audit(r).ok;

  // Doubling every n_k leaves each round's traffic unchanged.
  bool doubling_ok = true;
  for (TaskKind task : {TaskKind::kRegression, TaskKind::kBinaryClassification}) {
    const Dataset small_ds = task == TaskKind::kRegression ? gen_regression(7, 1000, 10) : gen_classification(7, 1000, 10, 4);
    const Dataset big_ds = task == TaskKind::kRegression ? gen_regression(7, 2000, 10) : gen_classification(7, 2000, 10, 4);
    const SplitResult small = split_and_shard(small_ds.features, small_ds.labels, task, {0.4, 0.02, 8, 5});
    const SplitResult big = split_and_shard(big_ds.features, big_ds.labels, task, {0.4, 0.01, 8, 5});
    if (big.shards[0].size() != 2 * small.shards[0].size()) doubling_ok = false;
    HyperParams hp;
    hp.max_rounds = 10;
    hp.lambda_alpha = 0.1;
    for (Method m : {Method::kComt, Method::kComtSubset, Method::kTiOnly}) {
      const RunResult a = run_method(m, small.shards, small.trusted, hp, task);
      const RunResult b = run_method(m, big.shards, big.trusted, hp, task);
      bad += !comm_audit(a).ok + !comm_audit(b).ok;
      const std::size_t rounds = std::min(a.trace.size(), b.trace.size());
      if (rounds == 0) doubling_ok = false;
      for (std::size_t i = 0; i < rounds; ++i)
        doubling_ok &= a.trace[i].bytes_up == b.trace[i].bytes_up && a.trace[i].bytes_down == b.trace[i].bytes_down;
      doubling_ok &= a.setup_bytes_up == b.setup_bytes_up && a.setup_bytes_down == b.setup_bytes_down;
    }
  }
  return {bad == 0 && doubling_ok,
          fmt("%zu audited runs, %zu off-schema; doubling n_k %s per-round bytes", audited.size(), bad,
              doubling_ok ? "keeps" : "changes")};
}

// --- 8 -----------------------------------------------------------------------

constexpr double kScaleRatio = 8.0;
constexpr int kScaleRounds = 30;

double timed_run(Eigen::Index n) {
  const Dataset ds = gen_regression(99, n, 10);
  SplitResult s = split_and_shard(ds.features, ds.labels, ds.task, {0.4, 0.005, 100, 5});
  corrupt_shards(s.shards, {0.6, 0.6, 0.0, CorruptionMode::kGaussianFeaturesAndTargets}, 101);
  HyperParams hp;
  hp.max_rounds = kScaleRounds;
  hp.rel_tol = 1e-300;  // fixed round count
  hp.stall_window = kScaleRounds + 1;
  hp.lambda_alpha = 1.0;
  const auto start = Clock::now();
  const RunResult r = run_comt(s.shards, s.trusted, hp, TaskKind::kRegression);
  const double secs = seconds_since(start);
  audited.push_back(r);
  return r.rounds_used == kScaleRounds ? secs : 1e30;
}

Outcome scalability() {
  timed_run(2000);  // warm-up
  const double t10 = timed_run(10000);
  const double t50 = timed_run(50000);
  return {t50 < kScaleRatio * t10, fmt("%d rounds: n=10k %.2f s, n=50k %.2f s, ratio %.2f (< %.0f)", kScaleRounds, t10,
                                       t50, t50 / t10, kScaleRatio)};
}

// --- 9 -----------------------------------------------------------------------

constexpr int kMetricInputs = 1000;
constexpr double kMetricTol = 1e-12;

Outcome metric_correctness() {
  std::mt19937_64 rng(777);
  std::uniform_int_distribution<int> size(2, 40), ties(0, 5);
  double worst_auc = 0.0, worst_r2 = 0.0;
  for (int i = 0; i < kMetricInputs; ++i) {
    const Eigen::Index n = size(rng);
    Vector y = oracle::random_signs(rng, n);
    y[0] = 1.0;
    y[1] = -1.0;
    Vector s(n);
    if (i % 2 == 0)
      for (auto& v : s) v = ties(rng);
    else
      s = oracle::random_vector(rng, n);
    worst_auc = std::max(worst_auc, std::abs(auc(y, s) - oracle::brute_auc(y, s)));

    const Vector t = oracle::random_vector(rng, n, 3.0);
    const Vector p = t + oracle::random_vector(rng, n);
    worst_r2 = std::max(worst_r2, std::abs(r_squared(t, p) - oracle::direct_r2(t, p)));
  }
  return {worst_auc <= kMetricTol && worst_r2 <= kMetricTol,
          fmt("max |auc - brute| %.1e, max |r2 - direct| %.1e over %d inputs", worst_auc, worst_r2, kMetricInputs)};
}

void run(int id, double limit_seconds, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  const double secs = seconds_since(start);
  if (limit_seconds > 0 && secs >= limit_seconds) {
    o.pass = false;
    o.detail += fmt("; exceeded %.0f s budget", limit_seconds);
  }
  report(id, o, secs);
}

}  // namespace

int main() {
  run(1, kGradSeconds, gradient_checks);
  run(2, kOracleSeconds, oracle_equivalence);
  run(3, 0, monotone_descent);
  run(4, kRegressionSeconds, robustness_ordering);
  run(5, kClassificationSeconds, label_flip);
  run(6, 0, sparsity);
  run(7, 0, privacy_schema);
  run(8, 0, scalability);
  run(9, 0, metric_correctness);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
