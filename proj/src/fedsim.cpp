#include "comt/fedsim.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <thread>

#include "comt/wire.hpp"

namespace comt {

namespace {

void for_each_agent(std::size_t count, Schedule schedule, const std::function<void(std::size_t)>& body) {
  if (schedule == Schedule::kSequential || count < 2) {
    for (std::size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  {
    std::vector<std::jthread> workers;
    workers.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
      workers.emplace_back([&, k] {
        try {
          body(k);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Relative-change stall detector shared by all runners.
class StallMonitor {
 public:
  StallMonitor(double rel_tol, int window) : rel_tol_(rel_tol), window_(window) {}

  void observe(double value) {
    if (has_prev_ && std::abs(value - prev_) <= rel_tol_ * std::abs(prev_))
      ++stalled_;
    else
      stalled_ = 0;
    prev_ = value;
    has_prev_ = true;
  }

  bool stalled() const { return stalled_ >= window_; }

 private:
  double rel_tol_;
  int window_;
  double prev_ = 0.0;
  bool has_prev_ = false;
  int stalled_ = 0;
};

bool residual_small(double residual, const Vector& reference) { return residual <= 1e-3 * reference.norm(); }

// Agent-side view of the CoMT protocol: private data, committed dual block,
// the pending candidate and the last values received from the server.
struct ComtAgent {
  const LabeledShard* shard = nullptr;
  const TrustedShard* trusted = nullptr;
  Vector alpha;
  Matrix beta;
  Vector next_alpha;
  Matrix next_beta;
  Vector tau;
  Vector next_tau;
  Vector theta;
  Vector u;
  bool repair = false;      // the server rejected the last candidate
  bool recovering = false;  // alpha-only steps until a candidate is accepted
};

// Values of the first scalar of a state broadcast.
constexpr double kAccepted = 1.0;
constexpr double kRejected = 0.0;
constexpr double kRepaired = 2.0;

RunResult run_comt_impl(Method method, std::span<const LabeledShard> shards, std::span<const TrustedShard> trusted,
                        const HyperParams& hp, TaskKind task, const RunOptions& options) {
  validate_federation(shards, trusted);
  if (shards.front().task != task) fail(ErrorCode::kInvalidArgument, "shard task differs from the requested task");
  hp.validate(shards.size());

  const bool craft = method == Method::kComt;
  const std::size_t K = shards.size();
  const Eigen::Index d = shards.front().dim();
  const bool cls = task == TaskKind::kBinaryClassification;
  LocalSolveOptions local = options.local;
  local.inner_iters = hp.inner_iters;

  std::vector<ComtAgent> agents(K);
  for (std::size_t k = 0; k < K; ++k) {
    auto& a = agents[k];
    a.shard = &shards[k];
    a.trusted = &trusted[k];
    // Logistic duals start at the lower box edge, the feasible point nearest 0.
    a.alpha = cls ? Vector::Constant(shards[k].size(), hp.epsilon_box) : Vector::Zero(shards[k].size());
    a.beta = Matrix::Zero(shards[k].size(), d);
    a.theta = Vector::Zero(d);
    a.u = Vector::Zero(d);
  }

  Transport transport(K);
  Vector tau = Vector::Zero(d);
  Vector theta = Vector::Zero(d);
  Vector u = Vector::Zero(d);

  // Handshake: publish the initial tau and the initial objective.
  for (std::size_t k = 0; k < K; ++k) {
    const auto& a = agents[k];
    transport.send_up(serialize(AgentUpMessage{0, static_cast<std::uint16_t>(k), MessageTag::kTauContribution,
                                               {agent_contribution(a.alpha, a.beta, *a.shard, hp.lambda_w)},
                                               {agent_private_objective(*a.shard, a.alpha, a.beta, hp)}}));
  }
  double committed_objective = 0.0;
  for (const auto& msg : transport.collect_up()) {
    tau += msg.payload[0];
    committed_objective += msg.scalars[0];
  }
  committed_objective += 0.5 * hp.lambda_w * tau.squaredNorm();
  transport.broadcast(ServerBroadcast{0, MessageTag::kTauBroadcast, {tau}, {}});
  for (std::size_t k = 0; k < K; ++k) agents[k].tau = transport.receive(k).payload[0];
  for (std::size_t k = 0; k < K; ++k)
    committed_objective += hp.lambda_trusted * trusted_loss(*agents[k].trusted, agents[k].tau);

  RunResult result;
  result.method = method;
  result.num_agents = K;
  result.dim = d;
  result.setup_bytes_up = transport.bytes_up();
  result.setup_bytes_down = transport.bytes_down();

  auto snapshot = [&] {
    DualState state;
    for (const auto& a : agents) {
      state.alpha.push_back(a.alpha);
      state.beta.push_back(a.beta);
    }
    state.theta_tilde = theta;
    state.tau = tau;
    state.u = u;
    return state;
  };

  double step_scale = 1.0;
  // After a rejected round the next one re-anchors theta_tilde and u at the
  // committed tau so that the following local step descends the objective.
  bool repair = false;
  StallMonitor monitor(hp.rel_tol, hp.stall_window);
  for (int round = 1; round <= hp.max_rounds; ++round) {
    transport.reset_counters();
    const auto r32 = static_cast<std::uint32_t>(round);

    // Local teaching step on every agent, held as a candidate.
    for_each_agent(K, options.schedule, [&](std::size_t k) {
      auto& a = agents[k];
      if (a.repair) {
        a.next_alpha = a.alpha;
        a.next_beta = a.beta;
      } else {
        // A joint (alpha, beta) step need not descend along its segment; with
        // beta fixed the local problem is convex in alpha.
        const bool move_beta = craft && !a.recovering;
        const LocalSubproblem sub =
            make_local_subproblem(*a.shard, a.alpha, a.beta, a.tau, a.theta, a.u, hp, move_beta);
        const LocalUpdate step = solve_local(sub, local);
        const double damping = step_scale * hp.gamma_for(k) / static_cast<double>(K);
        a.next_alpha = a.alpha + damping * step.delta_alpha;
        a.next_beta = move_beta ? Matrix(a.beta + damping * step.delta_beta) : a.beta;
        if (cls) a.next_alpha = a.next_alpha.cwiseMax(hp.epsilon_box).cwiseMin(1.0 - hp.epsilon_box);
      }
      transport.send_up(serialize(AgentUpMessage{r32, static_cast<std::uint16_t>(k), MessageTag::kTauContribution,
                                                 {agent_contribution(a.next_alpha, a.next_beta, *a.shard, hp.lambda_w)},
                                                 {agent_private_objective(*a.shard, a.next_alpha, a.next_beta, hp)}}));
    });

    Vector next_tau = Vector::Zero(d);
    double candidate_objective = 0.0;
    for (const auto& msg : transport.collect_up()) {
      next_tau += msg.payload[0];
      candidate_objective += msg.scalars[0];
    }
    candidate_objective += 0.5 * hp.lambda_w * next_tau.squaredNorm();
    transport.broadcast(ServerBroadcast{r32, MessageTag::kTauBroadcast, {next_tau}, {}});

    // Trusted-set step at the candidate tau; in a repair round the weighted
    // trusted-loss gradient takes its place.
    for_each_agent(K, options.schedule, [&](std::size_t k) {
      auto& a = agents[k];
      a.next_tau = transport.receive(k).payload[0];
      Vector update = a.repair ? Vector(hp.lambda_trusted * trusted_loss_gradient(*a.trusted, a.next_tau))
                             : solve_trusted(*a.trusted, a.theta, a.next_tau, a.u, hp);
      transport.send_up(serialize(AgentUpMessage{r32, static_cast<std::uint16_t>(k), MessageTag::kThetaDelta,
                                                 {std::move(update)},
                                                 {hp.lambda_trusted * trusted_loss(*a.trusted, a.next_tau)}}));
    });

    Vector update_sum = Vector::Zero(d);
    for (const auto& msg : transport.collect_up()) {
      update_sum += msg.payload[0];
      candidate_objective += msg.scalars[0];
    }
    const bool was_repair = repair;
    bool accept = true;
    double flag = kAccepted;
    if (was_repair) {
      flag = kRepaired;
      tau = next_tau;
      theta = tau;
      u = -update_sum / hp.rho;
      committed_objective = candidate_objective;
      repair = false;
    } else {
      accept = !options.descent_guard || !(candidate_objective > committed_objective) ||
               step_scale <= options.min_step_scale;
      if (accept) {
        tau = next_tau;
        theta += update_sum / static_cast<double>(K);
        u += theta - tau;
        committed_objective = candidate_objective;
        step_scale = std::min(1.0, 2.0 * step_scale);
      } else {
        flag = kRejected;
        step_scale *= 0.5;
        repair = true;
        ++result.rejected_rounds;
      }
    }
    transport.broadcast(
        ServerBroadcast{r32, MessageTag::kStateBroadcast, {theta, u}, {flag, step_scale}});
    for (std::size_t k = 0; k < K; ++k) {
      auto& a = agents[k];
      const ServerBroadcast msg = transport.receive(k);
      a.theta = msg.payload[0];
      a.u = msg.payload[1];
      a.repair = msg.scalars[0] == kRejected;
      if (msg.scalars[0] == kRepaired) a.recovering = true;
      if (msg.scalars[0] == kAccepted) a.recovering = false;
      if (!a.repair) {
        a.alpha = std::move(a.next_alpha);
        a.beta = std::move(a.next_beta);
        a.tau = a.next_tau;
      }
    }
    // Instrumentation only: the simulator evaluates the global objective.
    const DualState state = snapshot();
    if (!state.all_finite()) fail(ErrorCode::kNonFiniteIterate, "dual state diverged in round " + std::to_string(round));
    RoundTrace rt;
    rt.round = round;
    rt.objective = eval_comt_objective(state, shards, trusted, hp, task);
    rt.primal_residual = (theta - tau).norm();
    rt.bytes_up = transport.bytes_up();
    rt.bytes_down = transport.bytes_down();
    result.trace.push_back(rt);
    result.rounds_used = round;

    // Rejected and repair rounds leave the duals as they were and do not count as stalls.
    if (!accept || was_repair) continue;
    monitor.observe(rt.objective);
    if (monitor.stalled() && residual_small(rt.primal_residual, tau)) {
      result.converged = true;
      break;
    }
  }

  result.state = snapshot();
  if (result.rounds_used == 0) {
    result.model.w = theta;
    result.model.selected.assign(K, {});
    result.model.rho_fraction = 0.0;
    return result;
  }
  const SelectionMask mask = select_subset(result.state.alpha, hp.select_frac_threshold);
  result.model = extract_model(result.state, mask, shards, hp, task);
  return result;
}

// Logistic or squared local loss for the trusted-only baseline.
struct TiAgent {
  const TrustedShard* data = nullptr;
  Vector w;
  Vector u;
  Vector z;
};

double ti_local_loss(const TrustedShard& t, const Vector& w) {
  if (t.task == TaskKind::kRegression) return 0.5 * trusted_loss(t, w);
  return trusted_loss(t, w);
}

// argmin loss(w) + rho/2 ||w - anchor||^2
Vector ti_local_solve(const TrustedShard& t, const Vector& anchor, const Vector& warm, double rho) {
  if (t.task == TaskKind::kRegression) {
    Eigen::MatrixXd system = t.features.transpose() * t.features;
    system.diagonal().array() += rho;
    return system.llt().solve(t.features.transpose() * t.labels + rho * anchor);
  }
  // Reuse the trusted-step Newton solver: with lambda_trusted = 1, tau = anchor, u = 0.
  HyperParams hp;
  hp.lambda_trusted = 1.0;
  hp.rho = rho;
  hp.trusted_newton_steps = 50;
  return warm + solve_trusted(t, warm, anchor, Vector::Zero(anchor.size()), hp);
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kComt: return "comt";
    case Method::kComtSubset: return "comt-subset";
    case Method::kTiOnly: return "ti-only";
  }
  return "unknown";
}

Method parse_method(std::string_view text) {
  if (text == "comt") return Method::kComt;
  if (text == "comt-subset") return Method::kComtSubset;
  if (text == "ti-only") return Method::kTiOnly;
  fail(ErrorCode::kInvalidArgument, "unknown method '" + std::string(text) + "'");
}

RunResult run_comt(std::span<const LabeledShard> shards, std::span<const TrustedShard> trusted, const HyperParams& hp,
                   TaskKind task, const RunOptions& options) {
  return run_comt_impl(Method::kComt, shards, trusted, hp, task, options);
}

RunResult run_comt_subset(std::span<const LabeledShard> shards, std::span<const TrustedShard> trusted,
                          const HyperParams& hp, TaskKind task, const RunOptions& options) {
  return run_comt_impl(Method::kComtSubset, shards, trusted, hp, task, options);
}

RunResult run_ti_only(std::span<const TrustedShard> trusted, const HyperParams& hp, TaskKind task,
                      const RunOptions& options) {
  if (trusted.empty()) fail(ErrorCode::kInsufficientData, "no trusted shards");
  const std::size_t K = trusted.size();
  const Eigen::Index d = trusted.front().dim();
  for (std::size_t k = 0; k < K; ++k) {
    if (trusted[k].size() < 1) fail(ErrorCode::kInsufficientData, "trusted shard " + std::to_string(k) + " is empty");
    if (trusted[k].dim() != d) fail(ErrorCode::kDimensionMismatch, "trusted shards disagree on feature width");
    if (trusted[k].task != task) fail(ErrorCode::kInvalidArgument, "trusted task differs from the requested task");
    check_labels(trusted[k].labels, task, "trusted shard " + std::to_string(k));
  }
  hp.validate(K);

  std::vector<TiAgent> agents(K);
  for (std::size_t k = 0; k < K; ++k) agents[k] = {&trusted[k], Vector::Zero(d), Vector::Zero(d), Vector::Zero(d)};

  Transport transport(K);
  Vector z = Vector::Zero(d);
  const double Kd = static_cast<double>(K);

  RunResult result;
  result.method = Method::kTiOnly;
  result.num_agents = K;
  result.dim = d;

  auto objective = [&](const Vector& w) {
    double v = 0.5 * hp.lambda_w * w.squaredNorm();
    for (const auto& t : trusted) v += ti_local_loss(t, w);
    return v;
  };

  StallMonitor monitor(hp.rel_tol, hp.stall_window);
  for (int round = 1; round <= hp.max_rounds; ++round) {
    transport.reset_counters();
    const auto r32 = static_cast<std::uint32_t>(round);

    for_each_agent(K, options.schedule, [&](std::size_t k) {
      auto& a = agents[k];
      a.w = ti_local_solve(*a.data, a.z - a.u, a.w, hp.rho);
      transport.send_up(
          serialize(AgentUpMessage{r32, static_cast<std::uint16_t>(k), MessageTag::kLocalModel, {a.w, a.u}, {}}));
    });

    Vector sum = Vector::Zero(d);
    double residual_sq = 0.0;
    const auto msgs = transport.collect_up();
    for (const auto& msg : msgs) sum += msg.payload[0] + msg.payload[1];
    // argmin lambda/2 ||z||^2 + rho/2 sum_k ||w_k + u_k - z||^2
    z = hp.rho * sum / (hp.lambda_w + Kd * hp.rho);
    for (const auto& msg : msgs) residual_sq += (msg.payload[0] - z).squaredNorm();
    transport.broadcast(ServerBroadcast{r32, MessageTag::kConsensusBroadcast, {z}, {}});
    for (std::size_t k = 0; k < K; ++k) {
      auto& a = agents[k];
      a.z = transport.receive(k).payload[0];
      a.u += a.w - a.z;
    }
    if (!z.allFinite()) fail(ErrorCode::kNonFiniteIterate, "consensus model diverged");

    RoundTrace rt;
    rt.round = round;
    rt.objective = objective(z);
    rt.primal_residual = std::sqrt(residual_sq);
    rt.bytes_up = transport.bytes_up();
    rt.bytes_down = transport.bytes_down();
    result.trace.push_back(rt);
    result.rounds_used = round;

    monitor.observe(rt.objective);
    if (monitor.stalled() && residual_small(rt.primal_residual, z)) {
      result.converged = true;
      break;
    }
  }

  result.model.w = z;
  result.model.selected.assign(K, {});
  result.model.rho_fraction = 0.0;
  result.state.theta_tilde = z;
  result.state.tau = z;
  result.state.u = Vector::Zero(d);
  return result;
}

RunResult run_method(Method method, std::span<const LabeledShard> shards, std::span<const TrustedShard> trusted,
                     const HyperParams& hp, TaskKind task, const RunOptions& options) {
  switch (method) {
    case Method::kComt: return run_comt(shards, trusted, hp, task, options);
    case Method::kComtSubset: return run_comt_subset(shards, trusted, hp, task, options);
    case Method::kTiOnly: return run_ti_only(trusted, hp, task, options);
  }
  fail(ErrorCode::kInvalidArgument, "unknown method");
}

CommReport expected_traffic(Method method, std::size_t num_agents, Eigen::Index dim) {
  const auto K = static_cast<std::uint64_t>(num_agents);
  const auto d = static_cast<std::size_t>(dim);
  CommReport r;
  if (method == Method::kTiOnly) {
    r.expected_bytes_up = K * frame_bytes(MessageTag::kLocalModel, d);
    r.expected_bytes_down = K * frame_bytes(MessageTag::kConsensusBroadcast, d);
    r.payload_bytes_up = K * 2 * d * 8;
    r.payload_bytes_down = K * d * 8;
  } else {
    r.expected_bytes_up = K * (frame_bytes(MessageTag::kTauContribution, d) + frame_bytes(MessageTag::kThetaDelta, d));
    r.expected_bytes_down =
        K * (frame_bytes(MessageTag::kTauBroadcast, d) + frame_bytes(MessageTag::kStateBroadcast, d));
    r.payload_bytes_up = K * 2 * d * 8;
    r.payload_bytes_down = K * 3 * d * 8;
  }
  return r;
}

CommReport comm_audit(const RunResult& result) {
  CommReport report = expected_traffic(result.method, result.num_agents, result.dim);
  for (const auto& rt : result.trace) {
    if (rt.bytes_up != report.expected_bytes_up) {
      report.ok = false;
      report.violations.push_back("round " + std::to_string(rt.round) + ": uplink " + std::to_string(rt.bytes_up) +
                                  " bytes, schema allows " + std::to_string(report.expected_bytes_up));
    }
    if (rt.bytes_down != report.expected_bytes_down) {
      report.ok = false;
      report.violations.push_back("round " + std::to_string(rt.round) + ": downlink " +
                                  std::to_string(rt.bytes_down) + " bytes, schema allows " +
                                  std::to_string(report.expected_bytes_down));
    }
  }
  return report;
}

}  // namespace comt
