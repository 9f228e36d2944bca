#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "comt/comtcore.hpp"
#include "comt/datamodel.hpp"

namespace comt {

enum class Method { kComt, kComtSubset, kTiOnly };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);

// kParallel forks one thread per agent for each local phase; reductions are
// always sequential in agent-id order, so both schedules give identical traces.
enum class Schedule { kSequential, kParallel };

struct RunOptions {
  Schedule schedule = Schedule::kSequential;
  LocalSolveOptions local{};
  // CoMT only. The server accepts a round's local steps only if the global
  // objective does not increase; otherwise agents drop them and the step
  // scale halves. Off reproduces the plain damped ADMM round.
  bool descent_guard = true;
  // Below this step scale a candidate is accepted unconditionally.
  double min_step_scale = 0x1p-30;
};

struct RunResult {
  Method method = Method::kComt;
  ModelParams model;
  std::vector<RoundTrace> trace;
  int rounds_used = 0;
  bool converged = false;
  DualState state;  // final dual state (empty alpha/beta for TI-only)
  std::size_t num_agents = 0;
  Eigen::Index dim = 0;
  // One-off handshake before round 1 that publishes the initial tau.
  std::uint64_t setup_bytes_up = 0;
  std::uint64_t setup_bytes_down = 0;
  int rejected_rounds = 0;
};

RunResult run_comt(std::span<const LabeledShard> shards, std::span<const TrustedShard> trusted, const HyperParams& hp,
                   TaskKind task, const RunOptions& options = {});

// Same loop with beta frozen at zero (selection only, no crafting).
RunResult run_comt_subset(std::span<const LabeledShard> shards, std::span<const TrustedShard> trusted,
                          const HyperParams& hp, TaskKind task, const RunOptions& options = {});

// Consensus ADMM on the trusted shards alone: ridge for regression,
// L2-regularized logistic regression for classification.
RunResult run_ti_only(std::span<const TrustedShard> trusted, const HyperParams& hp, TaskKind task,
                      const RunOptions& options = {});

RunResult run_method(Method method, std::span<const LabeledShard> shards, std::span<const TrustedShard> trusted,
                     const HyperParams& hp, TaskKind task, const RunOptions& options = {});

struct CommReport {
  bool ok = true;
  std::uint64_t expected_bytes_up = 0;    // per round
  std::uint64_t expected_bytes_down = 0;  // per round
  std::uint64_t payload_bytes_up = 0;     // d-dependent part of expected_bytes_up
  std::uint64_t payload_bytes_down = 0;
  std::vector<std::string> violations;
};

// Per-round wire traffic expected from the message schema alone; depends on
// K, d and the method, never on the shard sizes.
CommReport expected_traffic(Method method, std::size_t num_agents, Eigen::Index dim);

// Checks every round of the trace against expected_traffic.
CommReport comm_audit(const RunResult& result);

}  // namespace comt
