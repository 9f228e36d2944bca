#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "comt/datamodel.hpp"
#include "comt/fedsim.hpp"
#include "comt/synthgen.hpp"

namespace comt {

enum class DataSource { kSynthetic, kCsv, kLibsvm };

std::string_view to_string(DataSource source);
DataSource parse_data_source(std::string_view text);

struct ExperimentConfig {
  TaskKind task = TaskKind::kRegression;

  DataSource source = DataSource::kSynthetic;
  Eigen::Index n = 5000;  // synthetic only
  Eigen::Index d = 10;    // synthetic only; optional width override for LIBSVM
  ClusterGeometry geometry;
  std::filesystem::path data_path;  // kCsv / kLibsvm
  // File-backed sources must be switched on explicitly.
  bool allow_real_data = false;

  CorruptionSpec corruption;
  SplitSpec split;
  HyperParams hp;
  // Unset: derived from the training labels per repetition.
  std::optional<double> lambda_alpha;

  std::vector<Method> methods{Method::kComt, Method::kComtSubset, Method::kTiOnly};
  int repetitions = 1;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "comt_out";
  Schedule schedule = Schedule::kSequential;

  void validate() const;
};

// Task defaults before any config file or flag is applied.
ExperimentConfig default_config(TaskKind task);

// L1 weight scaled to the label magnitude of the training shards.
double default_lambda_alpha(std::span<const LabeledShard> shards, TaskKind task);

struct ResultRow {
  Method method = Method::kComt;
  double theta_x = 0.0;
  double theta_y = 0.0;
  double eta = 0.0;
  double avg = 0.0;
  double var = 0.0;
  std::optional<double> rho;  // CoMT variants only
  double kappa = 0.0;         // mean wall-clock seconds per repetition
};

// One repetition's raw outcome for one method.
struct TrialOutcome {
  Method method = Method::kComt;
  int repetition = 0;
  double metric = 0.0;
  double seconds = 0.0;
  RunResult run;
};

// Builds the federation for repetition `rep` (split, corruption of training
// shards only) and runs every configured method on it.
std::vector<TrialOutcome> run_repetition(const ExperimentConfig& config, int rep);

// Mean and population variance per method, in config.methods order.
std::vector<ResultRow> aggregate(const ExperimentConfig& config, std::span<const TrialOutcome> outcomes);

// Writes `<out>/dataset.csv` and its `.meta` sidecar; returns the CSV path.
std::filesystem::path cmd_gen(const ExperimentConfig& config);

// Writes `<out>/results.csv` and `<out>/trace_<method>_<rep>.csv`.
std::vector<ResultRow> cmd_run(const ExperimentConfig& config);

// Collects every results.csv under `dir`, prints the grid to `out`, writes
// `<dir>/report.csv` and `<dir>/convergence_<method>_<rep>.csv` per trace.
std::vector<ResultRow> cmd_report(const std::filesystem::path& dir, std::ostream& out);

void write_results_csv(const std::filesystem::path& path, std::span<const ResultRow> rows);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);
void write_trace_csv(const std::filesystem::path& path, std::span<const RoundTrace> trace);

std::string format_table(std::span<const ResultRow> rows);

}  // namespace comt
