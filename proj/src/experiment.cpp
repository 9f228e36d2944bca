#include "comt/experiment.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "comt/dataset_io.hpp"
#include "comt/duallearn.hpp"

namespace comt {

namespace {

std::string fmt(double value) {
  std::array<char, 32> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) fail(ErrorCode::kIoError, "cannot format number");
  return {buf.data(), end};
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path.string());
  return out;
}

// Clean source data; identical for every repetition.
LabeledData load_source(const ExperimentConfig& c) {
  switch (c.source) {
    case DataSource::kSynthetic: {
      const std::uint64_t seed = derive_seed(c.seed, "data");
      Dataset ds = c.task == TaskKind::kRegression
                       ? gen_regression(seed, c.n, c.d, c.geometry)
                       : gen_classification(seed, c.n, c.d, c.geometry.n_clusters, c.geometry);
      return {std::move(ds.features), std::move(ds.labels)};
    }
    case DataSource::kCsv: {
      LabeledData data;
      read_dataset_csv(c.data_path, data.features, data.labels);
      check_labels(data.labels, c.task, c.data_path.string());
      return data;
    }
    case DataSource::kLibsvm:
      if (!c.allow_real_data)
        fail(ErrorCode::kInvalidArgument, "LIBSVM input requires allow_real_data (--real-data)");
      return load_libsvm(c.data_path, c.task, c.d > 0 ? std::optional<Eigen::Index>(c.d) : std::nullopt);
  }
  fail(ErrorCode::kInvalidArgument, "unknown data source");
}

double evaluate(TaskKind task, const Vector& w, const Matrix& x, const Vector& y) {
  const Vector scores = x * w;
  return task == TaskKind::kRegression ? r_squared(y, scores) : auc(y, scores);
}

double severity_y(const CorruptionSpec& c) {
  return c.mode == CorruptionMode::kLabelFlipOnly ? c.flip_fraction : c.theta_y;
}

}  // namespace

std::string_view to_string(DataSource source) {
  switch (source) {
    case DataSource::kSynthetic: return "synthetic";
    case DataSource::kCsv: return "csv";
    case DataSource::kLibsvm: return "libsvm";
  }
  return "unknown";
}

DataSource parse_data_source(std::string_view text) {
  if (text == "synthetic") return DataSource::kSynthetic;
  if (text == "csv") return DataSource::kCsv;
  if (text == "libsvm") return DataSource::kLibsvm;
  fail(ErrorCode::kInvalidArgument, "unknown data source '" + std::string(text) + "'");
}

void ExperimentConfig::validate() const {
  if (repetitions < 1) fail(ErrorCode::kInvalidArgument, "repetitions must be at least 1");
  if (methods.empty()) fail(ErrorCode::kInvalidArgument, "at least one method is required");
  if (split.num_agents < 1) fail(ErrorCode::kInvalidArgument, "agents must be at least 1");
  if (source == DataSource::kSynthetic && (n < 1 || d < 1))
    fail(ErrorCode::kInvalidArgument, "synthetic n and d must be positive");
  if (source != DataSource::kSynthetic && data_path.empty())
    fail(ErrorCode::kInvalidArgument, "file-backed data source needs a path");
  if (lambda_alpha && *lambda_alpha < 0.0) fail(ErrorCode::kInvalidArgument, "lambda_alpha must be nonnegative");
  if (corruption.theta_x < 0.0 || corruption.theta_y < 0.0)
    fail(ErrorCode::kInvalidArgument, "corruption levels must be nonnegative");
  if (corruption.flip_fraction < 0.0 || corruption.flip_fraction > 1.0)
    fail(ErrorCode::kInvalidArgument, "flip_fraction must lie in [0,1]");
  if (task == TaskKind::kRegression && corruption.mode == CorruptionMode::kLabelFlipOnly)
    fail(ErrorCode::kInvalidArgument, "label-flip corruption needs a classification task");
  if (task == TaskKind::kBinaryClassification && corruption.mode == CorruptionMode::kGaussianFeaturesAndTargets)
    fail(ErrorCode::kInvalidArgument, "classification takes gaussian-features or label-flip corruption");
  hp.validate(static_cast<std::size_t>(split.num_agents));
}

ExperimentConfig default_config(TaskKind task) {
  ExperimentConfig c;
  c.task = task;
  if (task == TaskKind::kRegression) {
    c.corruption = {0.6, 0.6, 0.0, CorruptionMode::kGaussianFeaturesAndTargets};
    c.hp.max_rounds = 1500;
  } else {
    c.corruption = {0.0, 0.0, 0.4, CorruptionMode::kLabelFlipOnly};
    c.hp.max_rounds = 2000;
    c.hp.lambda_w = 10.0;
  }
  return c;
}

double default_lambda_alpha(std::span<const LabeledShard> shards, TaskKind task) {
  if (task == TaskKind::kBinaryClassification) return 0.5;
  double total = 0.0;
  Eigen::Index count = 0;
  for (const auto& s : shards) {
    total += s.labels.cwiseAbs().sum();
    count += s.size();
  }
  return count > 0 ? 0.25 * total / static_cast<double>(count) : 0.0;
}

std::vector<TrialOutcome> run_repetition(const ExperimentConfig& config, int rep) {
  const LabeledData data = load_source(config);
  const std::uint64_t rep_seed = derive_seed(config.seed, "repetition", static_cast<std::uint64_t>(rep));

  SplitSpec split = config.split;
  split.seed = derive_seed(rep_seed, "split");
  SplitResult parts = split_and_shard(data.features, data.labels, config.task, split);

  const std::uint64_t corrupt_seed = derive_seed(rep_seed, "corrupt");
  corrupt_shards(parts.shards, config.corruption, corrupt_seed);
  if (config.corruption.mode == CorruptionMode::kLabelFlipOnly && config.corruption.theta_x > 0.0) {
    CorruptionSpec features_only = config.corruption;
    features_only.mode = CorruptionMode::kGaussianFeaturesOnly;
    corrupt_shards(parts.shards, features_only, derive_seed(corrupt_seed, "features"));
  }

  HyperParams hp = config.hp;
  hp.lambda_alpha = config.lambda_alpha.value_or(default_lambda_alpha(parts.shards, config.task));
  RunOptions options;
  options.schedule = config.schedule;

  std::vector<TrialOutcome> outcomes;
  for (const Method method : config.methods) {
    TrialOutcome t;
    t.method = method;
    t.repetition = rep;
    const auto start = std::chrono::steady_clock::now();
    try {
      t.run = run_method(method, parts.shards, parts.trusted, hp, config.task, options);
    } catch (const Error& e) {
      fail(e.code(), "repetition " + std::to_string(rep) + ", method " + std::string(to_string(method)) + ": " +
                         e.what());
    }
    t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    t.metric = evaluate(config.task, t.run.model.w, parts.test_features, parts.test_labels);
    outcomes.push_back(std::move(t));
  }
  return outcomes;
}

std::vector<ResultRow> aggregate(const ExperimentConfig& config, std::span<const TrialOutcome> outcomes) {
  std::vector<ResultRow> rows;
  for (const Method method : config.methods) {
    std::vector<const TrialOutcome*> mine;
    for (const auto& o : outcomes)
      if (o.method == method) mine.push_back(&o);
    if (mine.empty()) continue;
    const double count = static_cast<double>(mine.size());
    ResultRow row;
    row.method = method;
    row.theta_x = config.corruption.theta_x;
    row.theta_y = severity_y(config.corruption);
    row.eta = config.split.trusted_fraction;
    double sum = 0.0, rho = 0.0, seconds = 0.0;
    for (const auto* o : mine) {
      sum += o->metric;
      rho += o->run.model.rho_fraction;
      seconds += o->seconds;
    }
    row.avg = sum / count;
    double sq = 0.0;
    for (const auto* o : mine) sq += (o->metric - row.avg) * (o->metric - row.avg);
    row.var = sq / count;
    if (method != Method::kTiOnly) row.rho = rho / count;
    row.kappa = seconds / count;
    rows.push_back(row);
  }
  return rows;
}

std::filesystem::path cmd_gen(const ExperimentConfig& config) {
  if (config.source != DataSource::kSynthetic) fail(ErrorCode::kInvalidArgument, "gen needs a synthetic data source");
  const std::uint64_t seed = derive_seed(config.seed, "data");
  const Dataset ds = config.task == TaskKind::kRegression
                         ? gen_regression(seed, config.n, config.d, config.geometry)
                         : gen_classification(seed, config.n, config.d, config.geometry.n_clusters, config.geometry);
  const auto csv = config.out_dir / "dataset.csv";
  write_dataset_csv(csv, ds.features, ds.labels);
  DatasetMeta meta;
  meta.task = config.task;
  meta.seed = config.seed;
  meta.n = config.n;
  meta.d = config.d;
  meta.geometry = config.geometry;
  meta.true_w = ds.true_w;
  write_meta(meta_path_for(csv), meta);
  return csv;
}

std::vector<ResultRow> cmd_run(const ExperimentConfig& config) {
  config.validate();
  std::vector<TrialOutcome> outcomes;
  for (int rep = 0; rep < config.repetitions; ++rep) {
    auto trial = run_repetition(config, rep);
    for (auto& t : trial) {
      write_trace_csv(config.out_dir / ("trace_" + std::string(to_string(t.method)) + "_" + std::to_string(rep) + ".csv"),
                      t.run.trace);
      outcomes.push_back(std::move(t));
    }
  }
  auto rows = aggregate(config, outcomes);
  write_results_csv(config.out_dir / "results.csv", rows);
  return rows;
}

void write_results_csv(const std::filesystem::path& path, std::span<const ResultRow> rows) {
  std::string text = "method,theta_x,theta_y,eta,avg,var,rho,kappa\n";
  for (const auto& r : rows) {
    text += std::string(to_string(r.method)) + "," + fmt(r.theta_x) + "," + fmt(r.theta_y) + "," + fmt(r.eta) + "," +
            fmt(r.avg) + "," + fmt(r.var) + "," + (r.rho ? fmt(*r.rho) : std::string()) + "," + fmt(r.kappa) + "\n";
  }
  auto out = open_out(path);
  out << text;
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "method,theta_x,theta_y,eta,avg,var,rho,kappa")
    fail(ErrorCode::kParseError, path.string() + ": unexpected header");
  std::vector<ResultRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() == 7) cells.emplace_back();
    if (cells.size() != 8) fail(ErrorCode::kParseError, path.string() + ":" + std::to_string(line_no) + ": bad row");
    try {
      ResultRow r;
      r.method = parse_method(cells[0]);
      r.theta_x = std::stod(cells[1]);
      r.theta_y = std::stod(cells[2]);
      r.eta = std::stod(cells[3]);
      r.avg = std::stod(cells[4]);
      r.var = std::stod(cells[5]);
      if (!cells[6].empty()) r.rho = std::stod(cells[6]);
      r.kappa = std::stod(cells[7]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      fail(ErrorCode::kParseError, path.string() + ":" + std::to_string(line_no) + ": bad number");
    }
  }
  return rows;
}

void write_trace_csv(const std::filesystem::path& path, std::span<const RoundTrace> trace) {
  std::string text = "round,objective,residual,bytes_up,bytes_down\n";
  for (const auto& t : trace)
    text += std::to_string(t.round) + "," + fmt(t.objective) + "," + fmt(t.primal_residual) + "," +
            std::to_string(t.bytes_up) + "," + std::to_string(t.bytes_down) + "\n";
  auto out = open_out(path);
  out << text;
}

std::string format_table(std::span<const ResultRow> rows) {
  std::string text;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-12s %8s %8s %8s %10s %10s %8s %10s\n", "method", "theta_x", "theta_y", "eta",
                "avg", "var", "rho", "kappa");
  text += buf;
  for (const auto& r : rows) {
    char rho[16] = "-";
    if (r.rho) std::snprintf(rho, sizeof rho, "%.3f", *r.rho);
    std::snprintf(buf, sizeof buf, "%-12s %8.3f %8.3f %8.4f %10.4f %10.2e %8s %10.3f\n",
                  std::string(to_string(r.method)).c_str(), r.theta_x, r.theta_y, r.eta, r.avg, r.var, rho, r.kappa);
    text += buf;
  }
  return text;
}

std::vector<ResultRow> cmd_report(const std::filesystem::path& dir, std::ostream& out) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) fail(ErrorCode::kIoError, "no results: " + dir.string() + " is not a directory");
  std::vector<fs::path> result_files;
  std::vector<fs::path> trace_files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name == "results.csv") result_files.push_back(entry.path());
    if (name.starts_with("trace_") && name.ends_with(".csv")) trace_files.push_back(entry.path());
  }
  std::sort(result_files.begin(), result_files.end());
  std::sort(trace_files.begin(), trace_files.end());

  std::vector<ResultRow> rows;
  for (const auto& f : result_files) {
    auto part = read_results_csv(f);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (rows.empty()) fail(ErrorCode::kIoError, "no results found under " + dir.string());

  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.theta_x != b.theta_x) return a.theta_x < b.theta_x;
    if (a.theta_y != b.theta_y) return a.theta_y < b.theta_y;
    if (a.eta != b.eta) return a.eta < b.eta;
    return static_cast<int>(a.method) < static_cast<int>(b.method);
  });
  out << format_table(rows);
  write_results_csv(dir / "report.csv", rows);

  for (const auto& f : trace_files) {
    std::ifstream in(f);
    std::string text, line;
    bool header = true;
    while (std::getline(in, line)) {
      if (header) {
        text += "round,objective,residual\n";
        header = false;
        continue;
      }
      std::size_t cut = line.find(',');
      if (cut != std::string::npos) cut = line.find(',', cut + 1);
      if (cut != std::string::npos) cut = line.find(',', cut + 1);
      text += line.substr(0, cut) + "\n";
    }
    std::string name = f.filename().string();
    name.replace(0, std::string("trace_").size(), "convergence_");
    auto o = open_out(f.parent_path() / name);
    o << text;
  }
  return rows;
}

}  // namespace comt
