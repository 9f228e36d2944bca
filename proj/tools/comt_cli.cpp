#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "comt/config.hpp"
#include "comt/experiment.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::string> task;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> methods;
  std::optional<double> theta_x;
  std::optional<double> theta_y;
  std::optional<double> eta;
  std::optional<double> flip;
  std::optional<int> agents;
  std::optional<int> repetitions;
  std::optional<long> n;
  std::optional<long> d;
  std::optional<int> max_rounds;
  std::optional<std::string> data_csv;
  std::optional<std::string> data_libsvm;
  bool real_data = false;
  bool parallel = false;
};

void add_common(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--config", o.config_path, "INI config file");
  cmd.add_option("--task", o.task, "regression | classification");
  cmd.add_option("--seed", o.seed, "master seed");
  cmd.add_option("--out", o.out, "output directory");
  cmd.add_option("--n", o.n, "synthetic instance count");
  cmd.add_option("--d", o.d, "synthetic feature count (LIBSVM width override)");
}

void add_run(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--method", o.methods, "comt, comt-subset, ti-only (comma list)")->delimiter(',');
  cmd.add_option("--theta-x", o.theta_x, "feature noise level");
  cmd.add_option("--theta-y", o.theta_y, "target noise level; flip fraction under label-flip");
  cmd.add_option("--eta", o.eta, "trusted fraction of the dataset");
  cmd.add_option("--flip", o.flip, "label flip fraction");
  cmd.add_option("--agents", o.agents, "number of agents K");
  cmd.add_option("--repetitions", o.repetitions, "randomized repetitions");
  cmd.add_option("--max-rounds", o.max_rounds, "round cap T");
  cmd.add_option("--data-csv", o.data_csv, "dataset CSV written by gen");
  cmd.add_option("--data-libsvm", o.data_libsvm, "LIBSVM file (needs --real-data)");
  cmd.add_flag("--real-data", o.real_data, "allow user-supplied real datasets");
  cmd.add_flag("--parallel", o.parallel, "one thread per agent");
}

comt::ExperimentConfig build_config(const Overrides& o) {
  comt::ExperimentConfig c;
  if (!o.config_path.empty())
    c = comt::load_config(o.config_path);
  else
    c = comt::default_config(o.task ? comt::parse_task(*o.task) : comt::TaskKind::kRegression);
  if (o.task && !o.config_path.empty()) {
    const auto task = comt::parse_task(*o.task);
    if (task != c.task) {
      // Switching task resets task-specific defaults.
      auto fresh = comt::default_config(task);
      c.task = task;
      c.corruption = fresh.corruption;
      c.hp.max_rounds = fresh.hp.max_rounds;
    }
  }
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out_dir = *o.out;
  if (!o.methods.empty()) {
    c.methods.clear();
    for (const auto& m : o.methods) c.methods.push_back(comt::parse_method(m));
  }
  if (o.theta_x) c.corruption.theta_x = *o.theta_x;
  if (o.theta_y) {
    if (c.corruption.mode == comt::CorruptionMode::kLabelFlipOnly)
      c.corruption.flip_fraction = *o.theta_y;
    else
      c.corruption.theta_y = *o.theta_y;
  }
  if (o.flip) c.corruption.flip_fraction = *o.flip;
  if (o.eta) c.split.trusted_fraction = *o.eta;
  if (o.agents) c.split.num_agents = *o.agents;
  if (o.repetitions) c.repetitions = *o.repetitions;
  if (o.n) c.n = *o.n;
  if (o.d) c.d = *o.d;
  if (o.max_rounds) c.hp.max_rounds = *o.max_rounds;
  if (o.data_csv) {
    c.source = comt::DataSource::kCsv;
    c.data_path = *o.data_csv;
  }
  if (o.data_libsvm) {
    c.source = comt::DataSource::kLibsvm;
    c.data_path = *o.data_libsvm;
    if (!o.d) c.d = 0;
  }
  if (o.real_data) c.allow_real_data = true;
  if (o.parallel) c.schedule = comt::Schedule::kParallel;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collaborative machine teaching experiments"};
  app.require_subcommand(1);

  Overrides gen_opts, run_opts;
  std::string report_dir;

  auto* gen = app.add_subcommand("gen", "write a synthetic dataset and its metadata");
  add_common(*gen, gen_opts);
  auto* run = app.add_subcommand("run", "run repeated trials and write results and traces");
  add_common(*run, run_opts);
  add_run(*run, run_opts);
  auto* report = app.add_subcommand("report", "tabulate results and emit convergence CSVs");
  report->add_option("--out", report_dir, "directory holding results")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto path = comt::cmd_gen(build_config(gen_opts));
      std::cout << "wrote " << path.string() << "\n";
    } else if (run->parsed()) {
      const auto config = build_config(run_opts);
      const auto rows = comt::cmd_run(config);
      std::cout << comt::format_table(rows);
      std::cout << "wrote " << (config.out_dir / "results.csv").string() << "\n";
    } else if (report->parsed()) {
      comt::cmd_report(report_dir, std::cout);
    }
  } catch (const comt::Error& e) {
    std::cerr << "error [" << comt::to_string(e.code()) << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
