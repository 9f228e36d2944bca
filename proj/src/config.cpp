#include "comt/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace comt {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"experiment", {"task", "methods", "repetitions", "seed", "out", "schedule"}},
      {"data", {"source", "n", "d", "path", "allow_real_data", "n_clusters", "spacing", "stddev"}},
      {"corruption", {"mode", "theta_x", "theta_y", "flip_fraction"}},
      {"split", {"train_fraction", "trusted_fraction", "agents"}},
      {"hyper",
       {"lambda_w", "lambda_trusted", "lambda_alpha", "lambda_z", "rho", "gamma", "max_rounds", "rel_tol",
        "stall_window", "select_frac_threshold", "epsilon_box", "inner_iters", "trusted_newton_steps"}},
  };
  return keys;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

template <typename T>
void read(const pt::ptree& tree, const char* key, T& field) {
  const auto node = tree.get_child_optional(key);
  if (!node) return;
  const auto v = node->get_value_optional<T>();
  if (!v) fail(ErrorCode::kParseError, std::string("bad value for '") + key + "': '" + node->data() + "'");
  field = *v;
}

}  // namespace

ExperimentConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorCode::kParseError, e.what());
  }

  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    if (it == known_keys().end() || body.empty())
      fail(ErrorCode::kParseError, "unknown config section or top-level key '" + section + "'");
    for (const auto& [key, value] : body)
      if (!it->second.contains(key)) fail(ErrorCode::kParseError, "unknown key '" + section + "." + key + "'");
  }

  const auto task_text = tree.get_optional<std::string>("experiment.task");
  ExperimentConfig c = default_config(task_text ? parse_task(*task_text) : TaskKind::kRegression);

  try {
    if (const auto v = tree.get_optional<std::string>("experiment.methods")) {
      c.methods.clear();
      for (const auto& m : split_list(*v)) c.methods.push_back(parse_method(m));
    }
    read(tree, "experiment.repetitions", c.repetitions);
    read(tree, "experiment.seed", c.seed);
    if (const auto v = tree.get_optional<std::string>("experiment.out")) c.out_dir = *v;
    if (const auto v = tree.get_optional<std::string>("experiment.schedule")) {
      if (*v == "sequential")
        c.schedule = Schedule::kSequential;
      else if (*v == "parallel")
        c.schedule = Schedule::kParallel;
      else
        fail(ErrorCode::kParseError, "schedule must be sequential or parallel");
    }

    if (const auto v = tree.get_optional<std::string>("data.source")) c.source = parse_data_source(*v);
    read(tree, "data.n", c.n);
    read(tree, "data.d", c.d);
    if (const auto v = tree.get_optional<std::string>("data.path")) c.data_path = *v;
    read(tree, "data.allow_real_data", c.allow_real_data);
    read(tree, "data.n_clusters", c.geometry.n_clusters);
    read(tree, "data.spacing", c.geometry.spacing);
    read(tree, "data.stddev", c.geometry.stddev);

    if (const auto v = tree.get_optional<std::string>("corruption.mode")) c.corruption.mode = parse_corruption_mode(*v);
    read(tree, "corruption.theta_x", c.corruption.theta_x);
    read(tree, "corruption.theta_y", c.corruption.theta_y);
    read(tree, "corruption.flip_fraction", c.corruption.flip_fraction);

    read(tree, "split.train_fraction", c.split.train_fraction);
    read(tree, "split.trusted_fraction", c.split.trusted_fraction);
    read(tree, "split.agents", c.split.num_agents);

    auto& hp = c.hp;
    read(tree, "hyper.lambda_w", hp.lambda_w);
    read(tree, "hyper.lambda_trusted", hp.lambda_trusted);
    if (tree.get_child_optional("hyper.lambda_alpha")) {
      double v = 0.0;
      read(tree, "hyper.lambda_alpha", v);
      c.lambda_alpha = v;
    }
    read(tree, "hyper.lambda_z", hp.lambda_z);
    read(tree, "hyper.rho", hp.rho);
    if (const auto v = tree.get_optional<std::string>("hyper.gamma")) {
      hp.gamma.clear();
      for (const auto& g : split_list(*v)) hp.gamma.push_back(std::stod(g));
    }
    read(tree, "hyper.max_rounds", hp.max_rounds);
    read(tree, "hyper.rel_tol", hp.rel_tol);
    read(tree, "hyper.stall_window", hp.stall_window);
    read(tree, "hyper.select_frac_threshold", hp.select_frac_threshold);
    read(tree, "hyper.epsilon_box", hp.epsilon_box);
    read(tree, "hyper.inner_iters", hp.inner_iters);
    read(tree, "hyper.trusted_newton_steps", hp.trusted_newton_steps);
  } catch (const pt::ptree_error& e) {
    fail(ErrorCode::kParseError, e.what());
  } catch (const std::invalid_argument& e) {
    fail(ErrorCode::kParseError, std::string("bad number in config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open config " + path.string());
  try {
    return parse_config(in);
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace comt
