#pragma once

#include <filesystem>
#include <iosfwd>

#include "comt/experiment.hpp"

namespace comt {

// INI layout:
//   [experiment] task, methods (comma list), repetitions, seed, out, schedule
//   [data]       source, n, d, path, allow_real_data, n_clusters, spacing, stddev
//   [corruption] mode, theta_x, theta_y, flip_fraction
//   [split]      train_fraction, trusted_fraction, agents
//   [hyper]      lambda_w, lambda_trusted, lambda_alpha, lambda_z, rho, gamma (comma list),
//                max_rounds, rel_tol, stall_window, select_frac_threshold,
//                epsilon_box, inner_iters, trusted_newton_steps
// Missing keys keep default_config(task); unknown keys are a ParseError.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace comt
