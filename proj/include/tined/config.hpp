#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tined/distill.hpp"
#include "tined/models.hpp"

namespace tined {

/// Everything a run needs, with the bundled-benchmark defaults. Values
/// outside the documented search spaces are accepted with a warning.
struct RunConfig {
    std::string mode = "transductive";  // or "production"
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> seeds;  // empty means {seed}
    std::string out_dir = "out";

    std::string source = "sbm";  // "sbm" or a dataset directory
    std::size_t sbm_n = 200;
    std::size_t sbm_blocks = 2;
    double sbm_p_in = 0.1;
    double sbm_p_out = 0.01;
    std::size_t sbm_dim = 16;
    double sbm_shift = 0.625;
    std::size_t labels_per_class = 5;
    std::size_t val_per_class = 5;

    TeacherConfig teacher;
    double teacher_lr = 0.01;
    double teacher_wd = 5e-4;
    std::size_t teacher_epochs = 500;

    LossWeights weights;
    TrainConfig student;
};

/// Parses the TOML subset used by the tool: [section] headers, scalar
/// key = value lines (strings, numbers, booleans, numeric arrays), and #
/// comments. Unknown keys and malformed lines are config errors carrying
/// line numbers; out-of-range values append to `warnings`.
RunConfig parse_run_config(const std::string& text, std::vector<std::string>* warnings);
RunConfig load_run_config(const std::string& path, std::vector<std::string>* warnings);

/// Published single-axis sensitivity grids for eta and beta.
std::vector<double> eta_preset();
std::vector<double> beta_preset();

/// Documented search-space list for a named axis: lr, weight_decay, lambda,
/// beta, eta, zeta, dropout.
std::vector<double> grid_for_axis(const std::string& axis);

}  // namespace tined
