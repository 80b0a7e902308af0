#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "translayer/density.hpp"
#include "translayer/fields.hpp"
#include "translayer/kernel.hpp"

namespace translayer {

// Structured run/field descriptions are held as ordered JSON trees: scalar
// keys, arrays, one level of named sections, and repeated sections as arrays
// of tables.
using ConfigTree = nlohmann::ordered_json;

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Parses the key = value / [section] / [[section]] text format. Errors carry
// the 1-based line number.
ConfigTree parse_config_text(const std::string& text);
ConfigTree load_config_file(const std::string& path);

// Canonical text form: top-level scalars first, then sections, floats kept
// distinguishable from integers. parse(write(tree)) == tree.
std::string write_config_text(const ConfigTree& tree);

// A density plus an admissible piecewise-constant field for it.
// density_tree keeps the parsed density description (the "density" section
// and, for polynomial densities, the "term" tables) so a loaded bundle can be
// written back without loss.
struct FieldBundle {
    DensityPtr density;
    ConfigTree density_tree = ConfigTree::object();
    PiecewiseField field;
};

FieldBundle field_from_tree(const ConfigTree& tree);
ConfigTree field_to_tree(const FieldBundle& bundle);
FieldBundle load_field_file(const std::string& path);

// Scalar run parameters for the command-line driver; every field has a
// default so a config file only needs what it overrides.
struct RunConfig {
    std::string command;
    std::string field_path;
    std::string output_dir = "out";
    int workers = 1;
    std::uint64_t seed = 0;
    int interface_index = 0;

    // 1D cell
    int e1_grid_n = 2048;
    std::vector<double> e1_l_grid;
    std::string ramp = "quintic";  // or "kernel"
    bool e1_clamp_extra = false;

    // periodic cell
    int normal_cells = 64;
    int tangential_cells = 64;
    std::vector<double> eper_l_grid;
    std::uint64_t kick_seed = 0;
    double kick_amplitude = 0.0;
    bool eper_clamp_extra = false;

    // kernel
    RadialKernel::Type kernel_type = RadialKernel::Type::SmoothBump;
    int profile_resolution = 4096;
    int limit_quadrature = 2048;

    // recovery
    std::vector<double> epsilons = {0.1, 0.05, 0.025, 0.0125};
    int cells_per_epsilon = 16;
    int z_resolution = 32;
    bool mean_preserving = false;
    bool modified = false;    // add the cell-optimized layer on the selected interface
    double modified_l = 0.25; // its width

    // width scan
    std::vector<double> scan_l_grid;
};

// Reads a run config tree; unknown keys are rejected. `base_dir` resolves
// relative file paths. The TRANSLAYER_WORKERS environment variable supplies
// the default worker count; an explicit key wins.
RunConfig run_config_from_tree(const ConfigTree& tree,
                               const std::string& base_dir);
RunConfig load_run_config(const std::string& path);

}  // namespace translayer
