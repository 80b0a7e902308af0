#pragma once

#include <vector>

#include "translayer/cellnd.hpp"
#include "translayer/density.hpp"
#include "translayer/fields.hpp"
#include "translayer/kernel.hpp"
#include "translayer/mollify.hpp"

namespace translayer {

// One scan evaluation: scaled energy at this epsilon against the predicted
// limit, gap relative to the prediction scale.
struct TraceRow {
    double epsilon = 0.0;
    double energy = 0.0;
    double predicted = 0.0;
    double gap = 0.0;
};

struct EnergyTrace {
    std::vector<TraceRow> rows;
    double predicted = 0.0;     // limit prediction, epsilon-independent
    double extrapolated = 0.0;  // first-order Richardson from the last rows
    double rate = 0.0;          // measured order from the last three rows
    bool monotone = true;       // energies nonincreasing along the scan
    bool overlap_warning = false;
};

struct RecoveryConfig {
    RadialKernel::Type kernel = RadialKernel::Type::SmoothBump;
    std::vector<double> epsilons = {0.1, 0.05, 0.025, 0.0125};
    int cells_per_epsilon = 16;  // grid spacing = epsilon / cells_per_epsilon
    int profile_resolution = 4096;
    int z_resolution = 32;
    // Empty: plain smoothing everywhere. Otherwise one entry per interface;
    // non-null entries add that cell-optimized transition layer (its width L
    // rides in the profile). Requires the kernel-backbone ramp so the layer
    // deviates from the same transition the smoothing produces.
    std::vector<const CellProfile*> perturbations;
    bool mean_preserving = false;  // restore unconstrained-component means
    int surface_nodes_per_axis = 8;
    int limit_quadrature = 2048;
    int workers = 1;
};

// Smoothed approximation of the sharp field: kernel convolution sampled with
// derivative slots on the grid.
GridField build_primary(const PiecewiseField& field, const RadialKernel& kernel,
                        double epsilon, const GridSpec& grid,
                        const MollifyOptions& options = {});

// Adds the cell-optimized transition layer of interface `which` on top of an
// already smoothed grid field: inside the slab of width epsilon / L around
// the smoothed graph, the cell deviation (state and scaled-gradient slots,
// graph-slope corrected) is added; outside the slab the field is untouched.
// Throws when another interface intrudes into the slab, when the cell ramp
// is not the kernel backbone, or when the cell jump data does not match the
// interface traces.
void add_perturbation(GridField& out, const PiecewiseField& field, int which,
                      const CellProfile& h0, const RadialKernel& kernel,
                      int z_resolution = 32);

// build_primary followed by add_perturbation for one interface.
GridField build_modified(const PiecewiseField& field, int which,
                         const CellProfile& h0, const RadialKernel& kernel,
                         double epsilon, const GridSpec& grid,
                         const MollifyOptions& options = {});

// Midpoint-rule value of (1/epsilon) * integral over the box [domain_min,
// domain_max] of the density at the stored slots. Grid nodes outside the box
// do not contribute; the grid must cover the box.
double energy(const GridField& gf, const DensityPtr& density,
              const std::vector<double>& domain_min,
              const std::vector<double>& domain_max, int workers = 1);

// Shifts each unconstrained component by a fixed interior bump so its grid
// integral over the box matches the sharp field's; value and slot layers are
// updated consistently. Constrained blocks are left alone.
void apply_mean_correction(GridField& gf, const PiecewiseField& field,
                           const std::vector<double>& domain_min,
                           const std::vector<double>& domain_max,
                           int workers = 1);

// Runs the epsilon list: builds the (plain or layer-modified) smoothed field
// per epsilon on an epsilon-proportional grid, evaluates the scaled energy,
// and compares against the limit prediction — the surface integral of the
// closed-form limit density, with perturbed interfaces instead contributing
// their cell energy times the interface measure.
EnergyTrace epsilon_scan(const PiecewiseField& field, const DensityPtr& density,
                         const RecoveryConfig& config);

}  // namespace translayer
