#pragma once

#include <vector>

#include "translayer/cell1d.hpp"
#include "translayer/cellnd.hpp"
#include "translayer/density.hpp"
#include "translayer/fields.hpp"
#include "translayer/kernel.hpp"

namespace translayer {

// Which transition-energy density weights the jump set: the optimal 1D
// profile energy, the optimal periodic-cell energy, or the closed-form
// mollification-limit density.
enum class SurfaceDensityKind { E1, Eper, KernelLimit };

struct SurfaceOptions {
    SurfaceDensityKind kind = SurfaceDensityKind::E1;
    int nodes_per_axis = 8;  // tensor Gauss-Legendre nodes on the cross-section
    Cell1dOptions cell1d;
    CellndOptions cellnd;
    const KernelProfile* profile = nullptr;  // required for KernelLimit
    int limit_quadrature = 2048;
    int workers = 1;
};

struct InterfaceContribution {
    int interface_index = 0;
    double value = 0.0;
    double measure = 0.0;  // integral of the area factor over the graph patch
    bool converged = true;
};

struct KFunctionalResult {
    double value = 0.0;
    bool partial = false;  // some inner optimization did not converge
    std::vector<InterfaceContribution> interfaces;
    long long cache_hits = 0;
    long long cache_misses = 0;
};

// Integrates the selected jump-energy density over the field's interfaces:
// sum over interfaces of sum over quadrature nodes of
// weight * sqrt(1 + |grad g|^2) * density(one-sided traces at the node).
// Identical jump data (quantized at 1e-12) is solved once and reused, so
// piecewise-constant jumps cost one inner solve per patch.
KFunctionalResult k_functional(const PiecewiseField& field,
                               const DensityPtr& density,
                               const SurfaceOptions& options = {});

// Total interface measure (sum of per-interface area integrals) at the same
// quadrature; used for refinement self-consistency checks.
double interface_measure(const PiecewiseField& field, int nodes_per_axis = 8);

}  // namespace translayer
