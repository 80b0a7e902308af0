#pragma once

#include <vector>

#include "translayer/composite.hpp"
#include "translayer/fields.hpp"
#include "translayer/kernel.hpp"

namespace translayer {

// Regular grid of cell centers: node i sits at
// min_corner[a] + (i[a] + 1/2) * spacing[a], axis 0 fastest in the flat index.
struct GridSpec {
    std::vector<double> min_corner;
    std::vector<int> cells;
    std::vector<double> spacing;

    int dim() const { return static_cast<int>(cells.size()); }
    long long total() const;
    void position(long long flat, double* out) const;
    double cell_volume() const;
    void check_valid(int expected_dim) const;
};

// Smoothed field sampled at the grid nodes. value holds state_size entries
// per node, d1 the scaled gradient (epsilon * d/dx, state_size x dim per
// node), d2 the scaled Hessian (epsilon^2 * d^2/dx^2, state_size x dim x dim
// per node, order-2 runs only), inhom the unsmoothed per-node inhomogeneity.
struct GridField {
    CompositeShape shape;
    GridSpec grid;
    double epsilon = 0.0;
    int order = 1;
    std::vector<double> value;
    std::vector<double> d1;
    std::vector<double> d2;
    std::vector<double> inhom;
    bool overlap_warning = false;  // some interface pair closer than epsilon

    const double* value_ptr(long long node) const {
        return value.data() + node * shape.state_size();
    }
    const double* d1_ptr(long long node) const {
        return d1.data() + node * shape.state_size() * shape.dim;
    }
    const double* d2_ptr(long long node) const {
        return d2.empty() ? nullptr
                          : d2.data() + node * shape.state_size() * shape.dim *
                                            shape.dim;
    }
    const double* inhom_ptr(long long node) const {
        return inhom.empty() ? nullptr : inhom.data() + node * shape.inhom_dim;
    }
    SlotView slots(long long node) const {
        return SlotView{d2_ptr(node), d1_ptr(node), value_ptr(node),
                        inhom_ptr(node)};
    }
};

struct MollifyOptions {
    int order = 1;           // 2 fills the scaled-Hessian slot as well
    int z_resolution = 32;   // samples per axis for curved-interface patches
    const KernelProfile* profile = nullptr;  // built from the kernel if null
    int workers = 1;
};

// Convolves the piecewise-constant field with the scaled kernel and samples
// the result (plus scaled derivative slots) at the grid nodes. Fields whose
// interfaces are all flat use the exact layered form driven by the kernel's
// hyperplane profile; curved graphs fall back to midpoint quadrature over the
// kernel support. Nodes farther than the kernel radius from every interface
// reproduce the field value exactly with zero derivative slots, and adding a
// constant to every layer shifts the output by exactly that constant. The
// grid must cover the field's domain box plus half a kernel radius.
GridField mollify(const PiecewiseField& field, const RadialKernel& kernel,
                  double epsilon, const GridSpec& grid,
                  const MollifyOptions& options = {});

}  // namespace translayer
