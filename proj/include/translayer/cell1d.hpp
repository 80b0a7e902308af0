#pragma once

#include <functional>
#include <vector>

#include "translayer/composite.hpp"
#include "translayer/density.hpp"
#include "translayer/kernel.hpp"
#include "translayer/optimize.hpp"

namespace translayer {

// Shape of the base ramp connecting the two phases across the cell.
//   QuinticStep    - smooth polynomial step over the width-L band.
//   KernelBackbone - the mollifier transition profile rescaled to width L;
//                    matches the mollified recovery sequence's layer shape.
enum class RampKind { QuinticStep, KernelBackbone };

struct Cell1dOptions {
    int grid_n = 2048;                       // cells across the normal axis
    std::vector<double> l_grid;              // layer widths; empty = {2^0..2^-8}
    RampKind ramp = RampKind::QuinticStep;
    const KernelProfile* backbone = nullptr; // required for KernelBackbone
    bool clamp_extra_node = false;           // pin the node adjacent to each end
    LbfgsOptions solver;
    int workers = 1;
};

// One-dimensional transition profile: nodal state values on a uniform grid
// over [-1/2, 1/2], endpoints pinned to the one-sided states.
struct Profile1D {
    CompositeShape shape;
    std::vector<double> nu;
    int grid_n = 0;
    std::vector<double> s;      // grid_n + 1 nodes
    std::vector<double> state;  // (grid_n + 1) x state_size, row-major
};

struct LScanEntry {
    double l = 0.0;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
    double grad_norm = 0.0;
};

struct E1Result {
    double value = 0.0;
    double l_star = 0.0;
    Profile1D profile;
    int iterations = 0;
    bool converged = false;
    double grad_norm = 0.0;
    std::vector<LScanEntry> scan;  // descending layer width
};

// Discretized transition-profile objective at fixed layer width L:
//   (1/L) * integral over s in (-1/2, 1/2) of
//       F(L^n d^n/ds^n, ..., L d/ds of the state, state, f(side of s))
// with the state pinned to `minus` at s = -1/2 and `plus` at s = +1/2.
// Free unknowns are per-node deviations from the base ramp, parametrized so
// every reconstruction satisfies the block constraints exactly:
//   unconstrained block - nodal vector in R^m;
//   curl-free block     - nodal vector in R^k entering as a rank-one
//                         increment (coefficient x nu per row);
//   div-free block      - nodal coefficients on an orthonormal tangent frame
//                         (the normal trace stays at its constant value).
// First-order densities use piecewise-linear nodes with per-cell Gauss
// quadrature exact for the density's polynomial degree; second-order
// densities use nodal central differences with reflected end ghosts (zero
// end slope) and trapezoid weights.
class Cell1dProblem {
  public:
    Cell1dProblem(DensityPtr density, CompositeJump jump, double l,
                  const Cell1dOptions& options);

    int dof_count() const { return static_cast<int>(dof_count_); }
    int dof_per_node() const { return static_cast<int>(cols_.size()); }
    double layer_width() const { return l_; }

    double value(const std::vector<double>& x) const;
    double value_and_grad(const std::vector<double>& x,
                          std::vector<double>& grad) const;

    // Nodal states ((grid_n + 1) x state_size) the dofs reconstruct to.
    std::vector<double> reconstruct(const std::vector<double>& x) const;
    Profile1D profile(const std::vector<double>& x) const;

    // Warm start for a width-L problem from a minimizer at width K * L: the
    // deviation field sampled at K-compressed positions (zero where the
    // compressed position leaves the cell). Both grids are this problem's.
    std::vector<double> compress_from(const std::vector<double>& x_coarse,
                                      double k_ratio) const;

    const std::vector<double>& base_ramp() const { return ramp_; }

    // Inverse of a per-column surrogate Hessian on each node chain:
    // alpha I + beta T (+ beta2 T^2 for second-order densities), with T the
    // Dirichlet second-difference matrix and coefficients from curvature
    // probes of the density at the end states, floored to stay positive
    // definite. Removes the grid-induced stiffness gap that makes
    // quasi-Newton steps crawl at fine resolutions.
    std::function<void(std::vector<double>&)> preconditioner() const;

  private:
    struct Column {  // one per-node unknown -> state-space direction
        std::vector<int> idx;
        std::vector<double> weight;
    };

    void scatter_node_grad(const double* node_state_grad, int node,
                           std::vector<double>& grad) const;
    double assemble(const std::vector<double>& nodes,
                    std::vector<double>* node_grad) const;

    DensityPtr density_;
    CompositeJump jump_;
    double l_ = 1.0;
    int n_ = 0;
    double h_ = 0.0;
    int state_size_ = 0;
    bool second_order_ = false;
    bool clamp_extra_ = false;
    int workers_ = 1;
    std::vector<Column> cols_;      // per-node dof -> state increments
    std::vector<double> ramp_;      // n + 1 base ramp factors, 0 at -1/2, 1 at +1/2
    std::vector<double> base_;      // (n + 1) x state_size base states
    std::vector<double> gauss_nodes_, gauss_weights_;
    std::size_t dof_count_ = 0;
};

// Minimizes the transition objective over the width grid (descending), warm
// starting each width from the better of the fresh ramp and the compressed
// previous minimizer; returns the best width (smallest within 1e-9 of the
// minimum) and the scan table.
E1Result optimize_e1(const DensityPtr& density, const CompositeJump& jump,
                     const Cell1dOptions& options = {});

// Scan table only (same computation as optimize_e1).
std::vector<LScanEntry> l_scan_report(const DensityPtr& density,
                                      const CompositeJump& jump,
                                      const Cell1dOptions& options = {});

// Closed-form reference for scalar double-well problems: the integral of
// 2 sqrt(W) between the two phase values, by composite trapezoid.
double analytic_e1_modica(const std::function<double(double)>& well, double a,
                          double b, int quadrature_n = 8192);

// Throws unless the jump is admissible for the density: unit normal,
// rank-one curl-block jump, zero normal trace of the div-block jump, and
// both one-sided states on the density's zero set.
void check_jump_admissible(const EnergyDensity& density,
                           const CompositeJump& jump);

}  // namespace translayer
