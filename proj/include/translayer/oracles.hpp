#pragma once

#include <string>
#include <vector>

#include "translayer/composite.hpp"
#include "translayer/density.hpp"
#include "translayer/optimize.hpp"

namespace translayer {

// One independent cross-check. pass holds exactly when
// |reference - test_value| <= tolerance * (1 + |reference|).
struct OracleReport {
    std::string name;
    double reference = 0.0;
    double test_value = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    double runtime_seconds = 0.0;
};

bool oracle_pass(double reference, double test, double tolerance);
OracleReport make_report(const std::string& name, double reference, double test,
                         double tolerance, double runtime_seconds);

// Deliberately simple reference for the optimal 1D transition energy:
// pinned fine-grid path from minus to plus over a span of length `span`,
// constraints kept by per-node affine projection, minimized by projected
// conjugate descent with a backtracking line search seeded at
// step_factor * grid spacing. Shares no numerics with the cell modules.
// Throws std::runtime_error when no finite decrease exists away from the
// numerical floor.
double brute_force_e1(const DensityPtr& density, const CompositeJump& jump,
                      int n = 4096, double span = 32.0, int iterations = 12000,
                      double step_factor = 1.0 / 32.0);

// Central-difference check of an analytic gradient at one point. test_value
// is the worst per-coordinate deviation relative to the gradient scale;
// reference is 0.
OracleReport fd_gradient_check(const ObjectiveFn& objective,
                               const std::vector<double>& point, double step,
                               double tolerance = 1e-5,
                               const std::string& name = "fd_gradient");

// Structural identities of the periodic-cell reconstruction on random
// coefficient vectors: curl rows symmetric and div rows traceless at every
// quadrature point, tangential one-period shifts reproducing the sampled
// deviation, and gradient/value adjoint consistency of a pure-quadratic
// density via the polarization identity. test_value is the worst violation.
OracleReport operator_self_test(int cells = 64, int trials = 4);

}  // namespace translayer
