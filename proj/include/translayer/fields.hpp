#pragma once

#include <string>
#include <vector>

#include "translayer/composite.hpp"
#include "translayer/density.hpp"

namespace translayer {

// Polynomial in nvars variables, stored as monomials. nvars is N-1 for a
// graph over the tangential coordinates (0 for N = 1, where the polynomial is
// the constant interface position).
struct TangentPoly {
    int nvars = 0;
    std::vector<double> coeff;     // one per monomial
    std::vector<int> exps;         // nvars exponents per monomial, flattened

    int terms() const { return static_cast<int>(coeff.size()); }
    double eval(const double* u) const;
    void grad(const double* u, double* out) const;  // out has nvars entries
    void check_valid() const;
};

// Interface given as x_axis = g(x') over the tangential cross-section
// [u_min, u_max]. The plus side is x_axis > g(x').
struct GraphInterface {
    int axis = 0;                  // graph axis, 0-based
    TangentPoly g;
    std::vector<double> u_min, u_max;  // N-1 entries each
};

struct LayerValue {
    std::vector<double> state;  // state_size entries
    std::vector<double> inhom;  // inhom_dim entries
};

// Piecewise-constant composite field on R^N: layers.size() constant values
// separated by interfaces.size() ordered non-crossing graphs along a common
// axis. domain_min/max bound the energy domain; the field itself extends to
// all of R^N by its layer structure.
struct PiecewiseField {
    CompositeShape shape;
    std::vector<double> domain_min, domain_max;
    std::vector<GraphInterface> interfaces;
    std::vector<LayerValue> layers;

    int dim() const { return shape.dim; }
    // throws std::invalid_argument on structural defects (layer/interface
    // counts, value sizes, unordered or domain-escaping graphs)
    void check_structure() const;

    // tangential coordinates of x (graph axis removed, ascending axis order)
    std::vector<double> tangential(const double* x) const;
    int layer_index(const double* x) const;
    const LayerValue& value_at(const double* x) const;
};

// Unit normal (minus -> plus) of interface `which` at tangential point u.
std::vector<double> interface_normal(const PiecewiseField& field, int which,
                                     const double* u);

// One-sided trace data of interface `which` at tangential point u.
CompositeJump trace_pair(const PiecewiseField& field, int which,
                         const std::vector<double>& u);

struct ValidationEntry {
    std::string check;
    std::string where;
    double magnitude = 0.0;
    bool pass = true;
};

struct ValidationReport {
    std::vector<ValidationEntry> entries;
    bool ok() const {
        for (const auto& e : entries)
            if (!e.pass) return false;
        return true;
    }
};

// Checks layer values against the density zero set and jump compatibility
// (rank-one for curl-free blocks, zero normal trace for div-free blocks) at
// sampled interface points.
ValidationReport validate(const PiecewiseField& field, const EnergyDensity& density,
                          int samples_per_axis = 9);

}  // namespace translayer
