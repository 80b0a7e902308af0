#pragma once

#include <memory>
#include <string>
#include <vector>

#include "translayer/composite.hpp"

namespace translayer {

// Slot identifiers for polynomial factors.
enum SlotId : int { kSlotD2 = 0, kSlotD1 = 1, kSlotValue = 2, kSlotInhom = 3 };

struct PolynomialFactor {
    int slot = kSlotValue;
    int index = 0;
    int exponent = 1;
};

struct PolynomialTerm {
    double coeff = 0.0;
    std::vector<PolynomialFactor> factors;  // empty factors = constant term
};

// Energy density F acting on the composite state and its scaled derivative
// slots. order() is the number of derivative slots (1 or 2). eval must be
// nonnegative on admissible arguments and vanish on the zero set with zero
// derivative slots.
class EnergyDensity {
  public:
    virtual ~EnergyDensity() = default;
    virtual const CompositeShape& shape() const = 0;
    virtual int order() const = 0;
    virtual std::string name() const = 0;
    // Highest total monomial degree across slots; drives exact quadrature
    // order for piecewise-polynomial fields.
    virtual int max_total_degree() const = 0;

    virtual double eval(const SlotView& at) const = 0;
    // out += weight * dF/d(slots); null slot pointers in out are skipped.
    virtual void add_grad(const SlotView& at, double weight,
                          const SlotGrad& out) const = 0;

    // F with zero derivative slots: the constraint part W(value, inhom).
    double well_value(const double* value, const double* inhom) const;
    bool on_zero_set(const double* value, const double* inhom,
                     double tol = 1e-9) const {
        return well_value(value, inhom) <= tol;
    }
};

using DensityPtr = std::shared_ptr<const EnergyDensity>;

// |d1|^2 + (1 - |value|^2)^2 over the unconstrained block (scalar or vector
// order parameter).
DensityPtr make_modica_mortola(int dim, int components = 1);

// Same functional form on a one-row curl-free block: the state is a gradient
// constrained to the unit sphere well.
DensityPtr make_aviles_giga(int dim);

// |d1|^2 + |value - a|^2 |value - b|^2 on a curl-free block of `rows` rows;
// a, b are rows x dim row-major. Requires rank(a - b) == 1.
DensityPtr make_two_gradient_well(int dim, int rows,
                                  const std::vector<double>& well_a,
                                  const std::vector<double>& well_b);

// User-supplied polynomial in all slots. Spot-checked for nonnegativity on a
// fixed pseudo-random sample; a negative sample rejects the entry.
DensityPtr make_polynomial(const CompositeShape& shape, int order,
                           std::vector<PolynomialTerm> terms,
                           std::string label = "polynomial");

// Term builders for common polynomial pieces.
// |z - a|^2 |z - b|^2 over one block's value entries (block: 0 = curl-free,
// 1 = div-free, 2 = unconstrained).
std::vector<PolynomialTerm> two_well_terms_on_block(const CompositeShape& shape,
                                                    int block,
                                                    const std::vector<double>& a,
                                                    const std::vector<double>& b);
// coeff * sum of squared d1 entries of one block.
std::vector<PolynomialTerm> grad_penalty_terms_on_block(const CompositeShape& shape,
                                                        int block,
                                                        double coeff = 1.0);

}  // namespace translayer
