#pragma once

#include <memory>
#include <string>
#include <vector>

#include "translayer/composite.hpp"
#include "translayer/density.hpp"

namespace translayer {

// Radial mollification kernel with support radius 1/2 and unit mass on R^dim.
// SmoothBump: c * exp(-1/(1/4 - r^2)); PolyBump: c * (1/4 - r^2)^2.
class RadialKernel {
  public:
    enum class Type { SmoothBump, PolyBump };

    RadialKernel(Type type, int dim, int norm_resolution = 4096);

    int dim() const { return dim_; }
    Type type() const { return type_; }
    std::string type_name() const {
        return type_ == Type::SmoothBump ? "smooth_bump" : "poly_bump";
    }

    double radial(double r) const;       // omega(r)
    double radial_d1(double r) const;    // omega'(r)
    double radial_d2(double r) const;    // omega''(r)

    double value(const double* z) const;                 // eta(z)
    void gradient(const double* z, double* out) const;   // dim entries
    void hessian(const double* z, double* out) const;    // dim*dim row-major

  private:
    Type type_;
    int dim_;
    double scale_ = 1.0;  // normalization constant
};

// Tabulated transition profile of a kernel: p(t) is the (dim-1)-dimensional
// integral of eta over the hyperplane at signed distance t from the origin,
// cum(t) its cumulative. Support of p is exactly [-1/2, 1/2]; p is even by
// construction. cum_at clamps to 0 below -1/2 and to 1 above +1/2 so that
// interpolated transition values reach the pure phases exactly.
struct KernelProfile {
    int dim = 1;
    int resolution = 0;          // table cells over [-1/2, 1/2]
    std::vector<double> t;       // resolution + 1 nodes
    std::vector<double> p;       // slice integrals at nodes
    std::vector<double> dp;      // table derivative of p at nodes
    std::vector<double> cum;     // running trapezoid integral, cum[0] = 0

    double mass() const { return cum.empty() ? 0.0 : cum.back(); }
    double p_at(double tt) const;
    double dp_at(double tt) const;
    double cum_at(double tt) const;
};

// Tabulates p by quadrature over the hyperplane slice (reduced to a radial
// integral; slice_resolution controls that quadrature).
KernelProfile profile_p(const RadialKernel& kernel, int resolution = 4096,
                        int slice_resolution = 4096);

// Transition state at offset t: cum(t) * minus + (1 - cum(t)) * plus.
// Equals `plus` for t <= -1/2 and `minus` for t >= 1/2, exactly.
void transition_state(const KernelProfile& profile, const CompositeJump& jump,
                      double t, double* out_state);

// Surface density of the mollification limit: integral over t of
// F(dp * delta x nu x nu [order 2 only], p * delta x nu, transition(t),
//   side_select(t, f_minus, f_plus)), composite trapezoid with `quadrature`
// cells over [-1/2, 1/2].
double limit_surface_density(const EnergyDensity& density,
                             const KernelProfile& profile,
                             const CompositeJump& jump, int quadrature = 2048);

}  // namespace translayer
