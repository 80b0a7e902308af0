#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace translayer {

// Constraint satisfied by a block of the composite state across the domain:
//   CurlFree      - block rows are gradients of a potential (curl == 0),
//                   jumps must be rank-one compatible with the normal.
//   DivFree       - block rows are divergence-free, jumps must have zero
//                   normal trace.
//   Unconstrained - no differential constraint.
enum class ConstraintKind { Unconstrained, CurlFree, DivFree };

inline const char* to_string(ConstraintKind k) {
    switch (k) {
        case ConstraintKind::Unconstrained: return "unconstrained";
        case ConstraintKind::CurlFree: return "curl_free";
        case ConstraintKind::DivFree: return "div_free";
    }
    return "?";
}

// Shape of the composite state: a (grad_rows x dim) curl-free block, a
// (divfree_rows x dim) divergence-free block, and an unconstrained vector of
// length unconstrained_dim, flattened in that order. inhom_dim is the length
// of the inhomogeneity vector fed to the density (not part of the state).
struct CompositeShape {
    int dim = 1;
    int grad_rows = 0;
    int divfree_rows = 0;
    int unconstrained_dim = 0;
    int inhom_dim = 0;

    int state_size() const {
        return (grad_rows + divfree_rows) * dim + unconstrained_dim;
    }
    int grad_index(int row, int axis) const { return row * dim + axis; }
    int divfree_index(int row, int axis) const {
        return grad_rows * dim + row * dim + axis;
    }
    int unconstrained_index(int comp) const {
        return (grad_rows + divfree_rows) * dim + comp;
    }

    // kind of the block owning flat state index i
    ConstraintKind kind_of(int i) const {
        if (i < grad_rows * dim) return ConstraintKind::CurlFree;
        if (i < (grad_rows + divfree_rows) * dim) return ConstraintKind::DivFree;
        return ConstraintKind::Unconstrained;
    }

    bool operator==(const CompositeShape& o) const {
        return dim == o.dim && grad_rows == o.grad_rows &&
               divfree_rows == o.divfree_rows &&
               unconstrained_dim == o.unconstrained_dim &&
               inhom_dim == o.inhom_dim;
    }

    void check_valid() const {
        if (dim < 1 || dim > 3) throw std::invalid_argument("dim must be 1..3");
        if (grad_rows < 0 || divfree_rows < 0 || unconstrained_dim < 0 ||
            inhom_dim < 0)
            throw std::invalid_argument("negative block size");
        if (state_size() == 0) throw std::invalid_argument("empty state");
    }
};

// One-sided data across an oriented interface. normal points from the minus
// side to the plus side; minus/plus are full state vectors, f_minus/f_plus the
// inhomogeneity values.
struct CompositeJump {
    CompositeShape shape;
    std::vector<double> normal;
    std::vector<double> minus, plus;
    std::vector<double> f_minus, f_plus;
    std::vector<double> position;  // point on the interface, may be empty

    std::vector<double> delta() const {
        std::vector<double> d(plus.size());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = plus[i] - minus[i];
        return d;
    }
};

// Evaluation-point view of the density arguments. d1 has state_size x dim
// entries (row-major); d2, present only for order-2 densities, has
// state_size x dim x dim. Null pointers mean all-zero.
struct SlotView {
    const double* d2 = nullptr;
    const double* d1 = nullptr;
    const double* value = nullptr;
    const double* inhom = nullptr;
};

// Accumulation target for density gradients; null members are skipped.
struct SlotGrad {
    double* d2 = nullptr;
    double* d1 = nullptr;
    double* value = nullptr;
};

// Deterministic orthonormal basis of the orthogonal complement of the unit
// vector nu (dim - 1 vectors). dim == 2: the left-rotated normal; dim == 3:
// Gram-Schmidt against the coordinate axis least aligned with nu, then the
// cross product.
inline std::vector<std::vector<double>> tangent_frame(const std::vector<double>& nu) {
    const int dim = static_cast<int>(nu.size());
    std::vector<std::vector<double>> frame;
    if (dim == 1) return frame;
    if (dim == 2) {
        frame.push_back({-nu[1], nu[0]});
        return frame;
    }
    if (dim != 3) throw std::invalid_argument("tangent_frame: dim must be 1..3");
    int axis = 0;
    for (int a = 1; a < 3; ++a)
        if (std::abs(nu[a]) < std::abs(nu[axis])) axis = a;
    std::vector<double> t1(3, 0.0);
    t1[axis] = 1.0;
    const double proj = t1[0] * nu[0] + t1[1] * nu[1] + t1[2] * nu[2];
    for (int a = 0; a < 3; ++a) t1[a] -= proj * nu[a];
    double norm = std::sqrt(t1[0] * t1[0] + t1[1] * t1[1] + t1[2] * t1[2]);
    for (int a = 0; a < 3; ++a) t1[a] /= norm;
    std::vector<double> t2 = {nu[1] * t1[2] - nu[2] * t1[1],
                              nu[2] * t1[0] - nu[0] * t1[2],
                              nu[0] * t1[1] - nu[1] * t1[0]};
    frame.push_back(std::move(t1));
    frame.push_back(std::move(t2));
    return frame;
}

// Side selector: a for t > 0, b for t < 0. t == 0 resolves to the first
// branch; callers encode their orientation by argument order.
inline double side_select(double t, double a, double b) { return t > 0.0 ? a : (t < 0.0 ? b : a); }

inline const std::vector<double>& side_select(double t, const std::vector<double>& a,
                                              const std::vector<double>& b) {
    return t > 0.0 ? a : (t < 0.0 ? b : a);
}

}  // namespace translayer
