#include "translayer/cellnd.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <stdexcept>
#include <utility>

#include "translayer/parallel.hpp"
#include "translayer/quadrature.hpp"

namespace translayer {

namespace {

int int_pow(int base, int exp) {
    int r = 1;
    while (exp-- > 0) r *= base;
    return r;
}

double quintic_step(double u) {
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
}

// Packed coefficient layout. Unconstrained rows carry multilinear nodal
// values on the free normal node range [i0, i1]; each potential row carries
// quadratic-spline coefficient layers [cLo, cHi] plus one trailing scalar
// shared by every layer beyond cHi (constant tail; zero gradient there).
struct Layout {
    int dim = 0, n1 = 0, nt = 0;
    int na = 0;  // tangential axes
    int T = 0;   // nt^na tangential cells
    int i0 = 0, i1 = 0;
    int cLo = 0, cHi = 0;
    int m = 0, k = 0, d = 0;
    int n_pots = 0;
    int pi_per_row = 0, pot_per_row = 0;
    int pi_offset = 0, pot_offset = 0;
    int dof_count = 0;
};

Layout make_layout(const CompositeShape& shape, int n1, int nt, bool extra) {
    Layout lay;
    lay.dim = shape.dim;
    lay.n1 = n1;
    lay.nt = nt;
    lay.na = shape.dim - 1;
    lay.T = int_pow(nt, lay.na);
    const int g = extra ? 2 : 1;
    lay.i0 = g;
    lay.i1 = n1 - g;
    lay.cLo = extra ? 3 : 2;
    lay.cHi = extra ? n1 - 2 : n1 - 1;
    lay.m = shape.unconstrained_dim;
    lay.k = shape.grad_rows;
    lay.d = shape.divfree_rows;
    lay.n_pots = lay.k + lay.d * lay.na;
    lay.pi_per_row = (lay.i1 - lay.i0 + 1) * lay.T;
    lay.pot_per_row = (lay.cHi - lay.cLo + 1) * lay.T + 1;
    lay.pi_offset = 0;
    lay.pot_offset = lay.m * lay.pi_per_row;
    lay.dof_count = lay.pot_offset + lay.n_pots * lay.pot_per_row;
    return lay;
}

inline int pi_dof(const Layout& lay, int row, int node, int tl) {
    return lay.pi_offset + row * lay.pi_per_row + (node - lay.i0) * lay.T + tl;
}

inline int pot_base(const Layout& lay, int prow) {
    return lay.pot_offset + prow * lay.pot_per_row;
}

inline int pot_scalar(const Layout& lay, int prow) {
    return pot_base(lay, prow) + (lay.cHi - lay.cLo + 1) * lay.T;
}

// Coefficient of potential row `prow` at normal layer c and wrapped
// tangential linear index tl. Layers below cLo are structurally zero; layers
// above cHi share the trailing scalar.
inline double pot_coeff(const Layout& lay, const std::vector<double>& x,
                        int prow, int c, int tl) {
    if (c < lay.cLo) return 0.0;
    if (c > lay.cHi) return x[static_cast<std::size_t>(pot_scalar(lay, prow))];
    return x[static_cast<std::size_t>(pot_base(lay, prow) +
                                      (c - lay.cLo) * lay.T + tl)];
}

// Maps a potential-row stencil dof; -1 for structurally zero layers.
inline int pot_dof_index(const Layout& lay, int prow, int c, int tl) {
    if (c < lay.cLo) return -1;
    if (c > lay.cHi) return pot_scalar(lay, prow);
    return pot_base(lay, prow) + (c - lay.cLo) * lay.T + tl;
}

double basis_det(const LatticeBasis& basis) {
    const int dim = basis.dim;
    double J[9] = {};
    for (int a = 0; a < dim; ++a) {
        J[a * dim + 0] = basis.nu[static_cast<std::size_t>(a)];
        for (int j = 1; j < dim; ++j)
            J[a * dim + j] = basis.tangents[static_cast<std::size_t>(j - 1)]
                                           [static_cast<std::size_t>(a)];
    }
    if (dim == 2) return J[0] * J[3] - J[1] * J[2];
    return J[0] * (J[4] * J[8] - J[5] * J[7]) -
           J[1] * (J[3] * J[8] - J[5] * J[6]) +
           J[2] * (J[3] * J[7] - J[4] * J[6]);
}

// Inverse of [nu | tangents], row-major; row p gives d s_p / d y.
std::vector<double> build_jinv(const LatticeBasis& basis) {
    const int dim = basis.dim;
    double J[9] = {};
    for (int a = 0; a < dim; ++a) {
        J[a * dim + 0] = basis.nu[static_cast<std::size_t>(a)];
        for (int j = 1; j < dim; ++j)
            J[a * dim + j] = basis.tangents[static_cast<std::size_t>(j - 1)]
                                           [static_cast<std::size_t>(a)];
    }
    const double det = basis_det(basis);
    if (!(std::abs(det) > 0.0))
        throw std::invalid_argument("degenerate lattice basis");
    std::vector<double> inv(static_cast<std::size_t>(dim * dim));
    if (dim == 2) {
        inv[0] = J[3] / det;
        inv[1] = -J[1] / det;
        inv[2] = -J[2] / det;
        inv[3] = J[0] / det;
    } else {
        inv[0] = (J[4] * J[8] - J[5] * J[7]) / det;
        inv[1] = (J[2] * J[7] - J[1] * J[8]) / det;
        inv[2] = (J[1] * J[5] - J[2] * J[4]) / det;
        inv[3] = (J[5] * J[6] - J[3] * J[8]) / det;
        inv[4] = (J[0] * J[8] - J[2] * J[6]) / det;
        inv[5] = (J[2] * J[3] - J[0] * J[5]) / det;
        inv[6] = (J[3] * J[7] - J[4] * J[6]) / det;
        inv[7] = (J[1] * J[6] - J[0] * J[7]) / det;
        inv[8] = (J[0] * J[4] - J[1] * J[3]) / det;
    }
    return inv;
}

// Mirrored symmetric nu nu^T: entry (a, b) and (b, a) are the same double,
// which keeps curl-block base slots bitwise symmetric.
std::vector<double> build_nunu(const LatticeBasis& basis) {
    const int dim = basis.dim;
    std::vector<double> t(static_cast<std::size_t>(dim * dim));
    for (int a = 0; a < dim; ++a)
        for (int b = a; b < dim; ++b) {
            const double v = basis.nu[static_cast<std::size_t>(a)] *
                             basis.nu[static_cast<std::size_t>(b)];
            t[static_cast<std::size_t>(a * dim + b)] = v;
            t[static_cast<std::size_t>(b * dim + a)] = v;
        }
    return t;
}

// Per-axis quadratic-spline pieces on one cell, xi in [0, 1]; derivative
// factors carry the cells-per-unit scale of that axis.
struct AxisEval {
    double b[3];
    double db[3];
    double ddb[3];
};

AxisEval qbs_axis(double xi, double scale) {
    AxisEval e;
    const double om = 1.0 - xi;
    e.b[0] = 0.5 * om * om;
    e.b[1] = -xi * xi + xi + 0.5;
    e.b[2] = 0.5 * xi * xi;
    e.db[0] = -om * scale;
    e.db[1] = (1.0 - 2.0 * xi) * scale;
    e.db[2] = xi * scale;
    const double s2 = scale * scale;
    e.ddb[0] = s2;
    e.ddb[1] = -2.0 * s2;
    e.ddb[2] = s2;
    return e;
}

// One stencil offset of the tensor quadratic spline: value, lattice gradient
// and lattice Hessian (mirrored symmetric).
struct PotStencil {
    double v = 0.0;
    double lg[3] = {0.0, 0.0, 0.0};
    double lh[3][3] = {{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}};
};

void build_pot_stencil(const AxisEval* ax, int dim, PotStencil* out) {
    const int ns = int_pow(3, dim);
    for (int o = 0; o < ns; ++o) {
        int idx[3] = {0, 0, 0};
        int t = o;
        for (int x = 0; x < dim; ++x) {
            idx[x] = t % 3;
            t /= 3;
        }
        PotStencil st;
        double v = 1.0;
        for (int x = 0; x < dim; ++x) v *= ax[x].b[idx[x]];
        st.v = v;
        for (int x = 0; x < dim; ++x) {
            double g = ax[x].db[idx[x]];
            for (int y = 0; y < dim; ++y)
                if (y != x) g *= ax[y].b[idx[y]];
            st.lg[x] = g;
        }
        for (int x = 0; x < dim; ++x) {
            double h = ax[x].ddb[idx[x]];
            for (int y = 0; y < dim; ++y)
                if (y != x) h *= ax[y].b[idx[y]];
            st.lh[x][x] = h;
        }
        for (int x = 0; x < dim; ++x)
            for (int y = x + 1; y < dim; ++y) {
                double h = ax[x].db[idx[x]] * ax[y].db[idx[y]];
                for (int z = 0; z < dim; ++z)
                    if (z != x && z != y) h *= ax[z].b[idx[z]];
                st.lh[x][y] = h;
                st.lh[y][x] = h;
            }
        out[o] = st;
    }
}

// Physical gradient and mirrored-symmetric physical Hessian of one stencil
// entry; forward assembly and backpropagation share these numbers exactly.
void pot_physical(const std::vector<double>& jinv, int dim,
                  const PotStencil& st, double* gy, double* hy) {
    for (int a = 0; a < dim; ++a) {
        double g = 0.0;
        for (int b = 0; b < dim; ++b)
            g += jinv[static_cast<std::size_t>(b * dim + a)] * st.lg[b];
        gy[a] = g;
    }
    for (int a = 0; a < dim; ++a)
        for (int b = a; b < dim; ++b) {
            double h = 0.0;
            for (int p = 0; p < dim; ++p)
                for (int q = 0; q < dim; ++q)
                    h += jinv[static_cast<std::size_t>(p * dim + a)] *
                         jinv[static_cast<std::size_t>(q * dim + b)] *
                         st.lh[p][q];
            hy[a * dim + b] = h;
            hy[b * dim + a] = h;
        }
}

// Multilinear corner basis: value and physical gradient per cell corner.
void corner_tables(const double* xi, const double* scale,
                   const std::vector<double>& jinv, int dim, double* cval,
                   double* cgy) {
    const int nc = 1 << dim;
    for (int corner = 0; corner < nc; ++corner) {
        double v = 1.0;
        for (int x = 0; x < dim; ++x) {
            const bool hi = (corner >> x) & 1;
            v *= hi ? xi[x] : (1.0 - xi[x]);
        }
        cval[corner] = v;
        double lg[3] = {0.0, 0.0, 0.0};
        for (int x = 0; x < dim; ++x) {
            double g = ((corner >> x) & 1) ? scale[x] : -scale[x];
            for (int y = 0; y < dim; ++y)
                if (y != x) g *= ((corner >> y) & 1) ? xi[y] : (1.0 - xi[y]);
            lg[x] = g;
        }
        for (int a = 0; a < dim; ++a) {
            double g = 0.0;
            for (int b = 0; b < dim; ++b)
                g += jinv[static_cast<std::size_t>(b * dim + a)] * lg[b];
            cgy[a] = g;
        }
        cgy += dim;
    }
}

// Evaluates one spline potential of a packed coefficient vector at cell
// coordinates s (normal clamped: zero left tail, constant right tail).
double potential_value(const Layout& lay, const std::vector<double>& x,
                       int prow, const double* s) {
    const int dim = lay.dim;
    const double u1 = (s[0] + 0.5) * lay.n1;
    if (u1 <= 0.0) return 0.0;
    if (u1 >= static_cast<double>(lay.n1))
        return x[static_cast<std::size_t>(pot_scalar(lay, prow))];
    int cell[3] = {0, 0, 0};
    AxisEval ax[3] = {};
    const int c1 = std::min(static_cast<int>(u1), lay.n1 - 1);
    cell[0] = c1;
    ax[0] = qbs_axis(u1 - c1, 1.0);
    for (int j = 0; j < lay.na; ++j) {
        double w = s[1 + j] - std::floor(s[1 + j]);
        if (w >= 1.0) w = 0.0;
        const double ut = w * lay.nt;
        const int ct = std::min(static_cast<int>(ut), lay.nt - 1);
        cell[1 + j] = ct;
        ax[1 + j] = qbs_axis(ut - ct, 1.0);
    }
    const int ns = int_pow(3, dim);
    double v = 0.0;
    for (int o = 0; o < ns; ++o) {
        int idx[3] = {0, 0, 0};
        int t = o;
        for (int xx = 0; xx < dim; ++xx) {
            idx[xx] = t % 3;
            t /= 3;
        }
        int tl = 0, mul = 1;
        for (int j = 0; j < lay.na; ++j) {
            int tj = cell[1 + j] + idx[1 + j];
            if (tj >= lay.nt) tj -= lay.nt;
            if (tj >= lay.nt) tj -= lay.nt;
            tl += tj * mul;
            mul *= lay.nt;
        }
        const double K = pot_coeff(lay, x, prow, cell[0] + idx[0], tl);
        if (K == 0.0) continue;
        double b = 1.0;
        for (int xx = 0; xx < dim; ++xx) b *= ax[xx].b[idx[xx]];
        v += K * b;
    }
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// LatticeBasis

LatticeBasis LatticeBasis::orthonormal(const std::vector<double>& normal) {
    LatticeBasis b;
    b.dim = static_cast<int>(normal.size());
    if (b.dim < 2 || b.dim > 3)
        throw std::invalid_argument("lattice basis needs dim 2 or 3");
    b.nu = normal;
    double n2 = 0.0;
    for (double v : b.nu) n2 += v * v;
    if (!(n2 > 0.0)) throw std::invalid_argument("zero normal");
    const double inv = 1.0 / std::sqrt(n2);
    for (double& v : b.nu) v *= inv;
    b.tangents = tangent_frame(b.nu);
    b.validate();
    return b;
}

void LatticeBasis::validate() {
    if (dim < 2 || dim > 3)
        throw std::invalid_argument("lattice basis needs dim 2 or 3");
    if (static_cast<int>(nu.size()) != dim)
        throw std::invalid_argument("normal dimension mismatch");
    if (static_cast<int>(tangents.size()) != dim - 1)
        throw std::invalid_argument("lattice basis needs dim - 1 tangents");
    double n2 = 0.0;
    for (double v : nu) n2 += v * v;
    if (!(n2 > 0.0)) throw std::invalid_argument("zero normal");
    const double inv = 1.0 / std::sqrt(n2);
    for (double& v : nu) v *= inv;
    for (auto& t : tangents) {
        if (static_cast<int>(t.size()) != dim)
            throw std::invalid_argument("tangent dimension mismatch");
        double tn2 = 0.0;
        for (double v : t) tn2 += v * v;
        if (!(tn2 > 0.0)) throw std::invalid_argument("zero tangent");
        double proj = 0.0;
        for (int a = 0; a < dim; ++a)
            proj += t[static_cast<std::size_t>(a)] * nu[static_cast<std::size_t>(a)];
        if (std::abs(proj) > 1e-8 * std::sqrt(tn2))
            throw std::invalid_argument("tangent is not orthogonal to the normal");
        // re-project twice so the residual normal component vanishes to rounding
        for (int pass = 0; pass < 2; ++pass) {
            double p = 0.0;
            for (int a = 0; a < dim; ++a)
                p += t[static_cast<std::size_t>(a)] * nu[static_cast<std::size_t>(a)];
            for (int a = 0; a < dim; ++a)
                t[static_cast<std::size_t>(a)] -= p * nu[static_cast<std::size_t>(a)];
        }
    }
    double scale = 1.0;
    for (const auto& t : tangents) {
        double tn2 = 0.0;
        for (double v : t) tn2 += v * v;
        scale *= std::sqrt(tn2);
    }
    if (!(std::abs(basis_det(*this)) > 1e-10 * scale))
        throw std::invalid_argument("degenerate lattice basis");
}

LatticeBasis LatticeBasis::permuted(const std::vector<int>& order) const {
    if (static_cast<int>(order.size()) != dim - 1)
        throw std::invalid_argument("permutation size mismatch");
    std::vector<bool> seen(order.size(), false);
    for (int o : order) {
        if (o < 0 || o >= dim - 1 || seen[static_cast<std::size_t>(o)])
            throw std::invalid_argument("not a tangent permutation");
        seen[static_cast<std::size_t>(o)] = true;
    }
    LatticeBasis b = *this;
    for (std::size_t i = 0; i < order.size(); ++i)
        b.tangents[i] = tangents[static_cast<std::size_t>(order[i])];
    return b;
}

LatticeBasis LatticeBasis::dilated(int factor) const {
    if (factor < 1) throw std::invalid_argument("dilation factor must be >= 1");
    LatticeBasis b = *this;
    for (auto& t : b.tangents)
        for (double& v : t) v *= factor;
    return b;
}

LatticeBasis LatticeBasis::sheared() const {
    if (dim != 3) throw std::invalid_argument("shear needs dim 3");
    LatticeBasis b = *this;
    for (int a = 0; a < dim; ++a)
        b.tangents[0][static_cast<std::size_t>(a)] =
            tangents[0][static_cast<std::size_t>(a)] +
            tangents[1][static_cast<std::size_t>(a)];
    return b;
}

// ---------------------------------------------------------------------------
// CellndProblem

// Per-quadrature-point tables shared by every cell: multilinear corner values
// and physical gradients, spline stencil physical gradients and mirrored
// symmetric Hessians, plus the cell geometry. Forward assembly and
// backpropagation read the same entries, so the analytic gradient matches
// the discrete value exactly.
struct CellndProblem::Tables {
    std::vector<double> jinv;  // dim x dim, [s-index][y-index]
    std::vector<double> nu;    // unit normal
    std::vector<double> nunu;  // mirrored nu nu^T
    int P = 0;                 // points per axis
    int npts = 0;              // P^dim
    int nc = 0;                // 2^dim corners
    int ns = 0;                // 3^dim stencil offsets
    bool pots = false;
    std::vector<double> w;     // npts product weights
    std::vector<double> xi1;   // npts normal-axis coordinates
    std::vector<double> cval;  // npts * nc
    std::vector<double> cgy;   // npts * nc * dim
    std::vector<double> pgy;   // npts * ns * dim
    std::vector<double> phy;   // npts * ns * dim * dim
    std::vector<int> off1;     // ns normal stencil offsets
    std::vector<int> offt;     // ns * (dim - 1) tangential stencil offsets
    std::vector<int> cbit1;    // nc normal corner bits
    std::vector<int> cbitt;    // nc * (dim - 1) tangential corner bits
};

CellndProblem::CellndProblem(DensityPtr density, CompositeJump jump,
                             LatticeBasis basis, double l,
                             const CellndOptions& options)
    : density_(std::move(density)),
      jump_(std::move(jump)),
      basis_(std::move(basis)) {
    if (!density_) throw std::invalid_argument("null density");
    shape_ = density_->shape();
    shape_.check_valid();
    dim_ = shape_.dim;
    if (dim_ < 2 || dim_ > 3)
        throw std::invalid_argument("periodic cells need dim 2 or 3");
    if (density_->order() != 1)
        throw std::invalid_argument(
            "periodic cells support first-order densities only; "
            "second-order profiles live in the one-dimensional module");
    basis_.validate();
    if (basis_.dim != dim_)
        throw std::invalid_argument("lattice dimension mismatch");
    check_jump_admissible(*density_, jump_);
    double ndiff = 0.0;
    for (int a = 0; a < dim_; ++a)
        ndiff = std::max(ndiff,
                         std::abs(jump_.normal[static_cast<std::size_t>(a)] -
                                  basis_.nu[static_cast<std::size_t>(a)]));
    if (ndiff > 1e-8)
        throw std::invalid_argument("lattice normal differs from jump normal");
    if (!(l > 0.0)) throw std::invalid_argument("layer width must be positive");
    l_ = l;
    n1_ = options.normal_cells;
    nt_ = options.tangential_cells;
    if (n1_ < 16 || (n1_ % 2) != 0)
        throw std::invalid_argument("normal_cells must be even and >= 16");
    if (nt_ < 1) throw std::invalid_argument("tangential_cells must be >= 1");
    clamp_extra_ = options.clamp_extra_layer;
    ramp_kind_ = options.ramp;

    ramp_.resize(static_cast<std::size_t>(n1_) + 1);
    if (ramp_kind_ == RampKind::KernelBackbone) {
        if (!options.backbone)
            throw std::invalid_argument("kernel backbone ramp needs a profile");
        for (int i = 0; i <= n1_; ++i) {
            const double s = -0.5 + static_cast<double>(i) / n1_;
            ramp_[static_cast<std::size_t>(i)] =
                1.0 - options.backbone->cum_at(-s / l_);
        }
    } else {
        for (int i = 0; i <= n1_; ++i) {
            const double s = -0.5 + static_cast<double>(i) / n1_;
            ramp_[static_cast<std::size_t>(i)] = quintic_step(s / l_ + 0.5);
        }
    }
    ramp_.front() = 0.0;
    ramp_.back() = 1.0;

    // project the jump onto the constraint-compatible cone: curl rows keep
    // only the rank-one normal component, div rows lose any normal component
    minus_state_ = jump_.minus;
    delta_state_ = jump_.delta();
    curl_deltas_.assign(static_cast<std::size_t>(shape_.grad_rows), 0.0);
    for (int r = 0; r < shape_.grad_rows; ++r) {
        double along = 0.0;
        for (int a = 0; a < dim_; ++a)
            along += delta_state_[static_cast<std::size_t>(shape_.grad_index(r, a))] *
                     basis_.nu[static_cast<std::size_t>(a)];
        curl_deltas_[static_cast<std::size_t>(r)] = along;
        for (int a = 0; a < dim_; ++a)
            delta_state_[static_cast<std::size_t>(shape_.grad_index(r, a))] =
                along * basis_.nu[static_cast<std::size_t>(a)];
    }
    for (int r = 0; r < shape_.divfree_rows; ++r)
        for (int pass = 0; pass < 2; ++pass) {
            double along = 0.0;
            for (int a = 0; a < dim_; ++a)
                along += delta_state_[static_cast<std::size_t>(
                             shape_.divfree_index(r, a))] *
                         basis_.nu[static_cast<std::size_t>(a)];
            for (int a = 0; a < dim_; ++a)
                delta_state_[static_cast<std::size_t>(shape_.divfree_index(r, a))] -=
                    along * basis_.nu[static_cast<std::size_t>(a)];
        }

    const Layout lay = make_layout(shape_, n1_, nt_, clamp_extra_);
    dof_count_ = lay.dof_count;

    auto tb = std::make_shared<Tables>();
    tb->jinv = build_jinv(basis_);
    tb->nu = basis_.nu;
    tb->nunu = build_nunu(basis_);
    tb->pots = lay.n_pots > 0;
    const int degree = density_->max_total_degree() * (tb->pots ? 2 : 1);
    const GaussRule rule = gauss_rule_for_degree(degree);
    tb->P = rule.points();
    tb->npts = int_pow(tb->P, dim_);
    tb->nc = 1 << dim_;
    tb->ns = int_pow(3, dim_);
    tb->w.resize(static_cast<std::size_t>(tb->npts));
    tb->xi1.resize(static_cast<std::size_t>(tb->npts));
    tb->cval.resize(static_cast<std::size_t>(tb->npts) * tb->nc);
    tb->cgy.resize(static_cast<std::size_t>(tb->npts) * tb->nc * dim_);
    if (tb->pots) {
        tb->pgy.resize(static_cast<std::size_t>(tb->npts) * tb->ns * dim_);
        tb->phy.resize(static_cast<std::size_t>(tb->npts) * tb->ns * dim_ * dim_);
    }
    tb->off1.resize(static_cast<std::size_t>(tb->ns));
    tb->offt.resize(static_cast<std::size_t>(tb->ns) * (dim_ - 1));
    for (int o = 0; o < tb->ns; ++o) {
        int t = o;
        tb->off1[static_cast<std::size_t>(o)] = t % 3;
        t /= 3;
        for (int j = 0; j < dim_ - 1; ++j) {
            tb->offt[static_cast<std::size_t>(o * (dim_ - 1) + j)] = t % 3;
            t /= 3;
        }
    }
    tb->cbit1.resize(static_cast<std::size_t>(tb->nc));
    tb->cbitt.resize(static_cast<std::size_t>(tb->nc) * (dim_ - 1));
    for (int c = 0; c < tb->nc; ++c) {
        tb->cbit1[static_cast<std::size_t>(c)] = c & 1;
        for (int j = 0; j < dim_ - 1; ++j)
            tb->cbitt[static_cast<std::size_t>(c * (dim_ - 1) + j)] =
                (c >> (1 + j)) & 1;
    }

    double scale[3] = {static_cast<double>(n1_), static_cast<double>(nt_),
                       static_cast<double>(nt_)};
    std::vector<PotStencil> sten(static_cast<std::size_t>(tb->ns));
    for (int gp = 0; gp < tb->npts; ++gp) {
        int g = gp;
        double xi[3] = {0.0, 0.0, 0.0};
        double wq = 1.0;
        for (int x = 0; x < dim_; ++x) {
            const int gx = g % tb->P;
            g /= tb->P;
            xi[x] = rule.nodes[static_cast<std::size_t>(gx)];
            wq *= rule.weights[static_cast<std::size_t>(gx)];
        }
        tb->w[static_cast<std::size_t>(gp)] = wq;
        tb->xi1[static_cast<std::size_t>(gp)] = xi[0];
        corner_tables(xi, scale, tb->jinv, dim_,
                      &tb->cval[static_cast<std::size_t>(gp) * tb->nc],
                      &tb->cgy[static_cast<std::size_t>(gp) * tb->nc * dim_]);
        if (tb->pots) {
            AxisEval ax[3] = {};
            for (int x = 0; x < dim_; ++x) ax[x] = qbs_axis(xi[x], scale[x]);
            build_pot_stencil(ax, dim_, sten.data());
            for (int o = 0; o < tb->ns; ++o)
                pot_physical(
                    tb->jinv, dim_, sten[static_cast<std::size_t>(o)],
                    &tb->pgy[(static_cast<std::size_t>(gp) * tb->ns + o) * dim_],
                    &tb->phy[(static_cast<std::size_t>(gp) * tb->ns + o) * dim_ *
                             dim_]);
        }
    }
    tables_ = std::move(tb);
}

double CellndProblem::assemble(const std::vector<double>& x,
                               std::vector<double>* grad,
                               ConstraintResiduals* residuals) const {
    const Layout lay = make_layout(shape_, n1_, nt_, clamp_extra_);
    if (static_cast<int>(x.size()) != lay.dof_count)
        throw std::invalid_argument("coefficient vector size mismatch");
    const Tables& tb = *tables_;
    const int dim = dim_;
    const int S = shape_.state_size();
    const int ncells = n1_ * lay.T;
    const double vol = 1.0 / (static_cast<double>(n1_) * lay.T);
    if (grad) grad->assign(static_cast<std::size_t>(lay.dof_count), 0.0);
    if (residuals) *residuals = ConstraintResiduals{};
    std::vector<double> contribs;
    if (!residuals) contribs.assign(static_cast<std::size_t>(ncells), 0.0);

    std::vector<double> z(static_cast<std::size_t>(S));
    std::vector<double> D(static_cast<std::size_t>(S) * dim);
    std::vector<double> vg(static_cast<std::size_t>(S));
    std::vector<double> dg(static_cast<std::size_t>(S) * dim);
    const double* fplus = jump_.f_plus.empty() ? nullptr : jump_.f_plus.data();
    const double* fminus = jump_.f_minus.empty() ? nullptr : jump_.f_minus.data();
    const double* nu = tb.nu.data();

    for (int cell = 0; cell < ncells; ++cell) {
        const int ci = cell % n1_;
        int rest = cell / n1_;
        int ca[2] = {0, 0};
        ca[0] = (dim >= 2) ? rest % nt_ : 0;
        ca[1] = (dim == 3) ? rest / nt_ : 0;
        const double* inhom = (2 * ci >= n1_) ? fplus : fminus;
        const double r0 = ramp_[static_cast<std::size_t>(ci)];
        const double r1 = ramp_[static_cast<std::size_t>(ci) + 1];
        const double drs = (r1 - r0) * n1_;
        const double tbase = l_ * drs;
        double cellsum = 0.0;

        for (int gp = 0; gp < tb.npts; ++gp) {
            const double xi1 = tb.xi1[static_cast<std::size_t>(gp)];
            const double rr = r0 + xi1 * (r1 - r0);
            for (int c = 0; c < S; ++c)
                z[static_cast<std::size_t>(c)] =
                    minus_state_[static_cast<std::size_t>(c)] +
                    rr * delta_state_[static_cast<std::size_t>(c)];
            for (int r = 0; r < shape_.grad_rows; ++r) {
                const double tc = tbase * curl_deltas_[static_cast<std::size_t>(r)];
                const int rowc = shape_.grad_index(r, 0);
                for (int a = 0; a < dim; ++a)
                    for (int b = 0; b < dim; ++b)
                        D[static_cast<std::size_t>((rowc + a) * dim + b)] =
                            tc * tb.nunu[static_cast<std::size_t>(a * dim + b)];
            }
            for (int c = shape_.grad_rows * dim; c < S; ++c) {
                const double tdc = tbase * delta_state_[static_cast<std::size_t>(c)];
                for (int b = 0; b < dim; ++b)
                    D[static_cast<std::size_t>(c * dim + b)] =
                        tdc * nu[b];
            }

            const double* cval = &tb.cval[static_cast<std::size_t>(gp) * tb.nc];
            const double* cgy =
                &tb.cgy[static_cast<std::size_t>(gp) * tb.nc * dim];
            for (int row = 0; row < lay.m; ++row) {
                const int uidx = shape_.unconstrained_index(row);
                double zadd = 0.0;
                double gy[3] = {0.0, 0.0, 0.0};
                for (int corner = 0; corner < tb.nc; ++corner) {
                    const int node = ci + tb.cbit1[static_cast<std::size_t>(corner)];
                    if (node < lay.i0 || node > lay.i1) continue;
                    int tl = 0, mul = 1;
                    for (int j = 0; j < dim - 1; ++j) {
                        int tj = ca[j] +
                                 tb.cbitt[static_cast<std::size_t>(
                                     corner * (dim - 1) + j)];
                        if (tj >= nt_) tj -= nt_;
                        tl += tj * mul;
                        mul *= nt_;
                    }
                    const double K =
                        x[static_cast<std::size_t>(pi_dof(lay, row, node, tl))];
                    if (K == 0.0) continue;
                    zadd += K * cval[corner];
                    for (int a = 0; a < dim; ++a)
                        gy[a] += K * cgy[corner * dim + a];
                }
                z[static_cast<std::size_t>(uidx)] += zadd;
                for (int b = 0; b < dim; ++b)
                    D[static_cast<std::size_t>(uidx * dim + b)] += l_ * gy[b];
            }

            for (int prow = 0; prow < lay.n_pots; ++prow) {
                double Gy[3] = {0.0, 0.0, 0.0};
                double Hy[9] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
                for (int o = 0; o < tb.ns; ++o) {
                    const int c = ci + tb.off1[static_cast<std::size_t>(o)];
                    int tl = 0, mul = 1;
                    for (int j = 0; j < dim - 1; ++j) {
                        int tj = ca[j] +
                                 tb.offt[static_cast<std::size_t>(o * (dim - 1) + j)];
                        if (tj >= nt_) tj -= nt_;
                        if (tj >= nt_) tj -= nt_;
                        tl += tj * mul;
                        mul *= nt_;
                    }
                    const double K = pot_coeff(lay, x, prow, c, tl);
                    if (K == 0.0) continue;
                    const double* gy =
                        &tb.pgy[(static_cast<std::size_t>(gp) * tb.ns + o) * dim];
                    const double* hy =
                        &tb.phy[(static_cast<std::size_t>(gp) * tb.ns + o) * dim *
                                dim];
                    for (int a = 0; a < dim; ++a) Gy[a] += K * gy[a];
                    for (int e = 0; e < dim * dim; ++e) Hy[e] += K * hy[e];
                }
                if (prow < lay.k) {
                    const int rowc = shape_.grad_index(prow, 0);
                    for (int a = 0; a < dim; ++a)
                        z[static_cast<std::size_t>(rowc + a)] += Gy[a];
                    for (int a = 0; a < dim; ++a)
                        for (int b = 0; b < dim; ++b)
                            D[static_cast<std::size_t>((rowc + a) * dim + b)] +=
                                l_ * Hy[a * dim + b];
                } else {
                    const int q = prow - lay.k;
                    const int r = q / lay.na;
                    const int j = q % lay.na + 1;
                    const int i0c = shape_.divfree_index(r, 0);
                    const int ijc = shape_.divfree_index(r, j);
                    z[static_cast<std::size_t>(i0c)] -= Gy[j];
                    z[static_cast<std::size_t>(ijc)] += Gy[0];
                    for (int b = 0; b < dim; ++b) {
                        D[static_cast<std::size_t>(i0c * dim + b)] -=
                            l_ * Hy[j * dim + b];
                        D[static_cast<std::size_t>(ijc * dim + b)] +=
                            l_ * Hy[0 * dim + b];
                    }
                }
            }

            if (residuals) {
                for (int r = 0; r < shape_.grad_rows; ++r)
                    for (int a = 0; a < dim; ++a)
                        for (int b = a + 1; b < dim; ++b) {
                            const double dab = D[static_cast<std::size_t>(
                                shape_.grad_index(r, a) * dim + b)];
                            const double dba = D[static_cast<std::size_t>(
                                shape_.grad_index(r, b) * dim + a)];
                            residuals->max_curl = std::max(residuals->max_curl,
                                                           std::abs(dab - dba));
                        }
                for (int r = 0; r < shape_.divfree_rows; ++r) {
                    double tr = 0.0;
                    for (int a = 0; a < dim; ++a)
                        tr += D[static_cast<std::size_t>(
                            shape_.divfree_index(r, a) * dim + a)];
                    residuals->max_div =
                        std::max(residuals->max_div, std::abs(tr));
                }
                continue;
            }

            SlotView view;
            view.d2 = nullptr;
            view.d1 = D.data();
            view.value = z.data();
            view.inhom = inhom;
            const double wq = tb.w[static_cast<std::size_t>(gp)] * vol / l_;
            cellsum += wq * density_->eval(view);

            if (grad) {
                std::fill(vg.begin(), vg.end(), 0.0);
                std::fill(dg.begin(), dg.end(), 0.0);
                SlotGrad sg;
                sg.d2 = nullptr;
                sg.d1 = dg.data();
                sg.value = vg.data();
                density_->add_grad(view, wq, sg);
                std::vector<double>& gout = *grad;

                for (int row = 0; row < lay.m; ++row) {
                    const int uidx = shape_.unconstrained_index(row);
                    const double vw = vg[static_cast<std::size_t>(uidx)];
                    double dw[3] = {0.0, 0.0, 0.0};
                    for (int b = 0; b < dim; ++b)
                        dw[b] = l_ * dg[static_cast<std::size_t>(uidx * dim + b)];
                    for (int corner = 0; corner < tb.nc; ++corner) {
                        const int node =
                            ci + tb.cbit1[static_cast<std::size_t>(corner)];
                        if (node < lay.i0 || node > lay.i1) continue;
                        int tl = 0, mul = 1;
                        for (int j = 0; j < dim - 1; ++j) {
                            int tj = ca[j] +
                                     tb.cbitt[static_cast<std::size_t>(
                                         corner * (dim - 1) + j)];
                            if (tj >= nt_) tj -= nt_;
                            tl += tj * mul;
                            mul *= nt_;
                        }
                        double s = vw * cval[corner];
                        for (int a = 0; a < dim; ++a)
                            s += dw[a] * cgy[corner * dim + a];
                        gout[static_cast<std::size_t>(pi_dof(lay, row, node, tl))] +=
                            s;
                    }
                }

                for (int prow = 0; prow < lay.n_pots; ++prow) {
                    double vwa[3] = {0.0, 0.0, 0.0};
                    double dwa[9] = {0.0, 0.0, 0.0, 0.0, 0.0,
                                     0.0, 0.0, 0.0, 0.0};
                    if (prow < lay.k) {
                        const int rowc = shape_.grad_index(prow, 0);
                        for (int a = 0; a < dim; ++a) {
                            vwa[a] = vg[static_cast<std::size_t>(rowc + a)];
                            for (int b = 0; b < dim; ++b)
                                dwa[a * dim + b] =
                                    l_ * dg[static_cast<std::size_t>(
                                             (rowc + a) * dim + b)];
                        }
                    } else {
                        const int q = prow - lay.k;
                        const int r = q / lay.na;
                        const int j = q % lay.na + 1;
                        const int i0c = shape_.divfree_index(r, 0);
                        const int ijc = shape_.divfree_index(r, j);
                        vwa[j] -= vg[static_cast<std::size_t>(i0c)];
                        vwa[0] += vg[static_cast<std::size_t>(ijc)];
                        for (int b = 0; b < dim; ++b) {
                            dwa[j * dim + b] -=
                                l_ * dg[static_cast<std::size_t>(i0c * dim + b)];
                            dwa[0 * dim + b] +=
                                l_ * dg[static_cast<std::size_t>(ijc * dim + b)];
                        }
                    }
                    for (int o = 0; o < tb.ns; ++o) {
                        const int c = ci + tb.off1[static_cast<std::size_t>(o)];
                        int tl = 0, mul = 1;
                        for (int j = 0; j < dim - 1; ++j) {
                            int tj = ca[j] +
                                     tb.offt[static_cast<std::size_t>(
                                         o * (dim - 1) + j)];
                            if (tj >= nt_) tj -= nt_;
                            if (tj >= nt_) tj -= nt_;
                            tl += tj * mul;
                            mul *= nt_;
                        }
                        const int kdof = pot_dof_index(lay, prow, c, tl);
                        if (kdof < 0) continue;
                        const double* gy =
                            &tb.pgy[(static_cast<std::size_t>(gp) * tb.ns + o) *
                                    dim];
                        const double* hy =
                            &tb.phy[(static_cast<std::size_t>(gp) * tb.ns + o) *
                                    dim * dim];
                        double s = 0.0;
                        for (int a = 0; a < dim; ++a) s += vwa[a] * gy[a];
                        for (int e = 0; e < dim * dim; ++e) s += dwa[e] * hy[e];
                        gout[static_cast<std::size_t>(kdof)] += s;
                    }
                }
            }
        }
        if (!residuals) contribs[static_cast<std::size_t>(cell)] = cellsum;
    }
    if (residuals) return 0.0;
    return pairwise_sum(contribs);
}

double CellndProblem::value(const std::vector<double>& x) const {
    return assemble(x, nullptr, nullptr);
}

double CellndProblem::value_and_grad(const std::vector<double>& x,
                                     std::vector<double>& grad) const {
    return assemble(x, &grad, nullptr);
}

ConstraintResiduals CellndProblem::constraint_residuals(
    const std::vector<double>& x) const {
    ConstraintResiduals r;
    assemble(x, nullptr, &r);
    return r;
}

std::vector<double> CellndProblem::broadcast(
    const CellndProblem& line_problem, const std::vector<double>& x_line) const {
    if (line_problem.nt_ != 1)
        throw std::invalid_argument("broadcast source must have one tangential cell");
    if (line_problem.n1_ != n1_ || !(line_problem.shape_ == shape_) ||
        line_problem.clamp_extra_ != clamp_extra_ ||
        line_problem.ramp_kind_ != ramp_kind_ || line_problem.l_ != l_)
        throw std::invalid_argument("broadcast problems are not matched");
    const Layout lay = make_layout(shape_, n1_, nt_, clamp_extra_);
    const Layout lin = make_layout(shape_, n1_, 1, clamp_extra_);
    if (static_cast<int>(x_line.size()) != lin.dof_count)
        throw std::invalid_argument("coefficient vector size mismatch");
    std::vector<double> x(static_cast<std::size_t>(lay.dof_count), 0.0);
    for (int row = 0; row < lay.m; ++row)
        for (int i = lay.i0; i <= lay.i1; ++i) {
            const double v =
                x_line[static_cast<std::size_t>(pi_dof(lin, row, i, 0))];
            for (int tl = 0; tl < lay.T; ++tl)
                x[static_cast<std::size_t>(pi_dof(lay, row, i, tl))] = v;
        }
    for (int prow = 0; prow < lay.n_pots; ++prow) {
        for (int c = lay.cLo; c <= lay.cHi; ++c) {
            const double v = x_line[static_cast<std::size_t>(
                pot_base(lin, prow) + (c - lin.cLo) * 1 + 0)];
            for (int tl = 0; tl < lay.T; ++tl)
                x[static_cast<std::size_t>(pot_base(lay, prow) +
                                           (c - lay.cLo) * lay.T + tl)] = v;
        }
        x[static_cast<std::size_t>(pot_scalar(lay, prow))] =
            x_line[static_cast<std::size_t>(pot_scalar(lin, prow))];
    }
    return x;
}

std::vector<double> CellndProblem::compress_from(
    const CellndProblem& coarse, const std::vector<double>& x_coarse,
    int k) const {
    if (k < 1) throw std::invalid_argument("compression factor must be >= 1");
    if (coarse.n1_ != n1_ || coarse.nt_ != nt_ || !(coarse.shape_ == shape_) ||
        coarse.clamp_extra_ != clamp_extra_ || coarse.ramp_kind_ != ramp_kind_)
        throw std::invalid_argument("compression problems are not matched");
    if (std::abs(coarse.l_ - k * l_) > 1e-9 * coarse.l_)
        throw std::invalid_argument("compression widths are not in ratio k");
    const Layout lay = make_layout(shape_, n1_, nt_, clamp_extra_);
    if (static_cast<int>(x_coarse.size()) != lay.dof_count)
        throw std::invalid_argument("coefficient vector size mismatch");
    std::vector<double> x(static_cast<std::size_t>(lay.dof_count), 0.0);
    if (k == 1) return x_coarse;

    // nodal values resample exactly: new node s maps to old node k*s when it
    // lands inside the cell, and to the pure phase (zero deviation) outside
    for (int row = 0; row < lay.m; ++row)
        for (int i = lay.i0; i <= lay.i1; ++i) {
            const int jn = k * i - (k - 1) * n1_ / 2;
            if (jn < lay.i0 || jn > lay.i1) continue;
            for (int tl = 0; tl < lay.T; ++tl) {
                int told[2] = {0, 0};
                int tt = tl;
                for (int j = 0; j < dim_ - 1; ++j) {
                    told[j] = (k * (tt % nt_)) % nt_;
                    tt /= nt_;
                }
                int tlin = 0, mul = 1;
                for (int j = 0; j < dim_ - 1; ++j) {
                    tlin += told[j] * mul;
                    mul *= nt_;
                }
                x[static_cast<std::size_t>(pi_dof(lay, row, i, tl))] = x_coarse[
                    static_cast<std::size_t>(pi_dof(lay, row, jn, tlin))];
            }
        }

    // spline coefficients resample by collocating the compressed potential
    // at the coefficient's natural abscissa; approximate, but only the warm
    // start quality depends on it
    for (int prow = 0; prow < lay.n_pots; ++prow) {
        for (int c = lay.cLo; c <= lay.cHi; ++c) {
            const double s1 = -0.5 + (c - 0.5) / static_cast<double>(n1_);
            for (int tl = 0; tl < lay.T; ++tl) {
                double s[3] = {k * s1, 0.0, 0.0};
                int tt = tl;
                for (int j = 0; j < dim_ - 1; ++j) {
                    const double sj = (tt % nt_ - 0.5) / static_cast<double>(nt_);
                    s[1 + j] = k * sj;
                    tt /= nt_;
                }
                x[static_cast<std::size_t>(pot_base(lay, prow) +
                                           (c - lay.cLo) * lay.T + tl)] =
                    potential_value(lay, x_coarse, prow, s) / k;
            }
        }
        x[static_cast<std::size_t>(pot_scalar(lay, prow))] =
            x_coarse[static_cast<std::size_t>(pot_scalar(lay, prow))] / k;
    }
    return x;
}

double CellndProblem::perturbation_norm(const std::vector<double>& x) const {
    const Layout lay = make_layout(shape_, n1_, nt_, clamp_extra_);
    if (static_cast<int>(x.size()) != lay.dof_count)
        throw std::invalid_argument("coefficient vector size mismatch");
    double total = 0.0;
    long long count = 0;
    auto accumulate = [&](int base) {
        double mean = 0.0;
        for (int tl = 0; tl < lay.T; ++tl)
            mean += x[static_cast<std::size_t>(base + tl)];
        mean /= lay.T;
        for (int tl = 0; tl < lay.T; ++tl) {
            const double d = x[static_cast<std::size_t>(base + tl)] - mean;
            total += d * d;
        }
        count += lay.T;
    };
    for (int row = 0; row < lay.m; ++row)
        for (int i = lay.i0; i <= lay.i1; ++i)
            accumulate(pi_dof(lay, row, i, 0));
    for (int prow = 0; prow < lay.n_pots; ++prow)
        for (int c = lay.cLo; c <= lay.cHi; ++c)
            accumulate(pot_base(lay, prow) + (c - lay.cLo) * lay.T);
    if (count == 0) return 0.0;
    return std::sqrt(total / static_cast<double>(count));
}

CellProfile CellndProblem::profile(const std::vector<double>& x) const {
    CellProfile p;
    p.shape = shape_;
    p.basis = basis_;
    p.l = l_;
    p.normal_cells = n1_;
    p.tangential_cells = nt_;
    p.clamp_extra_layer = clamp_extra_;
    p.ramp_kind = ramp_kind_;
    p.ramp_nodes = ramp_;
    p.minus_state = minus_state_;
    p.delta_state = delta_state_;
    p.curl_deltas = curl_deltas_;
    p.dof = x;
    p.value = assemble(x, nullptr, nullptr);
    return p;
}

// ---------------------------------------------------------------------------
// CellSampler

CellSampler::CellSampler(const CellProfile& profile) : profile_(profile) {
    dim_ = profile_.shape.dim;
    n1_ = profile_.normal_cells;
    nt_ = profile_.tangential_cells;
    if (static_cast<int>(profile_.ramp_nodes.size()) != n1_ + 1)
        throw std::invalid_argument("profile ramp table size mismatch");
    LatticeBasis basis = profile_.basis;
    basis.validate();
    jinv_ = build_jinv(basis);
    nunu_ = build_nunu(basis);
    dramp_.resize(static_cast<std::size_t>(n1_));
    for (int c = 0; c < n1_; ++c)
        dramp_[static_cast<std::size_t>(c)] =
            (profile_.ramp_nodes[static_cast<std::size_t>(c) + 1] -
             profile_.ramp_nodes[static_cast<std::size_t>(c)]) *
            n1_;
    const Layout lay =
        make_layout(profile_.shape, n1_, nt_, profile_.clamp_extra_layer);
    if (static_cast<int>(profile_.dof.size()) != lay.dof_count)
        throw std::invalid_argument("profile coefficient size mismatch");
}

void CellSampler::deviation(const double* s, double* state_dev,
                            double* slot_dev) const {
    const CompositeShape& sh = profile_.shape;
    const int dim = dim_;
    const int S = sh.state_size();
    for (int c = 0; c < S; ++c) state_dev[c] = 0.0;
    if (slot_dev)
        for (int c = 0; c < S * dim; ++c) slot_dev[c] = 0.0;
    if (s[0] <= -0.5 || s[0] >= 0.5) return;
    const Layout lay = make_layout(sh, n1_, nt_, profile_.clamp_extra_layer);
    const double l = profile_.l;

    const double u1 = (s[0] + 0.5) * n1_;
    const int c1 = std::min(static_cast<int>(u1), n1_ - 1);
    const double xi1 = u1 - c1;
    int cell[3] = {c1, 0, 0};
    double xi[3] = {xi1, 0.0, 0.0};
    for (int j = 0; j < dim - 1; ++j) {
        double w = s[1 + j] - std::floor(s[1 + j]);
        if (w >= 1.0) w = 0.0;
        const double ut = w * nt_;
        const int ct = std::min(static_cast<int>(ut), nt_ - 1);
        cell[1 + j] = ct;
        xi[1 + j] = ut - ct;
    }

    // multilinear nodal block
    for (int row = 0; row < lay.m; ++row) {
        const int uidx = sh.unconstrained_index(row);
        const int nc = 1 << dim;
        for (int corner = 0; corner < nc; ++corner) {
            const int node = c1 + (corner & 1);
            if (node < lay.i0 || node > lay.i1) continue;
            int tl = 0, mul = 1;
            for (int j = 0; j < dim - 1; ++j) {
                int tj = cell[1 + j] + ((corner >> (1 + j)) & 1);
                if (tj >= nt_) tj -= nt_;
                tl += tj * mul;
                mul *= nt_;
            }
            const double K = profile_.dof[static_cast<std::size_t>(
                pi_dof(lay, row, node, tl))];
            if (K == 0.0) continue;
            double v = 1.0;
            double lg[3] = {0.0, 0.0, 0.0};
            for (int x = 0; x < dim; ++x) {
                const bool hi = (corner >> x) & 1;
                v *= hi ? xi[x] : (1.0 - xi[x]);
            }
            const double scl[3] = {static_cast<double>(n1_),
                                   static_cast<double>(nt_),
                                   static_cast<double>(nt_)};
            for (int x = 0; x < dim; ++x) {
                double g = ((corner >> x) & 1) ? scl[x] : -scl[x];
                for (int y = 0; y < dim; ++y)
                    if (y != x) g *= ((corner >> y) & 1) ? xi[y] : (1.0 - xi[y]);
                lg[x] = g;
            }
            state_dev[uidx] += K * v;
            if (slot_dev)
                for (int a = 0; a < dim; ++a) {
                    double g = 0.0;
                    for (int b = 0; b < dim; ++b)
                        g += jinv_[static_cast<std::size_t>(b * dim + a)] * lg[b];
                    slot_dev[uidx * dim + a] += l * K * g;
                }
        }
    }

    if (lay.n_pots > 0) {
        AxisEval ax[3] = {};
        const double scl[3] = {static_cast<double>(n1_),
                               static_cast<double>(nt_),
                               static_cast<double>(nt_)};
        for (int x = 0; x < dim; ++x) ax[x] = qbs_axis(xi[x], scl[x]);
        PotStencil sten[27];
        build_pot_stencil(ax, dim, sten);
        const int ns = int_pow(3, dim);
        for (int prow = 0; prow < lay.n_pots; ++prow) {
            double Gy[3] = {0.0, 0.0, 0.0};
            double Hy[9] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
            for (int o = 0; o < ns; ++o) {
                int idx[3] = {0, 0, 0};
                int t = o;
                for (int x = 0; x < dim; ++x) {
                    idx[x] = t % 3;
                    t /= 3;
                }
                int tl = 0, mul = 1;
                for (int j = 0; j < dim - 1; ++j) {
                    int tj = cell[1 + j] + idx[1 + j];
                    if (tj >= nt_) tj -= nt_;
                    if (tj >= nt_) tj -= nt_;
                    tl += tj * mul;
                    mul *= nt_;
                }
                const double K =
                    pot_coeff(lay, profile_.dof, prow, c1 + idx[0], tl);
                if (K == 0.0) continue;
                double gy[3], hy[9];
                pot_physical(jinv_, dim, sten[o], gy, hy);
                for (int a = 0; a < dim; ++a) Gy[a] += K * gy[a];
                for (int e = 0; e < dim * dim; ++e) Hy[e] += K * hy[e];
            }
            if (prow < lay.k) {
                const int rowc = sh.grad_index(prow, 0);
                for (int a = 0; a < dim; ++a) state_dev[rowc + a] += Gy[a];
                if (slot_dev)
                    for (int a = 0; a < dim; ++a)
                        for (int b = 0; b < dim; ++b)
                            slot_dev[(rowc + a) * dim + b] += l * Hy[a * dim + b];
            } else {
                const int q = prow - lay.k;
                const int r = q / lay.na;
                const int j = q % lay.na + 1;
                const int i0c = sh.divfree_index(r, 0);
                const int ijc = sh.divfree_index(r, j);
                state_dev[i0c] -= Gy[j];
                state_dev[ijc] += Gy[0];
                if (slot_dev)
                    for (int b = 0; b < dim; ++b) {
                        slot_dev[i0c * dim + b] -= l * Hy[j * dim + b];
                        slot_dev[ijc * dim + b] += l * Hy[0 * dim + b];
                    }
            }
        }
    }
}

void CellSampler::state(const double* s, double* out) const {
    const int S = profile_.shape.state_size();
    deviation(s, out, nullptr);
    const double u1 = (s[0] + 0.5) * n1_;
    double r;
    if (u1 <= 0.0) {
        r = 0.0;
    } else if (u1 >= static_cast<double>(n1_)) {
        r = 1.0;
    } else {
        const int c1 = std::min(static_cast<int>(u1), n1_ - 1);
        const double xi1 = u1 - c1;
        const double r0 = profile_.ramp_nodes[static_cast<std::size_t>(c1)];
        const double r1 = profile_.ramp_nodes[static_cast<std::size_t>(c1) + 1];
        r = r0 + xi1 * (r1 - r0);
    }
    for (int c = 0; c < S; ++c)
        out[c] += profile_.minus_state[static_cast<std::size_t>(c)] +
                  r * profile_.delta_state[static_cast<std::size_t>(c)];
}

void CellSampler::state_and_slot(const double* s, double* state_out,
                                 double* slot_out) const {
    const CompositeShape& sh = profile_.shape;
    const int dim = dim_;
    const int S = sh.state_size();
    deviation(s, state_out, slot_out);
    const double u1 = (s[0] + 0.5) * n1_;
    double r = 0.0, drs = 0.0;
    if (u1 <= 0.0) {
        r = 0.0;
    } else if (u1 >= static_cast<double>(n1_)) {
        r = 1.0;
    } else {
        const int c1 = std::min(static_cast<int>(u1), n1_ - 1);
        const double xi1 = u1 - c1;
        const double r0 = profile_.ramp_nodes[static_cast<std::size_t>(c1)];
        const double r1 = profile_.ramp_nodes[static_cast<std::size_t>(c1) + 1];
        r = r0 + xi1 * (r1 - r0);
        drs = dramp_[static_cast<std::size_t>(c1)];
    }
    const double tbase = profile_.l * drs;
    for (int c = 0; c < S; ++c)
        state_out[c] += profile_.minus_state[static_cast<std::size_t>(c)] +
                        r * profile_.delta_state[static_cast<std::size_t>(c)];
    for (int rr = 0; rr < sh.grad_rows; ++rr) {
        const double tc = tbase * profile_.curl_deltas[static_cast<std::size_t>(rr)];
        const int rowc = sh.grad_index(rr, 0);
        for (int a = 0; a < dim; ++a)
            for (int b = 0; b < dim; ++b)
                slot_out[(rowc + a) * dim + b] +=
                    tc * nunu_[static_cast<std::size_t>(a * dim + b)];
    }
    const LatticeBasis& basis = profile_.basis;
    for (int c = sh.grad_rows * dim; c < S; ++c) {
        const double tdc =
            tbase * profile_.delta_state[static_cast<std::size_t>(c)];
        for (int b = 0; b < dim; ++b)
            slot_out[c * dim + b] += tdc * basis.nu[static_cast<std::size_t>(b)];
    }
}

// ---------------------------------------------------------------------------
// Width scans

namespace {

struct WidthRun {
    double l = 0.0;
    LbfgsResult line_res;
    LbfgsResult plain_res;
    LbfgsResult kick_res;
    bool kicked = false;
    int best_kind = 0;  // 0 = plain, 1 = kicked
    double best_value = 0.0;
};

struct ScanData {
    std::vector<double> widths;
    std::vector<CellndProblem> line_probs;
    std::vector<CellndProblem> full_probs;
    std::vector<WidthRun> runs;
    std::uint64_t seed = 0;
    double amplitude = 0.0;
};

const std::vector<double>& width_best_x(const WidthRun& run) {
    return run.best_kind == 1 ? run.kick_res.x : run.plain_res.x;
}

LbfgsResult run_solver(const CellndProblem& problem, std::vector<double> x0,
                       const LbfgsOptions& solver) {
    ObjectiveFn obj = [&problem](const std::vector<double>& x,
                                 std::vector<double>& g) {
        return problem.value_and_grad(x, g);
    };
    return lbfgs_minimize(obj, std::move(x0), solver);
}

// Descending width sweep. Per width a 1D-class pass (one tangential cell)
// runs first; its minimizer seeds the full pass tangentially constant, so
// full values never exceed the matched 1D optimum. Integer-ratio neighbors
// also offer a compressed warm start; the better seed wins by value.
ScanData run_width_scan(const DensityPtr& density, const CompositeJump& jump,
                        const LatticeBasis& basis_in,
                        const CellndOptions& options) {
    LatticeBasis basis = basis_in;
    basis.validate();
    std::vector<double> widths = options.l_grid;
    if (widths.empty()) widths = {0.5, 0.25, 0.125, 0.0625, 0.03125};
    std::sort(widths.begin(), widths.end(), std::greater<double>());
    widths.erase(std::unique(widths.begin(), widths.end(),
                             [](double a, double b) {
                                 return std::abs(a - b) <= 1e-12 * std::max(a, b);
                             }),
                 widths.end());
    for (double l : widths)
        if (!(l > 0.0)) throw std::invalid_argument("layer widths must be positive");

    CellndOptions line_options = options;
    line_options.tangential_cells = 1;

    ScanData out;
    out.widths = widths;
    out.line_probs.reserve(widths.size());
    out.full_probs.reserve(widths.size());
    out.runs.reserve(widths.size());

    const bool kick = options.kick_seed != 0;
    out.seed = options.kick_seed;
    double amp = options.kick_amplitude;
    if (kick && !(amp > 0.0)) {
        double dmax = 0.0;
        for (double d : jump.delta()) dmax = std::max(dmax, std::abs(d));
        amp = 0.05 * (1.0 + dmax);
    }
    out.amplitude = kick ? amp : 0.0;
    std::mt19937_64 rng(options.kick_seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);

    for (std::size_t iw = 0; iw < widths.size(); ++iw) {
        const double l = widths[iw];
        int ratio = 0;
        if (iw > 0) {
            const double q = widths[iw - 1] / l;
            const double rq = std::round(q);
            if (rq >= 2.0 && std::abs(q - rq) <= 1e-9 * rq)
                ratio = static_cast<int>(rq);
        }

        out.line_probs.emplace_back(density, jump, basis, l, line_options);
        const CellndProblem& line = out.line_probs.back();
        std::vector<double> init(static_cast<std::size_t>(line.dof_count()), 0.0);
        if (ratio > 0) {
            std::vector<double> cand = line.compress_from(
                out.line_probs[iw - 1], out.runs[iw - 1].line_res.x, ratio);
            if (line.value(cand) < line.value(init)) init = std::move(cand);
        }
        WidthRun run;
        run.l = l;
        run.line_res = run_solver(line, std::move(init), options.solver);

        out.full_probs.emplace_back(density, jump, basis, l, options);
        const CellndProblem& full = out.full_probs.back();
        std::vector<double> finit = full.broadcast(line, run.line_res.x);
        if (ratio > 0) {
            std::vector<double> cand =
                full.compress_from(out.full_probs[iw - 1],
                                   width_best_x(out.runs[iw - 1]), ratio);
            if (full.value(cand) < full.value(finit)) finit = std::move(cand);
        }
        run.plain_res = run_solver(full, std::move(finit), options.solver);
        run.best_value = run.plain_res.value;
        run.best_kind = 0;
        if (kick) {
            std::vector<double> kx = run.plain_res.x;
            for (double& v : kx) v += amp * uni(rng);
            run.kick_res = run_solver(full, std::move(kx), options.solver);
            run.kicked = true;
            if (run.kick_res.value < run.best_value) {
                run.best_value = run.kick_res.value;
                run.best_kind = 1;
            }
        }
        out.runs.push_back(std::move(run));
    }
    return out;
}

// Best-width index: minimum value, tie-broken toward the smallest width
// within 1e-9 (widths are stored in descending order).
std::size_t pick_best(const std::vector<double>& values) {
    double best = values.front();
    for (double v : values) best = std::min(best, v);
    std::size_t pick = 0;
    for (std::size_t i = 0; i < values.size(); ++i)
        if (values[i] <= best + 1e-9) pick = i;
    return pick;
}

}  // namespace

EPerResult optimize_eper(const DensityPtr& density, const CompositeJump& jump,
                         const LatticeBasis& basis,
                         const CellndOptions& options) {
    ScanData sd = run_width_scan(density, jump, basis, options);
    EPerResult res;
    res.normal_cells = options.normal_cells;
    res.tangential_cells = options.tangential_cells;
    res.kick_seed = sd.seed;
    res.basis = sd.full_probs.front().basis();

    std::vector<double> full_values, line_values;
    for (const WidthRun& run : sd.runs) {
        const LbfgsResult& fr =
            run.best_kind == 1 ? run.kick_res : run.plain_res;
        res.scan.push_back({run.l, run.best_value, fr.iterations, fr.converged,
                            fr.grad_norm});
        res.line_scan.push_back({run.l, run.line_res.value,
                                 run.line_res.iterations, run.line_res.converged,
                                 run.line_res.grad_norm});
        full_values.push_back(run.best_value);
        line_values.push_back(run.line_res.value);
    }

    const std::size_t pick = pick_best(full_values);
    const WidthRun& win = sd.runs[pick];
    const LbfgsResult& chosen =
        win.best_kind == 1 ? win.kick_res : win.plain_res;
    res.value = win.best_value;
    res.l_star = win.l;
    res.iterations = chosen.iterations;
    res.converged = chosen.converged;
    res.grad_norm = chosen.grad_norm;

    const std::size_t line_pick = pick_best(line_values);
    res.e1_value = sd.runs[line_pick].line_res.value;
    res.e1_gap = res.value - res.e1_value;
    res.perturbation_norm = sd.full_probs[pick].perturbation_norm(chosen.x);
    res.profile = sd.full_probs[pick].profile(chosen.x);
    return res;
}

BasisInvarianceReport basis_invariance_check(const DensityPtr& density,
                                             const CompositeJump& jump,
                                             const LatticeBasis& basis_a,
                                             const LatticeBasis& basis_b,
                                             const CellndOptions& options) {
    const EPerResult ra = optimize_eper(density, jump, basis_a, options);
    const EPerResult rb = optimize_eper(density, jump, basis_b, options);
    BasisInvarianceReport rep;
    rep.value_a = ra.value;
    rep.value_b = rb.value;
    rep.converged_a = ra.converged;
    rep.converged_b = rb.converged;
    rep.tolerance = 0.01 * (1.0 + std::min(ra.value, rb.value));
    rep.within = std::abs(ra.value - rb.value) <= rep.tolerance;
    rep.conclusive = ra.converged && rb.converged;
    return rep;
}

RlEquivalenceReport r_l_equivalence_check(const DensityPtr& density,
                                          const CompositeJump& jump,
                                          const LatticeBasis& basis,
                                          const CellndOptions& options, double l,
                                          int k) {
    if (k < 1) throw std::invalid_argument("width ratio must be >= 1");
    if (!(l > 0.0)) throw std::invalid_argument("layer width must be positive");
    if (k * l > 1.0 + 1e-12)
        throw std::invalid_argument("k times l must stay within the unit cell");

    CellndOptions relaxed = options;
    relaxed.l_grid = {static_cast<double>(k) * l, l};
    relaxed.clamp_extra_layer = false;
    CellndOptions clamped = relaxed;
    clamped.clamp_extra_layer = true;

    const EPerResult rr = optimize_eper(density, jump, basis, relaxed);
    const EPerResult rc = optimize_eper(density, jump, basis, clamped);

    RlEquivalenceReport rep;
    rep.k = k;
    double vmin = rr.scan.front().value;
    for (std::size_t i = 0; i < rr.scan.size(); ++i) {
        RlEquivalenceRow row;
        row.l = rr.scan[i].l;
        row.relaxed = rr.scan[i].value;
        row.clamped = rc.scan[i].value;
        row.converged = rr.scan[i].converged && rc.scan[i].converged;
        row.cross_gap = std::abs(row.relaxed - row.clamped);
        vmin = std::min(vmin, std::min(row.relaxed, row.clamped));
        rep.rows.push_back(row);
    }
    if (rep.rows.size() >= 2) {
        const double vkl_r = rep.rows[0].relaxed;
        const double vl_r = rep.rows[1].relaxed;
        const double vkl_c = rep.rows[0].clamped;
        const double vl_c = rep.rows[1].clamped;
        const bool ok_r = vl_r <= vkl_r + 1e-4 * (1.0 + std::abs(vkl_r));
        const bool ok_c = vl_c <= vkl_c + 1e-4 * (1.0 + std::abs(vkl_c));
        rep.ordering_ok = ok_r && ok_c;
        rep.ordering_slack = vl_r - vkl_r;
    } else {
        rep.ordering_ok = true;
        rep.ordering_slack = 0.0;
    }
    // Per-width, the clamped class pays an O(h) surcharge whenever the
    // squeezed minimizer wants a nonzero boundary slope (the continuum
    // argument absorbs that slope in a vanishing boundary layer, which a
    // fixed grid cannot resolve).  The optimum over widths is what the
    // scaling chain consumes, so the class comparison happens there.
    double best_relaxed = rep.rows.front().relaxed;
    double best_clamped = rep.rows.front().clamped;
    for (const RlEquivalenceRow& row : rep.rows) {
        best_relaxed = std::min(best_relaxed, row.relaxed);
        best_clamped = std::min(best_clamped, row.clamped);
    }
    rep.best_relaxed = best_relaxed;
    rep.best_clamped = best_clamped;
    rep.cross_tolerance = 1e-3 * (1.0 + vmin);
    rep.cross_class_ok =
        std::abs(best_relaxed - best_clamped) <= rep.cross_tolerance;
    return rep;
}

GapSearchReport gap_search(const DensityPtr& density, const CompositeJump& jump,
                           const LatticeBasis& basis,
                           const CellndOptions& options) {
    CellndOptions opts = options;
    if (opts.kick_seed == 0) opts.kick_seed = 1;
    ScanData sd = run_width_scan(density, jump, basis, opts);

    GapSearchReport rep;
    rep.seed = sd.seed;
    rep.kick_amplitude = sd.amplitude;
    std::vector<double> best_values;
    for (std::size_t i = 0; i < sd.runs.size(); ++i) {
        const WidthRun& run = sd.runs[i];
        GapSearchRow row;
        row.l = run.l;
        row.e1 = run.line_res.value;
        row.eper = run.plain_res.value;
        row.eper_kicked = run.kicked ? run.kick_res.value : run.plain_res.value;
        row.best = run.best_value;
        row.perturbation_norm =
            sd.full_probs[i].perturbation_norm(width_best_x(run));
        rep.rows.push_back(row);
        best_values.push_back(run.best_value);
    }
    const std::size_t pick = pick_best(best_values);
    rep.best_eper = sd.runs[pick].best_value;
    rep.paired_e1 = sd.runs[pick].line_res.value;
    rep.gap = rep.paired_e1 - rep.best_eper;
    return rep;
}

}  // namespace translayer
