#include "translayer/mollify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "translayer/parallel.hpp"

namespace translayer {

long long GridSpec::total() const {
    long long t = 1;
    for (int n : cells) t *= n;
    return t;
}

void GridSpec::position(long long flat, double* out) const {
    for (std::size_t a = 0; a < cells.size(); ++a) {
        const long long i = flat % cells[a];
        flat /= cells[a];
        out[a] = min_corner[a] + (static_cast<double>(i) + 0.5) * spacing[a];
    }
}

double GridSpec::cell_volume() const {
    double v = 1.0;
    for (double h : spacing) v *= h;
    return v;
}

void GridSpec::check_valid(int expected_dim) const {
    if (dim() != expected_dim ||
        static_cast<int>(min_corner.size()) != expected_dim ||
        static_cast<int>(spacing.size()) != expected_dim)
        throw std::invalid_argument("grid arrays must match the dimension");
    for (int n : cells)
        if (n < 1) throw std::invalid_argument("grid needs at least one cell per axis");
    for (double h : spacing)
        if (!(h > 0.0)) throw std::invalid_argument("grid spacing must be positive");
}

namespace {

bool is_constant(const TangentPoly& g) {
    for (int t = 0; t < g.terms(); ++t) {
        if (g.coeff[t] == 0.0) continue;
        for (int v = 0; v < g.nvars; ++v)
            if (g.exps[t * g.nvars + v] != 0) return false;
    }
    return true;
}

// Sampled bound on |grad g| over the cross-section box (uniform lattice,
// inflated to absorb between-sample variation).
double slope_bound(const GraphInterface& iface, int per_axis) {
    const int nvars = iface.g.nvars;
    if (nvars == 0) return 0.0;
    int total = 1;
    for (int v = 0; v < nvars; ++v) total *= per_axis;
    std::vector<double> u(nvars), grad(nvars);
    double worst = 0.0;
    for (int i = 0; i < total; ++i) {
        int t = i;
        for (int v = 0; v < nvars; ++v) {
            const int k = t % per_axis;
            t /= per_axis;
            const double ext = iface.u_max[v] - iface.u_min[v];
            u[v] = iface.u_min[v] +
                   (per_axis == 1 ? 0.5 : static_cast<double>(k) / (per_axis - 1)) * ext;
        }
        iface.g.grad(u.data(), grad.data());
        double s = 0.0;
        for (double ga : grad) s += ga * ga;
        worst = std::max(worst, std::sqrt(s));
    }
    return 1.5 * worst + 1e-12;
}

bool layers_overlap(const PiecewiseField& field, double epsilon) {
    const int per_axis = 9;
    for (std::size_t k = 0; k + 1 < field.interfaces.size(); ++k) {
        const GraphInterface& lo = field.interfaces[k];
        const GraphInterface& hi = field.interfaces[k + 1];
        const int nvars = lo.g.nvars;
        int total = 1;
        for (int v = 0; v < nvars; ++v) total *= per_axis;
        std::vector<double> u(std::max(nvars, 1));
        for (int i = 0; i < total; ++i) {
            int t = i;
            for (int v = 0; v < nvars; ++v) {
                const int q = t % per_axis;
                t /= per_axis;
                u[v] = lo.u_min[v] + (lo.u_max[v] - lo.u_min[v]) *
                                         static_cast<double>(q) / (per_axis - 1);
            }
            if (hi.g.eval(u.data()) - lo.g.eval(u.data()) < epsilon) return true;
        }
    }
    return false;
}

// Midpoint samples of the kernel over its support ball, with value, gradient
// and (order 2) Hessian weights. Value weights are normalized by their own
// discrete mass so constant fields come through exactly.
struct KernelSamples {
    int dim = 0;
    int count = 0;
    std::vector<double> z;     // count x dim offsets
    std::vector<double> wv;    // count
    std::vector<double> wg;    // count x dim
    std::vector<double> wh;    // count x dim x dim (order 2 only)
};

KernelSamples sample_kernel(const RadialKernel& kernel, int per_axis, int order) {
    KernelSamples s;
    s.dim = kernel.dim();
    const double h = 1.0 / per_axis;
    double vol = 1.0;
    for (int a = 0; a < s.dim; ++a) vol *= h;
    int total = 1;
    for (int a = 0; a < s.dim; ++a) total *= per_axis;
    std::vector<double> z(s.dim), buf(s.dim * s.dim);
    for (int i = 0; i < total; ++i) {
        int t = i;
        double r2 = 0.0;
        for (int a = 0; a < s.dim; ++a) {
            const int k = t % per_axis;
            t /= per_axis;
            z[a] = -0.5 + (static_cast<double>(k) + 0.5) * h;
            r2 += z[a] * z[a];
        }
        if (r2 >= 0.25) continue;
        s.z.insert(s.z.end(), z.begin(), z.end());
        s.wv.push_back(kernel.value(z.data()) * vol);
        kernel.gradient(z.data(), buf.data());
        for (int a = 0; a < s.dim; ++a) s.wg.push_back(buf[a] * vol);
        if (order == 2) {
            kernel.hessian(z.data(), buf.data());
            for (int a = 0; a < s.dim * s.dim; ++a) s.wh.push_back(buf[a] * vol);
        }
    }
    s.count = static_cast<int>(s.wv.size());
    if (s.count == 0) throw std::invalid_argument("kernel sampling resolution too coarse");
    const double mass = pairwise_sum(s.wv);
    for (double& w : s.wv) w /= mass;
    for (double& w : s.wg) w /= mass;
    for (double& w : s.wh) w /= mass;
    return s;
}

}  // namespace

GridField mollify(const PiecewiseField& field, const RadialKernel& kernel,
                  double epsilon, const GridSpec& grid,
                  const MollifyOptions& options) {
    field.check_structure();
    const int dim = field.dim();
    const int S = field.shape.state_size();
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
    if (kernel.dim() != dim) throw std::invalid_argument("kernel/field dimension mismatch");
    if (options.order != 1 && options.order != 2)
        throw std::invalid_argument("order must be 1 or 2");
    if (options.z_resolution < 4)
        throw std::invalid_argument("z_resolution must be at least 4");
    grid.check_valid(dim);
    for (int a = 0; a < dim; ++a) {
        const double lo = grid.min_corner[a];
        const double hi = lo + grid.cells[a] * grid.spacing[a];
        const double tol = 1e-9 * std::max(1.0, field.domain_max[a] - field.domain_min[a]);
        if (lo > field.domain_min[a] - 0.5 * epsilon + tol ||
            hi < field.domain_max[a] + 0.5 * epsilon - tol)
            throw std::invalid_argument(
                "grid must cover the domain box plus half a kernel radius");
    }

    KernelProfile local_profile;
    const KernelProfile* profile = options.profile;
    if (profile && profile->dim != dim)
        throw std::invalid_argument("kernel profile dimension mismatch");
    const int K = static_cast<int>(field.interfaces.size());

    bool flat = true;
    for (const GraphInterface& iface : field.interfaces)
        if (!is_constant(iface.g)) flat = false;
    const int axis = K > 0 ? field.interfaces[0].axis : 0;

    std::vector<double> offsets(K, 0.0);  // flat interface positions
    if (flat) {
        if (!profile) {
            local_profile = profile_p(kernel);
            profile = &local_profile;
        }
        std::vector<double> u0(static_cast<std::size_t>(std::max(dim - 1, 1)), 0.0);
        for (int k = 0; k < K; ++k)
            offsets[k] = field.interfaces[k].g.eval(u0.data());
    }

    KernelSamples samples;
    std::vector<double> slope(K, 0.0);
    if (!flat) {
        samples = sample_kernel(kernel, options.z_resolution, options.order);
        for (int k = 0; k < K; ++k)
            slope[k] = slope_bound(field.interfaces[k], 9);
    }

    GridField out;
    out.shape = field.shape;
    out.grid = grid;
    out.epsilon = epsilon;
    out.order = options.order;
    const long long total = grid.total();
    out.value.assign(static_cast<std::size_t>(total) * S, 0.0);
    out.d1.assign(static_cast<std::size_t>(total) * S * dim, 0.0);
    if (options.order == 2)
        out.d2.assign(static_cast<std::size_t>(total) * S * dim * dim, 0.0);
    if (field.shape.inhom_dim > 0)
        out.inhom.assign(static_cast<std::size_t>(total) * field.shape.inhom_dim, 0.0);
    out.overlap_warning = layers_overlap(field, epsilon);

    const KernelProfile* prof = profile;
    parallel_for(0, static_cast<long>(total), options.workers, [&](long node) {
        double x[3];
        grid.position(node, x);
        const int m = field.layer_index(x);
        const LayerValue& center = field.layers[m];
        double* val = out.value.data() + static_cast<std::size_t>(node) * S;
        double* d1 = out.d1.data() + static_cast<std::size_t>(node) * S * dim;
        double* d2 = out.d2.empty()
                         ? nullptr
                         : out.d2.data() + static_cast<std::size_t>(node) * S * dim * dim;
        for (int s = 0; s < S; ++s) val[s] = center.state[s];
        if (!out.inhom.empty()) {
            double* f = out.inhom.data() +
                        static_cast<std::size_t>(node) * field.shape.inhom_dim;
            for (int j = 0; j < field.shape.inhom_dim; ++j) f[j] = center.inhom[j];
        }
        if (K == 0) return;

        if (flat) {
            // Layered form: layer j carries weight cum(t_{j-1}) - cum(t_j)
            // with t_k the scaled signed distance to interface k; derivative
            // slots collect p (and dp) at the interface offsets.
            thread_local std::vector<double> t;
            t.resize(static_cast<std::size_t>(K));
            for (int k = 0; k < K; ++k) t[k] = (x[axis] - offsets[k]) / epsilon;
            for (int j = 0; j <= K; ++j) {
                if (j == m) continue;
                const double upper = j == 0 ? 1.0 : prof->cum_at(t[j - 1]);
                const double lower = j == K ? 0.0 : prof->cum_at(t[j]);
                const double w = upper - lower;
                if (w == 0.0) continue;
                const std::vector<double>& vj = field.layers[j].state;
                for (int s = 0; s < S; ++s)
                    val[s] += w * (vj[s] - center.state[s]);
            }
            for (int k = 0; k < K; ++k) {
                const double pk = prof->p_at(t[k]);
                const double dpk = d2 ? prof->dp_at(t[k]) : 0.0;
                if (pk == 0.0 && dpk == 0.0) continue;
                const std::vector<double>& lo = field.layers[k].state;
                const std::vector<double>& hi = field.layers[k + 1].state;
                for (int s = 0; s < S; ++s) {
                    const double delta = hi[s] - lo[s];
                    d1[s * dim + axis] += pk * delta;
                    if (d2) d2[(s * dim + axis) * dim + axis] += dpk * delta;
                }
            }
            return;
        }

        // Curved graphs: midpoint quadrature over the kernel support,
        // written center-referenced so distant nodes and added constants
        // come through exactly. Nodes provably farther than the support
        // radius from every interface skip the quadrature.
        const std::vector<double> u = field.tangential(x);
        bool near = false;
        for (int k = 0; k < K; ++k) {
            const double d = x[axis] - field.interfaces[k].g.eval(u.data());
            if (std::fabs(d) <= 0.5 * epsilon * (1.0 + slope[k])) near = true;
        }
        if (!near) return;

        thread_local std::vector<int> hit_layer;
        thread_local std::vector<int> hit_idx;
        thread_local std::vector<double> terms;
        hit_layer.clear();
        hit_idx.clear();
        double y[3];
        for (int i = 0; i < samples.count; ++i) {
            for (int a = 0; a < dim; ++a)
                y[a] = x[a] - epsilon * samples.z[static_cast<std::size_t>(i) * dim + a];
            const int li = field.layer_index(y);
            if (li == m) continue;
            hit_layer.push_back(li);
            hit_idx.push_back(i);
        }
        if (hit_layer.empty()) return;
        const std::size_t n = hit_layer.size();
        terms.resize(n);
        for (int s = 0; s < S; ++s) {
            for (std::size_t i = 0; i < n; ++i)
                terms[i] = samples.wv[hit_idx[i]] *
                           (field.layers[hit_layer[i]].state[s] - center.state[s]);
            val[s] += pairwise_sum(terms.data(), n);
            for (int a = 0; a < dim; ++a) {
                for (std::size_t i = 0; i < n; ++i)
                    terms[i] = samples.wg[static_cast<std::size_t>(hit_idx[i]) * dim + a] *
                               (field.layers[hit_layer[i]].state[s] - center.state[s]);
                d1[s * dim + a] = pairwise_sum(terms.data(), n);
            }
            if (d2) {
                for (int ab = 0; ab < dim * dim; ++ab) {
                    for (std::size_t i = 0; i < n; ++i)
                        terms[i] =
                            samples.wh[static_cast<std::size_t>(hit_idx[i]) * dim * dim + ab] *
                            (field.layers[hit_layer[i]].state[s] - center.state[s]);
                    d2[s * dim * dim + ab] = pairwise_sum(terms.data(), n);
                }
            }
        }
    });
    return out;
}

}  // namespace translayer
