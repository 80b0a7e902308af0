#include "translayer/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "translayer/parallel.hpp"
#include "translayer/surface.hpp"

namespace translayer {

namespace {

bool constant_poly(const TangentPoly& g) {
    for (int t = 0; t < g.terms(); ++t) {
        if (g.coeff[t] == 0.0) continue;
        for (int v = 0; v < g.nvars; ++v)
            if (g.exps[t * g.nvars + v] != 0) return false;
    }
    return true;
}

double sampled_slope(const GraphInterface& iface) {
    const int nvars = iface.g.nvars;
    if (nvars == 0) return 0.0;
    const int per = 9;
    int total = 1;
    for (int v = 0; v < nvars; ++v) total *= per;
    std::vector<double> u(nvars), grad(nvars);
    double worst = 0.0;
    for (int i = 0; i < total; ++i) {
        int t = i;
        for (int v = 0; v < nvars; ++v) {
            const int q = t % per;
            t /= per;
            u[v] = iface.u_min[v] +
                   (iface.u_max[v] - iface.u_min[v]) * static_cast<double>(q) / (per - 1);
        }
        iface.g.grad(u.data(), grad.data());
        double s = 0.0;
        for (double g : grad) s += g * g;
        worst = std::max(worst, std::sqrt(s));
    }
    return 1.5 * worst;
}

// Rows of the inverse of [nu | tangents]; row p maps a physical offset to
// lattice coordinate p.
std::vector<double> basis_inverse(const LatticeBasis& basis) {
    const int dim = basis.dim;
    std::vector<double> J(static_cast<std::size_t>(dim) * dim, 0.0);
    for (int a = 0; a < dim; ++a) {
        J[a * dim + 0] = basis.nu[a];
        for (int j = 1; j < dim; ++j) J[a * dim + j] = basis.tangents[j - 1][a];
    }
    std::vector<double> inv(static_cast<std::size_t>(dim) * dim, 0.0);
    if (dim == 1) {
        inv[0] = 1.0 / J[0];
    } else if (dim == 2) {
        const double det = J[0] * J[3] - J[1] * J[2];
        inv[0] = J[3] / det;
        inv[1] = -J[1] / det;
        inv[2] = -J[2] / det;
        inv[3] = J[0] / det;
    } else {
        const double det = J[0] * (J[4] * J[8] - J[5] * J[7]) -
                           J[1] * (J[3] * J[8] - J[5] * J[6]) +
                           J[2] * (J[3] * J[7] - J[4] * J[6]);
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

// Midpoint samples of a tangential-space kernel for graph smoothing.
struct TangentSamples {
    int nvars = 0;
    int count = 0;
    std::vector<double> z;   // count x nvars
    std::vector<double> w;   // normalized value weights
};

TangentSamples sample_tangent_kernel(RadialKernel::Type type, int nvars,
                                     int per_axis) {
    TangentSamples s;
    s.nvars = nvars;
    if (nvars == 0) return s;
    const RadialKernel kernel(type, nvars);
    const double h = 1.0 / per_axis;
    double vol = 1.0;
    for (int v = 0; v < nvars; ++v) vol *= h;
    int total = 1;
    for (int v = 0; v < nvars; ++v) total *= per_axis;
    std::vector<double> z(nvars);
    for (int i = 0; i < total; ++i) {
        int t = i;
        double r2 = 0.0;
        for (int v = 0; v < nvars; ++v) {
            const int k = t % per_axis;
            t /= per_axis;
            z[v] = -0.5 + (static_cast<double>(k) + 0.5) * h;
            r2 += z[v] * z[v];
        }
        if (r2 >= 0.25) continue;
        s.z.insert(s.z.end(), z.begin(), z.end());
        s.w.push_back(kernel.value(z.data()) * vol);
    }
    s.count = static_cast<int>(s.w.size());
    const double mass = pairwise_sum(s.w);
    for (double& w : s.w) w /= mass;
    return s;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace

GridField build_primary(const PiecewiseField& field, const RadialKernel& kernel,
                        double epsilon, const GridSpec& grid,
                        const MollifyOptions& options) {
    return mollify(field, kernel, epsilon, grid, options);
}

void add_perturbation(GridField& out, const PiecewiseField& field, int which,
                      const CellProfile& h0, const RadialKernel& kernel,
                      int z_resolution) {
    const int dim = field.dim();
    const int S = field.shape.state_size();
    if (which < 0 || which >= static_cast<int>(field.interfaces.size()))
        throw std::invalid_argument("interface index out of range");
    if (!(h0.shape == field.shape))
        throw std::invalid_argument("cell profile shape mismatch");
    if (out.order != 1)
        throw std::invalid_argument(
            "the transition-layer modification supports first-order slots only");
    if (h0.ramp_kind != RampKind::KernelBackbone)
        throw std::invalid_argument(
            "layer modification needs a kernel-backbone cell ramp, so the cell "
            "deviates from the same transition the smoothing produces");
    if (!(h0.l > 0.0)) throw std::invalid_argument("cell profile has no width");
    const GraphInterface& iface = field.interfaces[which];
    const int axis = iface.axis;
    for (int a = 0; a < dim; ++a) {
        const double want = a == axis ? 1.0 : 0.0;
        if (std::fabs(h0.basis.nu[a] - want) > 1e-9)
            throw std::invalid_argument(
                "cell basis normal must point along the graph axis");
    }

    // The cell deviation must be relative to this interface's traces.
    std::vector<double> uc(std::max(dim - 1, 1), 0.0);
    for (int v = 0; v < dim - 1; ++v)
        uc[v] = 0.5 * (iface.u_min[v] + iface.u_max[v]);
    const CompositeJump jump =
        trace_pair(field, which, std::vector<double>(uc.begin(), uc.begin() + std::max(dim - 1, 0)));
    double scale = 1.0;
    for (double d : jump.delta()) scale = std::max(scale, std::fabs(d));
    if (max_abs_diff(h0.minus_state, jump.minus) > 1e-6 * scale ||
        max_abs_diff(h0.delta_state, jump.delta()) > 1e-6 * scale)
        throw std::invalid_argument(
            "cell profile was optimized for different interface traces");

    const double epsilon = out.epsilon;
    const double half_slab = 0.5 * epsilon / h0.l;
    for (int k = 0; k < static_cast<int>(field.interfaces.size()); ++k) {
        if (k == which) continue;
        const GraphInterface& other = field.interfaces[k];
        const int per = 9;
        const int nvars = dim - 1;
        int total = 1;
        for (int v = 0; v < nvars; ++v) total *= per;
        const double guard =
            half_slab + 0.5 * epsilon * (1.0 + sampled_slope(iface) + sampled_slope(other));
        for (int i = 0; i < total; ++i) {
            int t = i;
            for (int v = 0; v < nvars; ++v) {
                const int q = t % per;
                t /= per;
                uc[v] = iface.u_min[v] +
                        (iface.u_max[v] - iface.u_min[v]) * static_cast<double>(q) / (per - 1);
            }
            if (std::fabs(other.g.eval(uc.data()) - iface.g.eval(uc.data())) <= guard)
                throw std::invalid_argument(
                    "another interface intrudes into the modification slab");
        }
    }

    const bool flat = constant_poly(iface.g);
    std::vector<double> u0(std::max(dim - 1, 1), 0.0);
    const double flat_offset = iface.g.eval(u0.data());
    TangentSamples tsamp;
    if (!flat) tsamp = sample_tangent_kernel(kernel.type(), dim - 1, z_resolution);

    const CellSampler sampler(h0);
    const std::vector<double> jinv = basis_inverse(h0.basis);
    const double L = h0.l;

    // Tangential variable order matches PiecewiseField::tangential: ascending
    // physical axes with the graph axis removed.
    std::vector<int> taxis;
    for (int a = 0; a < dim; ++a)
        if (a != axis) taxis.push_back(a);

    const long long total = out.grid.total();
    parallel_for(0, static_cast<long>(total), 1, [&](long node) {
        double x[3];
        out.grid.position(node, x);
        thread_local std::vector<double> u, grads, y, s, sdev, gdev;
        u.assign(static_cast<std::size_t>(std::max(dim - 1, 1)), 0.0);
        for (int v = 0; v < dim - 1; ++v) u[v] = x[taxis[v]];

        double ge = flat_offset;
        grads.assign(static_cast<std::size_t>(std::max(dim - 1, 1)), 0.0);
        if (!flat) {
            // Smoothed graph: kernel average of g and of its gradient.
            thread_local std::vector<double> us, gbuf;
            us.assign(u.size(), 0.0);
            gbuf.assign(u.size(), 0.0);
            double acc = 0.0;
            for (int i = 0; i < tsamp.count; ++i) {
                for (int v = 0; v < dim - 1; ++v)
                    us[v] = u[v] - epsilon * tsamp.z[static_cast<std::size_t>(i) * (dim - 1) + v];
                acc += tsamp.w[i] * iface.g.eval(us.data());
                iface.g.grad(us.data(), gbuf.data());
                for (int v = 0; v < dim - 1; ++v) grads[v] += tsamp.w[i] * gbuf[v];
            }
            ge = acc;
        }

        y.assign(static_cast<std::size_t>(dim), 0.0);
        y[axis] = (x[axis] - ge) / epsilon;
        for (int v = 0; v < dim - 1; ++v) y[taxis[v]] = x[taxis[v]] / epsilon;
        s.assign(static_cast<std::size_t>(dim), 0.0);
        for (int p = 0; p < dim; ++p) {
            double acc = 0.0;
            for (int a = 0; a < dim; ++a) acc += jinv[p * dim + a] * y[a];
            s[p] = L * acc;
        }
        if (s[0] <= -0.5 || s[0] >= 0.5) return;

        sdev.assign(static_cast<std::size_t>(S), 0.0);
        gdev.assign(static_cast<std::size_t>(S) * dim, 0.0);
        sampler.deviation(s.data(), sdev.data(), gdev.data());

        double* val = out.value.data() + static_cast<std::size_t>(node) * S;
        double* d1 = out.d1.data() + static_cast<std::size_t>(node) * S * dim;
        for (int r = 0; r < S; ++r) {
            val[r] += sdev[r];
            const double gn = gdev[r * dim + axis];
            d1[r * dim + axis] += gn;
            for (int v = 0; v < dim - 1; ++v)
                d1[r * dim + taxis[v]] += gdev[r * dim + taxis[v]] - grads[v] * gn;
        }
    });
}

GridField build_modified(const PiecewiseField& field, int which,
                         const CellProfile& h0, const RadialKernel& kernel,
                         double epsilon, const GridSpec& grid,
                         const MollifyOptions& options) {
    GridField out = mollify(field, kernel, epsilon, grid, options);
    add_perturbation(out, field, which, h0, kernel, options.z_resolution);
    return out;
}

double energy(const GridField& gf, const DensityPtr& density,
              const std::vector<double>& domain_min,
              const std::vector<double>& domain_max, int workers) {
    if (!density) throw std::invalid_argument("null density");
    if (!(density->shape() == gf.shape))
        throw std::invalid_argument("field/density shape mismatch");
    if (density->order() == 2 && gf.d2.empty())
        throw std::invalid_argument("second-order density needs the d2 slot");
    const int dim = gf.shape.dim;
    if (static_cast<int>(domain_min.size()) != dim ||
        static_cast<int>(domain_max.size()) != dim)
        throw std::invalid_argument("domain box dimension mismatch");
    for (int a = 0; a < dim; ++a) {
        const double lo = gf.grid.min_corner[a];
        const double hi = lo + gf.grid.cells[a] * gf.grid.spacing[a];
        if (lo > domain_min[a] + 1e-12 || hi < domain_max[a] - 1e-12)
            throw std::invalid_argument("grid does not cover the domain box");
    }
    const long long total = gf.grid.total();
    std::vector<double> contrib(static_cast<std::size_t>(total), 0.0);
    const double wq = gf.grid.cell_volume() / gf.epsilon;
    parallel_for(0, static_cast<long>(total), workers, [&](long node) {
        double x[3];
        gf.grid.position(node, x);
        for (int a = 0; a < dim; ++a)
            if (x[a] <= domain_min[a] || x[a] >= domain_max[a]) return;
        contrib[static_cast<std::size_t>(node)] = wq * density->eval(gf.slots(node));
    });
    return pairwise_sum(contrib);
}

void apply_mean_correction(GridField& gf, const PiecewiseField& field,
                           const std::vector<double>& domain_min,
                           const std::vector<double>& domain_max, int workers) {
    const int dim = gf.shape.dim;
    const int S = gf.shape.state_size();
    const int nu = gf.shape.unconstrained_dim;
    if (nu == 0) return;
    const long long total = gf.grid.total();
    const double vol = gf.grid.cell_volume();

    std::vector<double> center(dim), half(dim);
    for (int a = 0; a < dim; ++a) {
        center[a] = 0.5 * (domain_min[a] + domain_max[a]);
        half[a] = 0.5 * (domain_max[a] - domain_min[a]);
    }
    auto bump = [](double t) {
        return std::fabs(t) < 1.0 ? std::exp(-1.0 / (1.0 - t * t)) : 0.0;
    };
    auto bump_log_d1 = [](double t) {  // b'(t)/b(t)
        const double q = 1.0 - t * t;
        return -2.0 * t / (q * q);
    };
    auto bump_log_d2 = [](double t) {  // (b''(t) - b'(t)^2/b(t)) / b(t)
        const double q = 1.0 - t * t;
        return -2.0 / (q * q) - 8.0 * t * t / (q * q * q);
    };

    std::vector<double> lam(static_cast<std::size_t>(total), 0.0);
    std::vector<char> inside(static_cast<std::size_t>(total), 0);
    parallel_for(0, static_cast<long>(total), workers, [&](long node) {
        double x[3];
        gf.grid.position(node, x);
        for (int a = 0; a < dim; ++a)
            if (x[a] <= domain_min[a] || x[a] >= domain_max[a]) return;
        inside[static_cast<std::size_t>(node)] = 1;
        double v = 1.0;
        for (int a = 0; a < dim; ++a) v *= bump((x[a] - center[a]) / half[a]);
        lam[static_cast<std::size_t>(node)] = v;
    });
    std::vector<double> masst(static_cast<std::size_t>(total), 0.0);
    for (long long i = 0; i < total; ++i) masst[static_cast<std::size_t>(i)] = vol * lam[static_cast<std::size_t>(i)];
    const double mass = pairwise_sum(masst);
    if (!(mass > 0.0)) throw std::invalid_argument("empty domain box");

    std::vector<double> defect(static_cast<std::size_t>(nu), 0.0);
    std::vector<double> terms(static_cast<std::size_t>(total), 0.0);
    for (int c = 0; c < nu; ++c) {
        const int idx = gf.shape.unconstrained_index(c);
        parallel_for(0, static_cast<long>(total), workers, [&](long node) {
            terms[static_cast<std::size_t>(node)] = 0.0;
            if (!inside[static_cast<std::size_t>(node)]) return;
            double x[3];
            gf.grid.position(node, x);
            const double sharp = field.value_at(x).state[idx];
            terms[static_cast<std::size_t>(node)] =
                vol * (sharp - gf.value[static_cast<std::size_t>(node) * S + idx]);
        });
        defect[static_cast<std::size_t>(c)] = pairwise_sum(terms) / mass;
    }

    parallel_for(0, static_cast<long>(total), workers, [&](long node) {
        if (!inside[static_cast<std::size_t>(node)]) return;
        const double lv = lam[static_cast<std::size_t>(node)];
        if (lv == 0.0) return;
        double x[3], t[3], ld1[3];
        gf.grid.position(node, x);
        for (int a = 0; a < dim; ++a) {
            t[a] = (x[a] - center[a]) / half[a];
            ld1[a] = bump_log_d1(t[a]) / half[a];
        }
        double* val = gf.value.data() + static_cast<std::size_t>(node) * S;
        double* d1 = gf.d1.data() + static_cast<std::size_t>(node) * S * dim;
        for (int c = 0; c < nu; ++c) {
            const int idx = gf.shape.unconstrained_index(c);
            const double amp = defect[static_cast<std::size_t>(c)];
            val[idx] += amp * lv;
            for (int a = 0; a < dim; ++a)
                d1[idx * dim + a] += amp * gf.epsilon * lv * ld1[a];
            if (!gf.d2.empty()) {
                double* d2 = gf.d2.data() +
                             static_cast<std::size_t>(node) * S * dim * dim;
                const double e2 = gf.epsilon * gf.epsilon;
                for (int a = 0; a < dim; ++a)
                    for (int b = 0; b < dim; ++b) {
                        const double curv =
                            a == b ? (ld1[a] * ld1[a] +
                                      bump_log_d2(t[a]) / (half[a] * half[a]))
                                   : ld1[a] * ld1[b];
                        d2[(idx * dim + a) * dim + b] += amp * e2 * lv * curv;
                    }
            }
        }
    });
}

EnergyTrace epsilon_scan(const PiecewiseField& field, const DensityPtr& density,
                         const RecoveryConfig& config) {
    if (!density) throw std::invalid_argument("null density");
    field.check_structure();
    const int dim = field.dim();
    if (config.epsilons.empty())
        throw std::invalid_argument("epsilon list is empty");
    for (std::size_t i = 0; i < config.epsilons.size(); ++i) {
        if (!(config.epsilons[i] > 0.0))
            throw std::invalid_argument("epsilon must be positive");
        if (i > 0 && !(config.epsilons[i] < config.epsilons[i - 1]))
            throw std::invalid_argument("epsilon list must be strictly decreasing");
    }
    if (config.cells_per_epsilon < 16)
        throw std::invalid_argument("grid spacing must be at most epsilon / 16");
    const int K = static_cast<int>(field.interfaces.size());
    if (!config.perturbations.empty() &&
        static_cast<int>(config.perturbations.size()) != K)
        throw std::invalid_argument("need one perturbation entry per interface");

    const RadialKernel kernel(config.kernel, dim, config.profile_resolution);
    const KernelProfile profile = profile_p(kernel, config.profile_resolution);

    // Limit prediction: closed-form limit density over unperturbed
    // interfaces, cell energy times measure over perturbed ones.
    EnergyTrace trace;
    if (K > 0) {
        SurfaceOptions sopt;
        sopt.kind = SurfaceDensityKind::KernelLimit;
        sopt.profile = &profile;
        sopt.nodes_per_axis = config.surface_nodes_per_axis;
        sopt.limit_quadrature = config.limit_quadrature;
        const KFunctionalResult kf = k_functional(field, density, sopt);
        std::vector<double> parts(static_cast<std::size_t>(K), 0.0);
        for (int k = 0; k < K; ++k) {
            const CellProfile* pert =
                config.perturbations.empty() ? nullptr : config.perturbations[k];
            parts[static_cast<std::size_t>(k)] =
                pert ? pert->value * kf.interfaces[k].measure
                     : kf.interfaces[k].value;
        }
        trace.predicted = pairwise_sum(parts);
    }

    MollifyOptions mopt;
    mopt.order = density->order();
    mopt.z_resolution = config.z_resolution;
    mopt.profile = &profile;
    mopt.workers = config.workers;

    for (double eps : config.epsilons) {
        const double h = eps / config.cells_per_epsilon;
        const int pad = config.cells_per_epsilon / 2 + 2;
        GridSpec grid;
        grid.min_corner.resize(dim);
        grid.cells.resize(dim);
        grid.spacing.assign(static_cast<std::size_t>(dim), h);
        for (int a = 0; a < dim; ++a) {
            const double extent = field.domain_max[a] - field.domain_min[a];
            const int inner = static_cast<int>(std::ceil(extent / h - 1e-9));
            grid.cells[a] = inner + 2 * pad;
            grid.min_corner[a] = field.domain_min[a] - pad * h;
        }

        GridField gf = mollify(field, kernel, eps, grid, mopt);
        if (!config.perturbations.empty())
            for (int k = 0; k < K; ++k)
                if (config.perturbations[k])
                    add_perturbation(gf, field, k, *config.perturbations[k],
                                     kernel, config.z_resolution);
        if (config.mean_preserving)
            apply_mean_correction(gf, field, field.domain_min, field.domain_max,
                                  config.workers);

        TraceRow row;
        row.epsilon = eps;
        row.energy = energy(gf, density, field.domain_min, field.domain_max,
                            config.workers);
        row.predicted = trace.predicted;
        row.gap = (row.energy - trace.predicted) /
                  (std::fabs(trace.predicted) > 0.0 ? std::fabs(trace.predicted)
                                                    : 1.0);
        trace.rows.push_back(row);
        if (gf.overlap_warning) trace.overlap_warning = true;
    }

    const std::size_t n = trace.rows.size();
    for (std::size_t i = 1; i < n; ++i)
        if (trace.rows[i].energy >
            trace.rows[i - 1].energy + 1e-12 * (1.0 + std::fabs(trace.rows[i - 1].energy)))
            trace.monotone = false;
    if (n >= 2) {
        const double r = trace.rows[n - 2].epsilon / trace.rows[n - 1].epsilon;
        trace.extrapolated =
            (r * trace.rows[n - 1].energy - trace.rows[n - 2].energy) / (r - 1.0);
    } else {
        trace.extrapolated = trace.rows.back().energy;
    }
    if (n >= 3) {
        const double d1 = trace.rows[n - 3].energy - trace.rows[n - 2].energy;
        const double d2 = trace.rows[n - 2].energy - trace.rows[n - 1].energy;
        const double r = trace.rows[n - 3].epsilon / trace.rows[n - 2].epsilon;
        if (d1 * d2 > 0.0 && r > 1.0) trace.rate = std::log(d1 / d2) / std::log(r);
    }
    return trace;
}

}  // namespace translayer
