#include "translayer/fields.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace translayer {

double TangentPoly::eval(const double* u) const {
    double total = 0.0;
    for (int t = 0; t < terms(); ++t) {
        double prod = coeff[static_cast<std::size_t>(t)];
        for (int v = 0; v < nvars; ++v) {
            const int e = exps[static_cast<std::size_t>(t) * nvars + v];
            for (int i = 0; i < e; ++i) prod *= u[v];
        }
        total += prod;
    }
    return total;
}

void TangentPoly::grad(const double* u, double* out) const {
    for (int v = 0; v < nvars; ++v) out[v] = 0.0;
    for (int t = 0; t < terms(); ++t) {
        for (int v = 0; v < nvars; ++v) {
            const int ev = exps[static_cast<std::size_t>(t) * nvars + v];
            if (ev == 0) continue;
            double prod = coeff[static_cast<std::size_t>(t)] * ev;
            for (int w = 0; w < nvars; ++w) {
                int e = exps[static_cast<std::size_t>(t) * nvars + w];
                if (w == v) e -= 1;
                for (int i = 0; i < e; ++i) prod *= u[w];
            }
            out[v] += prod;
        }
    }
}

void TangentPoly::check_valid() const {
    if (nvars < 0) throw std::invalid_argument("negative nvars");
    if (coeff.empty()) throw std::invalid_argument("empty polynomial");
    if (exps.size() != coeff.size() * static_cast<std::size_t>(nvars))
        throw std::invalid_argument("exponent table size mismatch");
    for (int e : exps)
        if (e < 0) throw std::invalid_argument("negative exponent");
}

std::vector<double> PiecewiseField::tangential(const double* x) const {
    std::vector<double> u;
    u.reserve(static_cast<std::size_t>(dim() - 1));
    const int axis = interfaces.empty() ? 0 : interfaces.front().axis;
    for (int a = 0; a < dim(); ++a)
        if (a != axis) u.push_back(x[a]);
    return u;
}

int PiecewiseField::layer_index(const double* x) const {
    if (interfaces.empty()) return 0;
    const int axis = interfaces.front().axis;
    const std::vector<double> u = tangential(x);
    int idx = 0;
    for (const auto& itf : interfaces)
        if (x[axis] > itf.g.eval(u.data())) ++idx;
    return idx;
}

const LayerValue& PiecewiseField::value_at(const double* x) const {
    return layers[static_cast<std::size_t>(layer_index(x))];
}

namespace {

// sampled extrema of g over the tangential box
void graph_range(const GraphInterface& itf, int samples, double& lo, double& hi) {
    const int nv = itf.g.nvars;
    lo = 1e300;
    hi = -1e300;
    std::vector<double> u(std::max(1, nv));
    std::vector<int> idx(std::max(1, nv), 0);
    const int total = nv == 0 ? 1 : [&] {
        int t = 1;
        for (int v = 0; v < nv; ++v) t *= samples;
        return t;
    }();
    for (int flat = 0; flat < total; ++flat) {
        int rem = flat;
        for (int v = 0; v < nv; ++v) {
            idx[v] = rem % samples;
            rem /= samples;
            const double a = itf.u_min[v], b = itf.u_max[v];
            u[v] = samples == 1 ? 0.5 * (a + b)
                                : a + (b - a) * idx[v] / double(samples - 1);
        }
        const double g = itf.g.eval(u.data());
        lo = std::min(lo, g);
        hi = std::max(hi, g);
    }
}

}  // namespace

void PiecewiseField::check_structure() const {
    shape.check_valid();
    const int n = dim();
    if (static_cast<int>(domain_min.size()) != n ||
        static_cast<int>(domain_max.size()) != n)
        throw std::invalid_argument("domain box size mismatch");
    for (int a = 0; a < n; ++a)
        if (!(domain_min[a] < domain_max[a]))
            throw std::invalid_argument("empty domain box");
    if (layers.size() != interfaces.size() + 1)
        throw std::invalid_argument("layer count must be interface count + 1");
    for (const auto& layer : layers) {
        if (static_cast<int>(layer.state.size()) != shape.state_size())
            throw std::invalid_argument("layer state size mismatch");
        if (static_cast<int>(layer.inhom.size()) != shape.inhom_dim)
            throw std::invalid_argument("layer inhom size mismatch");
    }
    if (interfaces.empty()) return;
    const int axis = interfaces.front().axis;
    if (axis < 0 || axis >= n) throw std::invalid_argument("bad graph axis");
    for (const auto& itf : interfaces) {
        if (itf.axis != axis)
            throw std::invalid_argument("all interfaces must share one axis");
        itf.g.check_valid();
        if (itf.g.nvars != n - 1)
            throw std::invalid_argument("graph arity must be dim - 1");
        if (static_cast<int>(itf.u_min.size()) != n - 1 ||
            static_cast<int>(itf.u_max.size()) != n - 1)
            throw std::invalid_argument("tangential box size mismatch");
        for (int v = 0; v < n - 1; ++v)
            if (!(itf.u_min[v] < itf.u_max[v]) && n > 1)
                throw std::invalid_argument("degenerate interface patch");
        double lo, hi;
        graph_range(itf, 17, lo, hi);
        if (!(lo > domain_min[axis] && hi < domain_max[axis]))
            throw std::invalid_argument(
                "interface leaves the domain along the graph axis");
    }
    for (std::size_t i = 0; i + 1 < interfaces.size(); ++i) {
        double lo0, hi0, lo1, hi1;
        graph_range(interfaces[i], 17, lo0, hi0);
        graph_range(interfaces[i + 1], 17, lo1, hi1);
        if (!(lo1 > hi0))
            throw std::invalid_argument("interfaces must be ordered and disjoint");
    }
}

std::vector<double> interface_normal(const PiecewiseField& field, int which,
                                     const double* u) {
    const auto& itf = field.interfaces[static_cast<std::size_t>(which)];
    const int n = field.dim();
    std::vector<double> raw(static_cast<std::size_t>(n), 0.0);
    std::vector<double> dg(std::max(1, n - 1), 0.0);
    itf.g.grad(u, dg.data());
    raw[static_cast<std::size_t>(itf.axis)] = 1.0;
    int t = 0;
    for (int a = 0; a < n; ++a) {
        if (a == itf.axis) continue;
        raw[static_cast<std::size_t>(a)] = -dg[t];
        ++t;
    }
    double norm = 0.0;
    for (double x : raw) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : raw) x /= norm;
    return raw;
}

CompositeJump trace_pair(const PiecewiseField& field, int which,
                         const std::vector<double>& u) {
    if (which < 0 || which >= static_cast<int>(field.interfaces.size()))
        throw std::invalid_argument("interface index out of range");
    const auto& itf = field.interfaces[static_cast<std::size_t>(which)];
    CompositeJump j;
    j.shape = field.shape;
    j.normal = interface_normal(field, which, u.data());
    j.minus = field.layers[static_cast<std::size_t>(which)].state;
    j.plus = field.layers[static_cast<std::size_t>(which) + 1].state;
    j.f_minus = field.layers[static_cast<std::size_t>(which)].inhom;
    j.f_plus = field.layers[static_cast<std::size_t>(which) + 1].inhom;
    j.position.assign(static_cast<std::size_t>(field.dim()), 0.0);
    j.position[static_cast<std::size_t>(itf.axis)] = itf.g.eval(u.data());
    int t = 0;
    for (int a = 0; a < field.dim(); ++a) {
        if (a == itf.axis) continue;
        j.position[static_cast<std::size_t>(a)] = u[static_cast<std::size_t>(t)];
        ++t;
    }
    return j;
}

namespace {

void jump_checks(const CompositeJump& j, const std::string& where,
                 ValidationReport& report) {
    const auto& sh = j.shape;
    const int n = sh.dim;
    const std::vector<double> d = j.delta();
    // curl-free rows: jump must equal (jump . normal) x normal
    double rank_res = 0.0;
    for (int r = 0; r < sh.grad_rows; ++r) {
        double a = 0.0;
        for (int c = 0; c < n; ++c) a += d[sh.grad_index(r, c)] * j.normal[c];
        for (int c = 0; c < n; ++c) {
            const double res = d[sh.grad_index(r, c)] - a * j.normal[c];
            rank_res = std::max(rank_res, std::abs(res));
        }
    }
    if (sh.grad_rows > 0)
        report.entries.push_back(
            {"rank_one_jump", where, rank_res, rank_res <= 1e-10});
    // div-free rows: zero normal trace
    double trace_res = 0.0;
    for (int r = 0; r < sh.divfree_rows; ++r) {
        double a = 0.0;
        for (int c = 0; c < n; ++c) a += d[sh.divfree_index(r, c)] * j.normal[c];
        trace_res = std::max(trace_res, std::abs(a));
    }
    if (sh.divfree_rows > 0)
        report.entries.push_back(
            {"normal_trace_jump", where, trace_res, trace_res <= 1e-10});
    double nrm = 0.0;
    for (double x : j.normal) nrm += x * x;
    const double unit_res = std::abs(std::sqrt(nrm) - 1.0);
    report.entries.push_back({"unit_normal", where, unit_res, unit_res <= 1e-12});
}

}  // namespace

ValidationReport validate(const PiecewiseField& field, const EnergyDensity& density,
                          int samples_per_axis) {
    ValidationReport report;
    const bool shape_ok = field.shape == density.shape();
    report.entries.push_back(
        {"shape_match", "field vs density", shape_ok ? 0.0 : 1.0, shape_ok});
    if (!shape_ok) return report;
    field.check_structure();

    for (std::size_t li = 0; li < field.layers.size(); ++li) {
        const auto& layer = field.layers[li];
        const double w = density.well_value(
            layer.state.data(), layer.inhom.empty() ? nullptr : layer.inhom.data());
        std::ostringstream where;
        where << "layer " << li;
        report.entries.push_back({"zero_set", where.str(), w, w <= 1e-9});
    }

    const int nv = field.dim() - 1;
    for (std::size_t ii = 0; ii < field.interfaces.size(); ++ii) {
        const auto& itf = field.interfaces[ii];
        std::vector<double> u(std::max(1, nv));
        const int total = nv == 0 ? 1 : [&] {
            int t = 1;
            for (int v = 0; v < nv; ++v) t *= samples_per_axis;
            return t;
        }();
        for (int flat = 0; flat < total; ++flat) {
            int rem = flat;
            for (int v = 0; v < nv; ++v) {
                const int iv = rem % samples_per_axis;
                rem /= samples_per_axis;
                const double a = itf.u_min[static_cast<std::size_t>(v)];
                const double b = itf.u_max[static_cast<std::size_t>(v)];
                u[static_cast<std::size_t>(v)] =
                    samples_per_axis == 1
                        ? 0.5 * (a + b)
                        : a + (b - a) * iv / double(samples_per_axis - 1);
            }
            const CompositeJump j =
                trace_pair(field, static_cast<int>(ii),
                           std::vector<double>(u.begin(), u.begin() + std::max(0, nv)));
            std::ostringstream where;
            where << "interface " << ii << " sample " << flat;
            jump_checks(j, where.str(), report);
        }
    }
    return report;
}

}  // namespace translayer
