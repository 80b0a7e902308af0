#include "translayer/surface.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>

#include "translayer/parallel.hpp"
#include "translayer/quadrature.hpp"

namespace translayer {

namespace {

// Tensor Gauss-Legendre nodes over the box [lo, hi]^(nvars); nvars == 0
// degenerates to a single unit-weight node (point interface in 1D).
struct CrossSectionRule {
    std::vector<std::vector<double>> nodes;  // per node: nvars coordinates
    std::vector<double> weights;
};

CrossSectionRule cross_section_rule(const std::vector<double>& lo,
                                    const std::vector<double>& hi,
                                    int nodes_per_axis) {
    const int nvars = static_cast<int>(lo.size());
    CrossSectionRule out;
    if (nvars == 0) {
        out.nodes.push_back({});
        out.weights.push_back(1.0);
        return out;
    }
    const GaussRule rule = gauss_rule(nodes_per_axis);
    const int per = rule.points();
    int total = 1;
    for (int v = 0; v < nvars; ++v) total *= per;
    out.nodes.reserve(static_cast<std::size_t>(total));
    out.weights.reserve(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) {
        int t = i;
        std::vector<double> u(static_cast<std::size_t>(nvars));
        double w = 1.0;
        for (int v = 0; v < nvars; ++v) {
            const int g = t % per;
            t /= per;
            const double ext = hi[static_cast<std::size_t>(v)] -
                               lo[static_cast<std::size_t>(v)];
            u[static_cast<std::size_t>(v)] =
                lo[static_cast<std::size_t>(v)] +
                rule.nodes[static_cast<std::size_t>(g)] * ext;
            w *= rule.weights[static_cast<std::size_t>(g)] * ext;
        }
        out.nodes.push_back(std::move(u));
        out.weights.push_back(w);
    }
    return out;
}

double area_factor(const GraphInterface& iface, const std::vector<double>& u) {
    if (iface.g.nvars == 0) return 1.0;
    std::vector<double> grad(static_cast<std::size_t>(iface.g.nvars));
    iface.g.grad(u.data(), grad.data());
    double s = 1.0;
    for (double g : grad) s += g * g;
    return std::sqrt(s);
}

// Jump data quantized at 1e-12 so bitwise-nearby traces share one solve.
std::vector<std::int64_t> jump_key(const CompositeJump& jump) {
    std::vector<std::int64_t> key;
    auto push = [&key](const std::vector<double>& v) {
        for (double a : v)
            key.push_back(static_cast<std::int64_t>(std::llround(a * 1e12)));
    };
    push(jump.normal);
    push(jump.minus);
    push(jump.plus);
    push(jump.f_minus);
    push(jump.f_plus);
    return key;
}

struct DensityEval {
    double value = 0.0;
    bool converged = true;
};

DensityEval eval_jump_density(const DensityPtr& density,
                              const CompositeJump& jump,
                              const SurfaceOptions& options) {
    DensityEval out;
    switch (options.kind) {
        case SurfaceDensityKind::E1: {
            const E1Result r = optimize_e1(density, jump, options.cell1d);
            out.value = r.value;
            out.converged = r.converged;
            break;
        }
        case SurfaceDensityKind::Eper: {
            const LatticeBasis basis = LatticeBasis::orthonormal(jump.normal);
            const EPerResult r =
                optimize_eper(density, jump, basis, options.cellnd);
            out.value = r.value;
            out.converged = r.converged;
            break;
        }
        case SurfaceDensityKind::KernelLimit: {
            if (!options.profile)
                throw std::invalid_argument(
                    "kernel-limit surface density needs a kernel profile");
            out.value = limit_surface_density(*density, *options.profile, jump,
                                              options.limit_quadrature);
            out.converged = true;
            break;
        }
    }
    return out;
}

}  // namespace

KFunctionalResult k_functional(const PiecewiseField& field,
                               const DensityPtr& density,
                               const SurfaceOptions& options) {
    if (!density) throw std::invalid_argument("null density");
    field.check_structure();
    if (!(field.shape == density->shape()))
        throw std::invalid_argument("field/density shape mismatch");
    const ValidationReport vr = validate(field, *density);
    if (!vr.ok())
        throw std::invalid_argument("field is not admissible for this density");

    KFunctionalResult res;
    std::map<std::vector<std::int64_t>, DensityEval> cache;
    std::vector<double> totals;
    for (std::size_t k = 0; k < field.interfaces.size(); ++k) {
        const GraphInterface& iface = field.interfaces[k];
        const CrossSectionRule rule = cross_section_rule(
            iface.u_min, iface.u_max, options.nodes_per_axis);
        InterfaceContribution contrib;
        contrib.interface_index = static_cast<int>(k);
        std::vector<double> parts(rule.nodes.size(), 0.0);
        std::vector<double> areas(rule.nodes.size(), 0.0);
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            const std::vector<double>& u = rule.nodes[i];
            const CompositeJump jump = trace_pair(field, static_cast<int>(k), u);
            const std::vector<std::int64_t> key = jump_key(jump);
            auto it = cache.find(key);
            if (it == cache.end()) {
                ++res.cache_misses;
                it = cache.emplace(key, eval_jump_density(density, jump, options))
                         .first;
            } else {
                ++res.cache_hits;
            }
            if (!it->second.converged) contrib.converged = false;
            const double area = area_factor(iface, u);
            parts[i] = rule.weights[i] * area * it->second.value;
            areas[i] = rule.weights[i] * area;
        }
        contrib.value = pairwise_sum(parts);
        contrib.measure = pairwise_sum(areas);
        if (!contrib.converged) res.partial = true;
        totals.push_back(contrib.value);
        res.interfaces.push_back(std::move(contrib));
    }
    res.value = pairwise_sum(totals);
    return res;
}

double interface_measure(const PiecewiseField& field, int nodes_per_axis) {
    field.check_structure();
    std::vector<double> totals;
    for (std::size_t k = 0; k < field.interfaces.size(); ++k) {
        const GraphInterface& iface = field.interfaces[k];
        const CrossSectionRule rule =
            cross_section_rule(iface.u_min, iface.u_max, nodes_per_axis);
        std::vector<double> areas(rule.nodes.size(), 0.0);
        for (std::size_t i = 0; i < rule.nodes.size(); ++i)
            areas[i] = rule.weights[i] * area_factor(iface, rule.nodes[i]);
        totals.push_back(pairwise_sum(areas));
    }
    return totals.empty() ? 0.0 : pairwise_sum(totals);
}

}  // namespace translayer
