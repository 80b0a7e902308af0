#include "translayer/oracles.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

#include "translayer/cellnd.hpp"
#include "translayer/parallel.hpp"

namespace translayer {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

// Restores the path constraints node by node: curl-row deviations from the
// minus state are kept parallel to the normal, div-row normal components are
// reset to the minus trace.
void project_path(const CompositeShape& shape, const std::vector<double>& nu,
                  const std::vector<double>& minus, std::vector<double>& w,
                  int nodes) {
    const int S = shape.state_size();
    const int dim = shape.dim;
    for (int i = 0; i < nodes; ++i) {
        double* wi = w.data() + static_cast<std::size_t>(i) * S;
        for (int r = 0; r < shape.grad_rows; ++r) {
            const int base = shape.grad_index(r, 0);
            double along = 0.0;
            for (int a = 0; a < dim; ++a)
                along += (wi[base + a] - minus[base + a]) * nu[a];
            for (int a = 0; a < dim; ++a)
                wi[base + a] = minus[base + a] + along * nu[a];
        }
        for (int r = 0; r < shape.divfree_rows; ++r) {
            const int base = shape.divfree_index(r, 0);
            double excess = 0.0;
            for (int a = 0; a < dim; ++a)
                excess += (wi[base + a] - minus[base + a]) * nu[a];
            for (int a = 0; a < dim; ++a) wi[base + a] -= excess * nu[a];
        }
    }
}

}  // namespace

bool oracle_pass(double reference, double test, double tolerance) {
    return std::fabs(reference - test) <=
           tolerance * (1.0 + std::fabs(reference));
}

OracleReport make_report(const std::string& name, double reference, double test,
                         double tolerance, double runtime_seconds) {
    OracleReport r;
    r.name = name;
    r.reference = reference;
    r.test_value = test;
    r.tolerance = tolerance;
    r.pass = oracle_pass(reference, test, tolerance);
    r.runtime_seconds = runtime_seconds;
    return r;
}

double brute_force_e1(const DensityPtr& density, const CompositeJump& jump,
                      int n, double span, int iterations, double step_factor) {
    if (!density) throw std::invalid_argument("null density");
    const CompositeShape shape = density->shape();
    if (!(shape == jump.shape)) throw std::invalid_argument("jump shape mismatch");
    if (n < 4096) throw std::invalid_argument("oracle grid must have n >= 4096");
    if (!(span > 4.0)) throw std::invalid_argument("span too small");
    const int S = shape.state_size();
    const int dim = shape.dim;
    const int order = density->order();
    const double h = span / n;
    const double step = step_factor * h;
    const std::vector<double>& nu = jump.normal;

    std::vector<double> w(static_cast<std::size_t>(n + 1) * S);
    for (int i = 0; i <= n; ++i) {
        const double t = -0.5 * span + i * h;
        const double r = std::min(1.0, std::max(0.0, (t + 2.0) / 4.0));
        for (int s = 0; s < S; ++s)
            w[static_cast<std::size_t>(i) * S + s] =
                jump.minus[s] + r * (jump.plus[s] - jump.minus[s]);
    }
    project_path(shape, nu, jump.minus, w, n + 1);
    for (int s = 0; s < S; ++s) {
        w[s] = jump.minus[s];
        w[static_cast<std::size_t>(n) * S + s] = jump.plus[s];
    }

    std::vector<double> grad(w.size());
    std::vector<double> cell(static_cast<std::size_t>(n), 0.0);
    std::vector<double> vbuf(S), d1buf(static_cast<std::size_t>(S) * dim),
        d2buf(order == 2 ? static_cast<std::size_t>(S) * dim * dim : 0),
        gv(S), g1(static_cast<std::size_t>(S) * dim),
        g2(order == 2 ? static_cast<std::size_t>(S) * dim * dim : 0);

    auto objective = [&](bool with_grad) {
        if (with_grad) std::fill(grad.begin(), grad.end(), 0.0);
        std::fill(cell.begin(), cell.end(), 0.0);
        if (order == 1) {
            for (int i = 0; i < n; ++i) {
                const double* a = w.data() + static_cast<std::size_t>(i) * S;
                const double* b = w.data() + static_cast<std::size_t>(i + 1) * S;
                const double tmid = -0.5 * span + (i + 0.5) * h;
                for (int s = 0; s < S; ++s) {
                    vbuf[s] = 0.5 * (a[s] + b[s]);
                    const double d = (b[s] - a[s]) / h;
                    for (int c = 0; c < dim; ++c) d1buf[s * dim + c] = d * nu[c];
                }
                SlotView at{nullptr, d1buf.data(), vbuf.data(),
                            tmid < 0 ? (jump.f_minus.empty() ? nullptr
                                                             : jump.f_minus.data())
                                     : (jump.f_plus.empty() ? nullptr
                                                            : jump.f_plus.data())};
                cell[static_cast<std::size_t>(i)] = h * density->eval(at);
                if (!with_grad) continue;
                std::fill(gv.begin(), gv.end(), 0.0);
                std::fill(g1.begin(), g1.end(), 0.0);
                density->add_grad(at, h, SlotGrad{nullptr, g1.data(), gv.data()});
                double* ga = grad.data() + static_cast<std::size_t>(i) * S;
                double* gb = grad.data() + static_cast<std::size_t>(i + 1) * S;
                for (int s = 0; s < S; ++s) {
                    double gd = 0.0;
                    for (int c = 0; c < dim; ++c) gd += g1[s * dim + c] * nu[c];
                    ga[s] += 0.5 * gv[s] - gd / h;
                    gb[s] += 0.5 * gv[s] + gd / h;
                }
            }
        } else {
            for (int i = 1; i < n; ++i) {
                const double* wm = w.data() + static_cast<std::size_t>(i - 1) * S;
                const double* w0 = w.data() + static_cast<std::size_t>(i) * S;
                const double* wp = w.data() + static_cast<std::size_t>(i + 1) * S;
                const double t = -0.5 * span + i * h;
                for (int s = 0; s < S; ++s) {
                    vbuf[s] = w0[s];
                    const double d1 = (wp[s] - wm[s]) / (2.0 * h);
                    const double d2 = (wp[s] - 2.0 * w0[s] + wm[s]) / (h * h);
                    for (int c = 0; c < dim; ++c) {
                        d1buf[s * dim + c] = d1 * nu[c];
                        for (int e = 0; e < dim; ++e)
                            d2buf[(s * dim + c) * dim + e] = d2 * nu[c] * nu[e];
                    }
                }
                SlotView at{d2buf.data(), d1buf.data(), vbuf.data(),
                            t < 0 ? (jump.f_minus.empty() ? nullptr
                                                          : jump.f_minus.data())
                                  : (jump.f_plus.empty() ? nullptr
                                                         : jump.f_plus.data())};
                cell[static_cast<std::size_t>(i)] = h * density->eval(at);
                if (!with_grad) continue;
                std::fill(gv.begin(), gv.end(), 0.0);
                std::fill(g1.begin(), g1.end(), 0.0);
                std::fill(g2.begin(), g2.end(), 0.0);
                density->add_grad(at, h,
                                  SlotGrad{g2.data(), g1.data(), gv.data()});
                double* gm = grad.data() + static_cast<std::size_t>(i - 1) * S;
                double* g0 = grad.data() + static_cast<std::size_t>(i) * S;
                double* gp = grad.data() + static_cast<std::size_t>(i + 1) * S;
                for (int s = 0; s < S; ++s) {
                    double gd1 = 0.0, gd2 = 0.0;
                    for (int c = 0; c < dim; ++c) gd1 += g1[s * dim + c] * nu[c];
                    for (int c = 0; c < dim; ++c)
                        for (int e = 0; e < dim; ++e)
                            gd2 += g2[(s * dim + c) * dim + e] * nu[c] * nu[e];
                    g0[s] += gv[s] - 2.0 * gd2 / (h * h);
                    gm[s] += -gd1 / (2.0 * h) + gd2 / (h * h);
                    gp[s] += gd1 / (2.0 * h) + gd2 / (h * h);
                }
            }
        }
        return pairwise_sum(cell);
    };

    double value = objective(false);
    if (!std::isfinite(value)) throw std::runtime_error("oracle start is non-finite");

    // conjugate descent in the projected path space: the admissibility
    // projection is affine with orthogonal per-node action, so increments map
    // through the difference of projected paths and raw-gradient slopes along
    // projected directions stay exact
    const std::size_t total = w.size();
    std::vector<double> pg(total), pg_prev(total), d(total), w_try(total),
        tmp(total);
    auto project_grad = [&]() {
        for (std::size_t i = 0; i < total; ++i) tmp[i] = w[i] + grad[i];
        project_path(shape, nu, jump.minus, tmp, n + 1);
        for (std::size_t i = 0; i < total; ++i) pg[i] = tmp[i] - w[i];
        for (int s = 0; s < S; ++s) {
            pg[static_cast<std::size_t>(s)] = 0.0;
            pg[total - static_cast<std::size_t>(S) + static_cast<std::size_t>(s)] = 0.0;
        }
    };
    auto dot_v = [](const std::vector<double>& a, const std::vector<double>& b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
        return acc;
    };

    double step_try = step;
    double gg_prev = 0.0;
    double window_best = value;
    bool force_descent = true;
    for (int it = 0; it < iterations; ++it) {
        objective(true);
        project_grad();
        const double gg = dot_v(pg, pg);
        if (gg <= 1e-24) break;
        double beta = 0.0;
        if (!force_descent && gg_prev > 0.0) {
            double num = 0.0;
            for (std::size_t i = 0; i < total; ++i) num += pg[i] * (pg[i] - pg_prev[i]);
            beta = std::max(0.0, num / gg_prev);
        }
        for (std::size_t i = 0; i < total; ++i) d[i] = -pg[i] + beta * d[i];
        double slope = dot_v(pg, d);
        if (!(slope < 0.0)) {
            for (std::size_t i = 0; i < total; ++i) d[i] = -pg[i];
            slope = -gg;
            beta = 0.0;
        }
        double st = 2.0 * step_try;
        bool ok = false;
        for (int ls = 0; ls < 48; ++ls) {
            for (std::size_t i = 0; i < total; ++i) w_try[i] = w[i] + st * d[i];
            w.swap(w_try);
            const double f_new = objective(false);
            if (std::isfinite(f_new) && f_new <= value + 1e-4 * st * slope) {
                value = f_new;
                step_try = st;
                ok = true;
                break;
            }
            w.swap(w_try);
            st *= 0.5;
        }
        if (!ok) {
            if (std::sqrt(gg) > 1e-3 * (1.0 + std::fabs(value)))
                throw std::runtime_error("oracle descent diverged");
            break;  // numerical floor with a small gradient
        }
        force_descent = false;
        pg_prev.swap(pg);
        gg_prev = gg;
        if ((it + 1) % 200 == 0) {
            // stop once a whole window of iterations stops paying
            if (window_best - value <= 1e-10 * (1.0 + std::fabs(value))) break;
            window_best = value;
        }
    }
    return value;
}

OracleReport fd_gradient_check(const ObjectiveFn& objective,
                               const std::vector<double>& point, double step,
                               double tolerance, const std::string& name) {
    if (step < 1e-8 || step > 1e-4)
        throw std::invalid_argument("fd step must lie in [1e-8, 1e-4]");
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> g(point.size());
    objective(point, g);
    double scale = 1.0;
    for (double gi : g) scale = std::max(scale, std::fabs(gi));
    std::vector<double> x = point, dump(point.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + step;
        const double fp = objective(x, dump);
        x[i] = keep - step;
        const double fm = objective(x, dump);
        x[i] = keep;
        worst = std::max(worst, std::fabs((fp - fm) / (2.0 * step) - g[i]) / scale);
    }
    return make_report(name, 0.0, worst, tolerance, seconds_since(t0));
}

OracleReport operator_self_test(int cells, int trials) {
    const auto t0 = std::chrono::steady_clock::now();

    CompositeShape shape;
    shape.dim = 2;
    shape.grad_rows = 1;
    shape.divfree_rows = 1;
    shape.unconstrained_dim = 1;
    // Pure quadratic in every slot entry: the cell value is then an exact
    // quadratic form of the coefficients and the polarization identity holds.
    std::vector<PolynomialTerm> terms;
    const int S = shape.state_size();
    for (int i = 0; i < S * shape.dim; ++i)
        terms.push_back({1.0, {{kSlotD1, i, 2}}});
    for (int i = 0; i < S; ++i) terms.push_back({1.0, {{kSlotValue, i, 2}}});
    const DensityPtr quad = make_polynomial(shape, 1, terms, "slot_quadratic");

    CompositeJump jump;
    jump.shape = shape;
    jump.normal = {1.0, 0.0};
    // zero end states (the only zero-set point of the quadratic density);
    // the identities under test live in the deviation dofs, not the ramp
    jump.minus = {0.0, 0.0, 0.0, 0.0, 0.0};
    jump.plus = {0.0, 0.0, 0.0, 0.0, 0.0};

    CellndOptions options;
    options.normal_cells = cells;
    options.tangential_cells = cells;
    const LatticeBasis basis = LatticeBasis::orthonormal(jump.normal);
    const CellndProblem prob(quad, jump, basis, 0.25, options);
    const int dof = prob.dof_count();

    std::mt19937_64 rng(20240817);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    auto draw = [&]() {
        std::vector<double> v(static_cast<std::size_t>(dof));
        for (double& x : v) x = uni(rng);
        return v;
    };

    double worst = 0.0;
    const std::vector<double> zero(static_cast<std::size_t>(dof), 0.0);
    std::vector<double> g0(static_cast<std::size_t>(dof));
    prob.value_and_grad(zero, g0);
    for (int trial = 0; trial < trials; ++trial) {
        const std::vector<double> x = draw();
        const std::vector<double> y = draw();

        // Reconstruction constraints at every quadrature point.
        const ConstraintResiduals res = prob.constraint_residuals(x);
        worst = std::max(worst, res.max_curl);
        worst = std::max(worst, res.max_div);

        // Adjoint consistency through the polarization identity:
        // <grad(x) - grad(0), y> must match <grad(y) - grad(0), x>.
        std::vector<double> gx(static_cast<std::size_t>(dof)),
            gy(static_cast<std::size_t>(dof));
        prob.value_and_grad(x, gx);
        prob.value_and_grad(y, gy);
        double lhs = 0.0, rhs = 0.0, mag = 1.0;
        for (int i = 0; i < dof; ++i) {
            lhs += (gx[i] - g0[i]) * y[i];
            rhs += (gy[i] - g0[i]) * x[i];
            mag = std::max(mag, std::fabs(gx[i]));
        }
        worst = std::max(worst, std::fabs(lhs - rhs) / (mag * dof));

        // Tangential periodicity of the sampled deviation.
        const CellSampler sampler(prob.profile(x));
        std::vector<double> s{uni(rng) * 0.49, 0.25 + 0.5 * uni(rng)};
        std::vector<double> dev_a(static_cast<std::size_t>(S)),
            slot_a(static_cast<std::size_t>(S) * 2),
            dev_b(static_cast<std::size_t>(S)),
            slot_b(static_cast<std::size_t>(S) * 2);
        sampler.deviation(s.data(), dev_a.data(), slot_a.data());
        s[1] += 1.0;
        sampler.deviation(s.data(), dev_b.data(), slot_b.data());
        for (int i = 0; i < S; ++i)
            worst = std::max(worst, std::fabs(dev_a[i] - dev_b[i]));
        for (int i = 0; i < S * 2; ++i)
            worst = std::max(worst, std::fabs(slot_a[i] - slot_b[i]));
    }
    return make_report("operator_self_test", 0.0, worst, 1e-12,
                       seconds_since(t0));
}

}  // namespace translayer
