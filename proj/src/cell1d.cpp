#include "translayer/cell1d.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "translayer/parallel.hpp"
#include "translayer/quadrature.hpp"

namespace translayer {

namespace {

double norm_scale(const std::vector<double>& v) {
    double m = 1.0;
    for (double a : v) m = std::max(m, std::abs(a));
    return m;
}

double quintic_step(double u) {
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
}

}  // namespace

void check_jump_admissible(const EnergyDensity& density,
                           const CompositeJump& jump) {
    const CompositeShape& sh = density.shape();
    if (!(sh == jump.shape)) throw std::invalid_argument("jump/density shape mismatch");
    sh.check_valid();
    const int dim = sh.dim;
    if (static_cast<int>(jump.normal.size()) != dim)
        throw std::invalid_argument("normal dimension mismatch");
    double nn = 0.0;
    for (double a : jump.normal) nn += a * a;
    if (std::abs(std::sqrt(nn) - 1.0) > 1e-12)
        throw std::invalid_argument("normal is not unit length");
    const int s = sh.state_size();
    if (static_cast<int>(jump.minus.size()) != s ||
        static_cast<int>(jump.plus.size()) != s)
        throw std::invalid_argument("state size mismatch");
    if (static_cast<int>(jump.f_minus.size()) != sh.inhom_dim ||
        static_cast<int>(jump.f_plus.size()) != sh.inhom_dim)
        throw std::invalid_argument("inhomogeneity size mismatch");

    const std::vector<double> d = jump.delta();
    const double scale = std::max(norm_scale(jump.minus), norm_scale(jump.plus));
    // curl-free rows may jump only along the normal
    for (int r = 0; r < sh.grad_rows; ++r) {
        double along = 0.0;
        for (int a = 0; a < dim; ++a)
            along += d[static_cast<std::size_t>(sh.grad_index(r, a))] * jump.normal[static_cast<std::size_t>(a)];
        for (int a = 0; a < dim; ++a) {
            const double resid =
                d[static_cast<std::size_t>(sh.grad_index(r, a))] - along * jump.normal[static_cast<std::size_t>(a)];
            if (std::abs(resid) > 1e-10 * scale)
                throw std::invalid_argument("curl-free jump is not rank-one with the normal");
        }
    }
    // div-free rows must have continuous normal trace
    for (int r = 0; r < sh.divfree_rows; ++r) {
        double tr = 0.0;
        for (int a = 0; a < dim; ++a)
            tr += d[static_cast<std::size_t>(sh.divfree_index(r, a))] * jump.normal[static_cast<std::size_t>(a)];
        if (std::abs(tr) > 1e-10 * scale)
            throw std::invalid_argument("div-free jump has nonzero normal trace");
    }
    if (!density.on_zero_set(jump.minus.data(),
                             jump.f_minus.empty() ? nullptr : jump.f_minus.data()))
        throw std::invalid_argument("minus state is off the zero set");
    if (!density.on_zero_set(jump.plus.data(),
                             jump.f_plus.empty() ? nullptr : jump.f_plus.data()))
        throw std::invalid_argument("plus state is off the zero set");
}

Cell1dProblem::Cell1dProblem(DensityPtr density, CompositeJump jump, double l,
                             const Cell1dOptions& options)
    : density_(std::move(density)), jump_(std::move(jump)), l_(l) {
    check_jump_admissible(*density_, jump_);
    if (!(l_ > 0.0)) throw std::invalid_argument("layer width must be positive");
    n_ = options.grid_n;
    if (n_ < 128 || n_ % 2 != 0)
        throw std::invalid_argument("grid_n must be even and >= 128");
    h_ = 1.0 / n_;
    const CompositeShape& sh = density_->shape();
    state_size_ = sh.state_size();
    second_order_ = density_->order() == 2;
    clamp_extra_ = options.clamp_extra_node;
    workers_ = std::max(1, options.workers);

    // per-node unknowns: unconstrained components, curl rank-one coefficients,
    // div-free tangent coefficients
    const int dim = sh.dim;
    for (int c = 0; c < sh.unconstrained_dim; ++c) {
        Column col;
        col.idx.push_back(sh.unconstrained_index(c));
        col.weight.push_back(1.0);
        cols_.push_back(std::move(col));
    }
    for (int r = 0; r < sh.grad_rows; ++r) {
        Column col;
        for (int a = 0; a < dim; ++a) {
            col.idx.push_back(sh.grad_index(r, a));
            col.weight.push_back(jump_.normal[static_cast<std::size_t>(a)]);
        }
        cols_.push_back(std::move(col));
    }
    const std::vector<std::vector<double>> frame = tangent_frame(jump_.normal);
    for (int r = 0; r < sh.divfree_rows; ++r)
        for (const std::vector<double>& tau : frame) {
            Column col;
            for (int a = 0; a < dim; ++a) {
                col.idx.push_back(sh.divfree_index(r, a));
                col.weight.push_back(tau[static_cast<std::size_t>(a)]);
            }
            cols_.push_back(std::move(col));
        }

    const int j0 = clamp_extra_ ? 2 : 1;
    dof_count_ = static_cast<std::size_t>(std::max(0, n_ - 1 - 2 * (j0 - 1))) * cols_.size();

    // base ramp factors
    ramp_.resize(static_cast<std::size_t>(n_) + 1);
    for (int i = 0; i <= n_; ++i) {
        const double s = -0.5 + i * h_;
        if (options.ramp == RampKind::QuinticStep) {
            ramp_[static_cast<std::size_t>(i)] = quintic_step(s / l_ + 0.5);
        } else {
            if (options.backbone == nullptr)
                throw std::invalid_argument("kernel backbone ramp requires a profile");
            ramp_[static_cast<std::size_t>(i)] = 1.0 - options.backbone->cum_at(-s / l_);
        }
    }
    ramp_.front() = 0.0;
    ramp_.back() = 1.0;

    const std::vector<double> delta = jump_.delta();
    base_.resize(static_cast<std::size_t>(n_ + 1) * state_size_);
    for (int i = 0; i <= n_; ++i)
        for (int c = 0; c < state_size_; ++c)
            base_[static_cast<std::size_t>(i) * state_size_ + c] =
                jump_.minus[static_cast<std::size_t>(c)] +
                ramp_[static_cast<std::size_t>(i)] * delta[static_cast<std::size_t>(c)];

    const GaussRule rule = gauss_rule_for_degree(density_->max_total_degree());
    gauss_nodes_ = rule.nodes;
    gauss_weights_ = rule.weights;
}

std::vector<double> Cell1dProblem::reconstruct(const std::vector<double>& x) const {
    if (x.size() != dof_count_) throw std::invalid_argument("dof size mismatch");
    std::vector<double> nodes = base_;
    const int j0 = clamp_extra_ ? 2 : 1;
    const std::size_t dpn = cols_.size();
    for (int j = j0; j <= n_ - j0; ++j) {
        const double* xj = x.data() + static_cast<std::size_t>(j - j0) * dpn;
        double* nj = nodes.data() + static_cast<std::size_t>(j) * state_size_;
        for (std::size_t c = 0; c < dpn; ++c) {
            const Column& col = cols_[c];
            for (std::size_t e = 0; e < col.idx.size(); ++e)
                nj[col.idx[e]] += xj[c] * col.weight[e];
        }
    }
    return nodes;
}

void Cell1dProblem::scatter_node_grad(const double* node_state_grad, int node,
                                      std::vector<double>& grad) const {
    const int j0 = clamp_extra_ ? 2 : 1;
    if (node < j0 || node > n_ - j0) return;  // pinned
    const std::size_t dpn = cols_.size();
    double* gj = grad.data() + static_cast<std::size_t>(node - j0) * dpn;
    for (std::size_t c = 0; c < dpn; ++c) {
        const Column& col = cols_[c];
        double acc = 0.0;
        for (std::size_t e = 0; e < col.idx.size(); ++e)
            acc += node_state_grad[col.idx[e]] * col.weight[e];
        gj[c] += acc;
    }
}

double Cell1dProblem::assemble(const std::vector<double>& nodes,
                               std::vector<double>* node_grad) const {
    const CompositeShape& sh = density_->shape();
    const int dim = sh.dim;
    const int ss = state_size_;
    const EnergyDensity& f = *density_;
    if (node_grad != nullptr)
        node_grad->assign(static_cast<std::size_t>(n_ + 1) * ss, 0.0);

    if (!second_order_) {
        // piecewise-linear nodes, per-cell Gauss quadrature (exact: the
        // integrand is a polynomial of the density's degree in the cell
        // coordinate, and no cell straddles s = 0 because n is even)
        std::vector<double> contrib(static_cast<std::size_t>(n_));
        std::vector<double> cell_grad;  // per cell: left then right state grads
        if (node_grad != nullptr)
            cell_grad.assign(static_cast<std::size_t>(n_) * 2 * ss, 0.0);
        const int nq = static_cast<int>(gauss_nodes_.size());
        parallel_for(0, n_, workers_, [&](long i) {
            const double* zl = nodes.data() + static_cast<std::size_t>(i) * ss;
            const double* zr = zl + ss;
            std::vector<double> d1(static_cast<std::size_t>(ss) * dim);
            for (int c = 0; c < ss; ++c) {
                const double slope = l_ * (zr[c] - zl[c]) / h_;
                for (int a = 0; a < dim; ++a)
                    d1[static_cast<std::size_t>(c) * dim + a] =
                        slope * jump_.normal[static_cast<std::size_t>(a)];
            }
            const double s_mid = -0.5 + (i + 0.5) * h_;
            const std::vector<double>& fx = side_select(s_mid, jump_.f_plus, jump_.f_minus);
            std::vector<double> value(static_cast<std::size_t>(ss));
            std::vector<double> vgrad, dgrad;
            if (node_grad != nullptr) {
                vgrad.assign(static_cast<std::size_t>(ss), 0.0);
                dgrad.assign(static_cast<std::size_t>(ss) * dim, 0.0);
            }
            double acc = 0.0;
            for (int g = 0; g < nq; ++g) {
                const double xi = gauss_nodes_[static_cast<std::size_t>(g)];
                const double w = gauss_weights_[static_cast<std::size_t>(g)] * h_ / l_;
                for (int c = 0; c < ss; ++c)
                    value[static_cast<std::size_t>(c)] = (1.0 - xi) * zl[c] + xi * zr[c];
                SlotView at{nullptr, d1.data(), value.data(),
                            fx.empty() ? nullptr : fx.data()};
                acc += w * f.eval(at);
                if (node_grad != nullptr) {
                    std::fill(vgrad.begin(), vgrad.end(), 0.0);
                    std::fill(dgrad.begin(), dgrad.end(), 0.0);
                    SlotGrad out{nullptr, dgrad.data(), vgrad.data()};
                    f.add_grad(at, w, out);
                    double* gl = cell_grad.data() + static_cast<std::size_t>(i) * 2 * ss;
                    double* gr = gl + ss;
                    for (int c = 0; c < ss; ++c) {
                        double along = 0.0;
                        for (int a = 0; a < dim; ++a)
                            along += dgrad[static_cast<std::size_t>(c) * dim + a] *
                                     jump_.normal[static_cast<std::size_t>(a)];
                        along *= l_ / h_;
                        gl[c] += (1.0 - xi) * vgrad[static_cast<std::size_t>(c)] - along;
                        gr[c] += xi * vgrad[static_cast<std::size_t>(c)] + along;
                    }
                }
            }
            contrib[static_cast<std::size_t>(i)] = acc;
        });
        if (node_grad != nullptr) {
            for (int i = 0; i < n_; ++i) {
                const double* gl = cell_grad.data() + static_cast<std::size_t>(i) * 2 * ss;
                double* nl = node_grad->data() + static_cast<std::size_t>(i) * ss;
                for (int c = 0; c < 2 * ss; ++c) nl[c] += gl[c];
            }
        }
        return pairwise_sum(contrib);
    }

    // second-order path: nodal slots by central differences, reflected end
    // ghosts (zero end slope), trapezoid weights
    std::vector<double> contrib(static_cast<std::size_t>(n_) + 1);
    std::vector<double> trip_grad;  // per node: grads to (im, i, ip)
    if (node_grad != nullptr)
        trip_grad.assign((static_cast<std::size_t>(n_) + 1) * 3 * ss, 0.0);
    parallel_for(0, n_ + 1, workers_, [&](long i) {
        const int im = (i == 0) ? 1 : static_cast<int>(i) - 1;
        const int ip = (i == n_) ? n_ - 1 : static_cast<int>(i) + 1;
        const double* zm = nodes.data() + static_cast<std::size_t>(im) * ss;
        const double* zi = nodes.data() + static_cast<std::size_t>(i) * ss;
        const double* zp = nodes.data() + static_cast<std::size_t>(ip) * ss;
        std::vector<double> d1(static_cast<std::size_t>(ss) * dim);
        std::vector<double> d2(static_cast<std::size_t>(ss) * dim * dim);
        for (int c = 0; c < ss; ++c) {
            const double first = l_ * (zp[c] - zm[c]) / (2.0 * h_);
            const double second = l_ * l_ * (zp[c] - 2.0 * zi[c] + zm[c]) / (h_ * h_);
            for (int a = 0; a < dim; ++a) {
                d1[static_cast<std::size_t>(c) * dim + a] =
                    first * jump_.normal[static_cast<std::size_t>(a)];
                for (int b = 0; b < dim; ++b)
                    d2[(static_cast<std::size_t>(c) * dim + a) * dim + b] =
                        second * jump_.normal[static_cast<std::size_t>(a)] *
                        jump_.normal[static_cast<std::size_t>(b)];
            }
        }
        const double s = -0.5 + i * h_;
        const std::vector<double>& fx = side_select(s, jump_.f_plus, jump_.f_minus);
        const double w = ((i == 0 || i == n_) ? 0.5 * h_ : h_) / l_;
        SlotView at{d2.data(), d1.data(), zi, fx.empty() ? nullptr : fx.data()};
        contrib[static_cast<std::size_t>(i)] = w * f.eval(at);
        if (node_grad != nullptr) {
            std::vector<double> vgrad(static_cast<std::size_t>(ss), 0.0);
            std::vector<double> d1grad(static_cast<std::size_t>(ss) * dim, 0.0);
            std::vector<double> d2grad(static_cast<std::size_t>(ss) * dim * dim, 0.0);
            SlotGrad out{d2grad.data(), d1grad.data(), vgrad.data()};
            f.add_grad(at, w, out);
            double* t = trip_grad.data() + static_cast<std::size_t>(i) * 3 * ss;
            for (int c = 0; c < ss; ++c) {
                double along1 = 0.0;
                for (int a = 0; a < dim; ++a)
                    along1 += d1grad[static_cast<std::size_t>(c) * dim + a] *
                              jump_.normal[static_cast<std::size_t>(a)];
                double along2 = 0.0;
                for (int a = 0; a < dim; ++a)
                    for (int b = 0; b < dim; ++b)
                        along2 += d2grad[(static_cast<std::size_t>(c) * dim + a) * dim + b] *
                                  jump_.normal[static_cast<std::size_t>(a)] *
                                  jump_.normal[static_cast<std::size_t>(b)];
                const double c1 = l_ / (2.0 * h_) * along1;
                const double c2 = l_ * l_ / (h_ * h_) * along2;
                t[c] += -c1 + c2;                     // to im
                t[ss + c] += vgrad[static_cast<std::size_t>(c)] - 2.0 * c2;  // to i
                t[2 * ss + c] += c1 + c2;             // to ip
            }
        }
    });
    if (node_grad != nullptr) {
        for (int i = 0; i <= n_; ++i) {
            const int im = (i == 0) ? 1 : i - 1;
            const int ip = (i == n_) ? n_ - 1 : i + 1;
            const double* t = trip_grad.data() + static_cast<std::size_t>(i) * 3 * ss;
            for (int c = 0; c < ss; ++c) {
                (*node_grad)[static_cast<std::size_t>(im) * ss + c] += t[c];
                (*node_grad)[static_cast<std::size_t>(i) * ss + c] += t[ss + c];
                (*node_grad)[static_cast<std::size_t>(ip) * ss + c] += t[2 * ss + c];
            }
        }
    }
    return pairwise_sum(contrib);
}

double Cell1dProblem::value(const std::vector<double>& x) const {
    const std::vector<double> nodes = reconstruct(x);
    return assemble(nodes, nullptr);
}

double Cell1dProblem::value_and_grad(const std::vector<double>& x,
                                     std::vector<double>& grad) const {
    const std::vector<double> nodes = reconstruct(x);
    std::vector<double> node_grad;
    const double v = assemble(nodes, &node_grad);
    grad.assign(dof_count_, 0.0);
    for (int j = 0; j <= n_; ++j)
        scatter_node_grad(node_grad.data() + static_cast<std::size_t>(j) * state_size_,
                          j, grad);
    return v;
}

Profile1D Cell1dProblem::profile(const std::vector<double>& x) const {
    Profile1D p;
    p.shape = density_->shape();
    p.nu = jump_.normal;
    p.grid_n = n_;
    p.s.resize(static_cast<std::size_t>(n_) + 1);
    for (int i = 0; i <= n_; ++i) p.s[static_cast<std::size_t>(i)] = -0.5 + i * h_;
    p.state = reconstruct(x);
    return p;
}

std::vector<double> Cell1dProblem::compress_from(const std::vector<double>& x_coarse,
                                                 double k_ratio) const {
    if (x_coarse.size() != dof_count_) throw std::invalid_argument("dof size mismatch");
    if (!(k_ratio > 1.0)) throw std::invalid_argument("compression ratio must exceed 1");
    const int j0 = clamp_extra_ ? 2 : 1;
    const std::size_t dpn = cols_.size();
    auto coarse_at = [&](int node, std::size_t c) -> double {
        if (node < j0 || node > n_ - j0) return 0.0;
        return x_coarse[static_cast<std::size_t>(node - j0) * dpn + c];
    };
    std::vector<double> out(dof_count_, 0.0);
    for (int j = j0; j <= n_ - j0; ++j) {
        const double pos = k_ratio * (-0.5 + j * h_);
        if (pos <= -0.5 || pos >= 0.5) continue;
        const double fi = (pos + 0.5) * n_;
        int i = static_cast<int>(fi);
        if (i >= n_) i = n_ - 1;
        const double xi = fi - i;
        for (std::size_t c = 0; c < dpn; ++c)
            out[static_cast<std::size_t>(j - j0) * dpn + c] =
                (1.0 - xi) * coarse_at(i, c) + xi * coarse_at(i + 1, c);
    }
    return out;
}

std::function<void(std::vector<double>&)> Cell1dProblem::preconditioner() const {
    const int dim = density_->shape().dim;
    const int ss = state_size_;
    const int j0 = clamp_extra_ ? 2 : 1;
    const int m = n_ - 2 * j0 + 1;
    const std::size_t dpn = cols_.size();
    if (m <= 0 || dpn == 0) return {};

    // curvature probes: central second differences of the density along each
    // column direction, at both end states; derivative slots also probed at a
    // unit offset, where degenerate wells regain curvature
    const double delta = 1e-3;
    std::vector<double> value(static_cast<std::size_t>(ss));
    std::vector<double> d1(static_cast<std::size_t>(ss) * dim);
    std::vector<double> d2;
    if (second_order_) d2.assign(static_cast<std::size_t>(ss) * dim * dim, 0.0);
    const EnergyDensity& f = *density_;
    enum class Slot { Value, D1, D2 };
    auto probe = [&](const Column& col, Slot slot, const std::vector<double>& at,
                     const std::vector<double>& fx, double offset) {
        auto energy = [&](double t) {
            std::copy(at.begin(), at.end(), value.begin());
            std::fill(d1.begin(), d1.end(), 0.0);
            std::fill(d2.begin(), d2.end(), 0.0);
            for (std::size_t e = 0; e < col.idx.size(); ++e) {
                const std::size_t ci = static_cast<std::size_t>(col.idx[e]);
                const double w = col.weight[e] * t;
                if (slot == Slot::Value) {
                    value[ci] += w;
                } else if (slot == Slot::D1) {
                    for (int a = 0; a < dim; ++a)
                        d1[ci * dim + a] += w * jump_.normal[static_cast<std::size_t>(a)];
                } else {
                    for (int a = 0; a < dim; ++a)
                        for (int b = 0; b < dim; ++b)
                            d2[(ci * dim + a) * dim + b] +=
                                w * jump_.normal[static_cast<std::size_t>(a)] *
                                jump_.normal[static_cast<std::size_t>(b)];
                }
            }
            SlotView view{second_order_ ? d2.data() : nullptr, d1.data(),
                          value.data(), fx.empty() ? nullptr : fx.data()};
            return f.eval(view);
        };
        const double lo = energy(offset - delta);
        const double mid = energy(offset);
        const double hi = energy(offset + delta);
        return (hi - 2.0 * mid + lo) / (delta * delta);
    };

    std::vector<double> mid_state(static_cast<std::size_t>(ss));
    for (int c = 0; c < ss; ++c)
        mid_state[static_cast<std::size_t>(c)] =
            0.5 * (jump_.minus[static_cast<std::size_t>(c)] +
                   jump_.plus[static_cast<std::size_t>(c)]);

    struct Factor {
        std::vector<double> d, l1, l2;
    };
    auto factors = std::make_shared<std::vector<Factor>>(dpn);
    for (std::size_t c = 0; c < dpn; ++c) {
        const Column& col = cols_[c];
        double kval = 2.0, kd1 = 0.5, kd2 = 0.5;
        for (int side = 0; side < 2; ++side) {
            const std::vector<double>& at = side ? jump_.plus : jump_.minus;
            const std::vector<double>& fx = side ? jump_.f_plus : jump_.f_minus;
            kval = std::max(kval, probe(col, Slot::Value, at, fx, 0.0));
            for (double off : {0.0, 1.0}) {
                kd1 = std::max(kd1, probe(col, Slot::D1, at, fx, off));
                if (second_order_)
                    kd2 = std::max(kd2, probe(col, Slot::D2, at, fx, off));
            }
        }
        kval = std::max(kval, probe(col, Slot::Value, mid_state, jump_.f_minus, 0.0));

        const double alpha = (h_ / l_) * kval;
        const double beta = (l_ / h_) * kd1;
        const double beta2 =
            second_order_ ? (l_ * l_ * l_) / (h_ * h_ * h_) * kd2 : 0.0;

        // Bands of the discrete quadratic form each path actually assembles.
        // First order (per-cell piecewise linear): alpha I + beta T with T
        // the Dirichlet second-difference matrix. Second order: the d1 slot
        // is a centered difference (pentadiagonal Gram, zero nearest-neighbor
        // coupling) and the d2 slot a reflected-ghost second difference whose
        // end diagonal is 7 when the reflection row touches a free node.
        std::vector<double> b0(static_cast<std::size_t>(m));
        double b1 = 0.0, b2 = 0.0;
        if (!second_order_) {
            for (int j = 0; j < m; ++j)
                b0[static_cast<std::size_t>(j)] = alpha + 2.0 * beta;
            b1 = -beta;
            b2 = 0.0;
        } else {
            const double end_d1 = clamp_extra_ ? 0.5 : 0.25;
            const double end_d2 = clamp_extra_ ? 6.0 : 7.0;
            for (int j = 0; j < m; ++j) {
                const bool end = (j == 0 || j == m - 1);
                b0[static_cast<std::size_t>(j)] =
                    alpha + beta * (end ? end_d1 : 0.5) +
                    beta2 * (end ? end_d2 : 6.0);
            }
            b1 = -4.0 * beta2;
            b2 = beta2 - 0.25 * beta;
        }

        // banded LDL^T, unit lower bandwidth 2
        Factor& fac = (*factors)[c];
        fac.d.assign(static_cast<std::size_t>(m), 0.0);
        fac.l1.assign(static_cast<std::size_t>(m), 0.0);
        fac.l2.assign(static_cast<std::size_t>(m), 0.0);
        for (int j = 0; j < m; ++j) {
            double dj = b0[static_cast<std::size_t>(j)];
            if (j >= 1)
                dj -= fac.l1[static_cast<std::size_t>(j - 1)] *
                      fac.l1[static_cast<std::size_t>(j - 1)] *
                      fac.d[static_cast<std::size_t>(j - 1)];
            if (j >= 2)
                dj -= fac.l2[static_cast<std::size_t>(j - 2)] *
                      fac.l2[static_cast<std::size_t>(j - 2)] *
                      fac.d[static_cast<std::size_t>(j - 2)];
            fac.d[static_cast<std::size_t>(j)] = dj;
            if (j + 1 < m) {
                double v = b1;
                if (j >= 1)
                    v -= fac.l2[static_cast<std::size_t>(j - 1)] *
                         fac.l1[static_cast<std::size_t>(j - 1)] *
                         fac.d[static_cast<std::size_t>(j - 1)];
                fac.l1[static_cast<std::size_t>(j)] = v / dj;
            }
            if (j + 2 < m) fac.l2[static_cast<std::size_t>(j)] = b2 / dj;
        }
    }

    const int chain = m;
    return [factors, dpn, chain](std::vector<double>& v) {
        std::vector<double> w(static_cast<std::size_t>(chain));
        for (std::size_t c = 0; c < dpn; ++c) {
            const Factor& fac = (*factors)[c];
            for (int j = 0; j < chain; ++j)
                w[static_cast<std::size_t>(j)] = v[static_cast<std::size_t>(j) * dpn + c];
            for (int j = 0; j < chain; ++j) {
                double z = w[static_cast<std::size_t>(j)];
                if (j >= 1)
                    z -= fac.l1[static_cast<std::size_t>(j - 1)] *
                         w[static_cast<std::size_t>(j - 1)];
                if (j >= 2)
                    z -= fac.l2[static_cast<std::size_t>(j - 2)] *
                         w[static_cast<std::size_t>(j - 2)];
                w[static_cast<std::size_t>(j)] = z;
            }
            for (int j = 0; j < chain; ++j)
                w[static_cast<std::size_t>(j)] /= fac.d[static_cast<std::size_t>(j)];
            for (int j = chain - 1; j >= 0; --j) {
                double z = w[static_cast<std::size_t>(j)];
                if (j + 1 < chain)
                    z -= fac.l1[static_cast<std::size_t>(j)] *
                         w[static_cast<std::size_t>(j + 1)];
                if (j + 2 < chain)
                    z -= fac.l2[static_cast<std::size_t>(j)] *
                         w[static_cast<std::size_t>(j + 2)];
                w[static_cast<std::size_t>(j)] = z;
            }
            for (int j = 0; j < chain; ++j)
                v[static_cast<std::size_t>(j) * dpn + c] = w[static_cast<std::size_t>(j)];
        }
    };
}

E1Result optimize_e1(const DensityPtr& density, const CompositeJump& jump,
                     const Cell1dOptions& options) {
    std::vector<double> ls = options.l_grid;
    if (ls.empty())
        for (int k = 0; k <= 8; ++k) ls.push_back(std::ldexp(1.0, -k));
    std::sort(ls.begin(), ls.end(), std::greater<double>());
    ls.erase(std::unique(ls.begin(), ls.end()), ls.end());

    E1Result result;
    std::vector<std::vector<double>> minimizers;
    double prev_l = 0.0;
    std::vector<double> prev_x;
    bool have_prev = false;
    for (double l : ls) {
        Cell1dProblem problem(density, jump, l, options);
        std::vector<double> start(static_cast<std::size_t>(problem.dof_count()), 0.0);
        if (have_prev) {
            const double ratio = prev_l / l;
            const double rounded = std::round(ratio);
            if (rounded > 1.5 && std::abs(ratio - rounded) < 1e-9) {
                std::vector<double> comp = problem.compress_from(prev_x, rounded);
                if (problem.value(comp) < problem.value(start)) start = std::move(comp);
            }
        }
        LbfgsOptions solver = options.solver;
        if (!solver.precondition) solver.precondition = problem.preconditioner();
        LbfgsResult sol = lbfgs_minimize(
            [&problem](const std::vector<double>& x, std::vector<double>& g) {
                return problem.value_and_grad(x, g);
            },
            std::move(start), solver);
        LScanEntry entry;
        entry.l = l;
        entry.value = sol.value;
        entry.iterations = sol.iterations;
        entry.converged = sol.converged;
        entry.grad_norm = sol.grad_norm;
        result.scan.push_back(entry);
        minimizers.push_back(sol.x);
        prev_x = std::move(sol.x);
        prev_l = l;
        have_prev = true;
    }

    double best = result.scan.front().value;
    for (const LScanEntry& e : result.scan) best = std::min(best, e.value);
    // smallest width attaining the minimum (widths are descending)
    std::size_t pick = 0;
    for (std::size_t i = 0; i < result.scan.size(); ++i)
        if (result.scan[i].value <= best + 1e-9) pick = i;
    const LScanEntry& chosen = result.scan[pick];
    result.value = chosen.value;
    result.l_star = chosen.l;
    result.iterations = chosen.iterations;
    result.converged = chosen.converged;
    result.grad_norm = chosen.grad_norm;
    Cell1dProblem problem(density, jump, chosen.l, options);
    result.profile = problem.profile(minimizers[pick]);
    return result;
}

std::vector<LScanEntry> l_scan_report(const DensityPtr& density,
                                      const CompositeJump& jump,
                                      const Cell1dOptions& options) {
    return optimize_e1(density, jump, options).scan;
}

double analytic_e1_modica(const std::function<double(double)>& well, double a,
                          double b, int quadrature_n) {
    if (quadrature_n < 2) throw std::invalid_argument("quadrature_n too small");
    if (a == b) return 0.0;
    const double lo = std::min(a, b), hi = std::max(a, b);
    const double h = (hi - lo) / quadrature_n;
    std::vector<double> f(static_cast<std::size_t>(quadrature_n) + 1);
    for (int i = 0; i <= quadrature_n; ++i) {
        const double u = lo + i * h;
        double w = well(u);
        if (w < -1e-12) throw std::invalid_argument("well is negative on the path");
        if (w < 0.0) w = 0.0;
        f[static_cast<std::size_t>(i)] = 2.0 * std::sqrt(w);
    }
    double acc = 0.0;
    for (int i = 0; i < quadrature_n; ++i)
        acc += 0.5 * h * (f[static_cast<std::size_t>(i)] + f[static_cast<std::size_t>(i) + 1]);
    return acc;
}

}  // namespace translayer
