#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

namespace translayer {

// Objective callback: fills grad (same length as x) and returns the value.
using ObjectiveFn =
    std::function<double(const std::vector<double>& x, std::vector<double>& grad)>;

struct LbfgsOptions {
    int max_iter = 10000;
    double grad_tol = 1e-8;      // stop when max-norm of gradient drops below
    int memory = 10;             // stored curvature pairs
    double armijo_c = 1e-4;      // sufficient-decrease constant
    double backtrack = 0.5;      // step shrink factor
    int max_line_steps = 60;
    // Secondary stop for degenerate valleys (directions with vanishing second
    // derivative at the minimizer), where the strict grad_tol is unreachable
    // by any first-order method even though the value settled long ago: stop
    // once the relative decrease per accepted step stays below f_tol_rel for
    // stall_limit consecutive steps while the gradient max-norm is already
    // below stall_grad_tol.  The decrease history bounds what further
    // iterations could still gain.
    double f_tol_rel = 1e-12;
    int stall_limit = 10;
    double stall_grad_tol = 1e-5;
    // Symmetric positive-definite approximation of the inverse Hessian,
    // applied in place; used as the initial matrix of the two-loop recursion.
    std::function<void(std::vector<double>&)> precondition;
    // Invoked on every accepted iterate (post-decrease); used by structural
    // audits that must hold along the whole descent path, not just at the end.
    std::function<void(const std::vector<double>& x, double value)> on_accept;
};

struct LbfgsResult {
    double value = 0.0;
    double grad_norm = 0.0;      // max-norm at the final iterate
    int iterations = 0;
    bool converged = false;
    std::vector<double> x;
};

// Deterministic L-BFGS with Armijo backtracking. Descent-only: the iterate is
// updated only when the line search achieves sufficient decrease, so the
// returned value never exceeds the value at the initial point.
inline LbfgsResult lbfgs_minimize(const ObjectiveFn& objective,
                                  std::vector<double> x0,
                                  const LbfgsOptions& opt = {}) {
    const std::size_t n = x0.size();
    LbfgsResult res;
    res.x = std::move(x0);
    std::vector<double> g(n), x_new(n), g_new(n), dir(n);
    double f = objective(res.x, g);

    auto max_norm = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double a : v) m = std::max(m, std::abs(a));
        return m;
    };
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };

    std::deque<std::vector<double>> s_hist, y_hist;
    std::deque<double> rho_hist;
    double gamma = 1.0;    // scale of the identity initial matrix
    double gamma_p = 1.0;  // scale of the preconditioner initial matrix
    int stall = 0;

    int it = 0;
    for (; it < opt.max_iter; ++it) {
        if (max_norm(g) <= opt.grad_tol) {
            res.converged = true;
            break;
        }

        // two-loop recursion
        dir = g;
        std::vector<double> alpha(s_hist.size());
        for (std::size_t h = s_hist.size(); h-- > 0;) {
            alpha[h] = rho_hist[h] * dot(s_hist[h], dir);
            for (std::size_t i = 0; i < n; ++i) dir[i] -= alpha[h] * y_hist[h][i];
        }
        if (opt.precondition) {
            opt.precondition(dir);
            for (std::size_t i = 0; i < n; ++i) dir[i] *= gamma_p;
        } else {
            for (std::size_t i = 0; i < n; ++i) dir[i] *= gamma;
        }
        for (std::size_t h = 0; h < s_hist.size(); ++h) {
            const double beta = rho_hist[h] * dot(y_hist[h], dir);
            for (std::size_t i = 0; i < n; ++i)
                dir[i] += (alpha[h] - beta) * s_hist[h][i];
        }
        for (std::size_t i = 0; i < n; ++i) dir[i] = -dir[i];

        double slope = dot(g, dir);
        if (!(slope < 0.0)) {
            // fall back to steepest descent when curvature info is unusable
            for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i];
            slope = -dot(g, g);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            gamma = 1.0;
            gamma_p = 1.0;
            if (!(slope < 0.0)) {
                // gradient numerically zero (subnormals under grad_tol check)
                res.converged = true;
                break;
            }
        }

        double step = 1.0;
        bool accepted = false;
        double f_new = f;
        for (int ls = 0; ls < opt.max_line_steps; ++ls) {
            for (std::size_t i = 0; i < n; ++i) x_new[i] = res.x[i] + step * dir[i];
            f_new = objective(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= f + opt.armijo_c * step * slope) {
                accepted = true;
                break;
            }
            step *= opt.backtrack;
        }
        if (!accepted) {
            // no admissible decrease at machine-small steps: the value is at
            // its numerical floor, trust it only with a small gradient
            res.converged = max_norm(g) <= opt.stall_grad_tol;
            break;
        }

        // curvature pair from the accepted move
        std::vector<double> s_vec(n), y_vec(n);
        for (std::size_t i = 0; i < n; ++i) {
            s_vec[i] = x_new[i] - res.x[i];
            y_vec[i] = g_new[i] - g[i];
        }
        const double sy = dot(s_vec, y_vec);
        const double yy = dot(y_vec, y_vec);
        if (sy > 1e-14 * std::max(1.0, yy)) {
            if (static_cast<int>(s_hist.size()) == opt.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
            gamma = sy / yy;
            if (opt.precondition) {
                std::vector<double> py = y_vec;
                opt.precondition(py);
                const double ypy = dot(y_vec, py);
                gamma_p = (ypy > 0.0) ? sy / ypy : 1.0;
            }
            rho_hist.push_back(1.0 / sy);
            s_hist.push_back(std::move(s_vec));
            y_hist.push_back(std::move(y_vec));
        }

        const double df = f - f_new;
        res.x.swap(x_new);
        g.swap(g_new);
        f = f_new;
        if (opt.on_accept) opt.on_accept(res.x, f);

        if (df <= opt.f_tol_rel * std::max(std::abs(f), 1.0)) {
            ++stall;
        } else {
            stall = 0;
        }
        if (stall >= opt.stall_limit && max_norm(g) <= opt.stall_grad_tol) {
            res.converged = true;
            ++it;
            break;
        }
    }
    res.value = f;
    res.iterations = it;
    res.grad_norm = max_norm(g);
    return res;
}

}  // namespace translayer
