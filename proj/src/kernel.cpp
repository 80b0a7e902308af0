#include "translayer/kernel.hpp"

#include <cmath>
#include <stdexcept>

#include "translayer/parallel.hpp"

namespace translayer {

namespace {

double raw_radial(RadialKernel::Type type, double r) {
    const double q = 0.25 - r * r;
    if (q <= 0.0) return 0.0;
    if (type == RadialKernel::Type::SmoothBump) return std::exp(-1.0 / q);
    return q * q;
}

// surface measure of the unit sphere S^{n-1}; S^0 = {+-1} has measure 2
double sphere_measure(int n) {
    switch (n) {
        case 1: return 2.0;
        case 2: return 2.0 * M_PI;
        case 3: return 4.0 * M_PI;
    }
    throw std::invalid_argument("sphere_measure: dim out of range");
}

}  // namespace

RadialKernel::RadialKernel(Type type, int dim, int norm_resolution)
    : type_(type), dim_(dim) {
    if (dim < 1 || dim > 3) throw std::invalid_argument("kernel dim must be 1..3");
    if (norm_resolution < 16) throw std::invalid_argument("norm resolution too small");
    // unit mass: integral over R^dim of omega(|z|) equals
    // sphere_measure(dim) * int_0^{1/2} omega_raw(r) r^{dim-1} dr;
    // composite Simpson (the integrand slope at r = 0 does not vanish, so a
    // trapezoid rule would leave an h^2 defect visible in the mass)
    const int n = norm_resolution + norm_resolution % 2;
    std::vector<double> f(static_cast<std::size_t>(n) + 1);
    const double h = 0.5 / n;
    for (int i = 0; i <= n; ++i) {
        const double r = i * h;
        double x = raw_radial(type_, r);
        for (int d = 0; d < dim_ - 1; ++d) x *= r;
        f[static_cast<std::size_t>(i)] = x;
    }
    double mass = 0.0;
    for (int i = 0; i + 2 <= n; i += 2)
        mass += h / 3.0 *
                (f[static_cast<std::size_t>(i)] +
                 4.0 * f[static_cast<std::size_t>(i) + 1] +
                 f[static_cast<std::size_t>(i) + 2]);
    mass *= sphere_measure(dim_);
    scale_ = 1.0 / mass;
}

double RadialKernel::radial(double r) const { return scale_ * raw_radial(type_, r); }

double RadialKernel::radial_d1(double r) const {
    const double q = 0.25 - r * r;
    if (q <= 0.0) return 0.0;
    if (type_ == Type::SmoothBump) {
        // omega' = omega * (-2r / q^2)
        return radial(r) * (-2.0 * r / (q * q));
    }
    return scale_ * (-4.0 * r * q);
}

double RadialKernel::radial_d2(double r) const {
    const double q = 0.25 - r * r;
    if (q <= 0.0) return 0.0;
    if (type_ == Type::SmoothBump) {
        const double s = -2.0 * r / (q * q);
        const double sp = -2.0 / (q * q) - 8.0 * r * r / (q * q * q);
        return radial(r) * (s * s + sp);
    }
    return scale_ * (-4.0 * q + 8.0 * r * r);
}

double RadialKernel::value(const double* z) const {
    double r2 = 0.0;
    for (int i = 0; i < dim_; ++i) r2 += z[i] * z[i];
    return radial(std::sqrt(r2));
}

void RadialKernel::gradient(const double* z, double* out) const {
    double r2 = 0.0;
    for (int i = 0; i < dim_; ++i) r2 += z[i] * z[i];
    const double r = std::sqrt(r2);
    if (r < 1e-14 || r >= 0.5) {
        for (int i = 0; i < dim_; ++i) out[i] = 0.0;
        return;
    }
    const double d = radial_d1(r) / r;
    for (int i = 0; i < dim_; ++i) out[i] = d * z[i];
}

void RadialKernel::hessian(const double* z, double* out) const {
    double r2 = 0.0;
    for (int i = 0; i < dim_; ++i) r2 += z[i] * z[i];
    const double r = std::sqrt(r2);
    for (int i = 0; i < dim_ * dim_; ++i) out[i] = 0.0;
    if (r >= 0.5) return;
    if (r < 1e-10) {
        const double w2 = radial_d2(0.0);
        for (int i = 0; i < dim_; ++i) out[i * dim_ + i] = w2;
        return;
    }
    const double w1 = radial_d1(r), w2 = radial_d2(r);
    const double rad = w1 / r;
    const double aniso = (w2 - rad) / r2;
    for (int i = 0; i < dim_; ++i)
        for (int j = 0; j < dim_; ++j)
            out[i * dim_ + j] = aniso * z[i] * z[j] + (i == j ? rad : 0.0);
}

KernelProfile profile_p(const RadialKernel& kernel, int resolution,
                        int slice_resolution) {
    if (resolution < 8 || resolution % 2 != 0)
        throw std::invalid_argument("profile resolution must be even and >= 8");
    KernelProfile prof;
    prof.dim = kernel.dim();
    prof.resolution = resolution;
    const int n = resolution;
    prof.t.resize(static_cast<std::size_t>(n) + 1);
    prof.p.resize(static_cast<std::size_t>(n) + 1);
    const double h = 1.0 / n;
    for (int i = 0; i <= n; ++i) prof.t[static_cast<std::size_t>(i)] = -0.5 + i * h;

    // evaluate on |t| and mirror so evenness is exact
    const int mid = n / 2;
    auto slice = [&kernel, slice_resolution](double tt) -> double {
        const double t2 = tt * tt;
        if (t2 >= 0.25) return 0.0;
        const int dim = kernel.dim();
        if (dim == 1) return kernel.radial(std::abs(tt));
        // radial reduction over the hyperplane: measure(S^{dim-2}) *
        // int_0^{R} omega(sqrt(t^2 + rho^2)) rho^{dim-2} drho, R = sqrt(1/4-t^2)
        // composite Simpson: the dim-3 integrand rho * omega has nonzero
        // slope at rho = 0, which leaves a trapezoid rule an O(h^2) defect
        const double R = std::sqrt(0.25 - t2);
        const int m = slice_resolution + slice_resolution % 2;
        const double hr = R / m;
        auto f_at = [&](int i) -> double {
            const double rho = i * hr;
            double f = kernel.radial(std::sqrt(t2 + rho * rho));
            for (int d = 0; d < dim - 2; ++d) f *= rho;
            return f;
        };
        double acc = 0.0;
        for (int i = 0; i + 2 <= m; i += 2)
            acc += hr / 3.0 * (f_at(i) + 4.0 * f_at(i + 1) + f_at(i + 2));
        return sphere_measure(dim - 1) * acc;
    };
    for (int i = mid; i <= n; ++i)
        prof.p[static_cast<std::size_t>(i)] = slice(prof.t[static_cast<std::size_t>(i)]);
    for (int i = 0; i < mid; ++i)
        prof.p[static_cast<std::size_t>(i)] = prof.p[static_cast<std::size_t>(n - i)];
    prof.p[0] = 0.0;
    prof.p[static_cast<std::size_t>(n)] = 0.0;

    prof.cum.resize(static_cast<std::size_t>(n) + 1);
    prof.cum[0] = 0.0;
    for (int i = 1; i <= n; ++i)
        prof.cum[static_cast<std::size_t>(i)] =
            prof.cum[static_cast<std::size_t>(i) - 1] +
            0.5 * h * (prof.p[static_cast<std::size_t>(i) - 1] + prof.p[static_cast<std::size_t>(i)]);

    prof.dp.resize(static_cast<std::size_t>(n) + 1);
    for (int i = 1; i < n; ++i)
        prof.dp[static_cast<std::size_t>(i)] =
            (prof.p[static_cast<std::size_t>(i) + 1] - prof.p[static_cast<std::size_t>(i) - 1]) /
            (2.0 * h);
    prof.dp[0] = (prof.p[1] - prof.p[0]) / h;
    prof.dp[static_cast<std::size_t>(n)] =
        (prof.p[static_cast<std::size_t>(n)] - prof.p[static_cast<std::size_t>(n) - 1]) / h;
    return prof;
}

namespace {

double interp(const std::vector<double>& nodes, int n, double tt, double outside_lo,
              double outside_hi) {
    if (tt <= -0.5) return outside_lo;
    if (tt >= 0.5) return outside_hi;
    const double h = 1.0 / n;
    const double s = (tt + 0.5) / h;
    int c = static_cast<int>(s);
    if (c >= n) c = n - 1;
    const double xi = s - c;
    return nodes[static_cast<std::size_t>(c)] * (1.0 - xi) +
           nodes[static_cast<std::size_t>(c) + 1] * xi;
}

}  // namespace

double KernelProfile::p_at(double tt) const { return interp(p, resolution, tt, 0.0, 0.0); }

double KernelProfile::dp_at(double tt) const {
    return interp(dp, resolution, tt, 0.0, 0.0);
}

double KernelProfile::cum_at(double tt) const {
    if (tt <= -0.5) return 0.0;
    if (tt >= 0.5) return 1.0;
    return interp(cum, resolution, tt, 0.0, 1.0);
}

void transition_state(const KernelProfile& profile, const CompositeJump& jump,
                      double t, double* out_state) {
    const int s = jump.shape.state_size();
    if (t <= -0.5) {
        for (int i = 0; i < s; ++i) out_state[i] = jump.plus[static_cast<std::size_t>(i)];
        return;
    }
    if (t >= 0.5) {
        for (int i = 0; i < s; ++i) out_state[i] = jump.minus[static_cast<std::size_t>(i)];
        return;
    }
    const double c = profile.cum_at(t);
    for (int i = 0; i < s; ++i)
        out_state[i] = c * jump.minus[static_cast<std::size_t>(i)] +
                       (1.0 - c) * jump.plus[static_cast<std::size_t>(i)];
}

double limit_surface_density(const EnergyDensity& density,
                             const KernelProfile& profile,
                             const CompositeJump& jump, int quadrature) {
    if (quadrature < 8) throw std::invalid_argument("quadrature too small");
    const CompositeShape& sh = density.shape();
    if (!(sh == jump.shape)) throw std::invalid_argument("shape mismatch");
    const int s = sh.state_size();
    const int n = sh.dim;
    const std::vector<double> delta = jump.delta();
    const bool second = density.order() == 2;

    const double h = 1.0 / quadrature;
    std::vector<double> contrib(static_cast<std::size_t>(quadrature) + 1);
    std::vector<double> d1(static_cast<std::size_t>(s) * n);
    std::vector<double> d2(second ? static_cast<std::size_t>(s) * n * n : 0);
    std::vector<double> value(static_cast<std::size_t>(s));
    for (int i = 0; i <= quadrature; ++i) {
        const double t = -0.5 + i * h;
        const double pt = profile.p_at(t);
        for (int a = 0; a < s; ++a)
            for (int b = 0; b < n; ++b)
                d1[static_cast<std::size_t>(a) * n + b] =
                    pt * delta[static_cast<std::size_t>(a)] * jump.normal[static_cast<std::size_t>(b)];
        if (second) {
            const double dpt = profile.dp_at(t);
            for (int a = 0; a < s; ++a)
                for (int b = 0; b < n; ++b)
                    for (int c = 0; c < n; ++c)
                        d2[(static_cast<std::size_t>(a) * n + b) * n + c] =
                            dpt * delta[static_cast<std::size_t>(a)] *
                            jump.normal[static_cast<std::size_t>(b)] *
                            jump.normal[static_cast<std::size_t>(c)];
        }
        transition_state(profile, jump, t, value.data());
        const std::vector<double>& f = side_select(t, jump.f_minus, jump.f_plus);
        SlotView at{second ? d2.data() : nullptr, d1.data(), value.data(),
                    f.empty() ? nullptr : f.data()};
        const double w = (i == 0 || i == quadrature) ? 0.5 * h : h;
        contrib[static_cast<std::size_t>(i)] = w * density.eval(at);
    }
    return pairwise_sum(contrib);
}

}  // namespace translayer
