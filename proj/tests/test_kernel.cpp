#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "translayer/density.hpp"
#include "translayer/kernel.hpp"

using namespace translayer;

namespace {

const double kPi = 3.14159265358979323846;

// Independent unit-mass check: surface(dim) * integral of r^(dim-1) omega(r)
// by fine composite Simpson, nothing shared with the library normalization.
double mass_by_simpson(const RadialKernel& kernel) {
    const int n = 1 << 16;
    const double h = 0.5 / n;
    double acc = 0.0;
    for (int i = 0; i + 2 <= n; i += 2) {
        auto f = [&](int j) {
            const double r = j * h;
            const double w = kernel.radial(r);
            return (kernel.dim() == 1 ? 1.0 : std::pow(r, kernel.dim() - 1)) * w;
        };
        acc += h / 3.0 * (f(i) + 4.0 * f(i + 1) + f(i + 2));
    }
    const double surface = kernel.dim() == 1 ? 2.0 : (kernel.dim() == 2 ? 2.0 * kPi : 4.0 * kPi);
    return surface * acc;
}

}  // namespace

TEST_CASE("kernels carry unit mass in every dimension") {
    for (auto type : {RadialKernel::Type::SmoothBump, RadialKernel::Type::PolyBump})
        for (int dim = 1; dim <= 3; ++dim) {
            const RadialKernel kernel(type, dim);
            CHECK(std::fabs(mass_by_simpson(kernel) - 1.0) <= 1e-8);
            CHECK(kernel.radial(0.5) == 0.0);
            CHECK(kernel.radial(0.75) == 0.0);
        }
}

TEST_CASE("radial derivatives match finite differences") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(0.05, 0.44);
    for (auto type : {RadialKernel::Type::SmoothBump, RadialKernel::Type::PolyBump}) {
        const RadialKernel kernel(type, 2);
        for (int trial = 0; trial < 32; ++trial) {
            const double r = u(rng);
            const double h = 1e-5;
            const double fd1 = (kernel.radial(r + h) - kernel.radial(r - h)) / (2.0 * h);
            const double fd2 =
                (kernel.radial(r + h) - 2.0 * kernel.radial(r) + kernel.radial(r - h)) / (h * h);
            CHECK(std::fabs(fd1 - kernel.radial_d1(r)) <= 1e-5 * (1.0 + std::fabs(fd1)));
            CHECK(std::fabs(fd2 - kernel.radial_d2(r)) <= 1e-4 * (1.0 + std::fabs(fd2)));
        }
    }
}

TEST_CASE("point evaluation is consistent with gradient and hessian") {
    const RadialKernel kernel(RadialKernel::Type::SmoothBump, 3);
    std::mt19937 rng(19);
    std::uniform_real_distribution<double> u(-0.25, 0.25);
    for (int trial = 0; trial < 16; ++trial) {
        double z[3] = {u(rng), u(rng), u(rng)};
        double grad[3], hess[9];
        kernel.gradient(z, grad);
        kernel.hessian(z, hess);
        const double h = 1e-5;
        for (int a = 0; a < 3; ++a) {
            double zp[3] = {z[0], z[1], z[2]}, zm[3] = {z[0], z[1], z[2]};
            zp[a] += h;
            zm[a] -= h;
            const double fd = (kernel.value(zp) - kernel.value(zm)) / (2.0 * h);
            CHECK(std::fabs(fd - grad[a]) <= 1e-4 * (1.0 + std::fabs(fd)));
            double gp[3], gm[3];
            kernel.gradient(zp, gp);
            kernel.gradient(zm, gm);
            for (int b = 0; b < 3; ++b) {
                const double fdh = (gp[b] - gm[b]) / (2.0 * h);
                CHECK(std::fabs(fdh - hess[3 * a + b]) <= 1e-3 * (1.0 + std::fabs(fdh)));
            }
        }
        // symmetry of the hessian
        for (int a = 0; a < 3; ++a)
            for (int b = a + 1; b < 3; ++b)
                CHECK(hess[3 * a + b] == doctest::Approx(hess[3 * b + a]).epsilon(1e-12));
    }
}

TEST_CASE("profiles have unit mass, exact evenness, and sharp support") {
    for (auto type : {RadialKernel::Type::SmoothBump, RadialKernel::Type::PolyBump})
        for (int dim = 1; dim <= 3; ++dim) {
            const RadialKernel kernel(type, dim);
            const KernelProfile profile = profile_p(kernel);
            CHECK(std::fabs(profile.mass() - 1.0) <= 1e-8);
            CHECK(profile.cum[0] == 0.0);

            // evenness is enforced by node mirroring, so it is exact
            const int n = profile.resolution;
            for (int i = 0; i <= n; ++i) {
                CHECK(profile.p[static_cast<std::size_t>(i)] ==
                      profile.p[static_cast<std::size_t>(n - i)]);
                CHECK(profile.dp[static_cast<std::size_t>(i)] ==
                      -profile.dp[static_cast<std::size_t>(n - i)]);
            }
            std::mt19937 rng(23);
            std::uniform_real_distribution<double> u(0.0, 0.5);
            for (int trial = 0; trial < 64; ++trial) {
                const double t = u(rng);
                CHECK(std::fabs(profile.p_at(t) - profile.p_at(-t)) <= 1e-12);
            }

            // support exactly [-1/2, 1/2]; cumulative clamps exactly
            CHECK(profile.p.front() == 0.0);
            CHECK(profile.p.back() == 0.0);
            CHECK(profile.p_at(0.5) == 0.0);
            CHECK(profile.p_at(0.500001) == 0.0);
            CHECK(profile.p_at(-3.0) == 0.0);
            CHECK(profile.cum_at(-0.500001) == 0.0);
            CHECK(profile.cum_at(-8.0) == 0.0);
            CHECK(profile.cum_at(0.500001) == 1.0);
            CHECK(profile.cum_at(9.0) == 1.0);
            // half the mass sits on each side
            CHECK(std::fabs(profile.cum_at(0.0) - 0.5) <= 1e-6);
        }
}

TEST_CASE("planar slice of the quartic bump matches the closed form") {
    // dim 2 poly bump: c = 192/pi, p(0) = c/30.
    const RadialKernel kernel(RadialKernel::Type::PolyBump, 2);
    const KernelProfile profile = profile_p(kernel);
    const double expect = 192.0 / kPi / 30.0;
    CHECK(std::fabs(profile.p_at(0.0) - expect) <= 1e-6 * expect);

    double z[2] = {0.3, 0.0};
    const double c = 192.0 / kPi;
    const double q = 0.25 - 0.09;
    CHECK(kernel.value(z) == doctest::Approx(c * q * q).epsilon(1e-8));
}

TEST_CASE("profile resolution must be even and large enough") {
    const RadialKernel kernel(RadialKernel::Type::PolyBump, 1);
    CHECK_THROWS_AS(profile_p(kernel, 7), std::invalid_argument);
    CHECK_THROWS_AS(profile_p(kernel, 4), std::invalid_argument);
    CHECK_NOTHROW(profile_p(kernel, 8));
}

TEST_CASE("transition states hit the pure phases exactly beyond the layer") {
    DensityPtr density = make_modica_mortola(2, 2);
    CompositeJump jump;
    jump.shape = density->shape();
    jump.normal = {1.0, 0.0};
    jump.minus = {-0.6, -0.8};
    jump.plus = {0.6, 0.8};
    const RadialKernel kernel(RadialKernel::Type::SmoothBump, 2);
    const KernelProfile profile = profile_p(kernel);

    double state[2];
    transition_state(profile, jump, -0.5, state);
    CHECK(state[0] == 0.6);
    CHECK(state[1] == 0.8);
    transition_state(profile, jump, -2.0, state);
    CHECK(state[0] == 0.6);
    transition_state(profile, jump, 0.5, state);
    CHECK(state[0] == -0.6);
    CHECK(state[1] == -0.8);
    transition_state(profile, jump, 3.0, state);
    CHECK(state[1] == -0.8);
    transition_state(profile, jump, 0.0, state);
    CHECK(std::fabs(state[0]) <= 1e-6);
    CHECK(std::fabs(state[1]) <= 1e-6);
}

TEST_CASE("limit surface density converges in the quadrature resolution") {
    DensityPtr density = make_modica_mortola(1);
    CompositeJump jump;
    jump.shape = density->shape();
    jump.normal = {1.0};
    jump.minus = {-1.0};
    jump.plus = {1.0};
    const RadialKernel kernel(RadialKernel::Type::SmoothBump, 1);
    const KernelProfile profile = profile_p(kernel);

    const double coarse = limit_surface_density(*density, profile, jump, 2048);
    const double fine = limit_surface_density(*density, profile, jump, 4096);
    CHECK(coarse > 0.0);
    CHECK(std::fabs(coarse - fine) <= 1e-6 * (1.0 + std::fabs(fine)));

    // scaling the jump by zero kills the transition integrand except the well
    CompositeJump flat = jump;
    flat.minus = {1.0};
    flat.plus = {1.0};
    CHECK(limit_surface_density(*density, profile, flat, 2048) ==
          doctest::Approx(0.0).epsilon(1e-12));
}
