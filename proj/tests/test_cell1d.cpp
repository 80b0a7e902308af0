#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "translayer/cell1d.hpp"
#include "translayer/density.hpp"
#include "translayer/kernel.hpp"

using namespace translayer;

namespace {

CompositeJump scalar_jump() {
    CompositeJump jump;
    jump.shape.dim = 1;
    jump.shape.unconstrained_dim = 1;
    jump.normal = {1.0};
    jump.minus = {-1.0};
    jump.plus = {1.0};
    return jump;
}

CompositeJump gradient_jump_2d() {
    // curl-free row jumping along the normal between the unit-circle wells
    CompositeJump jump;
    jump.shape.dim = 2;
    jump.shape.grad_rows = 1;
    jump.normal = {1.0, 0.0};
    jump.minus = {-1.0, 0.0};
    jump.plus = {1.0, 0.0};
    return jump;
}

}  // namespace

TEST_CASE("scalar double-well transition energy reaches the closed form") {
    DensityPtr density = make_modica_mortola(1);
    Cell1dOptions opt;
    opt.grid_n = 1024;
    const E1Result res = optimize_e1(density, scalar_jump(), opt);

    // the reference integrand is quadratic here, so the trapezoid reference
    // carries its own O(h^2) defect of about 4e-8 at the default resolution
    const double exact =
        analytic_e1_modica([](double u) { return (1.0 - u * u) * (1.0 - u * u); },
                           -1.0, 1.0);
    CHECK(exact == doctest::Approx(8.0 / 3.0).epsilon(1e-7));
    const double finer =
        analytic_e1_modica([](double u) { return (1.0 - u * u) * (1.0 - u * u); },
                           -1.0, 1.0, 65536);
    CHECK(finer == doctest::Approx(8.0 / 3.0).epsilon(1e-9));
    CHECK(res.converged);
    CHECK(std::fabs(res.value - 8.0 / 3.0) <= 1e-3);
    CHECK(res.value >= exact - 1e-6);  // discrete minimum sits above the limit
    for (const auto& entry : res.scan) {
        CHECK(entry.converged);
        CHECK(entry.value >= res.value - 1e-12);
    }
    // truncating the window further can only raise the energy
    CHECK(res.scan.front().l == doctest::Approx(1.0));
    CHECK(res.scan.front().value >= res.value - 1e-12);
    // profile endpoints stay pinned and the interior is monotone for this well
    const Profile1D& prof = res.profile;
    CHECK(prof.state.front() == doctest::Approx(-1.0));
    CHECK(prof.state.back() == doctest::Approx(1.0));
}

TEST_CASE("width scan decreases from the full window to the optimum") {
    DensityPtr density = make_modica_mortola(1);
    Cell1dOptions opt;
    opt.grid_n = 512;
    opt.l_grid = {1.0, 0.5, 0.25, 0.125};
    const E1Result res = optimize_e1(density, scalar_jump(), opt);
    REQUIRE(res.scan.size() == 4);
    // window truncation dominates at these widths: strictly better as L shrinks
    CHECK(res.scan[1].value < res.scan[0].value);
    CHECK(res.scan[2].value < res.scan[1].value);
    CHECK(res.scan[3].value < res.scan[2].value);
    CHECK(res.l_star == doctest::Approx(0.125));
}

TEST_CASE("objective gradient matches finite differences") {
    DensityPtr density = make_modica_mortola(2);
    CompositeJump jump;
    jump.shape.dim = 2;
    jump.shape.unconstrained_dim = 1;
    jump.normal = {0.8, 0.6};
    jump.minus = {-1.0};
    jump.plus = {1.0};
    Cell1dOptions opt;
    opt.grid_n = 128;
    Cell1dProblem problem(density, jump, 0.25, opt);

    std::mt19937 rng(31);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    std::vector<double> x(static_cast<std::size_t>(problem.dof_count()));
    for (double& v : x) v = u(rng);
    std::vector<double> grad(x.size(), 0.0);
    const double f0 = problem.value_and_grad(x, grad);
    CHECK(f0 == doctest::Approx(problem.value(x)).epsilon(1e-14));

    const double h = 1e-6;
    std::uniform_int_distribution<int> pick(0, problem.dof_count() - 1);
    for (int trial = 0; trial < 24; ++trial) {
        const int i = pick(rng);
        std::vector<double> xp = x, xm = x;
        xp[static_cast<std::size_t>(i)] += h;
        xm[static_cast<std::size_t>(i)] -= h;
        const double fd = (problem.value(xp) - problem.value(xm)) / (2.0 * h);
        CHECK(std::fabs(fd - grad[static_cast<std::size_t>(i)]) <=
              1e-5 * (1.0 + std::fabs(fd)));
    }
}

TEST_CASE("curl-free parametrization reconstructs rank-one increments") {
    DensityPtr density = make_aviles_giga(2);
    CompositeJump jump = gradient_jump_2d();
    Cell1dOptions opt;
    opt.grid_n = 128;
    Cell1dProblem problem(density, jump, 0.5, opt);
    CHECK(problem.dof_per_node() == 1);

    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    std::vector<double> x(static_cast<std::size_t>(problem.dof_count()));
    for (double& v : x) v = u(rng);
    const auto nodes = problem.reconstruct(x);
    const int ns = jump.shape.state_size();
    REQUIRE(static_cast<int>(nodes.size()) == (opt.grid_n + 1) * ns);
    // every nodal state must lie on minus + t*(plus-minus) + span(nu x nu row)
    for (int j = 0; j <= opt.grid_n; ++j) {
        const double* st = nodes.data() + static_cast<std::size_t>(j) * ns;
        // second component never moves: increments are multiples of nu = e0
        CHECK(std::fabs(st[1]) <= 1e-14);
    }
    CHECK(nodes[0] == doctest::Approx(-1.0));
    CHECK(nodes[static_cast<std::size_t>(opt.grid_n) * ns] == doctest::Approx(1.0));
}

TEST_CASE("gradient-well profile matches the scalar reduction") {
    // along the rank-one direction the vector problem reduces to the scalar one
    DensityPtr density = make_aviles_giga(2);
    Cell1dOptions opt;
    opt.grid_n = 512;
    const E1Result res = optimize_e1(density, gradient_jump_2d(), opt);
    CHECK(res.converged);
    CHECK(std::fabs(res.value - 8.0 / 3.0) <= 2e-3);
}

TEST_CASE("second-order densities use the bending slot") {
    CompositeShape shape;
    shape.dim = 1;
    shape.unconstrained_dim = 1;
    PolynomialTerm bend;
    bend.coeff = 1.0;
    bend.factors = {{kSlotD2, 0, 2}};
    PolynomialTerm c0, c2, c4;
    c0.coeff = 1.0;
    c2.coeff = -2.0;
    c2.factors = {{kSlotValue, 0, 2}};
    c4.coeff = 1.0;
    c4.factors = {{kSlotValue, 0, 4}};
    DensityPtr density = make_polynomial(shape, 2, {bend, c0, c2, c4}, "bending");

    Cell1dOptions opt;
    opt.grid_n = 256;
    opt.l_grid = {1.0, 0.5, 0.25};
    const E1Result res = optimize_e1(density, scalar_jump(), opt);
    CHECK(res.converged);
    CHECK(res.value > 0.0);

    // finite differences agree with the assembled gradient on this path too
    Cell1dProblem problem(density, scalar_jump(), 0.5, opt);
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    std::vector<double> x(static_cast<std::size_t>(problem.dof_count()));
    for (double& v : x) v = u(rng);
    std::vector<double> grad(x.size(), 0.0);
    problem.value_and_grad(x, grad);
    const double h = 1e-6;
    for (int i : {0, 7, 63, problem.dof_count() - 1}) {
        std::vector<double> xp = x, xm = x;
        xp[static_cast<std::size_t>(i)] += h;
        xm[static_cast<std::size_t>(i)] -= h;
        const double fd = (problem.value(xp) - problem.value(xm)) / (2.0 * h);
        CHECK(std::fabs(fd - grad[static_cast<std::size_t>(i)]) <=
              1e-5 * (1.0 + std::fabs(fd)));
    }
}

TEST_CASE("preconditioner application is symmetric positive definite") {
    DensityPtr density = make_modica_mortola(1);
    Cell1dOptions opt;
    opt.grid_n = 256;
    Cell1dProblem problem(density, scalar_jump(), 0.25, opt);
    auto precond = problem.preconditioner();
    REQUIRE(precond);

    const std::size_t n = static_cast<std::size_t>(problem.dof_count());
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto apply = [&](const std::vector<double>& v) {
        std::vector<double> out = v;
        precond(out);
        return out;
    };
    for (int trial = 0; trial < 8; ++trial) {
        std::vector<double> a(n), b(n);
        for (double& v : a) v = u(rng);
        for (double& v : b) v = u(rng);
        const auto pa = apply(a), pb = apply(b);
        double apb = 0.0, bpa = 0.0, apa = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            apb += a[i] * pb[i];
            bpa += b[i] * pa[i];
            apa += a[i] * pa[i];
        }
        CHECK(std::fabs(apb - bpa) <= 1e-10 * (1.0 + std::fabs(apb)));
        CHECK(apa > 0.0);
    }
}

TEST_CASE("coarse minimizers compress into finer-width warm starts") {
    DensityPtr density = make_modica_mortola(1);
    Cell1dOptions opt;
    opt.grid_n = 256;
    opt.l_grid = {0.5};
    const E1Result coarse = optimize_e1(density, scalar_jump(), opt);

    Cell1dProblem fine(density, scalar_jump(), 0.25, opt);
    Cell1dProblem coarse_problem(density, scalar_jump(), 0.5, opt);
    // rebuild the coarse minimizer dofs by re-optimizing once
    LbfgsOptions solver;
    std::vector<double> x0(static_cast<std::size_t>(coarse_problem.dof_count()), 0.0);
    auto lr = lbfgs_minimize(
        [&](const std::vector<double>& x, std::vector<double>& g) {
            return coarse_problem.value_and_grad(x, g);
        },
        x0, solver);
    CHECK(lr.value == doctest::Approx(coarse.value).epsilon(1e-6));

    const auto warm = fine.compress_from(lr.x, 2.0);
    REQUIRE(static_cast<int>(warm.size()) == fine.dof_count());
    CHECK(std::isfinite(fine.value(warm)));
    CHECK_THROWS_AS(fine.compress_from(lr.x, 0.5), std::invalid_argument);

    // squeezing maps a node at position s to the coarse deviation at 2s and
    // zeroes everything the compressed position pushes out of the cell
    std::vector<double> ones(static_cast<std::size_t>(coarse_problem.dof_count()), 1.0);
    const auto squeezed = fine.compress_from(ones, 2.0);
    const int n = opt.grid_n;
    for (int j = 1; j < n; ++j) {
        const double pos = 2.0 * (-0.5 + static_cast<double>(j) / n);
        const double expect = (std::fabs(pos) < 0.5 - 1e-12) ? 1.0 : 0.0;
        CHECK(squeezed[static_cast<std::size_t>(j - 1)] ==
              doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("kernel backbone ramps reach the same transition energy") {
    DensityPtr density = make_modica_mortola(1);
    const RadialKernel kernel(RadialKernel::Type::SmoothBump, 1);
    const KernelProfile profile = profile_p(kernel);
    Cell1dOptions opt;
    opt.grid_n = 512;
    opt.ramp = RampKind::KernelBackbone;
    opt.backbone = &profile;
    const E1Result res = optimize_e1(density, scalar_jump(), opt);
    CHECK(res.converged);
    CHECK(std::fabs(res.value - 8.0 / 3.0) <= 1e-3);

    Cell1dOptions missing = opt;
    missing.backbone = nullptr;
    CHECK_THROWS_AS(optimize_e1(density, scalar_jump(), missing),
                    std::invalid_argument);
}

TEST_CASE("clamping the extra node is a restriction, never an improvement") {
    DensityPtr density = make_modica_mortola(1);
    Cell1dOptions relaxed;
    relaxed.grid_n = 512;
    Cell1dOptions clamped = relaxed;
    clamped.clamp_extra_node = true;
    const E1Result a = optimize_e1(density, scalar_jump(), relaxed);
    const E1Result b = optimize_e1(density, scalar_jump(), clamped);
    CHECK(b.value >= a.value - 1e-10);
    CHECK(std::fabs(a.value - b.value) <= 1e-3);
}

TEST_CASE("inadmissible jump data is rejected up front") {
    DensityPtr mm = make_modica_mortola(1);
    CompositeJump jump = scalar_jump();
    jump.normal = {2.0};
    CHECK_THROWS_AS(check_jump_admissible(*mm, jump), std::invalid_argument);

    jump = scalar_jump();
    jump.plus = {0.5};  // off the zero set
    CHECK_THROWS_AS(check_jump_admissible(*mm, jump), std::invalid_argument);

    // curl block: jump must be parallel to the normal
    DensityPtr ag = make_aviles_giga(2);
    CompositeJump bad = gradient_jump_2d();
    bad.minus = {0.0, -1.0};
    bad.plus = {0.0, 1.0};  // jump along the tangent: not rank-one with nu
    CHECK_THROWS_AS(check_jump_admissible(*ag, bad), std::invalid_argument);

    // div block: normal trace must be continuous
    CompositeShape shape;
    shape.dim = 2;
    shape.divfree_rows = 1;
    auto terms = two_well_terms_on_block(shape, 1, {0.0, -1.0}, {0.0, 1.0});
    auto pen = grad_penalty_terms_on_block(shape, 1);
    terms.insert(terms.end(), pen.begin(), pen.end());
    DensityPtr divwell = make_polynomial(shape, 1, terms, "div_well");
    CompositeJump div_jump;
    div_jump.shape = shape;
    div_jump.normal = {1.0, 0.0};
    div_jump.minus = {0.0, -1.0};
    div_jump.plus = {0.0, 1.0};
    CHECK_NOTHROW(check_jump_admissible(*divwell, div_jump));
    CompositeJump div_bad = div_jump;
    div_bad.minus = {-1.0, 0.0};
    div_bad.plus = {1.0, 0.0};  // normal trace jumps
    CHECK_THROWS_AS(check_jump_admissible(*divwell, div_bad), std::invalid_argument);

    // resolutions below the supported range are refused
    Cell1dOptions opt;
    opt.grid_n = 64;
    CHECK_THROWS_AS(Cell1dProblem(mm, scalar_jump(), 0.5, opt),
                    std::invalid_argument);
}
