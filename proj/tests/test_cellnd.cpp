#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "translayer/cell1d.hpp"
#include "translayer/cellnd.hpp"
#include "translayer/config.hpp"
#include "translayer/density.hpp"

using namespace translayer;

namespace {

std::string config_path(const std::string& name) {
    return std::string(TL_CONFIG_DIR) + "/" + name;
}

CompositeJump scalar_axis_jump() {
    CompositeJump jump;
    jump.shape.dim = 2;
    jump.shape.unconstrained_dim = 1;
    jump.normal = {1.0, 0.0};
    jump.minus = {-1.0};
    jump.plus = {1.0};
    return jump;
}

CompositeJump bundled_jump(const std::string& field_name) {
    const FieldBundle bundle = load_field_file(config_path(field_name));
    const auto& iface = bundle.field.interfaces[0];
    std::vector<double> u(iface.u_min.size());
    for (std::size_t a = 0; a < u.size(); ++a)
        u[a] = 0.5 * (iface.u_min[a] + iface.u_max[a]);
    return trace_pair(bundle.field, 0, u);
}

DensityPtr bundled_density(const std::string& field_name) {
    return load_field_file(config_path(field_name)).density;
}

std::vector<double> random_dofs(const CellndProblem& problem, unsigned seed,
                                double amp) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-amp, amp);
    std::vector<double> x(static_cast<std::size_t>(problem.dof_count()));
    for (double& v : x) v = u(rng);
    return x;
}

}  // namespace

TEST_CASE("periodic cell never beats the matched 1D optimum") {
    DensityPtr density = make_modica_mortola(2);
    CellndOptions opt;
    opt.normal_cells = 24;
    opt.tangential_cells = 8;
    opt.l_grid = {0.25};
    const auto basis = LatticeBasis::orthonormal({1.0, 0.0});
    const EPerResult res = optimize_eper(density, scalar_axis_jump(), basis, opt);
    CHECK(res.converged);
    CHECK(res.e1_gap <= 1e-6 * (1.0 + std::fabs(res.e1_value)));
    // for this well the optimum is a pure profile: no tangential structure
    CHECK(res.value == doctest::Approx(res.e1_value).epsilon(1e-9));
    CHECK(res.perturbation_norm <= 1e-6);
    CHECK(res.l_star == doctest::Approx(0.25));
    REQUIRE(res.scan.size() == 1);
    REQUIRE(res.line_scan.size() == 1);
    CHECK(res.scan[0].converged);
}

TEST_CASE("cell objective gradients match finite differences") {
    struct Case {
        const char* field;
        const char* normal_label;
    };
    for (const char* name : {"mm_scalar_tilted.field", "twowell_axis.field",
                             "divfree_poly.field"}) {
        INFO("field: ", name);
        DensityPtr density = bundled_density(name);
        const CompositeJump jump = bundled_jump(name);
        const auto basis = LatticeBasis::orthonormal(jump.normal);
        CellndOptions opt;
        opt.normal_cells = 16;
        opt.tangential_cells = 4;
        CellndProblem problem(density, jump, basis, 0.25, opt);

        auto x = random_dofs(problem, 91, 0.05);
        std::vector<double> grad(x.size(), 0.0);
        const double f0 = problem.value_and_grad(x, grad);
        CHECK(f0 == doctest::Approx(problem.value(x)).epsilon(1e-14));

        std::mt19937 rng(5);
        std::uniform_int_distribution<int> pick(0, problem.dof_count() - 1);
        const double h = 1e-6;
        for (int trial = 0; trial < 12; ++trial) {
            const int i = pick(rng);
            std::vector<double> xp = x, xm = x;
            xp[static_cast<std::size_t>(i)] += h;
            xm[static_cast<std::size_t>(i)] -= h;
            const double fd = (problem.value(xp) - problem.value(xm)) / (2.0 * h);
            CHECK(std::fabs(fd - grad[static_cast<std::size_t>(i)]) <=
                  1e-5 * (1.0 + std::fabs(fd)));
        }
    }
}

TEST_CASE("reconstructed slots satisfy the block constraints identically") {
    for (const char* name : {"ag_tilted.field", "divfree_poly.field", "mm_3d.field"}) {
        INFO("field: ", name);
        DensityPtr density = bundled_density(name);
        const CompositeJump jump = bundled_jump(name);
        const auto basis = LatticeBasis::orthonormal(jump.normal);
        CellndOptions opt;
        opt.normal_cells = 16;
        opt.tangential_cells = 4;
        CellndProblem problem(density, jump, basis, 0.5, opt);
        for (unsigned seed : {1u, 2u}) {
            const auto x = random_dofs(problem, seed, 0.3);
            const ConstraintResiduals res = problem.constraint_residuals(x);
            CHECK(res.max_curl <= 1e-12);
            CHECK(res.max_div <= 1e-12);
        }
    }
}

TEST_CASE("line-problem coefficients broadcast to the same cell value") {
    DensityPtr density = bundled_density("twowell_axis.field");
    const CompositeJump jump = bundled_jump("twowell_axis.field");
    const auto basis = LatticeBasis::orthonormal(jump.normal);
    CellndOptions line_opt;
    line_opt.normal_cells = 16;
    line_opt.tangential_cells = 1;
    CellndProblem line(density, jump, basis, 0.25, line_opt);
    CellndOptions full_opt = line_opt;
    full_opt.tangential_cells = 6;
    CellndProblem full(density, jump, basis, 0.25, full_opt);

    const auto x_line = random_dofs(line, 77, 0.1);
    const auto x_full = full.broadcast(line, x_line);
    CHECK(full.value(x_full) == doctest::Approx(line.value(x_line)).epsilon(1e-12));
    CHECK(full.perturbation_norm(x_full) <= 1e-12);
}

TEST_CASE("sampled cell fields are periodic and clamp to the pure phases") {
    DensityPtr density = make_modica_mortola(2);
    CellndOptions opt;
    opt.normal_cells = 16;
    opt.tangential_cells = 4;
    opt.l_grid = {0.5};
    const auto basis = LatticeBasis::orthonormal({0.8, 0.6});
    CompositeJump jump = scalar_axis_jump();
    jump.normal = {0.8, 0.6};
    const EPerResult res = optimize_eper(density, jump, basis, opt);
    const CellSampler sampler(res.profile);

    const int ns = res.profile.shape.state_size();
    std::vector<double> a(static_cast<std::size_t>(ns)), b(static_cast<std::size_t>(ns));
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int trial = 0; trial < 16; ++trial) {
        double s[2] = {u(rng), u(rng)};
        double sp[2] = {s[0], s[1] + 1.0};  // one tangential period
        sampler.state(s, a.data());
        sampler.state(sp, b.data());
        for (int c = 0; c < ns; ++c)
            CHECK(a[static_cast<std::size_t>(c)] ==
                  doctest::Approx(b[static_cast<std::size_t>(c)]).epsilon(1e-12));
    }
    // beyond the layer the state equals the one-sided phases exactly
    double left[2] = {-0.75, 0.3};
    double right[2] = {0.75, -0.4};
    sampler.state(left, a.data());
    CHECK(a[0] == doctest::Approx(-1.0).epsilon(1e-14));
    sampler.state(right, a.data());
    CHECK(a[0] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("tangential spanning sets do not change the cell energy") {
    DensityPtr density = make_modica_mortola(2);
    CompositeJump jump = scalar_axis_jump();
    jump.normal = {0.8, 0.6};
    const auto basis_a = LatticeBasis::orthonormal(jump.normal);
    const auto basis_b = basis_a.dilated(2);
    CellndOptions opt;
    opt.normal_cells = 24;
    opt.tangential_cells = 6;
    opt.l_grid = {0.25};
    const BasisInvarianceReport rep =
        basis_invariance_check(density, jump, basis_a, basis_b, opt);
    CHECK(rep.conclusive);
    CHECK(rep.within);
    CHECK(std::fabs(rep.value_a - rep.value_b) <= rep.tolerance);
}

TEST_CASE("halving the width cannot raise the optimum") {
    DensityPtr density = make_modica_mortola(2);
    const auto basis = LatticeBasis::orthonormal({1.0, 0.0});
    CellndOptions opt;
    opt.normal_cells = 24;
    opt.tangential_cells = 4;
    const RlEquivalenceReport rep =
        r_l_equivalence_check(density, scalar_axis_jump(), basis, opt, 0.25, 2);
    CHECK(rep.k == 2);
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.rows[0].l == doctest::Approx(0.5));
    CHECK(rep.rows[1].l == doctest::Approx(0.25));
    CHECK(rep.ordering_ok);
    CHECK(rep.cross_class_ok);
    for (const auto& row : rep.rows) {
        CHECK(row.converged);
        CHECK(row.cross_gap <= rep.cross_tolerance);
    }
}

TEST_CASE("kicked restarts cannot drive the reported gap negative") {
    DensityPtr density = bundled_density("twowell_axis.field");
    const CompositeJump jump = bundled_jump("twowell_axis.field");
    const auto basis = LatticeBasis::orthonormal(jump.normal);
    CellndOptions opt;
    opt.normal_cells = 16;
    opt.tangential_cells = 4;
    opt.l_grid = {0.25};
    opt.kick_seed = 12345;
    const GapSearchReport rep = gap_search(density, jump, basis, opt);
    REQUIRE(rep.rows.size() == 1);
    CHECK(rep.gap >= -1e-6);
    CHECK(rep.rows[0].best <= rep.rows[0].eper + 1e-12);
    CHECK(rep.seed == 12345);
}

TEST_CASE("side data reaches the density on the correct side") {
    DensityPtr density = bundled_density("inhom_poly.field");
    const CompositeJump jump = bundled_jump("inhom_poly.field");
    REQUIRE(!jump.f_minus.empty());
    CHECK(jump.f_minus != jump.f_plus);
    const auto basis = LatticeBasis::orthonormal(jump.normal);
    CellndOptions opt;
    opt.normal_cells = 16;
    opt.tangential_cells = 4;
    opt.l_grid = {0.5, 0.25};
    const EPerResult res = optimize_eper(density, jump, basis, opt);
    CHECK(res.converged);
    CHECK(res.value > 0.0);
    CHECK(res.e1_gap <= 1e-6 * (1.0 + std::fabs(res.e1_value)));
}

TEST_CASE("coarse-width minimizers compress into admissible warm starts") {
    DensityPtr density = make_modica_mortola(2);
    const auto basis = LatticeBasis::orthonormal({1.0, 0.0});
    CellndOptions opt;
    opt.normal_cells = 16;
    opt.tangential_cells = 4;
    CellndProblem coarse(density, scalar_axis_jump(), basis, 0.5, opt);
    CellndProblem fine(density, scalar_axis_jump(), basis, 0.25, opt);
    const auto xc = random_dofs(coarse, 3, 0.2);
    const auto xf = fine.compress_from(coarse, xc, 2);
    REQUIRE(static_cast<int>(xf.size()) == fine.dof_count());
    const ConstraintResiduals res = fine.constraint_residuals(xf);
    CHECK(res.max_curl <= 1e-12);
    CHECK(res.max_div <= 1e-12);
    CHECK(std::isfinite(fine.value(xf)));
}

TEST_CASE("lattice bases validate, permute, dilate, and shear") {
    auto basis = LatticeBasis::orthonormal({0.6, 0.0, 0.8});
    CHECK(basis.tangents.size() == 2);
    CHECK_NOTHROW(basis.validate());

    auto permuted = basis.permuted({1, 0});
    CHECK(permuted.tangents[0] == basis.tangents[1]);
    CHECK(permuted.tangents[1] == basis.tangents[0]);
    CHECK_THROWS_AS(basis.permuted({0, 0}), std::invalid_argument);

    auto dilated = basis.dilated(3);
    for (std::size_t a = 0; a < 3; ++a)
        CHECK(dilated.tangents[0][a] == doctest::Approx(3.0 * basis.tangents[0][a]));
    CHECK_THROWS_AS(basis.dilated(0), std::invalid_argument);

    auto sheared = basis.sheared();
    for (std::size_t a = 0; a < 3; ++a)
        CHECK(sheared.tangents[0][a] ==
              doctest::Approx(basis.tangents[0][a] + basis.tangents[1][a]));

    auto flat = LatticeBasis::orthonormal({1.0, 0.0});
    CHECK_THROWS_AS(flat.sheared(), std::invalid_argument);

    LatticeBasis degenerate = basis;
    degenerate.tangents[1] = degenerate.tangents[0];
    CHECK_THROWS_AS(degenerate.validate(), std::invalid_argument);

    // resolution guards
    DensityPtr density = make_modica_mortola(2);
    CellndOptions opt;
    opt.normal_cells = 10;  // below the floor
    auto basis2 = LatticeBasis::orthonormal({1.0, 0.0});
    CHECK_THROWS_AS(CellndProblem(density, scalar_axis_jump(), basis2, 0.5, opt),
                    std::invalid_argument);
}
