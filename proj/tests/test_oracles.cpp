#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "translayer/cell1d.hpp"
#include "translayer/density.hpp"
#include "translayer/oracles.hpp"

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

}  // namespace

TEST_CASE("pass predicate uses an absolute-plus-relative band") {
    CHECK(oracle_pass(10.0, 10.01, 1e-3));
    CHECK(!oracle_pass(10.0, 10.02, 1e-3));
    CHECK(oracle_pass(0.0, 5e-4, 1e-3));
    CHECK(!oracle_pass(0.0, 2e-3, 1e-3));
    const OracleReport r = make_report("x", 1.0, 1.001, 1e-3, 0.5);
    CHECK(r.pass);
    CHECK(r.name == "x");
    CHECK(r.runtime_seconds == doctest::Approx(0.5));
}

TEST_CASE("independent path descent reproduces the scalar transition energy") {
    DensityPtr density = make_modica_mortola(1);
    const double ref = brute_force_e1(density, scalar_jump(), 4096, 24.0);
    CHECK(std::fabs(ref - 8.0 / 3.0) <= 1e-3);

    Cell1dOptions opt;
    opt.grid_n = 1024;
    const E1Result res = optimize_e1(density, scalar_jump(), opt);
    CHECK(oracle_pass(ref, res.value, 1e-3));
}

TEST_CASE("descent handles constrained blocks through projection") {
    // gradient-well jump along the normal reduces to the scalar problem
    DensityPtr density = make_aviles_giga(2);
    CompositeJump jump;
    jump.shape = density->shape();
    jump.normal = {1.0, 0.0};
    jump.minus = {-1.0, 0.0};
    jump.plus = {1.0, 0.0};
    const double ref = brute_force_e1(density, jump, 4096, 16.0);
    CHECK(std::fabs(ref - 8.0 / 3.0) <= 5e-3);

    Cell1dOptions opt;
    opt.grid_n = 512;
    const E1Result res = optimize_e1(density, jump, opt);
    CHECK(oracle_pass(ref, res.value, 5e-3));
}

TEST_CASE("a cliff the line search cannot scale is reported, not masked") {
    // 1e60 * u^2 (1-u)^2: wells at 0 and 1 cancel exactly in small integers,
    // but interior gradients ~1e60 exhaust the backtracking budget
    CompositeShape shape;
    shape.dim = 1;
    shape.unconstrained_dim = 1;
    const double c = 1e60;
    PolynomialTerm q2, q3, q4, pen;
    q2.coeff = c;
    q2.factors = {{kSlotValue, 0, 2}};
    q3.coeff = -2.0 * c;
    q3.factors = {{kSlotValue, 0, 3}};
    q4.coeff = c;
    q4.factors = {{kSlotValue, 0, 4}};
    pen.coeff = 1.0;
    pen.factors = {{kSlotD1, 0, 2}};
    DensityPtr density = make_polynomial(shape, 1, {q2, q3, q4, pen}, "cliff");
    CompositeJump jump;
    jump.shape = shape;
    jump.normal = {1.0};
    jump.minus = {0.0};
    jump.plus = {1.0};
    CHECK_THROWS_AS(brute_force_e1(density, jump, 4096, 16.0, 100, 1.0),
                    std::runtime_error);
}

TEST_CASE("finite-difference audit accepts correct gradients") {
    ObjectiveFn quadratic = [](const std::vector<double>& x,
                               std::vector<double>& g) {
        double f = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double w = 1.0 + static_cast<double>(i);
            f += 0.5 * w * x[i] * x[i];
            g[i] = w * x[i];
        }
        return f;
    };
    const std::vector<double> point = {0.3, -0.7, 1.1};
    const OracleReport ok = fd_gradient_check(quadratic, point, 1e-6);
    CHECK(ok.pass);
    CHECK(ok.test_value <= 1e-7);
}

TEST_CASE("finite-difference audit rejects a wrong gradient") {
    ObjectiveFn broken = [](const std::vector<double>& x,
                            std::vector<double>& g) {
        double f = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            f += 0.5 * x[i] * x[i];
            g[i] = 1.5 * x[i];  // off by half
        }
        return f;
    };
    const std::vector<double> point = {0.5, -0.25};
    const OracleReport bad = fd_gradient_check(broken, point, 1e-6);
    CHECK(!bad.pass);
    CHECK(bad.test_value > 0.1);
}

TEST_CASE("reconstruction identities hold on random coefficients") {
    const OracleReport r = operator_self_test(32, 3);
    INFO("worst violation ", r.test_value);
    CHECK(r.pass);
    CHECK(r.test_value <= 1e-9);
}
