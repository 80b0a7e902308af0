#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "translayer/density.hpp"

using namespace translayer;

namespace {

// Central-difference check of add_grad against eval for every non-null slot.
void check_gradient(const DensityPtr& f, const std::vector<double>& value,
                    const std::vector<double>& d1, const std::vector<double>& d2,
                    const std::vector<double>& inhom, double tol) {
    const CompositeShape& shape = f->shape();
    const int ns = shape.state_size();
    const int dim = shape.dim;
    std::vector<double> v = value, g1 = d1, g2 = d2;
    std::vector<double> gv(v.size(), 0.0), gg1(g1.size(), 0.0), gg2(g2.size(), 0.0);
    SlotView at{f->order() >= 2 ? g2.data() : nullptr, g1.data(), v.data(),
                inhom.empty() ? nullptr : inhom.data()};
    SlotGrad out{f->order() >= 2 ? gg2.data() : nullptr, gg1.data(), gv.data()};
    f->add_grad(at, 1.0, out);

    const double h = 1e-5;
    auto probe = [&](std::vector<double>& slot, int i, double analytic) {
        const double save = slot[i];
        slot[i] = save + h;
        const double fp = f->eval(at);
        slot[i] = save - h;
        const double fm = f->eval(at);
        slot[i] = save;
        const double fd = (fp - fm) / (2.0 * h);
        CHECK(std::fabs(fd - analytic) <= tol * (1.0 + std::fabs(fd)));
    };
    for (int i = 0; i < ns; ++i) probe(v, i, gv[static_cast<std::size_t>(i)]);
    for (int i = 0; i < ns * dim; ++i) probe(g1, i, gg1[static_cast<std::size_t>(i)]);
    if (f->order() >= 2)
        for (int i = 0; i < ns * dim * dim; ++i)
            probe(g2, i, gg2[static_cast<std::size_t>(i)]);
}

std::vector<double> random_vector(std::mt19937& rng, std::size_t n, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<double> out(n);
    for (double& x : out) x = u(rng);
    return out;
}

}  // namespace

TEST_CASE("scalar double well evaluates and differentiates exactly") {
    DensityPtr f = make_modica_mortola(2);
    const CompositeShape& shape = f->shape();
    CHECK(shape.dim == 2);
    CHECK(shape.grad_rows == 0);
    CHECK(shape.divfree_rows == 0);
    CHECK(shape.unconstrained_dim == 1);
    CHECK(f->order() == 1);
    CHECK(f->max_total_degree() == 4);

    // F = |d1|^2 + (1 - u^2)^2 at u = 0.5, d1 = (0.3, -0.4).
    std::vector<double> value = {0.5};
    std::vector<double> d1 = {0.3, -0.4};
    SlotView at{nullptr, d1.data(), value.data(), nullptr};
    const double expect = 0.09 + 0.16 + (1.0 - 0.25) * (1.0 - 0.25);
    CHECK(f->eval(at) == doctest::Approx(expect).epsilon(1e-14));

    // analytic dF/du = -4u(1 - u^2), dF/d(d1) = 2 d1
    std::vector<double> gv = {0.0}, g1 = {0.0, 0.0};
    SlotGrad out{nullptr, g1.data(), gv.data()};
    f->add_grad(at, 2.0, out);
    CHECK(gv[0] == doctest::Approx(2.0 * (-4.0 * 0.5 * 0.75)).epsilon(1e-14));
    CHECK(g1[0] == doctest::Approx(2.0 * 2.0 * 0.3).epsilon(1e-14));
    CHECK(g1[1] == doctest::Approx(2.0 * 2.0 * -0.4).epsilon(1e-14));

    const double plus = 1.0, minus = -1.0, off = 0.2;
    CHECK(f->on_zero_set(&plus, nullptr));
    CHECK(f->on_zero_set(&minus, nullptr));
    CHECK(!f->on_zero_set(&off, nullptr));
    CHECK(f->well_value(&off, nullptr) ==
          doctest::Approx((1.0 - 0.04) * (1.0 - 0.04)).epsilon(1e-14));
}

TEST_CASE("vector well uses the squared-norm order parameter") {
    DensityPtr f = make_modica_mortola(2, 2);
    CHECK(f->shape().unconstrained_dim == 2);
    std::vector<double> value = {0.6, 0.8};  // on the unit circle
    CHECK(f->on_zero_set(value.data(), nullptr));
    std::vector<double> d1(4, 0.0);
    SlotView at{nullptr, d1.data(), value.data(), nullptr};
    CHECK(f->eval(at) == doctest::Approx(0.0).epsilon(1e-14));

    std::mt19937 rng(17);
    auto v = random_vector(rng, 2, 0.9);
    auto g = random_vector(rng, 4, 0.7);
    check_gradient(f, v, g, {}, {}, 1e-7);
}

TEST_CASE("gradient-field well lives on a curl-free block") {
    DensityPtr f = make_aviles_giga(2);
    const CompositeShape& shape = f->shape();
    CHECK(shape.grad_rows == 1);
    CHECK(shape.unconstrained_dim == 0);
    CHECK(shape.state_size() == 2);
    CHECK(shape.kind_of(0) == ConstraintKind::CurlFree);
    CHECK(f->order() == 1);

    // F = |d1|^2 + (1 - |z|^2)^2 with z the gradient row.
    std::vector<double> value = {0.6, -0.8};
    std::vector<double> d1(4, 0.0);
    d1[0] = 0.5;
    SlotView at{nullptr, d1.data(), value.data(), nullptr};
    CHECK(f->eval(at) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(f->on_zero_set(value.data(), nullptr));

    std::mt19937 rng(3);
    auto v = random_vector(rng, 2, 1.2);
    auto g = random_vector(rng, 4, 0.8);
    check_gradient(f, v, g, {}, {}, 1e-7);
}

TEST_CASE("two-gradient well requires a rank-one connection") {
    // a - b = (2, 1) x (1, 0.5): rank one, admissible.
    std::vector<double> a = {1.0, 0.5, 2.0, 1.0};
    std::vector<double> b = {-1.0, -0.5, 0.0, 0.0};
    DensityPtr f = make_two_gradient_well(2, 2, a, b);
    CHECK(f->shape().grad_rows == 2);
    CHECK(f->on_zero_set(a.data(), nullptr));
    CHECK(f->on_zero_set(b.data(), nullptr));

    std::vector<double> mid = {0.0, 0.0, 1.0, 0.5};
    const double da = 1.0 + 0.25 + 1.0 + 0.25;
    const double db = 1.0 + 0.25 + 1.0 + 0.25;
    CHECK(f->well_value(mid.data(), nullptr) == doctest::Approx(da * db).epsilon(1e-13));

    std::mt19937 rng(11);
    auto v = random_vector(rng, 4, 1.5);
    auto g = random_vector(rng, 8, 0.6);
    check_gradient(f, v, g, {}, {}, 1e-6);

    // full-rank difference must be rejected
    std::vector<double> bad_b = {0.0, 0.5, 2.0, 0.0};
    CHECK_THROWS_AS(make_two_gradient_well(2, 2, a, bad_b), std::invalid_argument);
}

TEST_CASE("polynomial densities evaluate monomials across slots") {
    CompositeShape shape;
    shape.dim = 2;
    shape.unconstrained_dim = 1;
    shape.inhom_dim = 1;
    // F = 3 u^2 f + d1_x^4  (nonnegative for f >= 0 samples? use f^2 instead)
    std::vector<PolynomialTerm> terms;
    PolynomialTerm t1;
    t1.coeff = 3.0;
    t1.factors = {{kSlotValue, 0, 2}, {kSlotInhom, 0, 2}};
    PolynomialTerm t2;
    t2.coeff = 1.0;
    t2.factors = {{kSlotD1, 0, 4}};
    terms = {t1, t2};
    DensityPtr f = make_polynomial(shape, 1, terms, "mixed");
    CHECK(f->name() == "mixed");
    CHECK(f->max_total_degree() == 4);

    std::vector<double> value = {0.5};
    std::vector<double> d1 = {2.0, -1.0};
    std::vector<double> inhom = {3.0};
    SlotView at{nullptr, d1.data(), value.data(), nullptr};
    CHECK(f->eval(at) == doctest::Approx(16.0).epsilon(1e-14));  // inhom null = zero
    SlotView at2{nullptr, d1.data(), value.data(), inhom.data()};
    CHECK(f->eval(at2) == doctest::Approx(3.0 * 0.25 * 9.0 + 16.0).epsilon(1e-14));

    std::mt19937 rng(29);
    auto v = random_vector(rng, 1, 1.0);
    auto g = random_vector(rng, 2, 1.0);
    check_gradient(f, v, g, {}, {0.7}, 1e-6);
}

TEST_CASE("negative polynomial samples are rejected") {
    CompositeShape shape;
    shape.dim = 1;
    shape.unconstrained_dim = 1;
    PolynomialTerm t;
    t.coeff = -1.0;
    t.factors = {{kSlotValue, 0, 2}};
    CHECK_THROWS_AS(make_polynomial(shape, 1, {t}, "neg"), std::invalid_argument);
}

TEST_CASE("second-order polynomial exposes a d2 slot") {
    CompositeShape shape;
    shape.dim = 1;
    shape.unconstrained_dim = 1;
    // F = d2^2 + (1 - u^2)^2
    PolynomialTerm bend;
    bend.coeff = 1.0;
    bend.factors = {{kSlotD2, 0, 2}};
    PolynomialTerm c0, c2, c4;
    c0.coeff = 1.0;
    c2.coeff = -2.0;
    c2.factors = {{kSlotValue, 0, 2}};
    c4.coeff = 1.0;
    c4.factors = {{kSlotValue, 0, 4}};
    DensityPtr f = make_polynomial(shape, 2, {bend, c0, c2, c4}, "bending");
    CHECK(f->order() == 2);
    CHECK(f->max_total_degree() == 4);

    std::vector<double> value = {0.3};
    std::vector<double> d1 = {0.0};
    std::vector<double> d2 = {1.5};
    SlotView at{d2.data(), d1.data(), value.data(), nullptr};
    const double w = (1.0 - 0.09) * (1.0 - 0.09);
    CHECK(f->eval(at) == doctest::Approx(2.25 + w).epsilon(1e-13));

    std::mt19937 rng(5);
    auto v = random_vector(rng, 1, 0.8);
    auto g1 = random_vector(rng, 1, 0.8);
    auto g2 = random_vector(rng, 1, 0.8);
    check_gradient(f, v, g1, g2, {}, 1e-6);
}

TEST_CASE("term builders reproduce the closed-form pieces") {
    CompositeShape shape;
    shape.dim = 2;
    shape.grad_rows = 1;
    shape.unconstrained_dim = 1;

    std::vector<double> a = {1.0, 0.0};
    std::vector<double> b = {-1.0, 0.0};
    auto well = two_well_terms_on_block(shape, 0, a, b);
    auto grad = grad_penalty_terms_on_block(shape, 0, 2.5);
    std::vector<PolynomialTerm> terms = well;
    terms.insert(terms.end(), grad.begin(), grad.end());
    DensityPtr f = make_polynomial(shape, 1, terms, "built");

    std::mt19937 rng(41);
    for (int trial = 0; trial < 16; ++trial) {
        auto v = random_vector(rng, 3, 1.3);
        auto g = random_vector(rng, 6, 0.9);
        SlotView at{nullptr, g.data(), v.data(), nullptr};
        const double da = (v[0] - 1.0) * (v[0] - 1.0) + v[1] * v[1];
        const double db = (v[0] + 1.0) * (v[0] + 1.0) + v[1] * v[1];
        double pen = 0.0;
        for (int i = 0; i < 4; ++i) pen += g[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(i)];
        CHECK(f->eval(at) == doctest::Approx(da * db + 2.5 * pen).epsilon(1e-12));
    }
}

TEST_CASE("shape index helpers partition the flat state") {
    CompositeShape shape;
    shape.dim = 3;
    shape.grad_rows = 1;
    shape.divfree_rows = 1;
    shape.unconstrained_dim = 2;
    shape.check_valid();
    CHECK(shape.state_size() == 8);
    CHECK(shape.grad_index(0, 2) == 2);
    CHECK(shape.divfree_index(0, 0) == 3);
    CHECK(shape.unconstrained_index(1) == 7);
    CHECK(shape.kind_of(1) == ConstraintKind::CurlFree);
    CHECK(shape.kind_of(4) == ConstraintKind::DivFree);
    CHECK(shape.kind_of(6) == ConstraintKind::Unconstrained);

    CompositeShape empty;
    empty.unconstrained_dim = 0;
    CHECK_THROWS_AS(empty.check_valid(), std::invalid_argument);
}

TEST_CASE("tangent frames are orthonormal and deterministic") {
    std::vector<double> nu2 = {0.8, 0.6};
    auto f2 = tangent_frame(nu2);
    REQUIRE(f2.size() == 1);
    CHECK(f2[0][0] == doctest::Approx(-0.6));
    CHECK(f2[0][1] == doctest::Approx(0.8));

    std::vector<double> nu3 = {1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0};
    auto f3 = tangent_frame(nu3);
    REQUIRE(f3.size() == 2);
    for (const auto& t : f3) {
        double norm = 0.0, dot = 0.0;
        for (int a = 0; a < 3; ++a) {
            norm += t[static_cast<std::size_t>(a)] * t[static_cast<std::size_t>(a)];
            dot += t[static_cast<std::size_t>(a)] * nu3[static_cast<std::size_t>(a)];
        }
        CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::fabs(dot) <= 1e-12);
    }
    double cross = 0.0;
    for (int a = 0; a < 3; ++a) cross += f3[0][static_cast<std::size_t>(a)] * f3[1][static_cast<std::size_t>(a)];
    CHECK(std::fabs(cross) <= 1e-12);
}
