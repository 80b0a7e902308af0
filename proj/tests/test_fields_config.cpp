#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "translayer/config.hpp"
#include "translayer/fields.hpp"

using namespace translayer;

namespace {

std::string config_path(const std::string& name) {
    return std::string(TL_CONFIG_DIR) + "/" + name;
}

const char* kBundledFields[] = {
    "mm_1d.field",        "mm_scalar_axis.field", "mm_scalar_tilted.field",
    "mm_vector.field",    "ag_axis.field",        "ag_tilted.field",
    "twowell_axis.field", "twowell_tilted.field", "divfree_poly.field",
    "composite.field",    "mm_3d.field",          "inhom_poly.field",
    "curved_mm.field"};

}  // namespace

TEST_CASE("text format round-trips every value kind") {
    ConfigTree tree = ConfigTree::object();
    tree["count"] = 42;
    tree["width"] = 0.125;
    tree["big"] = 1.5e-7;
    tree["whole"] = 2.0;  // float that prints like an integer must stay float
    tree["on"] = true;
    tree["off"] = false;
    tree["label"] = "two words \"quoted\"";
    tree["ints"] = ConfigTree::array({1, 2, 3});
    tree["floats"] = ConfigTree::array({0.5, -0.25});
    tree["nested"] = ConfigTree::array({ConfigTree::array({1, 0}), ConfigTree::array({0, 2})});
    tree["section"] = ConfigTree::object();
    tree["section"]["alpha"] = -3;
    tree["section"]["beta"] = "x";
    tree["rows"] = ConfigTree::array();
    ConfigTree row = ConfigTree::object();
    row["v"] = 1.25;
    tree["rows"].push_back(row);
    row["v"] = -2.5;
    tree["rows"].push_back(row);

    const std::string text = write_config_text(tree);
    const ConfigTree back = parse_config_text(text);
    CHECK(back == tree);
    CHECK(back["whole"].is_number_float());
    CHECK(back["count"].is_number_integer());
    // idempotent canonical form
    CHECK(write_config_text(back) == text);
}

TEST_CASE("parser reports the offending line") {
    auto expect_line = [](const std::string& text, const char* needle) {
        try {
            parse_config_text(text);
            FAIL_CHECK("expected a parse failure");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_line("a = 1\na = 2\n", "line 2");
    expect_line("a = 1\nb = \n", "line 2");
    expect_line("a = 1\n\nc = 12x\n", "line 3");
    expect_line("s = \"unterminated\n", "line 1");
    expect_line("v = [1, 2\n", "line 1");
    expect_line("just some words\n", "line 1");
    CHECK_THROWS_AS(load_config_file(config_path("no_such_file.conf")), ConfigError);
}

TEST_CASE("bundled fields load, validate, and round-trip losslessly") {
    for (const char* name : kBundledFields) {
        INFO("field file: ", name);
        const FieldBundle bundle = load_field_file(config_path(name));
        REQUIRE(bundle.density != nullptr);
        CHECK_NOTHROW(bundle.field.check_structure());

        const ValidationReport report = validate(bundle.field, *bundle.density);
        for (const auto& entry : report.entries) {
            INFO(entry.check, " at ", entry.where, " magnitude ", entry.magnitude);
            CHECK(entry.pass);
        }

        const ConfigTree tree = field_to_tree(bundle);
        const FieldBundle again = field_from_tree(tree);
        CHECK(field_to_tree(again) == tree);
        CHECK(again.field.shape == bundle.field.shape);
        CHECK(again.field.layers.size() == bundle.field.layers.size());
        // and the canonical text form parses back to the same tree
        CHECK(parse_config_text(write_config_text(tree)) == tree);
    }
}

TEST_CASE("tilted graph yields the expected unit normal and traces") {
    const FieldBundle bundle = load_field_file(config_path("mm_scalar_tilted.field"));
    REQUIRE(bundle.field.interfaces.size() == 1);
    std::vector<double> u = {0.2};
    const auto normal = interface_normal(bundle.field, 0, u.data());
    REQUIRE(normal.size() == 2);
    // x0 = -0.75 u: level set x0 + 0.75 x1 = 0, normalized (0.8, 0.6)
    CHECK(normal[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(normal[1] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(normal[0] * normal[0] + normal[1] * normal[1] ==
          doctest::Approx(1.0).epsilon(1e-14));

    const CompositeJump jump = trace_pair(bundle.field, 0, u);
    CHECK(jump.minus.size() == 1);
    CHECK(jump.minus[0] == doctest::Approx(-1.0));
    CHECK(jump.plus[0] == doctest::Approx(1.0));
    REQUIRE(jump.position.size() == 2);
    CHECK(jump.position[0] == doctest::Approx(-0.75 * 0.2).epsilon(1e-12));
    CHECK(jump.position[1] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("layer lookup follows the graph ordering") {
    const FieldBundle bundle = load_field_file(config_path("mm_scalar_axis.field"));
    const PiecewiseField& field = bundle.field;
    double left[2] = {-0.4, 0.1};
    double right[2] = {0.4, 0.1};
    CHECK(field.layer_index(left) == 0);
    CHECK(field.layer_index(right) == 1);
    CHECK(field.value_at(left).state[0] == doctest::Approx(-1.0));
    CHECK(field.value_at(right).state[0] == doctest::Approx(1.0));

    const auto tang = field.tangential(right);
    REQUIRE(tang.size() == 1);
    CHECK(tang[0] == doctest::Approx(0.1));
}

TEST_CASE("tangential polynomials evaluate and differentiate") {
    TangentPoly g;
    g.nvars = 2;
    g.coeff = {1.5, -2.0, 0.25};
    g.exps = {0, 0, 1, 0, 1, 2};  // 1.5 - 2 u0 + 0.25 u0 u1^2
    g.check_valid();
    double u[2] = {0.5, -1.0};
    CHECK(g.eval(u) == doctest::Approx(1.5 - 1.0 + 0.25 * 0.5).epsilon(1e-14));
    double grad[2];
    g.grad(u, grad);
    CHECK(grad[0] == doctest::Approx(-2.0 + 0.25).epsilon(1e-14));
    CHECK(grad[1] == doctest::Approx(0.25 * 0.5 * -2.0).epsilon(1e-14));

    TangentPoly bad = g;
    bad.exps.pop_back();
    CHECK_THROWS_AS(bad.check_valid(), std::invalid_argument);
}

TEST_CASE("structure checks reject inconsistent fields") {
    FieldBundle bundle = load_field_file(config_path("mm_scalar_axis.field"));
    PiecewiseField field = bundle.field;

    PiecewiseField missing_layer = field;
    missing_layer.layers.pop_back();
    CHECK_THROWS_AS(missing_layer.check_structure(), std::invalid_argument);

    PiecewiseField bad_state = field;
    bad_state.layers[0].state.push_back(0.0);
    CHECK_THROWS_AS(bad_state.check_structure(), std::invalid_argument);

    PiecewiseField bad_domain = field;
    bad_domain.domain_max[0] = bad_domain.domain_min[0] - 1.0;
    CHECK_THROWS_AS(bad_domain.check_structure(), std::invalid_argument);
}

TEST_CASE("run configs layer defaults, file values, and environment") {
    ConfigTree empty = ConfigTree::object();
    unsetenv("TRANSLAYER_WORKERS");
    RunConfig defaults = run_config_from_tree(empty, ".");
    CHECK(defaults.workers == 1);
    CHECK(defaults.e1_grid_n == 2048);
    CHECK(defaults.epsilons == std::vector<double>{0.1, 0.05, 0.025, 0.0125});
    CHECK(defaults.kernel_type == RadialKernel::Type::SmoothBump);

    setenv("TRANSLAYER_WORKERS", "3", 1);
    RunConfig from_env = run_config_from_tree(empty, ".");
    CHECK(from_env.workers == 3);

    ConfigTree tree = ConfigTree::object();
    tree["workers"] = 2;
    tree["field"] = "mm_1d.field";
    tree["e1"] = ConfigTree::object();
    tree["e1"]["grid_n"] = 512;
    tree["kernel"] = ConfigTree::object();
    tree["kernel"]["type"] = "poly_bump";
    RunConfig explicit_cfg = run_config_from_tree(tree, TL_CONFIG_DIR);
    CHECK(explicit_cfg.workers == 2);  // explicit key beats the environment
    CHECK(explicit_cfg.e1_grid_n == 512);
    CHECK(explicit_cfg.kernel_type == RadialKernel::Type::PolyBump);
    // relative field paths resolve against the config directory
    CHECK(explicit_cfg.field_path == config_path("mm_1d.field"));
    unsetenv("TRANSLAYER_WORKERS");

    ConfigTree unknown = ConfigTree::object();
    unknown["no_such_key"] = 1;
    CHECK_THROWS_AS(run_config_from_tree(unknown, "."), ConfigError);

    ConfigTree bad_workers = ConfigTree::object();
    bad_workers["workers"] = 0;
    CHECK_THROWS_AS(run_config_from_tree(bad_workers, "."), ConfigError);

    ConfigTree bad_eps = ConfigTree::object();
    bad_eps["recover"] = ConfigTree::object();
    bad_eps["recover"]["epsilons"] = ConfigTree::array({0.1, -0.05});
    CHECK_THROWS_AS(run_config_from_tree(bad_eps, "."), ConfigError);
}

TEST_CASE("golden run configs parse with their bundled fields") {
    for (const char* name : {"golden_e1.conf", "golden_eper.conf", "golden_limit.conf",
                             "golden_recover.conf", "golden_scan.conf"}) {
        INFO("config: ", name);
        const RunConfig cfg = load_run_config(config_path(name));
        CHECK(!cfg.field_path.empty());
        CHECK_NOTHROW(load_field_file(cfg.field_path));
    }
}
