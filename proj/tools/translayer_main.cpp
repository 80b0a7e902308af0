#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "translayer/output.hpp"

using namespace translayer;

namespace {

std::vector<double> tangential_midpoint(const GraphInterface& gi) {
    std::vector<double> u(gi.u_min.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        u[i] = 0.5 * (gi.u_min[i] + gi.u_max[i]);
    return u;
}

CompositeJump jump_at_midpoint(const PiecewiseField& field, int which) {
    if (which < 0 || which >= static_cast<int>(field.interfaces.size()))
        throw ConfigError("interface index " + std::to_string(which) +
                          " is out of range (field has " +
                          std::to_string(field.interfaces.size()) +
                          " interfaces)");
    return trace_pair(field, which,
                      tangential_midpoint(
                          field.interfaces[static_cast<std::size_t>(which)]));
}

FieldBundle load_field(const RunConfig& rc) {
    if (rc.field_path.empty())
        throw ConfigError(
            "this command needs a field description file (config key 'field' "
            "or --field)");
    return load_field_file(rc.field_path);
}

// Kernel + tabulated profile matching the run parameters; the profile is the
// transition backbone for kernel-ramp cell problems and the limit tables.
struct KernelSetup {
    std::unique_ptr<RadialKernel> kernel;
    std::unique_ptr<KernelProfile> profile;
};

KernelSetup make_kernel(const RunConfig& rc, int dim) {
    KernelSetup s;
    s.kernel = std::make_unique<RadialKernel>(rc.kernel_type, dim);
    s.profile = std::make_unique<KernelProfile>(
        profile_p(*s.kernel, rc.profile_resolution));
    return s;
}

std::string out_path(const RunConfig& rc, const char* name) {
    return rc.output_dir + "/" + name;
}

int cmd_e1(const RunConfig& rc) {
    FieldBundle b = load_field(rc);
    CompositeJump jump = jump_at_midpoint(b.field, rc.interface_index);
    Cell1dOptions opt;
    opt.grid_n = rc.e1_grid_n;
    opt.l_grid = rc.e1_l_grid;
    opt.clamp_extra_node = rc.e1_clamp_extra;
    opt.workers = rc.workers;
    KernelSetup ks;
    if (rc.ramp == "kernel") {
        ks = make_kernel(rc, b.field.dim());
        opt.ramp = RampKind::KernelBackbone;
        opt.backbone = ks.profile.get();
    }
    E1Result r = optimize_e1(b.density, jump, opt);
    ConfigTree body = ConfigTree::object();
    body["command"] = "e1";
    body["field"] = rc.field_path;
    body["interface"] = rc.interface_index;
    body["result"] = to_tree(r);
    write_text_file(out_path(rc, "e1.json"), write_json(json_document(body)));
    write_text_file(out_path(rc, "e1_profile.csv"), nodes_csv(r.profile));
    write_text_file(out_path(rc, "e1_scan.csv"), scan_csv(r.scan));
    std::printf("e1 value=%s l_star=%s iterations=%d converged=%d\n",
                format_double(r.value).c_str(), format_double(r.l_star).c_str(),
                r.iterations, r.converged ? 1 : 0);
    return r.converged ? 0 : 2;
}

int cmd_eper(const RunConfig& rc) {
    FieldBundle b = load_field(rc);
    CompositeJump jump = jump_at_midpoint(b.field, rc.interface_index);
    CellndOptions opt;
    opt.normal_cells = rc.normal_cells;
    opt.tangential_cells = rc.tangential_cells;
    opt.l_grid = rc.eper_l_grid;
    opt.clamp_extra_layer = rc.eper_clamp_extra;
    opt.kick_seed = rc.kick_seed != 0 ? rc.kick_seed : rc.seed;
    opt.kick_amplitude = rc.kick_amplitude;
    opt.workers = rc.workers;
    KernelSetup ks;
    if (rc.ramp == "kernel") {
        ks = make_kernel(rc, b.field.dim());
        opt.ramp = RampKind::KernelBackbone;
        opt.backbone = ks.profile.get();
    }
    LatticeBasis basis = LatticeBasis::orthonormal(jump.normal);
    EPerResult r = optimize_eper(b.density, jump, basis, opt);
    ConfigTree body = ConfigTree::object();
    body["command"] = "eper";
    body["field"] = rc.field_path;
    body["interface"] = rc.interface_index;
    body["result"] = to_tree(r);
    write_text_file(out_path(rc, "eper.json"), write_json(json_document(body)));
    write_text_file(out_path(rc, "eper_scan.csv"), scan_csv(r.scan));
    write_text_file(out_path(rc, "eper_line_scan.csv"), scan_csv(r.line_scan));
    std::printf("eper value=%s e1=%s gap=%s converged=%d\n",
                format_double(r.value).c_str(),
                format_double(r.e1_value).c_str(),
                format_double(r.e1_gap).c_str(), r.converged ? 1 : 0);
    return r.converged ? 0 : 2;
}

int cmd_limit_density(const RunConfig& rc) {
    FieldBundle b = load_field(rc);
    CompositeJump jump = jump_at_midpoint(b.field, rc.interface_index);
    KernelSetup ks = make_kernel(rc, b.field.dim());
    double value = limit_surface_density(*b.density, *ks.profile, jump,
                                         rc.limit_quadrature);

    // transition table: offset t, clamped interpolation between the traces
    const int rows = 513;
    const int ss = b.density->shape().state_size();
    std::ostringstream tcsv;
    tcsv << 't';
    for (int c = 0; c < ss; ++c) tcsv << ",state_" << c;
    tcsv << '\n';
    std::vector<double> state(static_cast<std::size_t>(ss));
    for (int i = 0; i < rows; ++i) {
        const double t = -0.75 + 1.5 * i / (rows - 1);
        transition_state(*ks.profile, jump, t, state.data());
        tcsv << format_double(t);
        for (int c = 0; c < ss; ++c) tcsv << ',' << format_double(state[c]);
        tcsv << '\n';
    }

    SurfaceOptions sopt;
    sopt.kind = SurfaceDensityKind::KernelLimit;
    sopt.profile = ks.profile.get();
    sopt.limit_quadrature = rc.limit_quadrature;
    sopt.workers = rc.workers;
    KFunctionalResult kres = k_functional(b.field, b.density, sopt);

    ConfigTree body = ConfigTree::object();
    body["command"] = "limit-density";
    body["field"] = rc.field_path;
    body["interface"] = rc.interface_index;
    body["kernel"] = ks.kernel->type_name();
    body["value"] = value;
    body["k_functional"] = to_tree(kres);
    write_text_file(out_path(rc, "limit.json"),
                    write_json(json_document(body)));
    write_text_file(out_path(rc, "kernel_profile.csv"),
                    profile_csv(*ks.profile));
    write_text_file(out_path(rc, "transition.csv"), tcsv.str());
    std::printf("limit value=%s total=%s kernel=%s\n",
                format_double(value).c_str(),
                format_double(kres.value).c_str(),
                ks.kernel->type_name().c_str());
    return 0;
}

int cmd_recover(const RunConfig& rc) {
    FieldBundle b = load_field(rc);
    RecoveryConfig cfg;
    cfg.kernel = rc.kernel_type;
    cfg.epsilons = rc.epsilons;
    cfg.cells_per_epsilon = rc.cells_per_epsilon;
    cfg.profile_resolution = rc.profile_resolution;
    cfg.z_resolution = rc.z_resolution;
    cfg.mean_preserving = rc.mean_preserving;
    cfg.limit_quadrature = rc.limit_quadrature;
    cfg.workers = rc.workers;

    bool cell_converged = true;
    EPerResult cell;
    KernelSetup ks;
    if (rc.modified) {
        if (b.field.interfaces.empty())
            throw ConfigError(
                "the modified sequence needs at least one interface");
        CompositeJump jump = jump_at_midpoint(b.field, rc.interface_index);
        ks = make_kernel(rc, b.field.dim());
        CellndOptions opt;
        opt.normal_cells = rc.normal_cells;
        opt.tangential_cells = rc.tangential_cells;
        opt.l_grid = {rc.modified_l};
        opt.ramp = RampKind::KernelBackbone;
        opt.backbone = ks.profile.get();
        opt.clamp_extra_layer = rc.eper_clamp_extra;
        opt.kick_seed = rc.kick_seed != 0 ? rc.kick_seed : rc.seed;
        opt.kick_amplitude = rc.kick_amplitude;
        opt.workers = rc.workers;
        LatticeBasis basis = LatticeBasis::orthonormal(jump.normal);
        cell = optimize_eper(b.density, jump, basis, opt);
        cell_converged = cell.converged;
        cfg.perturbations.assign(b.field.interfaces.size(), nullptr);
        cfg.perturbations[static_cast<std::size_t>(rc.interface_index)] =
            &cell.profile;
    }

    EnergyTrace trace = epsilon_scan(b.field, b.density, cfg);
    ConfigTree body = ConfigTree::object();
    body["command"] = "recover";
    body["field"] = rc.field_path;
    body["modified"] = rc.modified;
    body["trace"] = to_tree(trace);
    if (rc.modified) body["cell"] = to_tree(cell);
    write_text_file(out_path(rc, "recover.json"),
                    write_json(json_document(body)));
    write_text_file(out_path(rc, "recover_trace.csv"), trace_csv(trace));
    std::printf("recover extrapolated=%s predicted=%s rate=%s modified=%d\n",
                format_double(trace.extrapolated).c_str(),
                format_double(trace.predicted).c_str(),
                format_double(trace.rate).c_str(), rc.modified ? 1 : 0);
    return cell_converged ? 0 : 2;
}

int cmd_scan(const RunConfig& rc) {
    FieldBundle b = load_field(rc);
    CompositeJump jump = jump_at_midpoint(b.field, rc.interface_index);
    CellndOptions opt;
    opt.normal_cells = rc.normal_cells;
    opt.tangential_cells = rc.tangential_cells;
    opt.l_grid = !rc.scan_l_grid.empty() ? rc.scan_l_grid : rc.eper_l_grid;
    opt.clamp_extra_layer = rc.eper_clamp_extra;
    opt.kick_seed = rc.kick_seed != 0 ? rc.kick_seed : rc.seed;
    opt.kick_amplitude = rc.kick_amplitude;
    opt.workers = rc.workers;
    KernelSetup ks;
    if (rc.ramp == "kernel") {
        ks = make_kernel(rc, b.field.dim());
        opt.ramp = RampKind::KernelBackbone;
        opt.backbone = ks.profile.get();
    }
    LatticeBasis basis = LatticeBasis::orthonormal(jump.normal);
    GapSearchReport r = gap_search(b.density, jump, basis, opt);
    ConfigTree body = ConfigTree::object();
    body["command"] = "scan";
    body["field"] = rc.field_path;
    body["interface"] = rc.interface_index;
    body["report"] = to_tree(r);
    write_text_file(out_path(rc, "scan.json"), write_json(json_document(body)));
    std::ostringstream csv;
    csv << "l,e1,eper,eper_kicked,best,perturbation_norm\n";
    for (const GapSearchRow& row : r.rows)
        csv << format_double(row.l) << ',' << format_double(row.e1) << ','
            << format_double(row.eper) << ','
            << format_double(row.eper_kicked) << ','
            << format_double(row.best) << ','
            << format_double(row.perturbation_norm) << '\n';
    write_text_file(out_path(rc, "scan.csv"), csv.str());
    std::printf("scan best_eper=%s e1=%s gap=%s seed=%llu\n",
                format_double(r.best_eper).c_str(),
                format_double(r.paired_e1).c_str(),
                format_double(r.gap).c_str(),
                static_cast<unsigned long long>(r.seed));
    return 0;
}

// Self-contained invariant and cross-check suite at desk scale. Every check
// has an independent reference: a closed form, a shared-nothing descent, an
// exact structural identity, or a finite-difference probe.
int cmd_check(const RunConfig& rc) {
    std::vector<OracleReport> reports;

    DensityPtr mm1 = make_modica_mortola(1);
    CompositeJump j1;
    j1.shape = mm1->shape();
    j1.normal = {1.0};
    j1.minus = {-1.0};
    j1.plus = {1.0};

    const double ref = analytic_e1_modica(
        [](double u) { return (1.0 - u * u) * (1.0 - u * u); }, -1.0, 1.0);

    {
        Cell1dOptions opt;
        opt.grid_n = 1024;
        opt.workers = rc.workers;
        E1Result r = optimize_e1(mm1, j1, opt);
        reports.push_back(make_report("transition_energy_quadrature", ref,
                                      r.value, 1e-3, 0.0));
    }
    {
        const double brute = brute_force_e1(mm1, j1, 4096);
        reports.push_back(
            make_report("transition_energy_descent", ref, brute, 5e-4, 0.0));
    }

    for (RadialKernel::Type type :
         {RadialKernel::Type::SmoothBump, RadialKernel::Type::PolyBump}) {
        RadialKernel kernel(type, 2);
        KernelProfile prof = profile_p(kernel, 2048);
        const std::string tag = kernel.type_name();
        reports.push_back(make_report("kernel_mass_" + tag, 1.0, prof.mass(),
                                      1e-8, 0.0));
        double even = 0.0;
        double outside = 0.0;
        for (int i = 0; i <= 400; ++i) {
            const double t = -1.0 + 2.0 * i / 400.0;
            even = std::max(even, std::abs(prof.p_at(t) - prof.p_at(-t)));
            if (std::abs(t) > 0.5) {
                outside = std::max(outside, std::abs(prof.p_at(t)));
                const double clamp = t > 0.0 ? prof.cum_at(t) - 1.0
                                             : prof.cum_at(t);
                outside = std::max(outside, std::abs(clamp));
            }
        }
        reports.push_back(
            make_report("kernel_even_" + tag, 0.0, even, 1e-12, 0.0));
        reports.push_back(
            make_report("kernel_support_" + tag, 0.0, outside, 0.0, 0.0));
    }

    {
        Cell1dOptions opt;
        opt.grid_n = 128;
        Cell1dProblem prob(mm1, j1, 0.25, opt);
        std::vector<double> x(static_cast<std::size_t>(prob.dof_count()));
        std::mt19937 rng(7);
        std::uniform_real_distribution<double> unif(-0.1, 0.1);
        for (double& v : x) v = unif(rng);
        ObjectiveFn obj = [&](const std::vector<double>& p,
                              std::vector<double>& g) {
            return prob.value_and_grad(p, g);
        };
        reports.push_back(
            fd_gradient_check(obj, x, 1e-6, 1e-5, "gradient_fd_1d"));
    }
    {
        DensityPtr mm2 = make_modica_mortola(2);
        CompositeJump j2;
        j2.shape = mm2->shape();
        j2.normal = {1.0, 0.0};
        j2.minus = {-1.0};
        j2.plus = {1.0};
        CellndOptions opt;
        opt.normal_cells = 16;
        opt.tangential_cells = 8;
        CellndProblem prob(mm2, j2, LatticeBasis::orthonormal(j2.normal), 0.25,
                           opt);
        std::vector<double> x(static_cast<std::size_t>(prob.dof_count()));
        std::mt19937 rng(11);
        std::uniform_real_distribution<double> unif(-0.1, 0.1);
        for (double& v : x) v = unif(rng);
        ObjectiveFn obj = [&](const std::vector<double>& p,
                              std::vector<double>& g) {
            return prob.value_and_grad(p, g);
        };
        reports.push_back(
            fd_gradient_check(obj, x, 1e-6, 1e-5, "gradient_fd_cell"));
    }

    reports.push_back(operator_self_test(32, 2));

    {
        DensityPtr mm2 = make_modica_mortola(2);
        CompositeJump j2;
        j2.shape = mm2->shape();
        j2.normal = {1.0, 0.0};
        j2.minus = {-1.0};
        j2.plus = {1.0};
        CellndOptions opt;
        opt.normal_cells = 24;
        opt.tangential_cells = 24;
        opt.l_grid = {0.25};
        opt.workers = rc.workers;
        EPerResult r =
            optimize_eper(mm2, j2, LatticeBasis::orthonormal(j2.normal), opt);
        const double excess = std::max(0.0, r.value - r.e1_value);
        reports.push_back(
            make_report("cell_ordering_vs_line", 0.0, excess, 1e-6, 0.0));
    }

    if (!rc.field_path.empty()) {
        FieldBundle b = load_field_file(rc.field_path);
        ValidationReport v = validate(b.field, *b.density);
        double worst = 0.0;
        for (const ValidationEntry& e : v.entries)
            if (!e.pass) worst = std::max(worst, e.magnitude);
        reports.push_back(
            make_report("field_validation", 0.0, worst, 1e-9, 0.0));
        ConfigTree once = field_to_tree(b);
        std::string text = write_config_text(once);
        bool same = parse_config_text(text) == once;
        reports.push_back(make_report("field_round_trip", 1.0, same ? 1.0 : 0.0,
                                      0.0, 0.0));
    }

    int passed = 0;
    ConfigTree list = ConfigTree::array();
    for (const OracleReport& r : reports) {
        std::printf("[%s] %s test=%s ref=%s tol=%s\n", r.pass ? "ok" : "FAIL",
                    r.name.c_str(), format_double(r.test_value).c_str(),
                    format_double(r.reference).c_str(),
                    format_double(r.tolerance).c_str());
        if (r.pass) ++passed;
        ConfigTree t = to_tree(r);
        t.erase("runtime_seconds");  // wall time is not reproducible
        list.push_back(t);
    }
    ConfigTree body = ConfigTree::object();
    body["command"] = "check";
    body["passed"] = passed;
    body["total"] = static_cast<long long>(reports.size());
    body["reports"] = list;
    write_text_file(out_path(rc, "check.json"),
                    write_json(json_document(body)));
    std::printf("check passed=%d/%d\n", passed,
                static_cast<int>(reports.size()));
    return passed == static_cast<int>(reports.size()) ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "optimal transition-layer energies: 1D and periodic cell problems, "
        "mollified recovery sequences, and surface functionals"};
    app.require_subcommand(1);

    std::string config_path, field_path, output_dir;
    int workers = 0;
    int iface = -1;
    long long seed = -1;
    app.add_option("--config", config_path,
                   "run configuration file (key = value sections)");
    app.add_option("--field", field_path,
                   "field description file (overrides the run config)");
    app.add_option("--output-dir", output_dir,
                   "directory for JSON/CSV results");
    app.add_option("--workers", workers,
                   "worker threads (default: TRANSLAYER_WORKERS or 1)");
    app.add_option("--seed", seed, "seed for randomized restarts");
    app.add_option("--interface", iface, "interface index the command targets");

    CLI::App* sub_e1 = app.add_subcommand(
        "e1", "optimal 1D transition energy across layer widths");
    CLI::App* sub_eper =
        app.add_subcommand("eper", "optimal periodic-cell transition energy");
    CLI::App* sub_limit = app.add_subcommand(
        "limit-density", "kernel profile tables and smoothing-limit density");
    CLI::App* sub_recover = app.add_subcommand(
        "recover", "smoothed-field energy trace against the surface limit");
    CLI::App* sub_scan = app.add_subcommand(
        "scan", "width scan with seeded restarts against the 1D optimum");
    CLI::App* sub_check =
        app.add_subcommand("check", "invariant and cross-check suite");
    for (CLI::App* s :
         {sub_e1, sub_eper, sub_limit, sub_recover, sub_scan, sub_check})
        s->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        RunConfig rc;
        if (!config_path.empty()) rc = load_run_config(config_path);
        if (!field_path.empty()) rc.field_path = field_path;
        if (!output_dir.empty()) rc.output_dir = output_dir;
        if (workers > 0) rc.workers = workers;
        if (seed >= 0) rc.seed = static_cast<std::uint64_t>(seed);
        if (iface >= 0) rc.interface_index = iface;
        std::filesystem::create_directories(rc.output_dir);

        if (app.got_subcommand(sub_e1)) return cmd_e1(rc);
        if (app.got_subcommand(sub_eper)) return cmd_eper(rc);
        if (app.got_subcommand(sub_limit)) return cmd_limit_density(rc);
        if (app.got_subcommand(sub_recover)) return cmd_recover(rc);
        if (app.got_subcommand(sub_scan)) return cmd_scan(rc);
        if (app.got_subcommand(sub_check)) return cmd_check(rc);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
