#include "translayer/output.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace translayer {
namespace {

std::string iso_utc_now() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

const char* ramp_name(RampKind kind) {
    return kind == RampKind::KernelBackbone ? "kernel" : "quintic";
}

ConfigTree scan_tree(const std::vector<LScanEntry>& entries) {
    ConfigTree arr = ConfigTree::array();
    for (const LScanEntry& e : entries) arr.push_back(to_tree(e));
    return arr;
}

}  // namespace

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    std::string s(buf);
    if (s.find_first_of(".eE") == std::string::npos &&
        s.find("inf") == std::string::npos &&
        s.find("nan") == std::string::npos)
        s += ".0";
    return s;
}

ConfigTree json_document(const ConfigTree& body) {
    ConfigTree doc = ConfigTree::object();
    doc["schema"] = 1;
    doc["generated_at"] = iso_utc_now();
    for (auto it = body.begin(); it != body.end(); ++it)
        doc[it.key()] = it.value();
    return doc;
}

std::string write_json(const ConfigTree& doc) { return doc.dump(2) + "\n"; }

std::string strip_timestamp(const std::string& json_text) {
    std::istringstream in(json_text);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find("\"generated_at\"") != std::string::npos) continue;
        out << line << '\n';
    }
    return out.str();
}

ConfigTree to_tree(const LScanEntry& e) {
    ConfigTree t = ConfigTree::object();
    t["l"] = e.l;
    t["value"] = e.value;
    t["iterations"] = e.iterations;
    t["converged"] = e.converged;
    t["grad_norm"] = e.grad_norm;
    return t;
}

ConfigTree to_tree(const Profile1D& p) {
    ConfigTree t = ConfigTree::object();
    t["grid_n"] = p.grid_n;
    t["normal"] = p.nu;
    t["s"] = p.s;
    t["state"] = p.state;
    return t;
}

ConfigTree to_tree(const E1Result& r) {
    ConfigTree t = ConfigTree::object();
    t["value"] = r.value;
    t["l_star"] = r.l_star;
    t["iterations"] = r.iterations;
    t["converged"] = r.converged;
    t["grad_norm"] = r.grad_norm;
    t["scan"] = scan_tree(r.scan);
    return t;
}

ConfigTree to_tree(const LatticeBasis& b) {
    ConfigTree t = ConfigTree::object();
    t["dim"] = b.dim;
    t["normal"] = b.nu;
    ConfigTree tans = ConfigTree::array();
    for (const auto& v : b.tangents) tans.push_back(v);
    t["tangents"] = tans;
    return t;
}

ConfigTree to_tree(const CellProfile& p) {
    ConfigTree t = ConfigTree::object();
    t["l"] = p.l;
    t["normal_cells"] = p.normal_cells;
    t["tangential_cells"] = p.tangential_cells;
    t["clamp_extra_layer"] = p.clamp_extra_layer;
    t["ramp"] = std::string(ramp_name(p.ramp_kind));
    t["value"] = p.value;
    t["dof_count"] = static_cast<long long>(p.dof.size());
    t["basis"] = to_tree(p.basis);
    t["minus_state"] = p.minus_state;
    t["delta_state"] = p.delta_state;
    t["curl_deltas"] = p.curl_deltas;
    return t;
}

ConfigTree to_tree(const EPerResult& r) {
    ConfigTree t = ConfigTree::object();
    t["value"] = r.value;
    t["l_star"] = r.l_star;
    t["e1_value"] = r.e1_value;
    t["e1_gap"] = r.e1_gap;
    t["perturbation_norm"] = r.perturbation_norm;
    t["iterations"] = r.iterations;
    t["converged"] = r.converged;
    t["grad_norm"] = r.grad_norm;
    t["normal_cells"] = r.normal_cells;
    t["tangential_cells"] = r.tangential_cells;
    t["kick_seed"] = r.kick_seed;
    t["basis"] = to_tree(r.basis);
    t["scan"] = scan_tree(r.scan);
    t["line_scan"] = scan_tree(r.line_scan);
    t["profile"] = to_tree(r.profile);
    return t;
}

ConfigTree to_tree(const EnergyTrace& tr) {
    ConfigTree t = ConfigTree::object();
    ConfigTree rows = ConfigTree::array();
    for (const TraceRow& r : tr.rows) {
        ConfigTree e = ConfigTree::object();
        e["epsilon"] = r.epsilon;
        e["energy"] = r.energy;
        e["predicted"] = r.predicted;
        e["gap"] = r.gap;
        rows.push_back(e);
    }
    t["rows"] = rows;
    t["predicted"] = tr.predicted;
    t["extrapolated"] = tr.extrapolated;
    t["rate"] = tr.rate;
    t["monotone"] = tr.monotone;
    t["overlap_warning"] = tr.overlap_warning;
    return t;
}

ConfigTree to_tree(const KFunctionalResult& r) {
    ConfigTree t = ConfigTree::object();
    t["value"] = r.value;
    t["partial"] = r.partial;
    t["cache_hits"] = r.cache_hits;
    t["cache_misses"] = r.cache_misses;
    ConfigTree ifs = ConfigTree::array();
    for (const InterfaceContribution& c : r.interfaces) {
        ConfigTree e = ConfigTree::object();
        e["interface"] = c.interface_index;
        e["value"] = c.value;
        e["measure"] = c.measure;
        e["converged"] = c.converged;
        ifs.push_back(e);
    }
    t["interfaces"] = ifs;
    return t;
}

ConfigTree to_tree(const ValidationReport& r) {
    ConfigTree t = ConfigTree::object();
    t["ok"] = r.ok();
    ConfigTree entries = ConfigTree::array();
    for (const ValidationEntry& e : r.entries) {
        ConfigTree x = ConfigTree::object();
        x["check"] = e.check;
        x["where"] = e.where;
        x["magnitude"] = e.magnitude;
        x["pass"] = e.pass;
        entries.push_back(x);
    }
    t["entries"] = entries;
    return t;
}

ConfigTree to_tree(const OracleReport& r) {
    ConfigTree t = ConfigTree::object();
    t["name"] = r.name;
    t["reference"] = r.reference;
    t["test_value"] = r.test_value;
    t["tolerance"] = r.tolerance;
    t["pass"] = r.pass;
    t["runtime_seconds"] = r.runtime_seconds;
    return t;
}

ConfigTree to_tree(const BasisInvarianceReport& r) {
    ConfigTree t = ConfigTree::object();
    t["value_a"] = r.value_a;
    t["value_b"] = r.value_b;
    t["converged_a"] = r.converged_a;
    t["converged_b"] = r.converged_b;
    t["tolerance"] = r.tolerance;
    t["within"] = r.within;
    t["conclusive"] = r.conclusive;
    return t;
}

ConfigTree to_tree(const RlEquivalenceReport& r) {
    ConfigTree t = ConfigTree::object();
    t["k"] = r.k;
    t["ordering_ok"] = r.ordering_ok;
    t["ordering_slack"] = r.ordering_slack;
    t["best_relaxed"] = r.best_relaxed;
    t["best_clamped"] = r.best_clamped;
    t["cross_class_ok"] = r.cross_class_ok;
    t["cross_tolerance"] = r.cross_tolerance;
    ConfigTree rows = ConfigTree::array();
    for (const RlEquivalenceRow& row : r.rows) {
        ConfigTree e = ConfigTree::object();
        e["l"] = row.l;
        e["relaxed"] = row.relaxed;
        e["clamped"] = row.clamped;
        e["converged"] = row.converged;
        e["cross_gap"] = row.cross_gap;
        rows.push_back(e);
    }
    t["rows"] = rows;
    return t;
}

ConfigTree to_tree(const GapSearchReport& r) {
    ConfigTree t = ConfigTree::object();
    t["best_eper"] = r.best_eper;
    t["paired_e1"] = r.paired_e1;
    t["gap"] = r.gap;
    t["seed"] = r.seed;
    t["kick_amplitude"] = r.kick_amplitude;
    ConfigTree rows = ConfigTree::array();
    for (const GapSearchRow& row : r.rows) {
        ConfigTree e = ConfigTree::object();
        e["l"] = row.l;
        e["e1"] = row.e1;
        e["eper"] = row.eper;
        e["eper_kicked"] = row.eper_kicked;
        e["best"] = row.best;
        e["perturbation_norm"] = row.perturbation_norm;
        rows.push_back(e);
    }
    t["rows"] = rows;
    return t;
}

std::string profile_csv(const KernelProfile& profile) {
    std::ostringstream os;
    os << "t,p,P\n";
    for (std::size_t i = 0; i < profile.t.size(); ++i)
        os << format_double(profile.t[i]) << ',' << format_double(profile.p[i])
           << ',' << format_double(profile.cum[i]) << '\n';
    return os.str();
}

std::string trace_csv(const EnergyTrace& trace) {
    std::ostringstream os;
    os << "epsilon,energy,predicted,gap\n";
    for (const TraceRow& r : trace.rows)
        os << format_double(r.epsilon) << ',' << format_double(r.energy) << ','
           << format_double(r.predicted) << ',' << format_double(r.gap)
           << '\n';
    return os.str();
}

std::string nodes_csv(const Profile1D& profile) {
    const int ss = profile.shape.state_size();
    std::ostringstream os;
    os << 's';
    for (int c = 0; c < ss; ++c) os << ",state_" << c;
    os << '\n';
    for (std::size_t i = 0; i < profile.s.size(); ++i) {
        os << format_double(profile.s[i]);
        for (int c = 0; c < ss; ++c)
            os << ','
               << format_double(
                      profile.state[i * static_cast<std::size_t>(ss) +
                                    static_cast<std::size_t>(c)]);
        os << '\n';
    }
    return os.str();
}

std::string scan_csv(const std::vector<LScanEntry>& entries) {
    std::ostringstream os;
    os << "l,value,iterations,converged,grad_norm\n";
    for (const LScanEntry& e : entries)
        os << format_double(e.l) << ',' << format_double(e.value) << ','
           << e.iterations << ',' << (e.converged ? 1 : 0) << ','
           << format_double(e.grad_norm) << '\n';
    return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace translayer
