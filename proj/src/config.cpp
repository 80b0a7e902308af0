#include "translayer/config.hpp"

#include <cctype>
#include <cerrno>
#include <climits>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "translayer/output.hpp"

namespace translayer {
namespace {

[[noreturn]] void fail_line(int line, const std::string& msg) {
    throw ConfigError("line " + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string strip_comment(const std::string& raw, int line) {
    bool in_str = false;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        char c = raw[i];
        if (in_str) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_str = false;
            }
        } else if (c == '"') {
            in_str = true;
        } else if (c == '#') {
            return raw.substr(0, i);
        }
    }
    if (in_str) fail_line(line, "unterminated string");
    return raw;
}

void check_name(const std::string& s, int line, const char* what) {
    if (s.empty()) fail_line(line, std::string("empty ") + what + " name");
    for (char c : s) {
        if (c == '.')
            fail_line(line, std::string("dotted ") + what +
                                " names are not supported");
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' &&
            c != '-')
            fail_line(line, std::string("bad character in ") + what +
                                " name '" + s + "'");
    }
}

// Single-line value grammar: quoted strings, true/false, integers, floats
// (anything with '.', 'e', 'inf', or 'nan'), and possibly nested
// comma-separated [...] arrays.
class ValueParser {
  public:
    ValueParser(std::string text, int line)
        : text_(std::move(text)), line_(line) {}

    ConfigTree parse_full() {
        ConfigTree v = parse_value();
        skip_ws();
        if (pos_ != text_.size())
            fail_line(line_, "trailing characters after value");
        return v;
    }

  private:
    void skip_ws() {
        while (pos_ < text_.size() &&
               std::isspace(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
    }

    ConfigTree parse_value() {
        skip_ws();
        if (pos_ >= text_.size()) fail_line(line_, "missing value");
        char c = text_[pos_];
        if (c == '"') return parse_string();
        if (c == '[') return parse_array();
        return parse_scalar();
    }

    ConfigTree parse_string() {
        ++pos_;
        std::string out;
        while (pos_ < text_.size()) {
            char c = text_[pos_++];
            if (c == '"') return ConfigTree(out);
            if (c == '\\') {
                if (pos_ >= text_.size()) break;
                char e = text_[pos_++];
                if (e == '"')
                    out += '"';
                else if (e == '\\')
                    out += '\\';
                else if (e == 'n')
                    out += '\n';
                else if (e == 't')
                    out += '\t';
                else
                    fail_line(line_, "unsupported string escape");
            } else {
                out += c;
            }
        }
        fail_line(line_, "unterminated string");
    }

    ConfigTree parse_array() {
        ++pos_;
        ConfigTree arr = ConfigTree::array();
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ']') {
            ++pos_;
            return arr;
        }
        while (true) {
            arr.push_back(parse_value());
            skip_ws();
            if (pos_ >= text_.size()) fail_line(line_, "unterminated array");
            char c = text_[pos_++];
            if (c == ']') return arr;
            if (c != ',') fail_line(line_, "expected ',' or ']' in array");
        }
    }

    ConfigTree parse_scalar() {
        std::size_t start = pos_;
        while (pos_ < text_.size() && text_[pos_] != ',' &&
               text_[pos_] != ']' &&
               !std::isspace(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
        std::string tok = text_.substr(start, pos_ - start);
        if (tok == "true") return ConfigTree(true);
        if (tok == "false") return ConfigTree(false);
        bool floaty = tok.find_first_of(".eE") != std::string::npos ||
                      tok.find("inf") != std::string::npos ||
                      tok.find("nan") != std::string::npos;
        const char* cs = tok.c_str();
        char* end = nullptr;
        if (floaty) {
            double d = std::strtod(cs, &end);
            if (end != cs + tok.size() || tok.empty())
                fail_line(line_, "malformed number '" + tok + "'");
            return ConfigTree(d);
        }
        errno = 0;
        if (!tok.empty() && tok[0] == '-') {
            long long v = std::strtoll(cs, &end, 10);
            if (end != cs + tok.size() || tok.size() == 1 || errno == ERANGE)
                fail_line(line_, "malformed value '" + tok + "'");
            return ConfigTree(v);
        }
        unsigned long long u = std::strtoull(cs, &end, 10);
        if (end != cs + tok.size() || tok.empty() || errno == ERANGE)
            fail_line(line_, "malformed value '" + tok + "'");
        if (u <= static_cast<unsigned long long>(LLONG_MAX))
            return ConfigTree(static_cast<long long>(u));
        return ConfigTree(u);
    }

    std::string text_;
    std::size_t pos_ = 0;
    int line_ = 0;
};

bool is_table_array(const ConfigTree& v) {
    return v.is_array() && !v.empty() && v.front().is_object();
}

void write_value(std::ostream& os, const ConfigTree& v) {
    if (v.is_string()) {
        os << '"';
        for (char c : v.get<std::string>()) {
            if (c == '"')
                os << "\\\"";
            else if (c == '\\')
                os << "\\\\";
            else if (c == '\n')
                os << "\\n";
            else if (c == '\t')
                os << "\\t";
            else
                os << c;
        }
        os << '"';
    } else if (v.is_boolean()) {
        os << (v.get<bool>() ? "true" : "false");
    } else if (v.is_number_float()) {
        os << format_double(v.get<double>());
    } else if (v.is_number_unsigned()) {
        os << v.get<unsigned long long>();
    } else if (v.is_number_integer()) {
        os << v.get<long long>();
    } else if (v.is_array()) {
        os << '[';
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) os << ", ";
            write_value(os, v[i]);
        }
        os << ']';
    } else {
        throw ConfigError("value type has no text form");
    }
}

void write_pairs(std::ostream& os, const ConfigTree& obj) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (it.value().is_object())
            throw ConfigError("nested tables are not supported");
        os << it.key() << " = ";
        write_value(os, it.value());
        os << '\n';
    }
}

}  // namespace

ConfigTree parse_config_text(const std::string& text) {
    ConfigTree root = ConfigTree::object();
    ConfigTree* cur = &root;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        std::string s = trim(strip_comment(raw, line));
        if (s.empty()) continue;
        if (s.front() == '[') {
            bool table_array = s.size() >= 2 && s[1] == '[';
            if (table_array) {
                if (s.size() < 4 || s.substr(s.size() - 2) != "]]")
                    fail_line(line, "malformed table header");
                std::string name = trim(s.substr(2, s.size() - 4));
                check_name(name, line, "table");
                if (!root.contains(name)) root[name] = ConfigTree::array();
                ConfigTree& slot = root[name];
                if (!slot.is_array() ||
                    (!slot.empty() && !slot.front().is_object()))
                    fail_line(line,
                              "'" + name + "' is already used by another key");
                slot.push_back(ConfigTree::object());
                cur = &slot.back();
            } else {
                if (s.back() != ']') fail_line(line, "malformed section header");
                std::string name = trim(s.substr(1, s.size() - 2));
                check_name(name, line, "section");
                if (root.contains(name))
                    fail_line(line, "duplicate section '" + name + "'");
                root[name] = ConfigTree::object();
                cur = &root[name];
            }
            continue;
        }
        std::size_t eq = s.find('=');
        if (eq == std::string::npos) fail_line(line, "expected 'key = value'");
        std::string key = trim(s.substr(0, eq));
        check_name(key, line, "key");
        if (cur->contains(key)) fail_line(line, "duplicate key '" + key + "'");
        (*cur)[key] = ValueParser(trim(s.substr(eq + 1)), line).parse_full();
    }
    return root;
}

ConfigTree load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_config_text(buf.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::string write_config_text(const ConfigTree& tree) {
    if (!tree.is_object()) throw ConfigError("top level must be a table");
    std::ostringstream os;
    bool any = false;
    for (auto it = tree.begin(); it != tree.end(); ++it) {
        const ConfigTree& v = it.value();
        if (v.is_object() || is_table_array(v)) continue;
        os << it.key() << " = ";
        write_value(os, v);
        os << '\n';
        any = true;
    }
    for (auto it = tree.begin(); it != tree.end(); ++it) {
        if (!it.value().is_object()) continue;
        if (any) os << '\n';
        os << '[' << it.key() << "]\n";
        write_pairs(os, it.value());
        any = true;
    }
    for (auto it = tree.begin(); it != tree.end(); ++it) {
        if (!is_table_array(it.value())) continue;
        for (const ConfigTree& elem : it.value()) {
            if (!elem.is_object())
                throw ConfigError("mixed table arrays are not supported");
            if (any) os << '\n';
            os << "[[" << it.key() << "]]\n";
            write_pairs(os, elem);
            any = true;
        }
    }
    return os.str();
}

namespace {

const ConfigTree& require_key(const ConfigTree& obj, const char* key,
                              const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end())
        throw ConfigError(where + " is missing the key '" + key + "'");
    return *it;
}

const ConfigTree& require_table(const ConfigTree& obj, const char* key,
                                const std::string& where) {
    const ConfigTree& v = require_key(obj, key, where);
    if (!v.is_object())
        throw ConfigError(where + "." + key + " must be a [" +
                          std::string(key) + "] section");
    return v;
}

void reject_unknown(const ConfigTree& obj,
                    std::initializer_list<const char*> keys,
                    const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : keys) {
            if (it.key() == k) {
                known = true;
                break;
            }
        }
        if (!known)
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

long long ll_at(const ConfigTree& obj, const char* key,
                const std::string& where) {
    const ConfigTree& v = require_key(obj, key, where);
    if (!v.is_number_integer() && !v.is_number_unsigned())
        throw ConfigError(where + "." + key + " must be an integer");
    return v.get<long long>();
}

int int_at(const ConfigTree& obj, const char* key, const std::string& where) {
    long long v = ll_at(obj, key, where);
    if (v < INT_MIN || v > INT_MAX)
        throw ConfigError(where + "." + key + " is out of range");
    return static_cast<int>(v);
}

std::uint64_t u64_at(const ConfigTree& obj, const char* key,
                     const std::string& where) {
    const ConfigTree& v = require_key(obj, key, where);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
        long long s = v.get<long long>();
        if (s < 0)
            throw ConfigError(where + "." + key + " must be nonnegative");
        return static_cast<std::uint64_t>(s);
    }
    throw ConfigError(where + "." + key + " must be an integer");
}

double double_at(const ConfigTree& obj, const char* key,
                 const std::string& where) {
    const ConfigTree& v = require_key(obj, key, where);
    if (!v.is_number())
        throw ConfigError(where + "." + key + " must be a number");
    return v.get<double>();
}

bool bool_at(const ConfigTree& obj, const char* key,
             const std::string& where) {
    const ConfigTree& v = require_key(obj, key, where);
    if (!v.is_boolean())
        throw ConfigError(where + "." + key + " must be true or false");
    return v.get<bool>();
}

std::string string_at(const ConfigTree& obj, const char* key,
                      const std::string& where) {
    const ConfigTree& v = require_key(obj, key, where);
    if (!v.is_string())
        throw ConfigError(where + "." + key + " must be a string");
    return v.get<std::string>();
}

std::vector<double> double_list(const ConfigTree& v, const std::string& where) {
    if (!v.is_array()) throw ConfigError(where + " must be an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const ConfigTree& e : v) {
        if (!e.is_number())
            throw ConfigError(where + " must hold numbers only");
        out.push_back(e.get<double>());
    }
    return out;
}

std::vector<int> int_list(const ConfigTree& v, const std::string& where) {
    if (!v.is_array()) throw ConfigError(where + " must be an array");
    std::vector<int> out;
    out.reserve(v.size());
    for (const ConfigTree& e : v) {
        if (!e.is_number_integer() && !e.is_number_unsigned())
            throw ConfigError(where + " must hold integers only");
        long long x = e.get<long long>();
        if (x < INT_MIN || x > INT_MAX)
            throw ConfigError(where + " entry is out of range");
        out.push_back(static_cast<int>(x));
    }
    return out;
}

std::vector<double> double_list_at(const ConfigTree& obj, const char* key,
                                   const std::string& where) {
    return double_list(require_key(obj, key, where),
                       where + "." + std::string(key));
}

int slot_from_name(const std::string& s, const std::string& where) {
    if (s == "d2") return kSlotD2;
    if (s == "d1") return kSlotD1;
    if (s == "value") return kSlotValue;
    if (s == "inhom") return kSlotInhom;
    throw ConfigError(where + ": unknown slot '" + s +
                      "' (expected d2, d1, value, or inhom)");
}

const char* slot_name(int slot) {
    switch (slot) {
        case kSlotD2: return "d2";
        case kSlotD1: return "d1";
        case kSlotValue: return "value";
        default: return "inhom";
    }
}

std::vector<PolynomialTerm> parse_terms(const ConfigTree& tree,
                                        ConfigTree& canonical) {
    const ConfigTree& list = require_key(tree, "term", "field");
    if (!is_table_array(list))
        throw ConfigError("term must be given as [[term]] tables");
    std::vector<PolynomialTerm> terms;
    canonical = ConfigTree::array();
    for (std::size_t ti = 0; ti < list.size(); ++ti) {
        const ConfigTree& t = list[ti];
        std::string where = "term " + std::to_string(ti);
        reject_unknown(t, {"coeff", "slots", "index", "power"}, where);
        PolynomialTerm term;
        term.coeff = double_at(t, "coeff", where);
        const ConfigTree& slots = require_key(t, "slots", where);
        std::vector<int> idx = int_list(require_key(t, "index", where),
                                        where + ".index");
        std::vector<int> pow = int_list(require_key(t, "power", where),
                                        where + ".power");
        if (!slots.is_array())
            throw ConfigError(where + ".slots must be an array");
        if (slots.size() != idx.size() || slots.size() != pow.size())
            throw ConfigError(where +
                              ": slots, index, and power need equal lengths");
        ConfigTree ct = ConfigTree::object();
        ct["coeff"] = term.coeff;
        ConfigTree cslots = ConfigTree::array();
        for (std::size_t k = 0; k < slots.size(); ++k) {
            if (!slots[k].is_string())
                throw ConfigError(where + ".slots must hold strings");
            PolynomialFactor f;
            f.slot = slot_from_name(slots[k].get<std::string>(), where);
            f.index = idx[k];
            f.exponent = pow[k];
            if (f.exponent < 1)
                throw ConfigError(where + ".power entries must be at least 1");
            term.factors.push_back(f);
            cslots.push_back(std::string(slot_name(f.slot)));
        }
        ct["slots"] = cslots;
        ct["index"] = idx;
        ct["power"] = pow;
        canonical.push_back(ct);
        terms.push_back(std::move(term));
    }
    return terms;
}

std::string resolve_path(const std::string& p, const std::string& base_dir) {
    if (p.empty() || p.front() == '/' || base_dir.empty()) return p;
    return base_dir + "/" + p;
}

std::string dir_of(const std::string& path) {
    std::size_t slash = path.find_last_of('/');
    return slash == std::string::npos ? std::string() : path.substr(0, slash);
}

}  // namespace

FieldBundle field_from_tree(const ConfigTree& tree) {
    if (!tree.is_object())
        throw ConfigError("field description must be a table");
    reject_unknown(tree, {"dim", "density", "domain", "interface", "layer",
                          "term"},
                   "field");
    int dim = int_at(tree, "dim", "field");
    if (dim < 1) throw ConfigError("field.dim must be at least 1");

    const ConfigTree& dens = require_table(tree, "density", "field");
    std::string name = string_at(dens, "name", "density");
    FieldBundle bundle;
    ConfigTree dsec = ConfigTree::object();
    dsec["name"] = name;
    ConfigTree canonical_terms;
    bool has_terms = false;
    if (name == "modica_mortola") {
        reject_unknown(dens, {"name", "components"}, "density");
        int comps =
            dens.contains("components") ? int_at(dens, "components", "density")
                                        : 1;
        bundle.density = make_modica_mortola(dim, comps);
        dsec["components"] = comps;
    } else if (name == "aviles_giga") {
        reject_unknown(dens, {"name"}, "density");
        bundle.density = make_aviles_giga(dim);
    } else if (name == "two_gradient_well") {
        reject_unknown(dens, {"name", "rows", "well_a", "well_b"}, "density");
        int rows = int_at(dens, "rows", "density");
        std::vector<double> a = double_list_at(dens, "well_a", "density");
        std::vector<double> b = double_list_at(dens, "well_b", "density");
        bundle.density = make_two_gradient_well(dim, rows, a, b);
        dsec["rows"] = rows;
        dsec["well_a"] = a;
        dsec["well_b"] = b;
    } else if (name == "polynomial") {
        reject_unknown(dens, {"name", "order", "grad_rows", "divfree_rows",
                              "unconstrained", "inhom", "label"},
                       "density");
        CompositeShape shape;
        shape.dim = dim;
        shape.grad_rows = int_at(dens, "grad_rows", "density");
        shape.divfree_rows = int_at(dens, "divfree_rows", "density");
        shape.unconstrained_dim = int_at(dens, "unconstrained", "density");
        shape.inhom_dim = int_at(dens, "inhom", "density");
        int order = int_at(dens, "order", "density");
        std::string label = dens.contains("label")
                                ? string_at(dens, "label", "density")
                                : "polynomial";
        std::vector<PolynomialTerm> terms = parse_terms(tree, canonical_terms);
        bundle.density = make_polynomial(shape, order, std::move(terms), label);
        dsec["order"] = order;
        dsec["grad_rows"] = shape.grad_rows;
        dsec["divfree_rows"] = shape.divfree_rows;
        dsec["unconstrained"] = shape.unconstrained_dim;
        dsec["inhom"] = shape.inhom_dim;
        dsec["label"] = label;
        has_terms = true;
    } else {
        throw ConfigError("unknown density '" + name + "'");
    }
    if (!has_terms && tree.contains("term"))
        throw ConfigError("term tables require the polynomial density");
    bundle.density_tree["density"] = dsec;
    if (has_terms) bundle.density_tree["term"] = canonical_terms;

    const CompositeShape& shape = bundle.density->shape();
    PiecewiseField& field = bundle.field;
    field.shape = shape;

    const ConfigTree& dom = require_table(tree, "domain", "field");
    reject_unknown(dom, {"min", "max"}, "domain");
    field.domain_min = double_list_at(dom, "min", "domain");
    field.domain_max = double_list_at(dom, "max", "domain");
    if (static_cast<int>(field.domain_min.size()) != dim ||
        static_cast<int>(field.domain_max.size()) != dim)
        throw ConfigError("domain.min and domain.max need dim entries");

    int nv = dim - 1;
    if (tree.contains("interface")) {
        const ConfigTree& ifs = tree["interface"];
        if (!ifs.is_array())
            throw ConfigError("interface must be given as [[interface]] tables");
        for (std::size_t i = 0; i < ifs.size(); ++i) {
            const ConfigTree& e = ifs[i];
            if (!e.is_object())
                throw ConfigError(
                    "interface must be given as [[interface]] tables");
            std::string where = "interface " + std::to_string(i);
            reject_unknown(e, {"axis", "u_min", "u_max", "g_coeff", "g_exps"},
                           where);
            GraphInterface gi;
            gi.axis = e.contains("axis") ? int_at(e, "axis", where) : 0;
            if (nv > 0) {
                gi.u_min = double_list(require_key(e, "u_min", where),
                                       where + ".u_min");
                gi.u_max = double_list(require_key(e, "u_max", where),
                                       where + ".u_max");
            } else {
                if (e.contains("u_min"))
                    gi.u_min = double_list(e["u_min"], where + ".u_min");
                if (e.contains("u_max"))
                    gi.u_max = double_list(e["u_max"], where + ".u_max");
            }
            if (static_cast<int>(gi.u_min.size()) != nv ||
                static_cast<int>(gi.u_max.size()) != nv)
                throw ConfigError(where +
                                  ": u_min and u_max need dim - 1 entries");
            gi.g.nvars = nv;
            gi.g.coeff = double_list(require_key(e, "g_coeff", where),
                                     where + ".g_coeff");
            if (gi.g.coeff.empty())
                throw ConfigError(where + ".g_coeff must not be empty");
            if (e.contains("g_exps")) {
                const ConfigTree& rows = e["g_exps"];
                if (!rows.is_array() || rows.size() != gi.g.coeff.size())
                    throw ConfigError(where +
                                      ".g_exps needs one row per g_coeff "
                                      "entry");
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    std::vector<int> row =
                        int_list(rows[r], where + ".g_exps row");
                    if (static_cast<int>(row.size()) != nv)
                        throw ConfigError(where +
                                          ".g_exps rows need dim - 1 entries");
                    for (int x : row) {
                        if (x < 0)
                            throw ConfigError(
                                where + ".g_exps entries must be nonnegative");
                        gi.g.exps.push_back(x);
                    }
                }
            } else {
                gi.g.exps.assign(
                    static_cast<std::size_t>(gi.g.coeff.size()) *
                        static_cast<std::size_t>(nv),
                    0);
            }
            field.interfaces.push_back(std::move(gi));
        }
    }

    const ConfigTree& lays = require_key(tree, "layer", "field");
    if (!is_table_array(lays))
        throw ConfigError("layer must be given as [[layer]] tables");
    for (std::size_t i = 0; i < lays.size(); ++i) {
        const ConfigTree& e = lays[i];
        std::string where = "layer " + std::to_string(i);
        reject_unknown(e, {"state", "f"}, where);
        LayerValue lv;
        lv.state = double_list(require_key(e, "state", where),
                               where + ".state");
        if (static_cast<int>(lv.state.size()) != shape.state_size())
            throw ConfigError(where + ".state needs " +
                              std::to_string(shape.state_size()) + " entries");
        if (e.contains("f"))
            lv.inhom = double_list(e["f"], where + ".f");
        if (static_cast<int>(lv.inhom.size()) != shape.inhom_dim)
            throw ConfigError(where + ".f needs " +
                              std::to_string(shape.inhom_dim) + " entries");
        field.layers.push_back(std::move(lv));
    }

    field.check_structure();
    return bundle;
}

ConfigTree field_to_tree(const FieldBundle& bundle) {
    const PiecewiseField& f = bundle.field;
    ConfigTree out = ConfigTree::object();
    out["dim"] = f.dim();
    if (bundle.density_tree.contains("density"))
        out["density"] = bundle.density_tree["density"];
    ConfigTree dom = ConfigTree::object();
    dom["min"] = f.domain_min;
    dom["max"] = f.domain_max;
    out["domain"] = dom;
    if (bundle.density_tree.contains("term"))
        out["term"] = bundle.density_tree["term"];
    if (!f.interfaces.empty()) {
        ConfigTree ifs = ConfigTree::array();
        for (const GraphInterface& gi : f.interfaces) {
            ConfigTree e = ConfigTree::object();
            e["axis"] = gi.axis;
            e["u_min"] = gi.u_min;
            e["u_max"] = gi.u_max;
            e["g_coeff"] = gi.g.coeff;
            ConfigTree rows = ConfigTree::array();
            for (int t = 0; t < gi.g.terms(); ++t) {
                ConfigTree row = ConfigTree::array();
                for (int v = 0; v < gi.g.nvars; ++v)
                    row.push_back(gi.g.exps[static_cast<std::size_t>(t) *
                                                gi.g.nvars +
                                            v]);
                rows.push_back(row);
            }
            e["g_exps"] = rows;
            ifs.push_back(e);
        }
        out["interface"] = ifs;
    }
    ConfigTree lays = ConfigTree::array();
    for (const LayerValue& lv : f.layers) {
        ConfigTree e = ConfigTree::object();
        e["state"] = lv.state;
        e["f"] = lv.inhom;
        lays.push_back(e);
    }
    out["layer"] = lays;
    return out;
}

FieldBundle load_field_file(const std::string& path) {
    ConfigTree tree = load_config_file(path);
    try {
        return field_from_tree(tree);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

RunConfig run_config_from_tree(const ConfigTree& tree,
                               const std::string& base_dir) {
    if (!tree.is_object()) throw ConfigError("run config must be a table");
    reject_unknown(tree,
                   {"field", "output_dir", "workers", "seed", "interface",
                    "e1", "eper", "kernel", "recover", "limit", "scan"},
                   "run config");
    RunConfig rc;
    if (const char* env = std::getenv("TRANSLAYER_WORKERS")) {
        char* end = nullptr;
        long w = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && w >= 1 && w <= 4096)
            rc.workers = static_cast<int>(w);
    }
    if (tree.contains("field"))
        rc.field_path =
            resolve_path(string_at(tree, "field", "run config"), base_dir);
    if (tree.contains("output_dir"))
        rc.output_dir = string_at(tree, "output_dir", "run config");
    if (tree.contains("workers")) {
        rc.workers = int_at(tree, "workers", "run config");
        if (rc.workers < 1 || rc.workers > 4096)
            throw ConfigError("workers must be between 1 and 4096");
    }
    if (tree.contains("seed")) rc.seed = u64_at(tree, "seed", "run config");
    if (tree.contains("interface")) {
        rc.interface_index = int_at(tree, "interface", "run config");
        if (rc.interface_index < 0)
            throw ConfigError("interface must be nonnegative");
    }

    if (tree.contains("e1")) {
        const ConfigTree& s = require_table(tree, "e1", "run config");
        reject_unknown(s, {"grid_n", "l_grid", "ramp", "clamp_extra"}, "e1");
        if (s.contains("grid_n")) {
            rc.e1_grid_n = int_at(s, "grid_n", "e1");
            if (rc.e1_grid_n < 16)
                throw ConfigError("e1.grid_n must be at least 16");
        }
        if (s.contains("l_grid")) {
            rc.e1_l_grid = double_list(s["l_grid"], "e1.l_grid");
            for (double l : rc.e1_l_grid)
                if (!(l > 0.0))
                    throw ConfigError("e1.l_grid entries must be positive");
        }
        if (s.contains("ramp")) {
            rc.ramp = string_at(s, "ramp", "e1");
            if (rc.ramp != "quintic" && rc.ramp != "kernel")
                throw ConfigError("e1.ramp must be 'quintic' or 'kernel'");
        }
        if (s.contains("clamp_extra"))
            rc.e1_clamp_extra = bool_at(s, "clamp_extra", "e1");
    }

    if (tree.contains("eper")) {
        const ConfigTree& s = require_table(tree, "eper", "run config");
        reject_unknown(s,
                       {"normal_cells", "tangential_cells", "l_grid",
                        "kick_seed", "kick_amplitude", "clamp_extra"},
                       "eper");
        if (s.contains("normal_cells")) {
            rc.normal_cells = int_at(s, "normal_cells", "eper");
            if (rc.normal_cells < 4)
                throw ConfigError("eper.normal_cells must be at least 4");
        }
        if (s.contains("tangential_cells")) {
            rc.tangential_cells = int_at(s, "tangential_cells", "eper");
            if (rc.tangential_cells < 1)
                throw ConfigError("eper.tangential_cells must be at least 1");
        }
        if (s.contains("l_grid")) {
            rc.eper_l_grid = double_list(s["l_grid"], "eper.l_grid");
            for (double l : rc.eper_l_grid)
                if (!(l > 0.0))
                    throw ConfigError("eper.l_grid entries must be positive");
        }
        if (s.contains("kick_seed"))
            rc.kick_seed = u64_at(s, "kick_seed", "eper");
        if (s.contains("kick_amplitude")) {
            rc.kick_amplitude = double_at(s, "kick_amplitude", "eper");
            if (!(rc.kick_amplitude >= 0.0))
                throw ConfigError("eper.kick_amplitude must be nonnegative");
        }
        if (s.contains("clamp_extra"))
            rc.eper_clamp_extra = bool_at(s, "clamp_extra", "eper");
    }

    if (tree.contains("kernel")) {
        const ConfigTree& s = require_table(tree, "kernel", "run config");
        reject_unknown(s, {"type", "profile_resolution"}, "kernel");
        if (s.contains("type")) {
            std::string t = string_at(s, "type", "kernel");
            if (t == "smooth_bump")
                rc.kernel_type = RadialKernel::Type::SmoothBump;
            else if (t == "poly_bump")
                rc.kernel_type = RadialKernel::Type::PolyBump;
            else
                throw ConfigError(
                    "kernel.type must be 'smooth_bump' or 'poly_bump'");
        }
        if (s.contains("profile_resolution")) {
            rc.profile_resolution = int_at(s, "profile_resolution", "kernel");
            if (rc.profile_resolution < 64)
                throw ConfigError(
                    "kernel.profile_resolution must be at least 64");
        }
    }

    if (tree.contains("limit")) {
        const ConfigTree& s = require_table(tree, "limit", "run config");
        reject_unknown(s, {"quadrature"}, "limit");
        if (s.contains("quadrature")) {
            rc.limit_quadrature = int_at(s, "quadrature", "limit");
            if (rc.limit_quadrature < 16)
                throw ConfigError("limit.quadrature must be at least 16");
        }
    }

    if (tree.contains("recover")) {
        const ConfigTree& s = require_table(tree, "recover", "run config");
        reject_unknown(s,
                       {"epsilons", "cells_per_epsilon", "z_resolution",
                        "mean_preserving", "modified", "modified_l"},
                       "recover");
        if (s.contains("epsilons")) {
            rc.epsilons = double_list(s["epsilons"], "recover.epsilons");
            for (double e : rc.epsilons)
                if (!(e > 0.0))
                    throw ConfigError(
                        "recover.epsilons entries must be positive");
        }
        if (s.contains("cells_per_epsilon")) {
            rc.cells_per_epsilon = int_at(s, "cells_per_epsilon", "recover");
            if (rc.cells_per_epsilon < 16)
                throw ConfigError(
                    "recover.cells_per_epsilon must be at least 16");
        }
        if (s.contains("z_resolution")) {
            rc.z_resolution = int_at(s, "z_resolution", "recover");
            if (rc.z_resolution < 4)
                throw ConfigError("recover.z_resolution must be at least 4");
        }
        if (s.contains("mean_preserving"))
            rc.mean_preserving = bool_at(s, "mean_preserving", "recover");
        if (s.contains("modified"))
            rc.modified = bool_at(s, "modified", "recover");
        if (s.contains("modified_l")) {
            rc.modified_l = double_at(s, "modified_l", "recover");
            if (!(rc.modified_l > 0.0))
                throw ConfigError("recover.modified_l must be positive");
        }
    }

    if (tree.contains("scan")) {
        const ConfigTree& s = require_table(tree, "scan", "run config");
        reject_unknown(s, {"l_grid"}, "scan");
        if (s.contains("l_grid")) {
            rc.scan_l_grid = double_list(s["l_grid"], "scan.l_grid");
            for (double l : rc.scan_l_grid)
                if (!(l > 0.0))
                    throw ConfigError("scan.l_grid entries must be positive");
        }
    }
    return rc;
}

RunConfig load_run_config(const std::string& path) {
    ConfigTree tree = load_config_file(path);
    try {
        return run_config_from_tree(tree, dir_of(path));
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

}  // namespace translayer
