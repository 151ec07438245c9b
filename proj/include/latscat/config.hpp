#ifndef LATSCAT_CONFIG_HPP
#define LATSCAT_CONFIG_HPP

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>

#include "potential.hpp"

namespace latscat {

// Units: energies (lambda, dispersion coefficients, eps) in units of the hopping
// scale of p0; lengths (width, center, L, potential_radius) in lattice spacings;
// x_max in inverse torus-angle units (same as lattice spacings).
struct RunConfig {
    // [dispersion]
    std::string dispersion = "square";  // square | triangular | table
    int dim = 2;
    std::vector<std::pair<Site, double>> coeffs;  // table rows
    // [potential]
    std::string potential_kind;  // zero | gaussian | power_law | compact | table
    double width = 1.0;
    std::optional<double> decay;
    Vec center{0, 0};
    std::string table_file;
    // [surface]
    std::vector<double> lambdas;
    int n_target = 64;
    // [quantize]
    double x_max = 0.0;  // 0: derived from the potential box
    int n_x = 64;
    std::string quantization = "weyl";  // weyl | right
    std::string phase_window = "box";   // box | full
    // [solver]
    std::vector<int> L_list;
    std::vector<double> eps_list;
    std::string boundary = "hard";  // hard | absorbing
    int absorb_width = 0;
    std::optional<int> potential_radius;
    // [verify]
    std::vector<double> kappa_sweep;
    int mode_lo = 4, mode_hi = 16;
    std::string mutation = "none";  // none | double_phase | arc_length | sign_flip
    // [run]
    std::string output_dir = "out";
    std::uint64_t seed = 0;

    std::string source_dir;  // directory of the config file, for relative paths
    std::map<std::string, int> lines;  // field -> line of definition, for diagnostics
};

namespace detail {

inline std::string trim(const std::string& s) {
    auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::string tok;
    std::istringstream is(s);
    while (is >> tok) {
        // allow comma-separated lists too
        std::string part;
        std::istringstream ps(tok);
        while (std::getline(ps, part, ','))
            if (!part.empty()) out.push_back(part);
    }
    return out;
}

inline std::string fmt_double(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

struct FieldReader {
    std::string origin;
    std::string key;
    int line;
    std::string value;

    [[noreturn]] void fail(const std::string& msg) const {
        throw Error(ErrorKind::Config, origin + ":" + std::to_string(line) + ": field '" + key + "': " + msg);
    }
    double number(const std::string& tok) const {
        double v = 0;
        auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (r.ec != std::errc() || r.ptr != tok.data() + tok.size() || !std::isfinite(v))
            fail("expected a number, got '" + tok + "'");
        return v;
    }
    long integer(const std::string& tok) const {
        long v = 0;
        auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) fail("expected an integer, got '" + tok + "'");
        return v;
    }
    double as_double() const {
        auto t = split_ws(value);
        if (t.size() != 1) fail("expected one number");
        return number(t[0]);
    }
    long as_int() const {
        auto t = split_ws(value);
        if (t.size() != 1) fail("expected one integer");
        return integer(t[0]);
    }
    std::vector<double> as_doubles() const {
        std::vector<double> out;
        for (auto& t : split_ws(value)) out.push_back(number(t));
        if (out.empty()) fail("expected at least one number");
        return out;
    }
    std::vector<long> as_ints() const {
        std::vector<long> out;
        for (auto& t : split_ws(value)) out.push_back(integer(t));
        if (out.empty()) fail("expected at least one integer");
        return out;
    }
    std::string as_word(std::initializer_list<const char*> allowed) const {
        auto t = split_ws(value);
        if (t.size() != 1) fail("expected one word");
        for (auto* a : allowed)
            if (t[0] == a) return t[0];
        std::string opts;
        for (auto* a : allowed) opts += std::string(opts.empty() ? "" : "|") + a;
        fail("expected one of " + opts + ", got '" + t[0] + "'");
    }
};

}  // namespace detail

inline TrigPolynomial make_dispersion(const RunConfig& c) {
    if (c.dispersion == "square") return square_lattice(c.dim);
    if (c.dispersion == "triangular") return triangular_lattice();
    TrigPolynomial::Coeffs m;
    for (auto& [k, v] : c.coeffs) m[k] += v;
    return TrigPolynomial(c.dim, m, "table");
}

inline std::map<Site, double> load_potential_table(const std::string& path, int dim) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot open potential table '" + path + "'");
    std::map<Site, double> out;
    std::string line;
    int ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        line = detail::trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string part;
        std::istringstream ls(line);
        while (std::getline(ls, part, ',')) f.push_back(detail::trim(part));
        if (static_cast<int>(f.size()) != dim + 1)
            throw Error(ErrorKind::Config, path + ":" + std::to_string(ln) + ": expected " + std::to_string(dim + 1) +
                                               " columns (n_1,...,n_d,value)");
        try {
            Site n{std::stoi(f[0]), dim == 2 ? std::stoi(f[1]) : 0};
            out[n] = std::stod(f[dim]);
        } catch (const std::exception&) {
            throw Error(ErrorKind::Config, path + ":" + std::to_string(ln) + ": malformed row");
        }
    }
    return out;
}

// potential shape with unit coupling; kappa is applied by the sweep
inline LatticePotential make_shape(const RunConfig& c) {
    const int d = c.dim;
    if (c.potential_kind == "zero") return LatticePotential::zero(d);
    if (c.potential_kind == "gaussian") return LatticePotential::gaussian(d, 1.0, c.width, c.center);
    if (c.potential_kind == "compact") return LatticePotential::compact(d, 1.0, c.width, c.center);
    if (c.potential_kind == "power_law") return LatticePotential::power_law(d, 1.0, c.width, *c.decay, c.center);
    std::filesystem::path p(c.table_file);
    if (p.is_relative() && !c.source_dir.empty()) p = std::filesystem::path(c.source_dir) / p;
    return LatticePotential::table(d, load_potential_table(p.string(), d), *c.decay);
}

inline RunConfig parse_config(std::istream& in, const std::string& origin = "config") {
    RunConfig c;
    std::string section;
    std::string line;
    int ln = 0;
    std::map<std::string, detail::FieldReader> fields;
    std::vector<detail::FieldReader> coeff_rows;
    while (std::getline(in, line)) {
        ++ln;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw Error(ErrorKind::Config, origin + ":" + std::to_string(ln) + ": malformed section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            static const char* known[] = {"dispersion", "potential", "surface", "quantize", "solver", "verify", "run"};
            if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return section == k; }) ==
                std::end(known))
                throw Error(ErrorKind::Config, origin + ":" + std::to_string(ln) + ": unknown section [" + section + "]");
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::Config, origin + ":" + std::to_string(ln) + ": expected 'key = value'");
        if (section.empty())
            throw Error(ErrorKind::Config, origin + ":" + std::to_string(ln) + ": key outside of any section");
        std::string key = section + "." + detail::trim(line.substr(0, eq));
        detail::FieldReader fr{origin, key, ln, detail::trim(line.substr(eq + 1))};
        if (key == "dispersion.coeff") {
            coeff_rows.push_back(fr);
            continue;
        }
        if (fields.count(key)) fr.fail("defined twice (first on line " + std::to_string(fields.at(key).line) + ")");
        fields.emplace(key, fr);
    }

    static const char* allowed[] = {"dispersion.name",      "dispersion.dim",        "potential.kind",
                                    "potential.width",      "potential.decay",       "potential.center",
                                    "potential.table",      "surface.lambda",        "surface.n_target",
                                    "quantize.x_max",       "quantize.n_x",          "quantize.convention",
                                    "quantize.phase_window", "solver.L",             "solver.eps",
                                    "solver.boundary",      "solver.absorb_width",   "solver.potential_radius",
                                    "verify.kappa",         "verify.modes",          "verify.mutation",
                                    "run.output",           "run.seed"};
    for (auto& [k, fr] : fields)
        if (std::find_if(std::begin(allowed), std::end(allowed), [&](const char* a) { return k == a; }) ==
            std::end(allowed))
            fr.fail("unknown field");

    auto need = [&](const std::string& key) -> const detail::FieldReader& {
        auto it = fields.find(key);
        if (it == fields.end())
            throw Error(ErrorKind::Config, origin + ": missing required field '" + key + "' (no default)");
        c.lines[key] = it->second.line;
        return it->second;
    };
    auto opt = [&](const std::string& key) -> const detail::FieldReader* {
        auto it = fields.find(key);
        if (it == fields.end()) return nullptr;
        c.lines[key] = it->second.line;
        return &it->second;
    };

    c.dispersion = need("dispersion.name").as_word({"square", "triangular", "table"});
    if (auto* f = opt("dispersion.dim")) {
        long d = f->as_int();
        if (d != 1 && d != 2) f->fail("dimension must be 1 or 2");
        c.dim = static_cast<int>(d);
    } else if (c.dispersion == "triangular") {
        c.dim = 2;
    } else {
        need("dispersion.dim");
    }
    if (c.dispersion == "triangular" && c.dim != 2) fields.at("dispersion.dim").fail("triangular lattice is 2-dimensional");
    if (c.dispersion == "table") {
        if (coeff_rows.empty())
            throw Error(ErrorKind::Config, origin + ": table dispersion needs 'coeff = k_1 [k_2] c' rows");
        for (auto& fr : coeff_rows) {
            auto t = detail::split_ws(fr.value);
            if (static_cast<int>(t.size()) != c.dim + 1)
                fr.fail("expected " + std::to_string(c.dim + 1) + " entries: k_1 [k_2] coefficient");
            Site k{static_cast<int>(fr.integer(t[0])), c.dim == 2 ? static_cast<int>(fr.integer(t[1])) : 0};
            c.coeffs.push_back({k, fr.number(t[c.dim])});
        }
    } else if (!coeff_rows.empty()) {
        coeff_rows.front().fail("coefficient rows only apply to name = table");
    }

    c.potential_kind = need("potential.kind").as_word({"zero", "gaussian", "power_law", "compact", "table"});
    if (c.potential_kind != "zero" && c.potential_kind != "table") {
        auto& f = need("potential.width");
        c.width = f.as_double();
        if (!(c.width > 0)) f.fail("width must be positive");
    }
    if (c.potential_kind == "power_law" || c.potential_kind == "table") {
        auto& f = need("potential.decay");
        c.decay = f.as_double();
        if (!(*c.decay > 1.0)) f.fail("decay order mu must exceed 1");
    } else if (auto* f = opt("potential.decay")) {
        c.decay = f->as_double();
    }
    if (auto* f = opt("potential.center")) {
        auto v = f->as_doubles();
        if (static_cast<int>(v.size()) != c.dim) f->fail("center needs " + std::to_string(c.dim) + " entries");
        c.center = {v[0], c.dim == 2 ? v[1] : 0.0};
    }
    if (c.potential_kind == "table") {
        auto& f = need("potential.table");
        c.table_file = detail::trim(f.value);
    }

    c.lambdas = need("surface.lambda").as_doubles();
    if (auto* f = opt("surface.n_target")) {
        c.n_target = static_cast<int>(f->as_int());
        if (c.dim == 2 && c.n_target < 32) f->fail("n_target must be at least 32");
    }

    if (auto* f = opt("quantize.x_max")) {
        c.x_max = f->as_double();
        if (!(c.x_max > 0)) f->fail("x_max must be positive");
    }
    if (auto* f = opt("quantize.n_x")) {
        c.n_x = static_cast<int>(f->as_int());
        if (c.n_x < 4) f->fail("n_x must be at least 4");
    }
    if (auto* f = opt("quantize.convention")) c.quantization = f->as_word({"weyl", "right"});
    if (auto* f = opt("quantize.phase_window")) c.phase_window = f->as_word({"box", "full"});

    {
        auto& f = need("solver.L");
        for (long v : f.as_ints()) {
            if (v < 16) f.fail("box radius must be at least 16");
            c.L_list.push_back(static_cast<int>(v));
        }
        for (std::size_t k = 1; k < c.L_list.size(); ++k)
            if (c.L_list[k] <= c.L_list[k - 1]) f.fail("L list must be increasing");
    }
    {
        auto& f = need("solver.eps");
        c.eps_list = f.as_doubles();
        for (std::size_t k = 0; k < c.eps_list.size(); ++k) {
            if (!(c.eps_list[k] > 0)) f.fail("eps values must be positive");
            if (k && !(c.eps_list[k] < c.eps_list[k - 1])) f.fail("eps list must be decreasing");
        }
        if (c.eps_list.size() < 2) f.fail("at least two eps values are needed for extrapolation");
    }
    if (auto* f = opt("solver.boundary")) c.boundary = f->as_word({"hard", "absorbing"});
    if (auto* f = opt("solver.absorb_width")) c.absorb_width = static_cast<int>(f->as_int());
    if (auto* f = opt("solver.potential_radius")) {
        long r = f->as_int();
        if (r < 1) f->fail("potential radius must be positive");
        if (r > c.L_list.front()) f->fail("potential radius exceeds the smallest box");
        c.potential_radius = static_cast<int>(r);
    }

    {
        auto& f = need("verify.kappa");
        c.kappa_sweep = f.as_doubles();
        for (std::size_t k = 0; k < c.kappa_sweep.size(); ++k) {
            if (!(c.kappa_sweep[k] > 0) || c.kappa_sweep[k] > 0.2) f.fail("couplings must lie in (0, 0.2]");
            if (k && !(c.kappa_sweep[k] < c.kappa_sweep[k - 1])) f.fail("kappa sweep must be strictly decreasing");
        }
    }
    if (auto* f = opt("verify.modes")) {
        auto v = f->as_ints();
        if (v.size() != 2 || v[0] < 1 || v[1] <= v[0]) f->fail("modes needs 'lo hi' with 1 <= lo < hi");
        c.mode_lo = static_cast<int>(v[0]);
        c.mode_hi = static_cast<int>(v[1]);
    }
    if (auto* f = opt("verify.mutation")) c.mutation = f->as_word({"none", "double_phase", "arc_length", "sign_flip"});
    if (auto* f = opt("run.output")) c.output_dir = detail::trim(f->value);
    if (auto* f = opt("run.seed")) {
        long s = f->as_int();
        if (s < 0) f->fail("seed must be non-negative");
        c.seed = static_cast<std::uint64_t>(s);
    }

    // every lambda must clear the threshold gate of the declared dispersion
    TrigPolynomial p;
    try {
        p = make_dispersion(c);
    } catch (const Error& e) {
        throw Error(ErrorKind::Config, origin + ": dispersion: " + e.detail());
    }
    auto thr = thresholds(p, 64);
    for (double l : c.lambdas)
        if (!(thr.distance(l) >= 1e-3))
            fields.at("surface.lambda")
                .fail("lambda=" + detail::fmt_double(l) + " is within 1e-3 of a threshold (ThresholdTooClose)");
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot open config '" + path + "'");
    RunConfig c = parse_config(in, path);
    c.source_dir = std::filesystem::path(path).parent_path().string();
    return c;
}

inline std::string serialize(const RunConfig& c) {
    using detail::fmt_double;
    std::ostringstream os;
    auto list = [&](const auto& v) {
        std::string s;
        for (auto& x : v) {
            if (!s.empty()) s += ' ';
            if constexpr (std::is_floating_point_v<std::decay_t<decltype(x)>>)
                s += fmt_double(x);
            else
                s += std::to_string(x);
        }
        return s;
    };
    os << "[dispersion]\n";
    os << "name = " << c.dispersion << "\n";
    os << "dim = " << c.dim << "\n";
    for (auto& [k, v] : c.coeffs) {
        os << "coeff = " << k[0];
        if (c.dim == 2) os << ' ' << k[1];
        os << ' ' << fmt_double(v) << "\n";
    }
    os << "\n[potential]\n";
    os << "kind = " << c.potential_kind << "\n";
    if (c.potential_kind != "zero" && c.potential_kind != "table") os << "width = " << fmt_double(c.width) << "  # lattice spacings\n";
    if (c.decay) os << "decay = " << fmt_double(*c.decay) << "\n";
    os << "center = " << fmt_double(c.center[0]);
    if (c.dim == 2) os << ' ' << fmt_double(c.center[1]);
    os << "  # lattice spacings\n";
    if (!c.table_file.empty()) os << "table = " << c.table_file << "\n";
    os << "\n[surface]\n";
    os << "lambda = " << list(c.lambdas) << "  # energy, hopping units\n";
    os << "n_target = " << c.n_target << "\n";
    os << "\n[quantize]\n";
    if (c.x_max > 0) os << "x_max = " << fmt_double(c.x_max) << "  # lattice spacings\n";
    os << "n_x = " << c.n_x << "\n";
    os << "convention = " << c.quantization << "\n";
    os << "phase_window = " << c.phase_window << "\n";
    os << "\n[solver]\n";
    os << "L = " << list(c.L_list) << "  # box radius, sites\n";
    os << "eps = " << list(c.eps_list) << "  # energy, hopping units\n";
    os << "boundary = " << c.boundary << "\n";
    if (c.boundary == "absorbing") os << "absorb_width = " << c.absorb_width << "\n";
    if (c.potential_radius) os << "potential_radius = " << *c.potential_radius << "  # sites\n";
    os << "\n[verify]\n";
    os << "kappa = " << list(c.kappa_sweep) << "  # energy, hopping units\n";
    os << "modes = " << c.mode_lo << ' ' << c.mode_hi << "\n";
    os << "mutation = " << c.mutation << "\n";
    os << "\n[run]\n";
    os << "output = " << c.output_dir << "\n";
    os << "seed = " << c.seed << "\n";
    return os.str();
}

}  // namespace latscat

#endif
