#include "bsnsch/config.hpp"

#include "bsnsch/common.hpp"

#include <json.hpp>

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace bsnsch {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& rule, const std::string& detail)
{
    throw config_error("config: " + rule + ": " + detail);
}

double get_num(const json& j, const char* key, double fallback)
{
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) fail(key, "expected a number");
    return j[key].get<double>();
}

int get_int(const json& j, const char* key, int fallback)
{
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number_integer()) fail(key, "expected an integer");
    return j[key].get<int>();
}

std::string get_str(const json& j, const char* key, const std::string& fallback)
{
    if (!j.contains(key)) return fallback;
    if (!j[key].is_string()) fail(key, "expected a string");
    return j[key].get<std::string>();
}

// Extended real: a number, or the strings "inf"/"infinity".
double get_extended(const json& j, const char* key, double fallback)
{
    if (!j.contains(key)) return fallback;
    const json& v = j[key];
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s == "inf" || s == "infinity" || s == "Inf") return infinite;
        fail(key, "unrecognized extended-real string '" + s + "'");
    }
    fail(key, "expected number or \"inf\"");
}

ScalarCoefficient coeff_from_json(const json& j, const char* key)
{
    if (!j.contains(key)) return ScalarCoefficient::constant(1.0);
    const json& c = j[key];
    const std::string kind = get_str(c, "kind", "constant");
    if (kind == "constant") return ScalarCoefficient::constant(get_num(c, "value", 1.0));
    if (kind == "affine") return ScalarCoefficient::affine(get_num(c, "v_minus", 1.0), get_num(c, "v_plus", 1.0));
    if (kind == "quadratic")
        return ScalarCoefficient::quadratic(get_num(c, "c0", 1.0), get_num(c, "c1", 0.0), get_num(c, "c2", 0.0));
    fail(key, "unknown coefficient kind '" + kind + "'");
}

json coeff_to_json(const ScalarCoefficient& c)
{
    json j;
    switch (c.kind) {
        case ScalarCoefficient::Kind::Constant:
            j["kind"] = "constant";
            j["value"] = c.c0;
            break;
        case ScalarCoefficient::Kind::Affine:
            j["kind"] = "affine";
            j["v_minus"] = c.c0 - c.c1;
            j["v_plus"] = c.c0 + c.c1;
            break;
        case ScalarCoefficient::Kind::Quadratic:
            j["kind"] = "quadratic";
            j["c0"] = c.c0;
            j["c1"] = c.c1;
            j["c2"] = c.c2;
            break;
    }
    return j;
}

PotentialSpec potential_from_json(const json& j, const char* key)
{
    if (!j.contains(key)) return make_log_potential(1.0, 2.0);
    const json& p = j[key];
    const std::string kind = get_str(p, "kind", "logarithmic");
    if (kind == "logarithmic") return make_log_potential(get_num(p, "theta", 1.0), get_num(p, "theta_c", 2.0));
    if (kind == "polynomial") {
        if (!p.contains("f0_coeffs") || !p["f0_coeffs"].is_array()) fail(key, "polynomial needs f0_coeffs array");
        std::vector<double> c;
        for (const auto& v : p["f0_coeffs"]) {
            if (!v.is_number()) fail(key, "f0_coeffs entries must be numbers");
            c.push_back(v.get<double>());
        }
        return make_poly_potential(std::move(c), get_num(p, "c_f", 0.0));
    }
    fail(key, "unknown potential kind '" + kind + "'");
}

json potential_to_json(const PotentialSpec& p)
{
    json j;
    if (const auto* lp = std::get_if<LogPotential>(&p.kind)) {
        j["kind"] = "logarithmic";
        j["theta"] = lp->theta;
        j["theta_c"] = lp->theta_c;
    } else {
        const auto& pp = std::get<PolyPotential>(p.kind);
        j["kind"] = "polynomial";
        j["f0_coeffs"] = pp.f0_coeffs;
        j["c_f"] = pp.c_f;
    }
    return j;
}

RunConfig config_from_json(const json& root)
{
    RunConfig cfg;
    if (!root.is_object()) fail("root", "configuration must be an object");

    if (root.contains("mesh")) {
        const json& m = root["mesh"];
        cfg.mesh.n_rings = get_int(m, "n_rings", cfg.mesh.n_rings);
        cfg.mesh.radius = get_num(m, "radius", cfg.mesh.radius);
        if (cfg.mesh.n_rings < 1) fail("mesh.n_rings", "must be >= 1");
        if (!(cfg.mesh.radius > 0.0)) fail("mesh.radius", "must be positive");
    }
    if (root.contains("model")) {
        const json& m = root["model"];
        cfg.params.K = get_extended(m, "K", cfg.params.K);
        cfg.params.L = get_extended(m, "L", cfg.params.L);
        cfg.params.alpha = get_num(m, "alpha", cfg.params.alpha);
        cfg.params.beta = get_num(m, "beta", cfg.params.beta);
        if (m.contains("rho")) {
            if (!m["rho"].is_array() || m["rho"].size() != 2) fail("model.rho", "expected [rho1, rho2]");
            cfg.params.rho1 = m["rho"][0].get<double>();
            cfg.params.rho2 = m["rho"][1].get<double>();
        }
        if (m.contains("sigma")) {
            if (!m["sigma"].is_array() || m["sigma"].size() != 2) fail("model.sigma", "expected [sigma1, sigma2]");
            cfg.params.sigma1 = m["sigma"][0].get<double>();
            cfg.params.sigma2 = m["sigma"][1].get<double>();
        }
        cfg.params.coeffs.m_bulk = coeff_from_json(m, "mobility_bulk");
        cfg.params.coeffs.m_surf = coeff_from_json(m, "mobility_surf");
        cfg.params.coeffs.nu_bulk = coeff_from_json(m, "viscosity_bulk");
        cfg.params.coeffs.nu_surf = coeff_from_json(m, "viscosity_surf");
        if (m.contains("gamma")) {
            cfg.params.coeffs.gamma.gamma0 = get_num(m["gamma"], "gamma0", 1.0);
            cfg.params.coeffs.gamma.gamma1 = get_num(m["gamma"], "gamma1", 0.0);
        }
        cfg.params.F = potential_from_json(m, "potential_bulk");
        cfg.params.G = potential_from_json(m, "potential_surf");
        if (m.contains("a7"))
            cfg.params.a7_constants = {get_num(m["a7"], "c_sharp", 1.0), get_num(m["a7"], "gamma_sharp", 1.0)};
    }
    if (root.contains("time")) {
        const json& t = root["time"];
        cfg.time.dt = get_num(t, "dt", cfg.time.dt);
        cfg.time.n_steps = get_int(t, "n_steps", cfg.time.n_steps);
        cfg.time.output_stride = get_int(t, "output_stride", cfg.time.output_stride);
        if (!(cfg.time.dt > 0.0)) fail("time.dt", "must be positive");
        if (cfg.time.n_steps < 0) fail("time.n_steps", "must be nonnegative");
    }
    if (root.contains("scheme")) {
        const json& s = root["scheme"];
        const std::string kind = get_str(s, "kind", "fully-implicit");
        if (kind == "fully-implicit")
            cfg.scheme.scheme = CHScheme::FullyImplicit;
        else if (kind == "convex-splitting")
            cfg.scheme.scheme = CHScheme::ConvexSplitting;
        else
            fail("scheme.kind", "expected 'fully-implicit' or 'convex-splitting'");
        cfg.scheme.newton_tol = get_num(s, "newton_tol", cfg.scheme.newton_tol);
        cfg.scheme.max_newton = get_int(s, "max_newton", cfg.scheme.max_newton);
        cfg.scheme.line_search_shrink = get_num(s, "line_search_shrink", cfg.scheme.line_search_shrink);
        cfg.scheme.picard_sweeps = get_int(s, "picard_sweeps", cfg.scheme.picard_sweeps);
        cfg.scheme.max_dt_halvings = get_int(s, "max_dt_halvings", cfg.scheme.max_dt_halvings);
    }
    if (root.contains("initial")) {
        const json& i = root["initial"];
        cfg.initial.kind = get_str(i, "kind", cfg.initial.kind);
        if (cfg.initial.kind != "constant" && cfg.initial.kind != "cosine" && cfg.initial.kind != "random_smooth")
            fail("initial.kind", "expected constant | cosine | random_smooth");
        cfg.initial.amplitude = get_num(i, "amplitude", cfg.initial.amplitude);
        cfg.initial.offset = get_num(i, "offset", cfg.initial.offset);
        cfg.initial.mode_x = get_int(i, "mode_x", cfg.initial.mode_x);
        cfg.initial.mode_y = get_int(i, "mode_y", cfg.initial.mode_y);
        cfg.initial.velocity = get_str(i, "velocity", cfg.initial.velocity);
        if (cfg.initial.velocity != "zero" && cfg.initial.velocity != "rigid")
            fail("initial.velocity", "expected zero | rigid");
        cfg.initial.omega0 = get_num(i, "omega0", cfg.initial.omega0);
    }
    if (root.contains("continuous_dependence")) {
        const json& c = root["continuous_dependence"];
        if (c.contains("epsilons")) {
            if (!c["epsilons"].is_array()) fail("continuous_dependence.epsilons", "expected an array");
            cfg.cd.epsilons.clear();
            for (const auto& v : c["epsilons"]) cfg.cd.epsilons.push_back(v.get<double>());
        }
        cfg.cd.time = get_num(c, "time", cfg.cd.time);
    }
    cfg.out_dir = get_str(root, "out_dir", cfg.out_dir);
    if (root.contains("seed")) cfg.seed = root["seed"].get<std::uint64_t>();
    if (root.contains("experimental")) cfg.experimental = root["experimental"].get<bool>();
    return cfg;
}

json extended_to_json(double v)
{
    if (std::isinf(v)) return json("inf");
    return json(v);
}

// Minimal TOML reader covering the configuration subset: [section.sub]
// headers, dotted keys, numbers (including inf), strings, booleans and flat
// arrays. Comments start with '#'.
json parse_toml_subset(const std::string& text)
{
    json root = json::object();
    std::string prefix;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;

    auto set_path = [&](const std::string& dotted, json value) {
        json* cur = &root;
        std::string token;
        std::istringstream ps(dotted);
        std::vector<std::string> parts;
        while (std::getline(ps, token, '.'))
            if (!token.empty()) parts.push_back(token);
        if (parts.empty()) fail("toml", "empty key");
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) cur = &((*cur)[parts[i]]);
        (*cur)[parts.back()] = std::move(value);
    };

    std::function<json(const std::string&)> parse_value = [&](const std::string& raw) -> json {
        std::string v = raw;
        auto trim = [](std::string& s) {
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
        };
        trim(v);
        if (v.empty()) fail("toml", "missing value at line " + std::to_string(lineno));
        if (v.front() == '"') {
            if (v.size() < 2 || v.back() != '"') fail("toml", "unterminated string at line " + std::to_string(lineno));
            return json(v.substr(1, v.size() - 2));
        }
        if (v.front() == '[') {
            if (v.back() != ']') fail("toml", "unterminated array at line " + std::to_string(lineno));
            json arr = json::array();
            std::string inner = v.substr(1, v.size() - 2);
            std::string item;
            std::istringstream as(inner);
            while (std::getline(as, item, ',')) {
                std::string it = item;
                trim(it);
                if (!it.empty()) arr.push_back(parse_value(it));
            }
            return arr;
        }
        if (v == "true") return json(true);
        if (v == "false") return json(false);
        if (v == "inf" || v == "+inf") return json("inf");
        char* end = nullptr;
        const double num = std::strtod(v.c_str(), &end);
        if (end == v.c_str() || *end != '\0') fail("toml", "unparsable value '" + v + "' at line " + std::to_string(lineno));
        if (v.find('.') == std::string::npos && v.find('e') == std::string::npos &&
            v.find('E') == std::string::npos && std::abs(num) < 9.0e15 && num == std::floor(num))
            return json(static_cast<std::int64_t>(num));
        return json(num);
    };

    while (std::getline(is, line)) {
        ++lineno;
        // Strip comments outside of strings.
        bool in_str = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_str = !in_str;
            if (line[i] == '#' && !in_str) {
                line.resize(i);
                break;
            }
        }
        std::string s = line;
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail("toml", "malformed section header at line " + std::to_string(lineno));
            prefix = s.substr(1, s.size() - 2);
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) fail("toml", "expected key = value at line " + std::to_string(lineno));
        std::string key = s.substr(0, eq);
        while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back()))) key.pop_back();
        const std::string dotted = prefix.empty() ? key : prefix + "." + key;
        set_path(dotted, parse_value(s.substr(eq + 1)));
    }
    return root;
}

} // namespace

RunConfig parse_config_json_text(const std::string& text)
{
    json root;
    try {
        root = json::parse(text);
    } catch (const std::exception& e) {
        fail("json", e.what());
    }
    return config_from_json(root);
}

RunConfig parse_config(const std::string& path)
{
    std::ifstream is(path);
    if (!is) fail("file", "cannot open '" + path + "'");
    std::stringstream buf;
    buf << is.rdbuf();
    const std::string text = buf.str();

    const auto dot = path.find_last_of('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    if (ext == "json") return parse_config_json_text(text);
    if (ext == "toml") return config_from_json(parse_toml_subset(text));
    fail("file", "unsupported extension '" + ext + "' (expected .json or .toml)");
}

std::string config_to_json(const RunConfig& cfg)
{
    json j;
    j["mesh"] = {{"n_rings", cfg.mesh.n_rings}, {"radius", cfg.mesh.radius}};
    json m;
    m["K"] = extended_to_json(cfg.params.K);
    m["L"] = extended_to_json(cfg.params.L);
    m["alpha"] = cfg.params.alpha;
    m["beta"] = cfg.params.beta;
    m["rho"] = {cfg.params.rho1, cfg.params.rho2};
    m["sigma"] = {cfg.params.sigma1, cfg.params.sigma2};
    m["mobility_bulk"] = coeff_to_json(cfg.params.coeffs.m_bulk);
    m["mobility_surf"] = coeff_to_json(cfg.params.coeffs.m_surf);
    m["viscosity_bulk"] = coeff_to_json(cfg.params.coeffs.nu_bulk);
    m["viscosity_surf"] = coeff_to_json(cfg.params.coeffs.nu_surf);
    m["gamma"] = {{"gamma0", cfg.params.coeffs.gamma.gamma0}, {"gamma1", cfg.params.coeffs.gamma.gamma1}};
    m["potential_bulk"] = potential_to_json(cfg.params.F);
    m["potential_surf"] = potential_to_json(cfg.params.G);
    if (cfg.params.a7_constants)
        m["a7"] = {{"c_sharp", cfg.params.a7_constants->first}, {"gamma_sharp", cfg.params.a7_constants->second}};
    j["model"] = m;
    j["time"] = {{"dt", cfg.time.dt}, {"n_steps", cfg.time.n_steps}, {"output_stride", cfg.time.output_stride}};
    j["scheme"] = {{"kind", cfg.scheme.scheme == CHScheme::FullyImplicit ? "fully-implicit" : "convex-splitting"},
                   {"newton_tol", cfg.scheme.newton_tol},
                   {"max_newton", cfg.scheme.max_newton},
                   {"line_search_shrink", cfg.scheme.line_search_shrink},
                   {"picard_sweeps", cfg.scheme.picard_sweeps},
                   {"max_dt_halvings", cfg.scheme.max_dt_halvings}};
    j["initial"] = {{"kind", cfg.initial.kind},     {"amplitude", cfg.initial.amplitude},
                    {"offset", cfg.initial.offset}, {"mode_x", cfg.initial.mode_x},
                    {"mode_y", cfg.initial.mode_y}, {"velocity", cfg.initial.velocity},
                    {"omega0", cfg.initial.omega0}};
    j["continuous_dependence"] = {{"epsilons", cfg.cd.epsilons}, {"time", cfg.cd.time}};
    j["out_dir"] = cfg.out_dir;
    j["seed"] = cfg.seed;
    j["experimental"] = cfg.experimental;
    return j.dump(2) + "\n";
}

} // namespace bsnsch
