#include "it2mpc/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#if __has_include(<json.hpp>)
#include <json.hpp>
#else
#include <nlohmann/json.hpp>
#endif

#include "it2mpc/errors.hpp"

namespace it2mpc {

namespace {

using nlohmann::json;

std::string idx(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }
std::string sub(const std::string& path, const char* key) { return path.empty() ? key : path + "." + key; }

// Rejects keys outside `allowed` so that typos do not silently fall back to defaults.
void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError("expected an object", path);
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items()) {
        (void)v;
        if (!ok.count(k)) throw ConfigError("unknown key '" + k + "'", path);
    }
}

const json& need(const json& j, const char* key, const std::string& path) {
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError("missing required key", sub(path, key));
    return *it;
}

double as_num(const json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError("expected a number", path);
    double v = j.get<double>();
    if (!std::isfinite(v)) throw ConfigError("must be finite", path);
    return v;
}

long long as_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ConfigError("expected an integer", path);
    return j.get<long long>();
}

std::size_t as_count(const json& j, const std::string& path) {
    long long v = as_int(j, path);
    if (v < 0) throw ConfigError("must be >= 0", path);
    return static_cast<std::size_t>(v);
}

bool as_bool(const json& j, const std::string& path) {
    if (!j.is_boolean()) throw ConfigError("expected true or false", path);
    return j.get<bool>();
}

std::string as_str(const json& j, const std::string& path) {
    if (!j.is_string()) throw ConfigError("expected a string", path);
    return j.get<std::string>();
}

Vector as_vec(const json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError("expected an array of numbers", path);
    Vector v;
    v.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v.push_back(as_num(j[i], idx(path, i)));
    return v;
}

// Matrices are arrays of rows.
Matrix as_mat(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) throw ConfigError("expected a non-empty array of rows", path);
    const std::size_t r = j.size();
    if (!j[0].is_array() || j[0].empty()) throw ConfigError("expected a non-empty row", idx(path, 0));
    const std::size_t c = j[0].size();
    Matrix m(r, c);
    for (std::size_t a = 0; a < r; ++a) {
        const auto& row = j[a];
        if (!row.is_array() || row.size() != c)
            throw ConfigError("ragged matrix: expected " + std::to_string(c) + " columns", idx(path, a));
        for (std::size_t b = 0; b < c; ++b) m(a, b) = as_num(row[b], idx(idx(path, a), b));
    }
    return m;
}

SymMatrix as_sym(const json& j, const std::string& path) {
    Matrix m = as_mat(j, path);
    if (m.rows() != m.cols()) throw ConfigError("expected a square matrix", path);
    for (std::size_t a = 0; a < m.rows(); ++a)
        for (std::size_t b = a + 1; b < m.cols(); ++b)
            if (std::abs(m(a, b) - m(b, a)) > 1e-12 * std::max(1.0, std::abs(m(a, b))))
                throw ConfigError("matrix is not symmetric", path);
    return SymMatrix(m);
}

template <class T, class F>
std::vector<T> as_list(const json& j, const std::string& path, F&& each) {
    if (!j.is_array()) throw ConfigError("expected an array", path);
    std::vector<T> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(each(j[i], idx(path, i)));
    return out;
}

json mat_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t a = 0; a < m.rows(); ++a) {
        json row = json::array();
        for (std::size_t b = 0; b < m.cols(); ++b) row.push_back(m(a, b));
        rows.push_back(std::move(row));
    }
    return rows;
}

json mat_json(const SymMatrix& m) { return mat_json(m.matrix()); }

json vec_json(const Vector& v) { return json(v); }

// --- membership functions ------------------------------------------------------

const char* form_name(SigmoidMF::Form f) {
    return f == SigmoidMF::Form::logistic ? "logistic" : "one_minus_logistic";
}

SigmoidMF parse_mf(const json& j, const std::string& path) {
    only_keys(j, path, {"a", "c", "form", "sin_gain"});
    SigmoidMF mf;
    mf.a = as_num(need(j, "a", path), sub(path, "a"));
    mf.c = as_num(need(j, "c", path), sub(path, "c"));
    if (mf.c == 0.0) throw ConfigError("must be nonzero", sub(path, "c"));
    const std::string form = as_str(need(j, "form", path), sub(path, "form"));
    if (form == "logistic") mf.form = SigmoidMF::Form::logistic;
    else if (form == "one_minus_logistic") mf.form = SigmoidMF::Form::one_minus_logistic;
    else throw ConfigError("expected 'logistic' or 'one_minus_logistic'", sub(path, "form"));
    if (j.contains("sin_gain")) mf.sin_gain = as_num(j["sin_gain"], sub(path, "sin_gain"));
    return mf;
}

json mf_json(const SigmoidMF& mf) {
    json j{{"a", mf.a}, {"c", mf.c}, {"form", form_name(mf.form)}};
    if (mf.sin_gain != 0.0) j["sin_gain"] = mf.sin_gain;
    return j;
}

IT2MembershipFamily parse_family(const json& j, const std::string& path) {
    only_keys(j, path, {"lower", "upper", "true"});
    IT2MembershipFamily f;
    f.lower = as_list<SigmoidMF>(need(j, "lower", path), sub(path, "lower"), parse_mf);
    f.upper = as_list<SigmoidMF>(need(j, "upper", path), sub(path, "upper"), parse_mf);
    if (j.contains("true")) f.true_mf = as_list<SigmoidMF>(j["true"], sub(path, "true"), parse_mf);
    return f;
}

json family_json(const IT2MembershipFamily& f) {
    json j;
    auto list = [](const std::vector<SigmoidMF>& v) {
        json a = json::array();
        for (const auto& mf : v) a.push_back(mf_json(mf));
        return a;
    };
    j["lower"] = list(f.lower);
    j["upper"] = list(f.upper);
    if (f.true_mf) j["true"] = list(*f.true_mf);
    return j;
}

// --- system -------------------------------------------------------------------

Subsystem parse_subsystem(const json& j, const std::string& path) {
    only_keys(j, path, {"name", "rules", "couplings", "model_mfs", "controller_mfs", "u_max", "eta", "H",
                        "premise_selector"});
    Subsystem s;
    if (j.contains("name")) s.name = as_str(j["name"], sub(path, "name"));
    s.rules = as_list<Rule>(need(j, "rules", path), sub(path, "rules"), [](const json& r, const std::string& p) {
        only_keys(r, p, {"A", "B", "E"});
        return Rule{as_mat(need(r, "A", p), sub(p, "A")), as_mat(need(r, "B", p), sub(p, "B")),
                    as_mat(need(r, "E", p), sub(p, "E"))};
    });
    if (j.contains("couplings")) {
        const std::string cp = sub(path, "couplings");
        const json& c = j["couplings"];
        if (!c.is_object()) throw ConfigError("expected an object keyed by subsystem index", cp);
        for (const auto& [k, v] : c.items()) {
            std::size_t jj = 0;
            try {
                std::size_t used = 0;
                jj = std::stoul(k, &used);
                if (used != k.size()) throw std::invalid_argument(k);
            } catch (const std::exception&) {
                throw ConfigError("coupling keys must be 0-based subsystem indices", cp + "." + k);
            }
            s.couplings[jj] = as_mat(v, cp + "." + k);
        }
    }
    s.model_mfs = parse_family(need(j, "model_mfs", path), sub(path, "model_mfs"));
    s.controller_mfs = parse_family(need(j, "controller_mfs", path), sub(path, "controller_mfs"));
    s.u_max = as_vec(need(j, "u_max", path), sub(path, "u_max"));
    s.eta = as_num(need(j, "eta", path), sub(path, "eta"));
    if (j.contains("H")) s.H = as_mat(j["H"], sub(path, "H"));
    if (j.contains("premise_selector")) s.premise_selector = as_count(j["premise_selector"], sub(path, "premise_selector"));
    return s;
}

json subsystem_json(const Subsystem& s) {
    json j;
    j["name"] = s.name;
    json rules = json::array();
    for (const auto& r : s.rules) rules.push_back({{"A", mat_json(r.A)}, {"B", mat_json(r.B)}, {"E", mat_json(r.E)}});
    j["rules"] = std::move(rules);
    json c = json::object();
    for (const auto& [k, g] : s.couplings) c[std::to_string(k)] = mat_json(g);
    j["couplings"] = std::move(c);
    j["model_mfs"] = family_json(s.model_mfs);
    j["controller_mfs"] = family_json(s.controller_mfs);
    j["u_max"] = vec_json(s.u_max);
    j["eta"] = s.eta;
    if (s.H) j["H"] = mat_json(*s.H);
    j["premise_selector"] = s.premise_selector;
    return j;
}

// "Q" may be one matrix shared by every subsystem or a list of matrices.
std::vector<SymMatrix> parse_q(const json& j, const std::string& path, std::size_t n) {
    if (j.is_array() && !j.empty() && j[0].is_array() && !j[0].empty() && j[0][0].is_number())
        return std::vector<SymMatrix>(n, as_sym(j, path));
    return as_list<SymMatrix>(j, path, as_sym);
}

FixedParams parse_fixed(const json& j, std::size_t n) {
    const std::string path = "fixed";
    only_keys(j, path, {"X", "lambda", "N", "M", "tau", "Q", "alpha"});
    FixedParams p;
    p.X = as_list<SymMatrix>(need(j, "X", path), "fixed.X", as_sym);
    p.lambda = as_vec(need(j, "lambda", path), "fixed.lambda");
    p.N_ratio = as_vec(need(j, "N", path), "fixed.N");
    p.M = as_vec(need(j, "M", path), "fixed.M");
    p.tau = as_vec(need(j, "tau", path), "fixed.tau");
    p.Q = parse_q(need(j, "Q", path), "fixed.Q", n);
    if (j.contains("alpha")) p.alpha = as_num(j["alpha"], "fixed.alpha");
    return p;
}

json fixed_json(const FixedParams& p) {
    json X = json::array(), Q = json::array();
    for (const auto& x : p.X) X.push_back(mat_json(x));
    for (const auto& q : p.Q) Q.push_back(mat_json(q));
    return {{"X", X},           {"lambda", vec_json(p.lambda)}, {"N", vec_json(p.N_ratio)}, {"M", vec_json(p.M)},
            {"tau", vec_json(p.tau)}, {"Q", Q},                      {"alpha", p.alpha}};
}

SynthesisConfig parse_synthesis(const json& j) {
    const std::string path = "synthesis";
    only_keys(j, path, {"xi_bisection", "search", "tolerance", "margin", "vertex_grid_density", "per_subsystem_xi",
                        "step1"});
    SynthesisConfig c;
    if (j.contains("xi_bisection")) {
        const json& b = j["xi_bisection"];
        const std::string bp = "synthesis.xi_bisection";
        only_keys(b, bp, {"lo", "hi", "tol"});
        if (b.contains("lo")) c.xi_bisection.lo = as_num(b["lo"], bp + ".lo");
        if (b.contains("hi")) c.xi_bisection.hi = as_num(b["hi"], bp + ".hi");
        if (b.contains("tol")) c.xi_bisection.tol = as_num(b["tol"], bp + ".tol");
    }
    if (j.contains("search")) {
        const json& s = j["search"];
        const std::string sp = "synthesis.search";
        only_keys(s, sp, {"max_iterations", "restarts", "seed", "step_schedule"});
        if (s.contains("max_iterations")) c.search.max_iterations = static_cast<int>(as_int(s["max_iterations"], sp + ".max_iterations"));
        if (s.contains("restarts")) c.search.restarts = static_cast<int>(as_int(s["restarts"], sp + ".restarts"));
        if (s.contains("seed")) c.search.seed = as_count(s["seed"], sp + ".seed");
        if (s.contains("step_schedule")) c.search.step_schedule = as_vec(s["step_schedule"], sp + ".step_schedule");
    }
    if (j.contains("tolerance")) c.tol.psd_tol = as_num(j["tolerance"], "synthesis.tolerance");
    if (j.contains("margin")) c.tol.strict_margin = as_num(j["margin"], "synthesis.margin");
    if (j.contains("vertex_grid_density"))
        c.vertex_grid_density = static_cast<int>(as_int(j["vertex_grid_density"], "synthesis.vertex_grid_density"));
    if (j.contains("per_subsystem_xi")) c.per_subsystem_xi = as_bool(j["per_subsystem_xi"], "synthesis.per_subsystem_xi");
    if (j.contains("step1")) {
        const json& s = j["step1"];
        const std::string sp = "synthesis.step1";
        only_keys(s, sp, {"enabled", "max_iterations", "target_margin", "lambda_min", "lambda_max"});
        if (s.contains("enabled")) c.step1.enabled = as_bool(s["enabled"], sp + ".enabled");
        if (s.contains("max_iterations")) c.step1.max_iterations = static_cast<int>(as_int(s["max_iterations"], sp + ".max_iterations"));
        if (s.contains("target_margin")) c.step1.target_margin = as_num(s["target_margin"], sp + ".target_margin");
        if (s.contains("lambda_min")) c.step1.lambda_min = as_num(s["lambda_min"], sp + ".lambda_min");
        if (s.contains("lambda_max")) c.step1.lambda_max = as_num(s["lambda_max"], sp + ".lambda_max");
    }
    return c;
}

json synthesis_json(const SynthesisConfig& c) {
    return {{"xi_bisection", {{"lo", c.xi_bisection.lo}, {"hi", c.xi_bisection.hi}, {"tol", c.xi_bisection.tol}}},
            {"search",
             {{"max_iterations", c.search.max_iterations},
              {"restarts", c.search.restarts},
              {"seed", c.search.seed},
              {"step_schedule", vec_json(c.search.step_schedule)}}},
            {"tolerance", c.tol.psd_tol},
            {"margin", c.tol.strict_margin},
            {"vertex_grid_density", c.vertex_grid_density},
            {"per_subsystem_xi", c.per_subsystem_xi},
            {"step1",
             {{"enabled", c.step1.enabled},
              {"max_iterations", c.step1.max_iterations},
              {"target_margin", c.step1.target_margin},
              {"lambda_min", c.step1.lambda_min},
              {"lambda_max", c.step1.lambda_max}}}};
}

SimulationConfig parse_simulation(const json& j) {
    const std::string path = "simulation";
    only_keys(j, path, {"x0", "steps", "resynth", "disturbance", "mu_bar", "rho_bar"});
    SimulationConfig s;
    s.x0 = as_list<Vector>(need(j, "x0", path), "simulation.x0", as_vec);
    if (j.contains("steps")) s.steps = as_count(j["steps"], "simulation.steps");
    if (j.contains("resynth")) s.resynth = resynth_from_string(as_str(j["resynth"], "simulation.resynth"));
    if (j.contains("disturbance")) {
        const json& d = j["disturbance"];
        const std::string dp = "simulation.disturbance";
        only_keys(d, dp, {"kind", "seed", "eta", "frequency"});
        if (d.contains("kind")) s.disturbance.kind = disturbance_kind_from_string(as_str(d["kind"], dp + ".kind"));
        if (d.contains("seed")) s.disturbance.seed = as_count(d["seed"], dp + ".seed");
        if (d.contains("eta")) s.disturbance.eta = as_vec(d["eta"], dp + ".eta");
        if (d.contains("frequency")) s.disturbance.frequency = as_num(d["frequency"], dp + ".frequency");
    }
    if (j.contains("mu_bar")) s.mu_bar = as_num(j["mu_bar"], "simulation.mu_bar");
    if (j.contains("rho_bar")) s.rho_bar = as_num(j["rho_bar"], "simulation.rho_bar");
    return s;
}

json simulation_json(const SimulationConfig& s) {
    json x0 = json::array();
    for (const auto& v : s.x0) x0.push_back(vec_json(v));
    return {{"x0", x0},
            {"steps", s.steps},
            {"resynth", to_string(s.resynth)},
            {"disturbance",
             {{"kind", to_string(s.disturbance.kind)},
              {"seed", s.disturbance.seed},
              {"eta", vec_json(s.disturbance.eta)},
              {"frequency", s.disturbance.frequency}}},
            {"mu_bar", s.mu_bar},
            {"rho_bar", s.rho_bar}};
}

GainSet parse_gains(const json& j, const std::string& path) {
    return as_list<std::vector<Matrix>>(j, path, [](const json& per, const std::string& p) {
        return as_list<Matrix>(per, p, as_mat);
    });
}

json gains_json(const GainSet& g) {
    json out = json::array();
    for (const auto& per : g) {
        json a = json::array();
        for (const auto& k : per) a.push_back(mat_json(k));
        out.push_back(std::move(a));
    }
    return out;
}

void check_gains(const LargeScaleSystem& sys, const GainSet& g, const std::string& path) {
    if (g.size() != sys.size()) throw ConfigError("expected one gain list per subsystem", path);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto& s = sys.subsystems[i];
        const std::size_t r = s.controller_mfs.rule_count();
        if (g[i].size() != r) throw ConfigError("expected " + std::to_string(r) + " gains", idx(path, i));
        for (std::size_t m = 0; m < r; ++m)
            if (g[i][m].rows() != s.nu() || g[i][m].cols() != s.nx())
                throw ConfigError("expected " + std::to_string(s.nu()) + "x" + std::to_string(s.nx()),
                                  idx(idx(path, i), m));
    }
}

json parse_text(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        // nlohmann reports "line L, column C" in what().
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

LmiOrigin origin_from_string(const std::string& s, const std::string& path) {
    for (auto o : {LmiOrigin::thm1, LmiOrigin::input_constraint, LmiOrigin::input_over_set, LmiOrigin::thm2,
                   LmiOrigin::state_membership})
        if (s == to_string(o)) return o;
    throw ConfigError("unknown origin '" + s + "'", path);
}

LmiSense sense_from_string(const std::string& s, const std::string& path) {
    for (auto v : {LmiSense::nsd_nonstrict, LmiSense::nsd_strict, LmiSense::psd_nonstrict})
        if (s == to_string(v)) return v;
    throw ConfigError("unknown sense '" + s + "'", path);
}

}  // namespace

void SystemConfig::validate() const {
    if (schema_version != kSchemaVersion)
        throw ConfigError("unsupported schema version " + std::to_string(schema_version), "schema_version");
    if (!(Ts > 0.0) || !std::isfinite(Ts)) throw ConfigError("must be positive", "Ts");
    system.validate();
    fixed.validate(system);
    synthesis.validate();

    const std::size_t n = system.size();
    if (simulation.x0.size() != n) throw ConfigError("expected " + std::to_string(n) + " entries", "simulation.x0");
    for (std::size_t i = 0; i < n; ++i)
        if (simulation.x0[i].size() != system.subsystems[i].nx())
            throw ConfigError("expected " + std::to_string(system.subsystems[i].nx()) + " entries",
                              idx("simulation.x0", i));
    if (!simulation.disturbance.eta.empty()) {
        if (simulation.disturbance.eta.size() != n)
            throw ConfigError("expected " + std::to_string(n) + " entries", "simulation.disturbance.eta");
        for (std::size_t i = 0; i < n; ++i)
            if (!(simulation.disturbance.eta[i] >= 0.0))
                throw ConfigError("must be >= 0", idx("simulation.disturbance.eta", i));
    }
    if (!(simulation.mu_bar >= 0.0 && simulation.mu_bar <= 1.0)) throw ConfigError("must lie in [0, 1]", "simulation.mu_bar");
    if (!(simulation.rho_bar >= 0.0 && simulation.rho_bar <= 1.0)) throw ConfigError("must lie in [0, 1]", "simulation.rho_bar");
    if (gains) check_gains(system, *gains, "gains");
}

StepOptions SystemConfig::step_options() const {
    StepOptions o;
    o.model = ModelMembershipMode::plant();
    o.model.rho_bar = simulation.rho_bar;
    o.mu_bar = simulation.mu_bar;
    return o;
}

SystemConfig parse_config(const std::string& json_text) {
    const json j = parse_text(json_text);
    only_keys(j, "", {"schema_version", "name", "notes", "Ts", "subsystems", "fixed", "synthesis", "simulation",
                      "gains"});
    SystemConfig c;
    c.schema_version = static_cast<int>(as_int(need(j, "schema_version", ""), "schema_version"));
    if (c.schema_version != kSchemaVersion)
        throw ConfigError("unsupported schema version " + std::to_string(c.schema_version), "schema_version");
    if (j.contains("name")) c.name = as_str(j["name"], "name");
    if (j.contains("notes")) c.notes = as_str(j["notes"], "notes");
    c.Ts = as_num(need(j, "Ts", ""), "Ts");
    c.system.subsystems = as_list<Subsystem>(need(j, "subsystems", ""), "subsystems", parse_subsystem);
    c.fixed = parse_fixed(need(j, "fixed", ""), c.system.size());
    if (j.contains("synthesis")) c.synthesis = parse_synthesis(j["synthesis"]);
    c.simulation = parse_simulation(need(j, "simulation", ""));
    if (j.contains("gains")) c.gains = parse_gains(j["gains"], "gains");
    c.validate();
    return c;
}

SystemConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

std::string serialize_config(const SystemConfig& c) {
    json j;
    j["schema_version"] = c.schema_version;
    j["name"] = c.name;
    if (!c.notes.empty()) j["notes"] = c.notes;
    j["Ts"] = c.Ts;
    json subs = json::array();
    for (const auto& s : c.system.subsystems) subs.push_back(subsystem_json(s));
    j["subsystems"] = std::move(subs);
    j["fixed"] = fixed_json(c.fixed);
    j["synthesis"] = synthesis_json(c.synthesis);
    j["simulation"] = simulation_json(c.simulation);
    if (c.gains) j["gains"] = gains_json(*c.gains);
    return j.dump(2) + "\n";
}

std::string serialize_certificate(const Certificate& cert) {
    json j;
    j["feasible"] = cert.feasible;
    j["fixed"] = fixed_json(cert.fixed);
    j["gains"] = gains_json(cert.dv.gains);
    json Z = json::array();
    for (const auto& z : cert.dv.Z) Z.push_back(mat_json(z));
    j["Z"] = std::move(Z);
    j["xi"] = vec_json(cert.dv.xi);
    json margins = json::array();
    for (const auto& r : cert.margins)
        margins.push_back({{"key", r.key},
                           {"origin", to_string(r.origin)},
                           {"sense", to_string(r.sense)},
                           {"margin", r.margin},
                           {"violation", r.violation}});
    j["margins"] = std::move(margins);
    return j.dump(2) + "\n";
}

Certificate parse_certificate(const std::string& json_text, const LargeScaleSystem& sys) {
    const json j = parse_text(json_text);
    only_keys(j, "", {"feasible", "fixed", "gains", "Z", "xi", "margins"});
    Certificate c;
    if (j.contains("feasible")) c.feasible = as_bool(j["feasible"], "feasible");
    c.fixed = parse_fixed(need(j, "fixed", ""), sys.size());
    c.fixed.validate(sys);
    c.dv.gains = parse_gains(need(j, "gains", ""), "gains");
    check_gains(sys, c.dv.gains, "gains");
    c.dv.Z = as_list<SymMatrix>(need(j, "Z", ""), "Z", as_sym);
    c.dv.xi = as_vec(need(j, "xi", ""), "xi");
    if (c.dv.Z.size() != sys.size()) throw ConfigError("expected one matrix per subsystem", "Z");
    if (c.dv.xi.size() != sys.size()) throw ConfigError("expected one value per subsystem", "xi");
    for (std::size_t i = 0; i < sys.size(); ++i) {
        if (c.dv.Z[i].dim() != sys.subsystems[i].nx()) throw ConfigError("dimension mismatch", idx("Z", i));
        if (!(c.dv.xi[i] > 0.0)) throw ConfigError("must be positive", idx("xi", i));
    }
    if (j.contains("margins")) {
        c.margins = as_list<InstanceReport>(j["margins"], "margins", [](const json& m, const std::string& p) {
            only_keys(m, p, {"key", "origin", "sense", "margin", "violation"});
            InstanceReport r;
            r.key = as_str(need(m, "key", p), sub(p, "key"));
            r.origin = origin_from_string(as_str(need(m, "origin", p), sub(p, "origin")), sub(p, "origin"));
            r.sense = sense_from_string(as_str(need(m, "sense", p), sub(p, "sense")), sub(p, "sense"));
            r.margin = as_num(need(m, "margin", p), sub(p, "margin"));
            r.violation = as_num(need(m, "violation", p), sub(p, "violation"));
            return r;
        });
    }
    return c;
}

Certificate load_certificate(const std::filesystem::path& path, const LargeScaleSystem& sys) {
    return parse_certificate(read_file(path), sys);
}

}  // namespace it2mpc
