// it2mpc: command-line front end (simulate / synthesize / verify / rpi-check).
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#if __has_include(<json.hpp>)
#include <json.hpp>
#else
#include <nlohmann/json.hpp>
#endif

#include "it2mpc/config.hpp"
#include "it2mpc/errors.hpp"
#include "it2mpc/log.hpp"
#include "it2mpc/mpc_sim.hpp"
#include "it2mpc/pipeline.hpp"
#include "it2mpc/trace_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace it2mpc;

namespace {

enum Exit : int { kOk = 0, kInfeasible = 2, kConfig = 3, kRuntime = 4 };

// One JSON object per line on stderr so callers can parse failures.
void diag(const std::string& kind, const std::string& message, const std::string& field = {}) {
    json j{{"error", kind}, {"message", message}};
    if (!field.empty()) j["field"] = field;
    std::cerr << j.dump() << '\n';
}

struct Common {
    std::string config;
    std::optional<double> tol;
    std::optional<double> margin;
    std::optional<std::uint64_t> seed;
    bool verbose = false;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("config", c.config, "system configuration (JSON)")->required()->check(CLI::ExistingFile);
    app->add_option("--tol", c.tol, "PSD tolerance for non-strict conditions")->check(CLI::PositiveNumber);
    app->add_option("--margin", c.margin, "required slack for strict conditions")->check(CLI::NonNegativeNumber);
    app->add_option("--seed", c.seed, "seed for the gain search and the disturbance sampler");
    app->add_flag("-v,--verbose", c.verbose, "progress messages on stderr");
}

SystemConfig load(const Common& c) {
    SystemConfig cfg = load_config(c.config);
    if (c.tol) cfg.synthesis.tol.psd_tol = *c.tol;
    if (c.margin) cfg.synthesis.tol.strict_margin = *c.margin;
    if (c.seed) {
        cfg.synthesis.search.seed = *c.seed;
        cfg.simulation.disturbance.seed = *c.seed;
    }
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw Error("write failed: " + path.string());
}

Certificate to_certificate(const PipelineResult& r) {
    return Certificate{r.fixed, r.result.dv, r.result.margins, r.result.feasible};
}

json margin_report(const CertificateReport& rep) {
    json j;
    j["feasible"] = rep.feasible;
    j["vertex_violations"] = rep.vertex_violations;
    j["grid_violations"] = rep.grid_violations;
    j["grid_points"] = rep.grid_points;
    j["violation"] = rep.violation;
    json v = json::object(), g = json::object();
    for (const auto& [k, m] : rep.worst_vertex) v[k] = m;
    for (const auto& [k, m] : rep.worst_grid) g[k] = m;
    j["worst_vertex"] = std::move(v);
    j["worst_grid"] = std::move(g);
    return j;
}

int cmd_synthesize(const Common& c, const std::string& out_dir) {
    const SystemConfig cfg = load(c);
    const GainSet* warm = cfg.gains ? &*cfg.gains : nullptr;
    const PipelineResult r = synthesize(cfg.system, cfg.fixed, cfg.simulation.x0, cfg.synthesis, warm);
    fs::create_directories(out_dir);
    const fs::path path = fs::path(out_dir) / "certificate.json";
    write_text(path, serialize_certificate(to_certificate(r)));
    json j{{"certificate", path.string()}, {"feasible", r.result.feasible}, {"retuned", r.retuned},
           {"xi", r.result.xi_achieved}, {"violation", r.result.violation}};
    std::cout << j.dump(2) << '\n';
    if (!r.result.feasible) {
        diag("infeasible", r.result.diagnostics.empty() ? r.notes : r.result.diagnostics);
        return kInfeasible;
    }
    return kOk;
}

int cmd_verify(const Common& c, const std::string& gains) {
    const SystemConfig cfg = load(c);
    const Certificate cert = load_certificate(gains, cfg.system);
    const CertificateReport rep = verify_certificate(cfg.system, cert.fixed, cert.dv, cfg.synthesis.vertex_grid_density,
                                                     cfg.synthesis.tol, &cfg.simulation.x0);
    std::cout << margin_report(rep).dump(2) << '\n';
    if (!rep.feasible) {
        diag("infeasible", "certificate violates " + std::to_string(rep.vertex_violations) + " vertex and " +
                               std::to_string(rep.grid_violations) + " grid conditions");
        return kInfeasible;
    }
    return kOk;
}

int cmd_rpi(const Common& c, const std::string& gains, std::size_t samples) {
    const SystemConfig cfg = load(c);
    const Certificate cert = load_certificate(gains, cfg.system);
    RpiOptions opts;
    opts.tol = cfg.synthesis.tol.psd_tol;
    opts.mu_bar = cfg.simulation.mu_bar;
    const std::uint64_t seed = c.seed.value_or(cfg.simulation.disturbance.seed);
    const RpiReport rep = rpi_monte_carlo(cfg.system, cert.fixed, cert.dv, samples, seed, opts);
    json j{{"samples", rep.samples},   {"rpi_violations", rep.rpi_violations}, {"exits", rep.exits},
           {"worst_rpi", rep.worst_rpi}, {"worst_level", rep.worst_level},       {"seed", seed}};
    std::cout << j.dump(2) << '\n';
    if (rep.rpi_violations || rep.exits) {
        diag("infeasible", "invariance violated on " + std::to_string(rep.rpi_violations + rep.exits) + " samples");
        return kInfeasible;
    }
    return kOk;
}

int cmd_simulate(const Common& c, const std::string& out_dir, std::optional<std::size_t> steps,
                 std::optional<std::string> resynth, const std::string& gains) {
    SystemConfig cfg = load(c);
    if (steps) cfg.simulation.steps = *steps;
    if (resynth) cfg.simulation.resynth = resynth_from_string(*resynth);

    // Source of the controller: an explicit certificate, gains in the config
    // (used with the configured parameters), or a fresh synthesis at x0.
    FixedParams p = cfg.fixed;
    DecisionVars dv;
    bool have = false;
    if (!gains.empty()) {
        const Certificate cert = load_certificate(gains, cfg.system);
        p = cert.fixed;
        dv = cert.dv;
        have = true;
    } else if (cfg.gains && cfg.simulation.resynth == Resynth::once) {
        dv.gains = *cfg.gains;
        have = true;
    }
    if (!have) {
        const GainSet* warm = cfg.gains ? &*cfg.gains : nullptr;
        const PipelineResult r = synthesize(cfg.system, cfg.fixed, cfg.simulation.x0, cfg.synthesis, warm);
        if (!r.result.feasible) {
            diag("infeasible", "initial synthesis failed: " + r.result.diagnostics);
            return kInfeasible;
        }
        p = r.fixed;
        dv = r.result.dv;
    }

    OnlineOptions o;
    o.Ts = cfg.Ts;
    o.resynth = cfg.simulation.resynth;
    o.step = cfg.step_options();
    o.given = &dv;
    const SimulationTrace tr =
        run_online_loop(cfg.system, p, cfg.synthesis, cfg.simulation.x0, cfg.simulation.steps, cfg.simulation.disturbance, o);

    fs::create_directories(out_dir);
    const fs::path csv = fs::path(out_dir) / "trace.csv";
    const fs::path summary = fs::path(out_dir) / "summary.json";
    write_trace(tr, cfg.system, csv);
    write_trace_summary(tr, cfg.system, summary);
    std::cout << json{{"trace", csv.string()}, {"summary", summary.string()}, {"steps", tr.steps.size()}}.dump(2)
              << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust MPC synthesis and simulation for interval type-2 fuzzy large-scale systems", "it2mpc"};
    app.require_subcommand(1);

    Common c;
    std::string out_dir = ".";
    std::string gains;
    std::optional<std::size_t> steps;
    std::optional<std::string> resynth;
    std::size_t samples = 10000;

    auto* sim = app.add_subcommand("simulate", "run the closed loop and write trace.csv + summary.json");
    add_common(sim, c);
    sim->add_option("--out", out_dir, "output directory");
    sim->add_option("--steps", steps, "number of steps (overrides the config)");
    sim->add_option("--resynth", resynth, "once | every-step")->check(CLI::IsMember({"once", "every-step", "every_step"}));
    sim->add_option("--gains", gains, "certificate from `synthesize` to use instead of the config")
        ->check(CLI::ExistingFile);

    auto* syn = app.add_subcommand("synthesize", "compute gains, Z and xi; write certificate.json");
    add_common(syn, c);
    syn->add_option("--out", out_dir, "output directory");

    auto* ver = app.add_subcommand("verify", "re-check a certificate; exit 0 iff every condition holds");
    add_common(ver, c);
    ver->add_option("--gains", gains, "certificate JSON")->required()->check(CLI::ExistingFile);

    auto* rpi = app.add_subcommand("rpi-check", "Monte-Carlo invariance check of a certificate");
    add_common(rpi, c);
    rpi->add_option("--gains", gains, "certificate JSON")->required()->check(CLI::ExistingFile);
    rpi->add_option("--samples", samples, "number of samples")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        diag("usage", e.what());
        return kConfig;
    }

    if (c.verbose)
        set_log_sink([](LogLevel, std::string_view m) { std::cerr << "it2mpc: " << m << '\n'; });

    try {
        if (*sim) return cmd_simulate(c, out_dir, steps, resynth, gains);
        if (*syn) return cmd_synthesize(c, out_dir);
        if (*ver) return cmd_verify(c, gains);
        if (*rpi) return cmd_rpi(c, gains, samples);
    } catch (const ConfigError& e) {
        diag("config", e.what(), e.field());
        return kConfig;
    } catch (const InitialInfeasible& e) {
        diag("infeasible", e.what());
        return kInfeasible;
    } catch (const RecursiveFeasibilityViolation& e) {
        diag("recursive_feasibility", e.what() + std::string(" (step ") + std::to_string(e.step()) + ")");
        return kInfeasible;
    } catch (const std::exception& e) {
        diag("runtime", e.what());
        return kRuntime;
    }
    return kRuntime;
}
