#include "it2mpc/mpc_sim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "it2mpc/errors.hpp"
#include "it2mpc/log.hpp"

namespace it2mpc {

const char* to_string(DisturbanceKind k) {
    switch (k) {
        case DisturbanceKind::zero: return "zero";
        case DisturbanceKind::uniform_ball: return "uniform_ball";
        case DisturbanceKind::sinusoidal: return "sinusoidal";
        case DisturbanceKind::worst_case_boundary: return "worst_case_boundary";
    }
    return "?";
}

DisturbanceKind disturbance_kind_from_string(const std::string& s) {
    if (s == "zero") return DisturbanceKind::zero;
    if (s == "uniform_ball") return DisturbanceKind::uniform_ball;
    if (s == "sinusoidal") return DisturbanceKind::sinusoidal;
    if (s == "worst_case_boundary") return DisturbanceKind::worst_case_boundary;
    throw ConfigError("unknown disturbance kind '" + s + "'", "simulation.disturbance.kind");
}

const char* to_string(Resynth r) { return r == Resynth::once ? "once" : "every-step"; }

Resynth resynth_from_string(const std::string& s) {
    if (s == "once") return Resynth::once;
    if (s == "every-step" || s == "every_step") return Resynth::every_step;
    throw ConfigError("unknown resynthesis mode '" + s + "'", "simulation.resynth");
}

Vector sample_unit_sphere(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vector v(n);
    double nv = 0.0;
    while (nv < 1e-12) {
        for (double& e : v) e = g(rng);
        nv = norm2(v);
    }
    for (double& e : v) e /= nv;
    return v;
}

Vector sample_unit_ball(std::mt19937_64& rng, std::size_t n) {
    Vector v = sample_unit_sphere(rng, n);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double r = std::pow(u(rng), 1.0 / static_cast<double>(n));
    for (double& e : v) e *= r;
    return v;
}

void project_to_ball(Vector& d, double radius) {
    const double r2 = radius * radius;
    double dd = dot(d, d);
    while (dd > r2) {
        const double s = radius / std::sqrt(dd) * (1.0 - 1e-15);
        for (double& e : d) e *= s;
        dd = dot(d, d);
    }
}

DisturbanceGenerator::DisturbanceGenerator(const DisturbanceModel& model, const LargeScaleSystem& sys)
    : model_(model), rng_(model.seed) {
    for (std::size_t i = 0; i < sys.size(); ++i) {
        dims_.push_back(sys.subsystems[i].nd());
        eta_.push_back(model.eta.empty() ? sys.subsystems[i].eta : model.eta.at(i));
        if (eta_.back() < 0.0) throw ConfigError("disturbance radius must be >= 0", "simulation.disturbance.eta");
    }
    std::uniform_real_distribution<double> u(0.0, 2.0 * M_PI);
    for (std::size_t n : dims_) {
        Vector ph(n);
        for (double& e : ph) e = u(rng_);
        phase_.push_back(std::move(ph));
    }
}

StateSet DisturbanceGenerator::next(std::size_t k) {
    StateSet out(dims_.size());
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        const std::size_t n = dims_[i];
        Vector d(n, 0.0);
        switch (model_.kind) {
            case DisturbanceKind::zero: break;
            case DisturbanceKind::uniform_ball: d = sample_unit_ball(rng_, n); break;
            case DisturbanceKind::worst_case_boundary: d = sample_unit_sphere(rng_, n); break;
            case DisturbanceKind::sinusoidal:
                for (std::size_t s = 0; s < n; ++s)
                    d[s] = std::sin(model_.frequency * static_cast<double>(k) + phase_[i][s]) /
                           std::sqrt(static_cast<double>(n));
                break;
        }
        for (double& e : d) e *= eta_[i];
        project_to_ball(d, eta_[i]);
        out[i] = std::move(d);
    }
    return out;
}

double lyapunov_value(std::span<const double> x, const SymMatrix& P) { return quad_form(P.matrix(), x); }

double stage_cost(const StateSet& x, const StateSet& u, const StateSet& d, const std::vector<SymMatrix>& Q,
                  const std::vector<SymMatrix>& R, std::span<const double> tau) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        s += quad_form(Q[i].matrix(), x[i]) + quad_form(R[i].matrix(), u[i]) - tau[i] * dot(d[i], d[i]);
    return s;
}

namespace {

std::vector<SymMatrix> R_set(const FixedParams& p, const StateSet& u, const Vector& xi) {
    std::vector<SymMatrix> R;
    for (std::size_t i = 0; i < u.size(); ++i) R.push_back(p.R(i, u[i].size(), xi[i]));
    return R;
}

SymMatrix P_of(const FixedParams& p, std::size_t i, double xi) { return (1.0 / xi) * p.X[i]; }

const StateSet& state_after(const SimulationTrace& tr, std::size_t k) {
    return k + 1 < tr.steps.size() ? tr.steps[k + 1].x : tr.x_final;
}

void fill_defaults(const LargeScaleSystem& sys, const FixedParams& p, const StateSet& x0, DecisionVars& dv) {
    for (std::size_t i = dv.Z.size(); i < sys.size(); ++i) dv.Z.push_back(input_bound_matrix(dv.gains[i], 1e-9));
    if (dv.xi.size() != sys.size()) {
        // Smallest ellipsoid level that still contains x0.
        dv.xi.assign(sys.size(), 0.0);
        for (std::size_t i = 0; i < sys.size(); ++i)
            dv.xi[i] = std::max(1e-12, std::sqrt(quad_form(p.X[i].matrix(), x0[i])));
    }
}

std::map<std::string, double> worst_by_family(const std::vector<InstanceReport>& reps) {
    std::map<std::string, double> out;
    for (const auto& r : reps) {
        const std::string key = r.key.substr(0, r.key.find('/'));
        auto it = out.find(key);
        if (it == out.end())
            out[key] = r.margin;
        else
            it->second = std::max(it->second, r.margin);
    }
    return out;
}

}  // namespace

SimulationTrace run_online_loop(const LargeScaleSystem& sys, const FixedParams& p, const SynthesisConfig& cfg,
                                const StateSet& x0, std::size_t steps, const DisturbanceModel& dist,
                                const OnlineOptions& opts) {
    SimulationTrace tr;
    tr.Ts = opts.Ts;
    DisturbanceGenerator gen(dist, sys);

    DecisionVars dv;
    std::vector<InstanceReport> reps;
    bool feasible = false;
    if (opts.given && opts.resynth == Resynth::once) {
        dv = *opts.given;
        fill_defaults(sys, p, x0, dv);
        reps = evaluate_instances(sys, p, dv, cfg.tol, &x0);
        feasible = std::all_of(reps.begin(), reps.end(), [](const auto& r) { return r.violation == 0.0; });
    } else {
        DecisionVars warm;
        const DecisionVars* wp = nullptr;
        if (opts.given) {
            warm = *opts.given;
            fill_defaults(sys, p, x0, warm);
            wp = &warm;
        }
        SynthesisResult res = minimize_xi(sys, p, x0, cfg, wp);
        ++tr.resyntheses;
        if (!res.feasible) throw InitialInfeasible("synthesis infeasible at k = 0: " + res.diagnostics);
        dv = std::move(res.dv);
        reps = std::move(res.margins);
        feasible = true;
    }

    StateSet x = x0;
    for (std::size_t k = 0; k < steps; ++k) {
        if (k > 0 && opts.resynth == Resynth::every_step) {
            SynthesisResult res = minimize_xi(sys, p, x, cfg, &dv);
            ++tr.resyntheses;
            if (!res.feasible)
                throw RecursiveFeasibilityViolation(
                    "synthesis infeasible at k = " + std::to_string(k) + ": " + res.diagnostics, k);
            dv = std::move(res.dv);
            reps = std::move(res.margins);
            feasible = true;
        }
        TraceStep st;
        st.k = k;
        st.t = static_cast<double>(k) * opts.Ts;
        st.x = x;
        st.d = gen.next(k);
        ClosedLoopStep cl = step_closed_loop_detail(sys, dv.gains, x, st.d, opts.step);
        tr.disturbance_warnings += cl.disturbance_warnings;
        st.u = cl.u;
        st.w = std::move(cl.w);
        st.h = std::move(cl.h);
        st.xi = dv.xi;
        for (std::size_t i = 0; i < sys.size(); ++i) {
            st.V.push_back(lyapunov_value(x[i], P_of(p, i, dv.xi[i])));
            for (std::size_t s = 0; s < st.u[i].size(); ++s)
                if (std::abs(st.u[i][s]) > sys.subsystems[i].u_max[s] * (1.0 + 1e-12)) ++tr.input_violations;
        }
        st.psi = stage_cost(x, st.u, st.d, p.Q, R_set(p, st.u, dv.xi), p.tau);
        st.feasible = feasible;
        st.margins = worst_by_family(reps);
        x = std::move(cl.x_next);
        tr.steps.push_back(std::move(st));
    }
    tr.x_final = x;
    tr.last = dv;
    return tr;
}

double total_cost(const SimulationTrace& trace, std::size_t T, const FixedParams& p) {
    if (trace.steps.size() < T) throw ConfigError("trace shorter than the cost horizon");
    double s = 0.0;
    for (std::size_t k = 0; k < T; ++k) s += trace.steps[k].psi;
    if (trace.steps.empty()) return s;
    const StateSet& xT = T < trace.steps.size() ? trace.steps[T].x : trace.x_final;
    const Vector& xi = trace.steps[std::min(T, trace.steps.size() - 1)].xi;
    for (std::size_t i = 0; i < xT.size(); ++i) s += lyapunov_value(xT[i], P_of(p, i, xi[i]));
    return s;
}

IssReport iss_check(const LargeScaleSystem& sys, const SimulationTrace& trace, const FixedParams& p) {
    IssReport rep;
    for (std::size_t k = 0; k < trace.steps.size(); ++k) {
        const TraceStep& st = trace.steps[k];
        const StateSet& xn = state_after(trace, k);
        bool nonzero = false;
        for (const auto& xi : st.x) nonzero = nonzero || norm2(xi) > 0.0;
        if (!nonzero) continue;
        ++rep.steps_checked;
        double lhs = 0.0, rhs = 0.0;
        bool sub_bad = false;
        for (std::size_t i = 0; i < sys.size(); ++i) {
            const SymMatrix P = P_of(p, i, st.xi[i]);
            const EigResult e = sym_eig(P);
            const double n2 = dot(st.x[i], st.x[i]);
            const double v = lyapunov_value(st.x[i], P);
            const double slack = 1e-12 * std::max(1.0, std::abs(v));
            if (v < e.values.front() * n2 - slack || v > e.values.back() * n2 + slack) ++rep.sandwich_violations;

            const SymMatrix R = p.R(i, st.u[i].size(), st.xi[i]);
            const double dv = lyapunov_value(xn[i], P) - v;
            const double bound = -quad_form(p.Q[i].matrix(), st.x[i]) - quad_form(R.matrix(), st.u[i]) +
                                 p.tau[i] * dot(st.d[i], st.d[i]);
            if (!(dv < bound)) sub_bad = true;
            lhs += dv;
            rhs += bound;
        }
        if (sub_bad) ++rep.per_subsystem_decrease_violations;
        rep.worst_decrease_slack = std::max(rep.worst_decrease_slack, lhs - rhs);
        if (!(lhs < rhs)) {
            ++rep.decrease_violations;
            rep.violating_steps.push_back(k);
        }
    }
    return rep;
}

RpiReport rpi_monte_carlo(const LargeScaleSystem& sys, const FixedParams& p, const DecisionVars& dv,
                          std::size_t n_samples, std::uint64_t seed, const RpiOptions& opts) {
    RpiReport rep;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // x = xi X^{-1/2} b maps the unit ball onto {x^T X x <= xi^2}.
    std::vector<Matrix> shape;
    for (std::size_t i = 0; i < sys.size(); ++i) shape.push_back(dv.xi[i] * spd_power(p.X[i], -0.5).matrix());

    for (std::size_t n = 0; n < n_samples; ++n) {
        const bool on_boundary = unif(rng) < opts.boundary_fraction;
        StateSet x(sys.size()), d(sys.size());
        for (std::size_t i = 0; i < sys.size(); ++i) {
            const Subsystem& sub = sys.subsystems[i];
            const Vector b = on_boundary ? sample_unit_sphere(rng, sub.nx()) : sample_unit_ball(rng, sub.nx());
            x[i] = shape[i] * std::span<const double>(b);
            d[i] = scaled(sample_unit_ball(rng, sub.nd()), sub.eta);
            project_to_ball(d[i], sub.eta);
        }
        StepOptions so;
        so.model = ModelMembershipMode::reconstructed(opts.rho_grid[n % opts.rho_grid.size()]);
        so.mu_bar = opts.mu_bar;
        const StateSet xn = step_closed_loop(sys, dv.gains, x, d, so);
        const double val = check_rpi_pointwise(sys, p, dv, x, xn, d);
        rep.worst_rpi = std::max(rep.worst_rpi, val);
        if (val > opts.tol) ++rep.rpi_violations;
        bool exited = false;
        for (std::size_t i = 0; i < sys.size(); ++i) {
            const double lvl = ellipsoid_level(xn[i], p.X[i], dv.xi[i]);
            rep.worst_level = std::max(rep.worst_level, lvl);
            if (lvl > 1.0 + opts.tol) exited = true;
        }
        if (exited) ++rep.exits;
        ++rep.samples;
    }
    return rep;
}

}  // namespace it2mpc
