#include "it2mpc/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "it2mpc/errors.hpp"
#include "it2mpc/log.hpp"

namespace it2mpc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kZEps = 1e-9;

double scale_of(const SymMatrix& m) { return std::max(1.0, m.matrix().norm_inf()); }

// Lower bounds on xi_i that do not depend on the gains.
double xi_floor(const LargeScaleSystem& sys, const FixedParams& p, std::size_t i, const StateSet* x) {
    const Subsystem& sub = sys.subsystems[i];
    double f = p.N_ratio[i] * sub.eta * sub.eta;
    if (x) f = std::max(f, std::sqrt(std::max(0.0, quad_form(p.X[i].matrix(), (*x)[i]))));
    return f;
}

// ---------------------------------------------------------------------------
// Per-subsystem search objective: largest normalized (margin + requirement)
// over every condition that depends on subsystem i's gains. <= 0 is feasible.

struct GainObjective {
    const LargeScaleSystem& sys;
    const FixedParams& p;
    const LmiTolerances& tol;
    std::size_t i;
    double xi;

    double operator()(const std::vector<Matrix>& gains) const {
        const Subsystem& sub = sys.subsystems[i];
        double worst = -kInf;
        for (const auto& k : gains) {
            if (!k.all_finite()) return kInf;
        }
        for (std::size_t l = 0; l < sub.rule_count(); ++l) {
            for (std::size_t m = 0; m < gains.size(); ++m) {
                const VertexMatrices v{sub.rules[l].A, sub.rules[l].B, sub.rules[l].E, gains[m]};
                const SymMatrix t1 = assemble_thm1_matrix(sys, p, i, xi, v);
                const SymMatrix t2 = assemble_thm2_matrix(sys, p, i, xi, v);
                worst = std::max(worst, max_eig(t1.congruence(red1)) / scale_of(t1));
                worst = std::max(worst, (max_eig(t2.congruence(red2)) + tol.strict_margin) / scale_of(t2));
            }
        }
        const double xi2 = xi * xi;
        for (const auto& k : gains) {
            // |k_s x| <= u_s over x^T X x <= xi^2  <=>  xi^2 k_s X^{-1} k_s^T <= u_s^2
            for (std::size_t s = 0; s < sub.nu(); ++s) {
                const Matrix ks = k.block(s, 0, 1, sub.nx());
                const double q = quad_form(xinv.matrix(), ks.data());
                const double u2 = sub.u_max[s] * sub.u_max[s];
                worst = std::max(worst, (xi2 * q - u2) / std::max(1.0, u2));
            }
        }
        const SymMatrix Z = input_bound_matrix(gains, kZEps);
        for (std::size_t s = 0; s < sub.nu() && s < sub.nx(); ++s) {
            const double u2 = sub.u_max[s] * sub.u_max[s];
            worst = std::max(worst, (Z(s, s) - u2) / std::max(1.0, u2));
        }
        return worst;
    }

    Matrix red1;
    Matrix red2;
    SymMatrix xinv;
};

GainObjective make_objective(const LargeScaleSystem& sys, const FixedParams& p, const LmiTolerances& tol,
                             std::size_t i, double xi) {
    return GainObjective{sys, p, tol, i, xi, coupling_reduction(sys, i, false), coupling_reduction(sys, i, true),
                         sym_inverse(p.X[i])};
}

std::vector<double> flatten(const std::vector<Matrix>& gains) {
    std::vector<double> v;
    for (const auto& k : gains) v.insert(v.end(), k.data().begin(), k.data().end());
    return v;
}

void unflatten(std::span<const double> v, std::vector<Matrix>& gains) {
    std::size_t o = 0;
    for (auto& k : gains)
        for (double& e : k.data()) e = v[o++];
}

// Coordinate pattern search with a shrinking step schedule. Returns the best
// objective found; stops as soon as it is <= 0.
double pattern_search(const GainObjective& f, std::vector<Matrix>& gains, const SearchConfig& sc,
                      std::uint64_t stream) {
    std::vector<Matrix> best_gains = gains;
    double best = f(gains);
    if (best <= 0.0) return best;

    std::mt19937_64 rng(sc.seed * 0x9E3779B97F4A7C15ULL + stream);
    const std::vector<double> start = flatten(gains);
    double start_scale = 1.0;
    for (double e : start) start_scale = std::max(start_scale, std::abs(e));

    for (int restart = 0; restart <= sc.restarts; ++restart) {
        std::vector<double> v = start;
        if (restart > 0) {
            std::normal_distribution<double> noise(0.0, 0.25 * start_scale);
            for (double& e : v) e += noise(rng);
        }
        std::vector<Matrix> trial = gains;
        unflatten(v, trial);
        double fv = f(trial);
        int sweeps = 0;
        for (double step_rel : sc.step_schedule) {
            const double step = step_rel * start_scale;
            bool improved = true;
            while (improved && sweeps < sc.max_iterations) {
                improved = false;
                ++sweeps;
                for (std::size_t c = 0; c < v.size(); ++c) {
                    for (double dir : {1.0, -1.0}) {
                        const double old = v[c];
                        v[c] = old + dir * step;
                        unflatten(v, trial);
                        const double ft = f(trial);
                        if (ft < fv) {
                            fv = ft;
                            improved = true;
                            // Keep going in the same direction while it pays.
                            for (int rep = 0; rep < 8; ++rep) {
                                const double prev = v[c];
                                v[c] += dir * step;
                                unflatten(v, trial);
                                const double f2 = f(trial);
                                if (f2 < fv) {
                                    fv = f2;
                                } else {
                                    v[c] = prev;
                                    break;
                                }
                            }
                            break;
                        }
                        v[c] = old;
                    }
                    if (fv <= 0.0) break;
                }
                if (fv <= 0.0) break;
            }
            if (fv <= 0.0) break;
        }
        unflatten(v, trial);
        if (fv < best) {
            best = fv;
            best_gains = trial;
        }
        if (best <= 0.0) break;
    }
    gains = best_gains;
    return best;
}

std::vector<Matrix> zero_gains(const Subsystem& sub) {
    return std::vector<Matrix>(sub.rule_count(), Matrix(sub.nu(), sub.nx()));
}

// xi-only conditions; true when they admit xi.
bool xi_only_ok(const LargeScaleSystem& sys, const FixedParams& p, std::size_t i, double xi, const StateSet* x) {
    return xi >= xi_floor(sys, p, i, x) * (1.0 - 1e-12);
}

// Solves the listed subsystems at the given xi values; others are copied.
bool solve_subset(const LargeScaleSystem& sys, const FixedParams& p, const std::vector<std::size_t>& subset,
                  DecisionVars& dv, const StateSet& x, const SynthesisConfig& cfg) {
    for (std::size_t i : subset) {
        if (!xi_only_ok(sys, p, i, dv.xi[i], &x)) return false;
    }
    for (std::size_t i : subset) {
        const GainObjective f = make_objective(sys, p, cfg.tol, i, dv.xi[i]);
        std::vector<Matrix> g = dv.gains[i];
        const double best = pattern_search(f, g, cfg.search, i);
        if (best > 0.0) return false;
        dv.gains[i] = std::move(g);
        dv.Z[i] = input_bound_matrix(dv.gains[i], kZEps);
    }
    return true;
}

DecisionVars initial_dv(const LargeScaleSystem& sys, const GainSet* warm) {
    DecisionVars dv;
    for (std::size_t i = 0; i < sys.size(); ++i) {
        const Subsystem& sub = sys.subsystems[i];
        if (warm && i < warm->size() && (*warm)[i].size() == sub.rule_count())
            dv.gains.push_back((*warm)[i]);
        else
            dv.gains.push_back(zero_gains(sub));
        dv.Z.push_back(input_bound_matrix(dv.gains.back(), kZEps));
    }
    dv.xi.assign(sys.size(), 1.0);
    return dv;
}

// Bisection on a scale s with xi_i = s * base_i over `subset`.
struct BisectOutcome {
    bool feasible = false;
    DecisionVars dv;
    std::string note;
};

BisectOutcome bisect(const LargeScaleSystem& sys, const FixedParams& p, const StateSet& x,
                     const SynthesisConfig& cfg, const std::vector<std::size_t>& subset, DecisionVars start,
                     const Vector& base, bool have_warm) {
    const XiBisection& b = cfg.xi_bisection;
    auto at = [&](double s, DecisionVars seed) {
        for (std::size_t i : subset) seed.xi[i] = s * base[i];
        const bool ok = solve_subset(sys, p, subset, seed, x, cfg);
        return std::make_pair(ok, std::move(seed));
    };

    double base_max = 0.0, base_min = kInf;
    for (std::size_t i : subset) {
        base_max = std::max(base_max, base[i]);
        base_min = std::min(base_min, base[i]);
    }
    double lo = b.lo / base_min;
    double hi = b.hi / base_max;
    // Gain-independent floors prune everything below them.
    double s_floor = lo;
    for (std::size_t i : subset) s_floor = std::max(s_floor, xi_floor(sys, p, i, &x) / base[i]);

    BisectOutcome out;
    DecisionVars best;
    double s_hi = kInf;

    if (have_warm && 1.0 >= s_floor && 1.0 <= hi) {
        auto [ok, dv] = at(1.0, start);
        if (ok) {
            s_hi = 1.0;
            best = std::move(dv);
            // Along a trajectory the previous minimum usually still is the
            // minimum; one probe just below it settles that case.
            const double just_below = 1.0 - 0.99 * b.tol;
            if (just_below > std::max(s_floor, lo)) {
                auto [ok2, dv2] = at(just_below, best);
                if (!ok2) {
                    out.feasible = true;
                    out.dv = std::move(best);
                    return out;
                }
                s_hi = just_below;
                best = std::move(dv2);
            }
        }
    }
    if (s_hi == kInf) {
        // No feasible warm start: scan a log grid upward from the floor for a
        // first feasible scale (the feasible set is bounded above as well).
        const double s0 = std::max(s_floor, lo);
        const int n = 24;
        double prev = s0;
        for (int k = 0; k <= n && s_hi == kInf; ++k) {
            const double s = s0 * std::pow(hi / s0, static_cast<double>(k) / n);
            auto [ok, dv] = at(s, start);
            if (ok) {
                s_hi = s;
                best = std::move(dv);
                lo = k == 0 ? s : prev;
            }
            prev = s;
        }
        if (s_hi == kInf) {
            out.note = "no feasible xi found in [" + std::to_string(b.lo) + ", " + std::to_string(b.hi) + "]";
            return out;
        }
    }
    lo = std::max(lo, s_floor);
    if (lo >= s_hi) lo = s_hi;

    // Exactly at the floor?
    if (lo < s_hi && s_floor <= s_hi) {
        auto [ok, dv] = at(s_floor, best);
        if (ok) {
            s_hi = s_floor;
            best = std::move(dv);
            lo = s_floor;
        }
    }
    while (s_hi - lo > b.tol * s_hi) {
        const double mid = (s_hi / lo > 4.0) ? std::sqrt(lo * s_hi) : 0.5 * (lo + s_hi);
        auto [ok, dv] = at(mid, best);
        if (ok) {
            s_hi = mid;
            best = std::move(dv);
        } else {
            lo = mid;
        }
    }
    out.feasible = true;
    out.dv = std::move(best);
    return out;
}

}  // namespace

void SynthesisConfig::validate() const {
    if (!(xi_bisection.lo > 0.0)) throw ConfigError("must be positive", "synthesis.xi_bisection.lo");
    if (!(xi_bisection.hi > xi_bisection.lo)) throw ConfigError("must exceed lo", "synthesis.xi_bisection.hi");
    if (!(xi_bisection.tol > 0.0)) throw ConfigError("must be positive", "synthesis.xi_bisection.tol");
    if (search.max_iterations < 1) throw ConfigError("must be >= 1", "synthesis.search.max_iterations");
    if (search.restarts < 0) throw ConfigError("must be >= 0", "synthesis.search.restarts");
    if (search.step_schedule.empty()) throw ConfigError("must not be empty", "synthesis.search.step_schedule");
    for (double s : search.step_schedule)
        if (!(s > 0.0)) throw ConfigError("steps must be positive", "synthesis.search.step_schedule");
    if (!(tol.psd_tol >= 0.0)) throw ConfigError("must be >= 0", "synthesis.tolerance");
    if (!(tol.strict_margin >= 0.0)) throw ConfigError("must be >= 0", "synthesis.margin");
    if (vertex_grid_density < 2) throw ConfigError("must be >= 2", "synthesis.vertex_grid_density");
    if (!(step1.lambda_min > 0.0 && step1.lambda_max < 1.0 && step1.lambda_min < step1.lambda_max))
        throw ConfigError("need 0 < lambda_min < lambda_max < 1", "synthesis.step1");
}

SymMatrix input_bound_matrix(const std::vector<Matrix>& gains, double eps) {
    const std::size_t nx = gains.front().cols();
    Matrix z = eps * Matrix::identity(nx);
    for (const auto& k : gains) z += k.transpose() * k;
    return SymMatrix(z);
}

std::vector<InstanceReport> evaluate_instances(const LargeScaleSystem& sys, const FixedParams& p,
                                               const DecisionVars& dv, const LmiTolerances& tol,
                                               const StateSet* x_current) {
    std::vector<InstanceReport> out;
    auto push = [&](const LMIInstance& inst) {
        const double m = signed_margin(inst);
        out.push_back({inst.key(), inst.origin, inst.sense, m, violation(inst, m, tol)});
    };
    for (std::size_t i = 0; i < sys.size(); ++i) {
        const Subsystem& sub = sys.subsystems[i];
        for (std::size_t l = 0; l < sub.rule_count(); ++l)
            for (std::size_t m = 0; m < sub.rule_count(); ++m) {
                push(assemble_thm1(sys, p, dv, i, l, m));
                push(assemble_thm2(sys, p, dv, i, l, m));
            }
        for (std::size_t m = 0; m < sub.rule_count(); ++m) {
            const InputConstraintCheck ic = assemble_input_constraint(sub, dv, i, m);
            push(ic.lmi);
            for (std::size_t s = 0; s < sub.nu(); ++s) push(assemble_input_over_set(sub, p, dv, i, m, s));
        }
        // Diagonal bounds do not depend on m.
        const InputConstraintCheck ic = assemble_input_constraint(sub, dv, i, 0);
        for (std::size_t s = 0; s < ic.bound_excess.size(); ++s) {
            const double margin = dv.Z[i](s, s) - sub.u_max[s] * sub.u_max[s];
            out.push_back({"zbound/" + std::to_string(i) + "/" + std::to_string(s), LmiOrigin::input_constraint,
                           LmiSense::nsd_nonstrict, margin, ic.bound_excess[s]});
        }
        const double floor = p.N_ratio[i] * sub.eta * sub.eta;
        out.push_back({"eta_floor/" + std::to_string(i), LmiOrigin::thm1, LmiSense::nsd_nonstrict,
                       floor - dv.xi[i], std::max(0.0, floor - dv.xi[i])});
        if (x_current) {
            LMIInstance inst = assemble_state_membership((*x_current)[i], dv.xi[i], p.X[i]);
            inst.subsystem = i;
            push(inst);
        }
    }
    return out;
}

double feasibility_violation(const LargeScaleSystem& sys, const FixedParams& p, const DecisionVars& dv,
                             const LmiTolerances& tol, const StateSet* x_current) {
    double worst = 0.0;
    for (const auto& r : evaluate_instances(sys, p, dv, tol, x_current)) worst = std::max(worst, r.violation);
    return worst;
}

std::optional<DecisionVars> solve_fixed_xi(const LargeScaleSystem& sys, const FixedParams& p, const Vector& xi,
                                           const StateSet& x_current, const SynthesisConfig& cfg,
                                           const GainSet* warm) {
    if (xi.size() != sys.size()) throw ConfigError("expected one xi per subsystem", "xi");
    for (double v : xi)
        if (!(v > 0.0)) throw ConfigError("xi must be positive", "xi");
    DecisionVars dv = initial_dv(sys, warm);
    dv.xi = xi;
    std::vector<std::size_t> all(sys.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    if (!solve_subset(sys, p, all, dv, x_current, cfg)) return std::nullopt;
    return dv;
}

SynthesisResult minimize_xi(const LargeScaleSystem& sys, const FixedParams& p, const StateSet& x_current,
                            const SynthesisConfig& cfg, const DecisionVars* warm) {
    DecisionVars start = initial_dv(sys, warm ? &warm->gains : nullptr);
    Vector base(sys.size(), 1.0);
    if (warm && warm->xi.size() == sys.size()) base = warm->xi;

    SynthesisResult res;
    std::ostringstream diag;
    bool ok = true;
    if (cfg.per_subsystem_xi) {
        for (std::size_t i = 0; i < sys.size() && ok; ++i) {
            BisectOutcome b = bisect(sys, p, x_current, cfg, {i}, start, base, warm != nullptr);
            if (!b.feasible) {
                ok = false;
                diag << "subsystem " << i << ": " << b.note;
            } else {
                start.gains[i] = b.dv.gains[i];
                start.Z[i] = b.dv.Z[i];
                start.xi[i] = b.dv.xi[i];
            }
        }
        if (ok) res.dv = start;
    } else {
        std::vector<std::size_t> all(sys.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        if (!warm) base.assign(sys.size(), 1.0);
        BisectOutcome b = bisect(sys, p, x_current, cfg, all, start, base, warm != nullptr);
        ok = b.feasible;
        if (ok)
            res.dv = std::move(b.dv);
        else
            diag << b.note;
    }
    if (!ok) {
        res.dv = start;
        res.feasible = false;
        res.margins = evaluate_instances(sys, p, res.dv, cfg.tol, &x_current);
        res.violation = 0.0;
        for (const auto& r : res.margins) res.violation = std::max(res.violation, r.violation);
        res.diagnostics = diag.str();
        return res;
    }
    res.margins = evaluate_instances(sys, p, res.dv, cfg.tol, &x_current);
    res.violation = 0.0;
    for (const auto& r : res.margins) res.violation = std::max(res.violation, r.violation);
    res.feasible = res.violation == 0.0;
    res.xi_achieved = res.dv.xi;
    if (!res.feasible) res.diagnostics = "re-evaluation found a violated instance";
    return res;
}

std::vector<Vector> simplex_edge_grid(std::size_t rules, int density) {
    std::vector<Vector> pts;
    if (rules == 1) return {Vector{1.0}};
    auto add = [&](Vector v) {
        for (const auto& q : pts)
            if (q == v) return;
        pts.push_back(std::move(v));
    };
    for (std::size_t a = 0; a < rules; ++a)
        for (std::size_t b = a + 1; b < rules; ++b)
            for (int t = 0; t < density; ++t) {
                const double s = static_cast<double>(t) / (density - 1);
                Vector v(rules, 0.0);
                v[a] = 1.0 - s;
                v[b] = s;
                add(std::move(v));
            }
    return pts;
}

CertificateReport verify_certificate(const LargeScaleSystem& sys, const FixedParams& p, const DecisionVars& dv,
                                     int grid_density, const LmiTolerances& tol, const StateSet* x_current) {
    CertificateReport rep;
    for (const auto& r : evaluate_instances(sys, p, dv, tol, x_current)) {
        const std::string key = r.key.substr(0, r.key.find('/'));
        auto it = rep.worst_vertex.find(key);
        if (it == rep.worst_vertex.end())
            rep.worst_vertex[key] = r.margin;
        else
            it->second = std::max(it->second, r.margin);
        if (r.violation > 0.0) ++rep.vertex_violations;
        rep.violation = std::max(rep.violation, r.violation);
    }
    rep.worst_grid["thm1"] = -kInf;
    rep.worst_grid["thm2"] = -kInf;
    for (std::size_t i = 0; i < sys.size(); ++i) {
        const Subsystem& sub = sys.subsystems[i];
        const auto grid = simplex_edge_grid(sub.rule_count(), grid_density);
        const Matrix red1 = coupling_reduction(sys, i, false);
        const Matrix red2 = coupling_reduction(sys, i, true);
        for (std::size_t a = 0; a < grid.size(); ++a)
            for (std::size_t b = 0; b < grid.size(); ++b) {
                const VertexMatrices v = blended_matrices(sub, dv, i, grid[a], grid[b]);
                LMIInstance t1{assemble_thm1_matrix(sys, p, i, dv.xi[i], v), red1, LmiOrigin::thm1,
                               LmiSense::nsd_nonstrict, i, a, b};
                LMIInstance t2{assemble_thm2_matrix(sys, p, i, dv.xi[i], v), red2, LmiOrigin::thm2,
                               LmiSense::nsd_strict, i, a, b};
                for (const LMIInstance* inst : {&t1, &t2}) {
                    const double m = signed_margin(*inst);
                    auto& w = rep.worst_grid[to_string(inst->origin)];
                    w = std::max(w, m);
                    const double v2 = violation(*inst, m, tol);
                    if (v2 > 0.0) ++rep.grid_violations;
                    rep.violation = std::max(rep.violation, v2);
                }
                ++rep.grid_points;
            }
    }
    rep.feasible = rep.vertex_violations == 0 && rep.grid_violations == 0;
    return rep;
}

// ---------------------------------------------------------------------------
// Step-1 tuning.

namespace {

struct Step1Layout {
    std::vector<std::size_t> x_off, lam_off, n_off, k_off;
    std::size_t xi_off = 0;
    std::size_t size = 0;
};

Step1Layout make_layout(const LargeScaleSystem& sys) {
    Step1Layout lay;
    std::size_t o = 0;
    for (const auto& sub : sys.subsystems) {
        const std::size_t n = sub.nx();
        lay.x_off.push_back(o);
        o += n * (n + 1) / 2;
        lay.lam_off.push_back(o++);
        lay.n_off.push_back(o++);
        lay.k_off.push_back(o);
        o += sub.rule_count() * sub.nu() * n;
    }
    lay.xi_off = o++;
    lay.size = o;
    return lay;
}

double logistic(double s) { return 1.0 / (1.0 + std::exp(-s)); }

struct Step1Problem {
    const LargeScaleSystem& sys;
    const FixedParams& base;
    const StateSet& x0;
    const SynthesisConfig& cfg;
    Step1Layout lay;
    std::vector<Matrix> red1, red2;

    void decode(std::span<const double> th, FixedParams& p, DecisionVars& dv) const {
        p = base;
        dv.gains.clear();
        dv.Z.clear();
        const double xi = std::exp(th[lay.xi_off]);
        dv.xi.assign(sys.size(), xi);
        for (std::size_t i = 0; i < sys.size(); ++i) {
            const Subsystem& sub = sys.subsystems[i];
            const std::size_t n = sub.nx();
            Matrix L(n, n);
            std::size_t o = lay.x_off[i];
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c <= r; ++c) L(r, c) = (r == c) ? std::exp(th[o++]) : th[o++];
            p.X[i] = SymMatrix(L * L.transpose());
            const Step1Config& s1 = cfg.step1;
            p.lambda[i] = s1.lambda_min + (s1.lambda_max - s1.lambda_min) * logistic(th[lay.lam_off[i]]);
            p.N_ratio[i] = std::exp(th[lay.n_off[i]]);
            std::vector<Matrix> g(sub.rule_count(), Matrix(sub.nu(), n));
            o = lay.k_off[i];
            for (auto& k : g)
                for (double& e : k.data()) e = th[o++];
            dv.Z.push_back(input_bound_matrix(g, kZEps));
            dv.gains.push_back(std::move(g));
        }
    }

    // Every condition as a symmetric matrix whose eigenvalues must be <= 0,
    // normalized to comparable units.
    std::vector<SymMatrix> conditions(std::span<const double> th) const {
        FixedParams p;
        DecisionVars dv;
        decode(th, p, dv);
        std::vector<SymMatrix> out;
        // A numerically singular X cannot be inverted later; report it as
        // invalid so the line search backs off.
        for (const auto& X : p.X) {
            const Vector ev = sym_eig(X).values;
            if (!(ev.front() > 1e-10 * ev.back())) return out;
        }
        for (std::size_t i = 0; i < sys.size(); ++i) {
            const Subsystem& sub = sys.subsystems[i];
            const double xi = dv.xi[i];
            for (std::size_t l = 0; l < sub.rule_count(); ++l)
                for (std::size_t m = 0; m < sub.rule_count(); ++m) {
                    const VertexMatrices v{sub.rules[l].A, sub.rules[l].B, sub.rules[l].E, dv.gains[i][m]};
                    out.push_back((1.0 / xi) * assemble_thm1_matrix(sys, p, i, xi, v).congruence(red1[i]));
                    out.push_back((1.0 / xi) * assemble_thm2_matrix(sys, p, i, xi, v).congruence(red2[i]));
                }
            for (std::size_t m = 0; m < sub.rule_count(); ++m)
                for (std::size_t s = 0; s < sub.nu(); ++s) {
                    const double u2 = sub.u_max[s] * sub.u_max[s];
                    out.push_back((-1.0 / u2) * assemble_input_over_set(sub, p, dv, i, m, s).matrix);
                }
            for (std::size_t s = 0; s < sub.nu() && s < sub.nx(); ++s) {
                const double u2 = sub.u_max[s] * sub.u_max[s];
                out.push_back(SymMatrix{{(dv.Z[i](s, s) - u2) / u2}});
            }
            out.push_back(SymMatrix{{(p.N_ratio[i] * sub.eta * sub.eta - xi) / xi}});
            if (!x0.empty()) {
                const double lvl = ellipsoid_level(x0[i], p.X[i], xi);
                out.push_back(SymMatrix{{lvl - 1.0}});
            }
        }
        return out;
    }
};

// Smoothed maximum over all eigenvalues and its gradient.
double smoothed(const Step1Problem& prob, std::span<const double> th, double mu, Vector* grad, double* hard) {
    const auto cs = prob.conditions(th);
    if (cs.empty()) {
        if (hard) *hard = kInf;
        return kInf;
    }
    std::vector<EigResult> eig;
    eig.reserve(cs.size());
    double top = -kInf;
    for (const auto& c : cs) {
        eig.push_back(sym_eig(c));
        top = std::max(top, eig.back().values.back());
    }
    if (hard) *hard = top;
    if (!std::isfinite(top)) return kInf;
    double sum = 0.0;
    for (const auto& e : eig)
        for (double v : e.values) sum += std::exp((v - top) / mu);
    const double f = top + mu * std::log(sum);
    if (!grad) return f;

    // Derivative of each eigenvalue along a coordinate is v^T dM v; dM comes
    // from a central difference of the assembled conditions.
    grad->assign(th.size(), 0.0);
    Vector tp(th.begin(), th.end());
    for (std::size_t k = 0; k < th.size(); ++k) {
        const double h = 1e-6 * std::max(1.0, std::abs(th[k]));
        tp[k] = th[k] + h;
        const auto cp = prob.conditions(tp);
        tp[k] = th[k] - h;
        const auto cm = prob.conditions(tp);
        tp[k] = th[k];
        double g = 0.0;
        if (cp.empty() || cm.empty()) continue;
        for (std::size_t c = 0; c < cs.size(); ++c) {
            const Matrix d = (1.0 / (2.0 * h)) * (cp[c].matrix() - cm[c].matrix());
            const EigResult& e = eig[c];
            for (std::size_t q = 0; q < e.values.size(); ++q) {
                const double wgt = std::exp((e.values[q] - top) / mu) / sum;
                if (wgt < 1e-14) continue;
                Vector vq(e.values.size());
                for (std::size_t r = 0; r < vq.size(); ++r) vq[r] = e.vectors(r, q);
                g += wgt * quad_form(d, vq);
            }
        }
        (*grad)[k] = g;
    }
    return f;
}

}  // namespace

Step1Result tune_fixed_params(const LargeScaleSystem& sys, const FixedParams& start, const StateSet& x0,
                              const SynthesisConfig& cfg, const GainSet* gains0) {
    Step1Problem prob{sys, start, x0, cfg, make_layout(sys), {}, {}};
    for (std::size_t i = 0; i < sys.size(); ++i) {
        prob.red1.push_back(coupling_reduction(sys, i, false));
        prob.red2.push_back(coupling_reduction(sys, i, true));
    }

    // Initial point from the configured values.
    Vector th(prob.lay.size, 0.0);
    double xi0 = 0.0;
    for (std::size_t i = 0; i < sys.size(); ++i) {
        const Subsystem& sub = sys.subsystems[i];
        const std::size_t n = sub.nx();
        // Cholesky factor of X_i.
        Matrix L(n, n);
        const Matrix& X = start.X[i].matrix();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c <= r; ++c) {
                double s = X(r, c);
                for (std::size_t k = 0; k < c; ++k) s -= L(r, k) * L(c, k);
                L(r, c) = (r == c) ? std::sqrt(std::max(s, 1e-300)) : s / L(c, c);
            }
        std::size_t o = prob.lay.x_off[i];
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c <= r; ++c) th[o++] = (r == c) ? std::log(L(r, c)) : L(r, c);
        const Step1Config& s1 = cfg.step1;
        const double lam = std::clamp(start.lambda[i], s1.lambda_min + 1e-3, s1.lambda_max - 1e-3);
        const double t = (lam - s1.lambda_min) / (s1.lambda_max - s1.lambda_min);
        th[prob.lay.lam_off[i]] = std::log(t / (1.0 - t));
        th[prob.lay.n_off[i]] = std::log(start.N_ratio[i]);
        o = prob.lay.k_off[i];
        for (std::size_t m = 0; m < sub.rule_count(); ++m)
            for (std::size_t e = 0; e < sub.nu() * n; ++e)
                th[o++] = (gains0 && i < gains0->size() && m < (*gains0)[i].size()) ? (*gains0)[i][m].data()[e] : 0.0;
        xi0 = std::max(xi0, 2.0 * start.N_ratio[i] * sub.eta * sub.eta);
        if (!x0.empty()) xi0 = std::max(xi0, 1.5 * std::sqrt(quad_form(X, x0[i])));
    }
    th[prob.lay.xi_off] = std::log(std::max(xi0, 1e-6));

    Step1Result res;
    const std::size_t n = th.size();
    const std::vector<double> mus{3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5};
    const int per_stage = std::max(50, cfg.step1.max_iterations / static_cast<int>(mus.size()));
    Vector best_th = th;
    double best_hard = kInf;
    int iters = 0;

    for (double mu : mus) {
        Vector g;
        double hard = 0.0;
        double f = smoothed(prob, th, mu, &g, &hard);
        std::vector<double> Hinv(n * n, 0.0);
        for (std::size_t k = 0; k < n; ++k) Hinv[k * n + k] = 1.0;
        for (int it = 0; it < per_stage; ++it, ++iters) {
            if (hard < best_hard) {
                best_hard = hard;
                best_th = th;
            }
            if (best_hard <= -cfg.step1.target_margin) break;
            Vector dir(n, 0.0);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < n; ++c) dir[r] -= Hinv[r * n + c] * g[c];
            double slope = dot(dir, g);
            if (!(slope < 0.0)) {
                std::fill(Hinv.begin(), Hinv.end(), 0.0);
                for (std::size_t k = 0; k < n; ++k) Hinv[k * n + k] = 1.0;
                dir = scaled(g, -1.0);
                slope = dot(dir, g);
            }
            if (std::sqrt(-slope) < 1e-12) break;
            // Cap the step in parameter space; log-parametrized entries are
            // sensitive.
            double dn = norm2(dir);
            double t = dn > 1.0 ? 1.0 / dn : 1.0;
            Vector nth(n);
            double nf = kInf, nhard = 0.0;
            bool accepted = false;
            for (int ls = 0; ls < 40; ++ls) {
                for (std::size_t k = 0; k < n; ++k) nth[k] = th[k] + t * dir[k];
                nf = smoothed(prob, nth, mu, nullptr, &nhard);
                if (nf <= f + 1e-4 * t * slope) {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if (!accepted) break;
            Vector ng;
            nf = smoothed(prob, nth, mu, &ng, &nhard);
            Vector s(n), y(n);
            for (std::size_t k = 0; k < n; ++k) {
                s[k] = nth[k] - th[k];
                y[k] = ng[k] - g[k];
            }
            const double sy = dot(s, y);
            if (sy > 1e-16) {
                // Inverse BFGS update.
                Vector hy(n, 0.0);
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < n; ++c) hy[r] += Hinv[r * n + c] * y[c];
                const double yhy = dot(y, hy);
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < n; ++c)
                        Hinv[r * n + c] += ((sy + yhy) * s[r] * s[c]) / (sy * sy) - (hy[r] * s[c] + s[r] * hy[c]) / sy;
            }
            th = std::move(nth);
            g = std::move(ng);
            f = nf;
            hard = nhard;
        }
        if (hard < best_hard) {
            best_hard = hard;
            best_th = th;
        }
        if (best_hard <= -cfg.step1.target_margin) break;
        th = best_th;
    }

    prob.decode(best_th, res.fixed, res.dv);
    res.margin = best_hard;
    res.iterations = iters;
    res.found = best_hard < 0.0;
    std::ostringstream msg;
    msg << "step-1 tuning: " << iters << " iterations, normalized margin " << best_hard;
    log_message(LogLevel::info, msg.str());
    return res;
}

}  // namespace it2mpc
