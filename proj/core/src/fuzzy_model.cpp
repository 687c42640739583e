#include "it2mpc/fuzzy_model.hpp"

#include <cmath>
#include <string>

#include "it2mpc/errors.hpp"
#include "it2mpc/log.hpp"

namespace it2mpc {
namespace {

constexpr double kDegenerateFiring = 1e-12;

std::string path(std::size_t i, const std::string& rest = {}) {
    return "subsystems[" + std::to_string(i) + "]" + (rest.empty() ? "" : "." + rest);
}

std::string idx(const std::string& name, std::size_t k) { return name + "[" + std::to_string(k) + "]"; }

void check_shape(const Matrix& m, std::size_t r, std::size_t c, const std::string& field) {
    if (m.rows() != r || m.cols() != c)
        throw ConfigError("expected " + std::to_string(r) + "x" + std::to_string(c) + ", got " +
                              std::to_string(m.rows()) + "x" + std::to_string(m.cols()),
                          field);
    if (!m.all_finite()) throw ConfigError("non-finite entry", field);
}

void check_family(const IT2MembershipFamily& f, std::size_t rules, const std::string& field) {
    if (f.lower.size() != rules || f.upper.size() != rules)
        throw ConfigError("expected " + std::to_string(rules) + " lower/upper functions", field);
    if (f.true_mf && f.true_mf->size() != rules)
        throw ConfigError("expected " + std::to_string(rules) + " true membership functions", field + ".true");
    auto check_c = [&](const std::vector<SigmoidMF>& v, const std::string& name) {
        for (std::size_t l = 0; l < v.size(); ++l)
            if (v[l].c == 0.0 || !std::isfinite(v[l].c) || !std::isfinite(v[l].a) || !std::isfinite(v[l].sin_gain))
                throw ConfigError("slope divisor must be finite and nonzero", field + "." + idx(name, l));
    };
    check_c(f.lower, "lower");
    check_c(f.upper, "upper");
    if (f.true_mf) check_c(*f.true_mf, "true");

    // Envelope, sampled.
    for (int s = -400; s <= 400; ++s) {
        const double z = 0.05 * s;
        for (std::size_t l = 0; l < rules; ++l) {
            const double lo = f.lower[l](z);
            const double up = f.upper[l](z);
            if (up < lo - 1e-12)
                throw ConfigError("upper grade below lower grade at z = " + std::to_string(z), field + "." + idx("upper", l));
            if (f.true_mf) {
                const double t = (*f.true_mf)[l](z);
                if (t < lo - 1e-12 || t > up + 1e-12)
                    throw ConfigError("true grade outside [lower, upper] at z = " + std::to_string(z),
                                      field + "." + idx("true", l));
            }
        }
    }
}

Vector normalize(Vector raw, const char* what) {
    double sum = 0.0;
    for (double v : raw) sum += v;
    if (sum < kDegenerateFiring) {
        log_message(LogLevel::warning, std::string("degenerate ") + what + " firing strengths; using uniform weights");
        for (double& v : raw) v = 1.0 / static_cast<double>(raw.size());
        return raw;
    }
    for (double& v : raw) v /= sum;
    return raw;
}

double premise(const Subsystem& sub, std::span<const double> x) {
    if (sub.premise_selector >= x.size()) throw ConfigError("premise selector out of range", "premise_selector");
    const double z = x[sub.premise_selector];
    if (!std::isfinite(z)) throw InvalidMatrix("non-finite premise variable");
    return z;
}

void check_state_sizes(const LargeScaleSystem& sys, const StateSet& v, const char* what,
                       std::size_t (Subsystem::*dim)() const) {
    if (v.size() != sys.size())
        throw ConfigError(std::string(what) + ": expected " + std::to_string(sys.size()) + " subsystems", what);
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i].size() != (sys.subsystems[i].*dim)())
            throw ConfigError("dimension mismatch", std::string(what) + "[" + std::to_string(i) + "]");
}

// Shared plant kernel: x_i+ = A_w x_i + B_w u_i + E_w d_i + sum_j g_ij x_j.
Vector plant_update(const LargeScaleSystem& sys, std::size_t i, const Vector& w, const StateSet& x,
                    const Vector& u, const Vector& d) {
    const Subsystem& sub = sys.subsystems[i];
    const BlendedMatrices bm = blend(sub, w);
    Vector next = bm.A * std::span<const double>(x[i]);
    const Vector bu = bm.B * std::span<const double>(u);
    const Vector ed = bm.E * std::span<const double>(d);
    for (std::size_t r = 0; r < next.size(); ++r) next[r] += bu[r] + ed[r];
    // Memberships are normalized, so sum_l w_l g_ij = g_ij.
    for (const auto& [j, g] : sub.couplings) {
        const Vector gx = g * std::span<const double>(x[j]);
        for (std::size_t r = 0; r < next.size(); ++r) next[r] += gx[r];
    }
    return next;
}

Vector plant_memberships(const Subsystem& sub, std::span<const double> x, const ModelMembershipMode& mode) {
    if (mode.true_plant && !sub.model_mfs.true_mf)
        return eval_model_memberships(sub, x, ModelMembershipMode::reconstructed(mode.rho_bar));
    return eval_model_memberships(sub, x, mode);
}

}  // namespace

double SigmoidMF::operator()(double z) const {
    const double s = (z + a + sin_gain * std::sin(z)) / c;
    // 1/(1+e^s) without overflow for large |s|.
    const double logistic = s > 0.0 ? std::exp(-s) / (1.0 + std::exp(-s)) : 1.0 / (1.0 + std::exp(s));
    return form == Form::logistic ? logistic : 1.0 - logistic;
}

void LargeScaleSystem::validate() const {
    if (subsystems.empty()) throw ConfigError("at least one subsystem is required", "subsystems");
    for (std::size_t i = 0; i < subsystems.size(); ++i) {
        const Subsystem& s = subsystems[i];
        if (s.rules.empty()) throw ConfigError("at least one rule is required", path(i, "rules"));
        const std::size_t nx = s.rules[0].A.rows();
        const std::size_t nu = s.rules[0].B.cols();
        const std::size_t nd = s.rules[0].E.cols();
        if (nx == 0) throw ConfigError("empty state matrix", path(i, "rules[0].A"));
        for (std::size_t l = 0; l < s.rules.size(); ++l) {
            const std::string base = path(i, idx("rules", l));
            check_shape(s.rules[l].A, nx, nx, base + ".A");
            check_shape(s.rules[l].B, nx, nu, base + ".B");
            check_shape(s.rules[l].E, nx, nd, base + ".E");
        }
        for (const auto& [j, g] : s.couplings) {
            const std::string field = path(i, "couplings." + std::to_string(j));
            if (j == i) throw ConfigError("self-coupling is not allowed", field);
            if (j >= subsystems.size()) throw ConfigError("coupling references a missing subsystem", field);
            const std::size_t nxj = subsystems[j].rules.empty() ? 0 : subsystems[j].rules[0].A.rows();
            // The coupling energy term g_ij^T X_j g_ij needs x_i and x_j in the same space.
            if (nxj != nx) throw ConfigError("coupled subsystems must share the state dimension", field);
            check_shape(g, nx, nxj, field);
        }
        check_family(s.model_mfs, s.rules.size(), path(i, "model_mfs"));
        check_family(s.controller_mfs, s.rules.size(), path(i, "controller_mfs"));
        if (s.u_max.size() != nu)
            throw ConfigError("expected " + std::to_string(nu) + " input bounds", path(i, "u_max"));
        for (std::size_t k = 0; k < nu; ++k)
            if (!(s.u_max[k] > 0.0)) throw ConfigError("input bound must be positive", path(i, idx("u_max", k)));
        if (!(s.eta > 0.0) || !std::isfinite(s.eta)) throw ConfigError("disturbance radius must be positive", path(i, "eta"));
        if (s.H && s.H->cols() != nx) throw ConfigError("output matrix must have n_x columns", path(i, "H"));
        if (s.premise_selector >= nx) throw ConfigError("premise selector out of range", path(i, "premise_selector"));
    }
}

Vector eval_model_memberships(const Subsystem& sub, std::span<const double> x, const ModelMembershipMode& mode) {
    const double z = premise(sub, x);
    const std::size_t r = sub.rule_count();
    Vector raw(r);
    if (mode.true_plant) {
        if (!sub.model_mfs.true_mf) throw MissingTrueMF("subsystem '" + sub.name + "' has no true membership configured");
        for (std::size_t l = 0; l < r; ++l) raw[l] = (*sub.model_mfs.true_mf)[l](z);
    } else {
        const double rho = mode.rho_bar;
        for (std::size_t l = 0; l < r; ++l)
            raw[l] = rho * sub.model_mfs.upper[l](z) + (1.0 - rho) * sub.model_mfs.lower[l](z);
    }
    return normalize(std::move(raw), "model");
}

Vector eval_controller_memberships(const Subsystem& sub, std::span<const double> x, double mu_bar) {
    const double z = premise(sub, x);
    const std::size_t r = sub.rule_count();
    Vector raw(r);
    for (std::size_t l = 0; l < r; ++l)
        raw[l] = mu_bar * sub.controller_mfs.upper[l](z) + (1.0 - mu_bar) * sub.controller_mfs.lower[l](z);
    return normalize(std::move(raw), "controller");
}

BlendedMatrices blend(const Subsystem& sub, std::span<const double> w) {
    if (w.size() != sub.rule_count()) throw ConfigError("membership vector length does not match rule count");
    const Rule& r0 = sub.rules.front();
    BlendedMatrices out{Matrix(r0.A.rows(), r0.A.cols()), Matrix(r0.B.rows(), r0.B.cols()),
                        Matrix(r0.E.rows(), r0.E.cols())};
    for (std::size_t l = 0; l < w.size(); ++l) {
        if (w[l] == 0.0) continue;
        out.A += w[l] * sub.rules[l].A;
        out.B += w[l] * sub.rules[l].B;
        out.E += w[l] * sub.rules[l].E;
    }
    return out;
}

Matrix blend_gain(std::span<const Matrix> gains, std::span<const double> h) {
    if (gains.size() != h.size() || gains.empty()) throw ConfigError("gain count does not match rule count", "gains");
    Matrix k(gains[0].rows(), gains[0].cols());
    for (std::size_t m = 0; m < h.size(); ++m) {
        if (gains[m].rows() != k.rows() || gains[m].cols() != k.cols())
            throw ConfigError("gain dimension mismatch", "gains[" + std::to_string(m) + "]");
        if (h[m] != 0.0) k += h[m] * gains[m];
    }
    return k;
}

Vector control_law(const Subsystem& sub, std::span<const Matrix> gains, std::span<const double> h,
                   std::span<const double> x) {
    if (gains.size() != sub.rule_count()) throw ConfigError("gain count does not match rule count", "gains");
    return blend_gain(gains, h) * x;
}

StateSet step_open_loop(const LargeScaleSystem& sys, const StateSet& x, const StateSet& u, const StateSet& d,
                        const StepOptions& opts) {
    check_state_sizes(sys, x, "x", &Subsystem::nx);
    check_state_sizes(sys, u, "u", &Subsystem::nu);
    check_state_sizes(sys, d, "d", &Subsystem::nd);
    StateSet next(sys.size());
    for (std::size_t i = 0; i < sys.size(); ++i) {
        const Vector w = plant_memberships(sys.subsystems[i], x[i], opts.model);
        next[i] = plant_update(sys, i, w, x, u[i], d[i]);
    }
    return next;
}

ClosedLoopStep step_closed_loop_detail(const LargeScaleSystem& sys, const GainSet& gains, const StateSet& x,
                                       const StateSet& d, const StepOptions& opts) {
    check_state_sizes(sys, x, "x", &Subsystem::nx);
    check_state_sizes(sys, d, "d", &Subsystem::nd);
    if (gains.size() != sys.size()) throw ConfigError("expected one gain set per subsystem", "gains");

    ClosedLoopStep out;
    out.x_next.resize(sys.size());
    out.u.resize(sys.size());
    out.w.resize(sys.size());
    out.h.resize(sys.size());
    for (std::size_t i = 0; i < sys.size(); ++i) {
        const Subsystem& sub = sys.subsystems[i];
        const double dd = dot(d[i], d[i]);
        if (dd > sub.eta * sub.eta * (1.0 + 1e-12)) {
            ++out.disturbance_warnings;
            log_message(LogLevel::warning, "disturbance outside the admissible ball for subsystem " + std::to_string(i));
        }
        out.w[i] = plant_memberships(sub, x[i], opts.model);
        out.h[i] = eval_controller_memberships(sub, x[i], opts.mu_bar);
        out.u[i] = control_law(sub, gains[i], out.h[i], x[i]);
    }
    for (std::size_t i = 0; i < sys.size(); ++i) out.x_next[i] = plant_update(sys, i, out.w[i], x, out.u[i], d[i]);
    return out;
}

StateSet step_closed_loop(const LargeScaleSystem& sys, const GainSet& gains, const StateSet& x, const StateSet& d,
                          const StepOptions& opts) {
    return step_closed_loop_detail(sys, gains, x, d, opts).x_next;
}

StateSet zero_states(const LargeScaleSystem& sys) {
    StateSet s;
    for (const auto& sub : sys.subsystems) s.emplace_back(sub.nx(), 0.0);
    return s;
}

StateSet zero_inputs(const LargeScaleSystem& sys) {
    StateSet s;
    for (const auto& sub : sys.subsystems) s.emplace_back(sub.nu(), 0.0);
    return s;
}

StateSet zero_disturbances(const LargeScaleSystem& sys) {
    StateSet s;
    for (const auto& sub : sys.subsystems) s.emplace_back(sub.nd(), 0.0);
    return s;
}

}  // namespace it2mpc
