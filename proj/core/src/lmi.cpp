#include "it2mpc/lmi.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "it2mpc/errors.hpp"

namespace it2mpc {
namespace {

void require_index(std::size_t v, std::size_t n, const char* what) {
    if (v >= n) throw ConfigError(std::string(what) + " index " + std::to_string(v) + " out of range");
}

// Upper-left blocks shared by thm1 and thm2. The caller supplies the (1,1)
// scalar term and the extra (2,2) term.
struct CommonLayout {
    std::vector<std::size_t> dims;
    std::vector<std::size_t> neighbours;
};

CommonLayout layout(const LargeScaleSystem& sys, std::size_t i, bool with_input, bool with_tail) {
    const Subsystem& sub = sys.subsystems[i];
    CommonLayout out;
    out.dims = {sub.nd(), sub.nx()};
    for (const auto& [j, g] : sub.couplings) {
        out.neighbours.push_back(j);
        out.dims.push_back(sys.subsystems[j].nx());
    }
    if (with_input) out.dims.push_back(sub.nu());
    if (with_tail) out.dims.push_back(sub.nx());
    return out;
}

void check_vertex(const Subsystem& sub, const VertexMatrices& v) {
    const std::size_t nx = sub.nx();
    if (v.A.rows() != nx || v.A.cols() != nx || v.B.rows() != nx || v.B.cols() != sub.nu() || v.E.rows() != nx ||
        v.E.cols() != sub.nd() || v.k.rows() != sub.nu() || v.k.cols() != nx)
        throw ConfigError("vertex matrices do not match subsystem dimensions");
}

void check_params(const LargeScaleSystem& sys, const FixedParams& p, std::size_t i) {
    require_index(i, sys.size(), "subsystem");
    if (p.size() != sys.size() || p.lambda.size() != sys.size() || p.N_ratio.size() != sys.size() ||
        p.M.size() != sys.size() || p.tau.size() != sys.size() || p.Q.size() != sys.size())
        throw ConfigError("fixed parameters do not cover every subsystem", "fixed");
    if (p.X[i].dim() != sys.subsystems[i].nx()) throw ConfigError("X has wrong dimension", "fixed.X");
    for (const auto& [j, g] : sys.subsystems[i].couplings)
        if (j >= sys.size() || p.X[j].dim() != g.rows() || g.rows() != g.cols())
            throw ConfigError("coupled subsystems must share the state dimension", "fixed.X");
}

// Assembles the block matrix; the (1,1) and (2,2) diagonal adjustments and
// the optional input row are condition specific.
BlockAssembler assemble_common(const LargeScaleSystem& sys, const FixedParams& p, std::size_t i,
                               const VertexMatrices& v, const CommonLayout& lay, const Matrix& b11,
                               const Matrix& b22_extra) {
    const Subsystem& sub = sys.subsystems[i];
    const Matrix& X = p.X[i].matrix();
    const double n = static_cast<double>(sys.size());
    const double sa = std::sqrt(p.alpha);
    const Matrix theta = v.A + v.B * v.k;
    const Matrix xe = X * v.E;
    const Matrix x_theta = X * theta;

    BlockAssembler asm_(lay.dims);
    asm_.set(0, 0, v.E.transpose() * xe + b11);
    asm_.set(1, 0, theta.transpose() * xe);

    Matrix coupling_sum(sub.nx(), sub.nx());
    for (std::size_t j : lay.neighbours) {
        const Matrix& g = sub.couplings.at(j);
        coupling_sum += g.transpose() * p.X[j].matrix() * g;
    }
    asm_.set(1, 1, n * sa * coupling_sum + b22_extra);

    for (std::size_t a = 0; a < lay.neighbours.size(); ++a) {
        const Matrix gt = sub.couplings.at(lay.neighbours[a]).transpose();
        const std::size_t r = 2 + a;
        asm_.set(r, 0, gt * xe);
        asm_.set(r, 1, (1.0 - sa) * (gt * x_theta));
        const Matrix gtx = gt * X;
        for (std::size_t b = 0; b <= a; ++b)
            asm_.set(r, 2 + b, -(p.alpha - 1.0) * (gtx * sub.couplings.at(lay.neighbours[b])));
    }
    return asm_;
}

void set_tail(BlockAssembler& asm_, const FixedParams& p, std::size_t i, const Matrix& theta, double n) {
    const std::size_t last = asm_.block_count() - 1;
    const Matrix& X = p.X[i].matrix();
    asm_.set(last, 1, X * theta);
    asm_.set(last, last, (-1.0 / n) * X);
}

double scale_of(const SymMatrix& m) { return std::max(1.0, m.matrix().norm_inf()); }

}  // namespace

SymMatrix FixedParams::R(std::size_t i, std::size_t nu, double xi) const {
    return (M.at(i) / xi) * SymMatrix::identity(nu);
}

void FixedParams::validate(const LargeScaleSystem& sys) const {
    const std::size_t n = sys.size();
    auto count = [&](std::size_t got, const char* field) {
        if (got != n) throw ConfigError("expected " + std::to_string(n) + " entries", std::string("fixed.") + field);
    };
    count(X.size(), "X");
    count(lambda.size(), "lambda");
    count(N_ratio.size(), "N");
    count(M.size(), "M");
    count(tau.size(), "tau");
    count(Q.size(), "Q");
    auto field = [](const char* name, std::size_t i) { return std::string("fixed.") + name + "[" + std::to_string(i) + "]"; };
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t nx = sys.subsystems[i].nx();
        if (X[i].dim() != nx) throw ConfigError("expected " + std::to_string(nx) + "x" + std::to_string(nx), field("X", i));
        if (!X[i].matrix().all_finite() || min_eig(X[i]) <= 0.0) throw ConfigError("must be positive definite", field("X", i));
        if (!(lambda[i] > 0.0 && lambda[i] < 1.0)) throw ConfigError("must lie in (0, 1)", field("lambda", i));
        if (!(N_ratio[i] > 0.0) || !std::isfinite(N_ratio[i])) throw ConfigError("must be positive", field("N", i));
        if (!(M[i] > 0.0) || !std::isfinite(M[i])) throw ConfigError("must be positive", field("M", i));
        if (!(tau[i] > 0.0) || !std::isfinite(tau[i])) throw ConfigError("must be positive", field("tau", i));
        if (Q[i].dim() != nx) throw ConfigError("expected " + std::to_string(nx) + "x" + std::to_string(nx), field("Q", i));
        if (!Q[i].matrix().all_finite() || !is_psd(Q[i])) throw ConfigError("must be positive semidefinite", field("Q", i));
    }
    if (!(alpha >= 2.0) || !std::isfinite(alpha)) throw ConfigError("must be >= 2", "fixed.alpha");
}

const char* to_string(LmiOrigin o) {
    switch (o) {
        case LmiOrigin::thm1: return "thm1";
        case LmiOrigin::input_constraint: return "input";
        case LmiOrigin::input_over_set: return "input_set";
        case LmiOrigin::thm2: return "thm2";
        case LmiOrigin::state_membership: return "membership";
    }
    return "?";
}

const char* to_string(LmiSense s) {
    switch (s) {
        case LmiSense::nsd_nonstrict: return "<=0";
        case LmiSense::nsd_strict: return "<0";
        case LmiSense::psd_nonstrict: return ">=0";
    }
    return "?";
}

std::string LMIInstance::key() const {
    return std::string(to_string(origin)) + "/" + std::to_string(subsystem) + "/" + std::to_string(l) + "/" +
           std::to_string(m);
}

SymMatrix LMIInstance::reduced() const { return reduction.empty() ? matrix : matrix.congruence(reduction); }

double signed_margin(const LMIInstance& inst) {
    const SymMatrix r = inst.reduced();
    return inst.sense == LmiSense::psd_nonstrict ? -min_eig(r) : max_eig(r);
}

double violation(const LMIInstance& inst, double margin, const LmiTolerances& tol) {
    switch (inst.sense) {
        case LmiSense::nsd_strict: return std::max(0.0, margin + tol.strict_margin);
        case LmiSense::nsd_nonstrict:
        case LmiSense::psd_nonstrict: return std::max(0.0, margin - tol.psd_tol * scale_of(inst.matrix));
    }
    return 0.0;
}

VertexMatrices vertex_matrices(const Subsystem& sub, const DecisionVars& dv, std::size_t i, std::size_t l,
                               std::size_t m) {
    require_index(l, sub.rule_count(), "model rule");
    require_index(i, dv.gains.size(), "gain set");
    require_index(m, dv.gains[i].size(), "controller rule");
    const Rule& r = sub.rules[l];
    return {r.A, r.B, r.E, dv.gains[i][m]};
}

VertexMatrices blended_matrices(const Subsystem& sub, const DecisionVars& dv, std::size_t i,
                                std::span<const double> w, std::span<const double> h) {
    require_index(i, dv.gains.size(), "gain set");
    BlendedMatrices b = blend(sub, w);
    return {std::move(b.A), std::move(b.B), std::move(b.E), blend_gain(dv.gains[i], h)};
}

SymMatrix assemble_thm1_matrix(const LargeScaleSystem& sys, const FixedParams& p, std::size_t i, double xi,
                               const VertexMatrices& v) {
    check_params(sys, p, i);
    const Subsystem& sub = sys.subsystems[i];
    check_vertex(sub, v);
    const CommonLayout lay = layout(sys, i, false, true);
    const Matrix b11 = (-xi * p.lambda[i] * p.N_ratio[i]) * Matrix::identity(sub.nd());
    const Matrix b22 = (-(1.0 - p.lambda[i])) * p.X[i].matrix();
    BlockAssembler asm_ = assemble_common(sys, p, i, v, lay, b11, b22);
    set_tail(asm_, p, i, v.A + v.B * v.k, static_cast<double>(sys.size()));
    return asm_.build();
}

SymMatrix assemble_thm1_reduced_matrix(const LargeScaleSystem& sys, const FixedParams& p, std::size_t i,
                                       double xi, const VertexMatrices& v) {
    check_params(sys, p, i);
    const Subsystem& sub = sys.subsystems[i];
    check_vertex(sub, v);
    const CommonLayout lay = layout(sys, i, false, false);
    const Matrix theta = v.A + v.B * v.k;
    const double n = static_cast<double>(sys.size());
    const Matrix b11 = (-xi * p.lambda[i] * p.N_ratio[i]) * Matrix::identity(sub.nd());
    const Matrix b22 = n * (theta.transpose() * p.X[i].matrix() * theta) - (1.0 - p.lambda[i]) * p.X[i].matrix();
    return assemble_common(sys, p, i, v, lay, b11, b22).build();
}

SymMatrix assemble_thm2_matrix(const LargeScaleSystem& sys, const FixedParams& p, std::size_t i, double xi,
                               const VertexMatrices& v) {
    check_params(sys, p, i);
    const Subsystem& sub = sys.subsystems[i];
    check_vertex(sub, v);
    const CommonLayout lay = layout(sys, i, true, true);
    const Matrix b11 = (-xi * p.tau[i]) * Matrix::identity(sub.nd());
    const Matrix b22 = xi * p.Q[i].matrix() - p.X[i].matrix();
    BlockAssembler asm_ = assemble_common(sys, p, i, v, lay, b11, b22);
    const std::size_t urow = asm_.block_count() - 2;
    asm_.set(urow, 1, p.M[i] * v.k);
    asm_.set(urow, urow, -p.M[i] * Matrix::identity(sub.nu()));
    set_tail(asm_, p, i, v.A + v.B * v.k, static_cast<double>(sys.size()));
    return asm_.build();
}

Matrix coupling_reduction(const LargeScaleSystem& sys, std::size_t i, bool with_input) {
    require_index(i, sys.size(), "subsystem");
    const Subsystem& sub = sys.subsystems[i];
    std::vector<Matrix> diag{Matrix::identity(sub.nd()), Matrix::identity(sub.nx())};
    if (!sub.couplings.empty()) {
        std::size_t cols = 0;
        for (const auto& [j, g] : sub.couplings) cols += g.cols();
        Matrix stacked(sub.nx(), cols);
        std::size_t c0 = 0;
        for (const auto& [j, g] : sub.couplings) {
            stacked.set_block(0, c0, g);
            c0 += g.cols();
        }
        diag.push_back(row_space_basis(stacked));
    }
    if (with_input) diag.push_back(Matrix::identity(sub.nu()));
    diag.push_back(Matrix::identity(sub.nx()));

    std::size_t rows = 0, cols = 0;
    for (const auto& d : diag) {
        rows += d.rows();
        cols += d.cols();
    }
    Matrix v(rows, cols);
    std::size_t r0 = 0, c0 = 0;
    for (const auto& d : diag) {
        v.set_block(r0, c0, d);
        r0 += d.rows();
        c0 += d.cols();
    }
    return v;
}

LMIInstance assemble_thm1(const LargeScaleSystem& sys, const FixedParams& p, const DecisionVars& dv,
                          std::size_t i, std::size_t l, std::size_t m) {
    require_index(i, sys.size(), "subsystem");
    LMIInstance inst;
    inst.matrix = assemble_thm1_matrix(sys, p, i, dv.xi.at(i), vertex_matrices(sys.subsystems[i], dv, i, l, m));
    inst.reduction = coupling_reduction(sys, i, false);
    inst.origin = LmiOrigin::thm1;
    inst.sense = LmiSense::nsd_nonstrict;
    inst.subsystem = i;
    inst.l = l;
    inst.m = m;
    return inst;
}

LMIInstance assemble_thm1_reduced(const LargeScaleSystem& sys, const FixedParams& p, const DecisionVars& dv,
                                  std::size_t i, std::size_t l, std::size_t m) {
    require_index(i, sys.size(), "subsystem");
    LMIInstance inst;
    inst.matrix =
        assemble_thm1_reduced_matrix(sys, p, i, dv.xi.at(i), vertex_matrices(sys.subsystems[i], dv, i, l, m));
    // Reduction without the trailing x_i+ block.
    const Matrix full = coupling_reduction(sys, i, false);
    const std::size_t nx = sys.subsystems[i].nx();
    inst.reduction = full.block(0, 0, full.rows() - nx, full.cols() - nx);
    inst.origin = LmiOrigin::thm1;
    inst.sense = LmiSense::nsd_nonstrict;
    inst.subsystem = i;
    inst.l = l;
    inst.m = m;
    return inst;
}

LMIInstance assemble_thm2(const LargeScaleSystem& sys, const FixedParams& p, const DecisionVars& dv,
                          std::size_t i, std::size_t l, std::size_t m) {
    require_index(i, sys.size(), "subsystem");
    LMIInstance inst;
    inst.matrix = assemble_thm2_matrix(sys, p, i, dv.xi.at(i), vertex_matrices(sys.subsystems[i], dv, i, l, m));
    inst.reduction = coupling_reduction(sys, i, true);
    inst.origin = LmiOrigin::thm2;
    inst.sense = LmiSense::nsd_strict;
    inst.subsystem = i;
    inst.l = l;
    inst.m = m;
    return inst;
}

InputConstraintCheck assemble_input_constraint(const Subsystem& sub, const DecisionVars& dv, std::size_t i,
                                               std::size_t m) {
    require_index(i, dv.gains.size(), "gain set");
    require_index(m, dv.gains[i].size(), "controller rule");
    require_index(i, dv.Z.size(), "Z");
    const Matrix& k = dv.gains[i][m];
    const SymMatrix& Z = dv.Z[i];
    const std::size_t nx = sub.nx(), nu = sub.nu();
    if (Z.dim() != nx || k.rows() != nu || k.cols() != nx) throw ConfigError("input constraint dimension mismatch");

    BlockAssembler asm_({nx, nu});
    asm_.set(0, 0, Z.matrix());
    asm_.set(1, 0, k);
    asm_.set(1, 1, Matrix::identity(nu));

    InputConstraintCheck out;
    out.lmi.matrix = asm_.build();
    out.lmi.origin = LmiOrigin::input_constraint;
    out.lmi.sense = LmiSense::psd_nonstrict;
    out.lmi.subsystem = i;
    out.lmi.m = m;
    // Diagonal entries of Z, one per input channel.
    out.bound_excess.assign(nu, 0.0);
    for (std::size_t s = 0; s < nu && s < nx; ++s) {
        out.bound_excess[s] = std::max(0.0, Z(s, s) - sub.u_max[s] * sub.u_max[s]);
        if (out.bound_excess[s] > 0.0) out.bounds_hold = false;
    }
    return out;
}

LMIInstance assemble_input_over_set(const Subsystem& sub, const FixedParams& p, const DecisionVars& dv,
                                    std::size_t i, std::size_t m, std::size_t s) {
    require_index(i, dv.gains.size(), "gain set");
    require_index(m, dv.gains[i].size(), "controller rule");
    require_index(s, sub.nu(), "input channel");
    const Matrix& k = dv.gains[i][m];
    const double xi = dv.xi.at(i);
    const std::size_t nx = sub.nx();
    BlockAssembler asm_({1, nx});
    asm_.set(0, 0, Matrix{{sub.u_max[s] * sub.u_max[s]}});
    asm_.set(1, 0, xi * k.block(s, 0, 1, nx).transpose());
    asm_.set(1, 1, p.X.at(i).matrix());
    LMIInstance inst;
    inst.matrix = asm_.build();
    inst.origin = LmiOrigin::input_over_set;
    inst.sense = LmiSense::psd_nonstrict;
    inst.subsystem = i;
    inst.l = s;
    inst.m = m;
    return inst;
}

LMIInstance assemble_state_membership(std::span<const double> x, double xi, const SymMatrix& X) {
    if (x.size() != X.dim()) throw ConfigError("state and X dimensions differ");
    const SymMatrix xinv = sym_inverse(X);
    const std::size_t n = X.dim();
    BlockAssembler asm_({1, n});
    asm_.set(0, 0, Matrix{{xi}});
    asm_.set(1, 0, Matrix::column(x));
    asm_.set(1, 1, xi * xinv.matrix());
    LMIInstance inst;
    inst.matrix = asm_.build();
    inst.origin = LmiOrigin::state_membership;
    inst.sense = LmiSense::psd_nonstrict;
    return inst;
}

double ellipsoid_level(std::span<const double> x, const SymMatrix& X, double xi) {
    return quad_form(X.matrix(), x) / (xi * xi);
}

double check_rpi_pointwise(const LargeScaleSystem& sys, const FixedParams& p, const DecisionVars& dv,
                           const StateSet& x, const StateSet& x_next, const StateSet& d) {
    double total = 0.0;
    for (std::size_t i = 0; i < sys.size(); ++i) {
        const double xi = dv.xi.at(i);
        const double eta = sys.subsystems[i].eta;
        // (1/xi) x^T P x with P = X / xi.
        const double now = ellipsoid_level(x[i], p.X[i], xi);
        const double next = ellipsoid_level(x_next[i], p.X[i], xi);
        total += next - now - p.lambda[i] * (dot(d[i], d[i]) / (eta * eta) - now);
    }
    return total;
}

double check_rpi_pointwise(const LargeScaleSystem& sys, const FixedParams& p, const DecisionVars& dv,
                           const StateSet& x, const StateSet& d, const StepOptions& opts) {
    const StateSet next = step_closed_loop(sys, dv.gains, x, d, opts);
    return check_rpi_pointwise(sys, p, dv, x, next, d);
}

}  // namespace it2mpc
