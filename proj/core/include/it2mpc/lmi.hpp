#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "it2mpc/fuzzy_model.hpp"
#include "it2mpc/numerics.hpp"

namespace it2mpc {

// Quantities fixed before the online search: one Lyapunov-type matrix X_i per
// subsystem, the decay rate lambda_i, the ratio N_i = xi_i / eta_i^2, the input
// weight M_i = xi_i R, the attenuation level tau_i, state weight Q_i and the
// coupling split alpha.
struct FixedParams {
    std::vector<SymMatrix> X;
    Vector lambda;
    Vector N_ratio;
    Vector M;
    Vector tau;
    std::vector<SymMatrix> Q;
    double alpha = 2.0;

    std::size_t size() const noexcept { return X.size(); }
    // Effective input weight R_i = (M_i / xi_i) I.
    SymMatrix R(std::size_t i, std::size_t nu, double xi) const;
    void validate(const LargeScaleSystem& sys) const;

    friend bool operator==(const FixedParams&, const FixedParams&) = default;
};

struct DecisionVars {
    GainSet gains;              // gains[i][m], n_u x n_x
    std::vector<SymMatrix> Z;   // n_x x n_x
    Vector xi;

    friend bool operator==(const DecisionVars&, const DecisionVars&) = default;
};

enum class LmiOrigin { thm1, input_constraint, input_over_set, thm2, state_membership };
enum class LmiSense { nsd_nonstrict, nsd_strict, psd_nonstrict };

const char* to_string(LmiOrigin o);
const char* to_string(LmiSense s);

struct LMIInstance {
    SymMatrix matrix;
    // Orthonormal columns spanning the directions the condition constrains.
    // Coupling states enter only through sum_j g_ij x_j, so the kernel of the
    // stacked coupling map is an exact null space of the quadratic form and is
    // excluded before eigenvalues are compared with zero. Empty = identity.
    Matrix reduction;
    LmiOrigin origin = LmiOrigin::thm1;
    LmiSense sense = LmiSense::nsd_nonstrict;
    std::size_t subsystem = 0;
    std::size_t l = 0;  // model rule (or grid point)
    std::size_t m = 0;  // controller rule (or grid point / input channel)

    std::string key() const;
    SymMatrix reduced() const;
};

struct LmiTolerances {
    double psd_tol = kDefaultPsdTol;
    double strict_margin = 1e-9;

    friend bool operator==(const LmiTolerances&, const LmiTolerances&) = default;
};

// Sign-normalized extreme eigenvalue of the reduced matrix: largest eigenvalue
// for NSD senses, minus the smallest eigenvalue for PSD. Non-positive means the
// condition holds (strict instances additionally need <= -strict_margin).
double signed_margin(const LMIInstance& inst);
// Amount by which an instance misses its sense; 0 when satisfied.
double violation(const LMIInstance& inst, double margin, const LmiTolerances& tol);
inline double violation(const LMIInstance& inst, const LmiTolerances& tol = {}) {
    return violation(inst, signed_margin(inst), tol);
}

// Matrices of one (possibly blended) vertex: Theta = A + B k.
struct VertexMatrices {
    Matrix A;
    Matrix B;
    Matrix E;
    Matrix k;
};

VertexMatrices vertex_matrices(const Subsystem& sub, const DecisionVars& dv, std::size_t i, std::size_t l,
                               std::size_t m);
VertexMatrices blended_matrices(const Subsystem& sub, const DecisionVars& dv, std::size_t i,
                                std::span<const double> w, std::span<const double> h);

// Block layout: (d, x_i, x_j for each coupled j, [u], x_i+).
SymMatrix assemble_thm1_matrix(const LargeScaleSystem& sys, const FixedParams& p, std::size_t i, double xi,
                               const VertexMatrices& v);
// Same condition with the trailing block eliminated (adds N Theta^T X Theta).
SymMatrix assemble_thm1_reduced_matrix(const LargeScaleSystem& sys, const FixedParams& p, std::size_t i,
                                       double xi, const VertexMatrices& v);
SymMatrix assemble_thm2_matrix(const LargeScaleSystem& sys, const FixedParams& p, std::size_t i, double xi,
                               const VertexMatrices& v);
// Basis for reduction(); `with_input` selects the layout with the input row (thm2).
Matrix coupling_reduction(const LargeScaleSystem& sys, std::size_t i, bool with_input);

LMIInstance assemble_thm1(const LargeScaleSystem& sys, const FixedParams& p, const DecisionVars& dv,
                          std::size_t i, std::size_t l, std::size_t m);
LMIInstance assemble_thm1_reduced(const LargeScaleSystem& sys, const FixedParams& p, const DecisionVars& dv,
                                  std::size_t i, std::size_t l, std::size_t m);
LMIInstance assemble_thm2(const LargeScaleSystem& sys, const FixedParams& p, const DecisionVars& dv,
                          std::size_t i, std::size_t l, std::size_t m);

struct InputConstraintCheck {
    LMIInstance lmi;            // [[Z, k^T], [k, I]] >= 0
    Vector bound_excess;        // max(0, Z_ss - u_max_s^2) per input channel
    bool bounds_hold = true;
};

InputConstraintCheck assemble_input_constraint(const Subsystem& sub, const DecisionVars& dv, std::size_t i,
                                               std::size_t m);

// [[u_s^2, xi k_s], [xi k_s^T, X]] >= 0 for channel s, i.e. |k_s x| <= u_s
// for every x with x^T X x <= xi^2.
LMIInstance assemble_input_over_set(const Subsystem& sub, const FixedParams& p, const DecisionVars& dv,
                                    std::size_t i, std::size_t m, std::size_t s);

// [[xi, x^T], [x, xi X^{-1}]] >= 0  <=>  x^T X x <= xi^2.
LMIInstance assemble_state_membership(std::span<const double> x, double xi, const SymMatrix& X);

// sum_i { x_i+^T P_i x_i+ / xi_i - x_i^T P_i x_i / xi_i
//         - lambda_i (d_i^T d_i / eta_i^2 - x_i^T P_i x_i / xi_i) },  P_i = X_i / xi_i.
double check_rpi_pointwise(const LargeScaleSystem& sys, const FixedParams& p, const DecisionVars& dv,
                           const StateSet& x, const StateSet& x_next, const StateSet& d);
double check_rpi_pointwise(const LargeScaleSystem& sys, const FixedParams& p, const DecisionVars& dv,
                           const StateSet& x, const StateSet& d, const StepOptions& opts = {});

// x^T X x / xi^2, the normalized level of the invariant ellipsoid.
double ellipsoid_level(std::span<const double> x, const SymMatrix& X, double xi);

}  // namespace it2mpc
