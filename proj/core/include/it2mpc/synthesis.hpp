#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "it2mpc/fuzzy_model.hpp"
#include "it2mpc/lmi.hpp"

namespace it2mpc {

struct XiBisection {
    double lo = 1e-6;
    double hi = 1e6;
    double tol = 1e-4;  // relative to the accepted value

    friend bool operator==(const XiBisection&, const XiBisection&) = default;
};

struct SearchConfig {
    int max_iterations = 200;  // sweeps over the decision vector per restart
    int restarts = 2;
    std::uint64_t seed = 1;
    std::vector<double> step_schedule{0.5, 0.2, 0.05, 0.01, 0.002, 5e-4, 1e-4};

    friend bool operator==(const SearchConfig&, const SearchConfig&) = default;
};

// Step-1 tuning: X_i, lambda_i, N_i are re-chosen (together with a starting
// gain set and xi) by smoothing the largest eigenvalue over every condition and
// running quasi-Newton descent. Disabled -> configured values are used as-is.
struct Step1Config {
    bool enabled = false;
    int max_iterations = 4000;
    double target_margin = 1e-4;   // required normalized slack before stopping early
    double lambda_min = 0.01;
    double lambda_max = 0.95;

    friend bool operator==(const Step1Config&, const Step1Config&) = default;
};

struct SynthesisConfig {
    XiBisection xi_bisection;
    SearchConfig search;
    LmiTolerances tol;
    int vertex_grid_density = 11;
    bool per_subsystem_xi = false;
    Step1Config step1;

    void validate() const;
    friend bool operator==(const SynthesisConfig&, const SynthesisConfig&) = default;
};

struct InstanceReport {
    std::string key;
    LmiOrigin origin;
    LmiSense sense;
    double margin = 0.0;     // signed_margin
    double violation = 0.0;
};

struct SynthesisResult {
    DecisionVars dv;
    std::vector<InstanceReport> margins;
    bool feasible = false;
    Vector xi_achieved;
    double violation = 0.0;
    std::string diagnostics;
};

// Smallest Z with Z >= k_m^T k_m for every m in the sum sense, plus eps I.
SymMatrix input_bound_matrix(const std::vector<Matrix>& gains, double eps);

// Every vertex condition (thm1, input LMI and its diagonal bounds,
// input bound over the invariant set, thm2) plus, when x is given, state
// membership; and xi_i >= N_i eta_i^2 so the certified disturbance level
// covers the configured one.
std::vector<InstanceReport> evaluate_instances(const LargeScaleSystem& sys, const FixedParams& p,
                                               const DecisionVars& dv, const LmiTolerances& tol,
                                               const StateSet* x_current = nullptr);
double feasibility_violation(const LargeScaleSystem& sys, const FixedParams& p, const DecisionVars& dv,
                             const LmiTolerances& tol = {}, const StateSet* x_current = nullptr);

// Gains + Z for a fixed xi; nullopt when the search budget runs out.
std::optional<DecisionVars> solve_fixed_xi(const LargeScaleSystem& sys, const FixedParams& p, const Vector& xi,
                                           const StateSet& x_current, const SynthesisConfig& cfg,
                                           const GainSet* warm = nullptr);

// Bisection on a common scale of xi. `warm` seeds the gain search and, when
// feasible at x_current, supplies the upper bracket.
SynthesisResult minimize_xi(const LargeScaleSystem& sys, const FixedParams& p, const StateSet& x_current,
                            const SynthesisConfig& cfg, const DecisionVars* warm = nullptr);

struct CertificateReport {
    std::map<std::string, double> worst_vertex;  // origin -> worst signed margin
    std::map<std::string, double> worst_grid;    // blended thm1 / thm2 on the membership grid
    std::size_t vertex_violations = 0;
    std::size_t grid_violations = 0;
    std::size_t grid_points = 0;
    double violation = 0.0;
    bool feasible = false;
};

CertificateReport verify_certificate(const LargeScaleSystem& sys, const FixedParams& p, const DecisionVars& dv,
                                     int grid_density, const LmiTolerances& tol = {},
                                     const StateSet* x_current = nullptr);

// Points on the edges of the probability simplex, `density` per edge.
std::vector<Vector> simplex_edge_grid(std::size_t rules, int density);

struct Step1Result {
    FixedParams fixed;
    DecisionVars dv;
    double margin = 0.0;  // largest normalized eigenvalue; negative = strictly feasible
    int iterations = 0;
    bool found = false;
};

Step1Result tune_fixed_params(const LargeScaleSystem& sys, const FixedParams& start, const StateSet& x0,
                              const SynthesisConfig& cfg, const GainSet* gains0 = nullptr);

}  // namespace it2mpc
