#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "it2mpc/numerics.hpp"

namespace it2mpc {

// Logistic-family membership grade, evaluated at s = (z + a + sin_gain*sin(z)) / c.
//   logistic:            1 / (1 + e^s)
//   one_minus_logistic:  1 - 1 / (1 + e^s)
// sin_gain carries a bounded parameter perturbation into the shift (a plant's
// "true" membership); it is zero for the interval bounds.
struct SigmoidMF {
    enum class Form { logistic, one_minus_logistic };

    double a = 0.0;
    double c = 1.0;
    Form form = Form::one_minus_logistic;
    double sin_gain = 0.0;

    double operator()(double z) const;
    friend bool operator==(const SigmoidMF&, const SigmoidMF&) = default;
};

struct IT2MembershipFamily {
    std::vector<SigmoidMF> lower;
    std::vector<SigmoidMF> upper;
    std::optional<std::vector<SigmoidMF>> true_mf;

    std::size_t rule_count() const noexcept { return lower.size(); }
    friend bool operator==(const IT2MembershipFamily&, const IT2MembershipFamily&) = default;
};

struct Rule {
    Matrix A;  // n_x x n_x
    Matrix B;  // n_x x n_u
    Matrix E;  // n_x x n_d
    friend bool operator==(const Rule&, const Rule&) = default;
};

struct Subsystem {
    std::string name;
    std::vector<Rule> rules;
    std::map<std::size_t, Matrix> couplings;  // j -> g_ij
    IT2MembershipFamily model_mfs;
    IT2MembershipFamily controller_mfs;
    Vector u_max;
    double eta = 0.0;
    std::optional<Matrix> H;
    std::size_t premise_selector = 0;

    std::size_t nx() const { return rules.front().A.rows(); }
    std::size_t nu() const { return rules.front().B.cols(); }
    std::size_t nd() const { return rules.front().E.cols(); }
    std::size_t rule_count() const noexcept { return rules.size(); }

    friend bool operator==(const Subsystem&, const Subsystem&) = default;
};

struct LargeScaleSystem {
    std::vector<Subsystem> subsystems;

    std::size_t size() const noexcept { return subsystems.size(); }
    // Throws ConfigError with a field path on the first inconsistency.
    void validate() const;

    friend bool operator==(const LargeScaleSystem&, const LargeScaleSystem&) = default;
};

using StateSet = std::vector<Vector>;              // one vector per subsystem
using GainSet = std::vector<std::vector<Matrix>>;  // gains[i][m], n_u x n_x

// How plant firing strengths are obtained.
struct ModelMembershipMode {
    bool true_plant = true;
    double rho_bar = 0.5;

    static ModelMembershipMode plant() { return {true, 0.5}; }
    static ModelMembershipMode reconstructed(double rho_bar) { return {false, rho_bar}; }
};

inline constexpr double kDefaultMuBar = 0.5;

Vector eval_model_memberships(const Subsystem& sub, std::span<const double> x,
                              const ModelMembershipMode& mode);
Vector eval_controller_memberships(const Subsystem& sub, std::span<const double> x,
                                   double mu_bar = kDefaultMuBar);

struct BlendedMatrices {
    Matrix A;
    Matrix B;
    Matrix E;
};

BlendedMatrices blend(const Subsystem& sub, std::span<const double> w);
// sum_m h_m k_m
Matrix blend_gain(std::span<const Matrix> gains, std::span<const double> h);
Vector control_law(const Subsystem& sub, std::span<const Matrix> gains, std::span<const double> h,
                   std::span<const double> x);

struct StepOptions {
    // Falls back to reconstructed(rho_bar) for subsystems without a true MF.
    ModelMembershipMode model = ModelMembershipMode::plant();
    double mu_bar = kDefaultMuBar;
};

struct ClosedLoopStep {
    StateSet x_next;
    StateSet u;
    std::vector<Vector> w;  // model memberships used
    std::vector<Vector> h;  // controller memberships used
    std::size_t disturbance_warnings = 0;
};

StateSet step_open_loop(const LargeScaleSystem& sys, const StateSet& x, const StateSet& u,
                        const StateSet& d, const StepOptions& opts = {});
ClosedLoopStep step_closed_loop_detail(const LargeScaleSystem& sys, const GainSet& gains,
                                       const StateSet& x, const StateSet& d,
                                       const StepOptions& opts = {});
StateSet step_closed_loop(const LargeScaleSystem& sys, const GainSet& gains, const StateSet& x,
                          const StateSet& d, const StepOptions& opts = {});

StateSet zero_states(const LargeScaleSystem& sys);
StateSet zero_inputs(const LargeScaleSystem& sys);
StateSet zero_disturbances(const LargeScaleSystem& sys);

}  // namespace it2mpc
