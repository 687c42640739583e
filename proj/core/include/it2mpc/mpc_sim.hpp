#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "it2mpc/fuzzy_model.hpp"
#include "it2mpc/lmi.hpp"
#include "it2mpc/synthesis.hpp"

namespace it2mpc {

enum class DisturbanceKind { zero, uniform_ball, sinusoidal, worst_case_boundary };

const char* to_string(DisturbanceKind k);
DisturbanceKind disturbance_kind_from_string(const std::string& s);

struct DisturbanceModel {
    DisturbanceKind kind = DisturbanceKind::zero;
    std::uint64_t seed = 42;
    Vector eta;              // per subsystem; empty -> take eta from the subsystems
    double frequency = 0.3;  // rad per step, sinusoidal only

    friend bool operator==(const DisturbanceModel&, const DisturbanceModel&) = default;
};

// Stateful sampler; every emitted d_i satisfies d_i^T d_i <= eta_i^2.
class DisturbanceGenerator {
public:
    DisturbanceGenerator(const DisturbanceModel& model, const LargeScaleSystem& sys);
    StateSet next(std::size_t k);

private:
    DisturbanceModel model_;
    std::vector<std::size_t> dims_;
    Vector eta_;
    std::vector<Vector> phase_;
    std::mt19937_64 rng_;
};

// Uniform sample of the unit ball in R^n, and its projection guard.
Vector sample_unit_ball(std::mt19937_64& rng, std::size_t n);
Vector sample_unit_sphere(std::mt19937_64& rng, std::size_t n);
void project_to_ball(Vector& d, double radius);

enum class Resynth { once, every_step };

const char* to_string(Resynth r);
Resynth resynth_from_string(const std::string& s);

struct TraceStep {
    std::size_t k = 0;
    double t = 0.0;
    StateSet x;
    StateSet u;
    StateSet d;
    std::vector<Vector> w;
    std::vector<Vector> h;
    Vector V;      // per subsystem x^T P x, P = X / xi
    double psi = 0.0;
    Vector xi;
    bool feasible = false;
    std::map<std::string, double> margins;  // worst signed margin per condition family
};

struct SimulationTrace {
    double Ts = 0.2;
    std::vector<TraceStep> steps;
    StateSet x_final;
    DecisionVars last;             // certificate in force at the last step
    std::size_t input_violations = 0;
    std::size_t disturbance_warnings = 0;
    std::size_t resyntheses = 0;
};

struct OnlineOptions {
    double Ts = 0.2;
    Resynth resynth = Resynth::every_step;
    StepOptions step;
    // Externally supplied gains (used as-is in once mode; warm start otherwise).
    const DecisionVars* given = nullptr;
};

SimulationTrace run_online_loop(const LargeScaleSystem& sys, const FixedParams& p, const SynthesisConfig& cfg,
                                const StateSet& x0, std::size_t steps, const DisturbanceModel& dist,
                                const OnlineOptions& opts);

double stage_cost(const StateSet& x, const StateSet& u, const StateSet& d, const std::vector<SymMatrix>& Q,
                  const std::vector<SymMatrix>& R, std::span<const double> tau);
// Stage costs of steps 0..T-1 plus the terminal V at step T.
double total_cost(const SimulationTrace& trace, std::size_t T, const FixedParams& p);
double lyapunov_value(std::span<const double> x, const SymMatrix& P);

struct IssReport {
    std::size_t steps_checked = 0;
    std::size_t sandwich_violations = 0;
    std::size_t decrease_violations = 0;          // summed over subsystems
    std::size_t per_subsystem_decrease_violations = 0;  // informational
    double worst_decrease_slack = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> violating_steps;
};

IssReport iss_check(const LargeScaleSystem& sys, const SimulationTrace& trace, const FixedParams& p);

struct RpiReport {
    std::size_t samples = 0;
    std::size_t rpi_violations = 0;   // pointwise invariance scalar above tol
    std::size_t exits = 0;            // x+ outside the ellipsoid
    double worst_rpi = -std::numeric_limits<double>::infinity();
    double worst_level = 0.0;         // max x+^T X x+ / xi^2
};

struct RpiOptions {
    double tol = 1e-9;
    double boundary_fraction = 0.1;  // share of samples placed on the ellipsoid surface
    Vector rho_grid{0.0, 0.25, 0.5, 0.75, 1.0};
    double mu_bar = kDefaultMuBar;
};

RpiReport rpi_monte_carlo(const LargeScaleSystem& sys, const FixedParams& p, const DecisionVars& dv,
                          std::size_t n_samples, std::uint64_t seed, const RpiOptions& opts = {});

}  // namespace it2mpc
