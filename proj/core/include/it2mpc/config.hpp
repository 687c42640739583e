#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "it2mpc/fuzzy_model.hpp"
#include "it2mpc/lmi.hpp"
#include "it2mpc/mpc_sim.hpp"
#include "it2mpc/synthesis.hpp"

namespace it2mpc {

inline constexpr int kSchemaVersion = 1;

struct SimulationConfig {
    StateSet x0;
    std::size_t steps = 60;
    Resynth resynth = Resynth::once;
    DisturbanceModel disturbance;
    double mu_bar = kDefaultMuBar;
    double rho_bar = 0.5;  // only used for subsystems without a true membership

    friend bool operator==(const SimulationConfig&, const SimulationConfig&) = default;
};

struct SystemConfig {
    int schema_version = kSchemaVersion;
    std::string name;
    std::string notes;
    double Ts = 0.2;
    LargeScaleSystem system;
    FixedParams fixed;
    SynthesisConfig synthesis;
    SimulationConfig simulation;
    std::optional<GainSet> gains;

    // Validates everything that can be checked without running anything.
    void validate() const;
    StepOptions step_options() const;
};

// Throws ConfigError (with a JSON path in field()) on any problem.
SystemConfig parse_config(const std::string& json_text);
SystemConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const SystemConfig& cfg);

// Certificate files: the fixed parameters actually used (Step 1 may have
// re-tuned them) plus the decision variables and their margins.
struct Certificate {
    FixedParams fixed;
    DecisionVars dv;
    std::vector<InstanceReport> margins;
    bool feasible = false;
};

std::string serialize_certificate(const Certificate& cert);
Certificate parse_certificate(const std::string& json_text, const LargeScaleSystem& sys);
Certificate load_certificate(const std::filesystem::path& path, const LargeScaleSystem& sys);

}  // namespace it2mpc
