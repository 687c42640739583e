#pragma once

#include <optional>
#include <string>

#include "it2mpc/fuzzy_model.hpp"
#include "it2mpc/lmi.hpp"
#include "it2mpc/synthesis.hpp"

namespace it2mpc {

struct PipelineResult {
    FixedParams fixed;           // parameters the certificate was obtained with
    SynthesisResult result;
    bool retuned = false;        // Step 1 replaced the configured X, lambda, N
    std::optional<Step1Result> step1;
    std::string notes;
};

// Full offline synthesis at x0: minimize xi under the configured fixed
// parameters; when that fails and Step-1 tuning is enabled, re-tune X, lambda,
// N and minimize again from the tuned point.
PipelineResult synthesize(const LargeScaleSystem& sys, const FixedParams& p, const StateSet& x0,
                          const SynthesisConfig& cfg, const GainSet* warm_gains = nullptr);

}  // namespace it2mpc
