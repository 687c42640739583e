#include "it2mpc/pipeline.hpp"

#include <sstream>

#include "it2mpc/log.hpp"

namespace it2mpc {

PipelineResult synthesize(const LargeScaleSystem& sys, const FixedParams& p, const StateSet& x0,
                          const SynthesisConfig& cfg, const GainSet* warm_gains) {
    PipelineResult out;
    out.fixed = p;
    std::ostringstream notes;

    DecisionVars warm;
    const DecisionVars* wp = nullptr;
    if (warm_gains) {
        warm.gains = *warm_gains;
        wp = &warm;
    }
    out.result = minimize_xi(sys, p, x0, cfg, wp);
    if (out.result.feasible || !cfg.step1.enabled) {
        if (!out.result.feasible) notes << "configured parameters infeasible: " << out.result.diagnostics;
        out.notes = notes.str();
        return out;
    }

    notes << "configured parameters infeasible (" << out.result.diagnostics << "); re-tuning X, lambda, N. ";
    log_message(LogLevel::info, "configured fixed parameters infeasible; running step-1 tuning");
    Step1Result s1 = tune_fixed_params(sys, p, x0, cfg, warm_gains);
    notes << "step-1 margin " << s1.margin << " after " << s1.iterations << " iterations. ";
    if (s1.found) {
        SynthesisResult r = minimize_xi(sys, s1.fixed, x0, cfg, &s1.dv);
        if (r.feasible) {
            out.fixed = s1.fixed;
            out.result = std::move(r);
            out.retuned = true;
        } else {
            notes << "minimization from the tuned point failed: " << r.diagnostics;
        }
    } else {
        notes << "no strictly feasible point found";
    }
    out.step1 = std::move(s1);
    out.notes = notes.str();
    return out;
}

}  // namespace it2mpc
