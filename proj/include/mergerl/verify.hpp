#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mergerl/tape.hpp"

namespace mergerl {

// Central-difference gradient verification. The builder constructs a scalar
// loss on a fresh tape from the current parameter values; it is re-invoked
// for every ±h probe, so it must be a pure function of the parameters.
struct GradCheck {
    double h = 1e-5;
    double kink_margin = 1e-3;        // required distance of relu/abs inputs from 0
    double ln_inv_std_bound = 100.0;  // reject near-constant layer-norm rows

    // max over all parameter entries of |analytic − numeric| / max(|a|,|n|,1e-2)
    double max_rel_error(const std::function<Var(Tape&)>& build,
                         const std::vector<Parameter*>& params) const;

    // true when the forward pass keeps every kinked activation off its kink
    // and every layer-norm row variance well conditioned (central differences
    // otherwise pick up third-derivative truncation noise)
    bool margin_ok(const std::function<Var(Tape&)>& build) const;
};

struct GradCheckResult {
    std::string name;
    int configs = 0;
    double max_rel_error = 0.0;
    bool passed = false;
};

// Finite-difference suites over randomized configurations for every
// differentiable layer: layer norm, attention head, multi-head attention,
// residual FFN, the full encoder, the agent action-value network, the mixer,
// and the replay-batch loss.
std::vector<GradCheckResult> run_gradcheck_suites(uint64_t seed, int configs_per_layer = 20,
                                                  double tolerance = 1e-6);

bool all_passed(const std::vector<GradCheckResult>& results);

}  // namespace mergerl
