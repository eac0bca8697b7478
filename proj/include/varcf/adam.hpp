#pragma once

#include <cstdint>

#include "varcf/model.hpp"

namespace varcf {

struct AdamHyper {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Moment accumulators reuse the ModelParams layout so shapes always line up.
struct AdamState {
    AdamHyper hyper;
    std::uint64_t step = 0;
    ModelParams first_moment;
    ModelParams second_moment;
};

AdamState make_adam_state(const ModelParams& params, AdamHyper hyper = {});

// One bias-corrected Adam step, in place. Lazy policy: an embedding row absent
// from the gradient, or any block whose gradient is identically zero, keeps both
// its parameters and its moments untouched. The step counter always advances.
void adam_update(ModelParams& params, const GradientSet& grads, AdamState& state);

}  // namespace varcf
