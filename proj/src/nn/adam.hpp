#pragma once

#include <utility>

#include "nn/params.hpp"

namespace crlab::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment accumulators mirror the parameter set entry by entry.
struct OptState {
  ParamSet first_moment;
  ParamSet second_moment;
  std::uint64_t step = 0;
  AdamConfig config;
};

OptState make_opt_state(const ParamSet& params, AdamConfig config);

// Bias-corrected Adam update. Throws a numeric error naming the parameter if
// any gradient component is non-finite; `params` and `opt` are untouched then.
void opt_step_inplace(ParamSet& params, const ParamSet& grads, OptState& opt);

// Pure variant: returns the updated parameters and optimizer state.
std::pair<ParamSet, OptState> opt_step(const ParamSet& params, const ParamSet& grads,
                                       const OptState& opt);

// Scales gradients so their global L2 norm is at most `max_norm`; returns the
// norm before scaling.
double clip_grad_norm(ParamSet& grads, double max_norm);

}  // namespace crlab::nn
