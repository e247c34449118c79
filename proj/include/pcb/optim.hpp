#pragma once

#include <cstdint>

#include "pcb/parameters.hpp"

namespace pcb {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Gradients first_moment;
  Gradients second_moment;
  std::int64_t step = 0;

  static AdamState for_parameters(const ParameterStore& params);
};

// One bias-corrected Adam update. Throws ConfigError for lr <= 0 and
// DimensionError when state or gradients do not match the parameters.
void adam_step(ParameterStore& params, const Gradients& grads, AdamState& state,
               double lr, const AdamConfig& config = {});

}  // namespace pcb
