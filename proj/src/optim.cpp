#include "pcb/optim.hpp"

#include <cmath>

#include "pcb/error.hpp"

namespace pcb {

AdamState AdamState::for_parameters(const ParameterStore& params) {
  return AdamState{params.zero_gradients(), params.zero_gradients(), 0};
}

void adam_step(ParameterStore& params, const Gradients& grads, AdamState& state,
               double lr, const AdamConfig& config) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw DimensionError("adam_step: parameter/gradient/state counts differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (ParamId id = 0; id < params.size(); ++id) {
    Tensor& p = params.value(id);
    const Tensor& g = grads[id];
    Tensor& m = state.first_moment[id];
    Tensor& v = state.second_moment[id];
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
      throw DimensionError("adam_step: shape mismatch for " + params.name(id));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

}  // namespace pcb
