#include "diffcore/adam.hpp"

#include <cmath>

namespace pbcnn::diffcore {

AdamState AdamState::for_parameter(const Array& params, AdamConfig config) {
  return AdamState{Array(params.extents()), Array(params.extents()), 0, config};
}

void adam_step(AdamState& state, Array& params, const Array& grads) {
  require_same_extents(params, grads, "adam_step gradient");
  require_same_extents(params, state.first_moment, "adam_step first moment");
  require_same_extents(params, state.second_moment, "adam_step second moment");
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  double* m = state.first_moment.data();
  double* v = state.second_moment.data();
  double* p = params.data();
  const double* g = grads.data();
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace pbcnn::diffcore
