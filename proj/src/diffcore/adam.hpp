#pragma once

#include <cstdint>

#include "diffcore/array.hpp"

namespace pbcnn::diffcore {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment estimates for one parameter array.
struct AdamState {
  Array first_moment;
  Array second_moment;
  std::uint64_t step = 0;
  AdamConfig config;

  static AdamState for_parameter(const Array& params, AdamConfig config = {});
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(AdamState& state, Array& params, const Array& grads);

}  // namespace pbcnn::diffcore
