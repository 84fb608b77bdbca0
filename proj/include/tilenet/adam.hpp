#pragma once

#include <cstdint>

#include "tilenet/autodiff.hpp"

namespace tilenet {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment accumulators are positionally aligned with the ParameterList they
// were first stepped with.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  bool operator==(const AdamState& other) const;
};

// One bias-corrected Adam update using each parameter's accumulated grad.
// Throws ShapeError on shape mismatch and NumericError on a non-finite gradient,
// naming the offending parameter; parameters are untouched on error.
void adam_step(const ParameterList& params, AdamState& state);

}  // namespace tilenet
