#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "tilenet/autodiff.hpp"

namespace tilenet {

struct GradCheckOptions {
  double eps = 1e-5;
  // Coordinates probed per parameter tensor; tensors this small or smaller are probed exhaustively.
  std::size_t coords_per_param = 16;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t coords_checked = 0;
};

// Compares reverse-mode gradients of a scalar function against central
// differences. Error per coordinate is |a - n| / max(1, |a|, |n|).
// Throws NumericError if f is non-finite at any probe.
GradCheckResult grad_check(const std::function<Var(Tape&)>& f, const ParameterList& params,
                           const GradCheckOptions& options = {});

}  // namespace tilenet
