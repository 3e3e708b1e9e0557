#pragma once

#include <functional>
#include <vector>

#include "sbi/tensor.hpp"

namespace sbi::ad {

struct GradCheckResult {
  /// max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|)
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  /// Coordinates whose error stayed above 1e-2 after a re-check with a smaller
  /// step; these are reported rather than silently accepted.
  std::size_t flagged_nondifferentiable = 0;
};

/// Compares backward() against central differences (step 1e-5) for every
/// coordinate of every input. `f` must rebuild the loss from the current input
/// values on each call. Runs in double precision.
GradCheckResult grad_check(const std::function<Tensor<double>()>& f, std::vector<Tensor<double>> inputs,
                           double step = 1e-5);

}  // namespace sbi::ad
