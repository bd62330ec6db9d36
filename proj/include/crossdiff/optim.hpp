#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crossdiff/linalg.hpp"

namespace crossdiff {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  uint64_t step = 0;
  std::vector<Vec> first_moment;
  std::vector<Vec> second_moment;

  /// Lazily shaped on the first step.
  bool shaped() const { return !first_moment.empty(); }
};

/// Bias-corrected Adam update applied in place. params and grads are matched
/// by position and must agree in size.
void adam_step(std::span<const TensorRef> params, std::span<const ConstTensorRef> grads,
               AdamState& state, double lr);

}  // namespace crossdiff
