#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "buildiff/autodiff.hpp"

namespace buildiff {

// Adam with bias correction. Moments are laid out per parameter in the order
// the parameters are passed to adam_step; that order must stay fixed.
struct AdamState {
  double lr = 0.0002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// Every parameter needs a gradient from the last backward pass. Gradients are
// consumed: has_grad is cleared after the update.
void adam_step(AdamState& state, std::span<ad::Parameter* const> params);

}  // namespace buildiff
