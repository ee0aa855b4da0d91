#pragma once

// Finite-difference verification of the head's analytic gradients on random
// small instances.

#include <cstddef>
#include <cstdint>
#include <span>

#include "dysfluency/model.hpp"

namespace dysfluency {

// Max relative error between forward_backward gradients (dropout off) and
// central differences of the batch loss.
double head_gradient_error(const HeadParams& params, std::span<const Example> batch, const LossConfig& loss_cfg,
                           double eps = 1e-5);

struct GradCheckSummary {
  std::size_t trials = 0;
  double max_relative_error = 0.0;
  std::size_t worst_trial = 0;
};

// Trials cycle through d = 8, p = 4, C in {6, 7} and t in {1, 5, 150} with
// random parameters, features, labels and loss settings.
GradCheckSummary run_head_grad_checks(std::size_t trials, std::uint64_t seed, double eps = 1e-5);

}  // namespace dysfluency
