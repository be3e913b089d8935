// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "psl/autodiff.hpp"

namespace psl {

enum class OptimizerKind { adamw, sgd };

/// First-order optimizer state. Moments are allocated on the first step and
/// stay shape-congruent with the parameter list passed to every later step.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adamw;
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double epsilon = 1e-8;
  std::uint64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  static OptimizerState adamw(double lr, double weight_decay = 0.01, double beta1 = 0.9, double beta2 = 0.999);
  static OptimizerState sgd(double lr, double weight_decay = 0.0);
};

/// Applies one update to `params` from their accumulated gradients, then
/// zeroes those gradients. A parameter without a gradient is a ContractError.
void optimizer_step(OptimizerState& state, std::span<Tensor> params);

void zero_grads(std::span<Tensor> params);

}  // namespace psl
