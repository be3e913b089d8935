// SPDX-License-Identifier: Apache-2.0
#include "psl/optim.hpp"

#include <cmath>
#include <string>

#include "psl/error.hpp"

namespace psl {

OptimizerState OptimizerState::adamw(double lr, double weight_decay, double beta1, double beta2) {
  OptimizerState s;
  s.kind = OptimizerKind::adamw;
  s.learning_rate = lr;
  s.weight_decay = weight_decay;
  s.beta1 = beta1;
  s.beta2 = beta2;
  return s;
}

OptimizerState OptimizerState::sgd(double lr, double weight_decay) {
  OptimizerState s;
  s.kind = OptimizerKind::sgd;
  s.learning_rate = lr;
  s.weight_decay = weight_decay;
  return s;
}

namespace {

void validate(const OptimizerState& s) {
  if (!(s.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (s.beta1 < 0.0 || s.beta1 >= 1.0 || s.beta2 < 0.0 || s.beta2 >= 1.0)
    throw ConfigError("optimizer betas must lie in [0, 1)");
  if (s.weight_decay < 0.0) throw ConfigError("weight decay must be nonnegative");
}

std::string param_label(const Tensor& p, std::size_t index) {
  return p.name().empty() ? "#" + std::to_string(index) : "'" + p.name() + "'";
}

}  // namespace

void optimizer_step(OptimizerState& state, std::span<Tensor> params) {
  validate(state);
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!params[i].has_grad())
      throw ContractError("optimizer_step: parameter " + param_label(params[i], i) + " has no gradient");

  if (state.kind == OptimizerKind::adamw && state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.numel(), 0.0);
      state.second_moment.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.kind == OptimizerKind::adamw) {
    if (state.first_moment.size() != params.size())
      throw ContractError("optimizer_step: parameter list changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i)
      if (state.first_moment[i].size() != params[i].numel())
        throw ContractError("optimizer_step: parameter " + param_label(params[i], i) + " changed shape");
  }

  state.step_count += 1;
  const double lr = state.learning_rate;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].mutable_values();
    const auto grad = params[i].grad();
    if (state.kind == OptimizerKind::sgd) {
      for (std::size_t k = 0; k < values.size(); ++k)
        values[k] -= lr * (grad[k] + state.weight_decay * values[k]);
      continue;
    }
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      // Decoupled weight decay, applied to the pre-update value.
      values[k] -= lr * state.weight_decay * values[k];
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * grad[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * grad[k] * grad[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      values[k] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
  zero_grads(params);
}

void zero_grads(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace psl
