// SPDX-License-Identifier: Apache-2.0
#include "psl/schedule.hpp"

#include <cmath>
#include <string>

#include "psl/error.hpp"

namespace psl {

void NoiseSchedule::check_step(int t, bool allow_zero) const {
  const int lo = allow_zero ? 0 : 1;
  if (t < lo || t > steps())
    throw ContractError("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                        std::to_string(steps()) + "]");
}

double NoiseSchedule::beta(int t) const {
  check_step(t, false);
  return beta_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
  check_step(t, true);
  return t == 0 ? 1.0 : alpha_bar_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::sigma(int t) const {
  check_step(t, false);
  return sigma_[static_cast<std::size_t>(t - 1)];
}

NoiseSchedule make_schedule(int steps, const BetaSpec& spec) {
  if (steps < 1) throw ConfigError("schedule needs at least one step, got " + std::to_string(steps));
  NoiseSchedule s;
  s.spec_ = spec;
  s.beta_.resize(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    double b = spec.start;
    if (spec.kind == BetaSpec::Kind::linear && steps > 1)
      b = spec.start + (spec.end - spec.start) * static_cast<double>(i) / static_cast<double>(steps - 1);
    if (!(b > 0.0 && b < 1.0))
      throw ConfigError("beta at step " + std::to_string(i + 1) + " is " + std::to_string(b) +
                        ", must lie in (0, 1)");
    s.beta_[static_cast<std::size_t>(i)] = b;
  }
  s.alpha_bar_.resize(s.beta_.size());
  s.sigma_.resize(s.beta_.size());
  double running = 1.0;
  for (std::size_t i = 0; i < s.beta_.size(); ++i) {
    const double prev = running;
    running *= 1.0 - s.beta_[i];
    s.alpha_bar_[i] = running;
    s.sigma_[i] = std::sqrt(s.beta_[i] * (1.0 - prev) / (1.0 - running));
  }
  return s;
}

NoiseSchedule default_schedule() { return make_schedule(100, BetaSpec::linear(1e-4, 0.2)); }

Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps())
    throw ContractError("q_sample: timestep " + std::to_string(t) + " outside [1, " + std::to_string(sched.steps()) +
                        "]");
  const double ab = sched.alpha_bar(t);
  return add(scale(z0, std::sqrt(ab)), scale(eps, std::sqrt(1.0 - ab)));
}

Tensor reverse_step(const Tensor& z_t, const Tensor& eps_hat, int t, const NoiseSchedule& sched,
                    const Tensor& noise) {
  if (t < 1 || t > sched.steps())
    throw ContractError("reverse_step: timestep " + std::to_string(t) + " has no step below it");
  const double b = sched.beta(t);
  const double ab = sched.alpha_bar(t);
  Tensor mean = scale(sub(z_t, scale(eps_hat, b / std::sqrt(1.0 - ab))), 1.0 / std::sqrt(1.0 - b));
  return add(mean, scale(noise, sched.sigma(t)));
}

Tensor predict_z0(const Tensor& z_t, const Tensor& eps_hat, int t, const NoiseSchedule& sched) {
  const double ab = sched.alpha_bar(t);
  return scale(sub(z_t, scale(eps_hat, std::sqrt(1.0 - ab))), 1.0 / std::sqrt(ab));
}

Tensor ddim_step(const Tensor& z_t, const Tensor& eps_hat, int t, int t_prev, const NoiseSchedule& sched) {
  if (t_prev >= t)
    throw ContractError("ddim_step: t_prev " + std::to_string(t_prev) + " must be below t " + std::to_string(t));
  if (t_prev < 0) throw ContractError("ddim_step: negative t_prev");
  Tensor z0 = predict_z0(z_t, eps_hat, t, sched);
  if (t_prev == 0) return z0;
  const double ab_prev = sched.alpha_bar(t_prev);
  return add(scale(z0, std::sqrt(ab_prev)), scale(eps_hat, std::sqrt(1.0 - ab_prev)));
}

Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double guidance) {
  return add(scale(eps_uncond, 1.0 - guidance), scale(eps_cond, guidance));
}

std::vector<int> sampling_timesteps(int count, const NoiseSchedule& sched) {
  const int T = sched.steps();
  if (count < 1 || count > T)
    throw ConfigError("sampler steps " + std::to_string(count) + " must lie in [1, " + std::to_string(T) + "]");
  std::vector<int> ts;
  ts.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) ts.push_back((count - i) * T / count);
  return ts;
}

}  // namespace psl
