// SPDX-License-Identifier: Apache-2.0
//
// Noise schedules and single-step diffusion updates. Timesteps are 1-based:
// step t in [1, T] adds noise with variance beta(t); t = 0 is clean data.
#pragma once

#include <vector>

#include "psl/autodiff.hpp"

namespace psl {

struct BetaSpec {
  enum class Kind { constant, linear };
  Kind kind = Kind::linear;
  double start = 1e-4;
  double end = 0.2;

  static BetaSpec constant(double beta) { return {Kind::constant, beta, beta}; }
  static BetaSpec linear(double start, double end) { return {Kind::linear, start, end}; }
};

class NoiseSchedule {
 public:
  int steps() const { return static_cast<int>(beta_.size()); }
  const BetaSpec& spec() const { return spec_; }

  double beta(int t) const;
  /// Cumulative product of (1 - beta) up to t; 1.0 at t = 0.
  double alpha_bar(int t) const;
  /// DDPM posterior standard deviation used by reverse_step.
  double sigma(int t) const;

  const std::vector<double>& betas() const { return beta_; }
  const std::vector<double>& alpha_bars() const { return alpha_bar_; }
  const std::vector<double>& sigmas() const { return sigma_; }

 private:
  friend NoiseSchedule make_schedule(int, const BetaSpec&);
  void check_step(int t, bool allow_zero) const;

  BetaSpec spec_;
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
  std::vector<double> sigma_;
};

/// Throws ConfigError unless T >= 1 and every beta lies in (0, 1).
NoiseSchedule make_schedule(int steps, const BetaSpec& spec);

/// Default toy schedule: T = 100, linear beta 1e-4 .. 0.2.
NoiseSchedule default_schedule();

/// sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched);

/// DDPM ancestral step from t to t-1:
///   (z_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(1 - beta_t) + sigma_t * noise
Tensor reverse_step(const Tensor& z_t, const Tensor& eps_hat, int t, const NoiseSchedule& sched,
                    const Tensor& noise);

/// Deterministic DDIM update from t to t_prev (t_prev = 0 returns the clean estimate).
Tensor ddim_step(const Tensor& z_t, const Tensor& eps_hat, int t, int t_prev, const NoiseSchedule& sched);

/// Clean-data estimate (z_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t).
Tensor predict_z0(const Tensor& z_t, const Tensor& eps_hat, int t, const NoiseSchedule& sched);

/// Classifier-free guidance, written as (1 - w) eps_uncond + w eps_cond so
/// that w = 0 and w = 1 return the respective branch exactly.
Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double guidance);

/// Evenly strided descending timesteps for a `count`-step sampler.
std::vector<int> sampling_timesteps(int count, const NoiseSchedule& sched);

}  // namespace psl
