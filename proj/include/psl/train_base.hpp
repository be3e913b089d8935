// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "psl/dataset.hpp"
#include "psl/denoiser.hpp"
#include "psl/encoder.hpp"
#include "psl/schedule.hpp"

namespace psl {

struct BaseTrainConfig {
  std::size_t iterations = 6000;
  std::size_t batch_size = 256;
  double learning_rate = 2e-3;
  /// Cosine-anneal the learning rate to zero over the run.
  bool cosine_decay = true;
  double weight_decay = 0.0;
  /// Fraction of examples trained with the null prompt (classifier-free guidance).
  double null_prompt_rate = 0.1;
  /// Iterations per reporting epoch; 0 means ceil(dataset size / batch size).
  std::size_t epoch_length = 0;
  std::uint64_t seed = 0;
};

struct BaseTrainReport {
  std::vector<double> loss_curve;   // one entry per iteration
  std::vector<double> epoch_means;  // mean loss per epoch (last one may be partial)
};

/// Minimizes ||eps - eps_theta(z_t, t, encode(caption))||^2 over uniform t and
/// Gaussian eps, then freezes the model. Zero iterations leave it untouched.
BaseTrainReport train_base(DenoiserModel& model, const ToyDataset& data, const NoiseSchedule& sched,
                           const PromptEncoder& encoder, const BaseTrainConfig& config);

}  // namespace psl
