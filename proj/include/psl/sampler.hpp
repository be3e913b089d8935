// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "psl/dataset.hpp"
#include "psl/denoiser.hpp"
#include "psl/encoder.hpp"
#include "psl/schedule.hpp"

namespace psl {

enum class SamplerKind { ddpm, ddim };

SamplerKind parse_sampler(std::string_view name);

struct SampleRequest {
  PromptSpec prompt;
  /// Embeddings for slider tokens and erasure overrides referenced by the prompt.
  EmbeddingOverrides overrides;
  int steps = 50;
  double cfg_scale = 7.5;
  std::size_t n_samples = 500;
  std::uint64_t seed = 0;
  SamplerKind sampler = SamplerKind::ddim;
};

/// Runs guided reverse diffusion from seeded Gaussian noise. Chain i draws all
/// of its noise from stream (seed, i), so a chain's output does not depend on
/// how many chains run alongside it. DDPM runs every schedule step.
std::vector<Point> sample(const DenoiserModel& model, const SampleRequest& request, const PromptEncoder& encoder,
                          const NoiseSchedule& sched);

}  // namespace psl
