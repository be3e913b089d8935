// SPDX-License-Identifier: Apache-2.0
//
// Slider tokens: a single learned token embedding S, trained against a frozen
// denoiser and frozen prompt encoder, whose prompt weight alpha sets the
// strength of a concept at inference time.
//
// Textual sliders regress eps_theta(z_t, encode(c_t + alpha S), t) onto the
// composed target
//
//   eps(alpha) = eps_theta(z_t, c_t, t)
//              + alpha * eta * sum_{p in P} [eps_theta(z_t, (c+, p), t) - eps_theta(z_t, (c-, p), t)]
//
// Visual sliders fit paired high/low data with +alpha S and -alpha S.
// Erasure retrains the embedding of an existing token with the sign of the
// difference term flipped.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "psl/dataset.hpp"
#include "psl/denoiser.hpp"
#include "psl/encoder.hpp"
#include "psl/random.hpp"
#include "psl/schedule.hpp"

namespace psl {

enum class SliderKind : std::uint8_t { textual = 0, visual = 1, erasure = 2 };

std::string_view slider_kind_name(SliderKind kind);

struct ConceptSlider {
  std::string name;
  std::vector<double> embedding;
  double alpha_min = 0.0;
  double alpha_max = 3.0;
  double eta = 1.0;
  EncoderHash encoder_hash;
  SliderKind kind = SliderKind::textual;
  /// Token whose embedding is replaced; erasure sliders only.
  std::string target_token;
  /// Training loss per iteration; not persisted.
  std::vector<double> loss_curve;

  std::size_t dim() const { return embedding.size(); }
};

struct ConceptRecipe {
  PromptSpec target;                  // c_t
  PromptSpec positive;                // c+
  std::optional<PromptSpec> negative; // c-; nullopt means the null prompt
  std::vector<PromptSpec> preserve;   // P; empty means a single term with no context

  /// Throws ConfigError when c+ and c- are both given and equal.
  void validate() const;
};

enum class LatentSource { dataset, model_sampled };

LatentSource parse_latent_source(std::string_view name);

struct SliderTrainConfig {
  std::size_t iterations = 3000;
  std::size_t batch_size = 1;
  double learning_rate = 5e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eta = 1.0;
  double alpha_min = 0.0;
  double alpha_max = 3.0;
  LatentSource latent_source = LatentSource::dataset;
  /// Samples drawn once from the frozen model when latent_source is model_sampled.
  std::size_t model_sample_pool = 256;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class TargetMode { enhance, erase };

/// Preservation sets up to this size are summed in full each step; larger
/// sets contribute one uniformly drawn context per step.
inline constexpr std::size_t kFullPreserveSum = 4;

/// Composed regression target for a batch z_t [B, 2] at timestep t. The result
/// is a constant: it carries no gradient path into any slider embedding.
/// `rng` is only consulted when the preservation set exceeds kFullPreserveSum.
/// Equal c+ and c- are accepted here (the difference term is then exactly
/// zero); the trainers reject such recipes.
Tensor compose_target_eps(const DenoiserModel& model, const Tensor& z_t, int t, const ConceptRecipe& recipe,
                          double alpha, double eta, const PromptEncoder& encoder, TargetMode mode = TargetMode::enhance,
                          Rng* rng = nullptr);

/// Learns a fresh token `name` (must not be in the vocabulary).
ConceptSlider train_textual_slider(const DenoiserModel& model, const ToyDataset& data, const ConceptRecipe& recipe,
                                   const SliderTrainConfig& config, const PromptEncoder& encoder,
                                   const NoiseSchedule& sched, const std::string& name);

/// Learns `name` from paired data: +alpha on the `high` branch, -alpha on `low`.
/// Alpha is drawn from (0, alpha_max], or fixed at 0 when alpha_max is 0.
ConceptSlider train_visual_slider(const DenoiserModel& model, std::span<const Point> pairs_high,
                                  std::span<const Point> pairs_low, const PromptSpec& target,
                                  const SliderTrainConfig& config, const PromptEncoder& encoder,
                                  const NoiseSchedule& sched, const std::string& name);

/// Retrains the embedding of an existing vocabulary token so that prompts
/// naming it follow the erase-mode target. The frozen table is left untouched;
/// the result is applied as an override whenever a prompt contains the token.
ConceptSlider train_erasure(const DenoiserModel& model, const ToyDataset& data, const std::string& target_token,
                            const ConceptRecipe& recipe, const SliderTrainConfig& config,
                            const PromptEncoder& encoder, const NoiseSchedule& sched);

/// CompatibilityError unless the slider matches the encoder's dimension and hash.
void check_compatible(const ConceptSlider& slider, const PromptEncoder& encoder);
void check_compatible(const ConceptSlider& slider, const DenoiserModel& model);

struct SliderUse {
  const ConceptSlider* slider = nullptr;
  double alpha = 1.0;
};

struct ConditionedPrompt {
  PromptSpec prompt;
  EmbeddingOverrides overrides;
};

/// Appends each textual/visual slider token at weight alpha and registers its
/// embedding; erasure sliders only register an override for their target token.
ConditionedPrompt attach_sliders(const PromptSpec& base, std::span<const SliderUse> sliders);

/// Built-in recipes for the toy concepts ("radius", "angle").
ConceptRecipe toy_recipe(std::string_view concept_name);

}  // namespace psl
