// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "psl/autodiff.hpp"
#include "psl/encoder.hpp"

namespace psl {

/// model_a: hidden widths [64, 64]; model_b: [128, 128, 128].
enum class Arch : std::uint8_t { model_a = 0, model_b = 1 };

std::string_view arch_name(Arch arch);
Arch parse_arch(std::string_view name);
std::vector<std::size_t> arch_widths(Arch arch);

/// Sinusoidal features of t / T, one row per timestep: [sin(f_k s), cos(f_k s)].
Tensor timestep_embedding(std::span<const int> timesteps, int num_timesteps, std::size_t dim);

/// Conditional noise predictor: an MLP over concat(z_t, time features, conditioning)
/// with SiLU hidden layers and a zero-initialized output layer.
class DenoiserModel {
 public:
  static constexpr std::size_t kDataDim = 2;
  static constexpr std::size_t kTimeEmbedDim = 16;

  DenoiserModel() = default;
  static DenoiserModel build(Arch arch, const PromptEncoder& encoder, int num_timesteps, std::uint64_t seed);
  /// Reassembles a model from stored parameters (weights then bias, per layer).
  static DenoiserModel from_parameters(Arch arch, std::size_t cond_dim, int num_timesteps, EncoderHash encoder_hash,
                                       std::vector<Tensor> params, bool frozen);

  Arch arch() const { return arch_; }
  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t cond_dim() const { return cond_dim_; }
  std::size_t input_dim() const { return kDataDim + kTimeEmbedDim + cond_dim_; }
  int num_timesteps() const { return num_timesteps_; }
  EncoderHash encoder_hash() const { return encoder_hash_; }

  bool frozen() const { return frozen_; }
  void freeze();

  /// Read-only view of every parameter tensor.
  const std::vector<Tensor>& parameters() const { return params_; }
  /// Mutable parameter list for training; ContractError once frozen.
  std::span<Tensor> trainable_parameters();

  /// z_t: [B, 2]; timesteps: B entries (or one, shared); cond: [B, d] or [1, d].
  /// Differentiable with respect to cond regardless of the frozen flag.
  Tensor predict_eps(const Tensor& z_t, std::span<const int> timesteps, const Tensor& cond) const;
  Tensor predict_eps(const Tensor& z_t, int t, const Tensor& cond) const;

  /// SHA-256 over every parameter's bytes.
  std::string parameter_digest() const;

 private:
  Arch arch_ = Arch::model_a;
  std::vector<std::size_t> widths_;
  std::size_t cond_dim_ = 0;
  int num_timesteps_ = 0;
  EncoderHash encoder_hash_;
  std::vector<Tensor> params_;
  bool frozen_ = false;
};

/// Exact number of scalar parameters (weights and biases) in the model.
std::size_t count_params(const DenoiserModel& model);

struct ConceptSlider;

/// Parameters used at inference when sliders ride along in the prompt. Slider
/// embeddings are prompt inputs, not network weights, so they add nothing.
/// CompatibilityError if a slider was trained against another encoder.
std::size_t count_params(const DenoiserModel& model, std::span<const ConceptSlider> attached);

}  // namespace psl
