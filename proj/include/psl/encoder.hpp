// SPDX-License-Identifier: Apache-2.0
//
// Frozen prompt encoder. A prompt is a weighted bag of tokens; its conditioning
// vector is M * sum_i(w_i * e(token_i)), with a frozen embedding table e and a
// frozen square mixing map M. The encoding is linear in every token weight,
// which is what makes a learned embedding behave as a strength-controlled
// slider.
#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "psl/autodiff.hpp"

namespace psl {

inline constexpr std::string_view kNullToken = "<null>";

class Vocabulary {
 public:
  Vocabulary() = default;
  /// Throws ConfigError for duplicates, a missing leading "<null>", or d < 2.
  Vocabulary(std::vector<std::string> tokens, std::size_t dim);

  /// Plain text, one token per line; line 1 must be "<null>".
  static Vocabulary load(const std::filesystem::path& path, std::size_t dim);
  void save(const std::filesystem::path& path) const;

  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const;
  std::optional<std::size_t> index_of(std::string_view token) const;

 private:
  std::vector<std::string> tokens_;
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
};

struct PromptEntry {
  std::string token;
  double weight = 1.0;
  bool operator==(const PromptEntry&) const = default;
};

struct PromptSpec {
  std::vector<PromptEntry> entries;

  /// Parses "point large_radius slider:2.5" (whitespace-separated, optional ":weight").
  static PromptSpec parse(std::string_view text);
  PromptSpec with(std::string token, double weight = 1.0) const;
  bool contains(std::string_view token) const;
  bool empty() const { return entries.empty(); }
  std::string to_string() const;
  bool operator==(const PromptSpec&) const = default;
};

struct EncoderHash {
  std::uint64_t value = 0;
  auto operator<=>(const EncoderHash&) const = default;
  std::string hex() const;
};

/// Per-request embedding replacements keyed by token (slider tokens, erasure overrides).
using EmbeddingOverrides = std::map<std::string, std::vector<double>, std::less<>>;
/// Differentiable variant used while training a slider embedding.
using TensorOverrides = std::map<std::string, Tensor, std::less<>>;

class PromptEncoder {
 public:
  /// Builds the frozen table and mixing map from `seed`; "<null>" embeds to zero.
  static PromptEncoder build(const Vocabulary& vocab, std::uint64_t seed);

  const Vocabulary& vocabulary() const { return vocab_; }
  std::size_t dim() const { return vocab_.dim(); }
  std::uint64_t seed() const { return seed_; }
  EncoderHash hash() const { return hash_; }

  /// Row of the frozen table; LookupError for unknown tokens.
  std::span<const double> embedding(std::string_view token) const;
  std::span<const double> table() const { return table_; }
  std::span<const double> mixing() const { return mixing_; }

  /// Digest over (token list, d, table bytes, mixing bytes).
  static EncoderHash digest(const Vocabulary& vocab, std::span<const double> table, std::span<const double> mixing);

  /// Conditioning vector (d values).
  std::vector<double> encode(const PromptSpec& prompt, const EmbeddingOverrides& overrides = {}) const;
  /// Conditioning as a [1, d] graph node; gradients flow into override tensors only.
  Tensor encode(const PromptSpec& prompt, const TensorOverrides& overrides) const;

 private:
  Vocabulary vocab_;
  std::uint64_t seed_ = 0;
  std::vector<double> table_;   // |vocab| x d, row-major
  std::vector<double> mixing_;  // d x d, row-major; cond_row = aggregate_row * mixing
  EncoderHash hash_;
};

EncoderHash encoder_hash(const PromptEncoder& encoder);

}  // namespace psl
