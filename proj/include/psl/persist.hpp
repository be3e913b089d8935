// SPDX-License-Identifier: Apache-2.0
//
// On-disk formats. All binary formats are little-endian with no padding and
// carry a version; readers reject any version they do not know.
//
// Slider file (CSE1):
//   "CSE1" | u16 version | u32 d | u8 kind | f32 alpha_min | f32 alpha_max |
//   f32 eta | u16 name_len, name | u16 target_len, target | u64 encoder hash |
//   d x f32 payload
//
// Model file (PSM1): architecture, schedule, the encoder recipe (vocabulary
// and seed) and every parameter tensor in f64.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "psl/denoiser.hpp"
#include "psl/encoder.hpp"
#include "psl/fileio.hpp"
#include "psl/schedule.hpp"
#include "psl/slider.hpp"

namespace psl {

inline constexpr char kSliderMagic[4] = {'C', 'S', 'E', '1'};
inline constexpr std::uint16_t kSliderVersion = 1;
inline constexpr char kModelMagic[4] = {'P', 'S', 'M', '1'};
inline constexpr std::uint16_t kModelVersion = 1;

/// Bytes before the payload for a slider with the given name and target token.
std::size_t slider_header_size(const ConceptSlider& slider);

std::string encode_slider(const ConceptSlider& slider);
/// FormatError (with byte offset) on bad magic, unknown version or truncation.
ConceptSlider decode_slider(std::string_view bytes);

void save_slider(const ConceptSlider& slider, const std::filesystem::path& path);
ConceptSlider load_slider(const std::filesystem::path& path);
/// Also raises CompatibilityError when the slider does not fit `encoder`.
ConceptSlider load_slider(const std::filesystem::path& path, const PromptEncoder& encoder);

/// A trained model together with the frozen pieces it was trained against.
struct ModelBundle {
  DenoiserModel model;
  PromptEncoder encoder;
  NoiseSchedule schedule;
};

std::string encode_model(const DenoiserModel& model, const PromptEncoder& encoder, const NoiseSchedule& sched);
ModelBundle decode_model(std::string_view bytes);

void save_model(const DenoiserModel& model, const PromptEncoder& encoder, const NoiseSchedule& sched,
                const std::filesystem::path& path);
ModelBundle load_model(const std::filesystem::path& path);

/// Record of one CLI invocation, stored as line-oriented key=value text.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::vector<std::pair<std::string, std::string>> config;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256
  int exit_code = 0;
  std::string error;
  double duration_seconds = 0.0;

  std::string to_text() const;
  static RunManifest parse(std::string_view text);
};

void save_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

}  // namespace psl
