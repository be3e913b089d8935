// SPDX-License-Identifier: Apache-2.0
//
// Analytic concept probes and the reports built on them: alpha sweeps
// (monotonicity), cross-model transfer, multi-slider composition, erasure,
// and a caption alignment score.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "psl/dataset.hpp"
#include "psl/denoiser.hpp"
#include "psl/encoder.hpp"
#include "psl/sampler.hpp"
#include "psl/schedule.hpp"
#include "psl/slider.hpp"

namespace psl {

enum class Concept { radius, angle, spread };

std::string_view concept_name(Concept c);
Concept parse_concept(std::string_view name);

struct ConceptStats {
  double mean = 0.0;
  double std = 0.0;
};

/// radius: mean |p|; angle: circular mean of atan2(y, x) (std is the circular
/// standard deviation); spread: mean distance to the centroid.
ConceptStats concept_score(std::span<const Point> samples, Concept c);

/// Spearman rank correlation with average ranks for ties; 0 when either side is constant.
double spearman_rho(std::span<const double> x, std::span<const double> y);

struct AlphaStat {
  double alpha = 0.0;
  double mean = 0.0;
  double std = 0.0;
  bool operator==(const AlphaStat&) const = default;
};

struct ProbeResult {
  std::string concept_label;
  std::vector<AlphaStat> per_alpha;  // sorted by alpha
  double spearman_rho = 0.0;
  std::size_t n_samples = 0;         // per alpha

  bool operator==(const ProbeResult&) const = default;
};

/// Sampling settings shared by every report.
struct EvalSettings {
  PromptSpec base_prompt = PromptSpec::parse("point");
  std::size_t n_samples = 500;
  int steps = 50;
  /// Probes read sample distributions; strong guidance collapses them on the toy model.
  double cfg_scale = 1.0;
  SamplerKind sampler = SamplerKind::ddim;
  std::uint64_t seed = 0;
};

/// Samples the base prompt with the slider appended at each alpha (every alpha
/// shares the same seed) and ranks concept means against alpha.
ProbeResult monotonicity_report(const DenoiserModel& model, const ConceptSlider& slider, std::span<const double> alphas,
                                Concept c, const EvalSettings& settings, const PromptEncoder& encoder,
                                const NoiseSchedule& sched);

/// monotonicity_report against a model the slider was not trained on. Throws
/// CompatibilityError, producing no scores, when encoders differ.
ProbeResult transfer_eval(const ConceptSlider& slider, const DenoiserModel& other_model, std::span<const double> alphas,
                          Concept c, const EvalSettings& settings, const PromptEncoder& encoder,
                          const NoiseSchedule& sched);

struct CompositionEntry {
  const ConceptSlider* slider = nullptr;
  Concept concept_probe = Concept::radius;
};

/// One sweep of a slider while the others sit at a fixed alpha.
struct CompositionSweep {
  std::string swept;
  double others_alpha = 0.0;
  ProbeResult own;
  std::map<std::string, ProbeResult> cross;      // other slider name -> its concept along the sweep
  std::map<std::string, double> cross_drift;     // max |m(alpha) - m(alpha_0)| / |m(alpha_0)|
};

struct CompositionReport {
  std::vector<CompositionSweep> sweeps;
  double min_own_rho() const;
  double max_cross_drift() const;
};

inline constexpr double kCompositionFixedAlphas[] = {0.0, 1.0};

CompositionReport composition_eval(const DenoiserModel& model, std::span<const CompositionEntry> sliders,
                                   std::span<const double> alpha_grid, const EvalSettings& settings,
                                   const PromptEncoder& encoder, const NoiseSchedule& sched);

struct ErasureGroup {
  PromptSpec prompt;
  ConceptStats baseline;
  ConceptStats erased;
  double relative_change = 0.0;  // (erased - baseline) / |baseline|
};

struct ErasureReport {
  Concept concept_probe = Concept::radius;
  std::vector<ErasureGroup> with_target;
  std::vector<ErasureGroup> controls;
  /// Mean reduction (baseline - erased) / baseline over target prompts.
  double target_reduction = 0.0;
  /// Largest |relative change| over control prompts; nullopt when there are none.
  std::optional<double> control_drift;
};

ErasureReport erasure_eval(const DenoiserModel& model, const ConceptSlider& erasure_slider,
                           std::span<const PromptSpec> prompts_with, std::span<const PromptSpec> prompts_without,
                           Concept c, const EvalSettings& settings, const PromptEncoder& encoder,
                           const NoiseSchedule& sched, bool apply_override = true);

struct AttributeInterval {
  Concept concept_probe = Concept::radius;
  double lo = -1e300;
  double hi = 1e300;
};

using IntervalTable = std::map<std::string, AttributeInterval, std::less<>>;

/// Intervals implied by the toy caption tokens.
IntervalTable toy_interval_table();

struct AlignmentScore {
  double score = 0.0;  // fraction of implied intervals containing the sample mean
  PromptSpec prompt;
  std::vector<std::pair<std::string, AttributeInterval>> target_attributes;
  std::size_t warnings = 0;  // prompt tokens without an interval
};

AlignmentScore alignment_score(std::span<const Point> samples, const PromptSpec& prompt, const IntervalTable& table);

/// CSV: header "alpha,mean,std", one row per alpha.
std::string probe_csv(const ProbeResult& result);
std::string probe_summary(const ProbeResult& result);
void write_probe_csv(const ProbeResult& result, const std::filesystem::path& path);

}  // namespace psl
