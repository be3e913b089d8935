// SPDX-License-Identifier: Apache-2.0
#include "psl/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "psl/error.hpp"
#include "psl/fileio.hpp"

namespace psl {

std::string_view concept_name(Concept c) {
  switch (c) {
    case Concept::radius: return "radius";
    case Concept::angle: return "angle";
    case Concept::spread: return "spread";
  }
  return "?";
}

Concept parse_concept(std::string_view name) {
  if (name == "radius") return Concept::radius;
  if (name == "angle") return Concept::angle;
  if (name == "spread") return Concept::spread;
  throw ConfigError("unknown concept '" + std::string(name) + "' (expected radius, angle or spread)");
}

namespace {
ConceptStats mean_std(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double m = 0.0;
  for (double x : v) m += x;
  m /= n;
  double var = 0.0;
  for (double x : v) var += (x - m) * (x - m);
  return {m, std::sqrt(var / n)};
}
}  // namespace

ConceptStats concept_score(std::span<const Point> samples, Concept c) {
  if (samples.empty()) throw ContractError("concept_score: empty sample set");
  std::vector<double> v;
  v.reserve(samples.size());
  switch (c) {
    case Concept::radius:
      for (const auto& p : samples) v.push_back(point_radius(p));
      return mean_std(v);
    case Concept::spread: {
      const Point ctr = centroid(samples);
      for (const auto& p : samples) v.push_back(std::hypot(p[0] - ctr[0], p[1] - ctr[1]));
      return mean_std(v);
    }
    case Concept::angle: {
      double sx = 0.0, sy = 0.0;
      for (const auto& p : samples) {
        const double a = point_angle(p);
        sx += std::cos(a);
        sy += std::sin(a);
      }
      const double n = static_cast<double>(samples.size());
      const double resultant = std::min(1.0, std::hypot(sx, sy) / n);
      const double circ_std = resultant > 0.0 ? std::sqrt(-2.0 * std::log(resultant)) : INFINITY;
      return {std::atan2(sy, sx), circ_std};
    }
  }
  throw ConfigError("unknown concept");
}

namespace {
std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}
}  // namespace

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("spearman_rho: length mismatch");
  if (x.size() < 2) return 0.0;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

namespace {

std::vector<Point> run_prompt(const DenoiserModel& model, const ConditionedPrompt& cp, const EvalSettings& settings,
                              const PromptEncoder& encoder, const NoiseSchedule& sched) {
  SampleRequest req;
  req.prompt = cp.prompt;
  req.overrides = cp.overrides;
  req.steps = settings.steps;
  req.cfg_scale = settings.cfg_scale;
  req.n_samples = settings.n_samples;
  req.seed = settings.seed;
  req.sampler = settings.sampler;
  return sample(model, req, encoder, sched);
}

void finalize(ProbeResult& r) {
  std::stable_sort(r.per_alpha.begin(), r.per_alpha.end(),
                   [](const AlphaStat& a, const AlphaStat& b) { return a.alpha < b.alpha; });
  std::vector<double> xs, ys;
  for (const auto& s : r.per_alpha) {
    xs.push_back(s.alpha);
    ys.push_back(s.mean);
  }
  r.spearman_rho = spearman_rho(xs, ys);
}

void check_settings(const EvalSettings& settings) {
  if (settings.n_samples < 100)
    throw ConfigError("eval: at least 100 samples per alpha are required, got " + std::to_string(settings.n_samples));
}

}  // namespace

ProbeResult monotonicity_report(const DenoiserModel& model, const ConceptSlider& slider, std::span<const double> alphas,
                                Concept c, const EvalSettings& settings, const PromptEncoder& encoder,
                                const NoiseSchedule& sched) {
  check_compatible(slider, model);
  check_compatible(slider, encoder);
  check_settings(settings);
  if (alphas.empty()) throw ConfigError("monotonicity_report: no alpha values");
  ProbeResult r;
  r.concept_label = std::string(concept_name(c));
  r.n_samples = settings.n_samples;
  for (double a : alphas) {
    const SliderUse use[1] = {{&slider, a}};
    const auto samples = run_prompt(model, attach_sliders(settings.base_prompt, use), settings, encoder, sched);
    const auto st = concept_score(samples, c);
    r.per_alpha.push_back({a, st.mean, st.std});
  }
  finalize(r);
  return r;
}

ProbeResult transfer_eval(const ConceptSlider& slider, const DenoiserModel& other_model, std::span<const double> alphas,
                          Concept c, const EvalSettings& settings, const PromptEncoder& encoder,
                          const NoiseSchedule& sched) {
  return monotonicity_report(other_model, slider, alphas, c, settings, encoder, sched);
}

double CompositionReport::min_own_rho() const {
  double m = 1.0;
  for (const auto& s : sweeps) m = std::min(m, s.own.spearman_rho);
  return m;
}

double CompositionReport::max_cross_drift() const {
  double m = 0.0;
  for (const auto& s : sweeps)
    for (const auto& [name, drift] : s.cross_drift) m = std::max(m, drift);
  return m;
}

CompositionReport composition_eval(const DenoiserModel& model, std::span<const CompositionEntry> sliders,
                                   std::span<const double> alpha_grid, const EvalSettings& settings,
                                   const PromptEncoder& encoder, const NoiseSchedule& sched) {
  if (sliders.empty()) throw ConfigError("composition_eval: no sliders");
  if (alpha_grid.empty()) throw ConfigError("composition_eval: empty alpha grid");
  check_settings(settings);
  for (std::size_t i = 0; i < sliders.size(); ++i) {
    check_compatible(*sliders[i].slider, model);
    check_compatible(*sliders[i].slider, encoder);
    for (std::size_t j = i + 1; j < sliders.size(); ++j)
      if (sliders[i].slider->name == sliders[j].slider->name)
        throw ConfigError("composition_eval: duplicate slider '" + sliders[i].slider->name + "'");
  }

  CompositionReport report;
  for (std::size_t i = 0; i < sliders.size(); ++i) {
    for (double fixed : kCompositionFixedAlphas) {
      // With a single slider there is nothing to hold fixed.
      if (sliders.size() == 1 && fixed != kCompositionFixedAlphas[0]) continue;
      CompositionSweep sweep;
      sweep.swept = sliders[i].slider->name;
      sweep.others_alpha = fixed;
      sweep.own.concept_label = std::string(concept_name(sliders[i].concept_probe));
      sweep.own.n_samples = settings.n_samples;
      for (std::size_t j = 0; j < sliders.size(); ++j) {
        if (j == i) continue;
        auto& cr = sweep.cross[sliders[j].slider->name];
        cr.concept_label = std::string(concept_name(sliders[j].concept_probe));
        cr.n_samples = settings.n_samples;
      }
      for (double a : alpha_grid) {
        std::vector<SliderUse> uses;
        for (std::size_t j = 0; j < sliders.size(); ++j) uses.push_back({sliders[j].slider, j == i ? a : fixed});
        const auto samples = run_prompt(model, attach_sliders(settings.base_prompt, uses), settings, encoder, sched);
        const auto own = concept_score(samples, sliders[i].concept_probe);
        sweep.own.per_alpha.push_back({a, own.mean, own.std});
        for (std::size_t j = 0; j < sliders.size(); ++j) {
          if (j == i) continue;
          const auto st = concept_score(samples, sliders[j].concept_probe);
          sweep.cross[sliders[j].slider->name].per_alpha.push_back({a, st.mean, st.std});
        }
      }
      finalize(sweep.own);
      for (auto& [name, cr] : sweep.cross) {
        finalize(cr);
        const double ref = cr.per_alpha.front().mean;
        double drift = 0.0;
        for (const auto& s : cr.per_alpha) drift = std::max(drift, std::abs(s.mean - ref) / std::abs(ref));
        sweep.cross_drift[name] = drift;
      }
      report.sweeps.push_back(std::move(sweep));
      if (sliders.size() == 1) break;  // no other slider to hold fixed
    }
  }
  return report;
}

ErasureReport erasure_eval(const DenoiserModel& model, const ConceptSlider& erasure_slider,
                           std::span<const PromptSpec> prompts_with, std::span<const PromptSpec> prompts_without,
                           Concept c, const EvalSettings& settings, const PromptEncoder& encoder,
                           const NoiseSchedule& sched, bool apply_override) {
  if (erasure_slider.kind != SliderKind::erasure)
    throw ConfigError("erasure_eval: slider '" + erasure_slider.name + "' is not an erasure slider");
  check_compatible(erasure_slider, model);
  check_compatible(erasure_slider, encoder);
  check_settings(settings);

  ErasureReport report;
  report.concept_probe = c;
  auto measure = [&](const PromptSpec& prompt) {
    ErasureGroup g;
    g.prompt = prompt;
    g.baseline = concept_score(run_prompt(model, {prompt, {}}, settings, encoder, sched), c);
    ConditionedPrompt cp{prompt, {}};
    if (apply_override) {
      const SliderUse use[1] = {{&erasure_slider, 1.0}};
      cp = attach_sliders(prompt, use);
    }
    g.erased = concept_score(run_prompt(model, cp, settings, encoder, sched), c);
    g.relative_change = (g.erased.mean - g.baseline.mean) / std::abs(g.baseline.mean);
    return g;
  };
  for (const auto& p : prompts_with) report.with_target.push_back(measure(p));
  for (const auto& p : prompts_without) report.controls.push_back(measure(p));
  if (!report.with_target.empty()) {
    double acc = 0.0;
    for (const auto& g : report.with_target) acc += -g.relative_change;
    report.target_reduction = acc / static_cast<double>(report.with_target.size());
  }
  if (!report.controls.empty()) {
    double drift = 0.0;
    for (const auto& g : report.controls) drift = std::max(drift, std::abs(g.relative_change));
    report.control_drift = drift;
  }
  return report;
}

IntervalTable toy_interval_table() {
  return {
      {"point", {Concept::radius, 0.0, 3.0}},
      {"large_radius", {Concept::radius, 1.5, 1e300}},
      {"small_radius", {Concept::radius, -1e300, 0.7}},
      {"left", {Concept::angle, 2.0, 1e300}},
      {"right", {Concept::angle, -1e300, 1.1}},
  };
}

AlignmentScore alignment_score(std::span<const Point> samples, const PromptSpec& prompt, const IntervalTable& table) {
  AlignmentScore out;
  out.prompt = prompt;
  std::size_t satisfied = 0;
  for (const auto& entry : prompt.entries) {
    auto it = table.find(entry.token);
    if (it == table.end()) {
      ++out.warnings;
      continue;
    }
    out.target_attributes.emplace_back(entry.token, it->second);
    const double m = concept_score(samples, it->second.concept_probe).mean;
    if (m >= it->second.lo && m <= it->second.hi) ++satisfied;
  }
  out.score = out.target_attributes.empty()
                  ? 0.0
                  : static_cast<double>(satisfied) / static_cast<double>(out.target_attributes.size());
  return out;
}

std::string probe_csv(const ProbeResult& result) {
  std::string out = "alpha,mean,std\n";
  char buf[96];
  for (const auto& s : result.per_alpha) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", s.alpha, s.mean, s.std);
    out += buf;
  }
  return out;
}

std::string probe_summary(const ProbeResult& result) {
  std::ostringstream os;
  os << "concept: " << result.concept_label << '\n';
  os << "samples_per_alpha: " << result.n_samples << '\n';
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", result.spearman_rho);
  os << "spearman_rho: " << buf << '\n';
  for (const auto& s : result.per_alpha) {
    std::snprintf(buf, sizeof buf, "%8.3f  %10.5f  %10.5f", s.alpha, s.mean, s.std);
    os << "  " << buf << '\n';
  }
  return os.str();
}

void write_probe_csv(const ProbeResult& result, const std::filesystem::path& path) {
  write_file_atomic(path, probe_csv(result));
}

}  // namespace psl
