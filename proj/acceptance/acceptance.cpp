// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: prints one PASS/FAIL line per criterion with the measured
// values, and exits nonzero when any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "psl/cli.hpp"
#include "psl/dataset.hpp"
#include "psl/denoiser.hpp"
#include "psl/digest.hpp"
#include "psl/error.hpp"
#include "psl/persist.hpp"
#include "psl/probe.hpp"
#include "psl/random.hpp"
#include "psl/schedule.hpp"
#include "psl/slider.hpp"
#include "psl/train_base.hpp"
#include "support/gradcheck.hpp"

using namespace psl;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int id, const char* name, bool ok, double secs, double limit, const std::string& detail) {
  const bool in_time = secs <= limit;
  const bool pass = ok && in_time;
  if (!pass) ++failures;
  std::printf("%s %d %s: %s time=%.2fs limit=%.0fs%s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str(), secs, limit,
              in_time ? "" : " (over time)");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const double kAlphas[] = {0.0, 0.5, 1.0, 1.5, 2.0, 3.0};

std::string frozen_sha(const DenoiserModel& a, const DenoiserModel& b, const PromptEncoder& enc) {
  Sha256 h;
  h.update(a.parameter_digest());
  h.update(b.parameter_digest());
  h.update(enc.table());
  h.update(enc.mixing());
  return h.hex_digest();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

/// Central-difference check of d(weighted output)/d(conditioning) on a randomized denoiser.
double denoiser_gradcheck(Arch arch, const PromptEncoder& enc, std::uint64_t seed) {
  auto m = DenoiserModel::build(arch, enc, 100, seed);
  Rng rng = make_rng(seed, 5);
  for (auto& p : m.trainable_parameters())
    for (auto& v : p.mutable_values()) v += 0.2 * standard_normal(rng);
  m.freeze();
  const Tensor z = Tensor::from({3, 2}, standard_normal(rng, 6));
  const auto c0 = standard_normal(rng, enc.dim());
  const auto wts = standard_normal(rng, 6);
  auto f = [&](const std::vector<double>& cv, Tensor* leaf) {
    Tensor c = Tensor::from({1, enc.dim()}, cv, leaf != nullptr);
    if (leaf) *leaf = c;
    return sum(mul(m.predict_eps(z, 25, c), Tensor::from({3, 2}, wts)));
  };
  Tensor c;
  backward(f(c0, &c));
  double worst = 0.0;
  for (std::size_t i = 0; i < enc.dim(); ++i) {
    auto up = c0, down = c0;
    up[i] += 1e-5;
    down[i] -= 1e-5;
    const double numeric = (f(up, nullptr).item() - f(down, nullptr).item()) / 2e-5;
    worst = std::max(worst, check::relative_error(c.grad()[i], numeric));
  }
  return worst;
}

struct CliStep {
  std::vector<std::string> args;
  std::string out;
};

}  // namespace

int main() {
  // Shared setup: default toy data, one frozen encoder, both architectures.
  auto t0 = Clock::now();
  const ToyDataset data = make_toy_dataset();
  const PromptEncoder enc = PromptEncoder::build(toy_vocabulary(32), 7);
  const NoiseSchedule sched = default_schedule();
  DenoiserModel model_a = DenoiserModel::build(Arch::model_a, enc, sched.steps(), 1);
  DenoiserModel model_b = DenoiserModel::build(Arch::model_b, enc, sched.steps(), 2);
  BaseTrainConfig base_cfg;
  base_cfg.seed = 1;
  train_base(model_a, data, sched, enc, base_cfg);
  base_cfg.seed = 2;
  train_base(model_b, data, sched, enc, base_cfg);
  std::printf("setup: trained model_a and model_b (%zu iterations each) in %.1fs\n", base_cfg.iterations,
              seconds_since(t0));
  const std::string frozen_before = frozen_sha(model_a, model_b, enc);

  // 1. Storage.
  {
    auto t = Clock::now();
    ConceptSlider s;
    s.name = "radius_slider";
    s.embedding.assign(768, 0.01);
    const auto bytes = encode_slider(s);
    const std::size_t payload = bytes.size() - slider_header_size(s);
    report(1, "storage", payload == 3072 && bytes.size() <= 3200, seconds_since(t), 1,
           "payload=" + std::to_string(payload) + " total=" + std::to_string(bytes.size()));
  }

  // 2. Parameter parity.
  {
    auto t = Clock::now();
    bool ok = true;
    std::vector<ConceptSlider> sliders;
    std::string counts;
    for (const auto* m : {&model_a, &model_b}) {
      sliders.clear();
      for (std::size_t k = 0; k <= 8; ++k) {
        ok = ok && count_params(*m, sliders) == count_params(*m);
        ConceptSlider s;
        s.name = "s" + std::to_string(k);
        s.embedding.assign(enc.dim(), 0.0);
        s.encoder_hash = enc.hash();
        sliders.push_back(s);
      }
      counts += std::string(counts.empty() ? "" : " ") + arch_name(m->arch()).data() + "=" +
                std::to_string(count_params(*m));
    }
    report(2, "parameter parity", ok, seconds_since(t), 1, counts + " with 0..8 sliders");
  }

  // 3. Gradients.
  {
    auto t = Clock::now();
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      auto r = check::gradcheck(check::make_random_graph(seed));
      worst = std::max(worst, r.max_relative_error);
      checked += r.checked;
    }
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      worst = std::max(worst, denoiser_gradcheck(Arch::model_a, enc, seed));
      worst = std::max(worst, denoiser_gradcheck(Arch::model_b, enc, seed));
    }
    report(3, "gradient correctness", worst <= 1e-4, seconds_since(t), 30,
           "100 graphs (" + std::to_string(checked) + " coords) + 10 MLPs max_rel_err=" + fmt("%.3g", worst));
  }

  // 4. Diffusion algebra.
  {
    auto t = Clock::now();
    Rng rng = make_rng(4);
    const Tensor z0 = Tensor::from({64, 2}, standard_normal(rng, 128));
    const Tensor eps = Tensor::from({64, 2}, standard_normal(rng, 128));
    double round_trip = 0.0;
    for (int step = 1; step <= sched.steps(); ++step) {
      const Tensor zt = q_sample(z0, step, eps, sched);
      round_trip = std::max(round_trip, max_abs_diff(predict_z0(zt, eps, step, sched), z0));
      round_trip = std::max(round_trip, max_abs_diff(ddim_step(zt, eps, step, 0, sched), z0));
    }
    bool monotone = true;
    for (int step = 1; step <= sched.steps(); ++step) monotone = monotone && sched.alpha_bar(step) < sched.alpha_bar(step - 1);
    const Tensor u = Tensor::from({64, 2}, standard_normal(rng, 128));
    const Tensor c = Tensor::from({64, 2}, standard_normal(rng, 128));
    double affine = 0.0;
    for (double w : {0.0, 1.0, 7.5}) {
      const Tensor g = cfg_combine(u, c, w);
      for (std::size_t i = 0; i < g.numel(); ++i)
        affine = std::max(affine, std::abs(g.values()[i] - (u.values()[i] + w * (c.values()[i] - u.values()[i]))));
    }
    const bool endpoints = max_abs_diff(cfg_combine(u, c, 0.0), u) == 0.0 && max_abs_diff(cfg_combine(u, c, 1.0), c) == 0.0;
    report(4, "diffusion algebra", round_trip <= 1e-9 && monotone && affine <= 1e-12 && endpoints, seconds_since(t), 5,
           "ddim_round_trip=" + fmt("%.3g", round_trip) + " monotone=" + (monotone ? "yes" : "no") +
               " cfg_affine_err=" + fmt("%.3g", affine) + " endpoints_exact=" + (endpoints ? "yes" : "no"));
  }

  EvalSettings eval;
  eval.n_samples = 500;

  // 5. Monotonicity of a radius slider.
  ConceptSlider radius;
  {
    auto t = Clock::now();
    SliderTrainConfig c;  // 3000 iterations, lr 5e-4, batch 1, alpha in [0, 3]
    c.seed = 5;
    radius = train_textual_slider(model_a, data, toy_recipe("radius"), c, enc, sched, "radius_slider");
    auto r = monotonicity_report(model_a, radius, kAlphas, Concept::radius, eval, enc, sched);
    report(5, "slider monotonicity", r.spearman_rho >= 0.9, seconds_since(t), 300,
           "rho=" + fmt("%.3f", r.spearman_rho) + " radius " + fmt("%.3f", r.per_alpha.front().mean) + " -> " +
               fmt("%.3f", r.per_alpha.back().mean));
  }

  // 6. Transfer to the other architecture.
  {
    auto t = Clock::now();
    auto r = transfer_eval(radius, model_b, kAlphas, Concept::radius, eval, enc, sched);
    const PromptEncoder other_enc = PromptEncoder::build(toy_vocabulary(32), 8);
    DenoiserModel other = DenoiserModel::build(Arch::model_b, other_enc, sched.steps(), 2);
    other.freeze();
    bool gated = false;
    try {
      transfer_eval(radius, other, kAlphas, Concept::radius, eval, other_enc, sched);
    } catch (const CompatibilityError&) {
      gated = true;
    }
    report(6, "transfer", r.spearman_rho >= 0.8 && gated, seconds_since(t), 120,
           "model_b rho=" + fmt("%.3f", r.spearman_rho) + " radius " + fmt("%.3f", r.per_alpha.front().mean) + " -> " +
               fmt("%.3f", r.per_alpha.back().mean) + " mismatched_encoder_error=" + (gated ? "yes" : "no"));
  }

  // 7. Erasure of large_radius.
  {
    auto t = Clock::now();
    ConceptRecipe recipe;
    recipe.target = PromptSpec::parse("point large_radius");
    recipe.positive = recipe.target;
    recipe.negative = PromptSpec::parse("point small_radius");
    SliderTrainConfig c;
    c.alpha_min = 1.0;
    c.alpha_max = 1.0;
    c.seed = 7;
    auto e = train_erasure(model_a, data, "large_radius", recipe, c, enc, sched);
    const std::vector<PromptSpec> with{PromptSpec::parse("point large_radius"),
                                       PromptSpec::parse("point large_radius left"),
                                       PromptSpec::parse("point large_radius right")};
    const std::vector<PromptSpec> without{PromptSpec::parse("point"), PromptSpec::parse("point small_radius"),
                                          PromptSpec::parse("point left"), PromptSpec::parse("point right")};
    auto r = erasure_eval(model_a, e, with, without, Concept::radius, eval, enc, sched);
    const double drift = r.control_drift.value_or(INFINITY);
    report(7, "erasure", r.target_reduction >= 0.5 && drift <= 0.1, seconds_since(t), 300,
           "reduction=" + fmt("%.3f", r.target_reduction) + " control_drift=" + fmt("%.3f", drift));
  }

  // 8. Composition of radius and angle sliders.
  {
    auto t = Clock::now();
    SliderTrainConfig c;
    c.eta = 0.25;
    c.seed = 8;
    auto rs = train_textual_slider(model_a, data, toy_recipe("radius"), c, enc, sched, "radius_slider");
    c.seed = 9;
    auto as = train_textual_slider(model_a, data, toy_recipe("angle"), c, enc, sched, "angle_slider");
    const CompositionEntry entries[] = {{&rs, Concept::radius}, {&as, Concept::angle}};
    auto r = composition_eval(model_a, entries, kAlphas, eval, enc, sched);
    report(8, "composition", r.min_own_rho() >= 0.85 && r.max_cross_drift() <= 0.15, seconds_since(t), 300,
           "min_own_rho=" + fmt("%.3f", r.min_own_rho()) + " max_cross_drift=" + fmt("%.3f", r.max_cross_drift()));
  }

  // 9. Target identities and frozen parameters.
  {
    auto t = Clock::now();
    Rng rng = make_rng(9);
    bool zero_ok = true, erase_ok = true;
    for (std::uint64_t k = 0; k < 3; ++k) {
      ConceptRecipe r = toy_recipe(k == 1 ? "angle" : "radius");
      if (k == 2) r.preserve = {PromptSpec{}, PromptSpec::parse("wide_spread")};
      const Tensor z = Tensor::from({8, 2}, standard_normal(rng, 16));
      const int step = uniform_int(rng, 1, sched.steps());
      const double alpha = uniform(rng, 0.1, 3.0), eta = uniform(rng, 0.2, 2.0);
      const Tensor base = model_a.predict_eps(z, step, Tensor::row(enc.encode(r.target)));
      zero_ok = zero_ok && max_abs_diff(compose_target_eps(model_a, z, step, r, 0.0, eta, enc), base) == 0.0;
      erase_ok = erase_ok && max_abs_diff(compose_target_eps(model_a, z, step, r, alpha, eta, enc, TargetMode::erase),
                                          compose_target_eps(model_a, z, step, r, -alpha, eta, enc)) == 0.0;
    }
    const std::string frozen_after = frozen_sha(model_a, model_b, enc);
    const bool frozen_ok = frozen_after == frozen_before;
    report(9, "target identities", zero_ok && erase_ok && frozen_ok, seconds_since(t), 10,
           std::string("alpha0_exact=") + (zero_ok ? "yes" : "no") + " erase_is_neg_alpha=" + (erase_ok ? "yes" : "no") +
               " frozen_sha256 " + frozen_before.substr(0, 12) + (frozen_ok ? " unchanged" : " CHANGED"));
  }

  // 10. Manifest replay.
  {
    const fs::path dir = fs::temp_directory_path() / "psl_acceptance_replay";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto p = [&](const char* name) { return (dir / name).string(); };
    const std::vector<CliStep> steps = {
        {{"gen-data", "--count", "1000", "--seed", "3", "--out", p("data.csv")}, p("data.csv")},
        {{"train-base", "--data", p("data.csv"), "--iters", "300", "--batch", "64", "--out", p("model.psm")},
         p("model.psm")},
        {{"train-slider", "--model", p("model.psm"), "--data", p("data.csv"), "--concept", "radius", "--iters", "300",
          "--out", p("radius.cse")},
         p("radius.cse")},
        {{"sample", "--model", p("model.psm"), "--prompt", "point", "--slider", p("radius.cse"), "--alpha", "1.5",
          "--n", "200", "--out", p("samples.csv")},
         p("samples.csv")},
        {{"sweep-plot", "--model", p("model.psm"), "--slider", p("radius.cse"), "--out", p("sweep.svg")}, p("sweep.svg")},
    };
    bool ok = true;
    double first_run = 0.0, replay_run = 0.0;
    std::string detail;
    for (const auto& step : steps) {
      std::ostringstream out, err;
      auto t = Clock::now();
      const int code = cli_dispatch(step.args, out, err);
      first_run += seconds_since(t);
      if (code != kExitOk) {
        ok = false;
        detail += " " + step.args[0] + ":exit" + std::to_string(code);
        continue;
      }
      const auto recorded = load_manifest(step.out + ".manifest").outputs;
      std::map<std::string, std::string> before;
      for (const auto& [path, sha] : recorded) {
        before[path] = sha256_file(path);
        fs::remove(path);
      }
      t = Clock::now();
      const int again = replay_manifest(step.out + ".manifest", out, err);
      replay_run += seconds_since(t);
      bool same = again == kExitOk && !recorded.empty();
      for (const auto& [path, sha] : recorded) same = same && fs::exists(path) && sha256_file(path) == sha && sha == before[path];
      ok = ok && same;
      detail += " " + step.args[0] + "(" + std::to_string(recorded.size()) + "):" + (same ? "identical" : "DIFFERENT");
    }
    fs::remove_all(dir);
    report(10, "manifest replay", ok, replay_run, 1.5 * first_run + 1.0,
           "first_run=" + fmt("%.2fs", first_run) + detail);
  }

  std::printf("%s: %d criteria failed, total %.1fs\n", failures == 0 ? "ALL PASS" : "FAILURES", failures,
              seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
