// SPDX-License-Identifier: Apache-2.0
#include "psl/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include "psl/dataset.hpp"
#include "psl/digest.hpp"
#include "psl/error.hpp"
#include "psl/persist.hpp"
#include "psl/plot.hpp"
#include "psl/probe.hpp"
#include "psl/sampler.hpp"
#include "psl/slider.hpp"
#include "psl/train_base.hpp"

namespace psl {

namespace {

const std::vector<std::string> kArchNames = {"model_a", "model_b"};
const std::vector<std::string> kConceptNames = {"radius", "angle", "spread"};
const std::vector<std::string> kSamplerNames = {"ddim", "ddpm"};
const std::vector<std::string> kLatentNames = {"dataset", "model_sampled"};

/// Files a command read and wrote, reported in the manifest.
struct Io {
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

struct SliderOpts {
  std::size_t iters = 3000;
  std::size_t batch = 1;
  double lr = 5e-4;
  double weight_decay = 0.01;
  double eta = 1.0;
  double alpha_min = 0.0;
  double alpha_max = 3.0;
  std::string latent_source = "dataset";
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    app->add_option("--iters", iters, "Training iterations");
    app->add_option("--batch", batch, "Latents per iteration");
    app->add_option("--lr", lr, "AdamW learning rate");
    app->add_option("--weight-decay", weight_decay, "AdamW decoupled weight decay");
    app->add_option("--eta", eta, "Scale of the difference term in the target");
    app->add_option("--alpha-min", alpha_min, "Lower end of the training alpha range");
    app->add_option("--alpha-max", alpha_max, "Upper end of the training alpha range");
    app->add_option("--latent-source", latent_source, "Where clean latents come from")
        ->check(CLI::IsMember(kLatentNames));
    app->add_option("--seed", seed, "Training seed");
  }

  SliderTrainConfig config() const {
    SliderTrainConfig c;
    c.iterations = iters;
    c.batch_size = batch;
    c.learning_rate = lr;
    c.weight_decay = weight_decay;
    c.eta = eta;
    c.alpha_min = alpha_min;
    c.alpha_max = alpha_max;
    c.latent_source = parse_latent_source(latent_source);
    c.seed = seed;
    return c;
  }
};

struct EvalOpts {
  std::string prompt = "point";
  std::size_t n = 500;
  int steps = 50;
  double cfg = 1.0;
  std::string sampler = "ddim";
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    app->add_option("--prompt", prompt, "Base prompt the sliders are appended to");
    app->add_option("--n", n, "Samples per alpha");
    app->add_option("--steps", steps, "Sampler steps");
    app->add_option("--cfg", cfg, "Guidance scale");
    app->add_option("--sampler", sampler, "Sampler")->check(CLI::IsMember(kSamplerNames));
    app->add_option("--seed", seed, "Sampling seed");
  }

  EvalSettings settings() const {
    EvalSettings s;
    s.base_prompt = PromptSpec::parse(prompt);
    s.n_samples = n;
    s.steps = steps;
    s.cfg_scale = cfg;
    s.sampler = parse_sampler(sampler);
    s.seed = seed;
    return s;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string points_csv(const std::vector<Point>& pts) {
  std::string s = "x,y\n";
  char buf[64];
  for (const auto& p : pts) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p[0], p[1]);
    s += buf;
  }
  return s;
}

std::vector<ConceptSlider> load_sliders(const std::vector<std::string>& paths, const PromptEncoder& encoder,
                                        Io& io) {
  std::vector<ConceptSlider> out;
  for (const auto& p : paths) {
    out.push_back(load_slider(p, encoder));
    io.inputs.push_back(p);
  }
  return out;
}

ModelBundle load_model_input(const std::string& path, Io& io) {
  io.inputs.push_back(path);
  return load_model(path);
}

ToyDataset load_data_input(const std::string& path, Io& io) {
  io.inputs.push_back(path);
  return load_dataset_csv(path);
}

std::string config_value(const CLI::Option* opt) {
  if (opt->count() == 0) return opt->get_default_str();
  std::string joined;
  for (const auto& r : opt->results()) joined += (joined.empty() ? "" : ",") + r;
  return joined;
}

class Dispatcher {
 public:
  Dispatcher(std::ostream& out) : out_(out) {}

  int run(const std::vector<std::string>& args, std::ostream& err);

 private:
  void add_gen_data(CLI::App& app);
  void add_train_base(CLI::App& app);
  void add_train_slider(CLI::App& app);
  void add_train_visual(CLI::App& app);
  void add_erase(CLI::App& app);
  void add_sample(CLI::App& app);
  void add_eval(CLI::App& app);
  void add_compose(CLI::App& app);
  void add_sweep_plot(CLI::App& app);

  CLI::App* sub(CLI::App& app, const std::string& name, const std::string& help, std::string& out_path,
                const std::string& default_out, std::function<Io()> body) {
    CLI::App* s = app.add_subcommand(name, help);
    out_path = default_out;
    s->add_option("--out", out_path, "Primary output path");
    s->add_option("--manifest", manifest_, "Run manifest path (default: <out>.manifest)");
    bodies_[s] = {std::move(body), &out_path};
    return s;
  }

  struct Body {
    std::function<Io()> fn;
    std::string* out_path = nullptr;
  };

  std::ostream& out_;
  std::string manifest_;
  std::uint64_t seed_ = 0;
  std::map<CLI::App*, Body> bodies_;

  // Option storage; one field set per subcommand.
  struct {
    std::string out;
    std::size_t count = 4000;
    std::uint64_t seed = 0;
    double wide = 0.2;
  } gen_;
  struct {
    std::string out, data = "data.csv", arch = "model_a", vocab;
    std::size_t dim = 32, iters = 6000, batch = 256;
    std::uint64_t encoder_seed = 7, seed = 0;
    double lr = 2e-3, null_rate = 0.1, beta_start = 1e-4, beta_end = 0.2;
    int timesteps = 100;
    bool constant_lr = false;
  } base_;
  struct {
    std::string out, model = "model_a.psm", data = "data.csv", concept_name, name, target, positive, negative;
    std::vector<std::string> preserve;
    SliderOpts opts;
  } slider_;
  struct {
    std::string out, model = "model_a.psm", data = "data.csv", target = "point", name = "visual_slider";
    double high = 1.5, low = 0.7;
    SliderOpts opts;
  } visual_;
  struct {
    std::string out, model = "model_a.psm", data = "data.csv", token, target, positive, negative;
    std::vector<std::string> preserve;
    SliderOpts opts;
  } erase_;
  struct {
    std::string out, model = "model_a.psm", prompt = "point", sampler = "ddim";
    std::vector<std::string> sliders;
    std::vector<double> alphas;
    int steps = 50;
    double cfg = 7.5;
    std::size_t n = 500;
    std::uint64_t seed = 0;
  } sample_;
  struct {
    std::string out, model = "model_a.psm", slider, concept_name = "radius";
    std::vector<double> alphas = {0, 0.5, 1, 1.5, 2, 3};
    std::vector<std::string> with, control;
    EvalOpts opts;
  } eval_;
  struct {
    std::string out, model = "model_a.psm";
    std::vector<std::string> sliders, concepts;
    std::vector<double> alphas = {0, 0.5, 1, 1.5, 2, 3};
    EvalOpts opts;
  } compose_;
  struct {
    std::string out, model = "model_a.psm", slider, concept_name = "radius";
    std::vector<double> alphas = {0, 0.5, 1, 1.5, 2, 3};
    EvalOpts opts;
  } plot_;
};

void Dispatcher::add_gen_data(CLI::App& app) {
  auto* s = sub(app, "gen-data", "Generate the toy dataset as CSV", gen_.out, "data.csv", [this] {
    ToyDataConfig c;
    c.count = gen_.count;
    c.seed = gen_.seed;
    c.wide_fraction = gen_.wide;
    seed_ = gen_.seed;
    save_dataset_csv(make_toy_dataset(c), gen_.out);
    out_ << "wrote " << gen_.count << " points to " << gen_.out << '\n';
    return Io{{}, {gen_.out}};
  });
  s->add_option("--count", gen_.count, "Number of points");
  s->add_option("--seed", gen_.seed, "Generator seed");
  s->add_option("--wide-fraction", gen_.wide, "Fraction of points with wide jitter");
}

void Dispatcher::add_train_base(CLI::App& app) {
  auto* s = sub(app, "train-base", "Train a base denoiser with a fresh frozen encoder", base_.out, "", [this] {
    Io io;
    if (base_.out.empty()) base_.out = base_.arch + ".psm";
    ToyDataset data = load_data_input(base_.data, io);
    Vocabulary vocab = toy_vocabulary(base_.dim);
    if (!base_.vocab.empty()) {
      vocab = Vocabulary::load(base_.vocab, base_.dim);
      io.inputs.push_back(base_.vocab);
    }
    PromptEncoder encoder = PromptEncoder::build(vocab, base_.encoder_seed);
    NoiseSchedule sched = make_schedule(base_.timesteps, BetaSpec::linear(base_.beta_start, base_.beta_end));
    DenoiserModel model = DenoiserModel::build(parse_arch(base_.arch), encoder, sched.steps(), base_.seed);
    BaseTrainConfig c;
    c.iterations = base_.iters;
    c.batch_size = base_.batch;
    c.learning_rate = base_.lr;
    c.cosine_decay = !base_.constant_lr;
    c.null_prompt_rate = base_.null_rate;
    c.seed = base_.seed;
    seed_ = base_.seed;
    BaseTrainReport rep = train_base(model, data, sched, encoder, c);
    save_model(model, encoder, sched, base_.out);
    out_ << base_.arch << ": " << count_params(model) << " parameters, encoder " << encoder.hash().hex() << '\n';
    if (!rep.epoch_means.empty())
      out_ << "epoch loss " << fmt("%.5f", rep.epoch_means.front()) << " -> " << fmt("%.5f", rep.epoch_means.back())
           << '\n';
    io.outputs.push_back(base_.out);
    return io;
  });
  s->add_option("--data", base_.data, "Dataset CSV")->check(CLI::ExistingFile);
  s->add_option("--arch", base_.arch, "Architecture")->check(CLI::IsMember(kArchNames));
  s->add_option("--dim", base_.dim, "Prompt embedding dimension");
  s->add_option("--vocab", base_.vocab, "Vocabulary file (default: built-in toy tokens)")->check(CLI::ExistingFile);
  s->add_option("--encoder-seed", base_.encoder_seed, "Seed of the frozen encoder tables");
  s->add_option("--timesteps", base_.timesteps, "Diffusion steps T");
  s->add_option("--beta-start", base_.beta_start, "First beta of the linear schedule");
  s->add_option("--beta-end", base_.beta_end, "Last beta of the linear schedule");
  s->add_option("--iters", base_.iters, "Training iterations");
  s->add_option("--batch", base_.batch, "Batch size");
  s->add_option("--lr", base_.lr, "Peak AdamW learning rate");
  s->add_flag("--constant-lr", base_.constant_lr, "Disable cosine decay");
  s->add_option("--null-rate", base_.null_rate, "Fraction of examples trained unconditioned");
  s->add_option("--seed", base_.seed, "Initialization and training seed");
}

void Dispatcher::add_train_slider(CLI::App& app) {
  auto* s = sub(app, "train-slider", "Learn a textual slider token", slider_.out, "", [this] {
    Io io;
    ConceptRecipe recipe;
    if (!slider_.concept_name.empty()) {
      recipe = toy_recipe(slider_.concept_name);
    } else if (slider_.positive.empty()) {
      throw UsageError("train-slider needs --concept or --positive");
    }
    if (!slider_.target.empty()) recipe.target = PromptSpec::parse(slider_.target);
    if (!slider_.positive.empty()) recipe.positive = PromptSpec::parse(slider_.positive);
    if (!slider_.negative.empty()) recipe.negative = PromptSpec::parse(slider_.negative);
    if (recipe.target.empty()) recipe.target = PromptSpec::parse("point");
    for (const auto& p : slider_.preserve) recipe.preserve.push_back(PromptSpec::parse(p));
    const std::string stem = slider_.concept_name.empty() ? "slider" : slider_.concept_name;
    if (slider_.name.empty()) slider_.name = stem + "_slider";
    if (slider_.out.empty()) slider_.out = stem + ".cse";
    ModelBundle b = load_model_input(slider_.model, io);
    ToyDataset data = load_data_input(slider_.data, io);
    seed_ = slider_.opts.seed;
    ConceptSlider sl =
        train_textual_slider(b.model, data, recipe, slider_.opts.config(), b.encoder, b.schedule, slider_.name);
    save_slider(sl, slider_.out);
    out_ << "slider '" << sl.name << "' final loss " << fmt("%.6f", sl.loss_curve.empty() ? 0.0 : sl.loss_curve.back())
         << '\n';
    io.outputs.push_back(slider_.out);
    return io;
  });
  s->add_option("--model", slider_.model, "Trained model file")->check(CLI::ExistingFile);
  s->add_option("--data", slider_.data, "Dataset CSV")->check(CLI::ExistingFile);
  s->add_option("--concept", slider_.concept_name, "Built-in recipe")->check(CLI::IsMember({"radius", "angle"}));
  s->add_option("--name", slider_.name, "Slider token name");
  s->add_option("--target", slider_.target, "Target prompt c_t");
  s->add_option("--positive", slider_.positive, "Positive prompt c+");
  s->add_option("--negative", slider_.negative, "Negative prompt c- (default: context only)");
  s->add_option("--preserve", slider_.preserve, "Preservation context (repeatable)");
  slider_.opts.add(s);
}

void Dispatcher::add_train_visual(CLI::App& app) {
  auto* s = sub(app, "train-visual", "Learn a slider from high/low radius pairs", visual_.out, "visual.cse", [this] {
    Io io;
    ModelBundle b = load_model_input(visual_.model, io);
    ToyDataset data = load_data_input(visual_.data, io);
    AttributePairs pairs = split_by_radius(data, visual_.high, visual_.low);
    seed_ = visual_.opts.seed;
    ConceptSlider sl = train_visual_slider(b.model, pairs.high, pairs.low, PromptSpec::parse(visual_.target),
                                           visual_.opts.config(), b.encoder, b.schedule, visual_.name);
    save_slider(sl, visual_.out);
    out_ << "visual slider '" << sl.name << "' from " << pairs.high.size() << " high / " << pairs.low.size()
         << " low points\n";
    io.outputs.push_back(visual_.out);
    return io;
  });
  s->add_option("--model", visual_.model, "Trained model file")->check(CLI::ExistingFile);
  s->add_option("--data", visual_.data, "Dataset CSV")->check(CLI::ExistingFile);
  s->add_option("--target", visual_.target, "Prompt the slider is trained in");
  s->add_option("--name", visual_.name, "Slider token name");
  s->add_option("--high", visual_.high, "Radius above which a point is in the high set");
  s->add_option("--low", visual_.low, "Radius below which a point is in the low set");
  visual_.opts.add(s);
}

void Dispatcher::add_erase(CLI::App& app) {
  erase_.opts.alpha_min = 1.0;
  erase_.opts.alpha_max = 1.0;
  auto* s = sub(app, "erase", "Retrain an existing token so prompts naming it lose the concept", erase_.out, "", [this] {
    Io io;
    ConceptRecipe recipe;
    recipe.target = PromptSpec::parse(erase_.target.empty() ? "point " + erase_.token : erase_.target);
    recipe.positive = erase_.positive.empty() ? recipe.target : PromptSpec::parse(erase_.positive);
    if (!erase_.negative.empty()) recipe.negative = PromptSpec::parse(erase_.negative);
    for (const auto& p : erase_.preserve) recipe.preserve.push_back(PromptSpec::parse(p));
    if (erase_.out.empty()) erase_.out = "erase_" + erase_.token + ".cse";
    ModelBundle b = load_model_input(erase_.model, io);
    ToyDataset data = load_data_input(erase_.data, io);
    seed_ = erase_.opts.seed;
    ConceptSlider sl =
        train_erasure(b.model, data, erase_.token, recipe, erase_.opts.config(), b.encoder, b.schedule);
    save_slider(sl, erase_.out);
    out_ << "erasure of '" << erase_.token << "' written to " << erase_.out << '\n';
    io.outputs.push_back(erase_.out);
    return io;
  });
  s->add_option("--model", erase_.model, "Trained model file")->check(CLI::ExistingFile);
  s->add_option("--data", erase_.data, "Dataset CSV")->check(CLI::ExistingFile);
  s->add_option("--token", erase_.token, "Vocabulary token to erase")->required();
  s->add_option("--target", erase_.target, "Target prompt (default: \"point <token>\")");
  s->add_option("--positive", erase_.positive, "Positive prompt (default: the target)");
  s->add_option("--negative", erase_.negative, "Negative prompt (default: context only)");
  s->add_option("--preserve", erase_.preserve, "Preservation context (repeatable)");
  erase_.opts.add(s);
}

void Dispatcher::add_sample(CLI::App& app) {
  auto* s = sub(app, "sample", "Draw samples, optionally with sliders", sample_.out, "samples.csv", [this] {
    Io io;
    ModelBundle b = load_model_input(sample_.model, io);
    std::vector<ConceptSlider> sliders = load_sliders(sample_.sliders, b.encoder, io);
    if (!sample_.alphas.empty() && sample_.alphas.size() != 1 && sample_.alphas.size() != sliders.size())
      throw UsageError("give one --alpha, or one per --slider");
    std::vector<SliderUse> uses;
    for (std::size_t i = 0; i < sliders.size(); ++i) {
      const double a = sample_.alphas.empty() ? 1.0 : sample_.alphas[sample_.alphas.size() == 1 ? 0 : i];
      uses.push_back({&sliders[i], a});
    }
    ConditionedPrompt cp = attach_sliders(PromptSpec::parse(sample_.prompt), uses);
    SampleRequest req;
    req.prompt = cp.prompt;
    req.overrides = cp.overrides;
    req.steps = sample_.steps;
    req.cfg_scale = sample_.cfg;
    req.n_samples = sample_.n;
    req.seed = sample_.seed;
    req.sampler = parse_sampler(sample_.sampler);
    seed_ = sample_.seed;
    auto pts = sample(b.model, req, b.encoder, b.schedule);
    write_file_atomic(sample_.out, points_csv(pts));
    const ConceptStats r = concept_score(pts, Concept::radius);
    out_ << pts.size() << " samples for \"" << cp.prompt.to_string() << "\": mean radius " << fmt("%.4f", r.mean)
         << '\n';
    io.outputs.push_back(sample_.out);
    return io;
  });
  s->add_option("--model", sample_.model, "Trained model file")->check(CLI::ExistingFile);
  s->add_option("--prompt", sample_.prompt, "Prompt, e.g. \"point left\"");
  s->add_option("--slider", sample_.sliders, "Slider file (repeatable)")->check(CLI::ExistingFile);
  s->add_option("--alpha", sample_.alphas, "Slider strength (one, or one per slider)");
  s->add_option("--steps", sample_.steps, "Sampler steps");
  s->add_option("--cfg", sample_.cfg, "Guidance scale");
  s->add_option("--n", sample_.n, "Number of samples");
  s->add_option("--seed", sample_.seed, "Sampling seed");
  s->add_option("--sampler", sample_.sampler, "Sampler")->check(CLI::IsMember(kSamplerNames));
}

void Dispatcher::add_eval(CLI::App& app) {
  auto* s = sub(app, "eval", "Probe a slider across alphas, or score an erasure", eval_.out, "probe.csv", [this] {
    Io io;
    ModelBundle b = load_model_input(eval_.model, io);
    ConceptSlider sl = load_sliders({eval_.slider}, b.encoder, io).front();
    const EvalSettings es = eval_.opts.settings();
    seed_ = es.seed;
    const Concept c = parse_concept(eval_.concept_name);
    if (sl.kind == SliderKind::erasure) {
      if (eval_.with.empty()) throw UsageError("eval of an erasure slider needs --with prompts");
      std::vector<PromptSpec> with, control;
      for (const auto& p : eval_.with) with.push_back(PromptSpec::parse(p));
      for (const auto& p : eval_.control) control.push_back(PromptSpec::parse(p));
      ErasureReport rep = erasure_eval(b.model, sl, with, control, c, es, b.encoder, b.schedule);
      std::string csv = "group,prompt,baseline_mean,erased_mean,relative_change\n";
      char buf[160];
      auto rows = [&](const char* group, const std::vector<ErasureGroup>& gs) {
        for (const auto& g : gs) {
          std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g\n", g.baseline.mean, g.erased.mean, g.relative_change);
          csv += std::string(group) + "," + g.prompt.to_string() + buf;
        }
      };
      rows("target", rep.with_target);
      rows("control", rep.controls);
      write_file_atomic(eval_.out, csv);
      out_ << "target reduction " << fmt("%.4f", rep.target_reduction);
      if (rep.control_drift) out_ << ", control drift " << fmt("%.4f", *rep.control_drift);
      out_ << '\n';
    } else {
      ProbeResult r = monotonicity_report(b.model, sl, eval_.alphas, c, es, b.encoder, b.schedule);
      write_probe_csv(r, eval_.out);
      out_ << probe_summary(r);
    }
    io.outputs.push_back(eval_.out);
    return io;
  });
  s->add_option("--model", eval_.model, "Trained model file")->check(CLI::ExistingFile);
  s->add_option("--slider", eval_.slider, "Slider file")->required()->check(CLI::ExistingFile);
  s->add_option("--concept", eval_.concept_name, "Probe")->check(CLI::IsMember(kConceptNames));
  s->add_option("--alphas", eval_.alphas, "Alpha grid, comma separated")->delimiter(',');
  s->add_option("--with", eval_.with, "Erasure: prompt naming the erased token (repeatable)");
  s->add_option("--control", eval_.control, "Erasure: control prompt (repeatable)");
  eval_.opts.add(s);
}

void Dispatcher::add_compose(CLI::App& app) {
  auto* s = sub(app, "compose", "Sweep each slider while the others stay fixed", compose_.out, "compose.csv", [this] {
    Io io;
    if (compose_.concepts.size() != compose_.sliders.size())
      throw UsageError("give one --concept per --slider");
    ModelBundle b = load_model_input(compose_.model, io);
    std::vector<ConceptSlider> sliders = load_sliders(compose_.sliders, b.encoder, io);
    std::vector<CompositionEntry> entries;
    for (std::size_t i = 0; i < sliders.size(); ++i)
      entries.push_back({&sliders[i], parse_concept(compose_.concepts[i])});
    const EvalSettings es = compose_.opts.settings();
    seed_ = es.seed;
    CompositionReport rep = composition_eval(b.model, entries, compose_.alphas, es, b.encoder, b.schedule);
    std::string csv = "swept,others_alpha,probe,alpha,mean,std\n";
    char buf[128];
    for (const auto& sw : rep.sweeps) {
      auto rows = [&](const std::string& probe, const ProbeResult& r) {
        for (const auto& a : r.per_alpha) {
          std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", sw.others_alpha, a.alpha, a.mean, a.std);
          std::string row = buf;
          const auto comma = row.find(',');
          csv += sw.swept + "," + row.substr(0, comma) + "," + probe + row.substr(comma);
        }
      };
      rows(sw.swept, sw.own);
      for (const auto& [name, r] : sw.cross) rows(name, r);
    }
    write_file_atomic(compose_.out, csv);
    out_ << "min own rho " << fmt("%.4f", rep.min_own_rho()) << ", max cross drift "
         << fmt("%.4f", rep.max_cross_drift()) << '\n';
    io.outputs.push_back(compose_.out);
    return io;
  });
  s->add_option("--model", compose_.model, "Trained model file")->check(CLI::ExistingFile);
  s->add_option("--slider", compose_.sliders, "Slider file (repeatable)")->required()->check(CLI::ExistingFile);
  s->add_option("--concept", compose_.concepts, "Probe for each slider, in order")
      ->required()
      ->check(CLI::IsMember(kConceptNames));
  s->add_option("--alphas", compose_.alphas, "Alpha grid, comma separated")->delimiter(',');
  compose_.opts.add(s);
}

void Dispatcher::add_sweep_plot(CLI::App& app) {
  auto* s = sub(app, "sweep-plot", "Plot a slider's alpha sweep as SVG plus CSV", plot_.out, "sweep.svg", [this] {
    Io io;
    ModelBundle b = load_model_input(plot_.model, io);
    ConceptSlider sl = load_sliders({plot_.slider}, b.encoder, io).front();
    const EvalSettings es = plot_.opts.settings();
    seed_ = es.seed;
    ProbeResult r =
        monotonicity_report(b.model, sl, plot_.alphas, parse_concept(plot_.concept_name), es, b.encoder, b.schedule);
    sweep_plot(r, plot_.out);
    std::filesystem::path csv = plot_.out;
    csv.replace_extension(".csv");
    out_ << probe_summary(r);
    io.outputs.push_back(plot_.out);
    io.outputs.push_back(csv.string());
    return io;
  });
  s->add_option("--slider", plot_.slider, "Trained slider file")->required()->check(CLI::ExistingFile);
  s->add_option("--model", plot_.model, "Trained model file")->check(CLI::ExistingFile);
  s->add_option("--concept", plot_.concept_name, "Probe")->check(CLI::IsMember(kConceptNames));
  s->add_option("--alphas", plot_.alphas, "Alpha grid, comma separated")->delimiter(',');
  plot_.opts.add(s);
}

int Dispatcher::run(const std::vector<std::string>& args, std::ostream& err) {
  CLI::App app{"Learned slider tokens for a toy 2-D diffusion model", "psl"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1, 1);
  add_gen_data(app);
  add_train_base(app);
  add_train_slider(app);
  add_train_visual(app);
  add_erase(app);
  add_sample(app);
  add_eval(app);
  add_compose(app);
  add_sweep_plot(app);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    CLI::App* shown = &app;
    for (auto* s : app.get_subcommands()) shown = s;
    if (e.get_exit_code() == 0) {
      out_ << shown->help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n\n" << shown->help();
    return kExitUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  Body& body = bodies_.at(chosen);
  const auto start = std::chrono::steady_clock::now();
  RunManifest m;
  m.command = chosen->get_name();
  m.argv = args;
  Io io;
  try {
    io = body.fn();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << chosen->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    m.exit_code = kExitDomainError;
    m.error = e.what();
  }
  m.duration_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto* opt : chosen->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "manifest") continue;
    m.config.emplace_back(name, name == "out" ? *body.out_path : config_value(opt));
  }
  m.seed = seed_;
  for (const auto& p : io.inputs) m.inputs[p] = sha256_file(p);
  for (const auto& p : io.outputs) m.outputs[p] = sha256_file(p);

  std::string manifest_path = manifest_;
  if (manifest_path.empty()) {
    const std::string primary = body.out_path->empty() ? m.command : *body.out_path;
    manifest_path = primary + ".manifest";
  }
  try {
    save_manifest(m, manifest_path);
  } catch (const std::exception& e) {
    err << "error: cannot write manifest: " << e.what() << '\n';
    return kExitDomainError;
  }
  return m.exit_code;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Dispatcher d(out);
  return d.run(args, err);
}

int cli_dispatch(const std::vector<std::string>& args) { return cli_dispatch(args, std::cout, std::cerr); }

int replay_manifest(const std::filesystem::path& manifest, std::ostream& out, std::ostream& err) {
  RunManifest m;
  try {
    m = load_manifest(manifest);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomainError;
  }
  if (m.argv.empty()) {
    err << "error: manifest records no command\n";
    return kExitDomainError;
  }
  return cli_dispatch(m.argv, out, err);
}

}  // namespace psl
