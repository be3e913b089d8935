// SPDX-License-Identifier: Apache-2.0
#include "psl/slider.hpp"

#include <cmath>
#include <stdexcept>

#include "psl/error.hpp"
#include "psl/optim.hpp"
#include "psl/sampler.hpp"

namespace psl {

std::string_view slider_kind_name(SliderKind kind) {
  switch (kind) {
    case SliderKind::textual: return "textual";
    case SliderKind::visual: return "visual";
    case SliderKind::erasure: return "erasure";
  }
  return "?";
}

void ConceptRecipe::validate() const {
  if (negative && *negative == positive) throw ConfigError("recipe: positive and negative prompts are identical");
}

LatentSource parse_latent_source(std::string_view name) {
  if (name == "dataset") return LatentSource::dataset;
  if (name == "model_sampled") return LatentSource::model_sampled;
  throw ConfigError("unknown latent source '" + std::string(name) + "'");
}

void SliderTrainConfig::validate() const {
  if (alpha_min > alpha_max) throw ConfigError("slider config: alpha_min exceeds alpha_max");
  if (batch_size == 0) throw ConfigError("slider config: batch size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("slider config: learning rate must be positive");
  if (!(eta > 0.0)) throw ConfigError("slider config: eta must be positive");
}

namespace {

PromptSpec with_context(const PromptSpec& prompt, const PromptSpec& context) {
  PromptSpec out = prompt;
  out.entries.insert(out.entries.end(), context.entries.begin(), context.entries.end());
  return out;
}

Tensor predict_with(const DenoiserModel& model, const Tensor& z_t, int t, const PromptEncoder& encoder,
                    const PromptSpec& prompt) {
  return model.predict_eps(z_t, t, Tensor::row(encoder.encode(prompt)));
}

void require_frozen(const DenoiserModel& model, const PromptEncoder& encoder, const char* op) {
  if (!model.frozen()) throw ContractError(std::string(op) + ": model must be frozen");
  if (model.encoder_hash() != encoder.hash())
    throw CompatibilityError(std::string(op) + ": model was trained against a different prompt encoder");
}

void assert_model_untouched(const DenoiserModel& model) {
  for (const auto& p : model.parameters())
    if (p.has_grad()) throw std::logic_error("frozen model parameter '" + p.name() + "' received a gradient");
}

double draw_alpha(Rng& rng, double lo, double hi) { return lo == hi ? lo : uniform(rng, lo, hi); }

Tensor noised(const Point& x, int t, const NoiseSchedule& sched, Rng& rng, Tensor& eps_out) {
  std::vector<double> eps = standard_normal(rng, 2);
  const double ab = sched.alpha_bar(t);
  Tensor z = Tensor::from({1, 2}, {std::sqrt(ab) * x[0] + std::sqrt(1.0 - ab) * eps[0],
                                   std::sqrt(ab) * x[1] + std::sqrt(1.0 - ab) * eps[1]});
  eps_out = Tensor::from({1, 2}, std::move(eps));
  return z;
}

Tensor make_embedding_param(std::vector<double> init, const std::string& name) {
  const std::size_t d = init.size();
  Tensor s = Tensor::from({d}, std::move(init), true);
  s.set_name(name);
  return s;
}

void check_loss(double value, std::size_t iteration, const char* op) {
  if (!std::isfinite(value))
    throw DivergenceError(std::string(op) + ": non-finite loss at iteration " + std::to_string(iteration),
                          iteration == 0 ? 0 : iteration - 1);
}

std::vector<double> to_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

Tensor compose_target_eps(const DenoiserModel& model, const Tensor& z_t, int t, const ConceptRecipe& recipe,
                          double alpha, double eta, const PromptEncoder& encoder, TargetMode mode, Rng* rng) {
  require_frozen(model, encoder, "compose_target_eps");
  Tensor base = predict_with(model, z_t, t, encoder, recipe.target);

  std::vector<PromptSpec> contexts = recipe.preserve;
  if (contexts.empty()) contexts.emplace_back();
  if (contexts.size() > kFullPreserveSum && rng != nullptr) {
    PromptSpec pick = contexts[uniform_index(*rng, contexts.size())];
    contexts = {std::move(pick)};
  }
  const PromptSpec negative = recipe.negative.value_or(PromptSpec{});
  Tensor diff;
  for (const auto& p : contexts) {
    Tensor term = sub(predict_with(model, z_t, t, encoder, with_context(recipe.positive, p)),
                      predict_with(model, z_t, t, encoder, with_context(negative, p)));
    diff = diff.defined() ? add(diff, term) : term;
  }
  const double signed_alpha = mode == TargetMode::erase ? -alpha : alpha;
  return add(base, scale(diff, signed_alpha * eta)).detach();
}

ConceptSlider train_textual_slider(const DenoiserModel& model, const ToyDataset& data, const ConceptRecipe& recipe,
                                   const SliderTrainConfig& config, const PromptEncoder& encoder,
                                   const NoiseSchedule& sched, const std::string& name) {
  require_frozen(model, encoder, "train_textual_slider");
  config.validate();
  recipe.validate();
  if (encoder.vocabulary().contains(name))
    throw ConfigError("slider token '" + name + "' already exists in the vocabulary");

  std::vector<Point> pool;
  if (config.latent_source == LatentSource::dataset) {
    if (data.size() == 0) throw ConfigError("train_textual_slider: dataset is empty");
    pool = data.points;
  } else {
    SampleRequest req;
    req.prompt = recipe.target;
    req.cfg_scale = 1.0;
    req.n_samples = config.model_sample_pool;
    req.seed = mix_seed(config.seed, 0x9001);
    pool = sample(model, req, encoder, sched);
  }

  ConceptSlider slider;
  slider.name = name;
  slider.kind = SliderKind::textual;
  slider.alpha_min = config.alpha_min;
  slider.alpha_max = config.alpha_max;
  slider.eta = config.eta;
  slider.encoder_hash = encoder.hash();

  Tensor embedding = make_embedding_param(std::vector<double>(encoder.dim(), 0.0), name);
  Tensor params[1] = {embedding};
  OptimizerState opt = OptimizerState::adamw(config.learning_rate, config.weight_decay, config.beta1, config.beta2);
  Rng rng = make_rng(config.seed, 0x51de);
  const int T = sched.steps();
  const double inv_batch = 1.0 / static_cast<double>(config.batch_size);

  for (std::size_t it = 0; it < config.iterations; ++it) {
    Tensor loss;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const Point& x = pool[uniform_index(rng, pool.size())];
      const int t = uniform_int(rng, 1, T);
      Tensor eps;
      Tensor z_t = noised(x, t, sched, rng, eps);
      const double alpha = draw_alpha(rng, config.alpha_min, config.alpha_max);
      Tensor target = compose_target_eps(model, z_t, t, recipe, alpha, config.eta, encoder, TargetMode::enhance, &rng);
      Tensor cond = encoder.encode(recipe.target.with(name, alpha), TensorOverrides{{name, embedding}});
      Tensor term = scale(mse(model.predict_eps(z_t, t, cond), target), inv_batch);
      loss = loss.defined() ? add(loss, term) : term;
    }
    check_loss(loss.item(), it, "train_textual_slider");
    backward(loss);
    assert_model_untouched(model);
    slider.loss_curve.push_back(loss.item());
    optimizer_step(opt, params);
  }
  slider.embedding = to_vector(embedding);
  return slider;
}

ConceptSlider train_visual_slider(const DenoiserModel& model, std::span<const Point> pairs_high,
                                  std::span<const Point> pairs_low, const PromptSpec& target,
                                  const SliderTrainConfig& config, const PromptEncoder& encoder,
                                  const NoiseSchedule& sched, const std::string& name) {
  require_frozen(model, encoder, "train_visual_slider");
  config.validate();
  if (pairs_high.empty() || pairs_low.empty()) throw ConfigError("train_visual_slider: empty pair set");
  if (config.alpha_max < 0.0) throw ConfigError("train_visual_slider: alpha_max must be nonnegative");
  if (encoder.vocabulary().contains(name))
    throw ConfigError("slider token '" + name + "' already exists in the vocabulary");

  ConceptSlider slider;
  slider.name = name;
  slider.kind = SliderKind::visual;
  slider.alpha_min = 0.0;
  slider.alpha_max = config.alpha_max;
  slider.eta = config.eta;
  slider.encoder_hash = encoder.hash();

  Tensor embedding = make_embedding_param(std::vector<double>(encoder.dim(), 0.0), name);
  Tensor params[1] = {embedding};
  OptimizerState opt = OptimizerState::adamw(config.learning_rate, config.weight_decay, config.beta1, config.beta2);
  Rng rng = make_rng(config.seed, 0x7155);
  const int T = sched.steps();
  const double inv_batch = 1.0 / static_cast<double>(config.batch_size);
  const TensorOverrides overrides{{name, embedding}};

  for (std::size_t it = 0; it < config.iterations; ++it) {
    Tensor loss;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const Point& a = pairs_high[uniform_index(rng, pairs_high.size())];
      const Point& bpt = pairs_low[uniform_index(rng, pairs_low.size())];
      const int t = uniform_int(rng, 1, T);
      Tensor eps_a, eps_b;
      Tensor z_a = noised(a, t, sched, rng, eps_a);
      Tensor z_b = noised(bpt, t, sched, rng, eps_b);
      // (0, alpha_max]: strictly positive unless the range is pinned at 0.
      const double alpha = config.alpha_max * (1.0 - uniform(rng, 0.0, 1.0));
      Tensor pred_a = model.predict_eps(z_a, t, encoder.encode(target.with(name, alpha), overrides));
      Tensor pred_b = model.predict_eps(z_b, t, encoder.encode(target.with(name, -alpha), overrides));
      Tensor term = scale(add(mse(eps_a, pred_a), mse(eps_b, pred_b)), inv_batch);
      loss = loss.defined() ? add(loss, term) : term;
    }
    check_loss(loss.item(), it, "train_visual_slider");
    backward(loss);
    assert_model_untouched(model);
    slider.loss_curve.push_back(loss.item());
    optimizer_step(opt, params);
  }
  slider.embedding = to_vector(embedding);
  return slider;
}

ConceptSlider train_erasure(const DenoiserModel& model, const ToyDataset& data, const std::string& target_token,
                            const ConceptRecipe& recipe, const SliderTrainConfig& config,
                            const PromptEncoder& encoder, const NoiseSchedule& sched) {
  require_frozen(model, encoder, "train_erasure");
  config.validate();
  recipe.validate();
  const auto original = encoder.embedding(target_token);  // LookupError for unknown tokens
  if (data.size() == 0) throw ConfigError("train_erasure: dataset is empty");

  PromptSpec prompt = recipe.target;
  if (!prompt.contains(target_token)) prompt = prompt.with(target_token);

  ConceptSlider slider;
  slider.name = "erase_" + target_token;
  slider.kind = SliderKind::erasure;
  slider.target_token = target_token;
  slider.alpha_min = config.alpha_min;
  slider.alpha_max = config.alpha_max;
  slider.eta = config.eta;
  slider.encoder_hash = encoder.hash();

  Tensor embedding = make_embedding_param({original.begin(), original.end()}, target_token);
  Tensor params[1] = {embedding};
  OptimizerState opt = OptimizerState::adamw(config.learning_rate, config.weight_decay, config.beta1, config.beta2);
  Rng rng = make_rng(config.seed, 0xe5a5);
  const int T = sched.steps();
  const double inv_batch = 1.0 / static_cast<double>(config.batch_size);
  const TensorOverrides overrides{{target_token, embedding}};

  for (std::size_t it = 0; it < config.iterations; ++it) {
    Tensor loss;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const Point& x = data.points[uniform_index(rng, data.size())];
      const int t = uniform_int(rng, 1, T);
      Tensor eps;
      Tensor z_t = noised(x, t, sched, rng, eps);
      const double alpha = draw_alpha(rng, config.alpha_min, config.alpha_max);
      Tensor target = compose_target_eps(model, z_t, t, recipe, alpha, config.eta, encoder, TargetMode::erase, &rng);
      Tensor pred = model.predict_eps(z_t, t, encoder.encode(prompt, overrides));
      Tensor term = scale(mse(pred, target), inv_batch);
      loss = loss.defined() ? add(loss, term) : term;
    }
    check_loss(loss.item(), it, "train_erasure");
    backward(loss);
    assert_model_untouched(model);
    slider.loss_curve.push_back(loss.item());
    optimizer_step(opt, params);
  }
  slider.embedding = to_vector(embedding);
  return slider;
}

void check_compatible(const ConceptSlider& slider, const PromptEncoder& encoder) {
  if (slider.dim() != encoder.dim())
    throw CompatibilityError("slider '" + slider.name + "' has dimension " + std::to_string(slider.dim()) +
                             ", encoder has " + std::to_string(encoder.dim()));
  if (slider.encoder_hash != encoder.hash())
    throw CompatibilityError("slider '" + slider.name + "' was trained with encoder " + slider.encoder_hash.hex() +
                             ", not " + encoder.hash().hex());
}

void check_compatible(const ConceptSlider& slider, const DenoiserModel& model) {
  if (slider.dim() != model.cond_dim())
    throw CompatibilityError("slider '" + slider.name + "' has dimension " + std::to_string(slider.dim()) +
                             ", model conditions on " + std::to_string(model.cond_dim()));
  if (slider.encoder_hash != model.encoder_hash())
    throw CompatibilityError("slider '" + slider.name + "' was trained with encoder " + slider.encoder_hash.hex() +
                             ", model uses " + model.encoder_hash().hex());
}

std::size_t count_params(const DenoiserModel& model, std::span<const ConceptSlider> attached) {
  for (const auto& s : attached) check_compatible(s, model);
  return count_params(model);
}

ConditionedPrompt attach_sliders(const PromptSpec& base, std::span<const SliderUse> sliders) {
  ConditionedPrompt out{base, {}};
  for (const auto& use : sliders) {
    const ConceptSlider& s = *use.slider;
    if (s.kind == SliderKind::erasure) {
      out.overrides[s.target_token] = s.embedding;
      continue;
    }
    if (out.overrides.contains(s.name)) throw ConfigError("slider '" + s.name + "' attached twice");
    out.overrides[s.name] = s.embedding;
    out.prompt.entries.push_back({s.name, use.alpha});
  }
  return out;
}

ConceptRecipe toy_recipe(std::string_view concept_name) {
  ConceptRecipe r;
  r.target = PromptSpec::parse("point");
  if (concept_name == "radius") {
    r.positive = PromptSpec::parse("point large_radius");
    r.negative = PromptSpec::parse("point small_radius");
  } else if (concept_name == "angle") {
    r.positive = PromptSpec::parse("point left");
    // "point right" as c- doubles the swing and pushes samples past the
    // upper half-plane at moderate alpha.
    r.negative = PromptSpec::parse("point");
  } else {
    throw LookupError("no built-in recipe for concept '" + std::string(concept_name) + "'");
  }
  return r;
}

}  // namespace psl
