// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>

#include "psl/error.hpp"
#include "psl/random.hpp"
#include "psl/sampler.hpp"
#include "psl/slider.hpp"
#include "support/fixtures.hpp"

using namespace psl;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

Tensor random_z(std::uint64_t seed, std::size_t n = 4) {
  Rng rng = make_rng(seed, 17);
  return Tensor::from({n, 2}, standard_normal(rng, 2 * n));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

class SliderTest : public ::testing::Test {
 protected:
  const check::World& w = check::small_world();
  Tensor base_eps(const Tensor& z, int t, const PromptSpec& p) const {
    return w.model_a.predict_eps(z, t, Tensor::row(w.encoder.encode(p)));
  }
};

}  // namespace

TEST_F(SliderTest, ZeroAlphaTargetIsBasePrediction) {
  auto recipe = toy_recipe("radius");
  for (int t : {1, 30, 100}) {
    Tensor z = random_z(static_cast<std::uint64_t>(t));
    EXPECT_EQ(vals(compose_target_eps(w.model_a, z, t, recipe, 0.0, 1.0, w.encoder)), vals(base_eps(z, t, recipe.target)));
  }
}

TEST_F(SliderTest, EqualPositiveAndNegativeCancel) {
  ConceptRecipe r;
  r.target = PromptSpec::parse("point");
  r.positive = PromptSpec::parse("point left");
  r.negative = r.positive;
  Tensor z = random_z(2);
  for (double a : {0.5, 3.0, -2.0})
    EXPECT_EQ(vals(compose_target_eps(w.model_a, z, 40, r, a, 1.0, w.encoder)), vals(base_eps(z, 40, r.target)));
}

TEST_F(SliderTest, EraseModeIsNegatedAlpha) {
  for (std::uint64_t cfg = 0; cfg < 3; ++cfg) {
    Rng rng = make_rng(cfg, 3);
    ConceptRecipe r = toy_recipe(cfg == 1 ? "angle" : "radius");
    if (cfg == 2) r.preserve = {PromptSpec{}, PromptSpec::parse("wide_spread")};
    const double alpha = uniform(rng, 0.1, 3.0), eta = uniform(rng, 0.2, 2.0);
    const int t = uniform_int(rng, 1, 100);
    Tensor z = random_z(cfg + 10);
    auto erase = compose_target_eps(w.model_a, z, t, r, alpha, eta, w.encoder, TargetMode::erase);
    auto enhance = compose_target_eps(w.model_a, z, t, r, -alpha, eta, w.encoder, TargetMode::enhance);
    EXPECT_EQ(vals(erase), vals(enhance));
  }
}

TEST_F(SliderTest, TargetCarriesNoGradientPath) {
  Tensor s = Tensor::from({32}, std::vector<double>(32, 0.3), true);
  auto recipe = toy_recipe("radius");
  Tensor z = random_z(5, 1);
  Tensor target = compose_target_eps(w.model_a, z, 50, recipe, 2.0, 1.0, w.encoder);
  EXPECT_FALSE(target.requires_grad());
  Tensor cond = w.encoder.encode(recipe.target.with("s", 2.0), TensorOverrides{{"s", s}});
  backward(mse(w.model_a.predict_eps(z, 50, cond), target));
  ASSERT_TRUE(s.has_grad());
  // Gradient of the target alone with respect to S is identically zero.
  s.zero_grad();
  backward(sum(target));
  for (double g : s.grad()) EXPECT_EQ(g, 0.0);
}

TEST_F(SliderTest, PreservationSetSumsEveryContext) {
  ConceptRecipe r = toy_recipe("radius");
  r.preserve = {PromptSpec{}, PromptSpec::parse("left")};
  Tensor z = random_z(6);
  const int t = 35;
  Tensor got = compose_target_eps(w.model_a, z, t, r, 1.5, 0.5, w.encoder);
  Tensor expect = base_eps(z, t, r.target);
  for (const auto& p : r.preserve) {
    PromptSpec pos = r.positive, neg = *r.negative;
    for (const auto& e : p.entries) {
      pos = pos.with(e.token, e.weight);
      neg = neg.with(e.token, e.weight);
    }
    expect = add(expect, scale(sub(base_eps(z, t, pos), base_eps(z, t, neg)), 0.75));
  }
  for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got.values()[i], expect.values()[i], 1e-12);
}

TEST_F(SliderTest, LargePreservationSetSamplesOneContext) {
  ConceptRecipe r = toy_recipe("radius");
  r.preserve = {PromptSpec{}, PromptSpec::parse("left"), PromptSpec::parse("right"), PromptSpec::parse("wide_spread"),
                PromptSpec::parse("left wide_spread")};
  Tensor z = random_z(7);
  Rng rng = make_rng(1);
  Tensor got = compose_target_eps(w.model_a, z, 20, r, 1.0, 1.0, w.encoder, TargetMode::enhance, &rng);
  bool matched = false;
  for (const auto& p : r.preserve) {
    ConceptRecipe single = r;
    single.preserve = {p};
    auto v = vals(compose_target_eps(w.model_a, z, 20, single, 1.0, 1.0, w.encoder));
    matched = matched || v == vals(got);
  }
  EXPECT_TRUE(matched);
}

TEST_F(SliderTest, ZeroIterationsKeepInitialEmbedding) {
  SliderTrainConfig c;
  c.iterations = 0;
  auto s = train_textual_slider(w.model_a, w.data, toy_recipe("radius"), c, w.encoder, w.sched, "radius_slider");
  EXPECT_EQ(s.embedding, std::vector<double>(32, 0.0));
  EXPECT_TRUE(s.loss_curve.empty());
  EXPECT_EQ(s.encoder_hash, w.encoder.hash());
  auto e = train_erasure(w.model_a, w.data, "left", toy_recipe("angle"), c, w.encoder, w.sched);
  auto orig = w.encoder.embedding("left");
  EXPECT_EQ(e.embedding, std::vector<double>(orig.begin(), orig.end()));
}

TEST_F(SliderTest, TrainingMovesOnlyTheEmbedding) {
  const auto model_digest = w.model_a.parameter_digest();
  const auto enc_hash = w.encoder.hash();
  const auto table = std::vector<double>(w.encoder.table().begin(), w.encoder.table().end());
  SliderTrainConfig c;
  auto s = train_textual_slider(w.model_a, w.data, toy_recipe("radius"), c, w.encoder, w.sched, "radius_slider");
  ASSERT_EQ(s.loss_curve.size(), 3000u);
  const std::size_t tenth = s.loss_curve.size() / 10;
  const double first = median({s.loss_curve.begin(), s.loss_curve.begin() + static_cast<long>(tenth)});
  const double last = median({s.loss_curve.end() - static_cast<long>(tenth), s.loss_curve.end()});
  EXPECT_LT(last, first);
  EXPECT_NE(s.embedding, std::vector<double>(32, 0.0));
  EXPECT_EQ(w.model_a.parameter_digest(), model_digest);
  EXPECT_EQ(w.encoder.hash(), enc_hash);
  EXPECT_EQ(std::vector<double>(w.encoder.table().begin(), w.encoder.table().end()), table);
  for (const auto& p : w.model_a.parameters()) EXPECT_FALSE(p.has_grad());
}

TEST_F(SliderTest, TrainingIsDeterministic) {
  SliderTrainConfig c;
  c.iterations = 100;
  auto a = train_textual_slider(w.model_a, w.data, toy_recipe("angle"), c, w.encoder, w.sched, "angle_slider");
  auto b = train_textual_slider(w.model_a, w.data, toy_recipe("angle"), c, w.encoder, w.sched, "angle_slider");
  EXPECT_EQ(a.embedding, b.embedding);
  EXPECT_EQ(a.loss_curve, b.loss_curve);
}

TEST_F(SliderTest, ModelSampledLatents) {
  SliderTrainConfig c;
  c.iterations = 50;
  c.latent_source = LatentSource::model_sampled;
  c.model_sample_pool = 32;
  auto s = train_textual_slider(w.model_a, ToyDataset{}, toy_recipe("radius"), c, w.encoder, w.sched, "r");
  EXPECT_EQ(s.loss_curve.size(), 50u);
}

TEST_F(SliderTest, ConfigurationErrors) {
  SliderTrainConfig c;
  c.iterations = 1;
  EXPECT_THROW(train_textual_slider(w.model_a, w.data, toy_recipe("radius"), c, w.encoder, w.sched, "left"),
               ConfigError);
  ConceptRecipe same = toy_recipe("radius");
  same.negative = same.positive;
  EXPECT_THROW(train_textual_slider(w.model_a, w.data, same, c, w.encoder, w.sched, "s"), ConfigError);
  SliderTrainConfig bad = c;
  bad.alpha_min = 2.0;
  bad.alpha_max = 1.0;
  EXPECT_THROW(train_textual_slider(w.model_a, w.data, toy_recipe("radius"), bad, w.encoder, w.sched, "s"),
               ConfigError);
  std::vector<Point> none;
  auto pairs = split_by_radius(w.data, 1.5, 0.5);
  EXPECT_THROW(train_visual_slider(w.model_a, none, pairs.low, PromptSpec::parse("point"), c, w.encoder, w.sched, "v"),
               ConfigError);
  EXPECT_THROW(train_erasure(w.model_a, w.data, "purple", toy_recipe("radius"), c, w.encoder, w.sched), LookupError);
  EXPECT_THROW(toy_recipe("colour"), LookupError);
  auto fresh = DenoiserModel::build(Arch::model_a, w.encoder, 100, 3);
  EXPECT_THROW(train_textual_slider(fresh, w.data, toy_recipe("radius"), c, w.encoder, w.sched, "s"), ContractError);
}

TEST_F(SliderTest, VisualSliderWithZeroAlphaStaysAtZero) {
  SliderTrainConfig c;
  c.iterations = 100;
  c.alpha_max = 0.0;
  auto pairs = split_by_radius(w.data, 1.5, 0.5);
  auto s = train_visual_slider(w.model_a, pairs.high, pairs.low, PromptSpec::parse("point"), c, w.encoder, w.sched,
                               "v");
  EXPECT_EQ(s.kind, SliderKind::visual);
  EXPECT_EQ(s.embedding, std::vector<double>(32, 0.0));
}

TEST_F(SliderTest, AttachSliders) {
  ConceptSlider t;
  t.name = "radius_slider";
  t.embedding.assign(32, 0.1);
  ConceptSlider e;
  e.name = "erase_left";
  e.kind = SliderKind::erasure;
  e.target_token = "left";
  e.embedding.assign(32, -0.2);
  SliderUse uses[] = {{&t, 2.5}, {&e, 1.0}};
  auto cp = attach_sliders(PromptSpec::parse("point left"), uses);
  EXPECT_EQ(cp.prompt.to_string(), "point left radius_slider:2.5");
  EXPECT_EQ(cp.overrides.at("radius_slider"), t.embedding);
  EXPECT_EQ(cp.overrides.at("left"), e.embedding);
}

TEST_F(SliderTest, ErasureLeavesOtherPromptsByteIdentical) {
  SliderTrainConfig c;
  c.iterations = 50;
  c.alpha_min = c.alpha_max = 1.0;
  ConceptRecipe r;
  r.target = PromptSpec::parse("point large_radius");
  r.positive = r.target;
  auto e = train_erasure(w.model_a, w.data, "large_radius", r, c, w.encoder, w.sched);
  SliderUse use{&e, 1.0};
  auto cp = attach_sliders(PromptSpec::parse("point left"), std::span(&use, 1));
  SampleRequest with, without;
  with.prompt = cp.prompt;
  with.overrides = cp.overrides;
  without.prompt = PromptSpec::parse("point left");
  with.n_samples = without.n_samples = 50;
  EXPECT_EQ(sample(w.model_a, with, w.encoder, w.sched), sample(w.model_a, without, w.encoder, w.sched));
}

TEST_F(SliderTest, CompatibilityChecks) {
  ConceptSlider s;
  s.name = "s";
  s.embedding.assign(16, 0.0);
  s.encoder_hash = w.encoder.hash();
  EXPECT_THROW(check_compatible(s, w.encoder), CompatibilityError);
  s.embedding.assign(32, 0.0);
  EXPECT_NO_THROW(check_compatible(s, w.encoder));
  EXPECT_NO_THROW(check_compatible(s, w.model_a));
  s.encoder_hash = EncoderHash{s.encoder_hash.value ^ 1};
  EXPECT_THROW(check_compatible(s, w.model_a), CompatibilityError);
}
