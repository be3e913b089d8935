// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include "psl/dataset.hpp"
#include "psl/encoder.hpp"
#include "psl/error.hpp"
#include "psl/random.hpp"

using namespace psl;

namespace {

PromptEncoder toy_encoder(std::uint64_t seed = 7) { return PromptEncoder::build(toy_vocabulary(32), seed); }

std::vector<double> slider_vec(std::size_t d, std::uint64_t seed) {
  Rng rng = make_rng(seed, 99);
  return standard_normal(rng, d);
}

}  // namespace

TEST(Vocabulary, Validation) {
  EXPECT_THROW(Vocabulary({"point"}, 8), ConfigError);
  EXPECT_THROW(Vocabulary({"<null>", "a", "a"}, 8), ConfigError);
  EXPECT_THROW(Vocabulary({"<null>", "a b"}, 8), ConfigError);
  EXPECT_THROW(Vocabulary({"<null>", "a:2"}, 8), ConfigError);
  EXPECT_THROW(Vocabulary({"<null>", "a"}, 1), ConfigError);
  Vocabulary v({"<null>", "a", "b"}, 8);
  EXPECT_EQ(v.index_of("b"), 2u);
  EXPECT_FALSE(v.contains("c"));
}

TEST(Vocabulary, SaveLoadRoundTrip) {
  auto path = std::filesystem::temp_directory_path() / "psl_vocab_test.txt";
  Vocabulary v = toy_vocabulary(16);
  v.save(path);
  Vocabulary back = Vocabulary::load(path, 16);
  EXPECT_EQ(back.tokens(), v.tokens());
  std::filesystem::remove(path);
}

TEST(PromptSpec, ParseAndPrint) {
  PromptSpec p = PromptSpec::parse("point  large_radius slider:2.5");
  ASSERT_EQ(p.entries.size(), 3u);
  EXPECT_EQ(p.entries[2].token, "slider");
  EXPECT_EQ(p.entries[2].weight, 2.5);
  EXPECT_EQ(PromptSpec::parse(p.to_string()), p);
  EXPECT_EQ(p.to_string(), "point large_radius slider:2.5");
  EXPECT_THROW(PromptSpec::parse("slider:abc"), ConfigError);
  EXPECT_THROW(PromptSpec::parse(":1"), ConfigError);
  EXPECT_TRUE(PromptSpec::parse("   ").empty());
}

TEST(Encoder, NullPromptEncodesToZero) {
  auto enc = toy_encoder();
  auto empty = enc.encode(PromptSpec{});
  auto null = enc.encode(PromptSpec::parse("<null>"));
  ASSERT_EQ(empty.size(), 32u);
  EXPECT_EQ(empty, null);
  for (double v : empty) EXPECT_EQ(v, 0.0);
}

TEST(Encoder, HashIsDeterministic) {
  EXPECT_EQ(toy_encoder(3).hash(), toy_encoder(3).hash());
  EXPECT_EQ(encoder_hash(toy_encoder(3)), toy_encoder(3).hash());
}

TEST(EncoderProperty, DistinctSeedsGiveDistinctHashes) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t seed = 0; seed < 100; ++seed) seen.insert(toy_encoder(seed).hash().value);
  EXPECT_EQ(seen.size(), 100u);
}

TEST(Encoder, ByteFlipChangesHash) {
  auto enc = toy_encoder();
  std::vector<double> table(enc.table().begin(), enc.table().end());
  std::vector<double> mixing(enc.mixing().begin(), enc.mixing().end());
  EXPECT_EQ(PromptEncoder::digest(enc.vocabulary(), table, mixing), enc.hash());
  auto* bytes = reinterpret_cast<unsigned char*>(&table[40]);
  bytes[3] ^= 0x01;
  EXPECT_NE(PromptEncoder::digest(enc.vocabulary(), table, mixing), enc.hash());
}

TEST(Encoder, ZeroWeightSliderIsInert) {
  auto enc = toy_encoder();
  EmbeddingOverrides ov{{"slider", slider_vec(32, 1)}};
  auto base = PromptSpec::parse("point left");
  EXPECT_EQ(enc.encode(base.with("slider", 0.0), ov), enc.encode(base));
}

TEST(EncoderProperty, LinearInSliderWeight) {
  auto enc = toy_encoder();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EmbeddingOverrides ov{{"slider", slider_vec(32, seed)}};
    auto base = PromptSpec::parse("point small_radius");
    auto e0 = enc.encode(base.with("slider", 0.0), ov);
    auto e1 = enc.encode(base.with("slider", 1.0), ov);
    auto e2 = enc.encode(base.with("slider", 2.0), ov);
    for (std::size_t i = 0; i < 32; ++i) EXPECT_NEAR(e2[i] - e0[i], 2.0 * (e1[i] - e0[i]), 1e-9);
  }
}

TEST(Encoder, SelfOverrideIsIdentity) {
  auto enc = toy_encoder();
  auto emb = enc.embedding("left");
  EmbeddingOverrides ov{{"left", std::vector<double>(emb.begin(), emb.end())}};
  auto p = PromptSpec::parse("point left");
  EXPECT_EQ(enc.encode(p, ov), enc.encode(p));
}

TEST(Encoder, UnknownTokenNamesToken) {
  auto enc = toy_encoder();
  try {
    enc.encode(PromptSpec::parse("point purple"));
    FAIL() << "expected LookupError";
  } catch (const LookupError& e) {
    EXPECT_NE(std::string(e.what()).find("purple"), std::string::npos);
  }
}

TEST(Encoder, TensorEncodingMatchesAndOnlyOverridesGetGradients) {
  auto enc = toy_encoder();
  auto v = slider_vec(32, 4);
  Tensor s = Tensor::from({32}, v, true);
  auto p = PromptSpec::parse("point slider:1.5");
  Tensor c = enc.encode(p, TensorOverrides{{"slider", s}});
  auto plain = enc.encode(p, EmbeddingOverrides{{"slider", v}});
  ASSERT_EQ(c.shape(), (Shape{1, 32}));
  for (std::size_t i = 0; i < 32; ++i) EXPECT_NEAR(c.values()[i], plain[i], 1e-12);
  const auto table_before = std::vector<double>(enc.table().begin(), enc.table().end());
  backward(sum(c));
  ASSERT_TRUE(s.has_grad());
  // d/dS sum(w * S * M) = w * row sums of M.
  for (std::size_t r = 0; r < 32; ++r) {
    double row = 0.0;
    for (std::size_t k = 0; k < 32; ++k) row += enc.mixing()[r * 32 + k];
    EXPECT_NEAR(s.grad()[r], 1.5 * row, 1e-12);
  }
  EXPECT_EQ(std::vector<double>(enc.table().begin(), enc.table().end()), table_before);
}

TEST(Encoder, TableRowsHaveExpectedScale) {
  auto enc = PromptEncoder::build(Vocabulary({"<null>", "a", "b", "c"}, 256), 5);
  double ss = 0.0;
  for (std::size_t i = 256; i < 4 * 256; ++i) ss += enc.table()[i] * enc.table()[i];
  EXPECT_NEAR(ss / 3.0, 1.0, 0.2);
}
