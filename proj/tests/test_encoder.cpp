// Copyright (C) 2026 The MVP Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "mvp/encoder.hpp"

using namespace mvp;

namespace {

Matrix test_image(int size, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(static_cast<std::size_t>(size), static_cast<std::size_t>(size));
  for (double& x : m.values()) x = rng.uniform();
  return m;
}

double row_norm(const Matrix& m, std::size_t r) { return l2_norm(m.row(r)); }

}  // namespace

TEST(EncoderConfig, Validation) {
  EncoderConfig c;
  EXPECT_NO_THROW(c.validate());
  c.patch_size = 15;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = EncoderConfig{};
  c.key_layers = {2, 2};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.key_layers = {0};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.key_layers = {9};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.key_layers = {};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = EncoderConfig{};
  c.dim = 30;  // not a multiple of 4 heads
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Tokenizer, KnownAndUnknownWords) {
  const auto ids = Tokenizer::encode_words("Perfect  bagel zzz");
  ASSERT_EQ(ids.size(), 3u);
  EXPECT_EQ(Tokenizer::vocabulary()[static_cast<std::size_t>(ids[0])], "perfect");
  EXPECT_EQ(Tokenizer::vocabulary()[static_cast<std::size_t>(ids[1])], "bagel");
  EXPECT_EQ(ids[2], Tokenizer::kUnk);
  EXPECT_TRUE(Tokenizer::encode_words("   ").empty());
}

TEST(Backbone, DeterministicFromSeed) {
  EncoderConfig c;
  const FrozenBackbone a(c, 7), b(c, 7), d(c, 8);
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_NE(a.fingerprint(), d.fingerprint());
  EXPECT_EQ(a.patch_embed(), b.patch_embed());
}

TEST(EncodeImage, GridShapes) {
  EncoderConfig c;
  const FrozenBackbone bb(c, 1);
  const auto p = PromptSet::initialize(c, 2);
  const auto enc = encode_image(test_image(64, 3), bb, p.visual);
  EXPECT_EQ(enc.grid, 4);
  ASSERT_EQ(enc.key_layer_maps.size(), c.key_layers.size());
  for (const auto& m : enc.key_layer_maps) {
    EXPECT_EQ(m.rows(), 16u);
    EXPECT_EQ(m.cols(), 64u);
  }
  EXPECT_EQ(enc.class_token.size(), 64u);
  EXPECT_NEAR(l2_norm(enc.class_token), 1.0, 1e-12);
}

TEST(EncodeImage, PureAndFinite) {
  EncoderConfig c;
  const FrozenBackbone bb(c, 1);
  const auto p = PromptSet::initialize(c, 2);
  const auto img = test_image(64, 4);
  const auto a = encode_image(img, bb, p.visual);
  const auto b = encode_image(img, bb, p.visual);
  EXPECT_EQ(a.class_token, b.class_token);
  for (std::size_t l = 0; l < a.key_layer_maps.size(); ++l) EXPECT_EQ(a.key_layer_maps[l], b.key_layer_maps[l]);
  const auto z = encode_image(img, bb, p.zeros_like().visual);
  for (const auto& m : z.key_layer_maps)
    for (double x : m.values()) EXPECT_TRUE(std::isfinite(x));
  // Zero prompt tokens still take part in attention, so the output moves.
  EXPECT_NE(z.key_layer_maps.back(), a.key_layer_maps.back());
}

TEST(EncodeImage, FiniteOnExtremeInputs) {
  EncoderConfig c;
  const FrozenBackbone bb(c, 1);
  const auto p = PromptSet::initialize(c, 2);
  for (double v : {0.0, 1.0}) {
    const auto enc = encode_image(Matrix(64, 64, v), bb, p.visual);
    for (const auto& m : enc.key_layer_maps)
      for (double x : m.values()) EXPECT_TRUE(std::isfinite(x));
  }
}

TEST(EncodeImage, ShapeMismatch) {
  EncoderConfig c;
  const FrozenBackbone bb(c, 1);
  const auto p = PromptSet::initialize(c, 2);
  EXPECT_THROW(encode_image(Matrix(32, 32, 0.5), bb, p.visual), std::invalid_argument);
}

TEST(EncodeImage, PromptLocality) {
  EncoderConfig c;
  const FrozenBackbone bb(c, 1);
  const auto p = PromptSet::initialize(c, 2);
  const auto img = test_image(64, 5);
  const auto base = encode_image(img, bb, p.visual);
  for (std::size_t j = 0; j < c.key_layers.size(); ++j) {
    auto q = p;
    q.visual.tokens[c.key_layers[j]](0, 3) += 0.5;
    const auto moved = encode_image(img, bb, q.visual);
    for (std::size_t l = 0; l < c.key_layers.size(); ++l) {
      if (l < j) {
        EXPECT_EQ(moved.key_layer_maps[l], base.key_layer_maps[l]) << "layer " << c.key_layers[l];
      } else {
        EXPECT_NE(moved.key_layer_maps[l], base.key_layer_maps[l]) << "layer " << c.key_layers[l];
      }
    }
  }
}

TEST(TextPrompts, SequenceLayout) {
  EncoderConfig c;
  const FrozenBackbone bb(c, 1);
  auto p = PromptSet::initialize(c, 2);
  p.text.class_name = "bagel";
  const auto [n, a] = build_text_prompts(p.text, bb);
  EXPECT_EQ(n.rows(), 16u);
  EXPECT_EQ(a.rows(), 16u);
  for (std::size_t r = 0; r < 9; ++r)
    for (std::size_t k = 0; k < n.cols(); ++k) EXPECT_EQ(n(r, k), a(r, k));
  bool differs = false;
  for (std::size_t r = 9; r < 13; ++r)
    for (std::size_t k = 0; k < n.cols(); ++k) differs = differs || n(r, k) != a(r, k);
  EXPECT_TRUE(differs);
  // Union rows are the stored union prompts.
  for (std::size_t k = 0; k < n.cols(); ++k) EXPECT_EQ(n(1, k), p.text.union_prompts(0, k));
}

TEST(TextPrompts, OverflowIsAnError) {
  EncoderConfig c;
  c.text_len = 15;
  const FrozenBackbone bb(c, 1);
  auto p = PromptSet::initialize(c, 2);
  p.text.class_name = "bagel";
  EXPECT_THROW(encode_text_prompts(p.text, bb), std::invalid_argument);
  EXPECT_THROW(naive_prompt_sequence("perfect", "a b c d e f g h i j k l m n o", bb), std::invalid_argument);
}

TEST(TextPrompts, DegenerateEqualsNaivePrompt) {
  EncoderConfig c;
  c.n_union = 0;
  c.n_specific = 0;
  const FrozenBackbone bb(c, 3);
  const auto p = PromptSet::initialize(c, 4);
  const auto te = encode_text_prompts(p.text, "bagel", bb);
  const auto naive_n = encode_text(naive_prompt_sequence("perfect", "bagel", bb), bb);
  const auto naive_a = encode_text(naive_prompt_sequence("damaged", "bagel", bb), bb);
  for (std::size_t k = 0; k < naive_n.size(); ++k) {
    EXPECT_EQ(te.features(0, k), naive_n[k]);
    EXPECT_EQ(te.features(1, k), naive_a[k]);
  }
}

TEST(EncodeText, PureAndUnitNorm) {
  EncoderConfig c;
  const FrozenBackbone bb(c, 1);
  const auto seq = naive_prompt_sequence("perfect", "object", bb);
  const auto a = encode_text(seq, bb);
  const auto b = encode_text(seq, bb);
  EXPECT_EQ(a, b);
  EXPECT_NEAR(l2_norm(a), 1.0, 1e-6);
  const auto te = encode_text_prompts(PromptSet::initialize(c, 2).text, bb);
  EXPECT_NEAR(row_norm(te.features, 0), 1.0, 1e-6);
  EXPECT_NEAR(row_norm(te.features, 1), 1.0, 1e-6);
}

TEST(EncodeText, SwappingStatePromptsSwapsRows) {
  EncoderConfig c;
  const FrozenBackbone bb(c, 1);
  auto p = PromptSet::initialize(c, 2);
  const auto te = encode_text_prompts(p.text, bb);
  // The state word is part of each prompt, so it travels with its specific block.
  std::swap(p.text.normal_specific, p.text.abnormal_specific);
  std::swap(p.text.state_words.first, p.text.state_words.second);
  const auto sw = encode_text_prompts(p.text, bb);
  for (std::size_t k = 0; k < te.features.cols(); ++k) {
    EXPECT_EQ(sw.features(0, k), te.features(1, k));
    EXPECT_EQ(sw.features(1, k), te.features(0, k));
  }
}

TEST(EncodeText, EmptyAndLongSequences) {
  EncoderConfig c;
  const FrozenBackbone bb(c, 1);
  EXPECT_THROW(encode_text(Matrix(0, 64), bb), std::invalid_argument);
  EXPECT_THROW(encode_text(Matrix(33, 64, 0.1), bb), std::invalid_argument);
}

TEST(PromptSet, ShapesAndCounts) {
  EncoderConfig c;
  const auto p = PromptSet::initialize(c, 9);
  EXPECT_NO_THROW(p.validate(c));
  EXPECT_EQ(p.parameter_count(), static_cast<std::size_t>((8 + 4 + 4 + 4) * 64));
  EXPECT_EQ(p.tensors().size(), 3u + 4u);
  auto bad = p;
  bad.visual.tokens.erase(2);
  EXPECT_THROW(bad.validate(c), std::invalid_argument);
  bad = p;
  bad.text.union_prompts(0, 0) = std::nan("");
  EXPECT_THROW(bad.validate(c), std::invalid_argument);
}
