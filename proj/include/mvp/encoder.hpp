// Copyright (C) 2026 The MVP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mvp/autodiff.hpp"
#include "mvp/linalg.hpp"
#include "mvp/random.hpp"

namespace mvp {

struct EncoderConfig {
  int image_size = 64;
  int patch_size = 16;
  int n_layers = 8;
  int n_heads = 4;
  int dim = 64;
  std::vector<int> key_layers{2, 4, 6, 8};  // 1-based, strictly increasing
  int prompt_tokens_per_key_layer = 1;
  int n_union = 8;
  int n_specific = 4;
  int text_len = 32;
  int text_layers = 4;
  int mlp_ratio = 4;

  int grid() const { return image_size / patch_size; }
  int patches() const { return grid() * grid(); }

  bool is_key_layer(int layer) const {
    return std::find(key_layers.begin(), key_layers.end(), layer) != key_layers.end();
  }

  void validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("encoder config: " + msg); };
    if (image_size <= 0 || patch_size <= 0) fail("image and patch size must be positive");
    if (image_size % patch_size != 0) fail("image_size must be divisible by patch_size");
    if (n_layers < 1 || text_layers < 1) fail("layer counts must be at least 1");
    if (dim < 1 || n_heads < 1 || dim % n_heads != 0) fail("dim must be a positive multiple of n_heads");
    if (key_layers.empty()) fail("at least one key layer is required");
    for (std::size_t i = 0; i < key_layers.size(); ++i) {
      if (key_layers[i] < 1 || key_layers[i] > n_layers) fail("key layer out of range");
      if (i > 0 && key_layers[i] <= key_layers[i - 1]) fail("key layers must be strictly increasing");
    }
    if (prompt_tokens_per_key_layer < 0 || n_union < 0 || n_specific < 0) fail("prompt counts must be >= 0");
    if (text_len < 2) fail("text_len must hold at least BOS and EOS");
    if (mlp_ratio < 1) fail("mlp_ratio must be at least 1");
  }
};

/// Whitespace tokenizer over a fixed vocabulary; unknown words map to <unk>.
class Tokenizer {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;

  static const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> vocab = {
        "<bos>", "<eos>", "<unk>", "a", "photo", "of", "the", "an", "object", "point", "cloud", "depth", "image",
        "perfect", "damaged", "normal", "abnormal", "good", "flawless", "defective", "broken", "sphere", "box",
        "cylinder", "torus", "cone", "bagel", "cable", "gland", "carrot", "cookie", "dowel", "foam", "peach",
        "potato", "rope", "tire", "airplane", "candybar", "car", "chicken", "diamond", "duck", "fish", "gemstone",
        "seahorse", "shell", "starfish", "toffees", "with", "bump", "dent", "hole", "flash", "part", "plastic"};
    return vocab;
  }

  static std::size_t size() { return vocabulary().size(); }

  static std::vector<int> encode_words(const std::string& text) {
    std::vector<int> ids;
    std::istringstream in(text);
    std::string word;
    const auto& vocab = vocabulary();
    while (in >> word) {
      std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::tolower(c); });
      auto it = std::find(vocab.begin() + 3, vocab.end(), word);
      ids.push_back(it == vocab.end() ? kUnk : static_cast<int>(it - vocab.begin()));
    }
    return ids;
  }
};

struct BlockWeights {
  Matrix ln1_gain, ln1_bias;
  Matrix wq, wk, wv, wo;
  Matrix bq, bk, bv, bo;
  Matrix ln2_gain, ln2_bias;
  Matrix w1, b1, w2, b2;
};

/// Randomly initialized, never-trained transformer weights for both encoders.
/// Rebuilt bit-identically from (config, seed).
class FrozenBackbone {
 public:
  FrozenBackbone(const EncoderConfig& config, std::uint64_t seed) : config_(config), seed_(seed) {
    config_.validate();
    Rng rng(seed);
    const auto d = static_cast<std::size_t>(config_.dim);
    const auto pp = static_cast<std::size_t>(config_.patch_size * config_.patch_size);
    const auto tokens = static_cast<std::size_t>(config_.patches() + 1);

    patch_embed_ = gaussian(rng, pp, d, 1.0 / std::sqrt(static_cast<double>(pp)));
    patch_bias_ = Matrix(1, d, 0.0);
    class_embed_ = gaussian(rng, 1, d, 0.1);
    image_pos_ = gaussian(rng, tokens, d, 0.1);
    ln_pre_gain_ = Matrix(1, d, 1.0);
    ln_pre_bias_ = Matrix(1, d, 0.0);
    for (int l = 0; l < config_.n_layers; ++l) image_blocks_.push_back(make_block(rng));
    ln_post_gain_ = Matrix(1, d, 1.0);
    ln_post_bias_ = Matrix(1, d, 0.0);
    image_proj_ = gaussian(rng, d, d, 1.0 / std::sqrt(static_cast<double>(d)));

    token_embed_ = gaussian(rng, Tokenizer::size(), d, 0.02);
    text_pos_ = gaussian(rng, static_cast<std::size_t>(config_.text_len), d, 0.01);
    for (int l = 0; l < config_.text_layers; ++l) text_blocks_.push_back(make_block(rng));
    ln_final_gain_ = Matrix(1, d, 1.0);
    ln_final_bias_ = Matrix(1, d, 0.0);
    text_proj_ = gaussian(rng, d, d, 1.0 / std::sqrt(static_cast<double>(d)));
  }

  const EncoderConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }

  const Matrix& patch_embed() const { return patch_embed_; }
  const Matrix& patch_bias() const { return patch_bias_; }
  const Matrix& class_embed() const { return class_embed_; }
  const Matrix& image_pos() const { return image_pos_; }
  const Matrix& ln_pre_gain() const { return ln_pre_gain_; }
  const Matrix& ln_pre_bias() const { return ln_pre_bias_; }
  const std::vector<BlockWeights>& image_blocks() const { return image_blocks_; }
  const Matrix& ln_post_gain() const { return ln_post_gain_; }
  const Matrix& ln_post_bias() const { return ln_post_bias_; }
  const Matrix& image_proj() const { return image_proj_; }
  const Matrix& token_embed() const { return token_embed_; }
  const Matrix& text_pos() const { return text_pos_; }
  const std::vector<BlockWeights>& text_blocks() const { return text_blocks_; }
  const Matrix& ln_final_gain() const { return ln_final_gain_; }
  const Matrix& ln_final_bias() const { return ln_final_bias_; }
  const Matrix& text_proj() const { return text_proj_; }

  /// Hash over every weight; constant for the lifetime of a backbone.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const Matrix& m) { h = fnv1a(m.data(), m.size() * sizeof(double), h); };
    auto mix_block = [&mix](const BlockWeights& b) {
      for (const Matrix* m : {&b.ln1_gain, &b.ln1_bias, &b.wq, &b.wk, &b.wv, &b.wo, &b.bq, &b.bk, &b.bv, &b.bo,
                              &b.ln2_gain, &b.ln2_bias, &b.w1, &b.b1, &b.w2, &b.b2})
        mix(*m);
    };
    for (const Matrix* m : {&patch_embed_, &patch_bias_, &class_embed_, &image_pos_, &ln_pre_gain_, &ln_pre_bias_})
      mix(*m);
    for (const auto& b : image_blocks_) mix_block(b);
    for (const Matrix* m : {&ln_post_gain_, &ln_post_bias_, &image_proj_, &token_embed_, &text_pos_}) mix(*m);
    for (const auto& b : text_blocks_) mix_block(b);
    for (const Matrix* m : {&ln_final_gain_, &ln_final_bias_, &text_proj_}) mix(*m);
    return h;
  }

  /// Embedding rows for the given token ids.
  Matrix embed_tokens(const std::vector<int>& ids) const {
    const auto d = static_cast<std::size_t>(config_.dim);
    Matrix out(ids.size(), d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto src = token_embed_.row(static_cast<std::size_t>(ids[i]));
      std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
  }

 private:
  static Matrix gaussian(Rng& rng, std::size_t r, std::size_t c, double stddev) {
    Matrix m(r, c);
    for (double& x : m.values()) x = rng.normal(0.0, stddev);
    return m;
  }

  BlockWeights make_block(Rng& rng) const {
    const auto d = static_cast<std::size_t>(config_.dim);
    const auto hidden = d * static_cast<std::size_t>(config_.mlp_ratio);
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    BlockWeights b;
    b.ln1_gain = Matrix(1, d, 1.0);
    b.ln1_bias = Matrix(1, d, 0.0);
    b.wq = gaussian(rng, d, d, s);
    b.wk = gaussian(rng, d, d, s);
    b.wv = gaussian(rng, d, d, s);
    b.wo = gaussian(rng, d, d, 0.5 * s);
    b.bq = Matrix(1, d, 0.0);
    b.bk = Matrix(1, d, 0.0);
    b.bv = Matrix(1, d, 0.0);
    b.bo = Matrix(1, d, 0.0);
    b.ln2_gain = Matrix(1, d, 1.0);
    b.ln2_bias = Matrix(1, d, 0.0);
    b.w1 = gaussian(rng, d, hidden, s);
    b.b1 = Matrix(1, hidden, 0.0);
    b.w2 = gaussian(rng, hidden, d, 0.5 / std::sqrt(static_cast<double>(hidden)));
    b.b2 = Matrix(1, d, 0.0);
    return b;
  }

  EncoderConfig config_;
  std::uint64_t seed_;
  Matrix patch_embed_, patch_bias_, class_embed_, image_pos_, ln_pre_gain_, ln_pre_bias_;
  std::vector<BlockWeights> image_blocks_;
  Matrix ln_post_gain_, ln_post_bias_, image_proj_;
  Matrix token_embed_, text_pos_;
  std::vector<BlockWeights> text_blocks_;
  Matrix ln_final_gain_, ln_final_bias_, text_proj_;
};

/// Learnable tokens appended to the input of each key layer.
struct VisualPromptBank {
  std::map<int, Matrix> tokens;  // key layer -> (prompt_tokens x dim)
};

/// Learnable text context: union prompts shared by both states plus one
/// specific block per state.
struct TextPromptBank {
  Matrix union_prompts;     // n_union x dim
  Matrix normal_specific;   // n_specific x dim
  Matrix abnormal_specific; // n_specific x dim
  std::pair<std::string, std::string> state_words{"perfect", "damaged"};
  std::string class_name = "object";
};

struct PromptSet {
  VisualPromptBank visual;
  TextPromptBank text;

  /// Small Gaussian initialization, reproducible from the seed.
  static PromptSet initialize(const EncoderConfig& config, std::uint64_t seed, double stddev = 0.02) {
    config.validate();
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const auto d = static_cast<std::size_t>(config.dim);
    auto gaussian = [&](std::size_t r) {
      Matrix m(r, d);
      for (double& x : m.values()) x = rng.normal(0.0, stddev);
      return m;
    };
    PromptSet p;
    p.text.union_prompts = gaussian(static_cast<std::size_t>(config.n_union));
    p.text.normal_specific = gaussian(static_cast<std::size_t>(config.n_specific));
    p.text.abnormal_specific = gaussian(static_cast<std::size_t>(config.n_specific));
    for (int k : config.key_layers) {
      p.visual.tokens[k] = gaussian(static_cast<std::size_t>(config.prompt_tokens_per_key_layer));
    }
    return p;
  }

  /// All trainable tensors in canonical order: U, S_normal, S_abnormal, then B_j by layer.
  std::vector<Matrix*> tensors() {
    std::vector<Matrix*> out{&text.union_prompts, &text.normal_specific, &text.abnormal_specific};
    for (auto& [k, m] : visual.tokens) out.push_back(&m);
    return out;
  }
  std::vector<const Matrix*> tensors() const {
    std::vector<const Matrix*> out{&text.union_prompts, &text.normal_specific, &text.abnormal_specific};
    for (const auto& [k, m] : visual.tokens) out.push_back(&m);
    return out;
  }

  /// Same shapes, all zero.
  PromptSet zeros_like() const {
    PromptSet z = *this;
    for (Matrix* m : z.tensors()) m->fill(0.0);
    return z;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Matrix* m : tensors()) n += m->size();
    return n;
  }

  void validate(const EncoderConfig& config) const {
    const auto d = static_cast<std::size_t>(config.dim);
    require_shape(text.union_prompts, static_cast<std::size_t>(config.n_union), d, "union prompts");
    require_shape(text.normal_specific, static_cast<std::size_t>(config.n_specific), d, "normal prompts");
    require_shape(text.abnormal_specific, static_cast<std::size_t>(config.n_specific), d, "abnormal prompts");
    if (visual.tokens.size() != config.key_layers.size()) {
      throw std::invalid_argument("visual prompt bank does not match the key layers");
    }
    for (int k : config.key_layers) {
      auto it = visual.tokens.find(k);
      if (it == visual.tokens.end()) throw std::invalid_argument("missing visual prompt for a key layer");
      require_shape(it->second, static_cast<std::size_t>(config.prompt_tokens_per_key_layer), d, "visual prompt");
    }
    for (const Matrix* m : tensors())
      for (double x : m->values())
        if (!std::isfinite(x)) throw std::invalid_argument("prompt parameters must be finite");
  }
};

struct ImageEncoding {
  std::vector<double> class_token;      // projected and L2-normalized
  std::vector<Matrix> key_layer_maps;   // one (grid*grid) x dim map per key layer, row-major cells
  int grid = 0;
};

struct TextEncoding {
  Matrix features;  // 2 x dim: row 0 normal, row 1 abnormal; unit rows
};

// ---- graph builders ------------------------------------------------------

namespace detail {

inline Tape::Var transformer_block(Tape& t, const BlockWeights& w, Tape::Var x, int heads, bool causal) {
  using V = Tape::Var;
  const std::size_t d = t.value(x).cols();
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  V h = t.layer_norm(x, t.constant_ref(w.ln1_gain), t.constant_ref(w.ln1_bias));
  V q = t.add_row(t.matmul(h, t.constant_ref(w.wq)), t.constant_ref(w.bq));
  V k = t.add_row(t.matmul(h, t.constant_ref(w.wk)), t.constant_ref(w.bk));
  V v = t.add_row(t.matmul(h, t.constant_ref(w.wv)), t.constant_ref(w.bv));
  std::vector<V> outs;
  for (int hd = 0; hd < heads; ++hd) {
    const std::size_t b = static_cast<std::size_t>(hd) * dh;
    V qh = t.slice_cols(q, b, b + dh);
    V kh = t.slice_cols(k, b, b + dh);
    V vh = t.slice_cols(v, b, b + dh);
    V att = t.softmax_rows(t.scale(t.matmul_nt(qh, kh), scale), causal);
    outs.push_back(t.matmul(att, vh));
  }
  V o = heads == 1 ? outs.front() : t.concat_cols(outs);
  x = t.add(x, t.add_row(t.matmul(o, t.constant_ref(w.wo)), t.constant_ref(w.bo)));

  V h2 = t.layer_norm(x, t.constant_ref(w.ln2_gain), t.constant_ref(w.ln2_bias));
  V m = t.gelu(t.add_row(t.matmul(h2, t.constant_ref(w.w1)), t.constant_ref(w.b1)));
  m = t.add_row(t.matmul(m, t.constant_ref(w.w2)), t.constant_ref(w.b2));
  return t.add(x, m);
}

}  // namespace detail

/// Splits an image into row-major flattened patches (patches x patch_size^2).
inline Matrix patchify(const Matrix& image, int patch_size) {
  const std::size_t ps = static_cast<std::size_t>(patch_size);
  const std::size_t g = image.rows() / ps;
  Matrix out(g * g, ps * ps);
  for (std::size_t gr = 0; gr < g; ++gr)
    for (std::size_t gc = 0; gc < g; ++gc)
      for (std::size_t r = 0; r < ps; ++r)
        for (std::size_t c = 0; c < ps; ++c) out(gr * g + gc, r * ps + c) = image(gr * ps + r, gc * ps + c);
  return out;
}

struct ImageGraph {
  Tape::Var class_token;               // 1 x dim, normalized
  std::vector<Tape::Var> key_maps;     // patches x dim per key layer
  std::map<int, Tape::Var> prompts;    // key layer -> prompt tokens
};

/// Records the image encoder on `tape`. Visual prompts become parameters when
/// `trainable` is set, constants otherwise.
inline ImageGraph build_image_graph(Tape& tape, const Matrix& image, const FrozenBackbone& bb,
                                    const VisualPromptBank& prompts, bool trainable) {
  using V = Tape::Var;
  const EncoderConfig& cfg = bb.config();
  require_shape(image, static_cast<std::size_t>(cfg.image_size), static_cast<std::size_t>(cfg.image_size), "image");
  const auto patches = static_cast<std::size_t>(cfg.patches());

  ImageGraph g;
  V x = tape.add_row(tape.matmul(tape.constant(patchify(image, cfg.patch_size)), tape.constant_ref(bb.patch_embed())),
                     tape.constant_ref(bb.patch_bias()));
  x = tape.concat_rows({tape.constant_ref(bb.class_embed()), x});
  x = tape.add(x, tape.constant_ref(bb.image_pos()));
  x = tape.layer_norm(x, tape.constant_ref(bb.ln_pre_gain()), tape.constant_ref(bb.ln_pre_bias()));

  V post_gain = tape.constant_ref(bb.ln_post_gain());
  V post_bias = tape.constant_ref(bb.ln_post_bias());
  V proj = tape.constant_ref(bb.image_proj());

  for (int layer = 1; layer <= cfg.n_layers; ++layer) {
    const auto& w = bb.image_blocks()[static_cast<std::size_t>(layer - 1)];
    if (!cfg.is_key_layer(layer)) {
      x = detail::transformer_block(tape, w, x, cfg.n_heads, false);
      continue;
    }
    const Matrix& b = prompts.tokens.at(layer);
    if (b.rows() > 0) {
      V pv = trainable ? tape.parameter(b) : tape.constant(b);
      g.prompts[layer] = pv;
      x = tape.concat_rows({x, pv});
    }
    x = detail::transformer_block(tape, w, x, cfg.n_heads, false);
    x = tape.slice_rows(x, 0, patches + 1);
    V patch_tokens = tape.slice_rows(x, 1, patches + 1);
    g.key_maps.push_back(tape.matmul(tape.layer_norm(patch_tokens, post_gain, post_bias), proj));
  }
  V cls = tape.slice_rows(x, 0, 1);
  g.class_token = tape.normalize_rows(tape.matmul(tape.layer_norm(cls, post_gain, post_bias), proj));
  return g;
}

/// Records the text encoder over an embedded sequence; returns the normalized
/// projection of the last (EOS) position.
inline Tape::Var build_text_graph(Tape& tape, Tape::Var sequence, const FrozenBackbone& bb) {
  using V = Tape::Var;
  const std::size_t len = tape.value(sequence).rows();
  if (len == 0 || len > static_cast<std::size_t>(bb.config().text_len)) {
    throw std::invalid_argument("text sequence length outside [1, text_len]");
  }
  V pos = tape.slice_rows(tape.constant_ref(bb.text_pos()), 0, len);
  V x = tape.add(sequence, pos);
  for (const auto& w : bb.text_blocks()) x = detail::transformer_block(tape, w, x, bb.config().n_heads, true);
  V eos = tape.slice_rows(x, len - 1, len);
  eos = tape.layer_norm(eos, tape.constant_ref(bb.ln_final_gain()), tape.constant_ref(bb.ln_final_bias()));
  return tape.normalize_rows(tape.matmul(eos, tape.constant_ref(bb.text_proj())));
}

struct TextGraph {
  Tape::Var normal_sequence;
  Tape::Var abnormal_sequence;
  Tape::Var normal;    // 1 x dim
  Tape::Var abnormal;  // 1 x dim
  Tape::Var union_prompts, normal_specific, abnormal_specific;
  bool has_union = false;
  bool has_specific = false;
};

inline std::vector<int> class_state_tokens(const std::string& state, const std::string& class_name) {
  std::vector<int> ids = Tokenizer::encode_words(state);
  auto cls = Tokenizer::encode_words(class_name);
  ids.insert(ids.end(), cls.begin(), cls.end());
  return ids;
}

/// Records both prompted text sequences and their encodings. The union block is
/// one tape node used by both sequences, so its gradient sums over the pair.
inline TextGraph build_text_prompt_graph(Tape& tape, const TextPromptBank& bank, const std::string& class_name,
                                         const FrozenBackbone& bb, bool trainable) {
  using V = Tape::Var;
  TextGraph g;
  const auto d = static_cast<std::size_t>(bb.config().dim);
  for (const Matrix* m : {&bank.union_prompts, &bank.normal_specific, &bank.abnormal_specific}) {
    if (m->rows() > 0 && m->cols() != d) throw std::invalid_argument("text prompt width differs from dim");
  }
  if (bank.normal_specific.rows() != bank.abnormal_specific.rows()) {
    throw std::invalid_argument("normal and abnormal specific prompts must have the same shape");
  }
  auto make = [&](const Matrix& m) { return trainable ? tape.parameter(m) : tape.constant(m); };
  g.has_union = bank.union_prompts.rows() > 0;
  g.has_specific = bank.normal_specific.rows() > 0;
  if (g.has_union) g.union_prompts = make(bank.union_prompts);
  if (g.has_specific) {
    g.normal_specific = make(bank.normal_specific);
    g.abnormal_specific = make(bank.abnormal_specific);
  }

  V bos = tape.constant(bb.embed_tokens({Tokenizer::kBos}));
  V eos = tape.constant(bb.embed_tokens({Tokenizer::kEos}));
  auto sequence = [&](const std::string& state, bool has_s, V specific) {
    std::vector<V> parts{bos};
    if (g.has_union) parts.push_back(g.union_prompts);
    if (has_s) parts.push_back(specific);
    const auto words = class_state_tokens(state, class_name);
    if (!words.empty()) parts.push_back(tape.constant(bb.embed_tokens(words)));
    parts.push_back(eos);
    return tape.concat_rows(parts);
  };
  g.normal_sequence = sequence(bank.state_words.first, g.has_specific, g.normal_specific);
  g.abnormal_sequence = sequence(bank.state_words.second, g.has_specific, g.abnormal_specific);
  g.normal = build_text_graph(tape, g.normal_sequence, bb);
  g.abnormal = build_text_graph(tape, g.abnormal_sequence, bb);
  return g;
}

// ---- value-level API ---------------------------------------------------

inline ImageEncoding encode_image(const Matrix& image, const FrozenBackbone& bb, const VisualPromptBank& prompts) {
  Tape tape;
  ImageGraph g = build_image_graph(tape, image, bb, prompts, false);
  ImageEncoding enc;
  enc.grid = bb.config().grid();
  const auto cls = tape.value(g.class_token).row(0);
  enc.class_token.assign(cls.begin(), cls.end());
  for (auto v : g.key_maps) enc.key_layer_maps.push_back(tape.value(v));
  return enc;
}

/// Embedded (normal, abnormal) prompt sequences:
/// [BOS] U S_state <state word> <class tokens> [EOS].
inline std::pair<Matrix, Matrix> build_text_prompts(const TextPromptBank& bank, const FrozenBackbone& bb) {
  Tape tape;
  TextGraph g = build_text_prompt_graph(tape, bank, bank.class_name, bb, false);
  return {tape.value(g.normal_sequence), tape.value(g.abnormal_sequence)};
}

inline std::vector<double> encode_text(const Matrix& sequence, const FrozenBackbone& bb) {
  Tape tape;
  auto out = build_text_graph(tape, tape.constant(sequence), bb);
  const auto row = tape.value(out).row(0);
  return {row.begin(), row.end()};
}

/// The hand-crafted prompt "<state> <class>" without learnable context.
inline Matrix naive_prompt_sequence(const std::string& state, const std::string& class_name,
                                    const FrozenBackbone& bb) {
  std::vector<int> ids{Tokenizer::kBos};
  for (int id : class_state_tokens(state, class_name)) ids.push_back(id);
  ids.push_back(Tokenizer::kEos);
  if (ids.size() > static_cast<std::size_t>(bb.config().text_len)) {
    throw std::invalid_argument("prompt does not fit in text_len");
  }
  return bb.embed_tokens(ids);
}

inline TextEncoding encode_text_prompts(const TextPromptBank& bank, const std::string& class_name,
                                        const FrozenBackbone& bb) {
  Tape tape;
  TextGraph g = build_text_prompt_graph(tape, bank, class_name, bb, false);
  TextEncoding te;
  te.features = Matrix(2, static_cast<std::size_t>(bb.config().dim));
  const auto n = tape.value(g.normal).row(0);
  const auto a = tape.value(g.abnormal).row(0);
  std::copy(n.begin(), n.end(), te.features.row(0).begin());
  std::copy(a.begin(), a.end(), te.features.row(1).begin());
  return te;
}

inline TextEncoding encode_text_prompts(const TextPromptBank& bank, const FrozenBackbone& bb) {
  return encode_text_prompts(bank, bank.class_name, bb);
}

}  // namespace mvp
