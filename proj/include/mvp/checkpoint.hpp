// Copyright (C) 2026 The MVP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "mvp/data.hpp"
#include "mvp/encoder.hpp"

namespace mvp {

inline constexpr char kCheckpointMagic[8] = {'M', 'V', 'P', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  EncoderConfig config;
  std::uint64_t backbone_seed = 0;
  std::uint64_t backbone_fingerprint = 0;
  PromptSet prompts;
};

namespace detail {

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    out_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint64_t>(s.size());
    out_ += s;
  }
  void put_matrix(const Matrix& m) {
    put<std::uint64_t>(m.rows());
    put<std::uint64_t>(m.cols());
    out_.append(reinterpret_cast<const char*>(m.data()), m.size() * sizeof(double));
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string name) : bytes_(bytes), name_(std::move(name)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Matrix get_matrix() {
    const auto r = get<std::uint64_t>();
    const auto c = get<std::uint64_t>();
    if (r > (1u << 24) || c > (1u << 24)) fail("implausible tensor shape");
    need(r * c * sizeof(double));
    Matrix m(r, c);
    std::memcpy(m.data(), bytes_.data() + pos_, r * c * sizeof(double));
    pos_ += r * c * sizeof(double);
    return m;
  }
  void expect_raw(const char* p, std::size_t n, const char* what) {
    need(n);
    if (std::memcmp(bytes_.data() + pos_, p, n) != 0) fail(std::string("bad ") + what);
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(name_ + ": byte offset " + std::to_string(pos_) + ": " + msg);
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated checkpoint");
  }
  const std::string& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Versioned little-endian container: header, encoder config, backbone
/// identity, then U, S_normal, S_abnormal and B_j tensors as f64.
inline std::string serialize_checkpoint(const Checkpoint& ck) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  const EncoderConfig& c = ck.config;
  for (int v : {c.image_size, c.patch_size, c.n_layers, c.n_heads, c.dim, c.prompt_tokens_per_key_layer, c.n_union,
                c.n_specific, c.text_len, c.text_layers, c.mlp_ratio})
    w.put<std::int64_t>(v);
  w.put<std::uint64_t>(c.key_layers.size());
  for (int k : c.key_layers) w.put<std::int64_t>(k);
  w.put<std::uint64_t>(ck.backbone_seed);
  w.put<std::uint64_t>(ck.backbone_fingerprint);
  w.put_string(ck.prompts.text.state_words.first);
  w.put_string(ck.prompts.text.state_words.second);
  w.put_string(ck.prompts.text.class_name);
  w.put<std::uint64_t>(ck.prompts.visual.tokens.size());
  for (const auto& [k, m] : ck.prompts.visual.tokens) w.put<std::int64_t>(k);
  for (const Matrix* m : ck.prompts.tensors()) w.put_matrix(*m);
  return w.take();
}

inline Checkpoint parse_checkpoint(const std::string& bytes, const std::string& name = "<checkpoint>") {
  detail::ByteReader r(bytes, name);
  r.expect_raw(kCheckpointMagic, sizeof kCheckpointMagic, "magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  EncoderConfig& c = ck.config;
  for (int* v : {&c.image_size, &c.patch_size, &c.n_layers, &c.n_heads, &c.dim, &c.prompt_tokens_per_key_layer,
                 &c.n_union, &c.n_specific, &c.text_len, &c.text_layers, &c.mlp_ratio})
    *v = static_cast<int>(r.get<std::int64_t>());
  const auto n_keys = r.get<std::uint64_t>();
  if (n_keys > 4096) r.fail("implausible key layer count");
  c.key_layers.clear();
  for (std::uint64_t i = 0; i < n_keys; ++i) c.key_layers.push_back(static_cast<int>(r.get<std::int64_t>()));
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
  ck.backbone_seed = r.get<std::uint64_t>();
  ck.backbone_fingerprint = r.get<std::uint64_t>();
  ck.prompts.text.state_words.first = r.get_string();
  ck.prompts.text.state_words.second = r.get_string();
  ck.prompts.text.class_name = r.get_string();
  const auto n_banks = r.get<std::uint64_t>();
  if (n_banks != n_keys) r.fail("visual prompt count does not match key layers");
  for (std::uint64_t i = 0; i < n_banks; ++i) ck.prompts.visual.tokens[static_cast<int>(r.get<std::int64_t>())] = Matrix();
  for (Matrix* m : ck.prompts.tensors()) *m = r.get_matrix();
  if (!r.done()) r.fail("trailing bytes");
  try {
    ck.prompts.validate(c);
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path), path.string());
}

}  // namespace mvp
