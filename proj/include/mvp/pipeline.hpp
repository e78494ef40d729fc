// Copyright (C) 2026 The MVP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvp/checkpoint.hpp"
#include "mvp/data.hpp"
#include "mvp/metrics.hpp"
#include "mvp/parallel.hpp"
#include "mvp/png.hpp"
#include "mvp/training.hpp"

namespace mvp {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every tunable of a run. Defaults reproduce the reference setup.
struct RunConfig {
  std::uint64_t seed = 0;
  std::uint64_t backbone_seed = 7;

  // geometry / rendering
  std::size_t views = 9;
  double rig_radius = 2.5;
  double focal = 0.0;  // 0 selects 200 px per 224 px of image width
  int splat_radius = 1;

  EncoderConfig encoder;
  double tau = kDefaultTemperature;
  std::string prompt_class = "object";  // "category" uses each cloud's category name
  std::string state_normal = "perfect";
  std::string state_abnormal = "damaged";

  TrainConfig train;

  SyntheticSpec synth;

  std::vector<std::size_t> sweep_views{1, 3, 5, 7, 9};
  std::string data_dir = "data";
  std::string out_dir = "out";

  /// Canonical `key = value` listing of every field, in fixed order.
  std::string canonical() const;
  std::uint64_t hash() const {
    const std::string s = canonical();
    return fnv1a(s.data(), s.size());
  }
  void set(const std::string& key, const std::string& value);
  void validate() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& xs, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += f(xs[i]);
  }
  return out;
}

struct ConfigField {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> put;
};

inline double parse_double(const std::string& v) {
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("trailing characters");
  return d;
}

inline long long parse_int(const std::string& v) {
  std::size_t used = 0;
  const long long i = std::stoll(v, &used);
  if (used != v.size()) throw std::invalid_argument("trailing characters");
  return i;
}

inline std::uint64_t parse_u64(const std::string& v) {
  if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
  std::size_t used = 0;
  const unsigned long long i = std::stoull(v, &used);
  if (used != v.size()) throw std::invalid_argument("trailing characters");
  return i;
}

inline const std::vector<ConfigField>& config_fields() {
  using C = RunConfig;
  using S = const std::string&;
  auto str = [](const std::string& s) { return s; };
  auto sz = [](std::size_t v) { return std::to_string(v); };
  static const std::vector<ConfigField> fields = {
      {"seed", [](const C& c) { return std::to_string(c.seed); }, [](C& c, S v) { c.seed = parse_u64(v); }},
      {"backbone_seed", [](const C& c) { return std::to_string(c.backbone_seed); },
       [](C& c, S v) { c.backbone_seed = parse_u64(v); }},
      {"views", [](const C& c) { return std::to_string(c.views); },
       [](C& c, S v) { c.views = static_cast<std::size_t>(parse_u64(v)); }},
      {"rig_radius", [](const C& c) { return fmt_double(c.rig_radius); }, [](C& c, S v) { c.rig_radius = parse_double(v); }},
      {"focal", [](const C& c) { return fmt_double(c.focal); }, [](C& c, S v) { c.focal = parse_double(v); }},
      {"splat_radius", [](const C& c) { return std::to_string(c.splat_radius); },
       [](C& c, S v) { c.splat_radius = static_cast<int>(parse_int(v)); }},
      {"image_size", [](const C& c) { return std::to_string(c.encoder.image_size); },
       [](C& c, S v) { c.encoder.image_size = static_cast<int>(parse_int(v)); }},
      {"patch_size", [](const C& c) { return std::to_string(c.encoder.patch_size); },
       [](C& c, S v) { c.encoder.patch_size = static_cast<int>(parse_int(v)); }},
      {"n_layers", [](const C& c) { return std::to_string(c.encoder.n_layers); },
       [](C& c, S v) { c.encoder.n_layers = static_cast<int>(parse_int(v)); }},
      {"n_heads", [](const C& c) { return std::to_string(c.encoder.n_heads); },
       [](C& c, S v) { c.encoder.n_heads = static_cast<int>(parse_int(v)); }},
      {"dim", [](const C& c) { return std::to_string(c.encoder.dim); },
       [](C& c, S v) { c.encoder.dim = static_cast<int>(parse_int(v)); }},
      {"key_layers",
       [](const C& c) { return join<int>(c.encoder.key_layers, [](const int& k) { return std::to_string(k); }); },
       [](C& c, S v) {
         c.encoder.key_layers.clear();
         for (const auto& s : split_list(v)) c.encoder.key_layers.push_back(static_cast<int>(parse_int(s)));
       }},
      {"prompt_tokens", [](const C& c) { return std::to_string(c.encoder.prompt_tokens_per_key_layer); },
       [](C& c, S v) { c.encoder.prompt_tokens_per_key_layer = static_cast<int>(parse_int(v)); }},
      {"n_union", [](const C& c) { return std::to_string(c.encoder.n_union); },
       [](C& c, S v) { c.encoder.n_union = static_cast<int>(parse_int(v)); }},
      {"n_specific", [](const C& c) { return std::to_string(c.encoder.n_specific); },
       [](C& c, S v) { c.encoder.n_specific = static_cast<int>(parse_int(v)); }},
      {"text_len", [](const C& c) { return std::to_string(c.encoder.text_len); },
       [](C& c, S v) { c.encoder.text_len = static_cast<int>(parse_int(v)); }},
      {"text_layers", [](const C& c) { return std::to_string(c.encoder.text_layers); },
       [](C& c, S v) { c.encoder.text_layers = static_cast<int>(parse_int(v)); }},
      {"mlp_ratio", [](const C& c) { return std::to_string(c.encoder.mlp_ratio); },
       [](C& c, S v) { c.encoder.mlp_ratio = static_cast<int>(parse_int(v)); }},
      {"tau", [](const C& c) { return fmt_double(c.tau); }, [](C& c, S v) { c.tau = parse_double(v); }},
      {"prompt_class", [](const C& c) { return c.prompt_class; }, [](C& c, S v) { c.prompt_class = v; }},
      {"state_normal", [](const C& c) { return c.state_normal; }, [](C& c, S v) { c.state_normal = v; }},
      {"state_abnormal", [](const C& c) { return c.state_abnormal; }, [](C& c, S v) { c.state_abnormal = v; }},
      {"lr", [](const C& c) { return fmt_double(c.train.learning_rate); },
       [](C& c, S v) { c.train.learning_rate = parse_double(v); }},
      {"epochs", [](const C& c) { return std::to_string(c.train.epochs); },
       [](C& c, S v) { c.train.epochs = static_cast<int>(parse_int(v)); }},
      {"batch", [](const C& c) { return std::to_string(c.train.batch); },
       [](C& c, S v) { c.train.batch = static_cast<int>(parse_int(v)); }},
      {"focal_gamma", [](const C& c) { return fmt_double(c.train.focal_gamma); },
       [](C& c, S v) { c.train.focal_gamma = parse_double(v); }},
      {"focal_alpha", [](const C& c) { return fmt_double(c.train.focal_alpha); },
       [](C& c, S v) { c.train.focal_alpha = parse_double(v); }},
      {"adam_beta1", [](const C& c) { return fmt_double(c.train.adam_beta1); },
       [](C& c, S v) { c.train.adam_beta1 = parse_double(v); }},
      {"adam_beta2", [](const C& c) { return fmt_double(c.train.adam_beta2); },
       [](C& c, S v) { c.train.adam_beta2 = parse_double(v); }},
      {"adam_eps", [](const C& c) { return fmt_double(c.train.adam_eps); },
       [](C& c, S v) { c.train.adam_eps = parse_double(v); }},
      {"categories", [str](const C& c) { return join<std::string>(c.synth.categories, str); },
       [](C& c, S v) { c.synth.categories = split_list(v); }},
      {"train_categories", [str](const C& c) { return join<std::string>(c.synth.train_categories, str); },
       [](C& c, S v) { c.synth.train_categories = split_list(v); }},
      {"test_categories", [str](const C& c) { return join<std::string>(c.synth.test_categories, str); },
       [](C& c, S v) { c.synth.test_categories = split_list(v); }},
      {"points_per_cloud", [](const C& c) { return std::to_string(c.synth.points_per_cloud); },
       [](C& c, S v) { c.synth.points_per_cloud = static_cast<std::size_t>(parse_u64(v)); }},
      {"clouds_per_category", [](const C& c) { return std::to_string(c.synth.clouds_per_category); },
       [](C& c, S v) { c.synth.clouds_per_category = static_cast<std::size_t>(parse_u64(v)); }},
      {"anomaly_types",
       [](const C& c) {
         return join<AnomalyType>(c.synth.anomaly_types, [](const AnomalyType& t) { return std::string(to_string(t)); });
       },
       [](C& c, S v) {
         c.synth.anomaly_types.clear();
         for (const auto& s : split_list(v)) c.synth.anomaly_types.push_back(anomaly_from_string(s));
       }},
      {"anomaly_fraction", [](const C& c) { return fmt_double(c.synth.anomaly_fraction); },
       [](C& c, S v) { c.synth.anomaly_fraction = parse_double(v); }},
      {"anomaly_area", [](const C& c) { return fmt_double(c.synth.anomaly_area); },
       [](C& c, S v) { c.synth.anomaly_area = parse_double(v); }},
      {"min_displacement", [](const C& c) { return fmt_double(c.synth.min_displacement); },
       [](C& c, S v) { c.synth.min_displacement = parse_double(v); }},
      {"max_displacement", [](const C& c) { return fmt_double(c.synth.max_displacement); },
       [](C& c, S v) { c.synth.max_displacement = parse_double(v); }},
      {"sweep_views", [sz](const C& c) { return join<std::size_t>(c.sweep_views, sz); },
       [](C& c, S v) {
         c.sweep_views.clear();
         for (const auto& s : split_list(v)) c.sweep_views.push_back(static_cast<std::size_t>(parse_u64(s)));
       }},
      {"data_dir", [](const C& c) { return c.data_dir; }, [](C& c, S v) { c.data_dir = v; }},
      {"out_dir", [](const C& c) { return c.out_dir; }, [](C& c, S v) { c.out_dir = v; }},
  };
  return fields;
}

}  // namespace detail

inline std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& f : detail::config_fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

inline void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : detail::config_fields()) {
    if (key != f.key) continue;
    try {
      f.put(*this, value);
    } catch (const std::exception& e) {
      throw ConfigError("bad value '" + value + "' for key '" + key + "': " + e.what());
    }
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline void RunConfig::validate() const {
  auto wrap = [](const char* key, const std::function<void()>& check) {
    try {
      check();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("invalid ") + key + ": " + e.what());
    }
  };
  if (views < 1) throw ConfigError("invalid views: must be at least 1");
  if (!(rig_radius > 0.0)) throw ConfigError("invalid rig_radius: must be positive");
  if (!(focal >= 0.0)) throw ConfigError("invalid focal: must be non-negative");
  if (splat_radius < 0) throw ConfigError("invalid splat_radius: must be non-negative");
  if (!(tau > 0.0)) throw ConfigError("invalid tau: must be positive");
  if (prompt_class.empty()) throw ConfigError("invalid prompt_class: empty");
  if (Tokenizer::encode_words(state_normal).size() != 1 || Tokenizer::encode_words(state_abnormal).size() != 1) {
    throw ConfigError("invalid state words: each must be a single word");
  }
  for (auto k : sweep_views)
    if (k < 1) throw ConfigError("invalid sweep_views: counts must be at least 1");
  wrap("encoder", [&] { encoder.validate(); });
  wrap("training", [&] { train.validate(); });
}

/// Parses `key = value` lines; `#` starts a comment. Later keys override earlier ones.
inline void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& name) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(name + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      cfg.set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(name + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

/// Applies `--key=value` overrides.
inline void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    std::string s = o;
    if (s.rfind("--", 0) == 0) s = s.substr(2);
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not of the form --key=value");
    cfg.set(detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)));
  }
}

inline RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (!path.empty()) apply_config_text(cfg, read_file(path), path);
  apply_overrides(cfg, overrides);
  cfg.validate();
  return cfg;
}

// ---- shared plumbing ------------------------------------------------------------

inline ViewRig make_rig(const RunConfig& cfg, std::size_t views) {
  return generate_view_rig(views, cfg.rig_radius, {0.0, 0.0, 0.0},
                           CameraIntrinsics::square(cfg.encoder.image_size, cfg.focal));
}

/// Writes `stamp.txt` (config hash, seed, command, full config) into `dir`.
inline void write_stamp(const RunConfig& cfg, const std::filesystem::path& dir, const std::string& command) {
  char head[96];
  std::snprintf(head, sizeof head, "config_hash = 0x%016" PRIx64 "\n", cfg.hash());
  std::string s = head;
  s += "seed = " + std::to_string(cfg.seed) + "\n";
  s += "command = " + command + "\n";
  s += "# resolved config\n" + cfg.canonical();
  write_file_atomic(dir / "stamp.txt", s);
}

struct DatasetEntry {
  ManifestEntry entry;
  PointCloud cloud;
  std::string id;
};

inline std::vector<DatasetEntry> load_split(const RunConfig& cfg, const std::string& split) {
  const std::filesystem::path dir(cfg.data_dir);
  const auto manifest_path = dir / "manifest.txt";
  const auto entries = parse_manifest(read_file(manifest_path), manifest_path.string());
  std::vector<DatasetEntry> out;
  for (const auto& e : entries) {
    if (e.split != split) continue;
    DatasetEntry d;
    d.entry = e;
    d.cloud = load_cloud(dir / e.path);
    d.cloud.category = e.category;
    if (!d.cloud.has_labels()) d.cloud.labels.assign(d.cloud.size(), 0);
    d.cloud.object_label = static_cast<std::uint8_t>(e.object_label);
    d.cloud.validate();
    d.id = std::filesystem::path(e.path).stem().string();
    out.push_back(std::move(d));
  }
  if (out.empty()) throw std::runtime_error("no clouds in split '" + split + "' of " + manifest_path.string());
  return out;
}

inline std::string class_name_for(const RunConfig& cfg, const std::string& category) {
  return cfg.prompt_class == "category" ? category : cfg.prompt_class;
}

struct Model {
  FrozenBackbone backbone;
  PromptSet prompts;
};

/// Untrained prompts when `checkpoint` is empty, otherwise the stored ones.
/// The checkpoint's encoder must match the run config.
inline Model load_model(const RunConfig& cfg, const std::string& checkpoint) {
  if (checkpoint.empty()) {
    Model m{FrozenBackbone(cfg.encoder, cfg.backbone_seed), PromptSet::initialize(cfg.encoder, cfg.seed)};
    m.prompts.text.state_words = {cfg.state_normal, cfg.state_abnormal};
    return m;
  }
  Checkpoint ck = load_checkpoint(checkpoint);
  RunConfig probe = cfg;
  probe.encoder = ck.config;
  if (probe.canonical() != cfg.canonical()) {
    throw std::runtime_error(checkpoint + ": encoder config differs from the run config");
  }
  if (ck.backbone_seed != cfg.backbone_seed) throw std::runtime_error(checkpoint + ": backbone seed differs");
  Model m{FrozenBackbone(ck.config, ck.backbone_seed), std::move(ck.prompts)};
  if (m.backbone.fingerprint() != ck.backbone_fingerprint) {
    throw std::runtime_error(checkpoint + ": backbone fingerprint mismatch");
  }
  return m;
}

inline std::vector<PreparedCloud> prepare_all(const RunConfig& cfg, const std::vector<DatasetEntry>& data,
                                              const ViewRig& rig) {
  std::vector<PreparedCloud> out(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    out[i] = prepare_cloud(data[i].cloud, rig, RenderOptions{cfg.splat_radius}, cfg.encoder,
                           class_name_for(cfg, data[i].entry.category));
  });
  return out;
}

inline std::string format_scores(const std::vector<double>& map) {
  std::string out;
  out.reserve(map.size() * 24);
  for (double s : map) out += detail::fmt_double(s) + "\n";
  return out;
}

inline std::vector<double> parse_scores(const std::string& text, const std::string& name) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty()) continue;
    try {
      out.push_back(detail::parse_double(line));
    } catch (...) {
      throw ParseError(name + ": line " + std::to_string(line_no) + ": bad score '" + line + "'");
    }
  }
  return out;
}

// ---- commands ----------------------------------------------------------------------

/// Writes the synthetic benchmark under data_dir: one binary PLY plus label
/// sidecar per cloud and `manifest.txt`.
inline void cmd_synth(const RunConfig& cfg) {
  SyntheticSpec spec = cfg.synth;
  spec.seed = cfg.seed;
  const DatasetSplit split = generate(spec);
  const std::filesystem::path dir(cfg.data_dir);
  std::vector<ManifestEntry> manifest;
  auto emit = [&](const std::vector<LabeledCloud>& clouds, const std::string& name) {
    for (const auto& c : clouds) {
      const std::string rel = name + "/" + c.id + ".ply";
      save_cloud(c.cloud, dir / rel);
      manifest.push_back({c.cloud.category, rel, name, c.cloud.object_label.value_or(0)});
    }
  };
  emit(split.train, "train");
  emit(split.test, "test");
  write_file_atomic(dir / "manifest.txt", format_manifest(manifest));
  write_stamp(cfg, dir, "synth");
}

/// Renders each cloud to `<id>_view<k>.png` (16-bit depth) and
/// `<id>_mask<k>.png` (8-bit validity) under out_dir, with a listing.
inline void cmd_render(const RunConfig& cfg, const std::vector<std::string>& cloud_paths) {
  if (cloud_paths.empty()) throw std::invalid_argument("render needs at least one cloud");
  const std::filesystem::path dir(cfg.out_dir);
  const ViewRig rig = make_rig(cfg, cfg.views);
  std::string listing = "# cloud view depth_png mask_png coverage\n";
  for (const auto& p : cloud_paths) {
    const PointCloud cloud = normalize_cloud(load_cloud(p));
    const RenderedSet rs = render_all(cloud, rig, RenderOptions{cfg.splat_radius});
    const std::string id = std::filesystem::path(p).stem().string();
    const std::string cov = detail::fmt_double(coverage(rs, cloud.size()));
    for (std::size_t v = 0; v < rs.size(); ++v) {
      const std::string img = id + "_view" + std::to_string(v) + ".png";
      const std::string mask = id + "_mask" + std::to_string(v) + ".png";
      write_png16(rs.normalized[v], dir / img);
      write_mask_png(rs.views[v].valid, rs.views[v].width, rs.views[v].height, dir / mask);
      listing += id + " " + std::to_string(v) + " " + img + " " + mask + " " + cov + "\n";
    }
  }
  write_file_atomic(dir / "render_manifest.txt", listing);
  write_stamp(cfg, dir, "render");
}

inline Checkpoint make_checkpoint(const RunConfig& cfg, const FrozenBackbone& bb, const PromptSet& prompts) {
  return Checkpoint{cfg.encoder, cfg.backbone_seed, bb.fingerprint(), prompts};
}

/// Trains prompts on the train split. Writes `checkpoint_epoch<e>.ckpt`,
/// `prompts.ckpt`, `train_log.txt` (one line per step) and `epoch_loss.txt`.
inline TrainResult cmd_train(const RunConfig& cfg) {
  const std::filesystem::path dir(cfg.out_dir);
  const auto data = load_split(cfg, "train");
  Model model = load_model(cfg, "");
  const auto prepared = prepare_all(cfg, data, make_rig(cfg, cfg.views));
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;

  std::string log = "# step iou focal ce total\n";
  char buf[160];
  TrainCallbacks cb;
  cb.on_step = [&](const StepLog& s) {
    std::snprintf(buf, sizeof buf, "%zu %.17g %.17g %.17g %.17g\n", s.step, s.loss.iou, s.loss.focal, s.loss.ce,
                  s.loss.total);
    log += buf;
  };
  cb.on_epoch = [&](int epoch, const PromptSet& p) {
    save_checkpoint(make_checkpoint(cfg, model.backbone, p), dir / ("checkpoint_epoch" + std::to_string(epoch) + ".ckpt"));
  };
  TrainResult result = train(model.backbone, model.prompts, prepared, tc, cfg.tau, cb);
  save_checkpoint(make_checkpoint(cfg, model.backbone, result.prompts), dir / "prompts.ckpt");
  write_file_atomic(dir / "train_log.txt", log);
  std::string epochs = "# epoch iou focal ce total (epoch 0 is before training)\n";
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    const auto& l = result.epoch_loss[e];
    std::snprintf(buf, sizeof buf, "%zu %.17g %.17g %.17g %.17g\n", e, l.iou, l.focal, l.ce, l.total);
    epochs += buf;
  }
  write_file_atomic(dir / "epoch_loss.txt", epochs);
  write_stamp(cfg, dir, "train");
  return result;
}

/// Scores one cloud. Writes `<id>.scores.txt` (one value per point, input
/// order) and `<id>.summary.txt` (object score) under out_dir.
inline AnomalyResult cmd_score(const RunConfig& cfg, const std::string& checkpoint, const std::string& cloud_path,
                               const std::string& category = "") {
  const std::filesystem::path dir(cfg.out_dir);
  const Model model = load_model(cfg, checkpoint);
  PointCloud cloud = load_cloud(cloud_path);
  const PreparedCloud pc = prepare_cloud(cloud, make_rig(cfg, cfg.views), RenderOptions{cfg.splat_radius},
                                         cfg.encoder, class_name_for(cfg, category.empty() ? cloud.category : category));
  const AnomalyResult r = predict(model.backbone, model.prompts, pc, cfg.tau);
  const std::string id = std::filesystem::path(cloud_path).stem().string();
  write_file_atomic(dir / (id + ".scores.txt"), format_scores(r.map));
  std::size_t visible = 0;
  for (auto v : pc.plan.visible()) visible += v > 0 ? 1 : 0;
  std::string summary = "object_score = " + detail::fmt_double(r.score) + "\n";
  summary += "points = " + std::to_string(r.map.size()) + "\n";
  summary += "visible_points = " + std::to_string(visible) + "\n";
  write_file_atomic(dir / (id + ".summary.txt"), summary);
  write_stamp(cfg, dir, "score");
  return r;
}

inline std::vector<CloudOutcome> predict_split(const RunConfig& cfg, const Model& model,
                                               const std::vector<DatasetEntry>& data,
                                               const std::vector<PreparedCloud>& prepared) {
  std::vector<CloudOutcome> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const AnomalyResult r = predict(model.backbone, model.prompts, prepared[i], cfg.tau);
    out.push_back({data[i].entry.category, r.score, prepared[i].object_label, r.map, prepared[i].labels, {}});
  }
  return out;
}

/// Evaluates a split. Writes `report_<split>.txt` (table) and
/// `report_<split>.kv` (machine-readable) under out_dir.
inline EvalReport cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& split) {
  const std::filesystem::path dir(cfg.out_dir);
  const Model model = load_model(cfg, checkpoint);
  const auto data = load_split(cfg, split);
  const auto prepared = prepare_all(cfg, data, make_rig(cfg, cfg.views));
  const EvalReport report = evaluate(predict_split(cfg, model, data, prepared));
  write_file_atomic(dir / ("report_" + split + ".txt"), report.to_table());
  write_file_atomic(dir / ("report_" + split + ".kv"), report.to_kv());
  write_stamp(cfg, dir, "eval");
  return report;
}

struct SweepRow {
  std::size_t views = 0;
  double coverage = 0.0;
  MetricSet metrics;
  double seconds_per_cloud = 0.0;
};

/// Metrics, mean coverage and wall-clock per cloud for each view count. Every
/// setting uses a prefix of the largest rig so visibility sets are nested.
inline std::vector<SweepRow> cmd_sweep_views(const RunConfig& cfg, const std::string& checkpoint,
                                             const std::vector<std::size_t>& k_list, const std::string& split = "test") {
  if (k_list.empty()) throw std::invalid_argument("sweep needs at least one view count");
  const std::filesystem::path dir(cfg.out_dir);
  const Model model = load_model(cfg, checkpoint);
  const auto data = load_split(cfg, split);
  const std::size_t max_k = *std::max_element(k_list.begin(), k_list.end());
  const ViewRig full = make_rig(cfg, max_k);

  std::vector<SweepRow> rows;
  for (std::size_t k : k_list) {
    if (k < 1) throw std::invalid_argument("view counts must be at least 1");
    const ViewRig rig = full.prefix(k);
    SweepRow row;
    row.views = k;
    std::vector<CloudOutcome> outcomes;
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& d : data) {
      const PointCloud norm = normalize_cloud(d.cloud);
      row.coverage += coverage(render_all(norm, rig, RenderOptions{cfg.splat_radius}), norm.size());
      const PreparedCloud pc = prepare_cloud(d.cloud, rig, RenderOptions{cfg.splat_radius}, cfg.encoder,
                                             class_name_for(cfg, d.entry.category));
      const AnomalyResult r = predict(model.backbone, model.prompts, pc, cfg.tau);
      outcomes.push_back({d.entry.category, r.score, pc.object_label, r.map, pc.labels, {}});
    }
    const auto t1 = std::chrono::steady_clock::now();
    row.coverage /= static_cast<double>(data.size());
    row.metrics = evaluate(outcomes).mean;
    row.seconds_per_cloud = std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(data.size());
    rows.push_back(row);
  }

  std::string table = "# views coverage O-R O-F O-P P-R P-F P-P seconds_per_cloud\n";
  char buf[256];
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    std::snprintf(buf, sizeof buf, "%zu %.6f %.4f %.4f %.4f %.4f %.4f %.4f %.6f\n", r.views, r.coverage, m.o_auroc,
                  m.o_maxf1, m.o_ap, m.p_auroc, m.p_maxf1, m.p_ap, r.seconds_per_cloud);
    table += buf;
  }
  write_file_atomic(dir / "sweep_views.txt", table);
  write_stamp(cfg, dir, "sweep-views");
  return rows;
}

/// Colors a cloud by its score file; the stamp goes next to the output.
inline void cmd_viz(const RunConfig& cfg, const std::string& cloud_path, const std::string& scores_path,
                    const std::string& out_path) {
  const PointCloud cloud = load_cloud(cloud_path);
  const auto scores = parse_scores(read_file(scores_path), scores_path);
  if (scores.size() != cloud.size()) {
    throw std::runtime_error(scores_path + ": " + std::to_string(scores.size()) + " scores for " +
                             std::to_string(cloud.size()) + " points");
  }
  export_colored(cloud, scores, out_path);
  const auto parent = std::filesystem::path(out_path).parent_path();
  write_stamp(cfg, parent.empty() ? std::filesystem::path(".") : parent, "viz");
}

}  // namespace mvp
