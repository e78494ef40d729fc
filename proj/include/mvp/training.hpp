// Copyright (C) 2026 The MVP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvp/autodiff.hpp"
#include "mvp/encoder.hpp"
#include "mvp/geometry.hpp"
#include "mvp/parallel.hpp"
#include "mvp/random.hpp"
#include "mvp/rendering.hpp"
#include "mvp/scoring.hpp"

namespace mvp {

struct TrainConfig {
  double learning_rate = 0.0005;
  int epochs = 3;
  int batch = 1;
  std::uint64_t seed = 0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw std::invalid_argument("learning_rate must be finite and non-negative");
    }
    if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
    if (batch < 1) throw std::invalid_argument("batch must be at least 1");
  }
};

struct LossBreakdown {
  double iou = 0.0;
  double focal = 0.0;
  double ce = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    iou += o.iou;
    focal += o.focal;
    ce += o.ce;
    total += o.total;
    return *this;
  }
  LossBreakdown scaled(double s) const { return {iou * s, focal * s, ce * s, total * s}; }
};

// ---- losses ----------------------------------------------------------------

inline constexpr double kIouEps = 1e-6;
inline constexpr double kProbClamp = 1e-7;

/// Loss value together with its derivative per input.
struct LossGrad {
  double value = 0.0;
  std::vector<double> grad;
};

inline void check_map_labels(const std::vector<double>& map, const std::vector<std::uint8_t>& gt) {
  if (map.size() != gt.size() || map.empty()) throw std::invalid_argument("map and ground truth must align");
}

/// Soft IoU loss: 1 - (sum A*gt + eps) / (sum A + sum gt - sum A*gt + eps).
inline LossGrad iou_loss_grad(const std::vector<double>& map, const std::vector<std::uint8_t>& gt) {
  check_map_labels(map, gt);
  double inter = 0.0, sum_a = 0.0, sum_g = 0.0;
  for (std::size_t i = 0; i < map.size(); ++i) {
    inter += map[i] * gt[i];
    sum_a += map[i];
    sum_g += gt[i];
  }
  const double uni = sum_a + sum_g - inter + kIouEps;
  const double num = inter + kIouEps;
  LossGrad out;
  out.value = 1.0 - num / uni;
  out.grad.resize(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double g = gt[i];
    out.grad[i] = -(g * uni - num * (1.0 - g)) / (uni * uni);
  }
  return out;
}

inline double iou_loss(const std::vector<double>& map, const std::vector<std::uint8_t>& gt) {
  return iou_loss_grad(map, gt).value;
}

/// Mean focal loss with probabilities clamped to [1e-7, 1 - 1e-7].
inline LossGrad focal_loss_grad(const std::vector<double>& map, const std::vector<std::uint8_t>& gt, double gamma,
                                double alpha) {
  check_map_labels(map, gt);
  const double n = static_cast<double>(map.size());
  LossGrad out;
  out.grad.resize(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    const bool pos = gt[i] != 0;
    const double raw = pos ? map[i] : 1.0 - map[i];
    const double p = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
    const double a = pos ? alpha : 1.0 - alpha;
    const double q = 1.0 - p;
    out.value += -a * std::pow(q, gamma) * std::log(p);
    double dp = 0.0;
    if (raw == p) {
      const double qg1 = gamma == 0.0 ? 0.0 : gamma * std::pow(q, gamma - 1.0);
      dp = a * (qg1 * std::log(p) - std::pow(q, gamma) / p);
    }
    out.grad[i] = (pos ? dp : -dp) / n;
  }
  out.value /= n;
  return out;
}

inline double focal_loss(const std::vector<double>& map, const std::vector<std::uint8_t>& gt, double gamma,
                         double alpha) {
  return focal_loss_grad(map, gt, gamma, alpha).value;
}

/// Binary cross-entropy on the object score; returns (value, d/dscore).
inline std::pair<double, double> cross_entropy_grad(double score, std::uint8_t label) {
  const double s = std::clamp(score, kProbClamp, 1.0 - kProbClamp);
  const double y = label;
  const double value = -(y * std::log(s) + (1.0 - y) * std::log(1.0 - s));
  const double grad = s == score ? -y / s + (1.0 - y) / (1.0 - s) : 0.0;
  return {value, grad};
}

inline double cross_entropy(double score, std::uint8_t label) { return cross_entropy_grad(score, label).first; }

// ---- model forward / backward ------------------------------------------------

/// Rendered, encoder-ready view of one labeled cloud. Rendering and the
/// pixel->cell aggregation weights do not depend on the prompts, so they are
/// built once.
struct PreparedCloud {
  std::vector<Matrix> images;
  AggregationPlan plan;
  std::vector<std::uint8_t> labels;
  std::uint8_t object_label = 0;
  std::string class_name = "object";
  std::size_t n_points = 0;
};

inline PreparedCloud prepare_cloud(const PointCloud& cloud, const ViewRig& rig, const RenderOptions& render,
                                   const EncoderConfig& config, const std::string& class_name) {
  cloud.validate();
  if (rig.intrinsics.width != config.image_size || rig.intrinsics.height != config.image_size) {
    throw std::invalid_argument("rig image size must equal the encoder image size");
  }
  const PointCloud norm = normalize_cloud(cloud);
  RenderedSet rendered = render_all(norm, rig, render);
  PreparedCloud p;
  p.images = std::move(rendered.normalized);
  p.plan = AggregationPlan(rendered.correspondences, cloud.size(), config.grid(), config.key_layers.size());
  p.labels = cloud.labels;
  if (p.labels.empty()) p.labels.assign(cloud.size(), 0);
  p.object_label = cloud.object_label.value_or(
      static_cast<std::uint8_t>(*std::max_element(p.labels.begin(), p.labels.end())));
  p.class_name = class_name;
  p.n_points = cloud.size();
  return p;
}

struct ForwardResult {
  AnomalyResult result;
  LossBreakdown loss;
  PromptSet gradients;  // only filled when requested
};

struct LossOptions {
  double tau = kDefaultTemperature;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
};

/// Scores a prepared cloud, evaluates the composite loss and, when
/// `with_gradients` is set, back-propagates `loss_scale * total` to every
/// prompt tensor. Backbone weights stay constants on the tape.
inline ForwardResult forward_backward(const FrozenBackbone& bb, const PromptSet& prompts, const PreparedCloud& cloud,
                                      const LossOptions& opt, bool with_gradients, double loss_scale = 1.0) {
  const EncoderConfig& cfg = bb.config();
  const std::size_t n_views = cloud.images.size();
  const std::size_t m = cfg.key_layers.size();
  const double tau = opt.tau;
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");

  // Text side.
  Tape text_tape;
  TextGraph tg = build_text_prompt_graph(text_tape, prompts.text, cloud.class_name, bb, with_gradients);
  const auto g_n = text_tape.value(tg.normal).row(0);
  const auto g_a = text_tape.value(tg.abnormal).row(0);
  const std::size_t d = g_n.size();

  // Image side, one tape per view.
  std::vector<std::unique_ptr<Tape>> tapes(n_views);
  std::vector<ImageGraph> graphs(n_views);
  parallel_for(n_views, [&](std::size_t v) {
    tapes[v] = std::make_unique<Tape>();
    graphs[v] = build_image_graph(*tapes[v], cloud.images[v], bb, prompts.visual, with_gradients);
  });

  std::vector<std::vector<const Matrix*>> maps(n_views);
  for (std::size_t v = 0; v < n_views; ++v)
    for (auto var : graphs[v].key_maps) maps[v].push_back(&tapes[v]->value(var));
  Matrix raw = cloud.plan.apply(maps);
  const auto& visible = cloud.plan.visible();

  const std::size_t n = cloud.n_points;
  std::vector<double> norms(n, 0.0);
  Matrix feat(n, d, 0.0);
  ForwardResult out;
  out.result.map.assign(n, kInvisibleScore);
  for (std::size_t i = 0; i < n; ++i) {
    if (visible[i] == 0) continue;
    norms[i] = l2_norm(raw.row(i));
    for (std::size_t k = 0; k < d; ++k) feat(i, k) = raw(i, k) / norms[i];
    out.result.map[i] = abnormal_probability(dot(feat.row(i), g_n), dot(feat.row(i), g_a), tau);
  }

  std::vector<double> cls_mean(d, 0.0);
  for (std::size_t v = 0; v < n_views; ++v) {
    const auto c = tapes[v]->value(graphs[v].class_token).row(0);
    for (std::size_t k = 0; k < d; ++k) cls_mean[k] += c[k] / static_cast<double>(n_views);
  }
  out.result.score = abnormal_probability(dot(cls_mean, g_n), dot(cls_mean, g_a), tau);

  const LossGrad iou = iou_loss_grad(out.result.map, cloud.labels);
  const LossGrad focal = focal_loss_grad(out.result.map, cloud.labels, opt.focal_gamma, opt.focal_alpha);
  const auto [ce, dce] = cross_entropy_grad(out.result.score, cloud.object_label);
  if (!std::isfinite(iou.value)) throw std::runtime_error("non-finite IoU loss");
  if (!std::isfinite(focal.value)) throw std::runtime_error("non-finite focal loss");
  if (!std::isfinite(ce)) throw std::runtime_error("non-finite cross-entropy loss");
  out.loss = {iou.value, focal.value, ce, iou.value + focal.value + ce};

  if (!with_gradients) return out;

  // Scores -> similarities -> features and text rows.
  std::vector<double> dg_n(d, 0.0), dg_a(d, 0.0);
  Matrix draw(n, d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (visible[i] == 0) continue;
    const double a = out.result.map[i];
    const double dz = loss_scale * (iou.grad[i] + focal.grad[i]) * a * (1.0 - a) / tau;
    const auto f = feat.row(i);
    std::vector<double> dfeat(d);
    for (std::size_t k = 0; k < d; ++k) {
      dfeat[k] = dz * (g_a[k] - g_n[k]);
      dg_a[k] += dz * f[k];
      dg_n[k] -= dz * f[k];
    }
    const double proj = dot(f, dfeat);
    for (std::size_t k = 0; k < d; ++k) draw(i, k) = (dfeat[k] - f[k] * proj) / norms[i];
  }
  const double xi = out.result.score;
  const double dzx = loss_scale * dce * xi * (1.0 - xi) / tau;
  std::vector<double> dcls(d);
  for (std::size_t k = 0; k < d; ++k) {
    dcls[k] = dzx * (g_a[k] - g_n[k]) / static_cast<double>(n_views);
    dg_a[k] += dzx * cls_mean[k];
    dg_n[k] -= dzx * cls_mean[k];
  }

  out.gradients = prompts.zeros_like();
  std::vector<std::map<int, Matrix>> view_grads(n_views);
  parallel_for(n_views, [&](std::size_t v) {
    Tape& t = *tapes[v];
    const Matrix dmap = cloud.plan.backprop_view(v, draw);
    for (std::size_t l = 0; l < m; ++l) {
      Matrix& g = t.grad(graphs[v].key_maps[l]);
      for (std::size_t i = 0; i < g.size(); ++i) g.values()[i] += dmap.values()[i];
    }
    Matrix& gc = t.grad(graphs[v].class_token);
    for (std::size_t k = 0; k < d; ++k) gc(0, k) += dcls[k];
    t.backward();
    for (const auto& [layer, var] : graphs[v].prompts) {
      if (t.has_grad(var)) view_grads[v][layer] = t.grad(var);
    }
    tapes[v].reset();
  });
  for (std::size_t v = 0; v < n_views; ++v) {
    for (const auto& [layer, g] : view_grads[v]) {
      Matrix& dst = out.gradients.visual.tokens.at(layer);
      for (std::size_t i = 0; i < g.size(); ++i) dst.values()[i] += g.values()[i];
    }
  }

  Matrix& gn = text_tape.grad(tg.normal);
  Matrix& ga = text_tape.grad(tg.abnormal);
  for (std::size_t k = 0; k < d; ++k) {
    gn(0, k) += dg_n[k];
    ga(0, k) += dg_a[k];
  }
  text_tape.backward();
  if (tg.has_union && text_tape.has_grad(tg.union_prompts)) out.gradients.text.union_prompts = text_tape.grad(tg.union_prompts);
  if (tg.has_specific) {
    if (text_tape.has_grad(tg.normal_specific)) out.gradients.text.normal_specific = text_tape.grad(tg.normal_specific);
    if (text_tape.has_grad(tg.abnormal_specific)) {
      out.gradients.text.abnormal_specific = text_tape.grad(tg.abnormal_specific);
    }
  }
  return out;
}

/// Inference only: object score and per-point map.
inline AnomalyResult predict(const FrozenBackbone& bb, const PromptSet& prompts, const PreparedCloud& cloud,
                             double tau) {
  LossOptions opt;
  opt.tau = tau;
  return forward_backward(bb, prompts, cloud, opt, false).result;
}

// ---- optimizer ---------------------------------------------------------------

/// Adam with bias-corrected moments over every prompt tensor.
class Adam {
 public:
  Adam(const PromptSet& like, double beta1, double beta2, double eps)
      : m_(like.zeros_like()), v_(like.zeros_like()), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(PromptSet& params, const PromptSet& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    auto p = params.tensors();
    auto g = grads.tensors();
    auto m = m_.tensors();
    auto v = v_.tensors();
    for (std::size_t k = 0; k < p.size(); ++k) {
      for (std::size_t i = 0; i < p[k]->size(); ++i) {
        const double gi = g[k]->values()[i];
        double& mi = m[k]->values()[i];
        double& vi = v[k]->values()[i];
        mi = beta1_ * mi + (1.0 - beta1_) * gi;
        vi = beta2_ * vi + (1.0 - beta2_) * gi * gi;
        p[k]->values()[i] -= lr * (mi / c1) / (std::sqrt(vi / c2) + eps_);
      }
    }
  }

 private:
  PromptSet m_, v_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
};

// ---- training loop -------------------------------------------------------

struct StepLog {
  std::size_t step = 0;
  LossBreakdown loss;
};

struct TrainResult {
  PromptSet prompts;
  std::vector<LossBreakdown> epoch_loss;  // [0] before training, [e] after epoch e
  std::vector<StepLog> steps;
};

struct TrainCallbacks {
  std::function<void(const StepLog&)> on_step;
  std::function<void(int epoch, const PromptSet&)> on_epoch;
};

/// Mean loss over a set of clouds with fixed prompts.
inline LossBreakdown mean_loss(const FrozenBackbone& bb, const PromptSet& prompts,
                               const std::vector<PreparedCloud>& clouds, const LossOptions& opt) {
  LossBreakdown sum;
  for (const auto& c : clouds) sum += forward_backward(bb, prompts, c, opt, false).loss;
  return sum.scaled(1.0 / static_cast<double>(clouds.size()));
}

inline TrainResult train(const FrozenBackbone& bb, PromptSet prompts, const std::vector<PreparedCloud>& dataset,
                         const TrainConfig& config, double tau, const TrainCallbacks& callbacks = {}) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("training dataset is empty");
  prompts.validate(bb.config());
  const LossOptions opt{tau, config.focal_gamma, config.focal_alpha};

  TrainResult result;
  result.epoch_loss.push_back(mean_loss(bb, prompts, dataset, opt));
  Adam adam(prompts, config.adam_beta1, config.adam_beta2, config.adam_eps);
  std::size_t step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(config.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
    rng.shuffle(order);
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch));
      const double inv = 1.0 / static_cast<double>(end - begin);
      PromptSet grads = prompts.zeros_like();
      LossBreakdown loss;
      for (std::size_t b = begin; b < end; ++b) {
        ForwardResult fr = forward_backward(bb, prompts, dataset[order[b]], opt, true, inv);
        loss += fr.loss.scaled(inv);
        auto dst = grads.tensors();
        auto src = fr.gradients.tensors();
        for (std::size_t k = 0; k < dst.size(); ++k)
          for (std::size_t i = 0; i < dst[k]->size(); ++i) dst[k]->values()[i] += src[k]->values()[i];
      }
      adam.step(prompts, grads, config.learning_rate);
      StepLog log{++step, loss};
      if (callbacks.on_step) callbacks.on_step(log);
      result.steps.push_back(log);
    }
    result.epoch_loss.push_back(mean_loss(bb, prompts, dataset, opt));
    if (callbacks.on_epoch) callbacks.on_epoch(epoch, prompts);
  }
  result.prompts = std::move(prompts);
  return result;
}

}  // namespace mvp
