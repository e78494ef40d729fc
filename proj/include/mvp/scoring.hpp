// Copyright (C) 2026 The MVP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <vector>

#include "mvp/encoder.hpp"
#include "mvp/linalg.hpp"
#include "mvp/rendering.hpp"

namespace mvp {

inline constexpr double kDefaultTemperature = 0.07;
inline constexpr double kInvisibleScore = 0.5;

struct PointFeatures {
  Matrix features;                  // n x dim, unit rows where visible
  std::vector<std::size_t> visible; // contributing (view, key layer) pairs per point
};

struct AnomalyResult {
  double score = 0.5;       // object-wise
  std::vector<double> map;  // point-wise
};

/// Probability of the abnormal state from a (normal, abnormal) similarity pair.
inline double abnormal_probability(double sim_normal, double sim_abnormal, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  return 1.0 / (1.0 + std::exp((sim_normal - sim_abnormal) / tau));
}

/// Bilinear upsampling of a (rows*cols) x dim feature grid to (height*width) x dim,
/// with the corner cells aligned to the corner pixel centers.
inline Matrix upsample_feature_map(const Matrix& map, int grid_rows, int grid_cols, int height, int width) {
  if (grid_rows < 1 || grid_cols < 1 || height < 1 || width < 1) throw std::invalid_argument("upsample: empty size");
  require_shape(map, static_cast<std::size_t>(grid_rows * grid_cols), map.cols(), "feature map");
  const std::size_t d = map.cols();
  Matrix out(static_cast<std::size_t>(height) * width, d);
  auto coord = [](int i, int n_out, int n_in) {
    return n_out > 1 ? static_cast<double>(i) * (n_in - 1) / (n_out - 1) : 0.0;
  };
  for (int r = 0; r < height; ++r) {
    const double gy = coord(r, height, grid_rows);
    const int y0 = std::min(static_cast<int>(std::floor(gy)), grid_rows - 1);
    const int y1 = std::min(y0 + 1, grid_rows - 1);
    const double wy = gy - y0;
    for (int c = 0; c < width; ++c) {
      const double gx = coord(c, width, grid_cols);
      const int x0 = std::min(static_cast<int>(std::floor(gx)), grid_cols - 1);
      const int x1 = std::min(x0 + 1, grid_cols - 1);
      const double wx = gx - x0;
      auto dst = out.row(static_cast<std::size_t>(r) * width + c);
      const auto a = map.row(static_cast<std::size_t>(y0 * grid_cols + x0));
      const auto b = map.row(static_cast<std::size_t>(y0 * grid_cols + x1));
      const auto e = map.row(static_cast<std::size_t>(y1 * grid_cols + x0));
      const auto f = map.row(static_cast<std::size_t>(y1 * grid_cols + x1));
      for (std::size_t k = 0; k < d; ++k) {
        dst[k] = (1 - wy) * ((1 - wx) * a[k] + wx * b[k]) + wy * ((1 - wx) * e[k] + wx * f[k]);
      }
    }
  }
  return out;
}

/// Linear map from per-view grid features to raw (unnormalized) point features.
/// For point i the raw feature is the mean, over the (view, key layer) pairs in
/// which i is visible, of the upsampled feature averaged over the pixels i wins.
class AggregationPlan {
 public:
  struct Entry {
    std::uint32_t point;
    std::uint32_t cell;
    double weight;
  };

  AggregationPlan() = default;

  AggregationPlan(const std::vector<CorrespondenceMap>& correspondences, std::size_t n_points, int grid,
                  std::size_t n_layers)
      : n_points_(n_points), grid_(grid), n_layers_(n_layers), per_view_(correspondences.size()),
        visible_(n_points, 0) {
    if (grid < 1 || n_layers < 1) throw std::invalid_argument("aggregation needs a grid and key layers");
    std::vector<std::size_t> views_seen(n_points, 0);
    for (const auto& corr : correspondences) {
      if (corr.point_to_pixels.size() != n_points) throw std::invalid_argument("correspondence size mismatch");
      for (std::size_t i = 0; i < n_points; ++i) views_seen[i] += corr.point_to_pixels[i].empty() ? 0 : 1;
    }
    for (std::size_t i = 0; i < n_points; ++i) visible_[i] = views_seen[i] * n_layers;

    const std::size_t cells = static_cast<std::size_t>(grid) * grid;
    std::vector<double> acc(cells);
    for (std::size_t v = 0; v < correspondences.size(); ++v) {
      const auto& corr = correspondences[v];
      auto coord = [&](int i, int n_out) {
        return n_out > 1 ? static_cast<double>(i) * (grid - 1) / (n_out - 1) : 0.0;
      };
      for (std::size_t i = 0; i < n_points; ++i) {
        const auto& pix = corr.point_to_pixels[i];
        if (pix.empty()) continue;
        std::fill(acc.begin(), acc.end(), 0.0);
        const double w_point = 1.0 / (static_cast<double>(pix.size()) * static_cast<double>(visible_[i]));
        for (const auto& p : pix) {
          const double gy = coord(p.row, corr.height);
          const double gx = coord(p.col, corr.width);
          const int y0 = std::min(static_cast<int>(std::floor(gy)), grid - 1);
          const int x0 = std::min(static_cast<int>(std::floor(gx)), grid - 1);
          const int y1 = std::min(y0 + 1, grid - 1);
          const int x1 = std::min(x0 + 1, grid - 1);
          const double wy = gy - y0, wx = gx - x0;
          acc[static_cast<std::size_t>(y0 * grid + x0)] += w_point * (1 - wy) * (1 - wx);
          acc[static_cast<std::size_t>(y0 * grid + x1)] += w_point * (1 - wy) * wx;
          acc[static_cast<std::size_t>(y1 * grid + x0)] += w_point * wy * (1 - wx);
          acc[static_cast<std::size_t>(y1 * grid + x1)] += w_point * wy * wx;
        }
        for (std::size_t cell = 0; cell < cells; ++cell) {
          if (acc[cell] != 0.0) {
            per_view_[v].push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(cell), acc[cell]});
          }
        }
      }
    }
  }

  std::size_t n_points() const { return n_points_; }
  std::size_t n_views() const { return per_view_.size(); }
  std::size_t n_layers() const { return n_layers_; }
  const std::vector<std::size_t>& visible() const { return visible_; }

  /// maps[v][l] is the (grid*grid) x dim map of key layer l in view v.
  Matrix apply(const std::vector<std::vector<const Matrix*>>& maps) const {
    check(maps);
    const std::size_t d = maps.front().front()->cols();
    Matrix out(n_points_, d, 0.0);
    for (std::size_t v = 0; v < per_view_.size(); ++v) {
      for (const Matrix* m : maps[v]) {
        for (const auto& e : per_view_[v]) {
          auto dst = out.row(e.point);
          const auto src = m->row(e.cell);
          for (std::size_t k = 0; k < d; ++k) dst[k] += e.weight * src[k];
        }
      }
    }
    return out;
  }

  /// Gradient of `apply` with respect to one view's map (identical for every key layer).
  Matrix backprop_view(std::size_t view, const Matrix& grad_out) const {
    const std::size_t d = grad_out.cols();
    Matrix g(static_cast<std::size_t>(grid_) * grid_, d, 0.0);
    for (const auto& e : per_view_[view]) {
      auto dst = g.row(e.cell);
      const auto src = grad_out.row(e.point);
      for (std::size_t k = 0; k < d; ++k) dst[k] += e.weight * src[k];
    }
    return g;
  }

 private:
  void check(const std::vector<std::vector<const Matrix*>>& maps) const {
    if (maps.size() != per_view_.size()) throw std::invalid_argument("aggregation: view count mismatch");
    for (const auto& per_layer : maps) {
      if (per_layer.size() != n_layers_) throw std::invalid_argument("aggregation: key layer count mismatch");
    }
  }

  std::size_t n_points_ = 0;
  int grid_ = 0;
  std::size_t n_layers_ = 0;
  std::vector<std::vector<Entry>> per_view_;
  std::vector<std::size_t> visible_;
};

/// L2-normalizes visible rows of a raw aggregate; invisible rows stay zero.
inline PointFeatures finalize_point_features(Matrix raw, std::vector<std::size_t> visible) {
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    if (visible[i] == 0) {
      for (double& x : raw.row(i)) x = 0.0;
      continue;
    }
    const double n = l2_norm(raw.row(i));
    if (n > 0.0)
      for (double& x : raw.row(i)) x /= n;
  }
  return {std::move(raw), std::move(visible)};
}

inline PointFeatures aggregate_point_features(const std::vector<ImageEncoding>& encodings,
                                              const std::vector<CorrespondenceMap>& correspondences,
                                              std::size_t n_points) {
  if (encodings.size() != correspondences.size()) {
    throw std::invalid_argument("encodings and correspondences must align by view");
  }
  if (encodings.empty()) throw std::invalid_argument("no views to aggregate");
  const std::size_t m = encodings.front().key_layer_maps.size();
  AggregationPlan plan(correspondences, n_points, encodings.front().grid, m);
  std::vector<std::vector<const Matrix*>> maps;
  for (const auto& e : encodings) {
    std::vector<const Matrix*> layers;
    for (const auto& map : e.key_layer_maps) layers.push_back(&map);
    maps.push_back(std::move(layers));
  }
  return finalize_point_features(plan.apply(maps), plan.visible());
}

/// Object score from the view-averaged class token.
inline double anomaly_score(const std::vector<ImageEncoding>& encodings, const TextEncoding& text, double tau) {
  if (encodings.empty()) throw std::invalid_argument("no views to score");
  const std::size_t d = encodings.front().class_token.size();
  std::vector<double> mean(d, 0.0);
  for (const auto& e : encodings)
    for (std::size_t k = 0; k < d; ++k) mean[k] += e.class_token[k];
  for (double& x : mean) x /= static_cast<double>(encodings.size());
  return abnormal_probability(dot(mean, text.features.row(0)), dot(mean, text.features.row(1)), tau);
}

inline std::vector<double> anomaly_map(const PointFeatures& points, const TextEncoding& text, double tau) {
  std::vector<double> out(points.features.rows(), kInvisibleScore);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (points.visible[i] == 0) continue;
    const auto f = points.features.row(i);
    out[i] = abnormal_probability(dot(f, text.features.row(0)), dot(f, text.features.row(1)), tau);
  }
  return out;
}

// ---- generic multi-view integration ----------------------------------------

/// Output of a single-view 2D detector: pixel scores in [0, 1] and an image score.
struct ViewScore {
  Matrix pixel_scores;  // height x width
  double scalar = 0.0;
};

/// Any 2D detector that can be lifted to point clouds through the projection.
using ViewScorer = std::function<ViewScore(const Matrix& normalized_depth)>;

enum class Reducer { Mean, Max };

inline double reduce(const std::vector<double>& xs, Reducer r) {
  if (xs.empty()) throw std::invalid_argument("reduce over nothing");
  if (r == Reducer::Max) return *std::max_element(xs.begin(), xs.end());
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Fuses per-view results onto points: each point takes the mean of the pixel
/// scores it wins in a view, then the reducer across views; the object score is
/// the reducer over view scalars. Points never visible get the neutral score.
inline AnomalyResult integrate_view_scores(const std::vector<ViewScore>& scores,
                                           const std::vector<CorrespondenceMap>& correspondences,
                                           std::size_t n_points, Reducer reducer) {
  if (scores.size() != correspondences.size() || scores.empty()) {
    throw std::invalid_argument("view scores and correspondences must align and be non-empty");
  }
  std::vector<std::vector<double>> per_point(n_points);
  std::vector<double> scalars;
  for (std::size_t v = 0; v < scores.size(); ++v) {
    const auto& corr = correspondences[v];
    require_shape(scores[v].pixel_scores, static_cast<std::size_t>(corr.height), static_cast<std::size_t>(corr.width),
                  "view score");
    scalars.push_back(scores[v].scalar);
    for (std::size_t i = 0; i < n_points; ++i) {
      const auto& pix = corr.point_to_pixels[i];
      if (pix.empty()) continue;
      double s = 0.0;
      for (const auto& p : pix) s += scores[v].pixel_scores(static_cast<std::size_t>(p.row), static_cast<std::size_t>(p.col));
      per_point[i].push_back(s / static_cast<double>(pix.size()));
    }
  }
  AnomalyResult out;
  out.score = std::clamp(reduce(scalars, reducer), 0.0, 1.0);
  out.map.resize(n_points, kInvisibleScore);
  for (std::size_t i = 0; i < n_points; ++i) {
    if (!per_point[i].empty()) out.map[i] = std::clamp(reduce(per_point[i], reducer), 0.0, 1.0);
  }
  return out;
}

/// Runs a 2D scorer on every rendered view and fuses the results.
inline AnomalyResult score_with_view_scorer(const RenderedSet& rendered, std::size_t n_points, const ViewScorer& scorer,
                                            Reducer reducer) {
  std::vector<ViewScore> scores;
  for (const auto& img : rendered.normalized) scores.push_back(scorer(img));
  return integrate_view_scores(scores, rendered.correspondences, n_points, reducer);
}

}  // namespace mvp
