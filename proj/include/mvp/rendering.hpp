// Copyright (C) 2026 The MVP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "mvp/geometry.hpp"
#include "mvp/linalg.hpp"

namespace mvp {

inline constexpr std::int64_t kNoPoint = -1;

struct PixelRef {
  std::size_t view = 0;
  int row = 0;
  int col = 0;

  friend bool operator==(const PixelRef&, const PixelRef&) = default;
};

/// Camera-frame depth image. Invalid pixels hold depth 0.
struct DepthView {
  int width = 0;
  int height = 0;
  std::vector<double> depth;
  std::vector<std::uint8_t> valid;
  std::size_t view_index = 0;

  double at(int r, int c) const { return depth[static_cast<std::size_t>(r) * width + c]; }
  bool is_valid(int r, int c) const { return valid[static_cast<std::size_t>(r) * width + c] != 0; }
};

/// Exact pixel <-> point correspondence of one view (the z-buffer winners).
struct CorrespondenceMap {
  int width = 0;
  int height = 0;
  std::vector<std::int64_t> pixel_to_point;          // kNoPoint where empty
  std::vector<std::vector<PixelRef>> point_to_pixels;  // indexed by point

  std::int64_t winner(int r, int c) const {
    return pixel_to_point[static_cast<std::size_t>(r) * width + c];
  }
};

struct RenderedSet {
  std::vector<DepthView> views;
  std::vector<CorrespondenceMap> correspondences;
  std::vector<Matrix> normalized;  // height x width, values in [0, 1]

  std::size_t size() const { return views.size(); }
};

struct RenderOptions {
  int splat_radius = 1;  // half-width of the square splat in pixels
};

/// Rasterizes one view with a strict z-buffer. Each point covers the square of
/// pixels within `splat_radius` of the pixel containing its projection; on
/// equal depth the lower point index keeps the pixel.
inline std::pair<DepthView, CorrespondenceMap> render_view(const PointCloud& cloud, const ViewRig& rig,
                                                           std::size_t view_index,
                                                           const RenderOptions& options = {}) {
  if (cloud.points.empty()) throw std::invalid_argument("cannot render an empty point cloud");
  if (view_index >= rig.size()) throw std::out_of_range("view index outside the rig");
  if (options.splat_radius < 0) throw std::invalid_argument("splat radius must be non-negative");

  const auto& k = rig.intrinsics;
  const auto& pose = rig.poses[view_index];
  const int w = k.width;
  const int h = k.height;
  const std::size_t pixels = static_cast<std::size_t>(w) * h;

  DepthView view;
  view.width = w;
  view.height = h;
  view.view_index = view_index;
  view.depth.assign(pixels, 0.0);
  view.valid.assign(pixels, 0);

  std::vector<double> zbuf(pixels, std::numeric_limits<double>::infinity());
  std::vector<std::int64_t> owner(pixels, kNoPoint);

  const int s = options.splat_radius;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto proj = project_point(cloud.points[i], k, pose);
    if (!proj) continue;
    const double uf = std::floor(proj->u);
    const double vf = std::floor(proj->v);
    if (uf < 0.0 || vf < 0.0 || uf >= w || vf >= h) continue;
    const int col = static_cast<int>(uf);
    const int row = static_cast<int>(vf);
    for (int r = std::max(0, row - s); r <= std::min(h - 1, row + s); ++r) {
      for (int c = std::max(0, col - s); c <= std::min(w - 1, col + s); ++c) {
        const std::size_t idx = static_cast<std::size_t>(r) * w + c;
        if (proj->z < zbuf[idx]) {
          zbuf[idx] = proj->z;
          owner[idx] = static_cast<std::int64_t>(i);
        }
      }
    }
  }

  CorrespondenceMap corr;
  corr.width = w;
  corr.height = h;
  corr.pixel_to_point = owner;
  corr.point_to_pixels.resize(cloud.size());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t idx = static_cast<std::size_t>(r) * w + c;
      if (owner[idx] == kNoPoint) continue;
      view.depth[idx] = zbuf[idx];
      view.valid[idx] = 1;
      corr.point_to_pixels[static_cast<std::size_t>(owner[idx])].push_back({view_index, r, c});
    }
  }
  return {std::move(view), std::move(corr)};
}

/// Min-max normalizes valid depths and inverts them so near surfaces are bright.
/// Invalid pixels stay 0; a constant-depth view maps every valid pixel to 1.
inline Matrix normalize_depth(const DepthView& view) {
  constexpr double eps = 1e-9;
  Matrix out(static_cast<std::size_t>(view.height), static_cast<std::size_t>(view.width), 0.0);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < view.depth.size(); ++i) {
    if (!view.valid[i]) continue;
    lo = std::min(lo, view.depth[i]);
    hi = std::max(hi, view.depth[i]);
  }
  if (!(lo <= hi)) return out;
  for (std::size_t i = 0; i < view.depth.size(); ++i) {
    if (!view.valid[i]) continue;
    out.values()[i] = hi == lo ? 1.0 : 1.0 - (view.depth[i] - lo) / (hi - lo + eps);
  }
  return out;
}

inline RenderedSet render_all(const PointCloud& cloud, const ViewRig& rig, const RenderOptions& options = {}) {
  RenderedSet set;
  set.views.reserve(rig.size());
  set.correspondences.reserve(rig.size());
  for (std::size_t v = 0; v < rig.size(); ++v) {
    auto [view, corr] = render_view(cloud, rig, v, options);
    set.normalized.push_back(normalize_depth(view));
    set.views.push_back(std::move(view));
    set.correspondences.push_back(std::move(corr));
  }
  return set;
}

/// Fraction of points that win at least one pixel in at least one view.
inline double coverage(const RenderedSet& rendered, std::size_t n_points) {
  if (n_points == 0) return 0.0;
  std::vector<bool> seen(n_points, false);
  for (const auto& corr : rendered.correspondences) {
    for (auto p : corr.pixel_to_point) {
      if (p != kNoPoint && static_cast<std::size_t>(p) < n_points) seen[static_cast<std::size_t>(p)] = true;
    }
  }
  std::size_t count = 0;
  for (bool b : seen) count += b ? 1 : 0;
  return static_cast<double>(count) / static_cast<double>(n_points);
}

}  // namespace mvp
