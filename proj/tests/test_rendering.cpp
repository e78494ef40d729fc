// Copyright (C) 2026 The MVP Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mvp/data.hpp"
#include "mvp/rendering.hpp"

using namespace mvp;

namespace {

ViewRig axis_rig() {
  ViewRig rig;
  rig.intrinsics = {100.0, 100.0, 112.0, 112.0, 224, 224};
  rig.poses.push_back({Mat3::identity(), {0.0, 0.0, 0.0}});
  return rig;
}

PointCloud sphere(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    c.points.push_back(normalized(Vec3{rng.normal(), rng.normal(), rng.normal()}));
  }
  return c;
}

/// Bound on the distance between a winner and the back-projection of any
/// pixel center it covers: the pixel center lies within (s + 0.5) px of the
/// projection along each axis.
double splat_tolerance(int s, double z, double f) { return (s + 0.5) * std::numbers::sqrt2 * z / f + 1e-6; }

}  // namespace

TEST(RenderView, SinglePointNoSplat) {
  PointCloud c;
  c.points = {{0, 0, 2}};
  const auto [view, corr] = render_view(c, axis_rig(), 0, {0});
  int valid = 0;
  for (auto v : view.valid) valid += v;
  EXPECT_EQ(valid, 1);
  EXPECT_TRUE(view.is_valid(112, 112));
  EXPECT_DOUBLE_EQ(view.at(112, 112), 2.0);
  EXPECT_EQ(corr.winner(112, 112), 0);
  ASSERT_EQ(corr.point_to_pixels[0].size(), 1u);
  EXPECT_EQ(corr.point_to_pixels[0][0], (PixelRef{0, 112, 112}));
}

TEST(RenderView, DefaultSplatCoversThreeByThree) {
  PointCloud c;
  c.points = {{0, 0, 2}};
  const auto [view, corr] = render_view(c, axis_rig(), 0);
  EXPECT_EQ(corr.point_to_pixels[0].size(), 9u);
  for (int r = 111; r <= 113; ++r)
    for (int col = 111; col <= 113; ++col) EXPECT_EQ(corr.winner(r, col), 0);
}

TEST(RenderView, NearerPointWins) {
  PointCloud c;
  c.points = {{0, 0, 3}, {0, 0, 2}};
  const auto [view, corr] = render_view(c, axis_rig(), 0, {0});
  EXPECT_DOUBLE_EQ(view.at(112, 112), 2.0);
  EXPECT_EQ(corr.winner(112, 112), 1);
  EXPECT_TRUE(corr.point_to_pixels[0].empty());
}

TEST(RenderView, EqualDepthLowerIndexWins) {
  PointCloud c;
  c.points = {{0, 0, 2}, {0, 0, 2}};
  const auto [view, corr] = render_view(c, axis_rig(), 0, {0});
  EXPECT_EQ(corr.winner(112, 112), 0);
}

TEST(RenderView, OutOfFrameIsAbsent) {
  PointCloud c;
  // u = 112 + 100 * x / 2 = 224 + 5
  c.points = {{2.34, 0, 2}, {0, 0, 2}};
  const auto [view, corr] = render_view(c, axis_rig(), 0);
  EXPECT_TRUE(corr.point_to_pixels[0].empty());
  EXPECT_FALSE(corr.point_to_pixels[1].empty());
  for (auto w : corr.pixel_to_point) EXPECT_NE(w, 0);
}

TEST(RenderView, BehindIsAbsent) {
  PointCloud c;
  c.points = {{0, 0, -2}};
  const auto [view, corr] = render_view(c, axis_rig(), 0);
  for (auto v : view.valid) EXPECT_EQ(v, 0);
  EXPECT_TRUE(corr.point_to_pixels[0].empty());
}

TEST(RenderView, Errors) {
  EXPECT_THROW(render_view(PointCloud{}, axis_rig(), 0), std::invalid_argument);
  PointCloud c;
  c.points = {{0, 0, 2}};
  EXPECT_THROW(render_view(c, axis_rig(), 1), std::out_of_range);
}

TEST(RenderAll, NineViews) {
  const auto cloud = sphere(2000, 3);
  const auto rig = generate_view_rig(9, 2.5, {0, 0, 0}, CameraIntrinsics::square(64));
  const auto rs = render_all(cloud, rig);
  EXPECT_EQ(rs.size(), 9u);
  EXPECT_EQ(rs.normalized.size(), 9u);
  EXPECT_EQ(rs.correspondences.size(), 9u);
  for (std::size_t v = 0; v < 9; ++v) {
    EXPECT_EQ(rs.views[v].view_index, v);
    for (std::size_t i = 0; i < rs.views[v].valid.size(); ++i) {
      EXPECT_EQ(rs.views[v].valid[i] == 0, rs.normalized[v].values()[i] == 0.0);
      EXPECT_EQ(rs.views[v].valid[i] == 0, rs.views[v].depth[i] == 0.0);
      EXPECT_GE(rs.normalized[v].values()[i], 0.0);
      EXPECT_LE(rs.normalized[v].values()[i], 1.0);
    }
  }
}

TEST(RenderAll, InvariantsOnSyntheticClouds) {
  SyntheticSpec spec;
  spec.clouds_per_category = 2;
  spec.points_per_cloud = 600;
  const auto split = generate(spec);
  const auto rig = generate_view_rig(9, 2.5, {0, 0, 0}, CameraIntrinsics::square(64));
  for (const auto& lc : split.train) {
    const auto cloud = normalize_cloud(lc.cloud);
    const auto rs = render_all(cloud, rig);
    for (std::size_t v = 0; v < rs.size(); ++v) {
      const auto& view = rs.views[v];
      const auto& corr = rs.correspondences[v];
      // Bijection between pixel_to_point and point_to_pixels.
      std::size_t listed = 0;
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (const auto& px : corr.point_to_pixels[i]) {
          EXPECT_EQ(px.view, v);
          EXPECT_EQ(corr.winner(px.row, px.col), static_cast<std::int64_t>(i));
          ++listed;
        }
      }
      std::size_t owned = 0;
      for (auto w : corr.pixel_to_point) owned += w == kNoPoint ? 0 : 1;
      EXPECT_EQ(listed, owned);
      // z-buffer optimality against a brute-force splat of every point.
      std::vector<double> best(view.depth.size(), std::numeric_limits<double>::infinity());
      for (const auto& p : cloud.points) {
        const auto pr = project_point(p, rig.intrinsics, rig.poses[v]);
        if (!pr) continue;
        const int c0 = static_cast<int>(std::floor(pr->u)), r0 = static_cast<int>(std::floor(pr->v));
        if (c0 < 0 || r0 < 0 || c0 >= view.width || r0 >= view.height) continue;
        for (int r = r0 - 1; r <= r0 + 1; ++r)
          for (int c = c0 - 1; c <= c0 + 1; ++c)
            if (r >= 0 && c >= 0 && r < view.height && c < view.width)
              best[static_cast<std::size_t>(r) * view.width + c] = std::min(best[static_cast<std::size_t>(r) * view.width + c], pr->z);
      }
      for (std::size_t i = 0; i < best.size(); ++i) {
        if (std::isinf(best[i])) {
          EXPECT_EQ(view.valid[i], 0);
        } else {
          EXPECT_EQ(view.depth[i], best[i]);
        }
      }
      // Back-projection consistency.
      for (int r = 0; r < view.height; ++r) {
        for (int c = 0; c < view.width; ++c) {
          const auto w = corr.winner(r, c);
          if (w == kNoPoint) continue;
          const double z = view.at(r, c);
          const Vec3 q = back_project(c + 0.5, r + 0.5, z, rig.intrinsics, rig.poses[v]);
          EXPECT_LE(norm(q - cloud.points[static_cast<std::size_t>(w)]), splat_tolerance(1, z, rig.intrinsics.fx));
        }
      }
    }
  }
}

TEST(NormalizeDepth, TwoValues) {
  DepthView v;
  v.width = 2;
  v.height = 1;
  v.depth = {2.0, 4.0};
  v.valid = {1, 1};
  const auto m = normalize_depth(v);
  EXPECT_NEAR(m(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(m(0, 1), 0.0, 1e-8);
}

TEST(NormalizeDepth, ConstantPlaneAndEmpty) {
  DepthView v;
  v.width = 3;
  v.height = 1;
  v.depth = {2.0, 0.0, 2.0};
  v.valid = {1, 0, 1};
  const auto m = normalize_depth(v);
  EXPECT_EQ(m(0, 0), 1.0);
  EXPECT_EQ(m(0, 1), 0.0);
  EXPECT_EQ(m(0, 2), 1.0);
  v.depth = {0, 0, 0};
  v.valid = {0, 0, 0};
  const auto blank = normalize_depth(v);
  for (double x : blank.values()) EXPECT_EQ(x, 0.0);
}

TEST(Coverage, Bounds) {
  PointCloud c;
  c.points = {{0, 0, 2}};
  const auto rs = render_all(c, axis_rig());
  EXPECT_EQ(coverage(rs, 1), 1.0);
  RenderedSet empty;
  EXPECT_EQ(coverage(empty, 5), 0.0);
}

TEST(Coverage, TopViewAtMostOne) {
  const auto cloud = sphere(500, 9);
  const auto rig = generate_view_rig(9, 2.5, {0, 0, 0}, CameraIntrinsics::square(64));
  ViewRig top{rig.intrinsics, {rig.poses.back()}};
  const double c = coverage(render_all(cloud, top), cloud.size());
  EXPECT_GT(c, 0.0);
  EXPECT_LE(c, 1.0);
}

TEST(Coverage, NineViewsBeatOneOnSphere) {
  const auto cloud = sphere(5000, 1);
  const auto rig = generate_view_rig(9, 2.5, {0, 0, 0}, CameraIntrinsics::square(224));
  const double c1 = coverage(render_all(cloud, rig.prefix(1)), cloud.size());
  const double c9 = coverage(render_all(cloud, rig), cloud.size());
  EXPECT_GT(c9, c1);
  // A splat wide enough to close the gaps between surface samples hides the far side.
  const double wide = coverage(render_all(cloud, rig.prefix(1), {4}), cloud.size());
  EXPECT_LT(wide, 0.6);
}

TEST(Coverage, NonDecreasingOverRigPrefixes) {
  const auto cloud = sphere(3000, 2);
  const auto rig = generate_view_rig(9, 2.5, {0, 0, 0}, CameraIntrinsics::square(64));
  double prev = 0.0;
  for (std::size_t k = 1; k <= 9; ++k) {
    const double c = coverage(render_all(cloud, rig.prefix(k)), cloud.size());
    EXPECT_GE(c, prev) << "k = " << k;
    prev = c;
  }
}
