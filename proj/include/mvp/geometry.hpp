// Copyright (C) 2026 The MVP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvp/linalg.hpp"

namespace mvp {

/// Points at or behind this camera-frame depth cannot be projected.
inline constexpr double kMinDepth = 1e-6;

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<std::uint8_t> labels;         // empty, or one {0,1} entry per point
  std::optional<std::uint8_t> object_label;  // 1 iff any point is anomalous
  std::string category;

  std::size_t size() const { return points.size(); }
  bool has_labels() const { return !labels.empty(); }

  /// Throws if the cloud cannot enter the pipeline.
  void validate() const {
    if (points.empty()) throw std::invalid_argument("point cloud is empty");
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!is_finite(points[i])) {
        throw std::invalid_argument("point " + std::to_string(i) + " has a non-finite coordinate");
      }
    }
    if (!labels.empty()) {
      if (labels.size() != points.size()) {
        throw std::invalid_argument("label count " + std::to_string(labels.size()) +
                                    " does not match point count " + std::to_string(points.size()));
      }
      std::uint8_t any = 0;
      for (auto l : labels) {
        if (l > 1) throw std::invalid_argument("point labels must be 0 or 1");
        any |= l;
      }
      if (object_label && *object_label != any) {
        throw std::invalid_argument("object label disagrees with point labels");
      }
    }
  }
};

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("focal lengths must be positive");
    if (width <= 0 || height <= 0) throw std::invalid_argument("image size must be positive");
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
      throw std::invalid_argument("principal point outside the image");
    }
  }

  /// Square image with the principal point at the center. A focal length of
  /// 200 px on a 224 px frame scales linearly with the image size.
  static CameraIntrinsics square(int size, double focal = 0.0) {
    if (focal <= 0.0) focal = 200.0 * size / 224.0;
    return {focal, focal, size / 2.0, size / 2.0, size, size};
  }
};

/// Maps object coordinates into the camera frame: x_c = R p + t.
struct RigidTransform {
  Mat3 rotation = Mat3::identity();
  Vec3 translation{0.0, 0.0, 0.0};

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  bool is_valid(double tol = 1e-9) const {
    const Mat3 rtr = rotation.transposed() * rotation;
    const Mat3 id = Mat3::identity();
    for (std::size_t i = 0; i < 9; ++i) {
      if (std::abs(rtr.m[i] - id.m[i]) > tol) return false;
    }
    return std::abs(rotation.det() - 1.0) <= tol;
  }
};

struct ViewRig {
  CameraIntrinsics intrinsics;
  std::vector<RigidTransform> poses;

  std::size_t size() const { return poses.size(); }

  /// The first `n` poses of this rig.
  ViewRig prefix(std::size_t n) const {
    if (n == 0 || n > poses.size()) throw std::invalid_argument("rig prefix out of range");
    return {intrinsics, std::vector<RigidTransform>(poses.begin(), poses.begin() + static_cast<long>(n))};
  }
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double z = 0.0;
};

/// Pinhole projection. Returns nullopt when the point is behind the camera.
inline std::optional<Projection> project_point(const Vec3& p, const CameraIntrinsics& k,
                                               const RigidTransform& pose) {
  if (!is_finite(p)) throw std::invalid_argument("cannot project a non-finite point");
  const Vec3 c = pose.apply(p);
  if (c[2] <= kMinDepth) return std::nullopt;
  return Projection{k.cx + k.fx * c[0] / c[2], k.cy + k.fy * c[1] / c[2], c[2]};
}

inline Vec3 back_project(double u, double v, double z, const CameraIntrinsics& k,
                         const RigidTransform& pose) {
  if (!(z > kMinDepth)) throw std::domain_error("back_project requires positive depth");
  const Vec3 cam{z * (u - k.cx) / k.fx, z * (v - k.cy) / k.fy, z};
  return pose.rotation.transposed() * (cam - pose.translation);
}

/// Camera at `eye` whose optical axis passes through `target`. Camera axes
/// follow the x-right, y-down, z-forward convention.
inline RigidTransform look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 forward = normalized(target - eye);
  Vec3 up{0.0, 0.0, 1.0};
  if (std::abs(dot(forward, up)) > 1.0 - 1e-9) up = {0.0, 1.0, 0.0};
  const Vec3 right = normalized(cross(forward, up));
  const Vec3 down = cross(forward, right);
  RigidTransform t;
  t.rotation = Mat3::from_rows(right, down, forward);
  t.translation = -1.0 * (t.rotation * eye);
  return t;
}

namespace detail {

// Orders azimuth slots so that every prefix is spread around the object:
// each next slot maximizes the circular gap to the ones already chosen,
// lowest index on ties.
inline std::vector<std::size_t> spread_order(std::size_t n) {
  std::vector<std::size_t> order;
  std::vector<bool> used(n, false);
  for (std::size_t step = 0; step < n; ++step) {
    std::size_t best = 0;
    std::size_t best_gap = 0;
    bool found = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      std::size_t gap = n;
      for (std::size_t j : order) {
        const std::size_t d = i > j ? i - j : j - i;
        gap = std::min(gap, std::min(d, n - d));
      }
      if (!found || gap > best_gap) {
        best = i;
        best_gap = gap;
        found = true;
      }
    }
    used[best] = true;
    order.push_back(best);
  }
  return order;
}

}  // namespace detail

inline constexpr double kRigElevationDeg = 35.0;

/// Deterministic look-at rig on a sphere around `center`: cameras at +35 deg
/// elevation on evenly spaced azimuths, plus a top-down camera (last) when the
/// count is odd and greater than one. Nine views give eight 45 deg azimuth
/// steps and the top camera.
inline ViewRig generate_view_rig(std::size_t n_views, double radius, const Vec3& center,
                                 const CameraIntrinsics& intrinsics) {
  if (n_views == 0) throw std::invalid_argument("a view rig needs at least one view");
  if (!(radius > 0.0)) throw std::invalid_argument("rig radius must be positive");
  intrinsics.validate();

  const bool top = n_views > 1 && n_views % 2 == 1;
  const std::size_t ring = top ? n_views - 1 : n_views;
  const double el = kRigElevationDeg * std::numbers::pi / 180.0;

  ViewRig rig;
  rig.intrinsics = intrinsics;
  for (std::size_t slot : detail::spread_order(ring)) {
    const double az = 2.0 * std::numbers::pi * static_cast<double>(slot) / static_cast<double>(ring);
    const Vec3 dir{std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
    rig.poses.push_back(look_at(center + radius * dir, center));
  }
  if (top) rig.poses.push_back(look_at(center + Vec3{0.0, 0.0, radius}, center));
  return rig;
}

/// Centers the cloud at the origin and scales it to unit maximum radius.
/// A cloud whose points all coincide is only centered.
inline PointCloud normalize_cloud(const PointCloud& cloud) {
  if (cloud.points.empty()) throw std::invalid_argument("point cloud is empty");
  Vec3 c{0.0, 0.0, 0.0};
  for (const auto& p : cloud.points) c = c + p;
  c = (1.0 / static_cast<double>(cloud.size())) * c;

  PointCloud out = cloud;
  double max_r = 0.0;
  for (auto& p : out.points) {
    p = p - c;
    max_r = std::max(max_r, norm(p));
  }
  if (max_r > 1e-300) {
    for (auto& p : out.points) p = (1.0 / max_r) * p;
  }
  return out;
}

}  // namespace mvp
