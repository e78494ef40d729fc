// Copyright (C) 2026 The MVP Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mvp/geometry.hpp"
#include "mvp/random.hpp"

using namespace mvp;

namespace {

CameraIntrinsics k224() { return {100.0, 100.0, 112.0, 112.0, 224, 224}; }

RigidTransform identity_pose() { return {Mat3::identity(), {0.0, 0.0, 0.0}}; }

RigidTransform random_pose(Rng& rng) {
  const Vec3 eye{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
  const Vec3 target{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
  return look_at(eye, target);
}

}  // namespace

TEST(Projection, OpticalAxisHitsPrincipalPoint) {
  const auto p = project_point({0, 0, 2}, k224(), identity_pose());
  ASSERT_TRUE(p);
  EXPECT_DOUBLE_EQ(p->u, 112.0);
  EXPECT_DOUBLE_EQ(p->v, 112.0);
  EXPECT_DOUBLE_EQ(p->z, 2.0);
}

TEST(Projection, OffAxisPoint) {
  const auto p = project_point({1, 0, 2}, k224(), identity_pose());
  ASSERT_TRUE(p);
  EXPECT_DOUBLE_EQ(p->u, 162.0);
  EXPECT_DOUBLE_EQ(p->v, 112.0);
  EXPECT_DOUBLE_EQ(p->z, 2.0);
}

TEST(Projection, BehindCamera) {
  EXPECT_FALSE(project_point({0, 0, -1}, k224(), identity_pose()));
  EXPECT_FALSE(project_point({0, 0, 0}, k224(), identity_pose()));
  EXPECT_FALSE(project_point({0, 0, kMinDepth}, k224(), identity_pose()));
}

TEST(Projection, RejectsNaN) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(project_point({nan, 0, 1}, k224(), identity_pose()), std::invalid_argument);
}

TEST(BackProjection, Examples) {
  const Vec3 a = back_project(112, 112, 2, k224(), identity_pose());
  EXPECT_NEAR(a[0], 0, 1e-12);
  EXPECT_NEAR(a[1], 0, 1e-12);
  EXPECT_NEAR(a[2], 2, 1e-12);
  const Vec3 b = back_project(162, 112, 2, k224(), identity_pose());
  EXPECT_NEAR(b[0], 1, 1e-12);
  EXPECT_NEAR(b[1], 0, 1e-12);
  EXPECT_NEAR(b[2], 2, 1e-12);
}

TEST(BackProjection, RejectsNonPositiveDepth) {
  EXPECT_THROW(back_project(1, 1, 0.0, k224(), identity_pose()), std::domain_error);
  EXPECT_THROW(back_project(1, 1, -2.0, k224(), identity_pose()), std::domain_error);
}

TEST(BackProjection, RoundTripExample) {
  Rng rng(11);
  const Vec3 p{0.3, -0.2, 1.7};
  for (int t = 0; t < 20; ++t) {
    const auto pose = random_pose(rng);
    const auto proj = project_point(p, k224(), pose);
    if (!proj) continue;
    const Vec3 q = back_project(proj->u, proj->v, proj->z, k224(), pose);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(q[i], p[i], 1e-9);
  }
}

TEST(BackProjection, RandomizedRoundTrip) {
  Rng rng(12345);
  int checked = 0;
  for (int t = 0; t < 10000; ++t) {
    const CameraIntrinsics k{rng.uniform(50, 400), rng.uniform(50, 400), rng.uniform(0, 63.9), rng.uniform(0, 63.9),
                             64, 64};
    const auto pose = random_pose(rng);
    const Vec3 p{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    const auto proj = project_point(p, k, pose);
    if (!proj) continue;
    const Vec3 q = back_project(proj->u, proj->v, proj->z, k, pose);
    EXPECT_LE(norm(q - p), 1e-9 * std::max(1.0, norm(p)));
    ++checked;
  }
  EXPECT_GT(checked, 5000);
}

TEST(Intrinsics, Validation) {
  EXPECT_NO_THROW(k224().validate());
  EXPECT_THROW((CameraIntrinsics{0, 1, 1, 1, 4, 4}.validate()), std::invalid_argument);
  EXPECT_THROW((CameraIntrinsics{1, 1, 4, 1, 4, 4}.validate()), std::invalid_argument);
  EXPECT_THROW((CameraIntrinsics{1, 1, 1, -0.5, 4, 4}.validate()), std::invalid_argument);
  const auto sq = CameraIntrinsics::square(224);
  EXPECT_DOUBLE_EQ(sq.fx, 200.0);
  EXPECT_DOUBLE_EQ(sq.cx, 112.0);
}

TEST(ViewRig, RejectsBadArguments) {
  EXPECT_THROW(generate_view_rig(0, 2.5, {0, 0, 0}, k224()), std::invalid_argument);
  EXPECT_THROW(generate_view_rig(3, 0.0, {0, 0, 0}, k224()), std::invalid_argument);
}

TEST(ViewRig, SingleViewLooksAtCenter) {
  const Vec3 c{0.2, -0.1, 0.3};
  const auto rig = generate_view_rig(1, 2.5, c, k224());
  ASSERT_EQ(rig.size(), 1u);
  const auto p = project_point(c, k224(), rig.poses[0]);
  ASSERT_TRUE(p);
  EXPECT_NEAR(p->u, 112.0, 1e-6);
  EXPECT_NEAR(p->v, 112.0, 1e-6);
  EXPECT_NEAR(p->z, 2.5, 1e-12);
}

TEST(ViewRig, NineViewsAllLookAtCenter) {
  const Vec3 c{0.0, 0.0, 0.0};
  const auto rig = generate_view_rig(9, 2.5, c, k224());
  ASSERT_EQ(rig.size(), 9u);
  for (const auto& pose : rig.poses) {
    EXPECT_TRUE(pose.is_valid(1e-9));
    const auto p = project_point(c, k224(), pose);
    ASSERT_TRUE(p);
    EXPECT_NEAR(p->u, 112.0, 1e-6);
    EXPECT_NEAR(p->v, 112.0, 1e-6);
  }
  // Last camera is top-down.
  const Vec3 top = back_project(112, 112, 2.5, k224(), rig.poses.back());
  EXPECT_NEAR(norm(top - c), 0.0, 1e-9);
  const Vec3 eye = back_project(112, 112, 1e-3, k224(), rig.poses.back());
  EXPECT_GT(eye[2], 2.4);
}

TEST(ViewRig, RingAzimuthsAndElevation) {
  const auto rig = generate_view_rig(9, 2.5, {0, 0, 0}, k224());
  std::vector<double> az;
  for (std::size_t v = 0; v + 1 < rig.size(); ++v) {
    // Camera center is -R^T t.
    const auto& pose = rig.poses[v];
    const Vec3 eye = -1.0 * (pose.rotation.transposed() * pose.translation);
    EXPECT_NEAR(norm(eye), 2.5, 1e-12);
    EXPECT_NEAR(std::asin(eye[2] / 2.5) * 180 / std::numbers::pi, 35.0, 1e-9);
    double a = std::atan2(eye[1], eye[0]) * 180 / std::numbers::pi;
    if (a < -1e-9) a += 360;
    az.push_back(a);
  }
  std::sort(az.begin(), az.end());
  for (std::size_t i = 0; i < az.size(); ++i) EXPECT_NEAR(az[i], 45.0 * static_cast<double>(i), 1e-9);
}

TEST(ViewRig, DeterministicAndPrefixStable) {
  const auto a = generate_view_rig(9, 2.5, {0, 0, 0}, k224());
  const auto b = generate_view_rig(9, 2.5, {0, 0, 0}, k224());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t v = 0; v < a.size(); ++v) {
    EXPECT_EQ(a.poses[v].rotation, b.poses[v].rotation);
    EXPECT_EQ(a.poses[v].translation, b.poses[v].translation);
  }
  const auto c = generate_view_rig(5, 2.5, {0, 0, 0}, k224());
  EXPECT_EQ(a.poses[0].rotation, c.poses[0].rotation);
  EXPECT_EQ(a.poses[0].translation, c.poses[0].translation);
}

TEST(ViewRig, EvenCountHasNoTopCamera) {
  const auto rig = generate_view_rig(4, 2.0, {0, 0, 0}, k224());
  for (const auto& pose : rig.poses) {
    const Vec3 eye = -1.0 * (pose.rotation.transposed() * pose.translation);
    EXPECT_LT(eye[2], 1.5);
  }
}

TEST(NormalizeCloud, TwoPoints) {
  PointCloud c;
  c.points = {{1, 1, 1}, {3, 1, 1}};
  c.labels = {0, 1};
  const auto n = normalize_cloud(c);
  EXPECT_NEAR(n.points[0][0], -1, 1e-15);
  EXPECT_NEAR(n.points[1][0], 1, 1e-15);
  EXPECT_NEAR(n.points[0][1], 0, 1e-15);
  EXPECT_EQ(n.labels, c.labels);
}

TEST(NormalizeCloud, SinglePointIsCenteredOnly) {
  PointCloud c;
  c.points = {{5, 5, 5}};
  const auto n = normalize_cloud(c);
  EXPECT_EQ(n.points[0], (Vec3{0, 0, 0}));
}

TEST(NormalizeCloud, UnitMaxNorm) {
  Rng rng(5);
  PointCloud c;
  for (int i = 0; i < 500; ++i) c.points.push_back({rng.uniform(-7, 9), rng.uniform(2, 3), rng.normal(4, 10)});
  const auto n = normalize_cloud(c);
  double mx = 0;
  Vec3 centroid{0, 0, 0};
  for (const auto& p : n.points) {
    mx = std::max(mx, norm(p));
    centroid = centroid + p;
  }
  EXPECT_NEAR(mx, 1.0, 1e-12);
  EXPECT_NEAR(norm(centroid) / 500, 0.0, 1e-12);
}

TEST(NormalizeCloud, EmptyThrows) { EXPECT_THROW(normalize_cloud(PointCloud{}), std::invalid_argument); }

TEST(PointCloud, ValidateInvariants) {
  PointCloud c;
  c.points = {{0, 0, 0}, {1, 0, 0}};
  c.labels = {0, 1};
  c.object_label = 1;
  EXPECT_NO_THROW(c.validate());
  c.object_label = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.object_label.reset();
  c.labels = {0, 2};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.labels = {0};
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
