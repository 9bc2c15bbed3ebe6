// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#include "orthofuse/camera.hpp"
#include "orthofuse/random.hpp"

#include <gtest/gtest.h>

using namespace orthofuse;

TEST(Rig, SixAxisAlignedViewsInOrder) {
    const auto rig = make_six_view_rig(512, 1.0, 2.0);
    ASSERT_EQ(rig.size(), 6u);
    const ViewId order[] = {ViewId::Front, ViewId::Back, ViewId::Left, ViewId::Right, ViewId::Top, ViewId::Bottom};
    const Vec3 dirs[] = {{0, 0, -1}, {0, 0, 1}, {1, 0, 0}, {-1, 0, 0}, {0, -1, 0}, {0, 1, 0}};
    for (int i = 0; i < 6; ++i) {
        EXPECT_EQ(rig[i].id(), order[i]);
        EXPECT_LT((rig[i].view_direction() - dirs[i]).norm(), 1e-15);
        const Mat3 &r = rig[i].rotation();
        EXPECT_LT((r * r.transpose() - Mat3::Identity()).norm(), 1e-12);
        EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
    }
    EXPECT_DOUBLE_EQ(rig[0].pixel_pitch(), 0.00390625);
}

TEST(Rig, PairsAreParallelOrPerpendicular) {
    const auto rig = make_six_view_rig(64, 1.0, 2.0);
    for (std::size_t i = 0; i < rig.size(); ++i) {
        for (std::size_t j = 0; j < rig.size(); ++j) {
            if (i == j) continue;
            const double d = rig[i].view_direction().dot(rig[j].view_direction());
            EXPECT_TRUE(std::abs(d) < 1e-15 || std::abs(d + 1.0) < 1e-15) << i << "," << j;
        }
    }
}

TEST(Rig, UpConventions) {
    const auto rig = make_six_view_rig(8, 1.0, 2.0);
    for (int i = 0; i < 4; ++i) {
        EXPECT_LT((rig[i].up() - Vec3(0, 1, 0)).norm(), 1e-15);
    }
    EXPECT_LT((rig[4].up() - Vec3(0, 0, -1)).norm(), 1e-15);
    EXPECT_LT((rig[5].up() - Vec3(0, 0, 1)).norm(), 1e-15);
}

TEST(Rig, RejectsBadConfigs) {
    EXPECT_THROW(make_six_view_rig(512, 0.9, 2.0), PreconditionError);
    EXPECT_THROW(make_six_view_rig(512, 1.0, 1.0), PreconditionError);
    EXPECT_THROW(make_six_view_rig(1, 1.0, 2.0), PreconditionError);
    EXPECT_THROW(OrthoCamera(ViewId::Custom, 2.0 * Mat3::Identity(), 2.0, 1.0, 4, 4), PreconditionError);
}

TEST(PixelRay, CenterAndCorner) {
    const auto rig = make_six_view_rig(512, 1.0, 2.0);
    const OrthoCamera &front = rig[0];
    const double pitch = front.pixel_pitch();
    for (int u : {255, 256}) {
        const Ray r = pixel_ray(front, u, u);
        EXPECT_LE(std::abs(r.origin.x()), pitch);
        EXPECT_LE(std::abs(r.origin.y()), pitch);
    }
    const Ray c = pixel_ray(front, 0, 0);
    EXPECT_NEAR(c.origin.x(), -1.0 + pitch / 2, 1e-15);
    EXPECT_NEAR(c.origin.y(), 1.0 - pitch / 2, 1e-15);
    EXPECT_NEAR(c.origin.z(), 2.0, 1e-15);
    for (int v : {0, 100, 511}) {
        EXPECT_EQ(pixel_ray(front, 17, v).direction, Vec3(0, 0, -1));
    }
    EXPECT_THROW(pixel_ray(front, 512, 0), PreconditionError);
    EXPECT_THROW(pixel_ray(front, 0, -1), PreconditionError);
}

TEST(Unproject, Examples) {
    const auto rig = make_six_view_rig(512, 1.0, 2.0);
    const OrthoCamera &front = rig[0];
    const Vec3 p = unproject(front, 255.5, 255.5, 1.0);
    EXPECT_LT((p - Vec3(0, 0, 1)).norm(), 1e-12);
    EXPECT_NEAR(unproject(front, 10, 300, 2.0).z(), 0.0, 1e-15);
    EXPECT_THROW(unproject(front, 0, 0, 0.0), PreconditionError);
    EXPECT_THROW(unproject(front, 0, 0, -1.0), PreconditionError);
}

TEST(Project, OriginAndPlane) {
    const auto rig = make_six_view_rig(512, 1.0, 2.0);
    const Projection o = project(rig[0], Vec3::Zero());
    EXPECT_DOUBLE_EQ(o.t, 2.0);
    EXPECT_DOUBLE_EQ(o.u, 255.5);
    EXPECT_DOUBLE_EQ(o.v, 255.5);
    const Projection on_plane = project(rig[0], Vec3(0.3, -0.2, 2.0));
    EXPECT_NEAR(on_plane.t, 0.0, 1e-15);
    EXPECT_FALSE(on_plane.in_front());
}

TEST(Project, RoundTripAllViews) {
    Rng rng(3);
    for (const OrthoCamera &cam : make_six_view_rig(128, 1.0, 2.0)) {
        for (int k = 0; k < 1000; ++k) {
            const double u = rng.uniform(0, 127), v = rng.uniform(0, 127), t = rng.uniform(0.01, 4.0);
            const Projection p = project(cam, unproject(cam, u, v, t));
            EXPECT_NEAR(p.u * cam.pixel_pitch(), u * cam.pixel_pitch(), 1e-9);
            EXPECT_NEAR(p.v * cam.pixel_pitch(), v * cam.pixel_pitch(), 1e-9);
            EXPECT_NEAR(p.t, t, 1e-9);
        }
    }
}

TEST(Project, UnitBallLandsInsideImage) {
    Rng rng(11);
    const auto rig = make_six_view_rig(512, 1.0, 2.0);
    for (int k = 0; k < 10000; ++k) {
        const Vec3 p = rng.in_unit_ball();
        for (const OrthoCamera &cam : rig) {
            const Projection q = project(cam, p);
            ASSERT_GE(q.u, -0.5);
            ASSERT_LT(q.u, 511.5);
            ASSERT_GT(q.t, 0.0);
            ASSERT_LT(q.t, 4.0);
        }
    }
}
