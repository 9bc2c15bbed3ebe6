// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#include "orthofuse/scenes.hpp"
#include "orthofuse/epipolar.hpp"

#include <gtest/gtest.h>

using namespace orthofuse;

TEST(GtViews, SphereCenterDepthAndSentinels) {
    const auto rig = make_six_view_rig(64, 1.0, 2.0);
    const ViewSet vs = render_gt_views(named_scene("sphere"), rig);
    const ViewMaps &front = vs.maps[0];
    // Pixels 31/32 straddle the axis; the ray is pitch/2 off-center in x and y.
    const double off = 0.5 * rig[0].pixel_pitch();
    EXPECT_NEAR(front.depth(0, 31, 31), 2.0 - std::sqrt(1.0 - 2 * off * off), 1e-6);
    EXPECT_NEAR(front.depth(0, 31, 31), 1.0, 1e-3);
    EXPECT_EQ(front.depth(0, 0, 0), 0.0);
    EXPECT_EQ(front.opacity_raw(0, 0, 0), -kGtOpacityLogit);
    EXPECT_EQ(front.opacity_raw(0, 31, 31), kGtOpacityLogit);
    EXPECT_EQ(front.scale_raw(1, 31, 31), 0.0);
    EXPECT_EQ(front.quat_raw(0, 31, 31), 1.0);
    EXPECT_EQ(front.quat_raw(2, 31, 31), 0.0);
}

TEST(GtViews, HitPixelsLieOnTheSurface) {
    for (const std::string &name : named_scene_list()) {
        const AnalyticScene scene = named_scene(name);
        const auto rig = make_six_view_rig(48, 1.0, 2.0);
        const ViewSet vs = render_gt_views(scene, rig);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < rig.size(); ++i) {
            for (int v = 0; v < 48; ++v) {
                for (int u = 0; u < 48; ++u) {
                    const double t = vs.maps[i].depth(0, v, u);
                    if (t > 0.0) {
                        ++hits;
                        ASSERT_LT(std::abs(scene.sdf(rig[i].unproject(u, v, t))), 1e-5) << name;
                    }
                }
            }
        }
        EXPECT_GT(hits, 500u) << name;
    }
}

TEST(GtViews, ColorsAgreeAcrossViews) {
    const AnalyticScene scene = named_scene("sphere-box");
    const auto rig = make_six_view_rig(64, 1.0, 2.0);
    const ViewSet vs = render_gt_views(scene, rig);
    for (std::size_t i = 0; i < rig.size(); ++i) {
        for (int v = 0; v < 64; v += 3) {
            for (int u = 0; u < 64; u += 3) {
                const double t = vs.maps[i].depth(0, v, u);
                if (t <= 0.0) continue;
                const Vec3 c = scene.color(rig[i].unproject(u, v, t));
                for (int k = 0; k < 3; ++k) {
                    ASSERT_EQ(vs.maps[i].rgb(k, v, u), c[k]);
                }
            }
        }
    }
}

TEST(GtViews, DepthsSatisfyEpipolarCorrespondence) {
    const AnalyticScene scene = named_scene("capsule-torus");
    const auto rig = make_six_view_rig(32, 1.0, 2.0);
    const ViewSet vs = render_gt_views(scene, rig);
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
            if (i == j) continue;
            for (int v = 0; v < 32; v += 2) {
                for (int u = 0; u < 32; u += 2) {
                    const double t = vs.maps[i].depth(0, v, u);
                    if (t <= 0.0) continue;
                    const EpipolarLine line = epipolar_line(rig, i, j, u, v);
                    const Projection p = rig[j].project(rig[i].unproject(u, v, t));
                    const double across = line.axis == LineAxis::Row ? p.v : p.u;
                    ASSERT_NEAR(across, line.index, 1e-9);
                }
            }
        }
    }
}

TEST(Scenes, NamedAndRandomAreNormalized) {
    EXPECT_EQ(named_scene_list().size(), 5u);
    for (const std::string &name : named_scene_list()) {
        EXPECT_LE(named_scene(name).bounding_radius(), 1.0 + 1e-12) << name;
    }
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const AnalyticScene s = random_scene(seed);
        EXPECT_LE(s.bounding_radius(), 1.0);
        EXPECT_GE(s.primitives.size(), 2u);
    }
    EXPECT_THROW(named_scene("teapot"), PreconditionError);
}

TEST(Scenes, SdfIsOneLipschitz) {
    Rng rng(5);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const AnalyticScene s = random_scene(seed);
        for (int k = 0; k < 2000; ++k) {
            const Vec3 a = 1.2 * rng.in_unit_ball();
            const Vec3 b = 1.2 * rng.in_unit_ball();
            ASSERT_LE(std::abs(s.sdf(a) - s.sdf(b)), (a - b).norm() + 1e-12);
        }
    }
}

TEST(ExtendedRig, PrefixesAndCorners) {
    EXPECT_THROW(extended_view_rig(5), PreconditionError);
    const auto four = extended_view_rig(4, {16, 1.0, 2.0});
    ASSERT_EQ(four.size(), 4u);
    EXPECT_EQ(four[3].id(), ViewId::Right);
    const auto six = extended_view_rig(6, {16, 1.0, 2.0});
    EXPECT_EQ(six, make_six_view_rig(16, 1.0, 2.0));
    const auto all = extended_view_rig(14, {16, 1.0, 2.0});
    ASSERT_EQ(all.size(), 14u);
    EXPECT_LT((all[6].view_direction() + Vec3(1, 1, 1).normalized()).norm(), 1e-12);
    EXPECT_LT((all[13].view_direction() - Vec3(1, 1, 1).normalized()).norm(), 1e-12);
    for (int i = 6; i < 14; ++i) {
        // +y projected onto the image plane is the up vector.
        const Vec3 d = all[i].view_direction();
        const Vec3 up = (Vec3(0, 1, 0) - d.y() * d).normalized();
        EXPECT_LT((all[i].up() - up).norm(), 1e-12);
    }
    EXPECT_EQ(extended_view_names().size(), 14u);
}

TEST(SampleSurface, OnSurfaceAndDeterministic) {
    const auto s = sample_surface(named_scene("sphere"), 5000, 9);
    for (const Vec3 &p : s) {
        ASSERT_NEAR(p.norm(), 1.0, 1e-5);
    }
    EXPECT_EQ(s, sample_surface(named_scene("sphere"), 5000, 9));
}

TEST(SampleSurface, BoxCornersCovered) {
    const AnalyticScene box = named_scene("box");
    const Primitive &p = box.primitives.front();
    const auto pts = sample_surface(box, 100000, 1);
    for (const Vec3 &q : pts) {
        ASSERT_LT(std::abs(box.sdf(q)), 1e-5);
    }
    for (int c = 0; c < 8; ++c) {
        const Vec3 local((c & 1) ? p.size.x() : -p.size.x(), (c & 2) ? p.size.y() : -p.size.y(),
                         (c & 4) ? p.size.z() : -p.size.z());
        const Vec3 corner = p.center + p.rotation * local;
        double best = 1e9;
        for (const Vec3 &q : pts) best = std::min(best, (q - corner).norm());
        EXPECT_LT(best, 0.05) << c;
    }
}

TEST(SceneMesh, WatertightNearSurface) {
    const AnalyticScene s = named_scene("torus");
    const TriMesh m = scene_mesh(s, 96);
    EXPECT_TRUE(is_watertight(m));
    for (const Vec3 &v : m.vertices) {
        ASSERT_LT(std::abs(s.sdf(v)), 2.5 / 96);
    }
    EXPECT_EQ(m.vertex_colors.size(), m.vertices.size());
}
