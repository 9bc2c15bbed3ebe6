// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace orthofuse;
using orthofuse::testing::asymmetric_scene;

TEST(Icp, IdentityOnEqualSets) {
    const auto src = sample_surface(asymmetric_scene(), 2000, 1);
    const IcpResult r = scale_adaptive_icp(src, src);
    EXPECT_LT(orthofuse::testing::parameter_error(r.transform, SimilarityTransform{}), 1e-6);
}

TEST(Icp, RecoversPerAxisScaleAndPose) {
    Rng rng(2);
    const auto src = sample_surface(asymmetric_scene(), 2000, 2);
    for (int trial = 0; trial < 5; ++trial) {
        SimilarityTransform t = orthofuse::testing::random_similarity(rng);
        if (trial == 0) t.scale = Vec3(1.2, 0.8, 1.0);
        const IcpResult r = scale_adaptive_icp(src, t.apply(src));
        EXPECT_LT(orthofuse::testing::parameter_error(r.transform, t), 1e-3) << trial;
    }
}

TEST(Icp, RejectsDegenerateSets) {
    Rng rng(3);
    std::vector<Vec3> flat;
    for (int i = 0; i < 100; ++i) flat.emplace_back(rng.uniform(), rng.uniform(), 0.0);
    const auto good = sample_surface(asymmetric_scene(), 200, 3);
    EXPECT_THROW(scale_adaptive_icp(flat, good), PreconditionError);
    EXPECT_THROW(scale_adaptive_icp(good, flat), PreconditionError);
    EXPECT_THROW(scale_adaptive_icp(std::vector<Vec3>(good.begin(), good.begin() + 3), good), PreconditionError);
}

TEST(Icp, NeverWorsensSampleChamfer) {
    Rng rng(4);
    const AnalyticScene scene = asymmetric_scene();
    for (int trial = 0; trial < 4; ++trial) {
        const auto src = sample_surface(scene, 1500, 10 + trial);
        const auto dst = orthofuse::testing::random_similarity(rng).apply(sample_surface(scene, 1500, 50 + trial));
        const IcpResult r = scale_adaptive_icp(src, dst);
        EXPECT_LE(chamfer_points(r.transform.apply(src), dst), chamfer_points(src, dst) + 1e-9);
    }
}

TEST(Chamfer, SelfIsBelowSamplingBound) {
    const TriMesh m = make_icosphere(4);
    EXPECT_LT(chamfer_distance(m, m), 1e-12);
    EXPECT_LT(chamfer_distance(m, m, 4096, 7), 1e-12);
    const auto a = sample_mesh_surface(m, 4096, 1);
    const auto b = sample_mesh_surface(m, 4096, 2);
    EXPECT_LT(chamfer_points(a, b), 0.03);
}

TEST(Chamfer, ParallelSquares) {
    const double d = 0.1;
    EXPECT_NEAR(chamfer_distance(make_square(1.0, 0.0, 4), make_square(1.0, d, 4)), d, 0.05 * d);
}

TEST(Chamfer, ConcentricSpheres) {
    const double cd = chamfer_distance(make_icosphere(5, 1.0), make_icosphere(5, 1.1));
    EXPECT_NEAR(cd, 0.1, 0.002);
}

TEST(Chamfer, SymmetricAndRejectsEmpty) {
    const TriMesh a = make_icosphere(3), b = make_box(Vec3::Constant(-0.7), Vec3::Constant(0.6));
    EXPECT_DOUBLE_EQ(chamfer_distance(a, b), chamfer_distance(b, a));
    EXPECT_THROW(chamfer_distance(a, TriMesh{}), Error);
}

TEST(VolumeIou, Examples) {
    const TriMesh c1 = make_box(Vec3(0, 0, 0), Vec3(1, 1, 1));
    const TriMesh c2 = make_box(Vec3(0.5, 0, 0), Vec3(1.5, 1, 1));
    EXPECT_DOUBLE_EQ(volume_iou(c1, c1), 1.0);
    EXPECT_NEAR(volume_iou(c1, c2), 1.0 / 3.0, 0.02);
    EXPECT_DOUBLE_EQ(volume_iou(c1, c2), volume_iou(c2, c1));
    EXPECT_DOUBLE_EQ(volume_iou(c1, make_box(Vec3(2, 2, 2), Vec3(3, 3, 3))), 0.0);
    EXPECT_DOUBLE_EQ(volume_iou(make_icosphere(3), make_icosphere(3)), 1.0);
}

TEST(VolumeIou, EmptyUnionIsZero) {
    EXPECT_EQ(volume_iou(make_square(1.0, 0.0), make_square(1.0, 0.5)), 0.0);
}

TEST(DepthError, Examples) {
    const TriMesh s = make_icosphere(5);
    const OrthoCamera front = make_six_view_rig(129, 1.2, 2.0)[0];
    EXPECT_EQ(depth_error(s, s, render_protocol_views()), 0.0);
    const MeshRaster a = rasterize_mesh(s, front);
    const MeshRaster b = rasterize_mesh(make_icosphere(5, 1.05), front);
    EXPECT_NEAR(a.depth(0, 64, 64) - b.depth(0, 64, 64), 0.05, 1e-3);
    const TriMesh left = make_icosphere(2, 0.2, Vec3(-0.5, 0, 0));
    const TriMesh right = make_icosphere(2, 0.2, Vec3(0.5, 0, 0));
    EXPECT_THROW(depth_error(left, right, {front}), EmptyResultError);
}

TEST(ImageMetrics, PsnrAndSsim) {
    Rng rng(5);
    ImageD a(3, 32, 32), b(3, 32, 32);
    for (double &x : a.data()) x = rng.uniform();
    for (double &x : b.data()) x = rng.uniform();
    EXPECT_EQ(psnr(a, a), 99.0);
    EXPECT_DOUBLE_EQ(ssim(a, a), 1.0);
    ImageD c = a;
    for (std::size_t k = 0; k < c.size(); ++k) c.data()[k] += (k % 2 ? 0.1 : -0.1);
    EXPECT_NEAR(psnr(a, c), 20.0, 1e-9);
    EXPECT_NEAR(ssim(a, b), orthofuse::testing::ssim_oracle(a, b), 1e-9);
    EXPECT_LE(std::abs(ssim(a, b)), 1.0);
    EXPECT_THROW(psnr(a, ImageD(3, 16, 16)), PreconditionError);
}

TEST(ProtocolViews, PlacementAndDeterminism) {
    const auto cams = render_protocol_views();
    ASSERT_EQ(cams.size(), 36u);
    const OrthoCamera front = make_six_view_rig(128, 1.0, 2.0)[0];
    EXPECT_LT((cams[12].rotation() - front.rotation()).norm(), 1e-12);
    EXPECT_EQ(cams[12].id(), ViewId::Front);
    EXPECT_EQ(cams, render_protocol_views());
    EXPECT_NEAR(cams[0].view_direction().y(), std::sin(30.0 * std::numbers::pi / 180.0), 1e-12);
    const auto big = render_protocol_views(1.5);
    EXPECT_DOUBLE_EQ(big[0].half_extent(), 1.5);
}

TEST(Evaluate, AlignedCopyScoresPerfectly) {
    const TriMesh gt = scene_mesh(asymmetric_scene(), 64);
    EvalSettings s;
    s.resolution = 64;
    const MetricReport r = evaluate_meshes(gt, gt, s);
    EXPECT_LT(r.chamfer, 1e-12);
    EXPECT_EQ(r.volume_iou, 1.0);
    EXPECT_EQ(r.depth_error, 0.0);
    EXPECT_EQ(r.psnr, 99.0);
    EXPECT_DOUBLE_EQ(r.ssim, 1.0);
}

TEST(Evaluate, IcpUndoesAScaledCopy) {
    const TriMesh gt = scene_mesh(asymmetric_scene(), 64);
    SimilarityTransform t;
    t.scale = Vec3(1.1, 0.9, 1.05);
    t.translation = Vec3(0.05, -0.02, 0.0);
    EvalSettings s;
    s.resolution = 64;
    s.icp = true;
    const MetricReport r = evaluate_meshes(t.apply(gt), gt, s);
    EXPECT_LT(r.chamfer, 0.01);
    EXPECT_GT(r.volume_iou, 0.9);
}
