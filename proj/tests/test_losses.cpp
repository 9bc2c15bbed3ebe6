// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#include "orthofuse/checks.hpp"
#include "orthofuse/losses.hpp"

#include <gtest/gtest.h>

using namespace orthofuse;

namespace {

ViewSet random_views(int res, std::uint64_t seed) {
    Rng rng(seed);
    ViewSet vs;
    vs.cameras = make_six_view_rig(res, 1.0, 2.0);
    for (int i = 0; i < 6; ++i) {
        ViewMaps m(res, res);
        for (double &x : m.rgb.data()) x = rng.uniform();
        for (double &x : m.depth.data()) x = rng.uniform() < 0.2 ? 0.0 : rng.uniform(1.0, 3.0);
        for (double &x : m.opacity_raw.data()) x = rng.normal();
        vs.maps.push_back(m);
    }
    return vs;
}

// Brute-force multi-scale gradient matching, written against the plain
// definition with explicit pyramids of (value, valid) pairs.
double gm_oracle(const ImageD &pred, const ImageD &gt) {
    int h = pred.height(), w = pred.width();
    std::vector<std::vector<double>> r(h, std::vector<double>(w));
    std::vector<std::vector<bool>> ok(h, std::vector<bool>(w));
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
            ok[v][u] = gt(0, v, u) > 0.0;
            r[v][u] = pred(0, v, u) - gt(0, v, u);
        }
    double total = 0.0;
    for (int level = 0; level < 4; ++level) {
        double sum = 0.0;
        int n = 0;
        for (int v = 0; v < h; ++v)
            for (int u = 0; u < w; ++u) {
                if (!ok[v][u]) continue;
                ++n;
                if (u + 1 < w && ok[v][u + 1]) sum += std::abs(r[v][u + 1] - r[v][u]);
                if (v + 1 < h && ok[v + 1][u]) sum += std::abs(r[v + 1][u] - r[v][u]);
            }
        if (n > 0) total += sum / n;
        if (h < 2 || w < 2) break;
        const int ch = h / 2, cw = w / 2;
        std::vector<std::vector<double>> cr(ch, std::vector<double>(cw));
        std::vector<std::vector<bool>> cok(ch, std::vector<bool>(cw));
        for (int v = 0; v < ch; ++v)
            for (int u = 0; u < cw; ++u) {
                cok[v][u] = ok[2 * v][2 * u] && ok[2 * v + 1][2 * u] && ok[2 * v][2 * u + 1] && ok[2 * v + 1][2 * u + 1];
                cr[v][u] = (r[2 * v][2 * u] + r[2 * v + 1][2 * u] + r[2 * v][2 * u + 1] + r[2 * v + 1][2 * u + 1]) / 4;
            }
        r = cr;
        ok = cok;
        h = ch;
        w = cw;
    }
    return total;
}

} // namespace

TEST(LossReg, ZeroAtGroundTruth) {
    const ViewSet gt = random_views(8, 1);
    const LossReport r = loss_reg(gt, gt, {});
    EXPECT_EQ(r.reg_rgb_mse, 0.0);
    EXPECT_EQ(r.reg_dep_l1, 0.0);
    EXPECT_EQ(r.reg_dep_gm, 0.0);
    EXPECT_EQ(r.total, 0.0);
}

TEST(LossReg, ConstantColorOffset) {
    const ViewSet gt = random_views(8, 2);
    ViewSet pred = gt;
    for (ViewMaps &m : pred.maps)
        for (double &x : m.rgb.data()) x += 0.1;
    EXPECT_NEAR(loss_reg(pred, gt, {}).reg_rgb_mse, 0.01, 1e-12);
}

TEST(LossReg, MatchesBruteForceSummation) {
    const ViewSet gt = random_views(8, 3);
    const ViewSet pred = random_views(8, 4);
    const LossWeights w;
    const LossReport r = loss_reg(pred, gt, w);
    double mse = 0.0, l1 = 0.0, gm = 0.0;
    int nrgb = 0, ndep = 0;
    for (int i = 0; i < 6; ++i) {
        for (int c = 0; c < 3; ++c)
            for (int v = 0; v < 8; ++v)
                for (int u = 0; u < 8; ++u) {
                    const double d = pred.maps[i].rgb(c, v, u) - gt.maps[i].rgb(c, v, u);
                    mse += d * d;
                    ++nrgb;
                }
        for (int v = 0; v < 8; ++v)
            for (int u = 0; u < 8; ++u)
                if (gt.maps[i].depth(0, v, u) > 0.0) {
                    l1 += std::abs(pred.maps[i].depth(0, v, u) - gt.maps[i].depth(0, v, u));
                    ++ndep;
                }
        gm += gm_oracle(pred.maps[i].depth, gt.maps[i].depth) / 6.0;
    }
    EXPECT_NEAR(r.reg_rgb_mse, mse / nrgb, 1e-12);
    EXPECT_NEAR(r.reg_dep_l1, l1 / ndep, 1e-12);
    EXPECT_NEAR(r.reg_dep_gm, gm, 1e-12);
    EXPECT_EQ(r.reg_rgb_lpips, 0.0);
    EXPECT_NEAR(r.total, r.reg_rgb_mse + r.reg_dep_l1 + 2.0 * r.reg_dep_gm, 1e-12);
}

TEST(LossReg, InvariantUnderViewPermutation) {
    const ViewSet gt = random_views(8, 5);
    const ViewSet pred = random_views(8, 6);
    ViewSet gp = gt, pp = pred;
    std::reverse(gp.maps.begin(), gp.maps.end());
    std::reverse(gp.cameras.begin(), gp.cameras.end());
    std::reverse(pp.maps.begin(), pp.maps.end());
    std::reverse(pp.cameras.begin(), pp.cameras.end());
    EXPECT_NEAR(loss_reg(pred, gt, {}).total, loss_reg(pp, gp, {}).total, 1e-12);
}

TEST(LossReg, ShapeMismatchRejected) {
    const ViewSet a = random_views(8, 7);
    ViewSet b = random_views(8, 8);
    b.maps.pop_back();
    b.cameras.pop_back();
    EXPECT_THROW(loss_reg(a, b, {}), PreconditionError);
}

TEST(LossGm, ConstantResidualVanishes) {
    Rng rng(9);
    ImageD gt(1, 16, 16);
    for (double &x : gt.data()) x = rng.uniform(1, 3);
    ImageD pred = gt;
    for (double &x : pred.data()) x += 0.37;
    EXPECT_NEAR(loss_gm(pred, gt, Mask(1, 16, 16, 1)), 0.0, 1e-12);
}

TEST(LossGm, RampClosedForm) {
    const int n = 16;
    const double a = 0.03;
    ImageD gt(1, n, n, 1.0), pred(1, n, n);
    for (int v = 0; v < n; ++v)
        for (int u = 0; u < n; ++u) pred(0, v, u) = 1.0 + a * u;
    double expected = 0.0;
    for (int k = 0; k < 4; ++k) {
        const double wk = n >> k;
        expected += (1 << k) * a * (wk - 1) / wk;
    }
    EXPECT_NEAR(loss_gm(pred, gt, Mask(1, n, n, 1)), expected, 1e-12);
}

TEST(LossGm, EmptyMaskIsZero) {
    Rng rng(10);
    ImageD a(1, 8, 8), b(1, 8, 8);
    for (double &x : a.data()) x = rng.normal();
    EXPECT_EQ(loss_gm(a, b, Mask(1, 8, 8, 0)), 0.0);
}

TEST(LossGm, GradientMatchesDifferences) {
    Rng rng(11);
    ImageD gt(1, 12, 12), pred(1, 12, 12);
    Mask m(1, 12, 12, 1);
    for (double &x : gt.data()) x = rng.uniform(1, 2);
    for (double &x : pred.data()) x = rng.uniform(1, 2);
    m(0, 3, 4) = 0;
    ImageD g;
    loss_gm(pred, gt, m, &g);
    for (int k = 0; k < 30; ++k) {
        const std::size_t e = rng.index(pred.size());
        const double h = 1e-7, keep = pred.data()[e];
        pred.data()[e] = keep + h;
        const double fp = loss_gm(pred, gt, m);
        pred.data()[e] = keep - h;
        const double fm = loss_gm(pred, gt, m);
        pred.data()[e] = keep;
        EXPECT_NEAR((fp - fm) / (2 * h), g.data()[e], 1e-6);
    }
}

TEST(LossNvs, SelfConsistencyIsZero) {
    const ViewSet gt = render_gt_views(named_scene("sphere"), make_six_view_rig(24, 1.0, 2.0));
    const GaussianCloud cloud = build_pixel_gaussians(gt);
    const auto targets = nvs_targets_from_cloud(cloud, sample_novel_cameras(3, 1, {24, 1.0, 2.0}));
    const NvsResult r = loss_nvs(cloud, targets);
    EXPECT_EQ(r.rgb_mse, 0.0);
    EXPECT_EQ(r.alpha_mse, 0.0);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        ASSERT_EQ(r.grads.color[i], Vec3::Zero());
        ASSERT_EQ(r.grads.center[i], Vec3::Zero());
    }
}

TEST(LossNvs, ColorPerturbationSign) {
    const ViewSet gt = render_gt_views(named_scene("box"), make_six_view_rig(24, 1.0, 2.0));
    const GaussianCloud cloud = build_pixel_gaussians(gt);
    const auto targets = nvs_targets_from_cloud(cloud, sample_novel_cameras(4, 2, {24, 1.0, 2.0}));
    // The Gaussian closest to the front image center is visible in most views.
    std::size_t idx = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (cloud.source[i].view == 0 && cloud.source[i].u == 12 && cloud.source[i].v == 12) idx = i;
    }
    for (double delta : {0.05, -0.05}) {
        GaussianCloud p = cloud;
        p.gaussians[idx].color[1] += delta;
        const NvsResult r = loss_nvs(p, targets);
        EXPECT_GT(r.rgb_mse, 0.0);
        EXPECT_GT(r.grads.color[idx][1] * delta, 0.0);
    }
}

TEST(LossNvs, Reproducible) {
    const ViewSet gt = render_gt_views(named_scene("torus"), make_six_view_rig(16, 1.0, 2.0));
    const auto scene_targets = nvs_targets_from_scene(named_scene("torus"), sample_novel_cameras(10, 3, {16, 1.0, 2.0}));
    const GaussianCloud cloud = build_pixel_gaussians(gt);
    const NvsResult a = loss_nvs(cloud, scene_targets);
    const NvsResult b = loss_nvs(cloud, scene_targets);
    EXPECT_EQ(a.rgb_mse, b.rgb_mse);
    EXPECT_EQ(a.alpha_mse, b.alpha_mse);
    EXPECT_GT(a.alpha_mse, 0.0);
}

TEST(TrainingLoss, TotalIsWeightedSum) {
    const ViewSet gt = random_views(8, 12);
    const ViewSet pred = random_views(8, 13);
    const auto targets = nvs_targets_from_cloud(build_pixel_gaussians(gt), sample_novel_cameras(2, 1, {8, 1.0, 2.0}));
    const LossWeights w;
    const LossReport r = training_loss(pred, gt, targets, w).report;
    EXPECT_EQ(r.total, r.reg_rgb_mse + 0.5 * r.reg_rgb_lpips + r.reg_dep_l1 + 2.0 * r.reg_dep_gm + r.nvs_rgb_mse +
                           0.5 * r.nvs_rgb_lpips + r.nvs_alpha_mse);
    for (const auto &[k, v] : r.items()) EXPECT_GE(v, 0.0) << k;
}

TEST(TrainingLoss, GradientMatchesFiniteDifferences) {
    const GradientCheckReport rep = check_training_loss_gradients(2, 21);
    EXPECT_EQ(rep.instances, 2);
    EXPECT_GT(rep.compared, 40u);
    EXPECT_LT(rep.max_rel_error, 1e-3);
}
