// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#include "cli_support.hpp"

#include <gtest/gtest.h>

using namespace orthofuse::testing;

TEST(Cli, MissingManifestExitsTwoAndNamesPath) {
    const auto dir = fresh_dir("orthofuse_cli_missing");
    const CliRun r = run_cli("mesh nowhere/manifest.json --out m.ply", dir);
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.err.find("nowhere/manifest.json"), std::string::npos) << r.err;
    EXPECT_EQ(run_cli("fuse absent --out g.ply", dir).exit_code, 2);
}

TEST(Cli, BadInputsFailWithDiagnostics) {
    const auto dir = fresh_dir("orthofuse_cli_bad");
    CliRun r = run_cli("gen --scene teapot --out d", dir);
    EXPECT_NE(r.exit_code, 0);
    EXPECT_NE(r.err.find("teapot"), std::string::npos) << r.err;
    r = run_cli("gen --views 5 --out d", dir);
    EXPECT_NE(r.exit_code, 0);
    EXPECT_NE(r.err.find("view count"), std::string::npos) << r.err;
    EXPECT_NE(run_cli("frobnicate", dir).exit_code, 0);
    EXPECT_NE(run_cli("", dir).exit_code, 0);
    std::ofstream(dir / "broken.json") << "{\"version\": \"orthofuse-manifest/1\", \"views\": [{\"name\": \"front\"}]}";
    r = run_cli("mesh broken.json --out m.ply", dir);
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.err.find("broken.json"), std::string::npos);
    EXPECT_NE(r.err.find("views[0].rotation"), std::string::npos) << r.err;
}

TEST(Cli, GenFuseRenderEvalLoss) {
    const auto dir = fresh_dir("orthofuse_cli_flow");
    ASSERT_EQ(run_cli("gen --scene box --res 32 --gt-grid 48 --out d", dir).exit_code, 0);
    EXPECT_TRUE(std::filesystem::exists(dir / "d" / "manifest.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "d" / "gt.ply"));
    EXPECT_TRUE(std::filesystem::exists(dir / "d" / "5_bottom_quat_xyz.pfm"));
    const CliRun f = run_cli("fuse d --out g.ply", dir);
    ASSERT_EQ(f.exit_code, 0) << f.err;
    EXPECT_EQ(f.out.rfind("gaussians=", 0), 0u);
    ASSERT_EQ(run_cli("render g.ply --novel 2 --seed 3 --res 24 --out r", dir).exit_code, 0);
    EXPECT_TRUE(std::filesystem::exists(dir / "r" / "1_view1_depth.pfm"));
    const CliRun l = run_cli("eval-loss d d --nvs-views 2", dir);
    ASSERT_EQ(l.exit_code, 0) << l.err;
    EXPECT_NE(l.out.find("reg_rgb_mse=0\n"), std::string::npos);
    EXPECT_NE(l.out.find("total=0\n"), std::string::npos);
    const CliRun e = run_cli("eval d/gt.ply d/gt.ply --res 32 --json e.jsonl", dir);
    ASSERT_EQ(e.exit_code, 0) << e.err;
    EXPECT_NE(e.out.find("volume_iou=1\n"), std::string::npos) << e.out;
    EXPECT_NE(read_file(dir / "e.jsonl").find("\"chamfer\":"), std::string::npos);
}

TEST(Cli, GenIsDeterministic) {
    const auto dir = fresh_dir("orthofuse_cli_det");
    ASSERT_EQ(run_cli("gen --scene random --seed 4 --res 24 --gt-grid 32 --out a", dir, 1).exit_code, 0);
    ASSERT_EQ(run_cli("gen --scene random --seed 4 --res 24 --gt-grid 32 --out b", dir, 3).exit_code, 0);
    EXPECT_EQ(snapshot(dir / "a"), snapshot(dir / "b"));
}
