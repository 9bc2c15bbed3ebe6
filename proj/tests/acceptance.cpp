// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.

#include "cli_support.hpp"
#include "test_support.hpp"

#include "orthofuse/checks.hpp"
#include "orthofuse/gaussians.hpp"
#include "orthofuse/pipeline.hpp"
#include "orthofuse/splat.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

using namespace orthofuse;
using namespace orthofuse::testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char *f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

std::map<std::string, double> parse_kv(const std::string &text) {
    std::map<std::string, double> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) {
            try {
                kv[line.substr(0, eq)] = std::stod(line.substr(eq + 1));
            } catch (const std::exception &) {
            }
        }
    }
    return kv;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Named scenes through gen, mesh and eval at 256^2 with a 128^3 Poisson grid.
Outcome named_scene_reconstruction() {
    const auto dir = fresh_dir("orthofuse_accept_1");
    Outcome o{true, ""};
    for (const std::string &name : named_scene_list()) {
        const auto t0 = std::chrono::steady_clock::now();
        const bool ok = run_cli("gen --scene " + name + " --res 256 --out " + name, dir).exit_code == 0 &&
                        run_cli("mesh " + name + " --grid 128 --out " + name + ".ply", dir).exit_code == 0;
        const double secs = seconds_since(t0);
        const CliRun e = run_cli("eval " + name + ".ply " + name + "/gt.ply", dir);
        auto kv = parse_kv(e.out);
        const bool pass = ok && e.exit_code == 0 && kv["chamfer"] < 0.02 && kv["volume_iou"] > 0.9 && secs < 120.0;
        o.pass = o.pass && pass;
        o.detail += name + "(cd=" + fmt("%.4f", kv["chamfer"]) + " iou=" + fmt("%.3f", kv["volume_iou"]) +
                    " t=" + fmt("%.0fs", secs) + ") ";
    }
    return o;
}

Outcome view_count_ablation() {
    const AblationResult r = run_view_ablation(AblationSettings{});
    Outcome o;
    o.pass = r.medians_non_increasing() && r.sign_p_value < 0.05;
    for (const AblationRow &row : r.rows) {
        o.detail += std::to_string(row.views) + "v=" + fmt("%.5f", row.median_chamfer()) + " ";
    }
    o.detail += "sign " + std::to_string(r.sign_successes) + "/" + std::to_string(r.sign_trials) +
                " p=" + fmt("%.2g", r.sign_p_value);
    return o;
}

// Lift exact six-view maps to Gaussians and splat them back into the same cameras.
// The within-silhouette PSNR is reported alongside for diagnosis only.
Outcome gt_rerender() {
    Outcome o{true, ""};
    double worst_psnr = 1e9;
    double worst_inside = 1e9;
    double worst_depth = 0.0;
    for (const std::string &name : named_scene_list()) {
        const ViewSet views = render_gt_views(named_scene(name), make_six_view_rig(RigConfig{}));
        const GaussianCloud cloud = build_pixel_gaussians(views);
        for (std::size_t i = 0; i < views.size(); ++i) {
            const OrthoCamera &cam = views.cameras[i];
            const ViewMaps &gt = views.maps[i];
            const RenderOutput out = render(cloud, cam);
            worst_psnr = std::min(worst_psnr, psnr(out.color, gt.rgb));
            double sum = 0.0;
            double se = 0.0;
            int n = 0;
            for (int v = 0; v < cam.height(); ++v) {
                for (int u = 0; u < cam.width(); ++u) {
                    if (gt.depth(0, v, u) > 0.0) {
                        sum += std::abs(out.depth(0, v, u) - gt.depth(0, v, u));
                        for (int c = 0; c < 3; ++c) {
                            se += std::pow(out.color(c, v, u) - gt.rgb(c, v, u), 2);
                        }
                        ++n;
                    }
                }
            }
            worst_depth = std::max(worst_depth, sum / std::max(n, 1) / cam.pixel_pitch());
            worst_inside = std::min(worst_inside, se > 0.0 ? 10.0 * std::log10(3.0 * n / se) : 99.0);
        }
    }
    o.pass = worst_psnr > 30.0 && worst_depth < 2.0;
    o.detail = "min psnr=" + fmt("%.2f", worst_psnr) + " (inside silhouette " + fmt("%.2f", worst_inside) +
               ") max mean |depth err|=" + fmt("%.3f", worst_depth) + " px";
    return o;
}

Outcome gradients() {
    const GradientCheckReport r = check_render_gradients(100, 1);
    const GradientCheckReport a = check_attention_gradients(100, 2);
    const GradientCheckReport t = check_training_loss_gradients(5, 3);
    Outcome o;
    o.pass = r.instances >= 100 && a.instances >= 100 && r.passed(1e-4) && a.passed(1e-4) && t.passed(1e-3);
    o.detail = "render " + std::to_string(r.instances) + " max=" + fmt("%.2e", r.max_rel_error) + ", attention " +
               std::to_string(a.instances) + " max=" + fmt("%.2e", a.max_rel_error) + ", loss " +
               std::to_string(t.instances) + " max=" + fmt("%.2e", t.max_rel_error);
    return o;
}

Outcome epipolar_geometry() {
    const GeometryCheckReport g = check_epipolar_geometry(make_six_view_rig(RigConfig{}), 10000, 11);
    Outcome o;
    o.pass = g.pairs == 30 && g.points >= 10000 && g.failures == 0;
    o.detail = std::to_string(g.pairs) + " pairs, " + std::to_string(g.points) + " points, " +
               std::to_string(g.failures) + " failures, max=" + fmt("%.4f", g.max_error) + " px";
    return o;
}

Outcome icp_alignment() {
    Rng rng(12);
    const AnalyticScene scene = asymmetric_scene();
    const auto src = sample_surface(scene, 2000, 5);
    double worst = 0.0;
    bool never_worse = true;
    for (int trial = 0; trial < 50; ++trial) {
        const SimilarityTransform t = random_similarity(rng);
        worst = std::max(worst, parameter_error(scale_adaptive_icp(src, t.apply(src)).transform, t));
        const auto dst = t.apply(sample_surface(scene, 1500, 100 + trial));
        const IcpResult r = scale_adaptive_icp(src, dst);
        never_worse = never_worse && chamfer_points(r.transform.apply(src), dst) <= chamfer_points(src, dst) + 1e-12;
    }
    Outcome o;
    o.pass = worst < 1e-3 && never_worse;
    o.detail = "50 trials, max parameter error=" + fmt("%.2e", worst) +
               (never_worse ? ", chamfer never increased" : ", chamfer increased");
    return o;
}

Outcome metric_sanity() {
    const TriMesh a = make_icosphere(5, 1.0);
    const TriMesh cube = make_box(Vec3::Zero(), Vec3::Ones());
    const TriMesh shifted = make_box(Vec3(0.5, 0, 0), Vec3(1.5, 1, 1));
    ImageD img(3, 32, 32);
    Rng rng(13);
    for (double &x : img.data()) {
        x = rng.uniform();
    }
    const double self_cd = chamfer_distance(a, a);
    const double conc = chamfer_distance(a, make_icosphere(5, 1.1));
    const double self_iou = volume_iou(a, a);
    const double half_iou = volume_iou(cube, shifted);
    const double disjoint = volume_iou(cube, make_box(Vec3::Constant(2), Vec3::Constant(3)));
    const double s = ssim(img, img);
    const double p = psnr(img, img);
    Outcome o;
    o.pass = self_cd < 1e-9 && std::abs(conc - 0.1) < 0.002 && std::abs(self_iou - 1.0) < 1e-12 &&
             std::abs(half_iou - 1.0 / 3.0) < 0.02 && disjoint == 0.0 && std::abs(s - 1.0) < 1e-12 && p == 99.0;
    o.detail = "cd(self)=" + fmt("%.1e", self_cd) + " cd(r,1.1r)=" + fmt("%.4f", conc) + " iou(self)=" +
               fmt("%.3f", self_iou) + " iou(half shift)=" + fmt("%.4f", half_iou) + " ssim(self)=" +
               fmt("%.3f", s) + " psnr(self)=" + fmt("%.0f", p);
    return o;
}

Outcome gaussian_parameterization() {
    bool in_range = true;
    for (double s = -40.0; s <= 40.0; s += 0.25) {
        const double a = scale_activation(s);
        in_range = in_range && a >= kScaleMin && a <= kScaleMax;
    }
    const bool limits = std::abs(scale_activation(-60.0) - kScaleMax) < 1e-9 &&
                        std::abs(scale_activation(60.0) - kScaleMin) < 1e-9 &&
                        std::abs(scale_activation(0.0) - 1.255) < 1e-12;
    bool masks = true;
    for (const std::string &name : named_scene_list()) {
        const AnalyticScene scene = named_scene(name);
        RigConfig rc;
        rc.resolution = 96;
        const ViewSet views = render_gt_views(scene, make_six_view_rig(rc));
        const auto m = mask_for_meshing(views);
        for (std::size_t i = 0; i < views.size(); ++i) {
            for (int v = 0; v < rc.resolution; ++v) {
                for (int u = 0; u < rc.resolution; ++u) {
                    const bool hit = trace_depth(scene, views.cameras[i], u, v) > 0.0;
                    masks = masks && (m[i](0, v, u) != 0) == hit;
                }
            }
        }
    }
    Outcome o;
    o.pass = in_range && limits && masks;
    o.detail = std::string("activation ") + (in_range && limits ? "bounded with exact limits" : "out of range") +
               ", meshing masks " + (masks ? "equal" : "differ from") + " analytic silhouettes";
    return o;
}

// Every subcommand twice: once single-threaded, once with four threads.
Outcome cli_determinism() {
    const std::vector<std::string> steps{
        "gen --scene capsule-torus --res 48 --gt-grid 48 --out d",
        "fuse d --out g.ply",
        "render g.ply --manifest d --out r",
        "render g.ply --novel 3 --seed 2 --res 32 --out n",
        "mesh d --grid 48 --out m.ply",
        "eval m.ply d/gt.ply --icp --samples 20000 --res 48 --json e.jsonl",
        "eval-loss d d --scene capsule-torus --nvs-views 2",
        "ablate-views --scenes 2 --res 32 --grid 32 --gt-grid 32 --samples 5000 --json a.jsonl",
        "attn-check --instances 3 --points 500",
    };
    std::vector<std::map<std::string, std::string>> snaps;
    std::vector<std::string> outputs;
    bool ok = true;
    for (int threads : {1, 4}) {
        const auto dir = fresh_dir("orthofuse_accept_9_" + std::to_string(threads));
        std::string out;
        for (const std::string &s : steps) {
            const CliRun r = run_cli(s, dir, threads);
            ok = ok && r.exit_code == 0;
            out += r.out;
        }
        outputs.push_back(out);
        snaps.push_back(snapshot(dir));
    }
    const auto first = [&] {
        const auto dir = fresh_dir("orthofuse_accept_9_again");
        std::string out;
        for (const std::string &s : steps) {
            out += run_cli(s, dir, 1).out;
        }
        return std::make_pair(out, snapshot(dir));
    }();
    Outcome o;
    o.pass = ok && outputs[0] == outputs[1] && snaps[0] == snaps[1] && first.first == outputs[0] &&
             first.second == snaps[0];
    o.detail = std::to_string(steps.size()) + " commands, " + std::to_string(snaps[0].size()) + " files, " +
               (o.pass ? "byte-identical across runs and thread counts" : "outputs differ or a command failed");
    return o;
}

} // namespace

int main(int argc, char **argv) {
    // --known-failure N: report criterion N but leave it out of the exit status.
    std::set<std::size_t> known;
    for (int i = 1; i + 1 < argc; i += 2) {
        if (std::string(argv[i]) == "--known-failure") {
            known.insert(std::stoul(argv[i + 1]));
        }
    }
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"named-scene reconstruction", named_scene_reconstruction},
        {"view-count ablation", view_count_ablation},
        {"gaussian re-render of exact views", gt_rerender},
        {"analytic gradients", gradients},
        {"epipolar geometry", epipolar_geometry},
        {"scale-adaptive icp", icp_alignment},
        {"metric sanity", metric_sanity},
        {"gaussian parameterization", gaussian_parameterization},
        {"cli determinism", cli_determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            o = criteria[i].second();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const bool excused = !o.pass && known.count(i + 1) > 0;
        failures += !o.pass && !excused;
        std::printf("%s %zu %s: %s [%.0fs]%s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.c_str(), seconds_since(t0), excused ? " (known failure)" : "");
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
