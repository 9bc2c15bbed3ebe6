// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#include "orthofuse/checks.hpp"
#include "orthofuse/io.hpp"
#include "orthofuse/losses.hpp"
#include "orthofuse/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <string>

namespace fs = std::filesystem;
using namespace orthofuse;

namespace {

std::string num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

void print_kv(const std::string &key, double value) { std::cout << key << "=" << num(value) << "\n"; }

std::vector<std::string> view_names(const std::vector<OrthoCamera> &cams) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < cams.size(); ++i) {
        const ViewId id = cams[i].id();
        names.push_back(id == ViewId::Custom ? "view" + std::to_string(i) : std::string(to_string(id)));
    }
    return names;
}

// ---------------------------------------------------------------------------

struct GenArgs {
    std::string scene = "sphere";
    std::uint64_t seed = 0;
    int res = 256;
    int views = 6;
    int gt_grid = 192;
    std::string out;
};

int cmd_gen(const GenArgs &a) {
    const AnalyticScene scene = a.scene == "random" ? random_scene(a.seed) : named_scene(a.scene);
    const std::vector<OrthoCamera> cams = extended_view_rig(a.views, {a.res, 1.0, 2.0});
    const ViewSet views = render_gt_views(scene, cams);
    const std::vector<std::string> names(extended_view_names().begin(), extended_view_names().begin() + a.views);
    write_viewset(a.out, views, scene.name, names, "analytic sdf render");
    if (a.gt_grid > 0) {
        write_mesh(fs::path(a.out) / "gt.ply", scene_mesh(scene, a.gt_grid));
    }
    std::cout << "wrote " << views.size() << " views of " << scene.name << " to " << a.out << "\n";
    return 0;
}

struct FuseArgs {
    std::string manifest;
    std::string out;
    double threshold = 0.0;
};

int cmd_fuse(const FuseArgs &a) {
    const ViewSet views = read_viewset(a.manifest);
    const GaussianCloud cloud = build_pixel_gaussians(views, a.threshold);
    write_gaussians_ply(a.out, cloud);
    std::cout << "gaussians=" << cloud.size() << "\n";
    return 0;
}

struct RenderArgs {
    std::string gaussians;
    std::string out;
    std::string manifest;
    int novel = 0;
    std::uint64_t seed = 0;
    int res = 256;
};

int cmd_render(const RenderArgs &a) {
    const GaussianCloud cloud = read_gaussians_ply(a.gaussians);
    std::vector<OrthoCamera> cams;
    if (!a.manifest.empty()) {
        for (const ManifestView &v : read_manifest(fs::is_directory(a.manifest) ? fs::path(a.manifest) / "manifest.json"
                                                                                 : fs::path(a.manifest))
                                         .views) {
            cams.push_back(v.camera);
        }
    } else if (a.novel > 0) {
        cams = sample_novel_cameras(a.novel, a.seed, {a.res, 1.0, 2.0});
    } else {
        cams = make_six_view_rig({a.res, 1.0, 2.0});
    }
    fs::create_directories(a.out);
    const std::vector<std::string> names = view_names(cams);
    for (std::size_t i = 0; i < cams.size(); ++i) {
        const RenderOutput r = render(cloud, cams[i]);
        const std::string stem = std::to_string(i) + "_" + names[i];
        write_png(fs::path(a.out) / (stem + "_rgb.png"), r.color);
        write_pfm(fs::path(a.out) / (stem + "_alpha.pfm"), r.alpha);
        write_pfm(fs::path(a.out) / (stem + "_depth.pfm"), r.depth);
    }
    std::cout << "rendered " << cams.size() << " views to " << a.out << "\n";
    return 0;
}

struct MeshArgs {
    std::string manifest;
    std::string out;
    MeshingSettings ms;
};

int cmd_mesh(const MeshArgs &a) {
    const ViewSet views = read_viewset(a.manifest);
    PoissonDiagnostics diag;
    const TriMesh mesh = extract_mesh(views, a.ms, &diag);
    write_mesh(a.out, mesh);
    std::cout << "vertices=" << mesh.vertices.size() << "\nfaces=" << mesh.faces.size()
              << "\ncg_iterations=" << diag.iterations << "\n";
    return 0;
}

struct EvalArgs {
    std::string mesh;
    std::string gt;
    EvalSettings s;
    std::string json;
};

int cmd_eval(const EvalArgs &a) {
    const TriMesh mesh = read_mesh(a.mesh);
    const TriMesh gt = read_mesh(a.gt);
    const MetricReport r = evaluate_meshes(mesh, gt, a.s);
    print_kv("chamfer", r.chamfer);
    print_kv("volume_iou", r.volume_iou);
    print_kv("depth_error", r.depth_error);
    print_kv("psnr", r.psnr);
    print_kv("ssim", r.ssim);
    if (a.s.icp) {
        print_kv("icp_scale_x", r.transform.scale.x());
        print_kv("icp_scale_y", r.transform.scale.y());
        print_kv("icp_scale_z", r.transform.scale.z());
        print_kv("icp_translation_x", r.transform.translation.x());
        print_kv("icp_translation_y", r.transform.translation.y());
        print_kv("icp_translation_z", r.transform.translation.z());
    }
    if (!a.json.empty()) {
        nlohmann::ordered_json j;
        j["mesh"] = a.mesh;
        j["gt"] = a.gt;
        j["chamfer"] = r.chamfer;
        j["volume_iou"] = r.volume_iou;
        j["depth_error"] = r.depth_error;
        j["psnr"] = r.psnr;
        j["ssim"] = r.ssim;
        std::ofstream f = detail::open_out(a.json);
        f << j.dump() << "\n";
    }
    return 0;
}

struct EvalLossArgs {
    std::string pred;
    std::string gt;
    std::string scene;
    std::uint64_t seed = 0;
    LossWeights w;
};

int cmd_eval_loss(const EvalLossArgs &a) {
    a.w.validate();
    const ViewSet pred = read_viewset(a.pred);
    const ViewSet gt = read_viewset(a.gt);
    const RigConfig rig{gt.width(), gt.cameras.front().half_extent(), gt.cameras.front().plane_distance()};
    std::vector<NvsTarget> targets;
    if (a.w.nvs_view_count > 0) {
        const std::vector<OrthoCamera> cams = sample_novel_cameras(a.w.nvs_view_count, a.seed, rig);
        targets = a.scene.empty() ? nvs_targets_from_cloud(build_pixel_gaussians(gt, 0.0), cams)
                                  : nvs_targets_from_scene(named_scene(a.scene), cams);
    }
    const TrainingLoss loss = training_loss(pred, gt, targets, a.w);
    for (const auto &[key, value] : loss.report.items()) {
        print_kv(key, value);
    }
    return 0;
}

struct AblateArgs {
    AblationSettings s;
    std::string json;
};

int cmd_ablate(const AblateArgs &a) {
    const AblationResult r = run_view_ablation(a.s, [&](int done) {
        std::cerr << "scene " << done << "/" << a.s.scenes << "\n";
    });
    std::cout << "views  median_chamfer  median_iou\n";
    for (const AblationRow &row : r.rows) {
        char line[128];
        std::snprintf(line, sizeof line, "%5d  %14.6f  %10.4f\n", row.views, row.median_chamfer(), row.median_iou());
        std::cout << line;
    }
    std::cout << "sign_test successes=" << r.sign_successes << " trials=" << r.sign_trials
              << " p=" << num(r.sign_p_value) << "\n";
    std::cout << "median_chamfer_non_increasing=" << (r.medians_non_increasing() ? "true" : "false") << "\n";
    std::vector<std::string> lines;
    for (const AblationRow &row : r.rows) {
        nlohmann::ordered_json j;
        j["views"] = row.views;
        j["median_chamfer"] = row.median_chamfer();
        j["median_iou"] = row.median_iou();
        j["chamfer"] = row.chamfer;
        j["iou"] = row.iou;
        lines.push_back(j.dump());
    }
    nlohmann::ordered_json summary;
    summary["scenes"] = a.s.scenes;
    summary["seed"] = a.s.seed;
    summary["scene_seeds"] = r.scene_seeds;
    summary["sign_successes"] = r.sign_successes;
    summary["sign_trials"] = r.sign_trials;
    summary["sign_p_value"] = r.sign_p_value;
    summary["median_chamfer_non_increasing"] = r.medians_non_increasing();
    lines.push_back(summary.dump());
    for (const std::string &l : lines) {
        std::cout << l << "\n";
    }
    if (!a.json.empty()) {
        std::ofstream f = detail::open_out(a.json);
        for (const std::string &l : lines) {
            f << l << "\n";
        }
    }
    return 0;
}

struct AttnCheckArgs {
    int instances = 100;
    std::uint64_t seed = 0;
    std::size_t points = 10000;
};

int cmd_attn_check(const AttnCheckArgs &a) {
    bool ok = true;
    const auto line = [&](bool pass, const std::string &name, const std::string &detail) {
        ok = ok && pass;
        std::cout << (pass ? "PASS " : "FAIL ") << name << " " << detail << "\n";
    };
    const GeometryCheckReport geo = check_epipolar_geometry(make_six_view_rig({256, 1.0, 2.0}), a.points, a.seed);
    line(geo.passed(), "epipolar-geometry",
         "pairs=" + std::to_string(geo.pairs) + " failures=" + std::to_string(geo.failures) +
             " max_error_px=" + num(geo.max_error));
    const auto grad_line = [&](const std::string &name, const GradientCheckReport &r, double tol) {
        line(r.passed(tol) && r.instances >= a.instances - r.skipped, name,
             "instances=" + std::to_string(r.instances) + " skipped=" + std::to_string(r.skipped) +
                 " max_rel_error=" + num(r.max_rel_error));
    };
    grad_line("render-gradients", check_render_gradients(a.instances, a.seed), 1e-4);
    grad_line("attention-gradients", check_attention_gradients(a.instances, a.seed), 1e-4);
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"orthofuse: orthographic multi-view Gaussian fusion and meshing"};
    app.require_subcommand(1);

    GenArgs gen;
    CLI::App *g = app.add_subcommand("gen", "render an analytic scene into a view set");
    g->add_option("--scene", gen.scene, "scene name or 'random'")->capture_default_str();
    g->add_option("--seed", gen.seed, "seed for --scene random")->capture_default_str();
    g->add_option("--res", gen.res, "view resolution")->capture_default_str();
    g->add_option("--views", gen.views, "view count (4, 6, 8 or 14)")->capture_default_str();
    g->add_option("--gt-grid", gen.gt_grid, "marching-cubes grid of gt.ply (0 disables)")->capture_default_str();
    g->add_option("--out", gen.out, "output directory")->required();

    FuseArgs fuse;
    CLI::App *f = app.add_subcommand("fuse", "lift a view set to pixel-aligned Gaussians");
    f->add_option("manifest", fuse.manifest)->required();
    f->add_option("--out", fuse.out, "Gaussian PLY")->required();
    f->add_option("--threshold", fuse.threshold, "minimum activated opacity")->capture_default_str();

    RenderArgs rend;
    CLI::App *r = app.add_subcommand("render", "splat a Gaussian PLY");
    r->add_option("gaussians", rend.gaussians)->required();
    r->add_option("--out", rend.out, "output directory")->required();
    r->add_option("--manifest", rend.manifest, "use the cameras of this manifest");
    r->add_option("--novel", rend.novel, "random novel views instead of the six-view rig");
    r->add_option("--seed", rend.seed)->capture_default_str();
    r->add_option("--res", rend.res)->capture_default_str();

    MeshArgs mesh;
    CLI::App *m = app.add_subcommand("mesh", "extract a mesh from a view set");
    m->add_option("manifest", mesh.manifest)->required();
    m->add_option("--out", mesh.out, "PLY or OBJ")->required();
    m->add_option("--grid", mesh.ms.poisson.grid, "Poisson grid nodes per axis")->capture_default_str();
    m->add_option("--smooth-iters", mesh.ms.smooth_iterations)->capture_default_str();
    m->add_option("--smooth-lambda", mesh.ms.smooth_lambda)->capture_default_str();
    m->add_option("--min-component", mesh.ms.min_component_fraction, "fraction of faces")->capture_default_str();

    EvalArgs ev;
    CLI::App *e = app.add_subcommand("eval", "compare a mesh against a reference mesh");
    e->add_option("mesh", ev.mesh)->required();
    e->add_option("gt", ev.gt)->required();
    e->add_flag("--icp", ev.s.icp, "align with per-axis-scale ICP first");
    e->add_option("--samples", ev.s.samples)->capture_default_str();
    e->add_option("--seed", ev.s.seed)->capture_default_str();
    e->add_option("--iou-grid", ev.s.iou_grid)->capture_default_str();
    e->add_option("--res", ev.s.resolution, "protocol view resolution")->capture_default_str();
    e->add_option("--json", ev.json, "also write one JSON line here");

    EvalLossArgs el;
    CLI::App *l = app.add_subcommand("eval-loss", "training loss of a predicted view set");
    l->add_option("pred", el.pred)->required();
    l->add_option("gt", el.gt)->required();
    l->add_option("--scene", el.scene, "analytic novel-view targets instead of GT splats");
    l->add_option("--seed", el.seed)->capture_default_str();
    l->add_option("--nvs-views", el.w.nvs_view_count)->capture_default_str();
    l->add_option("--lambda-lpips", el.w.lpips)->capture_default_str();
    l->add_option("--lambda-gm", el.w.gm)->capture_default_str();

    AblateArgs ab;
    CLI::App *a = app.add_subcommand("ablate-views", "reconstruction quality against view count");
    a->add_option("--scenes", ab.s.scenes)->capture_default_str();
    a->add_option("--seed", ab.s.seed)->capture_default_str();
    a->add_option("--res", ab.s.rig.resolution)->capture_default_str();
    a->add_option("--grid", ab.s.meshing.poisson.grid)->capture_default_str();
    a->add_option("--gt-grid", ab.s.gt_grid)->capture_default_str();
    a->add_option("--samples", ab.s.samples)->capture_default_str();
    a->add_option("--json", ab.json, "also write the JSON lines here");

    AttnCheckArgs ac;
    CLI::App *c = app.add_subcommand("attn-check", "epipolar geometry and gradient checks");
    c->add_option("--instances", ac.instances)->capture_default_str();
    c->add_option("--seed", ac.seed)->capture_default_str();
    c->add_option("--points", ac.points)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (g->parsed()) return cmd_gen(gen);
        if (f->parsed()) return cmd_fuse(fuse);
        if (r->parsed()) return cmd_render(rend);
        if (m->parsed()) return cmd_mesh(mesh);
        if (e->parsed()) return cmd_eval(ev);
        if (l->parsed()) return cmd_eval_loss(el);
        if (a->parsed()) return cmd_ablate(ab);
        if (c->parsed()) return cmd_attn_check(ac);
    } catch (const IoError &err) {
        std::cerr << "orthofuse: error: " << err.what() << "\n";
        return 2;
    } catch (const std::exception &err) {
        std::cerr << "orthofuse: error: " << err.what() << "\n";
        return 1;
    }
    return 1;
}
