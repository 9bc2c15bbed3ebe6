// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orthofuse/metrics.hpp"
#include "orthofuse/scenes.hpp"
#include "orthofuse/surface.hpp"

#include <functional>

namespace orthofuse {

/// Exact views of `scene` from the first `view_count` rig cameras, meshed.
inline TriMesh reconstruct_scene(const AnalyticScene &scene, int view_count, const RigConfig &rig,
                                 const MeshingSettings &ms, PoissonDiagnostics *diag = nullptr) {
    const ViewSet views = render_gt_views(scene, extended_view_rig(view_count, rig));
    return extract_mesh(views, ms, diag);
}

inline double median(std::vector<double> v) {
    require(!v.empty(), "median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// One-sided exact binomial sign test: P(X >= successes) for X ~ Bin(trials, 1/2).
inline double sign_test_p_value(int successes, int trials) {
    require(trials >= 0 && successes >= 0 && successes <= trials, "invalid sign test counts");
    double p = 0.0;
    for (int k = successes; k <= trials; ++k) {
        p += std::exp(std::lgamma(trials + 1.0) - std::lgamma(k + 1.0) - std::lgamma(trials - k + 1.0) -
                      trials * std::log(2.0));
    }
    return std::min(1.0, p);
}

struct AblationSettings {
    int scenes = 20;
    std::uint64_t seed = 7;
    std::vector<int> view_counts{4, 6, 8, 14};
    RigConfig rig{128, 1.0, 2.0};
    MeshingSettings meshing = [] {
        MeshingSettings m;
        m.poisson.grid = 64;
        return m;
    }();
    int gt_grid = 128;
    std::size_t samples = 200000;
};

struct AblationRow {
    int views = 0;
    std::vector<double> chamfer; // per scene
    std::vector<double> iou;     // per scene
    double median_chamfer() const { return median(chamfer); }
    double median_iou() const { return median(iou); }
};

struct AblationResult {
    std::vector<std::uint64_t> scene_seeds;
    std::vector<AblationRow> rows;
    // Sign test over scenes: (CD_4 - CD_6) > (CD_8 - CD_14).
    int sign_successes = 0;
    int sign_trials = 0;
    double sign_p_value = 1.0;

    bool medians_non_increasing() const {
        for (std::size_t i = 1; i < rows.size(); ++i) {
            if (rows[i].median_chamfer() > rows[i - 1].median_chamfer()) {
                return false;
            }
        }
        return true;
    }
};

/// Reconstructs randomized scenes from each view count and scores them against
/// the marching-cubes mesh of the exact SDF. `progress` is called after each scene.
inline AblationResult run_view_ablation(const AblationSettings &s,
                                        const std::function<void(int)> &progress = nullptr) {
    require(s.scenes >= 1, "ablation needs at least one scene");
    AblationResult res;
    Rng rng(s.seed);
    for (int i = 0; i < s.scenes; ++i) {
        res.scene_seeds.push_back(rng.index(std::uint64_t{1} << 40));
    }
    for (int count : s.view_counts) {
        res.rows.push_back({count, {}, {}});
    }
    for (int i = 0; i < s.scenes; ++i) {
        const AnalyticScene scene = random_scene(res.scene_seeds[i]);
        const TriMesh gt = scene_mesh(scene, s.gt_grid);
        for (AblationRow &row : res.rows) {
            const TriMesh mesh = reconstruct_scene(scene, row.views, s.rig, s.meshing);
            row.chamfer.push_back(chamfer_distance(mesh, gt, s.samples, res.scene_seeds[i]));
            row.iou.push_back(volume_iou(mesh, gt));
        }
        if (progress) {
            progress(i + 1);
        }
    }
    const auto find = [&](int views) -> const AblationRow * {
        for (const AblationRow &r : res.rows) {
            if (r.views == views) {
                return &r;
            }
        }
        return nullptr;
    };
    const AblationRow *r4 = find(4);
    const AblationRow *r6 = find(6);
    const AblationRow *r8 = find(8);
    const AblationRow *r14 = find(14);
    if (r4 && r6 && r8 && r14) {
        for (int i = 0; i < s.scenes; ++i) {
            const double early = r4->chamfer[i] - r6->chamfer[i];
            const double late = r8->chamfer[i] - r14->chamfer[i];
            if (early == late) {
                continue;
            }
            ++res.sign_trials;
            res.sign_successes += early > late;
        }
        res.sign_p_value = sign_test_p_value(res.sign_successes, res.sign_trials);
    }
    return res;
}

} // namespace orthofuse
