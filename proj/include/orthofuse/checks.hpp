// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

// Self-checks shared by the attn-check command and the test suites: epipolar
// geometry against direct projection, and analytic gradients against central
// finite differences on seeded random instances.

#pragma once

#include "orthofuse/epipolar.hpp"
#include "orthofuse/losses.hpp"
#include "orthofuse/splat.hpp"

namespace orthofuse {

struct GeometryCheckReport {
    int pairs = 0;
    std::size_t points = 0;
    std::size_t failures = 0;
    double max_error = 0.0; // pixels

    bool passed() const { return failures == 0; }
};

/// Projects random points of the unit ball into every ordered view pair and
/// checks that the point lands on the epipolar line of its query pixel (and on
/// the mapped pixel for parallel pairs) within half a pixel.
inline GeometryCheckReport check_epipolar_geometry(const std::vector<OrthoCamera> &rig, std::size_t points,
                                                   std::uint64_t seed) {
    GeometryCheckReport rep;
    Rng rng(seed);
    std::vector<Vec3> pts(points);
    for (Vec3 &p : pts) {
        p = rng.in_unit_ball();
    }
    rep.points = points;
    const int n = static_cast<int>(rig.size());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) {
                continue;
            }
            ++rep.pairs;
            const EpipolarRelation rel = epipolar_relation(rig, i, j);
            for (const Vec3 &p : pts) {
                const Projection a = rig[i].project(p);
                const Projection b = rig[j].project(p);
                const int u = std::clamp(static_cast<int>(std::lround(a.u)), 0, rig[i].width() - 1);
                const int v = std::clamp(static_cast<int>(std::lround(a.v)), 0, rig[i].height() - 1);
                const int line = rel.line_index(u, v);
                double err = rel.axis == LineAxis::Row ? std::abs(b.v - line) : std::abs(b.u - line);
                if (rel.point) {
                    err = std::max(err, std::abs(b.u - rel.point->apply(u, v)));
                }
                rep.max_error = std::max(rep.max_error, err);
                if (!(err <= 0.5)) {
                    ++rep.failures;
                }
            }
        }
    }
    return rep;
}

struct GradientCheckReport {
    int instances = 0;       // instances evaluated
    int skipped = 0;         // instances or entries excluded as non-smooth
    std::size_t compared = 0;
    double max_rel_error = 0.0;

    bool passed(double tolerance) const { return instances > 0 && max_rel_error < tolerance; }
};

namespace detail {

inline double relative_error(const Eigen::VectorXd &fd, const Eigen::VectorXd &an, double floor) {
    return (fd - an).norm() / std::max({fd.norm(), an.norm(), floor});
}

// Smallest distance of any per-pixel Mahalanobis value to the cull radius, or of
// any two Gaussian depths to each other (a sort-order flip).
inline double render_smoothness_margin(const GaussianCloud &cloud, const OrthoCamera &cam, const SplatSettings &s) {
    const auto fp = project_cloud(cloud, cam, s);
    double margin = std::numeric_limits<double>::infinity();
    const double cull_m = s.cull_sigma * s.cull_sigma;
    for (std::size_t i = 0; i < fp.size(); ++i) {
        if (!fp[i].visible) {
            continue;
        }
        for (std::size_t j = i + 1; j < fp.size(); ++j) {
            margin = std::min(margin, std::abs(fp[i].t - fp[j].t));
        }
        for (int v = 0; v < cam.height(); ++v) {
            for (int u = 0; u < cam.width(); ++u) {
                const Vec2 d(u - fp[i].mean.x(), v - fp[i].mean.y());
                margin = std::min(margin, std::abs(d.dot(fp[i].conic * d) - cull_m));
            }
        }
    }
    return margin;
}

inline double weighted_render(const GaussianCloud &cloud, const OrthoCamera &cam, const RenderGradInput &w,
                              const SplatSettings &s) {
    const RenderOutput out = render(cloud, cam, s);
    double sum = 0.0;
    for (std::size_t k = 0; k < out.color.size(); ++k) sum += w.color.data()[k] * out.color.data()[k];
    for (std::size_t k = 0; k < out.alpha.size(); ++k) sum += w.alpha.data()[k] * out.alpha.data()[k];
    for (std::size_t k = 0; k < out.depth.size(); ++k) sum += w.depth.data()[k] * out.depth.data()[k];
    return sum;
}

} // namespace detail

/// Random clouds of 1-5 Gaussians seen by a random 16x16 camera; the loss is a
/// random linear functional of color, alpha and depth. Opacities stay in
/// [0.1, 0.8], so neither the contribution clamp nor early termination is
/// reachable; instances within 1e-4 of a cull or depth-order boundary are skipped.
inline GradientCheckReport check_render_gradients(int instances, std::uint64_t seed, double step = 1e-6) {
    GradientCheckReport rep;
    Rng rng(seed);
    SplatSettings s;
    RigConfig rc;
    rc.resolution = 16;
    while (rep.instances < instances) {
        const OrthoCamera cam = sample_novel_cameras(1, rng.index(1u << 30), rc).front();
        GaussianCloud cloud;
        const int count = 1 + static_cast<int>(rng.index(5));
        for (int i = 0; i < count; ++i) {
            Gaussian3D g;
            g.center = 0.5 * rng.in_unit_ball();
            g.color = {rng.uniform(), rng.uniform(), rng.uniform()};
            g.opacity = rng.uniform(0.1, 0.8);
            g.scale = {rng.uniform(0.03, 0.3), rng.uniform(0.03, 0.3), rng.uniform(0.03, 0.3)};
            const Eigen::Quaterniond q(rng.rotation());
            g.rotation = {q.w(), q.x(), q.y(), q.z()};
            cloud.gaussians.push_back(g);
        }
        if (detail::render_smoothness_margin(cloud, cam, s) < 1e-4) {
            ++rep.skipped;
            continue;
        }
        RenderGradInput w{ImageD(3, 16, 16), ImageD(1, 16, 16), ImageD(1, 16, 16)};
        for (ImageD *img : {&w.color, &w.alpha, &w.depth}) {
            for (double &x : img->data()) {
                x = rng.uniform(-1.0, 1.0);
            }
        }
        const Gradients an = render_backward(cloud, cam, w, s);
        const auto fd = [&](double &param) {
            const double x0 = param;
            param = x0 + step;
            const double lp = detail::weighted_render(cloud, cam, w, s);
            param = x0 - step;
            const double lm = detail::weighted_render(cloud, cam, w, s);
            param = x0;
            return (lp - lm) / (2.0 * step);
        };
        for (int i = 0; i < count; ++i) {
            Gaussian3D &g = cloud.gaussians[i];
            Eigen::VectorXd f(3), a(3);
            for (int k = 0; k < 3; ++k) {
                f[k] = fd(g.center[k]);
            }
            const auto record = [&](const Eigen::VectorXd &fv, const Eigen::VectorXd &av) {
                rep.max_rel_error = std::max(rep.max_rel_error, detail::relative_error(fv, av, 1e-4));
                ++rep.compared;
            };
            record(f, an.center[i]);
            for (int k = 0; k < 3; ++k) {
                f[k] = fd(g.color[k]);
            }
            record(f, an.color[i]);
            for (int k = 0; k < 3; ++k) {
                f[k] = fd(g.scale[k]);
            }
            record(f, an.scale[i]);
            Eigen::VectorXd fo(1), ao(1);
            fo[0] = fd(g.opacity);
            ao[0] = an.opacity[i];
            record(fo, ao);
            Eigen::VectorXd fr(4);
            for (int k = 0; k < 4; ++k) {
                fr[k] = fd(g.rotation[k]);
            }
            record(fr, an.rotation[i]);
        }
        ++rep.instances;
    }
    return rep;
}

/// Random features and weights on a 6-view rig of 3-5 pixel images, 4 channels,
/// 2 heads; the loss is a random linear functional of the output.
inline GradientCheckReport check_attention_gradients(int instances, std::uint64_t seed, double step = 1e-6) {
    GradientCheckReport rep;
    Rng rng(seed);
    const int channels = 4;
    const int heads = 2;
    for (; rep.instances < instances; ++rep.instances) {
        RigConfig rc;
        rc.resolution = 3 + static_cast<int>(rng.index(3));
        const auto rig = make_six_view_rig(rc);
        const EpipolarKeySets keys(rig);
        FeatureMaps x;
        FeatureMaps up;
        for (std::size_t n = 0; n < rig.size(); ++n) {
            x.emplace_back(channels, rc.resolution, rc.resolution);
            up.emplace_back(channels, rc.resolution, rc.resolution);
            for (double &v : x.back().data()) v = rng.normal();
            for (double &v : up.back().data()) v = rng.uniform(-1.0, 1.0);
        }
        AttentionWeights w = AttentionWeights::zeros(channels);
        for (Eigen::MatrixXd *m : {&w.query, &w.key, &w.value, &w.output}) {
            for (Eigen::Index k = 0; k < m->size(); ++k) {
                m->data()[k] = 0.6 * rng.normal();
            }
        }
        const auto objective = [&] {
            const FeatureMaps y = epipolar_attention(keys, x, w, heads);
            double s = 0.0;
            for (std::size_t n = 0; n < y.size(); ++n) {
                for (std::size_t k = 0; k < y[n].size(); ++k) {
                    s += up[n].data()[k] * y[n].data()[k];
                }
            }
            return s;
        };
        const auto fd = [&](double &param) {
            const double x0 = param;
            param = x0 + step;
            const double lp = objective();
            param = x0 - step;
            const double lm = objective();
            param = x0;
            return (lp - lm) / (2.0 * step);
        };
        const AttentionGradients an = epipolar_attention_backward(keys, x, w, heads, up);
        const std::array<std::pair<Eigen::MatrixXd *, const Eigen::MatrixXd *>, 4> mats = {
            {{&w.query, &an.weights.query}, {&w.key, &an.weights.key}, {&w.value, &an.weights.value},
             {&w.output, &an.weights.output}}};
        for (const auto &[param, grad] : mats) {
            Eigen::VectorXd f(param->size()), a(param->size());
            for (Eigen::Index k = 0; k < param->size(); ++k) {
                f[k] = fd(param->data()[k]);
                a[k] = grad->data()[k];
            }
            rep.max_rel_error = std::max(rep.max_rel_error, detail::relative_error(f, a, 1e-4));
            ++rep.compared;
        }
        const int samples = 24;
        Eigen::VectorXd f(samples), a(samples);
        for (int k = 0; k < samples; ++k) {
            const std::size_t n = rng.index(x.size());
            const std::size_t idx = rng.index(x[n].size());
            f[k] = fd(x[n].data()[idx]);
            a[k] = an.features[n].data()[idx];
        }
        rep.max_rel_error = std::max(rep.max_rel_error, detail::relative_error(f, a, 1e-4));
        ++rep.compared;
    }
    return rep;
}

/// Full objective (regression + NVS) against finite differences in the raw
/// per-pixel channels of a perturbed GT prediction. Each entry is probed with
/// steps h and h/2; entries whose two estimates disagree by more than 1e-2
/// (a cull, sort or termination event inside the stencil) are counted as skipped.
inline GradientCheckReport check_training_loss_gradients(int instances, std::uint64_t seed, int resolution = 10,
                                                         int entries = 40, double step = 1e-6) {
    GradientCheckReport rep;
    Rng rng(seed);
    RigConfig rc;
    rc.resolution = resolution;
    const LossWeights w;
    for (; rep.instances < instances; ++rep.instances) {
        const AnalyticScene scene = rep.instances == 0 ? named_scene("sphere") : random_scene(rng.index(1u << 30));
        const ViewSet gt = render_gt_views(scene, make_six_view_rig(rc));
        ViewSet pred = gt;
        for (ViewMaps &m : pred.maps) {
            for (int v = 0; v < m.height(); ++v) {
                for (int u = 0; u < m.width(); ++u) {
                    for (int c = 0; c < 3; ++c) {
                        m.rgb(c, v, u) = std::clamp(m.rgb(c, v, u) + rng.uniform(-0.1, 0.1), 0.0, 1.0);
                        m.scale_raw(c, v, u) = rng.uniform(-1.0, 1.0);
                    }
                    for (int c = 0; c < 4; ++c) {
                        m.quat_raw(c, v, u) += rng.uniform(-0.3, 0.3);
                    }
                    m.opacity_raw(0, v, u) = rng.uniform(-2.0, 1.3);
                    if (m.depth(0, v, u) > 0.0) {
                        m.depth(0, v, u) += rng.uniform(-0.05, 0.05);
                    }
                }
            }
        }
        const auto targets = nvs_targets_from_scene(scene, sample_novel_cameras(3, rng.index(1u << 30), rc));
        const TrainingLoss an = training_loss(pred, gt, targets, w);
        const auto objective = [&] { return training_loss(pred, gt, targets, w).report.total; };
        const auto fd = [&](double &param, double h) {
            const double x0 = param;
            param = x0 + h;
            const double lp = objective();
            param = x0 - h;
            const double lm = objective();
            param = x0;
            return (lp - lm) / (2.0 * h);
        };
        for (int e = 0; e < entries; ++e) {
            const std::size_t view = rng.index(pred.size());
            ViewMaps &m = pred.maps[view];
            const ViewMaps &g = an.grads.maps[view];
            const int u = static_cast<int>(rng.index(m.width()));
            const int v = static_cast<int>(rng.index(m.height()));
            if (m.depth(0, v, u) <= 0.0) {
                --e;
                continue;
            }
            const int cls = static_cast<int>(rng.index(5));
            ImageD *const params[5] = {&m.rgb, &m.depth, &m.opacity_raw, &m.scale_raw, &m.quat_raw};
            const ImageD *const grads[5] = {&g.rgb, &g.depth, &g.opacity_raw, &g.scale_raw, &g.quat_raw};
            const int c = static_cast<int>(rng.index(params[cls]->channels()));
            double &param = (*params[cls])(c, v, u);
            const double f1 = fd(param, step);
            const double f2 = fd(param, 0.5 * step);
            if (std::abs(f1 - f2) > 1e-2 * std::max({std::abs(f1), std::abs(f2), 1e-6})) {
                ++rep.skipped;
                continue;
            }
            const double a = (*grads[cls])(c, v, u);
            rep.max_rel_error = std::max(rep.max_rel_error, std::abs(f1 - a) / std::max({std::abs(f1), std::abs(a), 1e-6}));
            ++rep.compared;
        }
    }
    return rep;
}

} // namespace orthofuse
