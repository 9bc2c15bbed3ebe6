// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orthofuse/gaussians.hpp"
#include "orthofuse/scenes.hpp"
#include "orthofuse/splat.hpp"

namespace orthofuse {

struct LossWeights {
    double lpips = 0.5; // perceptual term weight; the term itself is always 0 here
    double gm = 2.0;
    int nvs_view_count = 10;

    void validate() const {
        require(lpips >= 0.0 && gm >= 0.0, "loss weights must be non-negative");
        require(nvs_view_count >= 0, "nvs_view_count must be non-negative");
    }
};

struct LossReport {
    double reg_rgb_mse = 0.0;
    double reg_rgb_lpips = 0.0;
    double reg_dep_l1 = 0.0;
    double reg_dep_gm = 0.0;
    double nvs_rgb_mse = 0.0;
    double nvs_rgb_lpips = 0.0;
    double nvs_alpha_mse = 0.0;
    double total = 0.0;

    void finalize(const LossWeights &w) {
        total = reg_rgb_mse + w.lpips * reg_rgb_lpips + reg_dep_l1 + w.gm * reg_dep_gm + nvs_rgb_mse +
                w.lpips * nvs_rgb_lpips + nvs_alpha_mse;
    }

    std::vector<std::pair<std::string, double>> items() const {
        return {{"reg_rgb_mse", reg_rgb_mse},     {"reg_rgb_lpips", reg_rgb_lpips}, {"reg_dep_l1", reg_dep_l1},
                {"reg_dep_gm", reg_dep_gm},       {"nvs_rgb_mse", nvs_rgb_mse},     {"nvs_rgb_lpips", nvs_rgb_lpips},
                {"nvs_alpha_mse", nvs_alpha_mse}, {"total", total}};
    }
};

/// Derivatives with respect to every raw channel of a ViewSet.
struct ViewSetGradients {
    std::vector<ViewMaps> maps;

    static ViewSetGradients zeros_like(const ViewSet &views) {
        ViewSetGradients g;
        for (const ViewMaps &m : views.maps) {
            ViewMaps z(m.height(), m.width());
            std::fill(z.quat_raw.data().begin(), z.quat_raw.data().end(), 0.0);
            g.maps.push_back(std::move(z));
        }
        return g;
    }
};

// ---------------------------------------------------------------------------
// Multi-scale gradient matching

inline constexpr int kGradientMatchingScales = 4;

namespace detail {

struct MaskedLevel {
    int h = 0;
    int w = 0;
    std::vector<double> r;
    std::vector<std::uint8_t> valid;
};

// Averages 2x2 blocks; a coarse pixel is valid only if all four children are.
inline MaskedLevel downsample(const MaskedLevel &fine) {
    MaskedLevel c;
    c.h = fine.h / 2;
    c.w = fine.w / 2;
    c.r.assign(static_cast<std::size_t>(c.h) * c.w, 0.0);
    c.valid.assign(c.r.size(), 0);
    for (int v = 0; v < c.h; ++v) {
        for (int u = 0; u < c.w; ++u) {
            bool ok = true;
            double sum = 0.0;
            for (int k = 0; k < 4; ++k) {
                const std::size_t f = static_cast<std::size_t>(2 * v + (k >> 1)) * fine.w + 2 * u + (k & 1);
                ok = ok && fine.valid[f];
                sum += fine.r[f];
            }
            const std::size_t i = static_cast<std::size_t>(v) * c.w + u;
            c.valid[i] = ok ? 1 : 0;
            c.r[i] = ok ? 0.25 * sum : 0.0;
        }
    }
    return c;
}

inline double sign(double x) { return (x > 0.0) - (x < 0.0); }

// Loss of one level and, optionally, its derivative with respect to level.r.
inline double level_gm(const MaskedLevel &lv, std::vector<double> *grad) {
    std::size_t count = 0;
    for (auto m : lv.valid) {
        count += m;
    }
    if (grad) {
        grad->assign(lv.r.size(), 0.0);
    }
    if (count == 0) {
        return 0.0;
    }
    const double inv = 1.0 / static_cast<double>(count);
    double sum = 0.0;
    const auto term = [&](std::size_t a, std::size_t b) {
        if (!lv.valid[a] || !lv.valid[b]) {
            return;
        }
        const double d = lv.r[b] - lv.r[a];
        sum += std::abs(d);
        if (grad) {
            (*grad)[b] += sign(d) * inv;
            (*grad)[a] -= sign(d) * inv;
        }
    };
    for (int v = 0; v < lv.h; ++v) {
        for (int u = 0; u < lv.w; ++u) {
            const std::size_t i = static_cast<std::size_t>(v) * lv.w + u;
            if (u + 1 < lv.w) {
                term(i, i + 1);
            }
            if (v + 1 < lv.h) {
                term(i, i + lv.w);
            }
        }
    }
    return sum * inv;
}

} // namespace detail

/// Sum over four scales of (1/n_k) * sum(|dR/du| + |dR/dv|) with R = pred - gt,
/// forward differences, and differences touching an invalid pixel dropped.
/// `grad`, when given, receives d(loss)/d(pred).
inline double loss_gm(const ImageD &pred, const ImageD &gt, const Mask &mask, ImageD *grad = nullptr) {
    require(pred.channels() == 1 && pred.same_shape(gt) && mask.channels() == 1 && mask.height() == pred.height() &&
                mask.width() == pred.width(),
            "loss_gm needs matching 1 x H x W depth maps and mask");
    std::vector<detail::MaskedLevel> levels(1);
    levels[0].h = pred.height();
    levels[0].w = pred.width();
    const std::size_t n = static_cast<std::size_t>(pred.height()) * pred.width();
    levels[0].r.resize(n);
    levels[0].valid.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        levels[0].valid[i] = mask.data()[i] ? 1 : 0;
        levels[0].r[i] = mask.data()[i] ? pred.data()[i] - gt.data()[i] : 0.0;
    }
    for (int k = 1; k < kGradientMatchingScales && levels.back().h >= 2 && levels.back().w >= 2; ++k) {
        levels.push_back(detail::downsample(levels.back()));
    }

    double total = 0.0;
    std::vector<double> carry; // d(loss of coarser levels)/d(r) at the current level
    for (int k = static_cast<int>(levels.size()) - 1; k >= 0; --k) {
        const detail::MaskedLevel &lv = levels[k];
        std::vector<double> g;
        total += detail::level_gm(lv, grad ? &g : nullptr);
        if (!grad) {
            continue;
        }
        if (!carry.empty()) {
            const int cw = levels[k + 1].w;
            for (int v = 0; v < levels[k + 1].h; ++v) {
                for (int u = 0; u < cw; ++u) {
                    const double c = carry[static_cast<std::size_t>(v) * cw + u];
                    if (c == 0.0) {
                        continue;
                    }
                    for (int q = 0; q < 4; ++q) {
                        g[static_cast<std::size_t>(2 * v + (q >> 1)) * lv.w + 2 * u + (q & 1)] += 0.25 * c;
                    }
                }
            }
        }
        carry = std::move(g);
    }
    if (grad) {
        *grad = ImageD(1, pred.height(), pred.width());
        for (std::size_t i = 0; i < n; ++i) {
            grad->data()[i] = levels[0].valid[i] ? carry[i] : 0.0;
        }
    }
    return total;
}

// ---------------------------------------------------------------------------
// Regression losses over the predicted views

/// RGB MSE over all views/pixels/channels, depth L1 averaged over GT-valid
/// pixels of all views, and the view-averaged gradient-matching term.
inline LossReport loss_reg(const ViewSet &pred, const ViewSet &gt, const LossWeights &w,
                           ViewSetGradients *grad = nullptr) {
    w.validate();
    pred.validate();
    gt.validate();
    require(pred.size() == gt.size(), "pred and gt must have the same number of views");
    for (std::size_t i = 0; i < pred.size(); ++i) {
        require(pred.maps[i].height() == gt.maps[i].height() && pred.maps[i].width() == gt.maps[i].width(),
                "pred and gt views must have matching resolutions");
    }
    LossReport r;
    if (grad) {
        *grad = ViewSetGradients::zeros_like(pred);
    }
    if (pred.size() == 0) {
        r.finalize(w);
        return r;
    }

    std::size_t rgb_count = 0;
    std::size_t depth_count = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        rgb_count += pred.maps[i].rgb.size();
        for (std::size_t p = 0; p < gt.maps[i].depth.size(); ++p) {
            depth_count += gt.maps[i].depth.data()[p] > 0.0;
        }
    }
    const double views = static_cast<double>(pred.size());

    for (std::size_t i = 0; i < pred.size(); ++i) {
        const ViewMaps &p = pred.maps[i];
        const ViewMaps &g = gt.maps[i];
        for (std::size_t k = 0; k < p.rgb.size(); ++k) {
            const double d = p.rgb.data()[k] - g.rgb.data()[k];
            r.reg_rgb_mse += d * d / static_cast<double>(rgb_count);
            if (grad) {
                grad->maps[i].rgb.data()[k] = 2.0 * d / static_cast<double>(rgb_count);
            }
        }
        Mask valid(1, g.height(), g.width(), 0);
        for (std::size_t k = 0; k < g.depth.size(); ++k) {
            if (g.depth.data()[k] <= 0.0) {
                continue;
            }
            valid.data()[k] = 1;
            const double d = p.depth.data()[k] - g.depth.data()[k];
            r.reg_dep_l1 += std::abs(d) / static_cast<double>(depth_count);
            if (grad) {
                grad->maps[i].depth.data()[k] = detail::sign(d) / static_cast<double>(depth_count);
            }
        }
        ImageD gm_grad;
        r.reg_dep_gm += loss_gm(p.depth, g.depth, valid, grad ? &gm_grad : nullptr) / views;
        if (grad) {
            for (std::size_t k = 0; k < gm_grad.size(); ++k) {
                grad->maps[i].depth.data()[k] += w.gm * gm_grad.data()[k] / views;
            }
        }
    }
    r.finalize(w);
    return r;
}

// ---------------------------------------------------------------------------
// Novel-view losses through the splat renderer

/// Reference images for one novel camera; color is premultiplied by alpha.
struct NvsTarget {
    OrthoCamera camera;
    ImageD color; // 3 x H x W
    ImageD alpha; // 1 x H x W
};

inline std::vector<NvsTarget> nvs_targets_from_cloud(const GaussianCloud &cloud, const std::vector<OrthoCamera> &cams,
                                                     const SplatSettings &s = {}) {
    std::vector<NvsTarget> out;
    for (const OrthoCamera &cam : cams) {
        RenderOutput img = render(cloud, cam, s);
        out.push_back({cam, std::move(img.color), std::move(img.alpha)});
    }
    return out;
}

/// Exact analytic references: flat albedo on hits, alpha 1 on hits and 0 elsewhere.
inline std::vector<NvsTarget> nvs_targets_from_scene(const AnalyticScene &scene, const std::vector<OrthoCamera> &cams) {
    const ViewSet views = render_gt_views(scene, cams);
    std::vector<NvsTarget> out;
    for (std::size_t i = 0; i < cams.size(); ++i) {
        const ViewMaps &m = views.maps[i];
        NvsTarget t{cams[i], m.rgb, ImageD(1, m.height(), m.width())};
        for (std::size_t k = 0; k < m.depth.size(); ++k) {
            t.alpha.data()[k] = m.depth.data()[k] > 0.0 ? 1.0 : 0.0;
        }
        out.push_back(std::move(t));
    }
    return out;
}

struct NvsResult {
    double rgb_mse = 0.0;
    double alpha_mse = 0.0;
    Gradients grads;
};

/// RGB and alpha MSE of the cloud rendered at each target camera, averaged over
/// all cameras and pixels, with gradients for every Gaussian parameter.
inline NvsResult loss_nvs(const GaussianCloud &cloud, const std::vector<NvsTarget> &targets,
                          const SplatSettings &s = {}) {
    require(!cloud.empty(), "loss_nvs requires a non-empty Gaussian cloud");
    NvsResult res;
    res.grads = Gradients(cloud.size());
    if (targets.empty()) {
        return res;
    }
    std::size_t color_count = 0;
    std::size_t alpha_count = 0;
    for (const NvsTarget &t : targets) {
        require(t.color.channels() == 3 && t.color.height() == t.camera.height() && t.color.width() == t.camera.width(),
                "NVS target color must be 3 x H x W at the camera resolution");
        require(t.alpha.channels() == 1 && t.alpha.height() == t.camera.height() && t.alpha.width() == t.camera.width(),
                "NVS target alpha must be 1 x H x W at the camera resolution");
        color_count += t.color.size();
        alpha_count += t.alpha.size();
    }
    for (const NvsTarget &t : targets) {
        const RenderOutput img = render(cloud, t.camera, s);
        RenderGradInput up{ImageD(3, t.camera.height(), t.camera.width()),
                           ImageD(1, t.camera.height(), t.camera.width()), ImageD()};
        bool any = false;
        for (std::size_t k = 0; k < img.color.size(); ++k) {
            const double d = img.color.data()[k] - t.color.data()[k];
            res.rgb_mse += d * d / static_cast<double>(color_count);
            up.color.data()[k] = 2.0 * d / static_cast<double>(color_count);
            any = any || d != 0.0;
        }
        for (std::size_t k = 0; k < img.alpha.size(); ++k) {
            const double d = img.alpha.data()[k] - t.alpha.data()[k];
            res.alpha_mse += d * d / static_cast<double>(alpha_count);
            up.alpha.data()[k] = 2.0 * d / static_cast<double>(alpha_count);
            any = any || d != 0.0;
        }
        if (any) {
            res.grads += render_backward(cloud, t.camera, up, s);
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Full objective

struct TrainingLoss {
    LossReport report;
    ViewSetGradients grads;
};

/// L = L_reg(pred, gt) + L_nvs(pixel Gaussians of pred), differentiated with
/// respect to every raw channel of `pred`. Pixels with depth <= 0 spawn no
/// Gaussian and get no NVS gradient.
inline TrainingLoss training_loss(const ViewSet &pred, const ViewSet &gt, const std::vector<NvsTarget> &targets,
                                  const LossWeights &w, const SplatSettings &s = {}) {
    TrainingLoss out;
    out.report = loss_reg(pred, gt, w, &out.grads);
    const GaussianCloud cloud = build_pixel_gaussians(pred, 0.0);
    const NvsResult nvs = loss_nvs(cloud, targets, s);
    out.report.nvs_rgb_mse = nvs.rgb_mse;
    out.report.nvs_alpha_mse = nvs.alpha_mse;
    out.report.finalize(w);

    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const PixelSource &src = cloud.source[i];
        const ViewMaps &m = pred.maps[src.view];
        ViewMaps &g = out.grads.maps[src.view];
        const OrthoCamera &cam = pred.cameras[src.view];
        const int u = src.u;
        const int v = src.v;
        for (int c = 0; c < 3; ++c) {
            g.rgb(c, v, u) += nvs.grads.color[i][c];
            g.scale_raw(c, v, u) +=
                nvs.grads.scale[i][c] * scale_activation_derivative(m.scale_raw(c, v, u)) * cam.pixel_pitch();
        }
        g.depth(0, v, u) += nvs.grads.center[i].dot(cam.view_direction());
        const double op = sigmoid(m.opacity_raw(0, v, u));
        g.opacity_raw(0, v, u) += nvs.grads.opacity[i] * op * (1.0 - op);
        const Eigen::Vector4d raw(m.quat_raw(0, v, u), m.quat_raw(1, v, u), m.quat_raw(2, v, u), m.quat_raw(3, v, u));
        const double qn = raw.norm();
        if (qn >= 1e-12) {
            for (int c = 0; c < 4; ++c) {
                g.quat_raw(c, v, u) += nvs.grads.rotation[i][c] / qn;
            }
        }
    }
    return out;
}

} // namespace orthofuse
