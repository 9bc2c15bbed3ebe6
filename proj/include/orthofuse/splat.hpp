// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orthofuse/camera.hpp"
#include "orthofuse/gaussians.hpp"
#include "orthofuse/image.hpp"
#include "orthofuse/random.hpp"

#include <numeric>

namespace orthofuse {

struct SplatSettings {
    double contribution_clamp = 0.999;
    double transmittance_cutoff = 1e-4;
    double covariance_floor = 0.3; // pixel^2 added to the 2D covariance diagonal
    double cull_sigma = 3.0;       // contributions beyond this Mahalanobis radius are zero
    double depth_epsilon = 1e-10;
    int tile_size = 16;
};

struct RenderOutput {
    ImageD color; // 3 x H x W, premultiplied by coverage
    ImageD alpha; // 1 x H x W
    ImageD depth; // 1 x H x W, compositing-weighted ray depth
};

/// dLoss/d(render output). Any image may be left empty to mean zero.
struct RenderGradInput {
    ImageD color;
    ImageD alpha;
    ImageD depth;
};

struct Gradients {
    std::vector<Vec3> center;
    std::vector<Vec3> color;
    std::vector<double> opacity;
    std::vector<Vec3> scale;
    std::vector<Eigen::Vector4d> rotation;

    explicit Gradients(std::size_t n = 0)
        : center(n, Vec3::Zero()), color(n, Vec3::Zero()), opacity(n, 0.0), scale(n, Vec3::Zero()),
          rotation(n, Eigen::Vector4d::Zero()) {}

    std::size_t size() const noexcept { return center.size(); }

    Gradients &operator+=(const Gradients &o) {
        for (std::size_t i = 0; i < size(); ++i) {
            center[i] += o.center[i];
            color[i] += o.color[i];
            opacity[i] += o.opacity[i];
            scale[i] += o.scale[i];
            rotation[i] += o.rotation[i];
        }
        return *this;
    }
};

namespace detail {

/// Screen-space footprint of one Gaussian under an orthographic camera.
struct Footprint {
    Vec2 mean = Vec2::Zero();
    double t = 0.0;
    Mat2 conic = Mat2::Zero(); // inverse 2D covariance, pixel^-2
    Mat23 jacobian = Mat23::Zero();
    Mat3 rotation = Mat3::Identity();
    double radius = 0.0;
    bool visible = false;
};

inline Footprint project_gaussian(const Gaussian3D &g, const OrthoCamera &cam, const SplatSettings &s) {
    Footprint f;
    const Projection p = cam.project(g.center);
    f.t = p.t;
    if (!(p.t > 0.0)) {
        return f;
    }
    const double inv_pitch = 1.0 / cam.pixel_pitch();
    f.mean = {p.u, p.v};
    f.jacobian.row(0) = cam.rotation().row(0) * inv_pitch;
    f.jacobian.row(1) = -cam.rotation().row(1) * inv_pitch;
    f.rotation = quaternion_to_rotation(g.rotation);
    const Mat3 m = f.rotation * g.scale.asDiagonal();
    const Mat3 cov3 = m * m.transpose();
    Mat2 cov2 = f.jacobian * cov3 * f.jacobian.transpose();
    cov2(0, 0) += s.covariance_floor;
    cov2(1, 1) += s.covariance_floor;
    const double det = cov2.determinant();
    if (!(det > 0.0)) {
        return f;
    }
    f.conic = cov2.inverse();
    const double mid = 0.5 * (cov2(0, 0) + cov2(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    f.radius = s.cull_sigma * std::sqrt(lambda_max);
    f.visible = true;
    return f;
}

/// Sorted front-to-back by t, ties broken by cloud index, bucketed per tile.
struct TileBins {
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<std::vector<std::uint32_t>> lists;
};

inline TileBins bin_footprints(const std::vector<Footprint> &fp, const OrthoCamera &cam, const SplatSettings &s) {
    std::vector<std::uint32_t> order;
    order.reserve(fp.size());
    for (std::uint32_t i = 0; i < fp.size(); ++i) {
        if (fp[i].visible) {
            order.push_back(i);
        }
    }
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return fp[a].t < fp[b].t || (fp[a].t == fp[b].t && a < b);
    });
    TileBins bins;
    bins.tiles_x = (cam.width() + s.tile_size - 1) / s.tile_size;
    bins.tiles_y = (cam.height() + s.tile_size - 1) / s.tile_size;
    bins.lists.resize(static_cast<std::size_t>(bins.tiles_x) * bins.tiles_y);
    for (std::uint32_t idx : order) {
        const Footprint &f = fp[idx];
        const int x0 = std::max(0, static_cast<int>(std::floor((f.mean.x() - f.radius) / s.tile_size)));
        const int x1 = std::min(bins.tiles_x - 1, static_cast<int>(std::floor((f.mean.x() + f.radius) / s.tile_size)));
        const int y0 = std::max(0, static_cast<int>(std::floor((f.mean.y() - f.radius) / s.tile_size)));
        const int y1 = std::min(bins.tiles_y - 1, static_cast<int>(std::floor((f.mean.y() + f.radius) / s.tile_size)));
        for (int ty = y0; ty <= y1; ++ty) {
            for (int tx = x0; tx <= x1; ++tx) {
                bins.lists[static_cast<std::size_t>(ty) * bins.tiles_x + tx].push_back(idx);
            }
        }
    }
    return bins;
}

struct Contribution {
    std::uint32_t index;
    std::uint32_t slot; // position in the tile list
    double g;           // clamped contribution
    double falloff;     // exp(-m/2)
    double transmittance_before;
    Vec2 offset; // pixel - mean
    bool clamped;
};

/// Walks one pixel's compositing chain. Returns the final transmittance.
template <typename Visit>
double composite_pixel(const std::vector<std::uint32_t> &list, const std::vector<Footprint> &fp,
                       const std::vector<Gaussian3D> &gs, int u, int v, const SplatSettings &s, Visit &&visit) {
    const double cull_m = s.cull_sigma * s.cull_sigma;
    double T = 1.0;
    for (std::uint32_t slot = 0; slot < list.size(); ++slot) {
        if (T < s.transmittance_cutoff) {
            break;
        }
        const std::uint32_t idx = list[slot];
        const Footprint &f = fp[idx];
        const Vec2 d(u - f.mean.x(), v - f.mean.y());
        const double m = d.dot(f.conic * d);
        if (m > cull_m) {
            continue;
        }
        const double falloff = std::exp(-0.5 * m);
        const double raw = gs[idx].opacity * falloff;
        const bool clamped = raw > s.contribution_clamp;
        const double g = clamped ? s.contribution_clamp : raw;
        visit(Contribution{idx, slot, g, falloff, T, d, clamped});
        T *= 1.0 - g;
    }
    return T;
}

template <typename Fn>
void for_each_tile_pixel(const OrthoCamera &cam, const SplatSettings &s, int tx, int ty, Fn &&fn) {
    const int u0 = tx * s.tile_size;
    const int v0 = ty * s.tile_size;
    const int u1 = std::min(cam.width(), u0 + s.tile_size);
    const int v1 = std::min(cam.height(), v0 + s.tile_size);
    for (int v = v0; v < v1; ++v) {
        for (int u = u0; u < u1; ++u) {
            fn(u, v);
        }
    }
}

inline std::vector<Footprint> project_cloud(const GaussianCloud &cloud, const OrthoCamera &cam,
                                            const SplatSettings &s) {
    std::vector<Footprint> fp(cloud.size());
    parallel_for(cloud.size(), [&](std::size_t i) { fp[i] = project_gaussian(cloud.gaussians[i], cam, s); });
    return fp;
}

inline double image_value(const ImageD &img, int c, int v, int u) { return img.empty() ? 0.0 : img(c, v, u); }

// d(loss)/d(raw quaternion) given d(loss)/d(R) for R = R(q / |q|).
inline Eigen::Vector4d rotation_grad_to_quaternion(const Eigen::Vector4d &raw, const Mat3 &G) {
    const double n = raw.norm();
    if (n < 1e-12) {
        return Eigen::Vector4d::Zero();
    }
    const Eigen::Vector4d q = raw / n;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Vector4d dq;
    dq[0] = 2 * (-z * G(0, 1) + y * G(0, 2) + z * G(1, 0) - x * G(1, 2) - y * G(2, 0) + x * G(2, 1));
    dq[1] = 2 * (y * G(0, 1) + z * G(0, 2) + y * G(1, 0) - 2 * x * G(1, 1) - w * G(1, 2) + z * G(2, 0) +
                 w * G(2, 1) - 2 * x * G(2, 2));
    dq[2] = 2 * (-2 * y * G(0, 0) + x * G(0, 1) + w * G(0, 2) + x * G(1, 0) + z * G(1, 2) - w * G(2, 0) +
                 z * G(2, 1) - 2 * y * G(2, 2));
    dq[3] = 2 * (-2 * z * G(0, 0) - w * G(0, 1) + x * G(0, 2) + w * G(1, 0) - 2 * z * G(1, 1) + y * G(1, 2) +
                 x * G(2, 0) + y * G(2, 1));
    return (dq - q * q.dot(dq)) / n;
}

} // namespace detail

/// Front-to-back alpha compositing of the cloud seen by an orthographic camera.
inline RenderOutput render(const GaussianCloud &cloud, const OrthoCamera &cam, const SplatSettings &s = {}) {
    require(!cloud.empty(), "render requires a non-empty Gaussian cloud");
    const std::vector<detail::Footprint> fp = detail::project_cloud(cloud, cam, s);
    const detail::TileBins bins = detail::bin_footprints(fp, cam, s);

    RenderOutput out{ImageD(3, cam.height(), cam.width()), ImageD(1, cam.height(), cam.width()),
                     ImageD(1, cam.height(), cam.width())};
    parallel_for(bins.lists.size(), [&](std::size_t tile) {
        const auto &list = bins.lists[tile];
        const int tx = static_cast<int>(tile % bins.tiles_x);
        const int ty = static_cast<int>(tile / bins.tiles_x);
        detail::for_each_tile_pixel(cam, s, tx, ty, [&](int u, int v) {
            Vec3 color = Vec3::Zero();
            double depth_sum = 0.0;
            const double T = detail::composite_pixel(list, fp, cloud.gaussians, u, v, s, [&](const detail::Contribution &c) {
                const double w = c.g * c.transmittance_before;
                color += w * cloud.gaussians[c.index].color;
                depth_sum += w * fp[c.index].t;
            });
            const double alpha = 1.0 - T;
            for (int ch = 0; ch < 3; ++ch) {
                out.color(ch, v, u) = color[ch];
            }
            out.alpha(0, v, u) = alpha;
            out.depth(0, v, u) = depth_sum / std::max(alpha, s.depth_epsilon);
        });
    });
    return out;
}

/// Exact reverse-mode derivatives of render() for a loss whose gradient with
/// respect to the rendered images is `upstream`.
inline Gradients render_backward(const GaussianCloud &cloud, const OrthoCamera &cam, const RenderGradInput &upstream,
                                 const SplatSettings &s = {}) {
    require(!cloud.empty(), "render requires a non-empty Gaussian cloud");
    const std::vector<detail::Footprint> fp = detail::project_cloud(cloud, cam, s);
    const detail::TileBins bins = detail::bin_footprints(fp, cam, s);
    const auto &gs = cloud.gaussians;

    // Screen-space partials accumulated per tile slot, then reduced in tile order.
    struct ScreenGrad {
        Vec2 mean = Vec2::Zero();
        Eigen::Vector3d conic = Eigen::Vector3d::Zero(); // d/d(a, b, c) of [[a, b], [b, c]]
        double opacity = 0.0;
        Vec3 color = Vec3::Zero();
        double t = 0.0;
    };
    std::vector<std::vector<ScreenGrad>> partial(bins.lists.size());

    parallel_for(bins.lists.size(), [&](std::size_t tile) {
        const auto &list = bins.lists[tile];
        auto &acc = partial[tile];
        acc.assign(list.size(), ScreenGrad{});
        const int tx = static_cast<int>(tile % bins.tiles_x);
        const int ty = static_cast<int>(tile / bins.tiles_x);
        std::vector<detail::Contribution> chain;
        detail::for_each_tile_pixel(cam, s, tx, ty, [&](int u, int v) {
            chain.clear();
            double depth_sum = 0.0;
            const double T_final = detail::composite_pixel(list, fp, gs, u, v, s, [&](const detail::Contribution &c) {
                depth_sum += c.g * c.transmittance_before * fp[c.index].t;
                chain.push_back(c);
            });
            if (chain.empty()) {
                return;
            }
            const double alpha = 1.0 - T_final;
            const Vec3 g_color(detail::image_value(upstream.color, 0, v, u), detail::image_value(upstream.color, 1, v, u),
                               detail::image_value(upstream.color, 2, v, u));
            const double g_depth = detail::image_value(upstream.depth, 0, v, u);
            double g_alpha = detail::image_value(upstream.alpha, 0, v, u);
            double g_depth_sum = 0.0;
            if (alpha > s.depth_epsilon) {
                g_depth_sum = g_depth / alpha;
                g_alpha -= g_depth * depth_sum / (alpha * alpha);
            } else {
                g_depth_sum = g_depth / s.depth_epsilon;
            }
            // Every output is sum_i w_i * e_i with w_i = g_i * T_i.
            double tail = 0.0; // sum_{j > i} e_j w_j
            for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
                const detail::Contribution &c = *it;
                const Gaussian3D &gauss = gs[c.index];
                const double t = fp[c.index].t;
                const double w = c.g * c.transmittance_before;
                const double e = g_color.dot(gauss.color) + g_depth_sum * t + g_alpha;
                ScreenGrad &sg = acc[c.slot];
                sg.color += w * g_color;
                sg.t += w * g_depth_sum;
                const double d_g = c.transmittance_before * e - tail / (1.0 - c.g);
                tail += e * w;
                if (c.clamped) {
                    continue;
                }
                sg.opacity += d_g * c.falloff;
                const double d_m = -0.5 * c.g * d_g;
                const Mat2 &conic = fp[c.index].conic;
                sg.mean += d_m * (-2.0 * (conic * c.offset));
                sg.conic += d_m * Eigen::Vector3d(c.offset.x() * c.offset.x(), 2.0 * c.offset.x() * c.offset.y(),
                                                  c.offset.y() * c.offset.y());
            }
        });
    });

    std::vector<ScreenGrad> screen(gs.size());
    for (std::size_t tile = 0; tile < bins.lists.size(); ++tile) {
        const auto &list = bins.lists[tile];
        for (std::size_t slot = 0; slot < list.size(); ++slot) {
            ScreenGrad &dst = screen[list[slot]];
            const ScreenGrad &src = partial[tile][slot];
            dst.mean += src.mean;
            dst.conic += src.conic;
            dst.opacity += src.opacity;
            dst.color += src.color;
            dst.t += src.t;
        }
    }

    Gradients grads(gs.size());
    const Mat3 &cam_rot = cam.rotation();
    parallel_for(gs.size(), [&](std::size_t i) {
        const detail::Footprint &f = fp[i];
        if (!f.visible) {
            return;
        }
        const ScreenGrad &sg = screen[i];
        const Gaussian3D &g = gs[i];
        grads.color[i] = sg.color;
        grads.opacity[i] = sg.opacity;
        // mean: u = r0.x / pitch + const, v = -r1.x / pitch + const, t = pd - r2.x
        grads.center[i] = f.jacobian.transpose() * sg.mean - cam_rot.row(2).transpose() * sg.t;

        Mat2 d_conic;
        d_conic << sg.conic[0], 0.5 * sg.conic[1], 0.5 * sg.conic[1], sg.conic[2];
        const Mat2 d_cov2 = -f.conic * d_conic * f.conic;
        const Mat3 d_cov3 = f.jacobian.transpose() * d_cov2 * f.jacobian;
        const Mat3 m = f.rotation * g.scale.asDiagonal();
        const Mat3 d_m = 2.0 * d_cov3 * m;
        for (int k = 0; k < 3; ++k) {
            grads.scale[i][k] = d_m.col(k).dot(f.rotation.col(k));
        }
        const Mat3 d_rot = d_m * g.scale.asDiagonal();
        grads.rotation[i] = detail::rotation_grad_to_quaternion(g.rotation, d_rot);
    });
    return grads;
}

/// Orthographic cameras with viewing directions uniform on the sphere.
/// Up vector: world +y projected onto the image plane, falling back to -z/+z
/// (the top/bottom convention) when the view is within ~8 degrees of vertical.
inline std::vector<OrthoCamera> sample_novel_cameras(int count, std::uint64_t seed, const RigConfig &rig = {}) {
    require(count >= 1, "novel camera count must be at least 1");
    validate_rig_config(rig.resolution, rig.half_extent, rig.plane_distance);
    Rng rng(seed);
    std::vector<OrthoCamera> cams;
    cams.reserve(count);
    for (int i = 0; i < count; ++i) {
        const Vec3 d = rng.unit_vector();
        Vec3 up(0, 1, 0);
        if (std::abs(d.y()) > 0.99) {
            up = d.y() < 0 ? Vec3(0, 0, -1) : Vec3(0, 0, 1);
        }
        cams.push_back(OrthoCamera::looking(ViewId::Custom, d, up, rig.plane_distance, rig.half_extent,
                                            rig.resolution, rig.resolution));
    }
    return cams;
}

} // namespace orthofuse
