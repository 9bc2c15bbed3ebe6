// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orthofuse/camera.hpp"
#include "orthofuse/image.hpp"

#include <cstdint>

namespace orthofuse {

/// The decoder's per-view output: 3 RGB + 1 depth + 1 opacity + 3 scale + 4 quaternion channels.
struct ViewMaps {
    static constexpr int kChannels = 12;

    ImageD rgb;         // 3 x H x W in [0, 1]
    ImageD depth;       // 1 x H x W ray depth, 0 marks background
    ImageD opacity_raw; // 1 x H x W, pre-sigmoid
    ImageD scale_raw;   // 3 x H x W, pre-activation
    ImageD quat_raw;    // 4 x H x W, (w, x, y, z) before normalization

    ViewMaps() = default;
    ViewMaps(int height, int width)
        : rgb(3, height, width), depth(1, height, width), opacity_raw(1, height, width),
          scale_raw(3, height, width), quat_raw(4, height, width) {
        for (int v = 0; v < height; ++v) {
            for (int u = 0; u < width; ++u) {
                quat_raw(0, v, u) = 1.0;
            }
        }
    }

    int height() const noexcept { return depth.height(); }
    int width() const noexcept { return depth.width(); }

    bool operator==(const ViewMaps &) const = default;
};

struct ViewSet {
    std::vector<OrthoCamera> cameras;
    std::vector<ViewMaps> maps;

    std::size_t size() const noexcept { return cameras.size(); }
    int height() const { return maps.empty() ? 0 : maps.front().height(); }
    int width() const { return maps.empty() ? 0 : maps.front().width(); }

    void validate() const {
        require(!cameras.empty(), "view set has no views");
        require(cameras.size() == maps.size(), "view set camera/map count mismatch");
        const int h = maps.front().height();
        const int w = maps.front().width();
        for (std::size_t i = 0; i < maps.size(); ++i) {
            const ViewMaps &m = maps[i];
            require(m.rgb.channels() == 3 && m.depth.channels() == 1 && m.opacity_raw.channels() == 1 &&
                        m.scale_raw.channels() == 3 && m.quat_raw.channels() == 4,
                    "view maps must carry 3+1+1+3+4 channels");
            for (const ImageD *img : {&m.rgb, &m.depth, &m.opacity_raw, &m.scale_raw, &m.quat_raw}) {
                require(img->height() == h && img->width() == w, "all views must share H and W");
            }
            require(cameras[i].height() == h && cameras[i].width() == w,
                    "camera resolution does not match its maps");
        }
    }
};

struct Gaussian3D {
    Vec3 center = Vec3::Zero();
    Vec3 color = Vec3::Zero();
    double opacity = 0.0;
    Vec3 scale = Vec3::Ones();
    Eigen::Vector4d rotation{1.0, 0.0, 0.0, 0.0}; // (w, x, y, z)

    bool operator==(const Gaussian3D &) const = default;
};

struct PixelSource {
    int view = 0;
    int u = 0;
    int v = 0;

    bool operator==(const PixelSource &) const = default;
};

struct GaussianCloud {
    std::vector<Gaussian3D> gaussians;
    std::vector<PixelSource> source; // empty when the cloud was not built from pixels

    std::size_t size() const noexcept { return gaussians.size(); }
    bool empty() const noexcept { return gaussians.empty(); }
};

inline constexpr double kScaleMin = 0.01;
inline constexpr double kScaleMax = 2.5;
inline constexpr double kMeshingOpacityThreshold = 0.1;

/// 0.01*sigmoid(s) + 2.5*(1 - sigmoid(s)) in pixel-pitch units, written so the
/// saturated ends stay representable.
inline double scale_activation(double s) { return kScaleMin + (kScaleMax - kScaleMin) * sigmoid(-s); }

inline Vec3 scale_activation(const Vec3 &s) {
    return {scale_activation(s.x()), scale_activation(s.y()), scale_activation(s.z())};
}

inline double scale_activation_derivative(double s) {
    return -(kScaleMax - kScaleMin) * sigmoid(s) * sigmoid(-s);
}

/// Unit quaternion from a raw one; a zero raw quaternion maps to identity.
inline Eigen::Vector4d normalize_quaternion(const Eigen::Vector4d &raw) {
    const double n = raw.norm();
    if (n < 1e-12) {
        return {1.0, 0.0, 0.0, 0.0};
    }
    return raw / n;
}

/// Rotation matrix of a (w, x, y, z) quaternion; the input is normalized first.
inline Mat3 quaternion_to_rotation(const Eigen::Vector4d &raw) {
    const Eigen::Vector4d q = normalize_quaternion(raw);
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

/// Activated Gaussian for one pixel; does not check depth or opacity.
inline Gaussian3D pixel_gaussian(const ViewMaps &m, const OrthoCamera &cam, int u, int v) {
    Gaussian3D g;
    g.center = cam.unproject(u, v, m.depth(0, v, u));
    g.color = {m.rgb(0, v, u), m.rgb(1, v, u), m.rgb(2, v, u)};
    g.opacity = sigmoid(m.opacity_raw(0, v, u));
    g.scale = scale_activation(Vec3(m.scale_raw(0, v, u), m.scale_raw(1, v, u), m.scale_raw(2, v, u))) *
              cam.pixel_pitch();
    g.rotation = normalize_quaternion(
        {m.quat_raw(0, v, u), m.quat_raw(1, v, u), m.quat_raw(2, v, u), m.quat_raw(3, v, u)});
    return g;
}

/// One Gaussian per pixel with depth > 0 and sigmoid(opacity_raw) >= threshold,
/// ordered view-major then row-major.
inline GaussianCloud build_pixel_gaussians(const ViewSet &views, double opacity_threshold = 0.0) {
    views.validate();
    require(opacity_threshold >= 0.0 && opacity_threshold < 1.0, "opacity threshold must lie in [0, 1)");
    GaussianCloud cloud;
    for (std::size_t i = 0; i < views.size(); ++i) {
        const ViewMaps &m = views.maps[i];
        const OrthoCamera &cam = views.cameras[i];
        for (int v = 0; v < m.height(); ++v) {
            for (int u = 0; u < m.width(); ++u) {
                if (m.depth(0, v, u) <= 0.0 || sigmoid(m.opacity_raw(0, v, u)) < opacity_threshold) {
                    continue;
                }
                cloud.gaussians.push_back(pixel_gaussian(m, cam, u, v));
                cloud.source.push_back({static_cast<int>(i), u, v});
            }
        }
    }
    if (cloud.empty()) {
        throw EmptyResultError("no pixel survived depth/opacity masking; the Gaussian cloud is empty");
    }
    return cloud;
}

using Mask = Image<std::uint8_t>;

inline bool keep_for_meshing(double activated_opacity, double depth) {
    return depth > 0.0 && activated_opacity >= kMeshingOpacityThreshold;
}

/// Meshing mask per view: sigmoid(opacity_raw) >= 0.1 (kept on equality) and depth > 0.
inline std::vector<Mask> mask_for_meshing(const ViewSet &views) {
    views.validate();
    std::vector<Mask> masks;
    masks.reserve(views.size());
    for (const ViewMaps &m : views.maps) {
        Mask mask(1, m.height(), m.width(), 0);
        for (int v = 0; v < m.height(); ++v) {
            for (int u = 0; u < m.width(); ++u) {
                mask(0, v, u) = keep_for_meshing(sigmoid(m.opacity_raw(0, v, u)), m.depth(0, v, u)) ? 1 : 0;
            }
        }
        masks.push_back(std::move(mask));
    }
    return masks;
}

} // namespace orthofuse
