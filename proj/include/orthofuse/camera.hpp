// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orthofuse/common.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace orthofuse {

// World frame: right-handed, +y up, content normalized into the unit sphere.
//
// Camera frame rows of the world-to-camera rotation:
//   row 0: image right (u grows), row 1: image up (v shrinks),
//   row 2: backward, i.e. the negated viewing direction.
// The image plane sits at plane_distance along the backward axis; rays leave
// the plane along the viewing direction, and depth t is measured from the plane.

enum class ViewId { Front, Back, Left, Right, Top, Bottom, Custom };

inline std::string_view to_string(ViewId id) {
    switch (id) {
    case ViewId::Front: return "front";
    case ViewId::Back: return "back";
    case ViewId::Left: return "left";
    case ViewId::Right: return "right";
    case ViewId::Top: return "top";
    case ViewId::Bottom: return "bottom";
    case ViewId::Custom: return "custom";
    }
    return "custom";
}

inline ViewId view_id_from_string(std::string_view name) {
    for (ViewId id : {ViewId::Front, ViewId::Back, ViewId::Left, ViewId::Right, ViewId::Top,
                      ViewId::Bottom}) {
        if (name == to_string(id)) {
            return id;
        }
    }
    return ViewId::Custom;
}

struct Ray {
    Vec3 origin;
    Vec3 direction;
};

/// Continuous pixel coordinates plus ray depth of a projected point.
/// Pixel (u, v) has its center at exactly (u, v); t <= 0 means the point is
/// on or behind the image plane.
struct Projection {
    double u = 0.0;
    double v = 0.0;
    double t = 0.0;

    bool in_front() const noexcept { return t > 0.0; }
};

class OrthoCamera {
public:
    static constexpr double kRotationTolerance = 1e-9;

    OrthoCamera(ViewId id, const Mat3 &world_to_camera, double plane_distance, double half_extent,
                int height, int width)
        : id_(id), rotation_(world_to_camera), plane_distance_(plane_distance),
          half_extent_(half_extent), height_(height), width_(width) {
        require(half_extent > 0.0, "camera half_extent must be positive");
        require(plane_distance > 0.0, "camera plane_distance must be positive");
        require(height > 0 && width > 0, "camera resolution must be positive");
        const double ortho_err = (rotation_ * rotation_.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
        require(ortho_err <= kRotationTolerance && std::abs(rotation_.determinant() - 1.0) <= kRotationTolerance,
                "camera rotation must be orthonormal with determinant +1");
    }

    /// Camera looking along `view_dir` with `up_hint` projected to the image up axis.
    static OrthoCamera looking(ViewId id, const Vec3 &view_dir, const Vec3 &up_hint, double plane_distance,
                               double half_extent, int height, int width) {
        const Vec3 d = view_dir.normalized();
        Vec3 up = up_hint - up_hint.dot(d) * d;
        require(up.norm() > 1e-9, "camera up hint is parallel to the viewing direction");
        up.normalize();
        const Vec3 right = d.cross(up);
        Mat3 r;
        r.row(0) = right.transpose();
        r.row(1) = up.transpose();
        r.row(2) = (-d).transpose();
        return OrthoCamera(id, r, plane_distance, half_extent, height, width);
    }

    ViewId id() const noexcept { return id_; }
    const Mat3 &rotation() const noexcept { return rotation_; }
    double plane_distance() const noexcept { return plane_distance_; }
    double half_extent() const noexcept { return half_extent_; }
    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    double pixel_pitch() const noexcept { return 2.0 * half_extent_ / width_; }

    Vec3 right() const { return rotation_.row(0).transpose(); }
    Vec3 up() const { return rotation_.row(1).transpose(); }
    Vec3 view_direction() const { return -rotation_.row(2).transpose(); }

    bool contains_pixel(int u, int v) const noexcept { return u >= 0 && u < width_ && v >= 0 && v < height_; }

    /// Ray through a pixel center given in continuous coordinates.
    Ray ray_at(double u, double v) const {
        const double pitch = pixel_pitch();
        const double x = -half_extent_ + (u + 0.5) * pitch;
        const double y = 0.5 * pitch * height_ - (v + 0.5) * pitch;
        const Vec3 origin = plane_distance_ * (-view_direction()) + x * right() + y * up();
        return {origin, view_direction()};
    }

    Vec3 unproject(double u, double v, double t) const {
        const Ray ray = ray_at(u, v);
        return ray.origin + t * ray.direction;
    }

    Projection project(const Vec3 &p) const {
        const Vec3 q = rotation_ * p;
        const double pitch = pixel_pitch();
        return {(q.x() + half_extent_) / pitch - 0.5, (0.5 * pitch * height_ - q.y()) / pitch - 0.5,
                plane_distance_ - q.z()};
    }

    bool operator==(const OrthoCamera &) const = default;

private:
    ViewId id_;
    Mat3 rotation_;
    double plane_distance_;
    double half_extent_;
    int height_;
    int width_;
};

/// Ray through the center of pixel (u, v); indices are validated.
inline Ray pixel_ray(const OrthoCamera &cam, int u, int v) {
    require(cam.contains_pixel(u, v), "pixel index out of range");
    return cam.ray_at(u, v);
}

/// x = ray_o + t * ray_d for the pixel center (u, v); t must be positive.
inline Vec3 unproject(const OrthoCamera &cam, double u, double v, double t) {
    require(t > 0.0, "unproject requires positive depth");
    return cam.unproject(u, v, t);
}

inline Projection project(const OrthoCamera &cam, const Vec3 &p) { return cam.project(p); }

struct RigConfig {
    int resolution = 256;
    double half_extent = 1.0;
    double plane_distance = 2.0;
};

/// Viewing direction and up vector of a canonical view. Side views share world
/// +y as image up; top uses -z and bottom +z, so every pair shares an image axis.
inline std::pair<Vec3, Vec3> canonical_view_axes(ViewId id) {
    switch (id) {
    case ViewId::Front: return {Vec3(0, 0, -1), Vec3(0, 1, 0)};
    case ViewId::Back: return {Vec3(0, 0, 1), Vec3(0, 1, 0)};
    case ViewId::Left: return {Vec3(1, 0, 0), Vec3(0, 1, 0)};
    case ViewId::Right: return {Vec3(-1, 0, 0), Vec3(0, 1, 0)};
    case ViewId::Top: return {Vec3(0, -1, 0), Vec3(0, 0, -1)};
    case ViewId::Bottom: return {Vec3(0, 1, 0), Vec3(0, 0, 1)};
    case ViewId::Custom: break;
    }
    throw PreconditionError("custom views have no canonical axes");
}

inline void validate_rig_config(int resolution, double half_extent, double plane_distance) {
    require(resolution >= 2, "rig resolution must be at least 2");
    require(half_extent >= 1.0, "rig half_extent must be >= 1 so the unit sphere fits in the image");
    require(plane_distance > 1.0, "rig plane_distance must exceed 1 so the unit sphere is in front of every plane");
}

/// Front, Back, Left, Right, Top, Bottom in that order.
inline std::vector<OrthoCamera> make_six_view_rig(int resolution, double half_extent, double plane_distance) {
    validate_rig_config(resolution, half_extent, plane_distance);
    std::vector<OrthoCamera> rig;
    rig.reserve(6);
    for (ViewId id : {ViewId::Front, ViewId::Back, ViewId::Left, ViewId::Right, ViewId::Top, ViewId::Bottom}) {
        const auto [dir, up] = canonical_view_axes(id);
        rig.push_back(OrthoCamera::looking(id, dir, up, plane_distance, half_extent, resolution, resolution));
    }
    return rig;
}

inline std::vector<OrthoCamera> make_six_view_rig(const RigConfig &cfg) {
    return make_six_view_rig(cfg.resolution, cfg.half_extent, cfg.plane_distance);
}

} // namespace orthofuse
