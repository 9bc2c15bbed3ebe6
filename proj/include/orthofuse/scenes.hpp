// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orthofuse/camera.hpp"
#include "orthofuse/gaussians.hpp"
#include "orthofuse/marching_cubes.hpp"
#include "orthofuse/random.hpp"

#include <limits>
#include <string>

namespace orthofuse {

enum class PrimitiveKind { Sphere, Box, Torus, Capsule };

/// One solid with an exact signed distance in its local frame.
///   Sphere:  size.x = radius
///   Box:     size = half extents
///   Torus:   size.x = ring radius, size.y = tube radius (ring in local xz)
///   Capsule: size.x = half length of the segment along local y, size.y = radius
struct Primitive {
    PrimitiveKind kind = PrimitiveKind::Sphere;
    Vec3 center = Vec3::Zero();
    Mat3 rotation = Mat3::Identity(); // local-to-world
    Vec3 size = Vec3::Ones();
    Vec3 color = Vec3::Constant(0.5);

    double local_sdf(const Vec3 &q) const {
        switch (kind) {
        case PrimitiveKind::Sphere:
            return q.norm() - size.x();
        case PrimitiveKind::Box: {
            const Vec3 d = q.cwiseAbs() - size;
            return d.cwiseMax(0.0).norm() + std::min(d.maxCoeff(), 0.0);
        }
        case PrimitiveKind::Torus: {
            const double ring = std::hypot(q.x(), q.z()) - size.x();
            return std::hypot(ring, q.y()) - size.y();
        }
        case PrimitiveKind::Capsule: {
            Vec3 p = q;
            p.y() -= std::clamp(p.y(), -size.x(), size.x());
            return p.norm() - size.y();
        }
        }
        return std::numeric_limits<double>::infinity();
    }

    double sdf(const Vec3 &p) const { return local_sdf(rotation.transpose() * (p - center)); }

    /// Radius of a ball about the world origin that contains the primitive.
    double bounding_radius() const {
        double extent = 0.0;
        switch (kind) {
        case PrimitiveKind::Sphere: extent = size.x(); break;
        case PrimitiveKind::Box: extent = size.norm(); break;
        case PrimitiveKind::Torus: extent = size.x() + size.y(); break;
        case PrimitiveKind::Capsule: extent = size.x() + size.y(); break;
        }
        return center.norm() + extent;
    }
};

/// Union of primitives with flat albedo.
struct AnalyticScene {
    std::string name;
    std::vector<Primitive> primitives;

    double sdf(const Vec3 &p) const {
        double d = std::numeric_limits<double>::infinity();
        for (const Primitive &prim : primitives) {
            d = std::min(d, prim.sdf(p));
        }
        return d;
    }

    /// Albedo of the closest primitive (first one on ties).
    Vec3 color(const Vec3 &p) const {
        double best = std::numeric_limits<double>::infinity();
        Vec3 c = Vec3::Zero();
        for (const Primitive &prim : primitives) {
            const double d = prim.sdf(p);
            if (d < best) {
                best = d;
                c = prim.color;
            }
        }
        return c;
    }

    Vec3 gradient(const Vec3 &p, double h = 1e-6) const {
        Vec3 g;
        for (int a = 0; a < 3; ++a) {
            Vec3 e = Vec3::Zero();
            e[a] = h;
            g[a] = (sdf(p + e) - sdf(p - e)) / (2.0 * h);
        }
        return g;
    }

    double bounding_radius() const {
        double r = 0.0;
        for (const Primitive &prim : primitives) {
            r = std::max(r, prim.bounding_radius());
        }
        return r;
    }

    /// Uniformly rescales about the origin so the bound equals `radius`.
    void normalize(double radius = 1.0) {
        const double r = bounding_radius();
        require(r > 0.0, "cannot normalize an empty scene");
        const double k = radius / r;
        for (Primitive &prim : primitives) {
            prim.center *= k;
            prim.size *= k;
        }
    }
};

// ---------------------------------------------------------------------------
// Scene catalogue

inline Mat3 axis_angle(const Vec3 &axis, double degrees) {
    return Eigen::AngleAxisd(degrees * std::numbers::pi / 180.0, axis.normalized()).toRotationMatrix();
}

inline std::vector<std::string> named_scene_list() {
    return {"sphere", "box", "torus", "sphere-box", "capsule-torus"};
}

inline AnalyticScene named_scene(const std::string &name) {
    AnalyticScene s;
    s.name = name;
    if (name == "sphere") {
        s.primitives.push_back({PrimitiveKind::Sphere, Vec3::Zero(), Mat3::Identity(), Vec3(1.0, 0, 0),
                                Vec3(0.8, 0.3, 0.2)});
        return s;
    }
    if (name == "box") {
        s.primitives.push_back({PrimitiveKind::Box, Vec3::Zero(), axis_angle(Vec3(1, 2, 0.5), 25.0),
                                Vec3(0.55, 0.45, 0.35), Vec3(0.2, 0.6, 0.9)});
    } else if (name == "torus") {
        s.primitives.push_back({PrimitiveKind::Torus, Vec3::Zero(), axis_angle(Vec3(1, 0, 0.3), 30.0),
                                Vec3(0.62, 0.26, 0), Vec3(0.9, 0.8, 0.1)});
    } else if (name == "sphere-box") {
        s.primitives.push_back({PrimitiveKind::Sphere, Vec3(-0.25, 0.1, 0.0), Mat3::Identity(), Vec3(0.5, 0, 0),
                                Vec3(0.9, 0.2, 0.2)});
        s.primitives.push_back({PrimitiveKind::Box, Vec3(0.3, -0.15, 0.05), axis_angle(Vec3(0, 1, 0), 35.0),
                                Vec3(0.35, 0.3, 0.3), Vec3(0.2, 0.8, 0.3)});
    } else if (name == "capsule-torus") {
        s.primitives.push_back({PrimitiveKind::Capsule, Vec3(0.0, 0.0, 0.0), axis_angle(Vec3(0, 0, 1), 20.0),
                                Vec3(0.45, 0.22, 0), Vec3(0.3, 0.3, 0.9)});
        s.primitives.push_back({PrimitiveKind::Torus, Vec3(0.0, -0.1, 0.0), axis_angle(Vec3(1, 0, 0), 15.0),
                                Vec3(0.45, 0.14, 0), Vec3(0.9, 0.5, 0.1)});
    } else {
        throw PreconditionError("unknown scene '" + name + "'");
    }
    s.normalize(0.95);
    return s;
}

/// Union of 2-3 randomly posed primitives, normalized into the unit sphere.
inline AnalyticScene random_scene(std::uint64_t seed) {
    Rng rng(seed);
    AnalyticScene s;
    s.name = "random-" + std::to_string(seed);
    const int count = 4 + static_cast<int>(rng.index(4));
    for (int i = 0; i < count; ++i) {
        Primitive p;
        p.kind = static_cast<PrimitiveKind>(rng.index(4));
        p.center = 0.6 * rng.in_unit_ball();
        // Upright poses: a random yaw, optionally laid on its side.
        p.rotation = axis_angle(Vec3::UnitY(), rng.uniform(0.0, 360.0));
        if (rng.index(2) == 1) {
            p.rotation = p.rotation * axis_angle(Vec3::UnitX(), 90.0);
        }
        p.color = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
        switch (p.kind) {
        case PrimitiveKind::Sphere: p.size = {rng.uniform(0.25, 0.5), 0, 0}; break;
        case PrimitiveKind::Box:
            p.size = {rng.uniform(0.15, 0.45), rng.uniform(0.15, 0.45), rng.uniform(0.15, 0.45)};
            break;
        case PrimitiveKind::Torus: {
            const double ring = rng.uniform(0.3, 0.5);
            p.size = {ring, rng.uniform(0.1, 0.4) * ring, 0};
            break;
        }
        case PrimitiveKind::Capsule: p.size = {rng.uniform(0.15, 0.4), rng.uniform(0.12, 0.25), 0}; break;
        }
        s.primitives.push_back(p);
    }
    s.normalize(0.95);
    return s;
}

// ---------------------------------------------------------------------------
// Ground-truth rendering and sampling

struct TraceSettings {
    double surface_tolerance = 1e-6;
    int max_steps = 4000;
    double content_radius = 1.0;
};

/// Ray depth of the first surface hit along the pixel ray, or 0 on a miss.
inline double trace_depth(const AnalyticScene &scene, const OrthoCamera &cam, int u, int v, const TraceSettings &ts = {}) {
    const Ray ray = cam.ray_at(u, v);
    // Enter the content ball first; nothing lives outside it.
    const double b = ray.origin.dot(ray.direction);
    const double c = ray.origin.squaredNorm() - ts.content_radius * ts.content_radius;
    const double disc = b * b - c;
    if (disc < 0.0) {
        return 0.0;
    }
    const double root = std::sqrt(disc);
    double t = std::max(0.0, -b - root);
    const double t_exit = -b + root;
    for (int step = 0; step < ts.max_steps && t <= t_exit + ts.surface_tolerance; ++step) {
        const double d = scene.sdf(ray.origin + t * ray.direction);
        if (std::abs(d) < ts.surface_tolerance) {
            return t > 0.0 ? t : 0.0;
        }
        t += d;
    }
    return 0.0;
}

inline constexpr double kGtOpacityLogit = 40.0;

/// Exact orthographic RGBD renders: flat albedo, opacity logit +/-40, neutral scale and rotation.
inline ViewSet render_gt_views(const AnalyticScene &scene, const std::vector<OrthoCamera> &cams,
                               const TraceSettings &ts = {}) {
    require(!scene.primitives.empty(), "scene has no primitives");
    ViewSet views;
    views.cameras = cams;
    for (const OrthoCamera &cam : cams) {
        ViewMaps m(cam.height(), cam.width());
        parallel_for(static_cast<std::size_t>(cam.height()), [&](std::size_t row) {
            const int v = static_cast<int>(row);
            for (int u = 0; u < cam.width(); ++u) {
                const double t = trace_depth(scene, cam, u, v, ts);
                m.depth(0, v, u) = t;
                m.opacity_raw(0, v, u) = t > 0.0 ? kGtOpacityLogit : -kGtOpacityLogit;
                if (t > 0.0) {
                    const Vec3 c = scene.color(cam.unproject(u, v, t));
                    for (int ch = 0; ch < 3; ++ch) {
                        m.rgb(ch, v, u) = c[ch];
                    }
                }
            }
        });
        views.maps.push_back(std::move(m));
    }
    return views;
}

inline const std::vector<std::string> &extended_view_names() {
    static const std::vector<std::string> names = {
        "front", "back", "left", "right", "top", "bottom",
        "right-top-front", "right-top-back", "right-bottom-front", "right-bottom-back",
        "left-top-front", "left-top-back", "left-bottom-front", "left-bottom-back"};
    return names;
}

/// Prefix of the 14-view ordering: the four side views, top/bottom, then the
/// eight corner views looking at the origin from (+-1, +-1, +-1).
inline std::vector<OrthoCamera> extended_view_rig(int count, const RigConfig &rig = {}) {
    require(count == 4 || count == 6 || count == 8 || count == 14, "view count must be one of 4, 6, 8, 14");
    std::vector<OrthoCamera> six = make_six_view_rig(rig);
    std::vector<OrthoCamera> cams(six.begin(), six.begin() + std::min(count, 6));
    const int corners[8][3] = {{1, 1, 1}, {1, 1, -1}, {1, -1, 1}, {1, -1, -1},
                               {-1, 1, 1}, {-1, 1, -1}, {-1, -1, 1}, {-1, -1, -1}};
    for (int i = 0; i + 6 < count; ++i) {
        const Vec3 position(corners[i][0], corners[i][1], corners[i][2]);
        cams.push_back(OrthoCamera::looking(ViewId::Custom, -position, Vec3(0, 1, 0), rig.plane_distance,
                                            rig.half_extent, rig.resolution, rig.resolution));
    }
    return cams;
}

/// Near-uniform surface samples: uniform points in a thin shell around the
/// surface (rejection), then Newton projection onto the zero set.
inline std::vector<Vec3> sample_surface(const AnalyticScene &scene, std::size_t n, std::uint64_t seed,
                                        double band = 0.02) {
    require(n >= 1, "sample_surface needs n >= 1");
    Rng rng(seed);
    std::vector<Vec3> out;
    out.reserve(n);
    const double r = std::max(1.0, scene.bounding_radius()) + band;
    while (out.size() < n) {
        Vec3 p(rng.uniform(-r, r), rng.uniform(-r, r), rng.uniform(-r, r));
        if (std::abs(scene.sdf(p)) > band) {
            continue;
        }
        for (int it = 0; it < 50; ++it) {
            const double d = scene.sdf(p);
            if (std::abs(d) < 1e-9) {
                break;
            }
            const Vec3 g = scene.gradient(p);
            const double g2 = g.squaredNorm();
            if (g2 < 1e-12) {
                break;
            }
            p -= d * g / g2;
        }
        if (std::abs(scene.sdf(p)) < 1e-7) {
            out.push_back(p);
        }
    }
    return out;
}

/// Marching-cubes mesh of the exact SDF on a grid over [-1.05, 1.05]^3.
inline TriMesh scene_mesh(const AnalyticScene &scene, int grid = 192) {
    require(grid >= 8, "scene mesh grid too small");
    const double bound = 1.05;
    const double h = 2.0 * bound / (grid - 1);
    ScalarGrid g({grid, grid, grid}, Vec3::Constant(-bound), h);
    parallel_for(static_cast<std::size_t>(grid), [&](std::size_t kk) {
        const int k = static_cast<int>(kk);
        for (int j = 0; j < grid; ++j) {
            for (int i = 0; i < grid; ++i) {
                g.at(i, j, k) = scene.sdf(g.position(i, j, k));
            }
        }
    });
    TriMesh mesh = marching_cubes(g, 0.0);
    mesh.vertex_colors.resize(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        mesh.vertex_colors[i] = scene.color(mesh.vertices[i]);
    }
    return mesh;
}

} // namespace orthofuse
