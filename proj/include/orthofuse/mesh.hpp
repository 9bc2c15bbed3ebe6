// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orthofuse/common.hpp"

#include <array>
#include <map>

namespace orthofuse {

struct OrientedPointCloud {
    std::vector<Vec3> positions;
    std::vector<Vec3> normals; // unit length
    std::vector<Vec3> colors;  // [0, 1]

    std::size_t size() const noexcept { return positions.size(); }
    bool empty() const noexcept { return positions.empty(); }

    void append(const Vec3 &p, const Vec3 &n, const Vec3 &c) {
        positions.push_back(p);
        normals.push_back(n);
        colors.push_back(c);
    }
};

using Face = std::array<std::uint32_t, 3>;

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::vector<Vec3> vertex_colors; // empty or one per vertex

    bool empty() const noexcept { return faces.empty(); }

    void validate() const {
        for (const Face &f : faces) {
            for (std::uint32_t idx : f) {
                require(idx < vertices.size(), "mesh face index out of range");
            }
            require(f[0] != f[1] && f[1] != f[2] && f[0] != f[2], "mesh contains a degenerate face");
        }
        require(vertex_colors.empty() || vertex_colors.size() == vertices.size(),
                "vertex color count must match vertex count");
    }
};

inline Vec3 face_normal_unnormalized(const TriMesh &m, const Face &f) {
    return (m.vertices[f[1]] - m.vertices[f[0]]).cross(m.vertices[f[2]] - m.vertices[f[0]]);
}

inline double face_area(const TriMesh &m, const Face &f) { return 0.5 * face_normal_unnormalized(m, f).norm(); }

inline double surface_area(const TriMesh &m) {
    double a = 0.0;
    for (const Face &f : m.faces) {
        a += face_area(m, f);
    }
    return a;
}

/// Divergence-theorem volume; positive for closed meshes with outward faces.
inline double signed_volume(const TriMesh &m) {
    double v = 0.0;
    for (const Face &f : m.faces) {
        v += m.vertices[f[0]].dot(m.vertices[f[1]].cross(m.vertices[f[2]])) / 6.0;
    }
    return v;
}

/// True when every undirected edge is used by exactly two faces.
inline bool is_watertight(const TriMesh &m) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> uses;
    for (const Face &f : m.faces) {
        for (int k = 0; k < 3; ++k) {
            const std::uint32_t a = f[k];
            const std::uint32_t b = f[(k + 1) % 3];
            ++uses[{std::min(a, b), std::max(a, b)}];
        }
    }
    if (uses.empty()) {
        return false;
    }
    for (const auto &[edge, count] : uses) {
        if (count != 2) {
            return false;
        }
    }
    return true;
}

inline void append_mesh(TriMesh &dst, const TriMesh &src) {
    const auto base = static_cast<std::uint32_t>(dst.vertices.size());
    dst.vertices.insert(dst.vertices.end(), src.vertices.begin(), src.vertices.end());
    if (!src.vertex_colors.empty() || !dst.vertex_colors.empty()) {
        dst.vertex_colors.resize(base, Vec3::Zero());
        if (src.vertex_colors.empty()) {
            dst.vertex_colors.resize(dst.vertices.size(), Vec3::Zero());
        } else {
            dst.vertex_colors.insert(dst.vertex_colors.end(), src.vertex_colors.begin(), src.vertex_colors.end());
        }
    }
    for (const Face &f : src.faces) {
        dst.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
    }
}

inline void transform_mesh(TriMesh &m, const Mat3 &linear, const Vec3 &offset) {
    for (Vec3 &v : m.vertices) {
        v = linear * v + offset;
    }
}

/// Subdivided icosahedron projected to a sphere of the given radius.
inline TriMesh make_icosphere(int subdivisions, double radius = 1.0, const Vec3 &center = Vec3::Zero()) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    TriMesh m;
    m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                  {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    m.faces = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
               {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
               {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
    for (Vec3 &v : m.vertices) {
        v.normalize();
    }
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
        auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
            const auto key = std::make_pair(std::min(a, b), std::max(a, b));
            auto it = mid.find(key);
            if (it != mid.end()) {
                return it->second;
            }
            m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
            const auto idx = static_cast<std::uint32_t>(m.vertices.size() - 1);
            mid.emplace(key, idx);
            return idx;
        };
        std::vector<Face> next;
        next.reserve(m.faces.size() * 4);
        for (const Face &f : m.faces) {
            const std::uint32_t a = midpoint(f[0], f[1]);
            const std::uint32_t b = midpoint(f[1], f[2]);
            const std::uint32_t c = midpoint(f[2], f[0]);
            next.push_back({f[0], a, c});
            next.push_back({f[1], b, a});
            next.push_back({f[2], c, b});
            next.push_back({a, b, c});
        }
        m.faces = std::move(next);
    }
    for (Vec3 &v : m.vertices) {
        v = center + radius * v;
    }
    return m;
}

/// Axis-aligned box as 12 outward-facing triangles.
inline TriMesh make_box(const Vec3 &lo, const Vec3 &hi) {
    TriMesh m;
    for (int c = 0; c < 8; ++c) {
        m.vertices.emplace_back((c & 1) ? hi.x() : lo.x(), (c & 2) ? hi.y() : lo.y(), (c & 4) ? hi.z() : lo.z());
    }
    m.faces = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
               {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
    return m;
}

/// Regular grid of n x n quads covering the square [-h, h]^2 in the plane z = z0.
inline TriMesh make_square(double half_size, double z0, int n = 1) {
    TriMesh m;
    for (int j = 0; j <= n; ++j) {
        for (int i = 0; i <= n; ++i) {
            m.vertices.emplace_back(-half_size + 2.0 * half_size * i / n, -half_size + 2.0 * half_size * j / n, z0);
        }
    }
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const auto a = static_cast<std::uint32_t>(j * (n + 1) + i);
            const std::uint32_t b = a + 1;
            const std::uint32_t c = a + static_cast<std::uint32_t>(n + 1);
            const std::uint32_t d = c + 1;
            m.faces.push_back({a, b, d});
            m.faces.push_back({a, d, c});
        }
    }
    return m;
}

} // namespace orthofuse
