// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orthofuse/mesh.hpp"

#include <limits>
#include <unordered_map>

namespace orthofuse {

/// Scalar samples on the nodes of a regular grid, x fastest.
struct ScalarGrid {
    std::array<int, 3> dims{0, 0, 0};
    Vec3 origin = Vec3::Zero();
    double spacing = 1.0;
    std::vector<double> values;

    ScalarGrid() = default;
    ScalarGrid(std::array<int, 3> n, const Vec3 &o, double h, double fill = 0.0)
        : dims(n), origin(o), spacing(h), values(static_cast<std::size_t>(n[0]) * n[1] * n[2], fill) {}

    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
    }
    double &at(int i, int j, int k) { return values[index(i, j, k)]; }
    double at(int i, int j, int k) const { return values[index(i, j, k)]; }
    Vec3 position(int i, int j, int k) const { return origin + spacing * Vec3(i, j, k); }
};

namespace detail {

// Marching-cubes case table built from first principles: corner c sits at
// (c & 1, c >> 1 & 1, c >> 2 & 1); an edge joins corners differing in one bit.
// On each cube face the iso-contour is traced as segments oriented with the
// inside corners on the left (seen from outside the cube); ambiguous faces
// separate the two inside corners. Because that rule depends only on the face's
// own corner signs, neighbouring cubes agree and the surface closes up. Segments
// chain into loops; triangles close a 3-loop directly and larger loops as a star
// around the loop centroid, so every mesh edge is used by exactly two faces.
// Triangle entries >= 12 name the centroid of loop (entry - 12).
struct McTable {
    std::array<std::array<int, 2>, 12> edge_corners{};
    std::array<std::vector<std::array<int, 3>>, 256> triangles;
    std::array<int, 256> loops{};
    std::array<std::vector<std::vector<int>>, 256> loop_edges;

    McTable() {
        int e = 0;
        int edge_of[8][8];
        for (auto &row : edge_of) {
            std::fill(std::begin(row), std::end(row), -1);
        }
        for (int bit = 0; bit < 3; ++bit) {
            for (int c = 0; c < 8; ++c) {
                if (!(c & (1 << bit))) {
                    edge_corners[e] = {c, c | (1 << bit)};
                    edge_of[c][c | (1 << bit)] = edge_of[c | (1 << bit)][c] = e;
                    ++e;
                }
            }
        }
        const auto corner_pos = [](int c) { return Vec3(c & 1, (c >> 1) & 1, (c >> 2) & 1); };

        // Face corner cycles, counter-clockwise about the outward normal.
        std::vector<std::array<int, 4>> faces;
        for (int axis = 0; axis < 3; ++axis) {
            for (int side = 0; side < 2; ++side) {
                std::vector<int> corners;
                for (int c = 0; c < 8; ++c) {
                    if (((c >> axis) & 1) == side) {
                        corners.push_back(c);
                    }
                }
                Vec3 n = Vec3::Zero();
                n[axis] = side ? 1.0 : -1.0;
                const Vec3 center = Vec3::Constant(0.5) + 0.5 * n;
                const Vec3 e1 = Vec3::Unit((axis + 1) % 3);
                const Vec3 e2 = n.cross(e1);
                std::sort(corners.begin(), corners.end(), [&](int a, int b) {
                    const Vec3 pa = corner_pos(a) - center;
                    const Vec3 pb = corner_pos(b) - center;
                    return std::atan2(pa.dot(e2), pa.dot(e1)) < std::atan2(pb.dot(e2), pb.dot(e1));
                });
                faces.push_back({corners[0], corners[1], corners[2], corners[3]});
            }
        }

        for (int cfg = 0; cfg < 256; ++cfg) {
            const auto inside = [cfg](int c) { return ((cfg >> c) & 1) != 0; };
            std::array<int, 12> next;
            next.fill(-1);
            for (const auto &cyc : faces) {
                for (int k = 0; k < 4; ++k) {
                    const int a = cyc[k];
                    const int b = cyc[(k + 1) % 4];
                    if (!(inside(a) && !inside(b))) {
                        continue;
                    }
                    int j = k;
                    while (inside(cyc[j])) {
                        j = (j + 3) % 4;
                    }
                    next[edge_of[a][b]] = edge_of[cyc[j]][cyc[(j + 1) % 4]];
                }
            }
            std::array<bool, 12> seen{};
            for (int start = 0; start < 12; ++start) {
                if (next[start] < 0 || seen[start]) {
                    continue;
                }
                std::vector<int> loop;
                for (int cur = start; !seen[cur]; cur = next[cur]) {
                    seen[cur] = true;
                    loop.push_back(cur);
                }
                const int loop_id = loops[cfg]++;
                loop_edges[cfg].push_back(loop);
                if (loop.size() == 3) {
                    triangles[cfg].push_back({loop[0], loop[1], loop[2]});
                    continue;
                }
                for (std::size_t i = 0; i < loop.size(); ++i) {
                    triangles[cfg].push_back({12 + loop_id, loop[i], loop[(i + 1) % loop.size()]});
                }
            }
        }

        // Orient so triangle normals point from inside (below iso) to outside.
        const auto mid = [&](int edge) -> Vec3 {
            return 0.5 * (corner_pos(edge_corners[edge][0]) + corner_pos(edge_corners[edge][1]));
        };
        const auto &probe = triangles[1].front();
        const Vec3 n = (mid(probe[1]) - mid(probe[0])).cross(mid(probe[2]) - mid(probe[0]));
        if (n.dot(Vec3(1, 1, 1)) < 0) {
            for (auto &tris : triangles) {
                for (auto &t : tris) {
                    std::swap(t[1], t[2]);
                }
            }
        }
    }
};

inline const McTable &mc_table() {
    static const McTable table;
    return table;
}

} // namespace detail

/// Iso-surface {f = iso} of a node-sampled grid. Nodes with f < iso are inside;
/// faces are oriented outward (toward increasing f). Vertices are placed by
/// linear interpolation along cube edges and shared between neighbouring cubes.
inline TriMesh marching_cubes(const ScalarGrid &grid, double iso) {
    const auto &table = detail::mc_table();
    TriMesh mesh;
    std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;
    const auto [nx, ny, nz] = grid.dims;
    require(nx >= 2 && ny >= 2 && nz >= 2, "marching cubes needs at least 2 nodes per axis");

    const auto vertex_for = [&](int i, int j, int k, int edge) {
        const auto &ec = table.edge_corners[edge];
        const int c0 = ec[0];
        const int c1 = ec[1];
        const int axis = (c0 ^ c1) == 1 ? 0 : ((c0 ^ c1) == 2 ? 1 : 2);
        const int i0 = i + (c0 & 1), j0 = j + ((c0 >> 1) & 1), k0 = k + ((c0 >> 2) & 1);
        const std::uint64_t key = static_cast<std::uint64_t>(grid.index(i0, j0, k0)) * 3 + axis;
        const auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) {
            return it->second;
        }
        const int i1 = i + (c1 & 1), j1 = j + ((c1 >> 1) & 1), k1 = k + ((c1 >> 2) & 1);
        const double f0 = grid.at(i0, j0, k0);
        const double f1 = grid.at(i1, j1, k1);
        const double t = std::clamp((iso - f0) / (f1 - f0), 0.0, 1.0);
        mesh.vertices.push_back((1.0 - t) * grid.position(i0, j0, k0) + t * grid.position(i1, j1, k1));
        const auto idx = static_cast<std::uint32_t>(mesh.vertices.size() - 1);
        edge_vertex.emplace(key, idx);
        return idx;
    };

    for (int k = 0; k + 1 < nz; ++k) {
        for (int j = 0; j + 1 < ny; ++j) {
            for (int i = 0; i + 1 < nx; ++i) {
                int cfg = 0;
                for (int c = 0; c < 8; ++c) {
                    if (grid.at(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)) < iso) {
                        cfg |= 1 << c;
                    }
                }
                if (cfg == 0 || cfg == 255) {
                    continue;
                }
                std::array<std::uint32_t, 4> centroid{};
                for (int l = 0; l < table.loops[cfg]; ++l) {
                    centroid[l] = std::numeric_limits<std::uint32_t>::max();
                }
                const auto resolve = [&](int entry) -> std::uint32_t {
                    if (entry < 12) {
                        return vertex_for(i, j, k, entry);
                    }
                    std::uint32_t &c = centroid[entry - 12];
                    if (c == std::numeric_limits<std::uint32_t>::max()) {
                        Vec3 sum = Vec3::Zero();
                        int count = 0;
                        for (int e : table.loop_edges[cfg][entry - 12]) {
                            sum += mesh.vertices[vertex_for(i, j, k, e)];
                            ++count;
                        }
                        mesh.vertices.push_back(sum / count);
                        c = static_cast<std::uint32_t>(mesh.vertices.size() - 1);
                    }
                    return c;
                };
                for (const auto &tri : table.triangles[cfg]) {
                    const std::uint32_t a = resolve(tri[0]);
                    const std::uint32_t b = resolve(tri[1]);
                    const std::uint32_t c = resolve(tri[2]);
                    mesh.faces.push_back({a, b, c});
                }
            }
        }
    }
    return mesh;
}

/// Number of triangles the table emits for a configuration (for tests).
inline std::size_t marching_cubes_case_size(int cfg) { return detail::mc_table().triangles.at(cfg).size(); }

} // namespace orthofuse
