// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orthofuse/camera.hpp"
#include "orthofuse/gaussians.hpp"
#include "orthofuse/kdtree.hpp"
#include "orthofuse/marching_cubes.hpp"
#include "orthofuse/mesh.hpp"

#include <numbers>
#include <numeric>

namespace orthofuse {

// ---------------------------------------------------------------------------
// Depth-gradient normals and point fusion

struct NormalMap {
    ImageD normals; // 3 x H x W, world space, zero where invalid
    Mask valid;     // 1 where a normal could be computed
};

namespace detail {

// Tangent along one image axis from the masked neighbours of (u, v). Central
// differences where both neighbours exist; one-sided at mask borders. At a depth
// discontinuity (one side jumps by more than `jump`) the smooth side wins.
inline bool depth_tangent(const ImageD &depth, const Mask &mask, const OrthoCamera &cam, int u, int v, int du, int dv,
                          Vec3 &tangent) {
    const int h = depth.height();
    const int w = depth.width();
    const auto usable = [&](int uu, int vv) {
        return uu >= 0 && vv >= 0 && uu < w && vv < h && mask(0, vv, uu) != 0 && depth(0, vv, uu) > 0.0;
    };
    const bool fwd = usable(u + du, v + dv);
    const bool bwd = usable(u - du, v - dv);
    if (!fwd && !bwd) {
        return false;
    }
    const Vec3 here = cam.unproject(u, v, depth(0, v, u));
    Vec3 f = Vec3::Zero();
    Vec3 b = Vec3::Zero();
    if (fwd) {
        f = cam.unproject(u + du, v + dv, depth(0, v + dv, u + du)) - here;
    }
    if (bwd) {
        b = here - cam.unproject(u - du, v - dv, depth(0, v - dv, u - du));
    }
    if (fwd && bwd) {
        const double jump = 4.0 * cam.pixel_pitch();
        const double df = std::abs(depth(0, v + dv, u + du) - depth(0, v, u));
        const double db = std::abs(depth(0, v, u) - depth(0, v - dv, u - du));
        if (df > jump && df > 3.0 * db) {
            tangent = b;
        } else if (db > jump && db > 3.0 * df) {
            tangent = f;
        } else {
            tangent = 0.5 * (f + b);
        }
    } else {
        tangent = fwd ? f : b;
    }
    return true;
}

} // namespace detail

/// Unit normals of the unprojected depth surface, facing the camera.
inline NormalMap normals_from_depth(const ImageD &depth, const OrthoCamera &cam, const Mask &mask) {
    require(depth.channels() == 1 && mask.channels() == 1 && depth.height() == mask.height() &&
                depth.width() == mask.width(),
            "depth and mask must be 1 x H x W of equal size");
    require(depth.height() == cam.height() && depth.width() == cam.width(), "depth size must match the camera");
    for (int v = 0; v < depth.height(); ++v) {
        for (int u = 0; u < depth.width(); ++u) {
            require(!mask(0, v, u) || depth(0, v, u) > 0.0, "masked pixels must have positive depth");
        }
    }
    NormalMap out{ImageD(3, depth.height(), depth.width()), Mask(1, depth.height(), depth.width(), 0)};
    const Vec3 view = cam.view_direction();
    parallel_for(static_cast<std::size_t>(depth.height()), [&](std::size_t row) {
        const int v = static_cast<int>(row);
        for (int u = 0; u < depth.width(); ++u) {
            if (!mask(0, v, u)) {
                continue;
            }
            Vec3 tu, tv;
            if (!detail::depth_tangent(depth, mask, cam, u, v, 1, 0, tu) ||
                !detail::depth_tangent(depth, mask, cam, u, v, 0, 1, tv)) {
                continue;
            }
            Vec3 n = tu.cross(tv);
            const double len = n.norm();
            if (!(len > 0.0)) {
                continue;
            }
            n /= len;
            if (n.dot(view) > 0.0) {
                n = -n;
            }
            for (int c = 0; c < 3; ++c) {
                out.normals(c, v, u) = n[c];
            }
            out.valid(0, v, u) = 1;
        }
    });
    return out;
}

/// Back-projects every meshing-masked pixel with a valid normal, view-major then row-major.
inline OrientedPointCloud fuse_oriented_cloud(const ViewSet &views) {
    const std::vector<Mask> masks = mask_for_meshing(views);
    OrientedPointCloud cloud;
    for (std::size_t i = 0; i < views.size(); ++i) {
        const ViewMaps &m = views.maps[i];
        const OrthoCamera &cam = views.cameras[i];
        const NormalMap nm = normals_from_depth(m.depth, cam, masks[i]);
        for (int v = 0; v < m.height(); ++v) {
            for (int u = 0; u < m.width(); ++u) {
                if (!nm.valid(0, v, u)) {
                    continue;
                }
                cloud.append(cam.unproject(u, v, m.depth(0, v, u)),
                             {nm.normals(0, v, u), nm.normals(1, v, u), nm.normals(2, v, u)},
                             {m.rgb(0, v, u), m.rgb(1, v, u), m.rgb(2, v, u)});
            }
        }
    }
    if (cloud.empty()) {
        throw EmptyResultError("no masked pixel with a valid normal; the oriented point cloud is empty");
    }
    return cloud;
}

// ---------------------------------------------------------------------------
// Screened Poisson reconstruction on a uniform grid

struct PoissonSettings {
    int grid = 128;             // nodes per axis
    double screening = 4.0;     // weight of the point interpolation term
    double bounds = 1.25;       // grid covers [-bounds, bounds]^3
    double tolerance = 1e-6;    // relative residual
    int max_iterations = 2000;
    int density_neighbors = 8;  // k for per-point area estimates
};

struct PoissonDiagnostics {
    int iterations = 0;
    double relative_residual = 0.0;
    double iso_level = 0.0;
};

namespace detail {

struct Trilinear {
    std::array<int, 3> base;
    std::array<double, 3> frac;
};

inline Trilinear trilinear_cell(const Vec3 &p, const Vec3 &origin, double h, const std::array<int, 3> &dims) {
    Trilinear t{};
    for (int a = 0; a < 3; ++a) {
        const double x = (p[a] - origin[a]) / h;
        int i = static_cast<int>(std::floor(x));
        i = std::clamp(i, 0, dims[a] - 2);
        t.base[a] = i;
        t.frac[a] = std::clamp(x - i, 0.0, 1.0);
    }
    return t;
}

template <typename Fn>
void for_trilinear(const Trilinear &t, Fn &&fn) {
    for (int c = 0; c < 8; ++c) {
        const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
        const double w = (dx ? t.frac[0] : 1 - t.frac[0]) * (dy ? t.frac[1] : 1 - t.frac[1]) *
                         (dz ? t.frac[2] : 1 - t.frac[2]);
        fn(t.base[0] + dx, t.base[1] + dy, t.base[2] + dz, w);
    }
}

/// Per-point surface area from the distance to the k-th nearest neighbour.
inline std::vector<double> point_areas(const std::vector<Vec3> &pts, int k) {
    const KdTree tree(pts);
    std::vector<double> area(pts.size());
    parallel_for(pts.size(), [&](std::size_t i) {
        const auto nn = tree.k_nearest(pts[i], static_cast<std::size_t>(k) + 1);
        const double r2 = nn.back().distance_sq;
        area[i] = std::numbers::pi * r2 / std::max<std::size_t>(1, nn.size() - 1);
    });
    return area;
}

/// Node-lattice operator (-Laplacian_h + diag) with zero Dirichlet boundary.
class ScreenedLaplacian {
public:
    ScreenedLaplacian(int n, double h, std::vector<double> diag) : n_(n), inv_h2_(1.0 / (h * h)), diag_(std::move(diag)) {}

    int n() const { return n_; }
    std::size_t idx(int i, int j, int k) const { return (static_cast<std::size_t>(k) * n_ + j) * n_ + i; }
    bool interior(int i, int j, int k) const {
        return i > 0 && j > 0 && k > 0 && i < n_ - 1 && j < n_ - 1 && k < n_ - 1;
    }
    double diagonal(std::size_t id) const { return 6.0 * inv_h2_ + diag_[id]; }

    void apply(const std::vector<double> &x, std::vector<double> &y) const {
        const std::size_t sx = 1, sy = static_cast<std::size_t>(n_), sz = sy * n_;
        parallel_for(static_cast<std::size_t>(n_), [&](std::size_t kk) {
            const int k = static_cast<int>(kk);
            for (int j = 0; j < n_; ++j) {
                for (int i = 0; i < n_; ++i) {
                    const std::size_t id = idx(i, j, k);
                    if (!interior(i, j, k)) {
                        y[id] = 0.0;
                        continue;
                    }
                    const double nb = x[id - sx] + x[id + sx] + x[id - sy] + x[id + sy] + x[id - sz] + x[id + sz];
                    y[id] = (6.0 * x[id] - nb) * inv_h2_ + diag_[id] * x[id];
                }
            }
        });
    }

private:
    int n_;
    double inv_h2_;
    std::vector<double> diag_;
};

/// Dot product summed per z-slab, then slabs in order: thread-count independent.
inline double slab_dot(const std::vector<double> &a, const std::vector<double> &b, int n) {
    const std::size_t slab = static_cast<std::size_t>(n) * n;
    std::vector<double> part(static_cast<std::size_t>(n), 0.0);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t k) {
        double s = 0.0;
        for (std::size_t i = k * slab; i < (k + 1) * slab; ++i) {
            s += a[i] * b[i];
        }
        part[k] = s;
    });
    return std::accumulate(part.begin(), part.end(), 0.0);
}

/// Jacobi-preconditioned conjugate gradients on interior nodes.
inline PoissonDiagnostics conjugate_gradient(const ScreenedLaplacian &A, const std::vector<double> &b,
                                             std::vector<double> &x, double tol, int max_iter) {
    const int n = A.n();
    const std::size_t count = b.size();
    std::vector<double> r(count), z(count), p(count), q(count), inv_diag(count, 0.0);
    for (int k = 0; k < n; ++k) {
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                if (A.interior(i, j, k)) {
                    inv_diag[A.idx(i, j, k)] = 1.0 / A.diagonal(A.idx(i, j, k));
                }
            }
        }
    }
    A.apply(x, q);
    for (std::size_t i = 0; i < count; ++i) {
        r[i] = inv_diag[i] != 0.0 ? b[i] - q[i] : 0.0;
        z[i] = inv_diag[i] * r[i];
    }
    p = z;
    const double b_norm = std::sqrt(slab_dot(b, b, n));
    PoissonDiagnostics diag;
    if (b_norm == 0.0) {
        return diag;
    }
    double rz = slab_dot(r, z, n);
    double res = std::sqrt(slab_dot(r, r, n)) / b_norm;
    int it = 0;
    while (res > tol && it < max_iter) {
        A.apply(p, q);
        const double alpha = rz / slab_dot(p, q, n);
        parallel_for(count, [&](std::size_t i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
            z[i] = inv_diag[i] * r[i];
        });
        const double rz_next = slab_dot(r, z, n);
        const double beta = rz_next / rz;
        rz = rz_next;
        parallel_for(count, [&](std::size_t i) { p[i] = z[i] + beta * p[i]; });
        res = std::sqrt(slab_dot(r, r, n)) / b_norm;
        ++it;
    }
    diag.iterations = it;
    diag.relative_residual = res;
    if (res > tol) {
        throw ConvergenceError("conjugate gradients did not reach tolerance (relative residual " +
                                   std::to_string(res) + " after " + std::to_string(it) + " iterations)",
                               res, it);
    }
    return diag;
}

} // namespace detail

/// Indicator field of a screened Poisson solve: about -1/2 inside, +1/2 outside.
struct IndicatorField {
    ScalarGrid grid;
    PoissonDiagnostics diagnostics;
};

inline IndicatorField solve_indicator(const OrientedPointCloud &cloud, const PoissonSettings &s = {}) {
    require(cloud.size() >= 100, "screened Poisson reconstruction needs at least 100 points");
    require(s.grid >= 32 && s.grid <= 256, "Poisson grid resolution must lie in [32, 256]");
    require(s.screening >= 0.0, "screening weight must be non-negative");
    const int n = s.grid;
    const double h = 2.0 * s.bounds / (n - 1);
    const Vec3 origin = Vec3::Constant(-s.bounds);
    const std::array<int, 3> dims{n, n, n};
    const std::size_t count = static_cast<std::size_t>(n) * n * n;
    const auto idx = [n](int i, int j, int k) { return (static_cast<std::size_t>(k) * n + j) * n + i; };
    const double inv_h3 = 1.0 / (h * h * h);

    const std::vector<double> area = detail::point_areas(cloud.positions, s.density_neighbors);

    // Staggered normal field: component a lives at node + h/2 along axis a.
    std::array<std::vector<double>, 3> field;
    for (auto &f : field) {
        f.assign(count, 0.0);
    }
    std::vector<double> weight(count, 0.0);
    for (std::size_t p = 0; p < cloud.size(); ++p) {
        const Vec3 &pos = cloud.positions[p];
        const double a = area[p] * inv_h3;
        for (int axis = 0; axis < 3; ++axis) {
            Vec3 shifted = origin;
            shifted[axis] += 0.5 * h;
            const double value = a * cloud.normals[p][axis];
            detail::for_trilinear(detail::trilinear_cell(pos, shifted, h, dims),
                                  [&](int i, int j, int k, double w) { field[axis][idx(i, j, k)] += w * value; });
        }
        detail::for_trilinear(detail::trilinear_cell(pos, origin, h, dims),
                              [&](int i, int j, int k, double w) { weight[idx(i, j, k)] += w * a; });
    }

    // Unknown x = chi - 1/2 so the outside boundary value 1/2 becomes homogeneous.
    std::vector<double> rhs(count, 0.0);
    std::vector<double> diag(count, 0.0);
    for (int k = 1; k < n - 1; ++k) {
        for (int j = 1; j < n - 1; ++j) {
            for (int i = 1; i < n - 1; ++i) {
                const std::size_t id = idx(i, j, k);
                const double div = (field[0][id] - field[0][idx(i - 1, j, k)] + field[1][id] - field[1][idx(i, j - 1, k)] +
                                    field[2][id] - field[2][idx(i, j, k - 1)]) /
                                   h;
                diag[id] = s.screening * weight[id];
                rhs[id] = -div - 0.5 * diag[id];
            }
        }
    }
    const detail::ScreenedLaplacian A(n, h, std::move(diag));
    std::vector<double> x(count, 0.0);
    IndicatorField out;
    out.diagnostics = detail::conjugate_gradient(A, rhs, x, s.tolerance, s.max_iterations);

    out.grid = ScalarGrid(dims, origin, h);
    for (std::size_t i = 0; i < count; ++i) {
        out.grid.values[i] = x[i] + 0.5;
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t p = 0; p < cloud.size(); ++p) {
        double chi = 0.0;
        detail::for_trilinear(detail::trilinear_cell(cloud.positions[p], origin, h, dims),
                              [&](int i, int j, int k, double w) { chi += w * out.grid.at(i, j, k); });
        num += area[p] * chi;
        den += area[p];
    }
    out.diagnostics.iso_level = num / den;
    return out;
}

inline TriMesh poisson_reconstruct(const OrientedPointCloud &cloud, const PoissonSettings &s = {},
                                   PoissonDiagnostics *diagnostics = nullptr) {
    const IndicatorField field = solve_indicator(cloud, s);
    if (diagnostics) {
        *diagnostics = field.diagnostics;
    }
    TriMesh mesh = marching_cubes(field.grid, field.diagnostics.iso_level);
    if (mesh.empty()) {
        throw EmptyResultError("iso-surface of the indicator field is empty");
    }
    return mesh;
}

// ---------------------------------------------------------------------------
// Mesh post-processing

inline std::vector<std::vector<std::uint32_t>> vertex_neighbors(const TriMesh &mesh) {
    std::vector<std::vector<std::uint32_t>> nb(mesh.vertices.size());
    for (const Face &f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            nb[f[k]].push_back(f[(k + 1) % 3]);
            nb[f[k]].push_back(f[(k + 2) % 3]);
        }
    }
    for (auto &list : nb) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    return nb;
}

/// Uniform umbrella smoothing: v += lambda * (mean(neighbours) - v), Jacobi style.
inline TriMesh laplacian_smooth(const TriMesh &mesh, int iterations, double lambda) {
    require(iterations >= 0, "smoothing iterations must be non-negative");
    require(lambda > 0.0 && lambda < 1.0, "smoothing step must lie in (0, 1)");
    TriMesh out = mesh;
    if (iterations == 0) {
        return out;
    }
    const auto nb = vertex_neighbors(mesh);
    std::vector<Vec3> next(out.vertices.size());
    for (int it = 0; it < iterations; ++it) {
        parallel_for(out.vertices.size(), [&](std::size_t i) {
            if (nb[i].empty()) {
                next[i] = out.vertices[i];
                return;
            }
            Vec3 mean = Vec3::Zero();
            for (std::uint32_t j : nb[i]) {
                mean += out.vertices[j];
            }
            mean /= static_cast<double>(nb[i].size());
            next[i] = out.vertices[i] + lambda * (mean - out.vertices[i]);
        });
        out.vertices.swap(next);
    }
    return out;
}

/// Vertex colours by inverse-distance weighting of the k nearest cloud points.
inline TriMesh colorize_vertices(const TriMesh &mesh, const OrientedPointCloud &cloud, int k = 8) {
    require(!cloud.empty(), "colorize_vertices needs a non-empty point cloud");
    require(k >= 1, "colorize_vertices needs k >= 1");
    TriMesh out = mesh;
    const KdTree tree(cloud.positions);
    out.vertex_colors.assign(out.vertices.size(), Vec3::Zero());
    parallel_for(out.vertices.size(), [&](std::size_t i) {
        const auto nn = tree.k_nearest(out.vertices[i], static_cast<std::size_t>(k));
        if (nn.front().distance_sq == 0.0) {
            out.vertex_colors[i] = cloud.colors[nn.front().index];
            return;
        }
        Vec3 acc = Vec3::Zero();
        double wsum = 0.0;
        for (const auto &n : nn) {
            const double w = 1.0 / std::sqrt(n.distance_sq);
            acc += w * cloud.colors[n.index];
            wsum += w;
        }
        out.vertex_colors[i] = acc / wsum;
    });
    return out;
}

/// Face-connected components (faces sharing a vertex); labels in first-seen order.
inline std::vector<int> face_components(const TriMesh &mesh, int *component_count = nullptr) {
    std::vector<std::uint32_t> parent(mesh.vertices.size());
    std::iota(parent.begin(), parent.end(), 0u);
    const auto find = [&](std::uint32_t a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    };
    for (const Face &f : mesh.faces) {
        for (int k = 1; k < 3; ++k) {
            const std::uint32_t a = find(f[0]);
            const std::uint32_t b = find(f[k]);
            if (a != b) {
                parent[std::max(a, b)] = std::min(a, b);
            }
        }
    }
    std::vector<int> root_label(mesh.vertices.size(), -1);
    std::vector<int> labels(mesh.faces.size());
    int next = 0;
    for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
        const std::uint32_t r = find(mesh.faces[i][0]);
        if (root_label[r] < 0) {
            root_label[r] = next++;
        }
        labels[i] = root_label[r];
    }
    if (component_count) {
        *component_count = next;
    }
    return labels;
}

/// Drops components with fewer than min_fraction * F faces; the largest always survives.
/// Unreferenced vertices are removed; surviving vertices keep their relative order.
inline TriMesh remove_small_components(const TriMesh &mesh, double min_fraction) {
    require(min_fraction >= 0.0, "min_fraction must be non-negative");
    if (mesh.faces.empty()) {
        return mesh;
    }
    int count = 0;
    const std::vector<int> labels = face_components(mesh, &count);
    std::vector<std::size_t> sizes(count, 0);
    for (int l : labels) {
        ++sizes[l];
    }
    const int largest = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    const double cutoff = min_fraction * static_cast<double>(mesh.faces.size());
    std::vector<bool> keep_component(count);
    for (int c = 0; c < count; ++c) {
        keep_component[c] = c == largest || static_cast<double>(sizes[c]) >= cutoff;
    }
    std::vector<bool> used(mesh.vertices.size(), false);
    for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
        if (keep_component[labels[i]]) {
            for (std::uint32_t v : mesh.faces[i]) {
                used[v] = true;
            }
        }
    }
    TriMesh out;
    std::vector<std::uint32_t> remap(mesh.vertices.size(), 0);
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
        if (used[v]) {
            remap[v] = static_cast<std::uint32_t>(out.vertices.size());
            out.vertices.push_back(mesh.vertices[v]);
            if (!mesh.vertex_colors.empty()) {
                out.vertex_colors.push_back(mesh.vertex_colors[v]);
            }
        }
    }
    for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
        if (keep_component[labels[i]]) {
            const Face &f = mesh.faces[i];
            out.faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
        }
    }
    return out;
}

struct MeshingSettings {
    PoissonSettings poisson;
    int smooth_iterations = 10;
    double smooth_lambda = 0.5;
    double min_component_fraction = 0.02;
    int color_neighbors = 8;
};

/// Views -> oriented cloud -> screened Poisson -> component filter -> smoothing -> colours.
inline TriMesh extract_mesh(const ViewSet &views, const MeshingSettings &s = {}, PoissonDiagnostics *diag = nullptr) {
    const OrientedPointCloud cloud = fuse_oriented_cloud(views);
    TriMesh mesh = poisson_reconstruct(cloud, s.poisson, diag);
    mesh = remove_small_components(mesh, s.min_component_fraction);
    if (s.smooth_iterations > 0) {
        mesh = laplacian_smooth(mesh, s.smooth_iterations, s.smooth_lambda);
    }
    return colorize_vertices(mesh, cloud, s.color_neighbors);
}

} // namespace orthofuse
