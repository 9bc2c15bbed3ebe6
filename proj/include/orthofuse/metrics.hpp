// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orthofuse/camera.hpp"
#include "orthofuse/image.hpp"
#include "orthofuse/kdtree.hpp"
#include "orthofuse/mesh.hpp"
#include "orthofuse/random.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <iostream>
#include <numbers>

namespace orthofuse {

// ---------------------------------------------------------------------------
// Surface sampling and Chamfer distance

/// Area-weighted uniform samples on the mesh surface.
inline std::vector<Vec3> sample_mesh_surface(const TriMesh &mesh, std::size_t n, std::uint64_t seed) {
    if (mesh.empty()) {
        throw EmptyResultError("cannot sample an empty mesh");
    }
    std::vector<double> cdf(mesh.faces.size());
    double acc = 0.0;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        acc += face_area(mesh, mesh.faces[f]);
        cdf[f] = acc;
    }
    if (!(acc > 0.0)) {
        throw EmptyResultError("mesh has zero surface area");
    }
    Rng rng(seed);
    std::vector<Vec3> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double target = rng.uniform() * acc;
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
        const std::size_t f = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
        const double r1 = std::sqrt(rng.uniform());
        const double r2 = rng.uniform();
        const Face &face = mesh.faces[f];
        out.push_back((1.0 - r1) * mesh.vertices[face[0]] + r1 * (1.0 - r2) * mesh.vertices[face[1]] +
                      r1 * r2 * mesh.vertices[face[2]]);
    }
    return out;
}

/// Mean distance from each point of `from` to its nearest neighbour in `tree`.
inline double mean_nearest_distance(const std::vector<Vec3> &from, const KdTree &tree,
                                    const std::vector<Vec3> &to) {
    std::vector<double> d(from.size());
    parallel_for(from.size(), [&](std::size_t i) {
        const auto nn = tree.nearest(from[i]);
        d[i] = (to[nn.index] - from[i]).norm();
    });
    double sum = 0.0;
    for (double x : d) {
        sum += x;
    }
    return sum / static_cast<double>(std::max<std::size_t>(1, from.size()));
}

/// Symmetric Chamfer distance between two point sets (unsquared distances).
inline double chamfer_points(const std::vector<Vec3> &a, const std::vector<Vec3> &b) {
    require(!a.empty() && !b.empty(), "chamfer distance needs non-empty point sets");
    const KdTree ta(a);
    const KdTree tb(b);
    return 0.5 * (mean_nearest_distance(a, tb, b) + mean_nearest_distance(b, ta, a));
}

inline constexpr std::size_t kChamferSamples = 16384;

/// 0.5 * (mean_a min_b |a - b| + mean_b min_a |a - b|) over seeded surface samples.
inline double chamfer_distance(const TriMesh &a, const TriMesh &b, std::size_t samples = kChamferSamples,
                               std::uint64_t seed = 0) {
    require(samples >= 1, "chamfer distance needs at least one sample");
    return chamfer_points(sample_mesh_surface(a, samples, seed), sample_mesh_surface(b, samples, seed));
}

// ---------------------------------------------------------------------------
// Volume IoU by ray-parity voxelization

struct VoxelGrid {
    int n = 0;
    Vec3 origin = Vec3::Zero(); // lower corner
    double h = 1.0;             // voxel edge
};

/// Occupancy of voxel centers: per axis, parity of ray crossings; majority of the three axes.
inline std::vector<std::uint8_t> voxelize(const TriMesh &mesh, const VoxelGrid &grid) {
    const int n = grid.n;
    const std::size_t total = static_cast<std::size_t>(n) * n * n;
    std::vector<std::uint8_t> votes(total, 0);
    // Ray offsets keep lines off mesh edges and vertices that sit on the lattice.
    const double jitter_a = 1.3e-7 * grid.h;
    const double jitter_b = 2.9e-7 * grid.h;
    for (int axis = 0; axis < 3; ++axis) {
        const int a1 = (axis + 1) % 3;
        const int a2 = (axis + 2) % 3;
        std::vector<std::vector<double>> hits(static_cast<std::size_t>(n) * n);
        for (const Face &f : mesh.faces) {
            const Vec3 &p0 = mesh.vertices[f[0]];
            const Vec3 &p1 = mesh.vertices[f[1]];
            const Vec3 &p2 = mesh.vertices[f[2]];
            const double lo1 = std::min({p0[a1], p1[a1], p2[a1]});
            const double hi1 = std::max({p0[a1], p1[a1], p2[a1]});
            const double lo2 = std::min({p0[a2], p1[a2], p2[a2]});
            const double hi2 = std::max({p0[a2], p1[a2], p2[a2]});
            const auto line_range = [&](double lo, double hi, int ax, double jitter) {
                const double o = grid.origin[ax] + 0.5 * grid.h + jitter;
                const int i0 = std::max(0, static_cast<int>(std::ceil((lo - o) / grid.h)));
                const int i1 = std::min(n - 1, static_cast<int>(std::floor((hi - o) / grid.h)));
                return std::pair<int, int>{i0, i1};
            };
            const auto [i0, i1] = line_range(lo1, hi1, a1, jitter_a);
            const auto [j0, j1] = line_range(lo2, hi2, a2, jitter_b);
            const double d = (p1[a1] - p0[a1]) * (p2[a2] - p0[a2]) - (p2[a1] - p0[a1]) * (p1[a2] - p0[a2]);
            if (d == 0.0) {
                continue;
            }
            for (int i = i0; i <= i1; ++i) {
                const double x = grid.origin[a1] + (i + 0.5) * grid.h + jitter_a;
                for (int j = j0; j <= j1; ++j) {
                    const double y = grid.origin[a2] + (j + 0.5) * grid.h + jitter_b;
                    const double b1 = ((x - p0[a1]) * (p2[a2] - p0[a2]) - (p2[a1] - p0[a1]) * (y - p0[a2])) / d;
                    const double b2 = ((p1[a1] - p0[a1]) * (y - p0[a2]) - (x - p0[a1]) * (p1[a2] - p0[a2])) / d;
                    if (b1 < 0.0 || b2 < 0.0 || b1 + b2 > 1.0) {
                        continue;
                    }
                    hits[static_cast<std::size_t>(j) * n + i].push_back(p0[axis] + b1 * (p1[axis] - p0[axis]) +
                                                                       b2 * (p2[axis] - p0[axis]));
                }
            }
        }
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                auto &line = hits[static_cast<std::size_t>(j) * n + i];
                std::sort(line.begin(), line.end());
                std::size_t next = 0;
                for (int k = 0; k < n; ++k) {
                    const double c = grid.origin[axis] + (k + 0.5) * grid.h;
                    while (next < line.size() && line[next] < c) {
                        ++next;
                    }
                    if (next % 2 == 1) {
                        std::array<int, 3> idx{};
                        idx[axis] = k;
                        idx[a1] = i;
                        idx[a2] = j;
                        ++votes[(static_cast<std::size_t>(idx[2]) * n + idx[1]) * n + idx[0]];
                    }
                }
            }
        }
    }
    for (auto &v : votes) {
        v = v >= 2 ? 1 : 0;
    }
    return votes;
}

inline constexpr int kVolumeIouGrid = 64;

/// IoU of voxelized solids on a grid spanning the union of both bounding boxes.
/// A zero union gives 0 and a warning on stderr.
inline double volume_iou(const TriMesh &a, const TriMesh &b, int grid = kVolumeIouGrid) {
    require(grid >= 2, "volume IoU grid must have at least 2 cells per axis");
    if (a.empty() || b.empty()) {
        if (a.empty() && b.empty()) {
            std::cerr << "warning: volume IoU of two empty meshes; union is empty, reporting 0\n";
        }
        return 0.0;
    }
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const TriMesh *m : {&a, &b}) {
        for (const Vec3 &v : m->vertices) {
            lo = lo.cwiseMin(v);
            hi = hi.cwiseMax(v);
        }
    }
    VoxelGrid g;
    g.n = grid;
    g.h = (hi - lo).maxCoeff() / grid;
    if (!(g.h > 0.0)) {
        std::cerr << "warning: volume IoU of degenerate meshes; union is empty, reporting 0\n";
        return 0.0;
    }
    g.origin = 0.5 * (lo + hi) - Vec3::Constant(0.5 * grid * g.h);
    const auto va = voxelize(a, g);
    const auto vb = voxelize(b, g);
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < va.size(); ++i) {
        inter += va[i] & vb[i];
        uni += va[i] | vb[i];
    }
    if (uni == 0) {
        std::cerr << "warning: volume IoU union is empty, reporting 0\n";
        return 0.0;
    }
    return static_cast<double>(inter) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------
// Scale-adaptive ICP

/// p -> R * diag(scale) * p + translation
struct SimilarityTransform {
    Vec3 scale = Vec3::Ones();
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3 &p) const { return rotation * scale.cwiseProduct(p) + translation; }

    std::vector<Vec3> apply(const std::vector<Vec3> &pts) const {
        std::vector<Vec3> out(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            out[i] = apply(pts[i]);
        }
        return out;
    }

    TriMesh apply(TriMesh mesh) const {
        for (Vec3 &v : mesh.vertices) {
            v = apply(v);
        }
        return mesh;
    }
};

struct IcpSettings {
    int max_iterations = 100;
    double tolerance = 1e-6; // stop when the RMS changes less than this
    bool multi_start = true;  // also try coarse starts over a set of rotations
    int start_iterations = 10;
    std::size_t start_samples = 128;
    std::size_t finalists = 4; // best coarse starts refined on the full set
};

struct IcpResult {
    SimilarityTransform transform;
    int iterations = 0;
    double rms = 0.0;
};

namespace detail {

inline void require_full_rank(const std::vector<Vec3> &pts, const char *what) {
    require(pts.size() >= 4, std::string(what) + " needs at least 4 points");
    Vec3 mean = Vec3::Zero();
    for (const Vec3 &p : pts) {
        mean += p;
    }
    mean /= static_cast<double>(pts.size());
    Mat3 cov = Mat3::Zero();
    for (const Vec3 &p : pts) {
        cov += (p - mean) * (p - mean).transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    const Vec3 ev = es.eigenvalues();
    require(ev[2] > 0.0 && ev[0] > 1e-10 * ev[2], std::string(what) + " is rank deficient (coplanar or degenerate)");
}

// Best R * diag(s) * x + t for fixed pairs (x_i, y_i): alternate the closed-form
// rotation (Procrustes on the scaled points) and per-axis least-squares scales.
inline SimilarityTransform fit_pairs(const std::vector<Vec3> &x, const std::vector<Vec3> &y, SimilarityTransform init) {
    const double n = static_cast<double>(x.size());
    Vec3 mx = Vec3::Zero();
    Vec3 my = Vec3::Zero();
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    Mat3 cross = Mat3::Zero(); // sum (y - my)(x - mx)^T
    Vec3 var = Vec3::Zero();
    for (std::size_t i = 0; i < x.size(); ++i) {
        cross += (y[i] - my) * (x[i] - mx).transpose();
        var += (x[i] - mx).cwiseAbs2();
    }
    SimilarityTransform t = init;
    for (int it = 0; it < 200; ++it) {
        const Eigen::JacobiSVD<Mat3> svd(cross * t.scale.asDiagonal(), Eigen::ComputeFullU | Eigen::ComputeFullV);
        Mat3 d = Mat3::Identity();
        d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
        t.rotation = svd.matrixU() * d * svd.matrixV().transpose();
        const Mat3 rc = t.rotation.transpose() * cross;
        Vec3 s;
        for (int k = 0; k < 3; ++k) {
            s[k] = var[k] > 0.0 ? std::max(1e-9, rc(k, k) / var[k]) : t.scale[k];
        }
        const double change = (s - t.scale).cwiseAbs().maxCoeff();
        t.scale = s;
        if (change < 1e-12) {
            break;
        }
    }
    t.translation = my - t.rotation * t.scale.cwiseProduct(mx);
    return t;
}

// Plain ICP from an initial transform; returns the final RMS.
inline IcpResult icp_refine(const std::vector<Vec3> &src, const std::vector<Vec3> &dst, const KdTree &tree,
                            SimilarityTransform t, int max_iterations, double tolerance) {
    IcpResult res;
    res.transform = t;
    std::vector<std::uint32_t> match(src.size(), std::numeric_limits<std::uint32_t>::max());
    std::vector<Vec3> y(src.size());
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iterations; ++it) {
        std::vector<double> d2(src.size());
        bool changed = false;
        std::vector<std::uint8_t> diff(src.size(), 0);
        parallel_for(src.size(), [&](std::size_t i) {
            const auto nn = tree.nearest(t.apply(src[i]));
            diff[i] = nn.index != match[i];
            match[i] = nn.index;
            y[i] = dst[nn.index];
            d2[i] = nn.distance_sq;
        });
        for (auto c : diff) {
            changed = changed || c;
        }
        double sum = 0.0;
        for (double v : d2) {
            sum += v;
        }
        const double rms = std::sqrt(sum / static_cast<double>(src.size()));
        res.iterations = it + 1;
        res.rms = rms;
        res.transform = t;
        if (!changed && std::abs(prev - rms) < tolerance) {
            break;
        }
        prev = rms;
        t = fit_pairs(src, y, t);
    }
    return res;
}

// The 24 rotations mapping coordinate axes onto signed coordinate axes.
inline std::vector<Mat3> axis_rotations() {
    std::vector<Mat3> out;
    const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    for (const auto &p : perms) {
        for (int signs = 0; signs < 8; ++signs) {
            Mat3 r = Mat3::Zero();
            for (int k = 0; k < 3; ++k) {
                r(k, p[k]) = (signs >> k) & 1 ? -1.0 : 1.0;
            }
            if (r.determinant() > 0) {
                out.push_back(r);
            }
        }
    }
    return out;
}

// Centroid and per-axis extent matching for a given rotation.
inline SimilarityTransform moment_start(const std::vector<Vec3> &src, const std::vector<Vec3> &dst, const Mat3 &r) {
    const auto moments = [](const std::vector<Vec3> &pts, const Mat3 &frame) {
        Vec3 m = Vec3::Zero();
        for (const Vec3 &p : pts) {
            m += p;
        }
        m /= static_cast<double>(pts.size());
        Vec3 var = Vec3::Zero();
        for (const Vec3 &p : pts) {
            var += (frame * (p - m)).cwiseAbs2();
        }
        return std::pair<Vec3, Vec3>{m, var / static_cast<double>(pts.size())};
    };
    const auto [ms, vs] = moments(src, Mat3::Identity());
    const auto [md, vd] = moments(dst, r.transpose());
    SimilarityTransform t;
    t.rotation = r;
    for (int k = 0; k < 3; ++k) {
        t.scale[k] = vs[k] > 0.0 ? std::sqrt(vd[k] / vs[k]) : 1.0;
    }
    t.translation = md - r * t.scale.cwiseProduct(ms);
    return t;
}

} // namespace detail

/// Aligns `src` onto `dst` with p -> R diag(s) p + t. Correspondences are
/// nearest neighbours in `dst`; each update alternates an orthogonal Procrustes
/// rotation on the scaled points with per-axis least-squares scales, then the
/// closed-form translation. With multi_start, a few ICP steps are run on a
/// subsample from the identity and from 168 rotations covering SO(3) (scale and
/// translation moment-matched), and the best few by point-set Chamfer are refined on the full set. The result
/// never has a larger point-set Chamfer distance than the identity.
inline IcpResult scale_adaptive_icp(const std::vector<Vec3> &src, const std::vector<Vec3> &dst,
                                    const IcpSettings &settings = {}) {
    detail::require_full_rank(src, "ICP source");
    detail::require_full_rank(dst, "ICP target");
    require(settings.max_iterations >= 1, "ICP needs at least one iteration");
    const KdTree tree(dst);

    std::vector<SimilarityTransform> starts{SimilarityTransform{}};
    if (settings.multi_start) {
        // Axis-permuting rotations, each also tilted by 45 degrees about every
        // signed axis, so no rotation is more than ~35 degrees from a start.
        std::vector<Mat3> tilts{Mat3::Identity()};
        for (int a = 0; a < 3; ++a) {
            for (double deg : {-45.0, 45.0}) {
                tilts.push_back(Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, Vec3::Unit(a)).toRotationMatrix());
            }
        }
        for (const Mat3 &r : detail::axis_rotations()) {
            for (const Mat3 &t : tilts) {
                starts.push_back(detail::moment_start(src, dst, r * t));
            }
        }
    }
    std::vector<SimilarityTransform> finalists{starts.front()};
    if (starts.size() > 1) {
        std::vector<Vec3> sub;
        const std::size_t stride = std::max<std::size_t>(1, src.size() / settings.start_samples);
        for (std::size_t i = 0; i < src.size(); i += stride) {
            sub.push_back(src[i]);
        }
        std::vector<std::pair<double, std::size_t>> ranked;
        std::vector<SimilarityTransform> coarse;
        for (const SimilarityTransform &s : starts) {
            const IcpResult r = detail::icp_refine(sub, dst, tree, s, settings.start_iterations, settings.tolerance);
            // Symmetric score: one-sided residuals reward collapsing an axis.
            ranked.emplace_back(chamfer_points(r.transform.apply(sub), dst), coarse.size());
            coarse.push_back(r.transform);
        }
        std::sort(ranked.begin(), ranked.end());
        finalists.clear();
        for (std::size_t k = 0; k < std::min<std::size_t>(settings.finalists, ranked.size()); ++k) {
            finalists.push_back(coarse[ranked[k].second]);
        }
    }
    IcpResult res;
    double best = std::numeric_limits<double>::infinity();
    for (const SimilarityTransform &f : finalists) {
        IcpResult r = detail::icp_refine(src, dst, tree, f, settings.max_iterations, settings.tolerance);
        const double cd = chamfer_points(r.transform.apply(src), dst);
        if (cd < best) {
            best = cd;
            res = r;
        }
    }
    if (best > chamfer_points(src, dst)) {
        res = IcpResult{};
        res.rms = std::sqrt([&] {
            double s = 0.0;
            for (const Vec3 &p : src) {
                s += tree.nearest(p).distance_sq;
            }
            return s / static_cast<double>(src.size());
        }());
    }
    return res;
}

// ---------------------------------------------------------------------------
// Mesh rasterization, depth error, image metrics

struct MeshRaster {
    ImageD depth; // 1 x H x W ray depth, 0 where nothing is hit
    ImageD color; // 3 x H x W interpolated vertex colors (0 without colors)
};

/// Nearest-hit orthographic rasterization at pixel centers.
inline MeshRaster rasterize_mesh(const TriMesh &mesh, const OrthoCamera &cam) {
    const int h = cam.height();
    const int w = cam.width();
    MeshRaster out{ImageD(1, h, w), ImageD(3, h, w)};
    const bool colored = !mesh.vertex_colors.empty();
    std::vector<Projection> proj(mesh.vertices.size());
    for (std::size_t i = 0; i < proj.size(); ++i) {
        proj[i] = cam.project(mesh.vertices[i]);
    }
    for (const Face &f : mesh.faces) {
        const Projection &a = proj[f[0]];
        const Projection &b = proj[f[1]];
        const Projection &c = proj[f[2]];
        const double d = (b.u - a.u) * (c.v - a.v) - (c.u - a.u) * (b.v - a.v);
        if (d == 0.0) {
            continue;
        }
        const int u0 = std::max(0, static_cast<int>(std::ceil(std::min({a.u, b.u, c.u}))));
        const int u1 = std::min(w - 1, static_cast<int>(std::floor(std::max({a.u, b.u, c.u}))));
        const int v0 = std::max(0, static_cast<int>(std::ceil(std::min({a.v, b.v, c.v}))));
        const int v1 = std::min(h - 1, static_cast<int>(std::floor(std::max({a.v, b.v, c.v}))));
        for (int v = v0; v <= v1; ++v) {
            for (int u = u0; u <= u1; ++u) {
                const double b1 = ((u - a.u) * (c.v - a.v) - (c.u - a.u) * (v - a.v)) / d;
                const double b2 = ((b.u - a.u) * (v - a.v) - (u - a.u) * (b.v - a.v)) / d;
                const double b0 = 1.0 - b1 - b2;
                if (b0 < 0.0 || b1 < 0.0 || b2 < 0.0) {
                    continue;
                }
                const double t = b0 * a.t + b1 * b.t + b2 * c.t;
                if (t <= 0.0) {
                    continue;
                }
                double &cur = out.depth(0, v, u);
                if (cur != 0.0 && cur <= t) {
                    continue;
                }
                cur = t;
                if (colored) {
                    const Vec3 col = b0 * mesh.vertex_colors[f[0]] + b1 * mesh.vertex_colors[f[1]] +
                                     b2 * mesh.vertex_colors[f[2]];
                    for (int ch = 0; ch < 3; ++ch) {
                        out.color(ch, v, u) = col[ch];
                    }
                }
            }
        }
    }
    return out;
}

/// Mean |t_a - t_b| over pixels hit by both meshes, over all cameras.
inline double depth_error(const TriMesh &mesh, const TriMesh &gt, const std::vector<OrthoCamera> &cams) {
    std::vector<double> sum(cams.size(), 0.0);
    std::vector<std::size_t> count(cams.size(), 0);
    parallel_for(cams.size(), [&](std::size_t i) {
        const MeshRaster a = rasterize_mesh(mesh, cams[i]);
        const MeshRaster b = rasterize_mesh(gt, cams[i]);
        for (std::size_t k = 0; k < a.depth.size(); ++k) {
            const double ta = a.depth.data()[k];
            const double tb = b.depth.data()[k];
            if (ta > 0.0 && tb > 0.0) {
                sum[i] += std::abs(ta - tb);
                ++count[i];
            }
        }
    });
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < cams.size(); ++i) {
        s += sum[i];
        n += count[i];
    }
    if (n == 0) {
        throw EmptyResultError("depth error: no pixel is covered by both meshes");
    }
    return s / static_cast<double>(n);
}

inline constexpr double kPsnrCap = 99.0;

inline double mse(const ImageD &a, const ImageD &b) {
    require(a.same_shape(b) && !a.empty(), "image metrics need non-empty images of matching shape");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

/// 10 log10(1 / MSE) for images in [0, 1], capped at 99 dB.
inline double psnr(const ImageD &a, const ImageD &b) {
    const double m = mse(a, b);
    if (m < 1e-10) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

inline std::array<double, 11> ssim_window() {
    std::array<double, 11> w{};
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        w[i] = std::exp(-0.5 * (i - 5) * (i - 5) / (1.5 * 1.5));
        sum += w[i];
    }
    for (double &x : w) {
        x /= sum;
    }
    return w;
}

/// Mean SSIM over channels and all full 11x11 windows (Gaussian, sigma 1.5).
inline double ssim(const ImageD &a, const ImageD &b) {
    require(a.same_shape(b) && !a.empty(), "image metrics need non-empty images of matching shape");
    require(a.height() >= 11 && a.width() >= 11, "SSIM needs images of at least 11 x 11");
    const auto win = ssim_window();
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    const int oh = a.height() - 10;
    const int ow = a.width() - 10;
    double total = 0.0;
    for (int c = 0; c < a.channels(); ++c) {
        // Horizontal pass of x, y, xx, yy, xy; then vertical pass per output pixel.
        std::vector<std::array<double, 5>> rows(static_cast<std::size_t>(a.height()) * ow);
        for (int v = 0; v < a.height(); ++v) {
            for (int u = 0; u < ow; ++u) {
                std::array<double, 5> acc{};
                for (int k = 0; k < 11; ++k) {
                    const double x = a(c, v, u + k);
                    const double y = b(c, v, u + k);
                    acc[0] += win[k] * x;
                    acc[1] += win[k] * y;
                    acc[2] += win[k] * x * x;
                    acc[3] += win[k] * y * y;
                    acc[4] += win[k] * x * y;
                }
                rows[static_cast<std::size_t>(v) * ow + u] = acc;
            }
        }
        for (int v = 0; v < oh; ++v) {
            for (int u = 0; u < ow; ++u) {
                std::array<double, 5> m{};
                for (int k = 0; k < 11; ++k) {
                    const auto &r = rows[static_cast<std::size_t>(v + k) * ow + u];
                    for (int q = 0; q < 5; ++q) {
                        m[q] += win[k] * r[q];
                    }
                }
                const double sxx = m[2] - m[0] * m[0];
                const double syy = m[3] - m[1] * m[1];
                const double sxy = m[4] - m[0] * m[1];
                total += ((2 * m[0] * m[1] + c1) * (2 * sxy + c2)) /
                         ((m[0] * m[0] + m[1] * m[1] + c1) * (sxx + syy + c2));
            }
        }
    }
    return total / (static_cast<double>(a.channels()) * oh * ow);
}

// ---------------------------------------------------------------------------
// Evaluation protocol

/// 3 elevation rings (-30, 0, +30 degrees) x 12 azimuths, 30 degrees apart.
/// Azimuth 0 at elevation 0 is the Front view; azimuth turns toward +x.
inline std::vector<OrthoCamera> render_protocol_views(double object_radius = 1.0, int resolution = 128) {
    require(object_radius > 0.0, "object radius must be positive");
    const double he = std::max(1.0, object_radius);
    validate_rig_config(resolution, he, 2.0 * he);
    std::vector<OrthoCamera> cams;
    for (int e = -1; e <= 1; ++e) {
        const double el = e * 30.0 * std::numbers::pi / 180.0;
        for (int a = 0; a < 12; ++a) {
            const double az = a * 30.0 * std::numbers::pi / 180.0;
            const Vec3 position(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
            const ViewId id = (e == 0 && a == 0) ? ViewId::Front : ViewId::Custom;
            cams.push_back(OrthoCamera::looking(id, -position, Vec3(0, 1, 0), 2.0 * he, he, resolution, resolution));
        }
    }
    return cams;
}

struct MetricReport {
    double chamfer = 0.0;
    double volume_iou = 0.0;
    double depth_error = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    SimilarityTransform transform;
};

struct EvalSettings {
    bool icp = false;
    std::size_t samples = kChamferSamples;
    std::uint64_t seed = 0;
    int iou_grid = kVolumeIouGrid;
    int resolution = 128;
    IcpSettings icp_settings;
};

/// Full protocol: optional alignment of `mesh` onto `gt`, then CD, IoU, depth
/// error, and PSNR/SSIM of vertex-color renders over the 36 protocol views.
inline MetricReport evaluate_meshes(const TriMesh &mesh, const TriMesh &gt, const EvalSettings &s = {}) {
    if (mesh.empty() || gt.empty()) {
        throw EmptyResultError("evaluation needs two non-empty meshes");
    }
    MetricReport r;
    TriMesh aligned = mesh;
    if (s.icp) {
        const auto src = sample_mesh_surface(mesh, 4096, s.seed + 1);
        const auto dst = sample_mesh_surface(gt, 4096, s.seed + 2);
        r.transform = scale_adaptive_icp(src, dst, s.icp_settings).transform;
        aligned = r.transform.apply(mesh);
    }
    r.chamfer = chamfer_distance(aligned, gt, s.samples, s.seed);
    r.volume_iou = volume_iou(aligned, gt, s.iou_grid);
    double radius = 0.0;
    for (const Vec3 &v : gt.vertices) {
        radius = std::max(radius, v.norm());
    }
    const auto cams = render_protocol_views(radius, s.resolution);
    r.depth_error = depth_error(aligned, gt, cams);
    double p = 0.0;
    double q = 0.0;
    for (const OrthoCamera &cam : cams) {
        const MeshRaster a = rasterize_mesh(aligned, cam);
        const MeshRaster b = rasterize_mesh(gt, cam);
        p += psnr(a.color, b.color);
        q += ssim(a.color, b.color);
    }
    r.psnr = p / static_cast<double>(cams.size());
    r.ssim = q / static_cast<double>(cams.size());
    return r;
}

} // namespace orthofuse
