// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orthofuse/camera.hpp"
#include "orthofuse/image.hpp"

#include <Eigen/Dense>

#include <optional>

namespace orthofuse {

enum class LineAxis { Row, Column };
enum class PixelAxis { U, V };

/// target = sign * query[source] + offset, exact on the integer pixel grid.
struct AxisMap {
    PixelAxis source = PixelAxis::U;
    int sign = 1;
    int offset = 0;

    int apply(int u, int v) const { return sign * (source == PixelAxis::U ? u : v) + offset; }
    bool operator==(const AxisMap &) const = default;
};

/// Epipolar correspondence from a query view into a target view of an
/// axis-aligned orthographic rig. The ray through a query pixel projects onto a
/// full row or column of the target. For (anti)parallel views the ray collapses
/// to a single pixel; the relation then names the row through it and `point`
/// gives the column of the corresponding pixel.
struct EpipolarRelation {
    int target_view = 0;
    LineAxis axis = LineAxis::Row;
    AxisMap line;                // query pixel -> target line index
    std::optional<AxisMap> point; // query pixel -> position along the line (parallel views only)
    Eigen::Vector2d depth_to_line{0.0, 0.0}; // position along line = a * t + b (non-parallel views)

    int line_index(int u, int v) const { return line.apply(u, v); }
    bool operator==(const EpipolarRelation &) const = default;
};

namespace detail {

inline AxisMap exact_axis_map(double du, double dv, double offset) {
    constexpr double tol = 1e-6;
    AxisMap m;
    if (std::abs(std::abs(du) - 1.0) < tol && std::abs(dv) < tol) {
        m.source = PixelAxis::U;
        m.sign = du > 0 ? 1 : -1;
    } else if (std::abs(std::abs(dv) - 1.0) < tol && std::abs(du) < tol) {
        m.source = PixelAxis::V;
        m.sign = dv > 0 ? 1 : -1;
    } else {
        throw PreconditionError("view pair does not map pixel axes onto pixel axes; rig is not axis-aligned");
    }
    const double rounded = std::round(offset);
    require(std::abs(rounded - offset) < tol, "view pair pixel grids are not aligned");
    m.offset = static_cast<int>(rounded);
    return m;
}

} // namespace detail

/// Relation i -> j derived from the cameras alone.
inline EpipolarRelation epipolar_relation(const std::vector<OrthoCamera> &rig, int i, int j) {
    require(i != j, "epipolar relation needs two distinct views");
    require(i >= 0 && j >= 0 && i < static_cast<int>(rig.size()) && j < static_cast<int>(rig.size()),
            "view index out of range");
    const OrthoCamera &src = rig[i];
    const OrthoCamera &dst = rig[j];
    require(src.width() == dst.width() && src.height() == dst.height() &&
                std::abs(src.pixel_pitch() - dst.pixel_pitch()) < 1e-12,
            "epipolar rows/columns require views with identical pixel grids");

    // Target pixel coordinates are affine in (u, v, t) of the query pixel.
    const double t0 = src.plane_distance();
    const Projection base = dst.project(src.unproject(0, 0, t0));
    const Projection pu = dst.project(src.unproject(1, 0, t0));
    const Projection pv = dst.project(src.unproject(0, 1, t0));
    const Projection pt = dst.project(src.unproject(0, 0, t0 + 1.0));
    const Eigen::Vector2d along_t(pt.u - base.u, pt.v - base.v);
    const Eigen::Vector2d along_u(pu.u - base.u, pu.v - base.v);
    const Eigen::Vector2d along_v(pv.u - base.u, pv.v - base.v);

    constexpr double tol = 1e-9;
    EpipolarRelation rel;
    rel.target_view = j;
    const bool moves_u = std::abs(along_t.x()) > tol;
    const bool moves_v = std::abs(along_t.y()) > tol;
    require(!(moves_u && moves_v), "view pair is neither parallel nor perpendicular");
    if (moves_u || !moves_v) {
        // Rays sweep along a row, or collapse to a point (parallel views): fixed v'.
        rel.axis = LineAxis::Row;
        rel.line = detail::exact_axis_map(along_u.y(), along_v.y(), base.v);
        if (moves_u) {
            rel.depth_to_line = {along_t.x(), base.u - along_t.x() * t0};
        } else {
            rel.point = detail::exact_axis_map(along_u.x(), along_v.x(), base.u);
        }
    } else {
        rel.axis = LineAxis::Column;
        rel.line = detail::exact_axis_map(along_u.x(), along_v.x(), base.u);
        rel.depth_to_line = {along_t.y(), base.v - along_t.y() * t0};
    }
    return rel;
}

struct EpipolarLine {
    LineAxis axis;
    int index;
    EpipolarRelation relation;
};

/// Row or column of view j on which pixel (u, v) of view i can reappear.
inline EpipolarLine epipolar_line(const std::vector<OrthoCamera> &rig, int i, int j, int u, int v) {
    require(i != j, "epipolar_line requires distinct views");
    require(rig.at(i).contains_pixel(u, v), "query pixel out of range");
    EpipolarRelation rel = epipolar_relation(rig, i, j);
    const int idx = rel.line_index(u, v);
    const int extent = rel.axis == LineAxis::Row ? rig[j].height() : rig[j].width();
    require(idx >= 0 && idx < extent, "epipolar line falls outside the target image");
    return {rel.axis, idx, std::move(rel)};
}

// ---------------------------------------------------------------------------
// Row/column restricted multi-head attention across views.

/// N views of C x H x W features.
using FeatureMaps = std::vector<ImageD>;

struct AttentionWeights {
    Eigen::MatrixXd query;  // C x C
    Eigen::MatrixXd key;    // C x C
    Eigen::MatrixXd value;  // C x C
    Eigen::MatrixXd output; // C x C

    static AttentionWeights zeros(int channels) {
        const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(channels, channels);
        return {z, z, z, z};
    }
};

struct AttentionGradients {
    FeatureMaps features;
    AttentionWeights weights;
};

/// Key token lists (flat token ids) for every query token: the query itself,
/// then the epipolar line in every other view, in view order.
class EpipolarKeySets {
public:
    EpipolarKeySets(const std::vector<OrthoCamera> &rig) : views_(static_cast<int>(rig.size())) {
        require(!rig.empty(), "attention needs at least one view");
        height_ = rig.front().height();
        width_ = rig.front().width();
        const int tokens_per_view = height_ * width_;
        offsets_.reserve(static_cast<std::size_t>(views_) * tokens_per_view + 1);
        offsets_.push_back(0);
        std::vector<EpipolarRelation> rel(static_cast<std::size_t>(views_) * views_);
        for (int i = 0; i < views_; ++i) {
            for (int j = 0; j < views_; ++j) {
                if (i != j) {
                    rel[static_cast<std::size_t>(i) * views_ + j] = epipolar_relation(rig, i, j);
                }
            }
        }
        for (int i = 0; i < views_; ++i) {
            for (int v = 0; v < height_; ++v) {
                for (int u = 0; u < width_; ++u) {
                    keys_.push_back(token(i, u, v));
                    for (int j = 0; j < views_; ++j) {
                        if (j == i) {
                            continue;
                        }
                        const EpipolarRelation &r = rel[static_cast<std::size_t>(i) * views_ + j];
                        const int line = r.line_index(u, v);
                        if (r.axis == LineAxis::Row) {
                            for (int k = 0; k < width_; ++k) {
                                keys_.push_back(token(j, k, line));
                            }
                        } else {
                            for (int k = 0; k < height_; ++k) {
                                keys_.push_back(token(j, line, k));
                            }
                        }
                    }
                    offsets_.push_back(keys_.size());
                }
            }
        }
    }

    int views() const noexcept { return views_; }
    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t tokens() const noexcept { return offsets_.size() - 1; }

    std::span<const int> keys(std::size_t query) const {
        return {keys_.data() + offsets_[query], offsets_[query + 1] - offsets_[query]};
    }

    int token(int view, int u, int v) const { return (view * height_ + v) * width_ + u; }

private:
    int views_;
    int height_ = 0;
    int width_ = 0;
    std::vector<std::size_t> offsets_;
    std::vector<int> keys_;
};

namespace detail {

inline Eigen::MatrixXd to_tokens(const FeatureMaps &maps, int channels, int h, int w) {
    Eigen::MatrixXd x(channels, static_cast<Eigen::Index>(maps.size()) * h * w);
    for (std::size_t n = 0; n < maps.size(); ++n) {
        require(maps[n].channels() == channels && maps[n].height() == h && maps[n].width() == w,
                "feature maps must share C, H and W");
        for (int v = 0; v < h; ++v) {
            for (int u = 0; u < w; ++u) {
                const Eigen::Index col = (static_cast<Eigen::Index>(n) * h + v) * w + u;
                for (int c = 0; c < channels; ++c) {
                    x(c, col) = maps[n](c, v, u);
                }
            }
        }
    }
    return x;
}

inline FeatureMaps from_tokens(const Eigen::MatrixXd &x, int views, int h, int w) {
    FeatureMaps maps(views, ImageD(static_cast<int>(x.rows()), h, w));
    for (int n = 0; n < views; ++n) {
        for (int v = 0; v < h; ++v) {
            for (int u = 0; u < w; ++u) {
                const Eigen::Index col = (static_cast<Eigen::Index>(n) * h + v) * w + u;
                for (int c = 0; c < x.rows(); ++c) {
                    maps[n](c, v, u) = x(c, col);
                }
            }
        }
    }
    return maps;
}

struct AttentionState {
    Eigen::MatrixXd x, q, k, v, o;
    std::vector<Eigen::VectorXd> probs; // per (query, head), concatenated by head
};

inline void softmax_inplace(Eigen::Ref<Eigen::VectorXd> logits) {
    const double mx = logits.maxCoeff();
    logits = (logits.array() - mx).exp();
    logits /= logits.sum();
}

inline AttentionState attention_forward(const EpipolarKeySets &keys, const FeatureMaps &maps,
                                        const AttentionWeights &w, int heads, bool keep_probs) {
    require(!maps.empty(), "attention needs feature maps");
    require(static_cast<int>(maps.size()) == keys.views(), "feature map count must match the rig");
    const int channels = maps.front().channels();
    require(heads > 0 && channels % heads == 0, "channel count must be divisible by the head count");
    for (const Eigen::MatrixXd *m : {&w.query, &w.key, &w.value, &w.output}) {
        require(m->rows() == channels && m->cols() == channels, "projection weights must be C x C");
    }
    AttentionState st;
    st.x = to_tokens(maps, channels, keys.height(), keys.width());
    st.q = w.query * st.x;
    st.k = w.key * st.x;
    st.v = w.value * st.x;
    st.o = Eigen::MatrixXd::Zero(channels, st.x.cols());
    const int dh = channels / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    if (keep_probs) {
        st.probs.resize(keys.tokens() * heads);
    }
    parallel_for(keys.tokens(), [&](std::size_t qi) {
        const auto ks = keys.keys(qi);
        Eigen::VectorXd p(ks.size());
        for (int h = 0; h < heads; ++h) {
            const auto qh = st.q.col(qi).segment(h * dh, dh);
            for (std::size_t a = 0; a < ks.size(); ++a) {
                p[a] = qh.dot(st.k.col(ks[a]).segment(h * dh, dh)) * inv_sqrt;
            }
            softmax_inplace(p);
            auto oh = st.o.col(qi).segment(h * dh, dh);
            for (std::size_t a = 0; a < ks.size(); ++a) {
                oh += p[a] * st.v.col(ks[a]).segment(h * dh, dh);
            }
            if (keep_probs) {
                st.probs[qi * heads + h] = p;
            }
        }
    });
    return st;
}

} // namespace detail

/// out = x + W_o * MHA(x) where each token attends to itself plus its epipolar
/// rows/columns in all other views.
inline FeatureMaps epipolar_attention(const EpipolarKeySets &keys, const FeatureMaps &maps,
                                      const AttentionWeights &w, int heads) {
    const detail::AttentionState st = detail::attention_forward(keys, maps, w, heads, false);
    const Eigen::MatrixXd y = st.x + w.output * st.o;
    return detail::from_tokens(y, keys.views(), keys.height(), keys.width());
}

inline FeatureMaps epipolar_attention(const std::vector<OrthoCamera> &rig, const FeatureMaps &maps,
                                      const AttentionWeights &w, int heads) {
    return epipolar_attention(EpipolarKeySets(rig), maps, w, heads);
}

/// Reverse-mode gradients of epipolar_attention for upstream dLoss/d(out).
inline AttentionGradients epipolar_attention_backward(const EpipolarKeySets &keys, const FeatureMaps &maps,
                                                      const AttentionWeights &w, int heads,
                                                      const FeatureMaps &upstream) {
    const detail::AttentionState st = detail::attention_forward(keys, maps, w, heads, true);
    const int channels = static_cast<int>(st.x.rows());
    const Eigen::MatrixXd dy = detail::to_tokens(upstream, channels, keys.height(), keys.width());
    const int dh = channels / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    AttentionGradients g;
    g.weights.output = dy * st.o.transpose();
    const Eigen::MatrixXd d_o = w.output.transpose() * dy;
    Eigen::MatrixXd d_q = Eigen::MatrixXd::Zero(channels, st.x.cols());
    Eigen::MatrixXd d_k = Eigen::MatrixXd::Zero(channels, st.x.cols());
    Eigen::MatrixXd d_v = Eigen::MatrixXd::Zero(channels, st.x.cols());

    // Serial over queries: keys are shared, and a fixed order keeps sums reproducible.
    for (std::size_t qi = 0; qi < keys.tokens(); ++qi) {
        const auto ks = keys.keys(qi);
        for (int h = 0; h < heads; ++h) {
            const Eigen::VectorXd &p = st.probs[qi * heads + h];
            const auto doh = d_o.col(qi).segment(h * dh, dh);
            Eigen::VectorXd dp(ks.size());
            for (std::size_t a = 0; a < ks.size(); ++a) {
                d_v.col(ks[a]).segment(h * dh, dh) += p[a] * doh;
                dp[a] = doh.dot(st.v.col(ks[a]).segment(h * dh, dh));
            }
            const double mean = p.dot(dp);
            const auto qh = st.q.col(qi).segment(h * dh, dh);
            for (std::size_t a = 0; a < ks.size(); ++a) {
                const double dl = p[a] * (dp[a] - mean) * inv_sqrt;
                d_q.col(qi).segment(h * dh, dh) += dl * st.k.col(ks[a]).segment(h * dh, dh);
                d_k.col(ks[a]).segment(h * dh, dh) += dl * qh;
            }
        }
    }
    g.weights.query = d_q * st.x.transpose();
    g.weights.key = d_k * st.x.transpose();
    g.weights.value = d_v * st.x.transpose();
    const Eigen::MatrixXd dx =
        dy + w.query.transpose() * d_q + w.key.transpose() * d_k + w.value.transpose() * d_v;
    g.features = detail::from_tokens(dx, keys.views(), keys.height(), keys.width());
    return g;
}

struct AttentionCost {
    double epipolar = 0.0; // multiply-adds for QK^T and PV restricted to lines
    double dense = 0.0;    // same for full cross-view attention
    double ratio() const { return dense / epipolar; }
};

/// Multiply-add counts: 2*C*N^2*H*W*max(H,W) restricted vs 2*C*N^2*(H*W)^2 dense.
inline AttentionCost attention_flops(long long height, long long width, long long views, long long channels) {
    require(height > 0 && width > 0 && views > 0 && channels > 0, "attention_flops needs positive dimensions");
    const double hw = static_cast<double>(height) * static_cast<double>(width);
    const double n2c = 2.0 * static_cast<double>(views) * static_cast<double>(views) * static_cast<double>(channels);
    return {n2c * hw * static_cast<double>(std::max(height, width)), n2c * hw * hw};
}

} // namespace orthofuse
