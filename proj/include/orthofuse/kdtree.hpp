// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orthofuse/common.hpp"

#include <limits>
#include <numeric>
#include <span>

namespace orthofuse {

/// Static balanced 3D kd-tree over a borrowed point array.
class KdTree {
public:
    struct Neighbor {
        std::uint32_t index;
        double distance_sq;
    };

    KdTree() = default;

    explicit KdTree(std::span<const Vec3> points) : points_(points), order_(points.size()), axis_(points.size(), 0) {
        std::iota(order_.begin(), order_.end(), 0u);
        build(0, order_.size());
    }

    std::size_t size() const noexcept { return order_.size(); }

    Neighbor nearest(const Vec3 &q) const {
        require(!order_.empty(), "nearest-neighbor query on an empty kd-tree");
        Neighbor best{0, std::numeric_limits<double>::infinity()};
        search_nearest(0, order_.size(), q, best);
        return best;
    }

    /// k nearest neighbors sorted by distance (ties by index); k is clamped to size().
    std::vector<Neighbor> k_nearest(const Vec3 &q, std::size_t k) const {
        k = std::min(k, order_.size());
        std::vector<Neighbor> heap;
        heap.reserve(k + 1);
        if (k > 0) {
            search_knn(0, order_.size(), q, k, heap);
        }
        std::sort(heap.begin(), heap.end(), closer);
        return heap;
    }

private:
    static bool closer(const Neighbor &a, const Neighbor &b) {
        return a.distance_sq < b.distance_sq || (a.distance_sq == b.distance_sq && a.index < b.index);
    }

    void build(std::size_t lo, std::size_t hi) {
        if (hi - lo <= 1) {
            return;
        }
        Vec3 mn = Vec3::Constant(std::numeric_limits<double>::infinity());
        Vec3 mx = -mn;
        for (std::size_t i = lo; i < hi; ++i) {
            mn = mn.cwiseMin(points_[order_[i]]);
            mx = mx.cwiseMax(points_[order_[i]]);
        }
        int axis = 0;
        (mx - mn).maxCoeff(&axis);
        const std::size_t mid = lo + (hi - lo) / 2;
        std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                         [&](std::uint32_t a, std::uint32_t b) {
                             const double pa = points_[a][axis];
                             const double pb = points_[b][axis];
                             return pa < pb || (pa == pb && a < b);
                         });
        axis_[mid] = static_cast<std::uint8_t>(axis);
        build(lo, mid);
        build(mid + 1, hi);
    }

    void consider(std::uint32_t idx, const Vec3 &q, Neighbor &best) const {
        const double d = (points_[idx] - q).squaredNorm();
        if (d < best.distance_sq || (d == best.distance_sq && idx < best.index)) {
            best = {idx, d};
        }
    }

    void search_nearest(std::size_t lo, std::size_t hi, const Vec3 &q, Neighbor &best) const {
        if (lo >= hi) {
            return;
        }
        const std::size_t mid = lo + (hi - lo) / 2;
        const std::uint32_t idx = order_[mid];
        consider(idx, q, best);
        if (hi - lo == 1) {
            return;
        }
        const int axis = axis_[mid];
        const double diff = q[axis] - points_[idx][axis];
        if (diff < 0) {
            search_nearest(lo, mid, q, best);
            if (diff * diff <= best.distance_sq) {
                search_nearest(mid + 1, hi, q, best);
            }
        } else {
            search_nearest(mid + 1, hi, q, best);
            if (diff * diff <= best.distance_sq) {
                search_nearest(lo, mid, q, best);
            }
        }
    }

    void push_knn(std::uint32_t idx, const Vec3 &q, std::size_t k, std::vector<Neighbor> &heap) const {
        const Neighbor n{idx, (points_[idx] - q).squaredNorm()};
        if (heap.size() < k) {
            heap.push_back(n);
            std::push_heap(heap.begin(), heap.end(), closer);
        } else if (closer(n, heap.front())) {
            std::pop_heap(heap.begin(), heap.end(), closer);
            heap.back() = n;
            std::push_heap(heap.begin(), heap.end(), closer);
        }
    }

    void search_knn(std::size_t lo, std::size_t hi, const Vec3 &q, std::size_t k, std::vector<Neighbor> &heap) const {
        if (lo >= hi) {
            return;
        }
        const std::size_t mid = lo + (hi - lo) / 2;
        const std::uint32_t idx = order_[mid];
        push_knn(idx, q, k, heap);
        if (hi - lo == 1) {
            return;
        }
        const int axis = axis_[mid];
        const double diff = q[axis] - points_[idx][axis];
        const auto bound = [&] { return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.front().distance_sq; };
        if (diff < 0) {
            search_knn(lo, mid, q, k, heap);
            if (diff * diff <= bound()) {
                search_knn(mid + 1, hi, q, k, heap);
            }
        } else {
            search_knn(mid + 1, hi, q, k, heap);
            if (diff * diff <= bound()) {
                search_knn(lo, mid, q, k, heap);
            }
        }
    }

    std::span<const Vec3> points_;
    std::vector<std::uint32_t> order_;
    std::vector<std::uint8_t> axis_;
};

} // namespace orthofuse
