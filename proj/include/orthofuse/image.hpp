// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orthofuse/common.hpp"

#include <span>

namespace orthofuse {

/// Planar multi-channel image, channel-major then row-major (C x H x W).
template <typename T>
class Image {
public:
    Image() = default;
    Image(int channels, int height, int width, T fill = T{})
        : channels_(channels), height_(height), width_(width),
          data_(static_cast<std::size_t>(channels) * height * width, fill) {
        require(channels > 0 && height > 0 && width > 0, "image dimensions must be positive");
    }

    int channels() const noexcept { return channels_; }
    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T &operator()(int c, int v, int u) { return data_[index(c, v, u)]; }
    const T &operator()(int c, int v, int u) const { return data_[index(c, v, u)]; }

    std::span<T> plane(int c) {
        return {data_.data() + static_cast<std::size_t>(c) * height_ * width_,
                static_cast<std::size_t>(height_) * width_};
    }
    std::span<const T> plane(int c) const {
        return {data_.data() + static_cast<std::size_t>(c) * height_ * width_,
                static_cast<std::size_t>(height_) * width_};
    }

    std::vector<T> &data() noexcept { return data_; }
    const std::vector<T> &data() const noexcept { return data_; }

    bool same_shape(const Image &other) const noexcept {
        return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
    }

    bool operator==(const Image &) const = default;

private:
    std::size_t index(int c, int v, int u) const noexcept {
        return (static_cast<std::size_t>(c) * height_ + v) * width_ + u;
    }

    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<T> data_;
};

using ImageD = Image<double>;

} // namespace orthofuse
