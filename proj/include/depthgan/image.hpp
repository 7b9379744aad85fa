// Copyright 2026 The depthgan Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "depthgan/errors.hpp"
#include "depthgan/tensor.hpp"

namespace depthgan {

/// H x W disparity (pixels) with a per-pixel validity flag.
struct DisparityImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;
    std::vector<std::uint8_t> valid;

    DisparityImage() = default;
    DisparityImage(std::size_t h, std::size_t w, double fill = 0.0)
        : height(h), width(w), values(h * w, fill), valid(h * w, 1) {}

    double& operator()(std::size_t i, std::size_t j) { return values[i * width + j]; }
    double operator()(std::size_t i, std::size_t j) const { return values[i * width + j]; }
    bool is_valid(std::size_t i, std::size_t j) const { return valid[i * width + j] != 0; }
    std::size_t size() const noexcept { return values.size(); }

    /// [1,H,W]
    Tensor to_tensor() const { return Tensor(Shape{1, height, width}, values); }

    static DisparityImage from_tensor(const Tensor& t) {
        if (t.rank() != 3 || t.dim(0) != 1) throw DimensionError("disparity: expected [1,H,W], got " + shape_str(t.shape()));
        DisparityImage d(t.dim(1), t.dim(2));
        d.values = t.storage();
        return d;
    }
};

/// Binary H x W mask; 1 marks a hole pixel to reconstruct, 0 known background.
struct HoleMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> hole;

    HoleMask() = default;
    HoleMask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), hole(h * w, fill) {}

    bool operator()(std::size_t i, std::size_t j) const { return hole[i * width + j] != 0; }
    void set(std::size_t i, std::size_t j, bool v) { hole[i * width + j] = v ? 1 : 0; }

    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : hole) n += v != 0;
        return n;
    }
    bool empty() const { return count() == 0; }

    /// [C,H,W] tensor of 0/1 repeated over C channels.
    Tensor to_tensor(std::size_t channels = 1) const {
        Tensor t(Shape{channels, height, width});
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t i = 0; i < hole.size(); ++i) t[c * hole.size() + i] = hole[i] ? 1.0 : 0.0;
        return t;
    }

    /// All ones: the whole image is one region.
    static HoleMask full(std::size_t h, std::size_t w) { return HoleMask(h, w, 1); }
};

/// Row/column extent of the hole, inclusive-exclusive.
struct Box {
    std::size_t top = 0, left = 0, height = 0, width = 0;
    bool empty() const { return height == 0 || width == 0; }
};

inline Box bounding_box(const HoleMask& m) {
    std::size_t y0 = m.height, y1 = 0, x0 = m.width, x1 = 0;
    for (std::size_t i = 0; i < m.height; ++i)
        for (std::size_t j = 0; j < m.width; ++j)
            if (m(i, j)) {
                y0 = std::min(y0, i);
                y1 = std::max(y1, i + 1);
                x0 = std::min(x0, j);
                x1 = std::max(x1, j + 1);
            }
    if (y0 >= y1) return {};
    return {y0, x0, y1 - y0, x1 - x0};
}

/// H x W unit surface normals, stored channel-major as [3,H,W].
struct NormalMap {
    std::size_t height = 0;
    std::size_t width = 0;
    Tensor vectors;

    NormalMap() = default;
    NormalMap(std::size_t h, std::size_t w) : height(h), width(w), vectors(Shape{3, h, w}) {}

    static NormalMap from_tensor(const Tensor& t) {
        if (t.rank() != 3 || t.dim(0) != 3) throw DimensionError("normal map: expected [3,H,W], got " + shape_str(t.shape()));
        NormalMap n;
        n.height = t.dim(1);
        n.width = t.dim(2);
        n.vectors = t;
        return n;
    }

    std::array<double, 3> operator()(std::size_t i, std::size_t j) const {
        return {vectors.at(0, i, j), vectors.at(1, i, j), vectors.at(2, i, j)};
    }
    void set(std::size_t i, std::size_t j, const std::array<double, 3>& n) {
        for (std::size_t c = 0; c < 3; ++c) vectors.at(c, i, j) = n[c];
    }
};

}  // namespace depthgan
