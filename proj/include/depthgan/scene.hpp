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

// Piecewise-planar synthetic disparity scenes with analytic normals.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "depthgan/errors.hpp"
#include "depthgan/image.hpp"
#include "depthgan/normals.hpp"

namespace depthgan::scene {

/// Fronto-parallel rectangle of constant disparity.
struct BoxRegion {
    std::size_t top = 0, left = 0, height = 0, width = 0;
    double disparity = 0.0;
};

/// Rectangle whose disparity is linear in the column: intercept + slope * j.
struct WallRegion {
    std::size_t top = 0, left = 0, height = 0, width = 0;
    double slope = 0.0;
    double intercept = 0.0;
};

struct SceneSpec {
    std::size_t height = 64, width = 64;
    double ground_slope = 0.4;  // disparity per row
    double ground_intercept = 4.0;
    std::vector<BoxRegion> boxes;
    std::vector<WallRegion> walls;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

struct Scene {
    DisparityImage disparity;
    NormalMap gt_normals;
    std::vector<int> labels;  // 0 ground, 1..B boxes, B+1.. walls

    int label(std::size_t i, std::size_t j) const { return labels[i * disparity.width + j]; }

    /// Away from the image border and from region boundaries, where the
    /// central-difference stencil sees a single plane.
    bool interior(std::size_t i, std::size_t j) const {
        const std::size_t H = disparity.height, W = disparity.width;
        if (i == 0 || j == 0 || i + 1 >= H || j + 1 >= W) return false;
        const int l = label(i, j);
        for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj)
                if (label(i + di, j + dj) != l) return false;
        return true;
    }
};

/// (-a, -b, 1) / sqrt(1 + a^2 + b^2) for d = a*i + b*j + c.
inline std::array<double, 3> plane_normal(double a, double b) {
    const double n = std::sqrt(1.0 + a * a + b * b);
    return {-a / n, -b / n, 1.0 / n};
}

inline Scene synth_scene(const SceneSpec& spec) {
    if (spec.height < 3 || spec.width < 3) throw SpecError("synth_scene: image must be at least 3x3");
    if (spec.noise_sigma < 0.0) throw SpecError("synth_scene: noise sigma must be >= 0");
    const std::size_t H = spec.height, W = spec.width;
    for (const auto& b : spec.boxes) {
        if (b.top + b.height > H || b.left + b.width > W) throw SpecError("synth_scene: box exceeds image");
        if (!(b.disparity >= 0.0)) throw SpecError("synth_scene: box disparity must be >= 0");
    }
    for (const auto& w : spec.walls)
        if (w.top + w.height > H || w.left + w.width > W) throw SpecError("synth_scene: wall exceeds image");

    Scene s;
    s.disparity = DisparityImage(H, W);
    s.gt_normals = NormalMap(H, W);
    s.labels.assign(H * W, 0);
    const int nb = static_cast<int>(spec.boxes.size());
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
            double d = spec.ground_slope * static_cast<double>(i) + spec.ground_intercept;
            int label = 0;
            auto n = plane_normal(spec.ground_slope, 0.0);
            for (int k = 0; k < nb; ++k) {
                const auto& b = spec.boxes[k];
                if (i >= b.top && i < b.top + b.height && j >= b.left && j < b.left + b.width && b.disparity > d) {
                    d = b.disparity;
                    label = 1 + k;
                    n = {0.0, 0.0, 1.0};
                }
            }
            for (std::size_t k = 0; k < spec.walls.size(); ++k) {
                const auto& w = spec.walls[k];
                const double dw = w.intercept + w.slope * static_cast<double>(j);
                if (i >= w.top && i < w.top + w.height && j >= w.left && j < w.left + w.width && dw > d) {
                    d = dw;
                    label = 1 + nb + static_cast<int>(k);
                    n = plane_normal(0.0, w.slope);
                }
            }
            if (!(d >= 0.0) || !std::isfinite(d))
                throw SpecError("synth_scene: negative disparity at (" + std::to_string(i) + "," + std::to_string(j) + ")");
            s.disparity(i, j) = d;
            s.labels[i * W + j] = label;
            s.gt_normals.set(i, j, n);
        }
    if (spec.noise_sigma > 0.0) {
        std::mt19937_64 rng(spec.seed);
        std::normal_distribution<double> noise(0.0, spec.noise_sigma);
        for (double& v : s.disparity.values) v = std::max(0.0, v + noise(rng));
    }
    return s;
}

/// Random street-like layout: ground plane, up to two boxes, maybe one wall.
template <class Rng>
SceneSpec random_scene_spec(std::size_t height, std::size_t width, Rng& rng) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * U(rng); };
    auto pick = [&](std::size_t lo, std::size_t hi) {
        return lo + static_cast<std::size_t>(U(rng) * static_cast<double>(hi - lo + 1)) % (hi - lo + 1);
    };
    SceneSpec s;
    s.height = height;
    s.width = width;
    s.ground_slope = uni(0.2, 0.6);
    s.ground_intercept = uni(2.0, 8.0);
    const std::size_t min_side = std::max<std::size_t>(4, std::min(height, width) / 8);
    const std::size_t max_side = std::max(min_side, std::min(height, width) / 3);
    const std::size_t nboxes = pick(0, 2);
    for (std::size_t k = 0; k < nboxes; ++k) {
        BoxRegion b;
        b.height = pick(min_side, max_side);
        b.width = pick(min_side, max_side);
        b.top = pick(0, height - b.height);
        b.left = pick(0, width - b.width);
        const double base = s.ground_slope * static_cast<double>(b.top + b.height - 1) + s.ground_intercept;
        b.disparity = base + uni(0.5, 6.0);
        s.boxes.push_back(b);
    }
    if (U(rng) < 0.5) {
        WallRegion w;
        w.height = pick(min_side, max_side);
        w.width = pick(min_side, max_side);
        w.top = pick(0, height - w.height);
        w.left = pick(0, width - w.width);
        w.slope = uni(-0.5, 0.5);
        const double base = s.ground_slope * static_cast<double>(w.top + w.height - 1) + s.ground_intercept;
        // keep the wall in front of the ground over its whole width
        const double lowest = std::min(w.slope * static_cast<double>(w.left),
                                       w.slope * static_cast<double>(w.left + w.width - 1));
        w.intercept = base - lowest + uni(0.5, 4.0);
        s.walls.push_back(w);
    }
    return s;
}

/// Single square hole at a uniformly random position, at least one pixel
/// away from every border.
inline HoleMask synth_mask(std::size_t height, std::size_t width, std::size_t hole, std::uint64_t seed) {
    if (hole == 0) throw SpecError("synth_mask: hole side must be positive");
    if (hole + 2 > height || hole + 2 > width)
        throw SpecError("synth_mask: hole of side " + std::to_string(hole) + " does not fit a " + std::to_string(height) +
                        "x" + std::to_string(width) + " image with a one-pixel margin");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> row(1, height - hole - 1), col(1, width - hole - 1);
    const std::size_t top = row(rng), left = col(rng);
    HoleMask m(height, width);
    for (std::size_t i = top; i < top + hole; ++i)
        for (std::size_t j = left; j < left + hole; ++j) m.set(i, j, true);
    return m;
}

}  // namespace depthgan::scene
