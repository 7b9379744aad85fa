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

// Surface normals from disparity gradients.
//
// With central differences Gi = (P[i+1,j] - P[i-1,j]) / 2 and
// Gj = (P[i,j+1] - P[i,j-1]) / 2, the tangents (1,0,Gi) and (0,1,Gj) span
// the local surface and their cross product is v = (-Gi, -Gj, 1). The normal
// is n = v / |v|, and |v| >= 1 so no epsilon is added. Borders replicate the
// edge row/column.
//
// normals_from_disparity and normals_op perform the same floating-point
// operations in the same order, so they agree bit for bit.

#pragma once

#include <cmath>
#include <utility>

#include "depthgan/autodiff.hpp"
#include "depthgan/image.hpp"

namespace depthgan {

struct DisparityGradients {
    Tensor gi;  // [1,H,W], along rows
    Tensor gj;  // [1,H,W], along columns
};

inline void require_normal_size(std::size_t h, std::size_t w) {
    if (h < 3 || w < 3)
        throw DimensionError("normals: image must be at least 3x3, got " + std::to_string(h) + "x" + std::to_string(w));
}

inline DisparityGradients disparity_gradients(const DisparityImage& d) {
    require_normal_size(d.height, d.width);
    const std::size_t H = d.height, W = d.width;
    DisparityGradients g{Tensor(Shape{1, H, W}), Tensor(Shape{1, H, W})};
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
            const std::size_t ip = std::min(i + 1, H - 1), im = i == 0 ? 0 : i - 1;
            const std::size_t jp = std::min(j + 1, W - 1), jm = j == 0 ? 0 : j - 1;
            g.gi.at(0, i, j) = (d(ip, j) - d(im, j)) / 2.0;
            g.gj.at(0, i, j) = (d(i, jp) - d(i, jm)) / 2.0;
        }
    return g;
}

inline std::array<double, 3> normal_from_gradients(double gi, double gj) {
    // |(-gi, -gj, 1)| >= 1, so the division needs no guard
    const double den = std::sqrt(gi * gi + gj * gj + 1.0);
    return {-gi / den, -gj / den, 1.0 / den};
}

inline NormalMap normals_from_disparity(const DisparityImage& d) {
    const DisparityGradients g = disparity_gradients(d);
    NormalMap n(d.height, d.width);
    for (std::size_t i = 0; i < d.height; ++i)
        for (std::size_t j = 0; j < d.width; ++j) n.set(i, j, normal_from_gradients(g.gi.at(0, i, j), g.gj.at(0, i, j)));
    return n;
}

/// Fixed [1,1,3,3] central-difference kernels, one per axis.
inline std::pair<Tensor, Tensor> central_difference_kernels() {
    Tensor ki(Shape{1, 1, 3, 3}), kj(Shape{1, 1, 3, 3});
    ki[0 * 3 + 1] = -0.5;
    ki[2 * 3 + 1] = 0.5;
    kj[1 * 3 + 0] = -0.5;
    kj[1 * 3 + 2] = 0.5;
    return {ki, kj};
}

/// Differentiable normals: d [1,H,W] -> [3,H,W].
inline ad::Var normals_op(ad::Var d) {
    if (d.shape().size() != 3 || d.shape()[0] != 1)
        throw DimensionError("normals_op: expected [1,H,W], got " + shape_str(d.shape()));
    require_normal_size(d.shape()[1], d.shape()[2]);
    ad::Graph& g = d.graph();
    auto [ki, kj] = central_difference_kernels();
    ad::Var padded = ad::pad(d, 1, ad::PadMode::replicate);
    ad::Var gi = ad::conv_valid(padded, g.constant(std::move(ki)), 1);
    ad::Var gj = ad::conv_valid(padded, g.constant(std::move(kj)), 1);
    ad::Var den = ad::sqrt(ad::shift(ad::add(ad::mul(gi, gi), ad::mul(gj, gj)), 1.0));
    ad::Var one = g.constant(Tensor(gi.shape(), 1.0));
    return ad::concat_channels({ad::div(ad::neg(gi), den), ad::div(ad::neg(gj), den), ad::div(one, den)});
}

/// Convenience for already-detached tensors.
inline Tensor normals_tensor(const Tensor& d) {
    ad::Graph g;
    g.set_grad_enabled(false);
    return normals_op(g.constant(d)).value();
}

/// Disparity (channel 0) concatenated with its normals: [1,H,W] -> [4,H,W].
/// `disparity_weight` rescales channel 0 only; normals always see raw pixels.
inline ad::Var surface_features(ad::Var d, double disparity_weight = 1.0) {
    ad::Var n = normals_op(d);
    return ad::concat_channels({disparity_weight == 1.0 ? d : ad::scale(d, disparity_weight), n});
}

inline Tensor surface_features(const Tensor& d, double disparity_weight = 1.0) {
    ad::Graph g;
    g.set_grad_enabled(false);
    return surface_features(g.constant(d), disparity_weight).value();
}

}  // namespace depthgan
