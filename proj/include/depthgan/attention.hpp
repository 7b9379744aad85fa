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

// Patch attention over disparity ⊕ normal features.
//
// Background patches (fully outside the hole) become convolution kernels.
// Every pixel of the hole bounding box (the foreground) is scored against
// every patch by cosine similarity followed by a softmax over patches. The
// scores are then summed along horizontal and vertical shifts of size k so
// neighbouring pixels agree on consistently shifted patches. Finally the
// best patch of each foreground pixel is written back by transposed
// convolution, averaging overlapping windows.
//
// Score tensors are laid out [Q,Hf,Wf]: one channel per patch.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "depthgan/autodiff.hpp"
#include "depthgan/image.hpp"
#include "depthgan/normals.hpp"

namespace depthgan::attention {

using ad::Var;

enum class TransferMode { argmax, blend };

struct AttentionConfig {
    std::size_t patch = 3;
    std::size_t k = 3;
    double softmax_scale = 10.0;
    std::size_t stride = 1;
    TransferMode mode = TransferMode::argmax;

    std::size_t radius() const { return patch / 2; }

    void validate() const {
        if (patch % 2 == 0) throw SpecError("attention: patch size must be odd");
        if (k % 2 == 0) throw SpecError("attention: propagation kernel must be odd");
        if (!(softmax_scale > 0.0)) throw SpecError("attention: softmax_scale must be > 0");
        if (stride == 0) throw SpecError("attention: stride must be positive");
    }
};

inline constexpr double kCosineEps = 1e-8;

/// Background patches of a [C,H,W] feature map.
struct PatchSet {
    std::size_t channels = 0;
    std::size_t side = 0;
    std::size_t image_height = 0, image_width = 0;
    Tensor kernels;     // [Q,C,p,p] raw values
    Tensor normalized;  // [Q,C,p,p] scaled to unit norm (eps-guarded)
    std::vector<std::pair<std::size_t, std::size_t>> centers;
    std::vector<long> index;  // image pixel -> patch id centred there, or -1

    std::size_t count() const { return centers.size(); }

    long at(long i, long j) const {
        if (i < 0 || j < 0 || i >= static_cast<long>(image_height) || j >= static_cast<long>(image_width)) return -1;
        return index[static_cast<std::size_t>(i) * image_width + static_cast<std::size_t>(j)];
    }

    Tensor patch(std::size_t q) const {
        const std::size_t n = channels * side * side;
        Tensor t(Shape{channels, side, side});
        std::copy_n(kernels.values().begin() + q * n, n, t.values().begin());
        return t;
    }
};

/// Patches whose whole window lies in the background, row-major by centre.
inline PatchSet extract_patches(const Tensor& features, const HoleMask& mask, const AttentionConfig& cfg) {
    cfg.validate();
    if (features.rank() != 3) throw DimensionError("extract_patches: expected [C,H,W]");
    const std::size_t C = features.dim(0), H = features.dim(1), W = features.dim(2), r = cfg.radius(),
                      p = cfg.patch;
    if (mask.height != H || mask.width != W) throw DimensionError("extract_patches: mask size differs from features");
    PatchSet ps;
    ps.channels = C;
    ps.side = p;
    ps.image_height = H;
    ps.image_width = W;
    ps.index.assign(H * W, -1);
    std::vector<double> raw;
    if (H >= p && W >= p) {
        // integral image of the mask for O(1) window tests
        std::vector<long> sat((H + 1) * (W + 1), 0);
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j)
                sat[(i + 1) * (W + 1) + j + 1] = mask(i, j) + sat[i * (W + 1) + j + 1] + sat[(i + 1) * (W + 1) + j] -
                                                 sat[i * (W + 1) + j];
        for (std::size_t i = r; i + r < H; i += cfg.stride)
            for (std::size_t j = r; j + r < W; j += cfg.stride) {
                const std::size_t y0 = i - r, x0 = j - r, y1 = i + r + 1, x1 = j + r + 1;
                const long holes = sat[y1 * (W + 1) + x1] - sat[y0 * (W + 1) + x1] - sat[y1 * (W + 1) + x0] +
                                   sat[y0 * (W + 1) + x0];
                if (holes != 0) continue;
                ps.index[i * W + j] = static_cast<long>(ps.centers.size());
                ps.centers.emplace_back(i, j);
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t u = 0; u < p; ++u)
                        for (std::size_t v = 0; v < p; ++v) raw.push_back(features.at(c, y0 + u, x0 + v));
            }
    }
    if (ps.centers.empty()) throw DomainError("extract_patches: hole covers image, no background patch available");
    const std::size_t Q = ps.centers.size(), n = C * p * p;
    ps.kernels = Tensor(Shape{Q, C, p, p}, std::move(raw));
    ps.normalized = Tensor(ps.kernels.shape());
    for (std::size_t q = 0; q < Q; ++q) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += ps.kernels[q * n + i] * ps.kernels[q * n + i];
        const double inv = 1.0 / std::sqrt(s + kCosineEps);
        for (std::size_t i = 0; i < n; ++i) ps.normalized[q * n + i] = ps.kernels[q * n + i] * inv;
    }
    return ps;
}

/// Foreground windows: the box grown by the patch radius, replicate-padded
/// where it leaves the image. [C, h+2r, w+2r]
inline Var foreground_windows(Var features, const Box& box, std::size_t radius) {
    Var padded = ad::pad(features, radius, ad::PadMode::replicate);
    return ad::crop(padded, box.top, box.left, box.height + 2 * radius, box.width + 2 * radius);
}

/// softmax_q(scale * cos(window(p), patch q)) -> [Q,Hf,Wf]
inline Var attention_scores(Var windows, const PatchSet& patches, const AttentionConfig& cfg) {
    if (windows.shape().size() != 3 || windows.shape()[0] != patches.channels)
        throw DimensionError("attention_scores: window channels differ from patch channels");
    ad::Graph& g = windows.graph();
    const std::size_t Q = patches.count(), p = patches.side;
    Var dots = ad::conv_valid(windows, g.constant(patches.normalized), 1);
    Var sq = ad::channel_sum(ad::mul(windows, windows));
    Var wn2 = ad::conv_valid(sq, g.constant(Tensor(Shape{1, 1, p, p}, 1.0)), 1);
    Var wnorm = ad::sqrt(ad::shift(wn2, kCosineEps));
    Var logits = ad::scale(ad::div(dots, ad::expand_channels(wnorm, Q)), cfg.softmax_scale);

    const Tensor& lv = logits.value();
    const std::size_t plane = lv.dim(1) * lv.dim(2);
    Tensor peak(Shape{1, lv.dim(1), lv.dim(2)}, -std::numeric_limits<double>::infinity());
    for (std::size_t q = 0; q < Q; ++q)
        for (std::size_t i = 0; i < plane; ++i) peak[i] = std::max(peak[i], lv[q * plane + i]);
    Var e = ad::exp(ad::sub(logits, ad::expand_channels(g.constant(std::move(peak)), Q)));
    return ad::div(e, ad::expand_channels(ad::channel_sum(e), Q));
}

namespace detail {

/// out[q,y,x] = sum_t s[shift_t(q), y, x+t] (or y+t for the vertical pass).
/// Self-adjoint, so the backward pass is the same operator.
inline Var shift_sum(Var s, std::shared_ptr<const std::vector<long>> table, std::size_t radius, bool horizontal) {
    return s.graph().record(
        horizontal ? "propagate_lr" : "propagate_td", {s},
        [table, radius, horizontal](std::span<const Tensor* const> in) {
            const Tensor& t = *in[0];
            const std::size_t Q = t.dim(0), Hf = t.dim(1), Wf = t.dim(2), taps = 2 * radius + 1;
            Tensor out(t.shape());
            for (std::size_t q = 0; q < Q; ++q)
                for (std::size_t ti = 0; ti < taps; ++ti) {
                    const long src = (*table)[q * taps + ti];
                    if (src < 0) continue;
                    const long off = static_cast<long>(ti) - static_cast<long>(radius);
                    for (std::size_t y = 0; y < Hf; ++y)
                        for (std::size_t x = 0; x < Wf; ++x) {
                            const long yy = horizontal ? static_cast<long>(y) : static_cast<long>(y) + off;
                            const long xx = horizontal ? static_cast<long>(x) + off : static_cast<long>(x);
                            if (yy < 0 || xx < 0 || yy >= static_cast<long>(Hf) || xx >= static_cast<long>(Wf)) continue;
                            out.at(q, y, x) += t.at(static_cast<std::size_t>(src), yy, xx);
                        }
                }
            return out;
        },
        [table, radius, horizontal](std::span<const Var>, Var, Var g) {
            return std::vector<Var>{shift_sum(g, table, radius, horizontal)};
        });
}

inline std::shared_ptr<const std::vector<long>> shift_table(const PatchSet& ps, std::size_t radius, bool horizontal) {
    const std::size_t taps = 2 * radius + 1;
    auto table = std::make_shared<std::vector<long>>(ps.count() * taps, -1);
    for (std::size_t q = 0; q < ps.count(); ++q)
        for (std::size_t ti = 0; ti < taps; ++ti) {
            const long off = static_cast<long>(ti) - static_cast<long>(radius);
            const long ci = static_cast<long>(ps.centers[q].first) + (horizontal ? 0 : off);
            const long cj = static_cast<long>(ps.centers[q].second) + (horizontal ? off : 0);
            (*table)[q * taps + ti] = ps.at(ci, cj);
        }
    return table;
}

}  // namespace detail

/// Left-right then top-down score propagation over a k-window. k = 1 is the identity.
inline Var propagate_scores(Var scores, const PatchSet& patches, std::size_t k) {
    if (k % 2 == 0) throw SpecError("propagate_scores: k must be odd");
    if (scores.shape().size() != 3 || scores.shape()[0] != patches.count())
        throw DimensionError("propagate_scores: score channels differ from patch count");
    if (k == 1) return scores;
    const std::size_t r = k / 2;
    Var lr = detail::shift_sum(scores, detail::shift_table(patches, r, true), r, true);
    return detail::shift_sum(lr, detail::shift_table(patches, r, false), r, false);
}

/// Per foreground pixel, the highest-scored patch id (lowest id on ties).
inline std::vector<std::size_t> argmax_indices(const Tensor& scores) {
    const std::size_t Q = scores.dim(0), plane = scores.dim(1) * scores.dim(2);
    std::vector<std::size_t> best(plane, 0);
    std::vector<double> val(plane, -std::numeric_limits<double>::infinity());
    for (std::size_t q = 0; q < Q; ++q)
        for (std::size_t i = 0; i < plane; ++i)
            if (scores[q * plane + i] > val[i]) {
                val[i] = scores[q * plane + i];
                best[i] = q;
            }
    return best;
}

/// Writes patches back around each foreground pixel: [Q,Hf,Wf] -> [C,Hf+2r,Wf+2r].
/// Rows are renormalized first; overlapping windows are averaged.
inline Var transfer(Var scores, const PatchSet& patches, TransferMode mode) {
    if (scores.shape().size() != 3 || scores.shape()[0] != patches.count())
        throw DimensionError("transfer: score channels differ from patch count");
    ad::Graph& g = scores.graph();
    const std::size_t Q = patches.count(), Hf = scores.shape()[1], Wf = scores.shape()[2], p = patches.side;
    Var rows = ad::div(scores, ad::expand_channels(ad::channel_sum(scores), Q));
    Var weights;
    if (mode == TransferMode::argmax) {
        const auto best = argmax_indices(rows.value());
        Tensor onehot(Shape{Q, Hf, Wf});
        for (std::size_t i = 0; i < best.size(); ++i) onehot[best[i] * Hf * Wf + i] = 1.0;
        weights = g.constant(std::move(onehot));
    } else {
        weights = rows;
    }
    const Shape out{patches.channels, Hf + p - 1, Wf + p - 1};
    Var pasted = ad::tconv_valid(weights, g.constant(patches.kernels), 1, out);
    Tensor counts = ad::kernels::tconv_valid(Tensor(Shape{1, Hf, Wf}, 1.0), Tensor(Shape{1, 1, p, p}, 1.0), 1,
                                         Shape{1, Hf + p - 1, Wf + p - 1});
    return ad::div(pasted, ad::expand_channels(g.constant(std::move(counts)), patches.channels));
}

struct AttentionResult {
    Box box;
    Tensor scores;      // softmax scores [Q,Hf,Wf]
    Tensor propagated;  // after propagation [Q,Hf,Wf]
    std::vector<std::size_t> argmax_index;  // per foreground pixel, row-major in the box
    Tensor transferred;  // [C,Hf+2r,Wf+2r]
    Tensor output;       // [C,H,W], hole pixels replaced
    PatchSet patches;
};

/// Whole attention pass on a feature map. Background pixels are returned unchanged.
inline Var attend(Var features, const HoleMask& mask, const AttentionConfig& cfg, AttentionResult* detail = nullptr) {
    cfg.validate();
    if (features.shape().size() != 3) throw DimensionError("attend: expected [C,H,W]");
    const std::size_t C = features.shape()[0], H = features.shape()[1], W = features.shape()[2], r = cfg.radius();
    if (mask.height != H || mask.width != W) throw DimensionError("attend: mask size differs from features");
    const Box box = bounding_box(mask);
    if (box.empty()) {
        if (detail) {
            detail->box = box;
            detail->output = features.value();
        }
        return features;
    }
    PatchSet patches = extract_patches(features.value(), mask, cfg);
    Var windows = foreground_windows(features, box, r);
    Var scores = attention_scores(windows, patches, cfg);
    Var prop = propagate_scores(scores, patches, cfg.k);
    Var moved = transfer(prop, patches, cfg.mode);
    Var core = ad::crop(moved, r, r, box.height, box.width);
    Var placed = ad::uncrop(core, box.top, box.left, H, W);
    Var out = ad::select(mask.to_tensor(C), placed, features);
    if (detail) {
        detail->box = box;
        detail->scores = scores.value();
        detail->propagated = prop.value();
        Tensor rows = prop.value();
        detail->argmax_index = argmax_indices(rows);
        detail->transferred = moved.value();
        detail->output = out.value();
        detail->patches = std::move(patches);
    }
    return out;
}

inline AttentionResult attend(const Tensor& features, const HoleMask& mask, const AttentionConfig& cfg) {
    ad::Graph g;
    g.set_grad_enabled(false);
    AttentionResult res;
    attend(g.constant(features), mask, cfg, &res);
    return res;
}

/// Attention over coarse ⊕ normals(coarse). coarse is [1,H,W] in pixels;
/// `disparity_weight` scales the disparity channel of the features.
inline Var surface_attention(Var coarse, const HoleMask& mask, const AttentionConfig& cfg,
                             double disparity_weight = 1.0, AttentionResult* detail = nullptr) {
    return attend(surface_features(coarse, disparity_weight), mask, cfg, detail);
}

inline Tensor surface_attention(const Tensor& coarse, const HoleMask& mask, const AttentionConfig& cfg,
                                double disparity_weight = 1.0, AttentionResult* detail = nullptr) {
    ad::Graph g;
    g.set_grad_enabled(false);
    return surface_attention(g.constant(coarse), mask, cfg, disparity_weight, detail).value();
}

// Plain-tensor wrappers.

inline Tensor attention_scores(const Tensor& windows, const PatchSet& patches, const AttentionConfig& cfg) {
    ad::Graph g;
    g.set_grad_enabled(false);
    return attention_scores(g.constant(windows), patches, cfg).value();
}

inline Tensor propagate_scores(const Tensor& scores, const PatchSet& patches, std::size_t k) {
    ad::Graph g;
    g.set_grad_enabled(false);
    return propagate_scores(g.constant(scores), patches, k).value();
}

inline Tensor transfer(const Tensor& scores, const PatchSet& patches, TransferMode mode = TransferMode::argmax) {
    ad::Graph g;
    g.set_grad_enabled(false);
    return transfer(g.constant(scores), patches, mode).value();
}

inline Tensor foreground_windows(const Tensor& features, const Box& box, std::size_t radius) {
    ad::Graph g;
    g.set_grad_enabled(false);
    return foreground_windows(g.constant(features), box, radius).value();
}

}  // namespace depthgan::attention
