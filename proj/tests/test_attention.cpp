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

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

using namespace depthgan;
using namespace depthgan::attention;

namespace {

HoleMask random_mask(std::size_t h, std::size_t w, double p, std::mt19937_64& rng) {
    HoleMask m(h, w);
    std::bernoulli_distribution b(p);
    for (auto& v : m.hole) v = b(rng);
    return m;
}

HoleMask box_mask(std::size_t h, std::size_t w, Box b) {
    HoleMask m(h, w);
    for (std::size_t i = b.top; i < b.top + b.height; ++i)
        for (std::size_t j = b.left; j < b.left + b.width; ++j) m.set(i, j, true);
    return m;
}

double row_sum_error(const Tensor& s) {
    const std::size_t Q = s.dim(0), plane = s.dim(1) * s.dim(2);
    double worst = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
        double t = 0.0;
        for (std::size_t q = 0; q < Q; ++q) t += s[q * plane + i];
        worst = std::max(worst, std::abs(t - 1.0));
    }
    return worst;
}

}  // namespace

TEST(Patches, FullBackgroundCount) {
    const PatchSet ps = extract_patches(Tensor(Shape{1, 5, 5}, 1.0), HoleMask(5, 5), {});
    EXPECT_EQ(ps.count(), 9u);
    EXPECT_EQ(ps.centers.front(), (std::pair<std::size_t, std::size_t>{1, 1}));
    EXPECT_EQ(ps.centers.back(), (std::pair<std::size_t, std::size_t>{3, 3}));
}

TEST(Patches, SingleCornerLeft) {
    HoleMask m(6, 6, 1);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) m.set(i, j, false);
    const PatchSet ps = extract_patches(Tensor(Shape{2, 6, 6}, 1.0), m, {});
    ASSERT_EQ(ps.count(), 1u);
    EXPECT_EQ(ps.centers[0], (std::pair<std::size_t, std::size_t>{1, 1}));
}

TEST(Patches, MatchEnumerationOracle) {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 20; ++t) {
        const Tensor f = random_uniform(Shape{2, 9, 10}, rng);
        const HoleMask m = random_mask(9, 10, 0.1, rng);
        const auto want = oracle::enumerate_patches(f, m, 3);
        if (want.empty()) {
            EXPECT_THROW(extract_patches(f, m, {}), DomainError);
            continue;
        }
        const PatchSet ps = extract_patches(f, m, {});
        ASSERT_EQ(ps.count(), want.size());
        for (std::size_t q = 0; q < want.size(); ++q) {
            EXPECT_EQ(ps.centers[q].first, want[q].ci);
            EXPECT_EQ(ps.centers[q].second, want[q].cj);
            EXPECT_EQ(ps.patch(q).storage(), want[q].values);
        }
    }
}

TEST(Patches, HoleCoveringImageThrows) {
    EXPECT_THROW(extract_patches(Tensor(Shape{1, 5, 5}), HoleMask(5, 5, 1), {}), DomainError);
    EXPECT_THROW(extract_patches(Tensor(Shape{1, 2, 2}), HoleMask(2, 2), {}), DomainError);
    AttentionConfig even;
    even.patch = 4;
    EXPECT_THROW(extract_patches(Tensor(Shape{1, 5, 5}), HoleMask(5, 5), even), SpecError);
}

TEST(Scores, MatchLoopOracleAndRowsSumToOne) {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 10; ++t) {
        const Tensor f = random_uniform(Shape{4, 10, 10}, rng);
        const HoleMask m = box_mask(10, 10, {3, 4, 3, 4});
        const AttentionConfig cfg;
        const PatchSet ps = extract_patches(f, m, cfg);
        const Tensor win = foreground_windows(f, bounding_box(m), 1);
        const Tensor got = attention_scores(win, ps, cfg);
        const Tensor want = oracle::loop_scores(win, oracle::enumerate_patches(f, m, 3), 3, cfg.softmax_scale);
        EXPECT_LT(max_abs_diff(got, want), 1e-9);
        EXPECT_LT(row_sum_error(got), 1e-9);
        for (double v : got.values()) EXPECT_GE(v, 0.0);
    }
}

TEST(Scores, UniqueMatchIsRowMaximum) {
    // one-hot patches: the window equal to patch 0 has cosine 1 with it and 0 with the rest
    Tensor f(Shape{1, 7, 7});
    f.at(0, 1, 1) = 1.0;
    HoleMask m(7, 7);
    m.set(5, 5, true);
    const AttentionConfig cfg;
    const PatchSet ps = extract_patches(f, m, cfg);
    Tensor win(Shape{1, 3, 3});
    win.at(0, 1, 1) = 1.0;
    const Tensor s = attention_scores(win, ps, cfg);
    const auto best = argmax_indices(s);
    EXPECT_EQ(ps.centers[best[0]], (std::pair<std::size_t, std::size_t>{1, 1}));
}

TEST(Scores, IdenticalPatchesGiveUniformRows) {
    const Tensor f(Shape{2, 8, 8}, 0.5);
    const HoleMask m = box_mask(8, 8, {3, 3, 2, 2});
    const AttentionConfig cfg;
    const PatchSet ps = extract_patches(f, m, cfg);
    const Tensor s = attention_scores(foreground_windows(f, bounding_box(m), 1), ps, cfg);
    for (double v : s.values()) EXPECT_NEAR(v, 1.0 / static_cast<double>(ps.count()), 1e-12);
}

TEST(Scores, ZeroWindowAndZeroPatchStayFinite) {
    const Tensor f(Shape{1, 8, 8});
    const HoleMask m = box_mask(8, 8, {3, 3, 2, 2});
    const PatchSet ps = extract_patches(f, m, {});
    const Tensor s = attention_scores(foreground_windows(f, bounding_box(m), 1), ps, {});
    EXPECT_TRUE(s.all_finite());
    EXPECT_LT(row_sum_error(s), 1e-9);
}

TEST(Scores, ChannelMismatchThrows) {
    const Tensor f(Shape{2, 6, 6}, 1.0);
    const HoleMask m = box_mask(6, 6, {2, 2, 1, 1});
    const PatchSet ps = extract_patches(f, m, {});
    EXPECT_THROW(attention_scores(Tensor(Shape{1, 3, 3}), ps, {}), DimensionError);
}

TEST(Propagation, KOneIsIdentity) {
    std::mt19937_64 rng(13);
    const Tensor f = random_uniform(Shape{1, 9, 9}, rng);
    const HoleMask m = box_mask(9, 9, {3, 3, 3, 3});
    const PatchSet ps = extract_patches(f, m, {});
    const Tensor s = random_uniform(Shape{ps.count(), 3, 3}, rng, 0.0, 1.0);
    EXPECT_EQ(propagate_scores(s, ps, 1), s);
}

TEST(Propagation, MatchesShiftSumLoopOracle) {
    std::mt19937_64 rng(14);
    for (int t = 0; t < 5; ++t) {
        const Tensor f = random_uniform(Shape{1, 10, 11}, rng);
        const HoleMask m = box_mask(10, 11, {4, 4, 3, 4});
        const PatchSet ps = extract_patches(f, m, {});
        const Tensor s = random_uniform(Shape{ps.count(), 3, 4}, rng, 0.0, 1.0);
        const auto patches = oracle::enumerate_patches(f, m, 3);
        for (std::size_t k : {3, 5}) {
            EXPECT_LT(max_abs_diff(propagate_scores(s, ps, k), oracle::loop_propagate(s, patches, k / 2)), 1e-12) << k;
        }
    }
}

TEST(Propagation, TwoPixelTrace) {
    // patches centred at (1,1) and (1,2) form a horizontal pair; fg pixels 0 and 1 match them
    const Tensor f(Shape{1, 3, 4}, 1.0);
    HoleMask m(3, 4);
    const PatchSet ps = extract_patches(f, m, {});
    ASSERT_EQ(ps.count(), 2u);
    Tensor s(Shape{2, 1, 2});
    s.at(0, 0, 0) = 1.0;
    s.at(1, 0, 1) = 1.0;
    const Tensor out = propagate_scores(s, ps, 3);
    // pixel 0: own score plus its right neighbour's score for patch 0's right shift
    EXPECT_DOUBLE_EQ(out.at(0, 0, 0), 2.0);
    EXPECT_DOUBLE_EQ(out.at(1, 0, 0), 0.0);
    EXPECT_DOUBLE_EQ(out.at(1, 0, 1), 2.0);
    EXPECT_DOUBLE_EQ(out.at(0, 0, 1), 0.0);
}

TEST(Propagation, EvenKThrows) {
    const PatchSet ps = extract_patches(Tensor(Shape{1, 5, 5}, 1.0), HoleMask(5, 5), {});
    EXPECT_THROW(propagate_scores(Tensor(Shape{ps.count(), 1, 1}), ps, 2), SpecError);
}

TEST(Transfer, SinglePixelWritesItsPatch) {
    std::mt19937_64 rng(15);
    const Tensor f = random_uniform(Shape{2, 7, 7}, rng);
    HoleMask m(7, 7);
    m.set(5, 5, true);
    const PatchSet ps = extract_patches(f, m, {});
    Tensor s(Shape{ps.count(), 1, 1}, 0.01);
    s[4] = 0.9;
    const Tensor out = transfer(s, ps, TransferMode::argmax);
    EXPECT_EQ(out, ps.patch(4));
}

TEST(Transfer, UniformScoresOverIdenticalPatches) {
    const Tensor f(Shape{1, 8, 8}, 3.0);
    const HoleMask m = box_mask(8, 8, {3, 3, 2, 2});
    const PatchSet ps = extract_patches(f, m, {});
    const Tensor s(Shape{ps.count(), 2, 2}, 1.0);
    for (auto mode : {TransferMode::argmax, TransferMode::blend}) {
        const Tensor out = transfer(s, ps, mode);
        for (double v : out.values()) EXPECT_NEAR(v, 3.0, 1e-12);
    }
}

TEST(Transfer, BlendIsDifferentiable) {
    std::mt19937_64 rng(16);
    const Tensor f = random_uniform(Shape{1, 7, 7}, rng);
    const HoleMask m = box_mask(7, 7, {3, 3, 2, 2});
    const PatchSet ps = extract_patches(f, m, {});
    const Tensor w = random_uniform(Shape{1, 4, 4}, rng);
    ad::ScalarFn fn = [&](ad::Graph& g, ad::Var s) {
        return ad::sum(ad::mul(transfer(s, ps, TransferMode::blend), g.constant(w)));
    };
    EXPECT_LT(ad::grad_check(fn, random_uniform(Shape{ps.count(), 2, 2}, rng, 0.5, 1.5)), 1e-4);
}

TEST(Attend, EmptyMaskIsIdentity) {
    std::mt19937_64 rng(17);
    const Tensor f = random_uniform(Shape{4, 8, 8}, rng);
    EXPECT_EQ(attend(f, HoleMask(8, 8), {}).output, f);
    EXPECT_EQ(surface_attention(Tensor(Shape{1, 8, 8}, 2.0), HoleMask(8, 8), {}),
              surface_features(Tensor(Shape{1, 8, 8}, 2.0), 1.0));
}

TEST(Attend, BackgroundUntouched) {
    std::mt19937_64 rng(18);
    for (int t = 0; t < 5; ++t) {
        const Tensor f = random_uniform(Shape{2, 12, 12}, rng);
        const HoleMask m = box_mask(12, 12, {4, 5, 4, 3});
        const Tensor out = attend(f, m, {}).output;
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t i = 0; i < 12; ++i)
                for (std::size_t j = 0; j < 12; ++j)
                    if (!m(i, j)) {
                        EXPECT_EQ(out.at(c, i, j), f.at(c, i, j));
                    }
    }
}

TEST(Attend, ExactCopyIsRecovered) {
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        const auto sc = oracle::translated_copy_scene(1, 32, 32, {16, 16, 8, 8}, -12, -12, seed);
        const AttentionResult res = attend(sc.features, sc.mask, {});
        EXPECT_DOUBLE_EQ(oracle::copy_recovery(sc, res), 1.0) << "seed " << seed;
        EXPECT_LT(row_sum_error(res.scores), 1e-9);
        // interior hole pixels get the copied content back
        for (std::size_t i = 17; i < 23; ++i)
            for (std::size_t j = 17; j < 23; ++j) EXPECT_NEAR(res.output.at(0, i, j), sc.features.at(0, i, j), 1e-12);
    }
}

TEST(Attend, PlaneNormalsAreTransferred) {
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    for (int t = 0; t < 5; ++t) {
        const double a = coef(rng), b = coef(rng);
        DisparityImage d(32, 32);
        for (std::size_t i = 0; i < 32; ++i)
            for (std::size_t j = 0; j < 32; ++j) d(i, j) = a * i + b * j + 40.0;
        const HoleMask m = box_mask(32, 32, {11, 11, 10, 10});
        const Tensor out = surface_attention(d.to_tensor(), m, {}, 1.0 / 64.0);
        const double s = std::sqrt(1 + a * a + b * b);
        const double want[3] = {-a / s, -b / s, 1.0 / s};
        std::size_t good = 0;
        for (std::size_t i = 11; i < 21; ++i)
            for (std::size_t j = 11; j < 21; ++j) {
                bool ok = true;
                for (std::size_t c = 0; c < 3; ++c) ok = ok && std::abs(out.at(c + 1, i, j) - want[c]) <= 0.05;
                good += ok;
            }
        EXPECT_GE(good, 90u) << "trial " << t;
    }
}

TEST(Attend, ConfigValidation) {
    AttentionConfig cfg;
    cfg.k = 2;
    EXPECT_THROW(cfg.validate(), SpecError);
    cfg = {};
    cfg.softmax_scale = 0.0;
    EXPECT_THROW(cfg.validate(), SpecError);
    cfg = {};
    cfg.stride = 0;
    EXPECT_THROW(cfg.validate(), SpecError);
}
