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

#include "depthgan/normals.hpp"

using namespace depthgan;

namespace {

DisparityImage plane(std::size_t h, std::size_t w, double a, double b, double c) {
    DisparityImage d(h, w);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) d(i, j) = a * i + b * j + c;
    return d;
}

DisparityImage random_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
    DisparityImage d(h, w);
    std::uniform_real_distribution<double> u(0.0, 50.0);
    for (double& v : d.values) v = u(rng);
    return d;
}

}  // namespace

TEST(Normals, PlaneInteriorMatchesClosedForm) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> coef(-2.0, 2.0);
    for (int t = 0; t < 10; ++t) {
        const double a = coef(rng), b = coef(rng);
        const NormalMap n = normals_from_disparity(plane(9, 11, a, b, 3.0));
        const double s = std::sqrt(1.0 + a * a + b * b);
        for (std::size_t i = 1; i + 1 < 9; ++i)
            for (std::size_t j = 1; j + 1 < 11; ++j) {
                const auto v = n(i, j);
                EXPECT_NEAR(v[0], -a / s, 1e-6);
                EXPECT_NEAR(v[1], -b / s, 1e-6);
                EXPECT_NEAR(v[2], 1.0 / s, 1e-6);
            }
    }
}

TEST(Normals, FlatIsExactlyUp) {
    const NormalMap n = normals_from_disparity(DisparityImage(5, 6, 12.5));
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 6; ++j) {
            const auto v = n(i, j);
            EXPECT_EQ(v[0], 0.0);
            EXPECT_EQ(v[1], 0.0);
            EXPECT_EQ(v[2], 1.0);
        }
}

TEST(Normals, ReplicateBorderHalvesTheEdgeGradient) {
    // at the first row the stencil sees P[1] - P[0], halved
    const DisparityGradients g = disparity_gradients(plane(4, 4, 2.0, 0.0, 0.0));
    EXPECT_DOUBLE_EQ(g.gi.at(0, 0, 1), 1.0);
    EXPECT_DOUBLE_EQ(g.gi.at(0, 1, 1), 2.0);
    EXPECT_DOUBLE_EQ(g.gi.at(0, 3, 1), 1.0);
}

TEST(Normals, UnitNormAndPositiveZ) {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 20; ++t) {
        const NormalMap n = normals_from_disparity(random_image(7, 9, rng));
        for (std::size_t i = 0; i < 7; ++i)
            for (std::size_t j = 0; j < 9; ++j) {
                const auto v = n(i, j);
                EXPECT_NEAR(std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]), 1.0, 1e-6);
                EXPECT_GT(v[2], 0.0);
            }
    }
}

TEST(Normals, ConstantShiftInvariance) {
    std::mt19937_64 rng(9);
    DisparityImage d = random_image(6, 6, rng);
    DisparityImage e = d;
    for (double& v : e.values) v += 16.0;  // power of two keeps differences exact
    EXPECT_LT(max_abs_diff(normals_from_disparity(d).vectors, normals_from_disparity(e).vectors), 1e-12);
}

TEST(Normals, GraphOpIsBitExactWithPlainFunction) {
    std::mt19937_64 rng(10);
    for (int t = 0; t < 10; ++t) {
        const DisparityImage d = random_image(5 + t, 8, rng);
        EXPECT_EQ(normals_tensor(d.to_tensor()), normals_from_disparity(d).vectors);
    }
}

TEST(Normals, TooSmallImageThrows) {
    EXPECT_THROW(normals_from_disparity(DisparityImage(2, 5)), DimensionError);
    ad::Graph g;
    EXPECT_THROW(normals_op(g.constant(Tensor(Shape{1, 5, 2}))), DimensionError);
    EXPECT_THROW(normals_op(g.constant(Tensor(Shape{2, 5, 5}))), DimensionError);
}

TEST(Normals, OpGradientMatchesFiniteDifferences) {
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        std::mt19937_64 rng(seed);
        const Tensor w = random_uniform(Shape{3, 8, 8}, rng);
        ad::ScalarFn f = [&](ad::Graph& g, ad::Var d) { return ad::sum(ad::mul(normals_op(d), g.constant(w))); };
        EXPECT_LT(ad::grad_check(f, random_uniform(Shape{1, 8, 8}, rng, 0.0, 4.0)), 1e-4) << "seed " << seed;
    }
}

TEST(Normals, SurfaceFeaturesLayout) {
    ad::Graph g;
    const DisparityImage d = plane(6, 6, 0.5, 0.0, 2.0);
    const Tensor f = surface_features(g.constant(d.to_tensor()), 0.25).value();
    ASSERT_EQ(f.shape(), (Shape{4, 6, 6}));
    EXPECT_DOUBLE_EQ(f.at(0, 3, 3), 0.25 * d(3, 3));
    // normals are computed on the unscaled disparity
    EXPECT_NEAR(f.at(1, 3, 3), -0.5 / std::sqrt(1.25), 1e-12);
}
