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

#include "depthgan/losses.hpp"

using namespace depthgan;
using ad::Graph;
using ad::Var;

namespace {

Tensor plane(std::size_t h, std::size_t w, double a, double b, double c) {
    Tensor t(Shape{1, h, w});
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) t.at(0, i, j) = a * i + b * j + c;
    return t;
}

}  // namespace

TEST(L1, ValueAndErrors) {
    Graph g;
    Var x = g.constant(Tensor(Shape{1, 2, 2}, std::vector<double>{1, 2, 3, 4}));
    Var y = g.constant(Tensor(Shape{1, 2, 2}, std::vector<double>{2, 2, 1, 4}));
    EXPECT_DOUBLE_EQ(losses::l1_loss(x, y).value().item(), 0.75);
    EXPECT_THROW(losses::l1_loss(x, g.constant(Tensor(Shape{1, 2, 3}))), DimensionError);
}

TEST(Vectorial, ZeroOnIdenticalAndShiftedMaps) {
    Graph g;
    Var a = g.constant(plane(6, 6, 0.3, -0.2, 5.0));
    Var b = g.constant(plane(6, 6, 0.3, -0.2, 9.0));
    EXPECT_EQ(losses::vectorial_loss(normals_op(a), normals_op(a)).value().item(), 0.0);
    // a constant offset leaves every normal unchanged
    EXPECT_NEAR(losses::vectorial_loss(normals_op(a), normals_op(b)).value().item(), 0.0, 1e-12);
}

TEST(Vectorial, ClosedFormOnTwoConstantMaps) {
    Graph g;
    Tensor up(Shape{3, 4, 4}), side(Shape{3, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) {
        up[2 * 16 + i] = 1.0;
        side[0 * 16 + i] = 1.0;
    }
    // |(0,0,1) - (1,0,0)|_1 = 2 per pixel
    EXPECT_DOUBLE_EQ(losses::vectorial_loss(g.constant(up), g.constant(side)).value().item(), 2.0);
    Tensor region(Shape{1, 4, 4});
    region[5] = 1.0;
    EXPECT_DOUBLE_EQ(losses::vectorial_loss(g.constant(up), g.constant(side), &region).value().item(), 2.0);
    EXPECT_THROW(losses::vectorial_loss(g.constant(up), g.constant(side), &(region = Tensor(Shape{1, 4, 4}))),
                 DomainError);
}

TEST(Vectorial, GradientMatchesFiniteDifferences) {
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        std::mt19937_64 rng(seed);
        const Tensor target = random_uniform(Shape{1, 8, 8}, rng, 0.0, 4.0);
        ad::ScalarFn f = [&](Graph& g, Var d) {
            return losses::vectorial_loss(normals_op(d), normals_op(g.constant(target)));
        };
        EXPECT_LT(ad::grad_check(f, random_uniform(Shape{1, 8, 8}, rng, 0.0, 4.0)), 1e-4) << "seed " << seed;
    }
}

TEST(L1, GradientMatchesFiniteDifferences) {
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        std::mt19937_64 rng(seed);
        const Tensor target = random_uniform(Shape{1, 8, 8}, rng);
        ad::ScalarFn f = [&](Graph& g, Var d) { return losses::l1_loss(d, g.constant(target)); };
        EXPECT_LT(ad::grad_check(f, random_uniform(Shape{1, 8, 8}, rng)), 1e-4) << "seed " << seed;
    }
}

TEST(GradientPenalty, LinearCriticHasConstantGradientNorm) {
    // D(x) = <w, x> has |grad| = |w| everywhere
    std::mt19937_64 rng(3);
    Graph g;
    const Tensor w = random_uniform(Shape{4, 5, 5}, rng);
    auto critic = [&](Var x) { return ad::sum(ad::mul(x, x.graph().constant(w))); };
    Var real = g.constant(random_uniform(Shape{4, 5, 5}, rng));
    Var fake = g.constant(random_uniform(Shape{4, 5, 5}, rng));
    const double norm = std::sqrt(dot(w, w));
    for (double u : {0.0, 0.3, 1.0})
        EXPECT_NEAR(losses::gradient_penalty(critic, real, fake, u).value().item(), (norm - 1) * (norm - 1), 1e-9);
}

TEST(GradientPenalty, ConstantCriticGivesOne) {
    Graph g;
    auto critic = [](Var x) { return ad::scale(ad::sum(x), 0.0); };
    Var a = g.constant(Tensor(Shape{4, 3, 3}, 1.0));
    EXPECT_EQ(losses::gradient_penalty(critic, a, a, 0.5).value().item(), 1.0);
}

TEST(GradientPenalty, SumCriticOnFourElements) {
    // grad = ones, |grad| = 2, (2 - 1)^2 = 1
    Graph g;
    auto critic = [](Var x) { return ad::sum(x); };
    std::mt19937_64 rng(2);
    Var real = g.constant(random_uniform(Shape{4, 1, 1}, rng));
    Var fake = g.constant(random_uniform(Shape{4, 1, 1}, rng));
    EXPECT_EQ(losses::gradient_penalty(critic, real, fake, 0.25).value().item(), 1.0);
}

TEST(GradientPenalty, ZeroGradientStillHasFiniteParameterGradient) {
    Graph g;
    Var w = g.param(Tensor::scalar(0.0));
    auto critic = [&](Var x) { return ad::mul(ad::sum(x), w); };
    Var a = g.constant(Tensor(Shape{4, 2, 2}, 1.0));
    g.backward(losses::gradient_penalty(critic, a, a, 0.5));
    EXPECT_TRUE(std::isfinite(g.grad(w).item()));
}

TEST(GradientPenalty, IsDifferentiableInCriticParameters) {
    // D(x) = sum(leaky(k * x)); GP as a function of k checked by finite differences
    std::mt19937_64 rng(4);
    const Tensor real = random_uniform(Shape{4, 6, 6}, rng);
    const Tensor fake = random_uniform(Shape{4, 6, 6}, rng);
    const Tensor v = random_uniform(Shape{2, 6, 6}, rng);
    ad::ScalarFn f = [&](Graph& g, Var k) {
        auto critic = [&](Var x) {
            Var h = ad::leaky_relu(ad::conv2d_same(x, ad::reshape(k, Shape{2, 4, 3, 3})), 0.2);
            return ad::sum(ad::mul(ad::mul(h, h), g.constant(v)));
        };
        return losses::gradient_penalty(critic, g.constant(real), g.constant(fake), 0.37);
    };
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        std::mt19937_64 r(seed);
        EXPECT_LT(ad::grad_check(f, random_uniform(Shape{72}, r, -0.3, 0.3)), 1e-4) << "seed " << seed;
    }
}

TEST(GradientPenalty, NonScalarCriticIsAContractError) {
    Graph g;
    Var a = g.constant(Tensor(Shape{4, 3, 3}, 1.0));
    EXPECT_THROW(losses::gradient_penalty([](Var x) { return x; }, a, a, 0.5), ContractError);
}

TEST(CriticLoss, ComposesWassersteinAndPenalty) {
    std::mt19937_64 rng(5);
    Graph g;
    const Tensor w = random_uniform(Shape{4, 4, 4}, rng);
    auto critic = [&](Var x) { return ad::sum(ad::mul(x, x.graph().constant(w))); };
    Var real = g.constant(random_uniform(Shape{4, 4, 4}, rng));
    Var fake = g.constant(random_uniform(Shape{4, 4, 4}, rng));
    losses::LossWeights lw;
    const auto cl = losses::critic_loss(critic, real, fake, lw, 0.5);
    const double dr = dot(w, real.value()), df = dot(w, fake.value());
    EXPECT_NEAR(cl.wasserstein.value().item(), dr - df, 1e-12);
    EXPECT_NEAR(cl.total.value().item(), df - dr + lw.lambda_gp * cl.penalty.value().item(), 1e-12);
}

TEST(CriticLoss, RejectsWrongChannelCount) {
    Graph g;
    Var one = g.constant(Tensor(Shape{1, 4, 4}));
    auto critic = [](Var x) { return ad::sum(x); };
    EXPECT_THROW(losses::critic_loss(critic, one, one, {}, 0.5), ContractError);
    EXPECT_NO_THROW(losses::critic_loss(critic, one, one, {}, 0.5, 1));
}

TEST(GeneratorLoss, WeightedSumOverStages) {
    std::mt19937_64 rng(6);
    Graph g;
    Var target = g.constant(random_uniform(Shape{1, 6, 6}, rng, 0.0, 3.0));
    Var coarse = g.constant(random_uniform(Shape{1, 6, 6}, rng, 0.0, 3.0));
    Var fine = g.constant(random_uniform(Shape{1, 6, 6}, rng, 0.0, 3.0));
    auto critic = [](Var d) { return ad::scale(ad::sum(d), 0.1); };
    losses::LossWeights w;
    w.beta = 0.5;
    w.phi = 2.0;
    w.alpha = 3.0;
    const Var stages[] = {coarse, fine};
    const auto gl = losses::generator_loss(critic, stages, target, w);
    const double l1 = losses::l1_loss(coarse, target).value().item() + losses::l1_loss(fine, target).value().item();
    const double vec = losses::vectorial_loss(normals_op(coarse), normals_op(target)).value().item() +
                       losses::vectorial_loss(normals_op(fine), normals_op(target)).value().item();
    const double adv = -0.1 * ad::sum(fine).value().item();
    EXPECT_NEAR(gl.report.g_l1, l1, 1e-12);
    EXPECT_NEAR(gl.report.g_vec, vec, 1e-12);
    EXPECT_NEAR(gl.report.g_adv, adv, 1e-12);
    EXPECT_NEAR(gl.report.g_total, 0.5 * adv + 2.0 * l1 + 3.0 * vec, 1e-12);
}

TEST(GeneratorLoss, AlphaZeroReducesExactlyToBaselineShape) {
    std::mt19937_64 rng(7);
    Graph g;
    Var target = g.constant(random_uniform(Shape{1, 6, 6}, rng, 0.0, 3.0));
    Var out = g.constant(random_uniform(Shape{1, 6, 6}, rng, 0.0, 3.0));
    auto critic = [](Var d) { return ad::mean(d); };
    losses::LossWeights w;
    w.alpha = 0.0;
    const Var stages[] = {out};
    const auto gl = losses::generator_loss(critic, stages, target, w);
    EXPECT_EQ(gl.report.g_total, w.beta * gl.report.g_adv + w.phi * gl.report.g_l1);
}

TEST(GeneratorLoss, EndToEndGradientThroughTwoLayerNet) {
    std::mt19937_64 rng(8);
    const Tensor input = random_uniform(Shape{2, 8, 8}, rng);
    const Tensor target = random_uniform(Shape{1, 8, 8}, rng, 0.0, 2.0);
    const Tensor k2 = random_uniform(Shape{1, 3, 3, 3}, rng, -0.3, 0.3);
    ad::ScalarFn f = [&](Graph& g, Var k1) {
        Var h = ad::leaky_relu(ad::conv2d_same(g.constant(input), ad::reshape(k1, Shape{3, 2, 3, 3})), 0.2);
        Var coarse = ad::conv2d_same(h, g.constant(k2));
        Var fine = ad::add(coarse, ad::scale(ad::tanh(coarse), 0.1));
        auto critic = [](Var d) { return ad::mean(ad::mul(d, d)); };
        const Var stages[] = {coarse, fine};
        return losses::generator_loss(critic, stages, g.constant(target), {}).total;
    };
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        std::mt19937_64 r(seed);
        EXPECT_LT(ad::grad_check(f, random_uniform(Shape{54}, r, -0.3, 0.3)), 1e-4) << "seed " << seed;
    }
}

TEST(LossWeights, Validation) {
    losses::LossWeights w;
    EXPECT_NO_THROW(w.validate());
    w.n_critic = 0;
    EXPECT_THROW(w.validate(), SpecError);
    w = {};
    w.alpha = -1;
    EXPECT_THROW(w.validate(), SpecError);
}

TEST(GradientPenalty, MatchesFiniteDifferenceInnerGradient) {
    std::mt19937_64 rng(9);
    const Tensor k1 = random_uniform(Shape{3, 1, 3, 3}, rng, -0.5, 0.5);
    const Tensor k2 = random_uniform(Shape{1, 3, 3, 3}, rng, -0.5, 0.5);
    auto critic = [&](Var x) {
        Graph& g = x.graph();
        Var h = ad::leaky_relu(ad::conv2d_same(x, g.constant(k1)), 0.2);
        return ad::mean(ad::conv2d_same(h, g.constant(k2)));
    };
    const Tensor real = random_uniform(Shape{1, 8, 8}, rng);
    const Tensor fake = random_uniform(Shape{1, 8, 8}, rng);
    const double u = 0.6;
    Tensor mix(real.shape());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = u * real[i] + (1 - u) * fake[i];
    auto eval = [&](const Tensor& t) {
        Graph g;
        g.set_grad_enabled(false);
        return critic(g.constant(t)).value().item();
    };
    double sq = 0.0;
    const double h = 1e-6;
    for (std::size_t i = 0; i < mix.size(); ++i) {
        Tensor p = mix, m = mix;
        p[i] += h;
        m[i] -= h;
        const double d = (eval(p) - eval(m)) / (2 * h);
        sq += d * d;
    }
    const double oracle = (std::sqrt(sq) - 1.0) * (std::sqrt(sq) - 1.0);
    Graph g;
    EXPECT_NEAR(losses::gradient_penalty(critic, g.constant(real), g.constant(fake), u).value().item(), oracle, 1e-3);
}
