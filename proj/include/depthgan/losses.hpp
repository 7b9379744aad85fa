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

// Training objectives.
//
//   generator: g = beta * adv + phi * L1 + alpha * V
//   critic:    d = mean(D(fake)) - mean(D(real)) + lambda_gp * GP
//
// V is the vectorial loss, the per-pixel L1 distance between normal maps.
// L1 and V are summed over the coarse and the final generator stage.

#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "depthgan/autodiff.hpp"
#include "depthgan/normals.hpp"

namespace depthgan::losses {

using ad::Var;

struct LossWeights {
    double beta = 0.001;
    double phi = 1.0;
    double alpha = 1.0;
    double lambda_gp = 10.0;
    int n_critic = 5;

    void validate() const {
        for (double v : {beta, phi, alpha, lambda_gp})
            if (!std::isfinite(v)) throw SpecError("loss weights must be finite");
        if (phi <= 0.0) throw SpecError("phi must be > 0");
        if (alpha < 0.0) throw SpecError("alpha must be >= 0");
        if (n_critic < 1) throw SpecError("n_critic must be >= 1");
    }
};

struct LossReport {
    double g_total = 0, g_adv = 0, g_l1 = 0, g_vec = 0;
    double d_total = 0, d_wasserstein_estimate = 0, d_gp = 0;
};

inline constexpr double kPenaltyEps = 1e-8;

inline void require_same_shape(Var a, Var b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

/// mean |x - y|
inline Var l1_loss(Var x, Var y) {
    require_same_shape(x, y, "l1_loss");
    return ad::mean(ad::abs(ad::sub(x, y)));
}

/// Mean over pixels of sum_c |xn - yn|. With `region` ([1,H,W] of 0/1) the
/// mean runs over region pixels only.
inline Var vectorial_loss(Var xn, Var yn, const Tensor* region = nullptr) {
    require_same_shape(xn, yn, "vectorial_loss");
    if (xn.shape().size() != 3) throw DimensionError("vectorial_loss: expected [3,H,W] normal maps");
    const std::size_t H = xn.shape()[1], W = xn.shape()[2];
    Var per_pixel = ad::channel_sum(ad::abs(ad::sub(xn, yn)));
    if (!region) return ad::scale(ad::sum(per_pixel), 1.0 / static_cast<double>(H * W));
    if (region->shape() != Shape{1, H, W}) throw DimensionError("vectorial_loss: region must be [1,H,W]");
    double n = 0.0;
    for (double v : region->values()) n += v != 0.0;
    if (n == 0.0) throw DomainError("vectorial_loss: empty region");
    return ad::scale(ad::sum(ad::mul(per_pixel, xn.graph().constant(*region))), 1.0 / n);
}

/// Critic over its stack input (disparity, or disparity ⊕ normals).
using StackCritic = std::function<Var(Var)>;
/// Critic over a raw disparity map; builds the stack input itself.
using DisparityCritic = std::function<Var(Var)>;

/// (|grad_x D(x_hat)| - 1)^2 at x_hat = u * real + (1 - u) * fake.
///
/// The inner gradient is a recorded backward pass, so the penalty stays
/// differentiable w.r.t. the critic parameters.
inline Var gradient_penalty(const StackCritic& critic, Var real, Var fake, double u) {
    require_same_shape(real, fake, "gradient_penalty");
    ad::Graph& g = real.graph();
    const bool was = g.grad_enabled();
    g.set_grad_enabled(true);
    Tensor mix(real.shape());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = u * real.value()[i] + (1.0 - u) * fake.value()[i];
    Var x_hat = g.leaf(std::move(mix), true);
    Var out = critic(x_hat);
    if (out.size() != 1) {
        g.set_grad_enabled(was);
        throw ContractError("gradient_penalty: critic output must be scalar, got " + shape_str(out.shape()));
    }
    const Var wrt[] = {x_hat};
    Var grad = g.gradients(out, wrt, /*create_graph=*/true)[0];
    Var norm = ad::guarded_sqrt(ad::sum(ad::mul(grad, grad)), kPenaltyEps);
    Var dev = ad::shift(norm, -1.0);
    Var gp = ad::mul(dev, dev);
    g.set_grad_enabled(was);
    return gp;
}

struct CriticLoss {
    Var total;
    Var wasserstein;  // mean D(real) - mean D(fake)
    Var penalty;
};

/// Batch critic loss. One interpolation coefficient per batch element.
inline CriticLoss critic_loss(const StackCritic& critic, std::span<const Var> real_in, std::span<const Var> fake_in,
                              const LossWeights& w, std::span<const double> u, std::size_t expected_channels = 4) {
    if (real_in.empty() || real_in.size() != fake_in.size() || u.size() != real_in.size())
        throw ContractError("critic_loss: batch sizes differ");
    for (std::size_t b = 0; b < real_in.size(); ++b) {
        require_same_shape(real_in[b], fake_in[b], "critic_loss");
        if (real_in[b].shape().size() != 3 || real_in[b].shape()[0] != expected_channels)
            throw ContractError("critic_loss: critic input must have " + std::to_string(expected_channels) +
                                " channels, got " + shape_str(real_in[b].shape()));
    }
    const double inv = 1.0 / static_cast<double>(real_in.size());
    Var fake_sum, real_sum, gp_sum;
    for (std::size_t b = 0; b < real_in.size(); ++b) {
        Var df = critic(fake_in[b]), dr = critic(real_in[b]);
        Var gp = gradient_penalty(critic, real_in[b], fake_in[b], u[b]);
        fake_sum = fake_sum.valid() ? ad::add(fake_sum, df) : df;
        real_sum = real_sum.valid() ? ad::add(real_sum, dr) : dr;
        gp_sum = gp_sum.valid() ? ad::add(gp_sum, gp) : gp;
    }
    Var wdist = ad::scale(ad::sub(real_sum, fake_sum), inv);
    Var penalty = ad::scale(gp_sum, inv);
    Var total = ad::add(ad::neg(wdist), ad::scale(penalty, w.lambda_gp));
    return {total, wdist, penalty};
}

inline CriticLoss critic_loss(const StackCritic& critic, Var real_in, Var fake_in, const LossWeights& w, double u,
                              std::size_t expected_channels = 4) {
    const Var r[] = {real_in};
    const Var f[] = {fake_in};
    const double us[] = {u};
    return critic_loss(critic, r, f, w, us, expected_channels);
}

struct GeneratorLoss {
    Var total;
    Var adversarial;
    Var l1;
    Var vectorial;
    LossReport report;
};

/// `stages` holds the generator outputs (coarse first, final last), all in
/// the same units as `target`. The critic judges only the final stage.
/// `vl_region` ([1,H,W] 0/1) restricts the vectorial term to the hole.
inline GeneratorLoss generator_loss(const DisparityCritic& critic, std::span<const Var> stages, Var target,
                                    const LossWeights& w, const Tensor* vl_region = nullptr) {
    if (stages.empty()) throw ContractError("generator_loss: no generator output");
    Var target_normals = normals_op(target);
    Var l1, vec;
    for (const Var& y : stages) {
        require_same_shape(y, target, "generator_loss");
        Var a = l1_loss(y, target);
        Var v = vectorial_loss(normals_op(y), target_normals, vl_region);
        l1 = l1.valid() ? ad::add(l1, a) : a;
        vec = vec.valid() ? ad::add(vec, v) : v;
    }
    Var adv = ad::neg(critic(stages.back()));
    if (adv.size() != 1) throw ContractError("generator_loss: critic output must be scalar");
    Var total = ad::add(ad::add(ad::scale(adv, w.beta), ad::scale(l1, w.phi)), ad::scale(vec, w.alpha));
    GeneratorLoss out{total, adv, l1, vec, {}};
    out.report.g_total = total.value().item();
    out.report.g_adv = adv.value().item();
    out.report.g_l1 = l1.value().item();
    out.report.g_vec = vec.value().item();
    return out;
}

/// Batch version: each term is averaged over the batch.
inline GeneratorLoss generator_loss(const DisparityCritic& critic, const std::vector<std::vector<Var>>& stages,
                                    std::span<const Var> targets, const LossWeights& w,
                                    std::span<const Tensor* const> vl_regions = {}) {
    if (stages.empty() || stages.size() != targets.size()) throw ContractError("generator_loss: batch sizes differ");
    const double inv = 1.0 / static_cast<double>(stages.size());
    Var adv, l1, vec;
    for (std::size_t b = 0; b < stages.size(); ++b) {
        GeneratorLoss one = generator_loss(critic, stages[b], targets[b], w, vl_regions.empty() ? nullptr : vl_regions[b]);
        adv = adv.valid() ? ad::add(adv, one.adversarial) : one.adversarial;
        l1 = l1.valid() ? ad::add(l1, one.l1) : one.l1;
        vec = vec.valid() ? ad::add(vec, one.vectorial) : one.vectorial;
    }
    adv = ad::scale(adv, inv);
    l1 = ad::scale(l1, inv);
    vec = ad::scale(vec, inv);
    Var total = ad::add(ad::add(ad::scale(adv, w.beta), ad::scale(l1, w.phi)), ad::scale(vec, w.alpha));
    GeneratorLoss out{total, adv, l1, vec, {}};
    out.report.g_total = total.value().item();
    out.report.g_adv = adv.value().item();
    out.report.g_l1 = l1.value().item();
    out.report.g_vec = vec.value().item();
    return out;
}

}  // namespace depthgan::losses
