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

// Toy two-stage inpainting generator, surface critic and the WGAN-GP loop.
//
// Generator: masked disparity / scale and the mask go through a 4-conv
// encoder (two stride-2 convs) and a 4-conv decoder (nearest upsampling).
// The coarse output is pasted into the hole. With surface attention on, the
// refinement copies background patches of coarse ⊕ normals(coarse) into the
// hole and a single 3x3 conv merges them with the coarse map as a residual.
//
// Critic: 4 convs with leaky ReLU, global mean, linear head. Its input is
// disparity / scale ⊕ normals(disparity), or disparity / scale alone when
// surface discrimination is off.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "depthgan/attention.hpp"
#include "depthgan/autodiff.hpp"
#include "depthgan/errors.hpp"
#include "depthgan/image.hpp"
#include "depthgan/image_io.hpp"
#include "depthgan/losses.hpp"
#include "depthgan/metrics.hpp"
#include "depthgan/normals.hpp"
#include "depthgan/scene.hpp"

namespace depthgan::model {

using ad::Graph;
using ad::Var;

inline constexpr double kLeakySlope = 0.2;

/// Independent streams from one user seed, separated by `tag`.
inline std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint64_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tag)};
    return std::mt19937_64(seq);
}

struct ConvSpec {
    std::size_t in = 0, out = 0;
    std::size_t stride = 1;
    bool upsample = false;  // nearest 2x before the conv
    bool activate = true;   // leaky ReLU after the conv
};

/// Stack of 3x3 convs with per-channel bias.
struct Network {
    std::vector<ConvSpec> layers;
    std::vector<Tensor> weights;  // [out,in,3,3]
    std::vector<Tensor> biases;   // [out]

    std::size_t in_channels() const { return layers.empty() ? 0 : layers.front().in; }
    std::size_t out_channels() const { return layers.empty() ? 0 : layers.back().out; }
};

template <class Rng>
Network make_network(std::vector<ConvSpec> layers, Rng& rng, double last_layer_sd = -1.0) {
    Network n;
    n.layers = std::move(layers);
    for (std::size_t l = 0; l < n.layers.size(); ++l) {
        const auto& s = n.layers[l];
        const double fan_in = static_cast<double>(s.in * 9);
        double sd = s.activate ? std::sqrt(2.0 / (fan_in * (1.0 + kLeakySlope * kLeakySlope))) : std::sqrt(1.0 / fan_in);
        if (l + 1 == n.layers.size() && last_layer_sd >= 0.0) sd = last_layer_sd;
        n.weights.push_back(random_normal(Shape{s.out, s.in, 3, 3}, rng, sd));
        n.biases.push_back(Tensor(Shape{s.out}, 0.0));
    }
    return n;
}

/// Network tensors as graph leaves.
struct Bound {
    std::vector<Var> weights, biases;
};

inline Bound bind(Graph& g, const Network& n, bool trainable) {
    Bound b;
    for (std::size_t l = 0; l < n.layers.size(); ++l) {
        b.weights.push_back(g.leaf(n.weights[l], trainable));
        b.biases.push_back(g.leaf(n.biases[l], trainable));
    }
    return b;
}

inline Var run(Var x, const Network& n, const Bound& b) {
    for (std::size_t l = 0; l < n.layers.size(); ++l) {
        const ConvSpec& s = n.layers[l];
        if (s.upsample) x = ad::upsample2(x);
        x = ad::conv2d_same(x, b.weights[l], s.stride);
        x = ad::add(x, ad::expand_spatial(b.biases[l], x.shape()[1], x.shape()[2]));
        if (s.activate) x = ad::leaky_relu(x, kLeakySlope);
    }
    return x;
}

// ---- generator ---------------------------------------------------------

struct GeneratorParams {
    std::size_t channels = 8;
    bool surface_attention = true;
    double disparity_scale = 64.0;  // net sees disparity / scale
    std::size_t trained_hole = 24;
    std::uint64_t seed = 0;
    Network coarse;
    Network merge;  // empty when surface_attention is off
};

inline std::vector<ConvSpec> generator_layers(std::size_t c) {
    return {{2, c, 1, false, true},         {c, 2 * c, 2, false, true},     {2 * c, 2 * c, 2, false, true},
            {2 * c, 2 * c, 1, false, true}, {2 * c, 2 * c, 1, false, true}, {2 * c, c, 1, true, true},
            {c, c, 1, true, true},          {c, 1, 1, false, false}};
}

/// Merge input: coarse / scale (1) ⊕ attended surface features (4).
inline std::vector<ConvSpec> merge_layers() { return {{5, 1, 1, false, false}}; }

inline GeneratorParams make_generator(std::size_t channels, bool surface_attention, double disparity_scale,
                                      std::uint64_t seed, std::size_t trained_hole = 24) {
    if (channels == 0) throw SpecError("generator: channels must be positive");
    if (!(disparity_scale > 0.0)) throw SpecError("generator: disparity scale must be > 0");
    GeneratorParams p;
    p.channels = channels;
    p.surface_attention = surface_attention;
    p.disparity_scale = disparity_scale;
    p.trained_hole = trained_hole;
    p.seed = seed;
    std::mt19937_64 rng = seeded_rng(seed, 0x67656e);
    p.coarse = make_network(generator_layers(channels), rng);
    if (surface_attention) p.merge = make_network(merge_layers(), rng, 1e-3);
    return p;
}

struct GeneratorBound {
    Bound coarse, merge;
};

inline GeneratorBound bind(Graph& g, const GeneratorParams& p, bool trainable) {
    return {bind(g, p.coarse, trainable), bind(g, p.merge, trainable)};
}

struct GenerateOptions {
    attention::AttentionConfig attention;
    attention::AttentionResult* detail = nullptr;  // filled when surface attention runs
};

struct Stages {
    Var coarse;  // [1,H,W] pixels, background = input
    Var final;
};

inline void require_generator_input(const Shape& d, const HoleMask& mask) {
    if (d.size() != 3 || d[0] != 1) throw DimensionError("generate: disparity must be [1,H,W], got " + shape_str(d));
    if (mask.height != d[1] || mask.width != d[2]) throw DimensionError("generate: mask size differs from disparity");
    if (d[1] % 4 || d[2] % 4 || d[1] < 4 || d[2] < 4)
        throw DimensionError("generate: H and W must be positive multiples of 4, got " + shape_str(d));
}

/// Both stages on graph `g`. Pixels outside the hole are taken from `disparity`
/// unchanged; pixels inside it are never read.
inline Stages generate(Graph& g, const GeneratorParams& p, const GeneratorBound& b, Var disparity,
                       const HoleMask& mask, const GenerateOptions& opt = {}) {
    require_generator_input(disparity.shape(), mask);
    const Tensor hole = mask.to_tensor(1);
    const Tensor zeros(disparity.shape(), 0.0);
    const double inv = 1.0 / p.disparity_scale;
    Var known = ad::select(hole, g.constant(zeros), disparity);
    Var x = ad::concat_channels({ad::scale(known, inv), g.constant(hole)});
    Var y = ad::scale(run(x, p.coarse, b.coarse), p.disparity_scale);
    Var coarse = ad::select(hole, y, disparity);
    if (!p.surface_attention || mask.empty()) return {coarse, coarse};

    // attention runs on detached values; only the merge conv is learned here
    Tensor attended = attention::surface_attention(coarse.value(), mask, opt.attention, inv, opt.detail);
    Var merged_in = ad::concat_channels({ad::scale(coarse, inv), g.constant(std::move(attended))});
    Var refined = ad::add(ad::scale(coarse, inv), run(merged_in, p.merge, b.merge));
    Var final = ad::select(hole, ad::scale(refined, p.disparity_scale), disparity);
    return {coarse, final};
}

/// Tensor form: `masked` is [2,H,W], disparity (pixels) then the 0/1 mask.
inline std::pair<Tensor, Tensor> generate(const GeneratorParams& p, const Tensor& masked,
                                          const GenerateOptions& opt = {}) {
    if (masked.rank() != 3 || masked.dim(0) != 2)
        throw DimensionError("generate: expected [2,H,W] input, got " + shape_str(masked.shape()));
    const std::size_t H = masked.dim(1), W = masked.dim(2);
    HoleMask mask(H, W);
    for (std::size_t k = 0; k < H * W; ++k) {
        const double m = masked[H * W + k];
        if (m != 0.0 && m != 1.0) throw ContractError("generate: mask channel must be binary");
        mask.hole[k] = m == 1.0;
    }
    Graph g;
    g.set_grad_enabled(false);
    Tensor d(Shape{1, H, W}, std::vector<double>(masked.values().begin(), masked.values().begin() + H * W));
    Stages s = generate(g, p, bind(g, p, false), g.constant(std::move(d)), mask, opt);
    return {s.coarse.value(), s.final.value()};
}

// ---- critic ------------------------------------------------------------

struct CriticParams {
    std::size_t channels = 8;
    bool surface_discrimination = true;
    double disparity_scale = 64.0;
    std::uint64_t seed = 0;
    Network convs;
    Tensor head_w;  // [convs.out_channels()]
    Tensor head_b = Tensor::scalar(0.0);

    std::size_t in_channels() const { return surface_discrimination ? 4 : 1; }
};

inline std::vector<ConvSpec> critic_layers(std::size_t in, std::size_t c) {
    return {{in, c, 2, false, true}, {c, 2 * c, 2, false, true}, {2 * c, 2 * c, 2, false, true},
            {2 * c, 2 * c, 1, false, true}};
}

inline CriticParams make_critic(std::size_t channels, bool surface_discrimination, double disparity_scale,
                                std::uint64_t seed) {
    if (channels == 0) throw SpecError("critic: channels must be positive");
    CriticParams p;
    p.channels = channels;
    p.surface_discrimination = surface_discrimination;
    p.disparity_scale = disparity_scale;
    p.seed = seed;
    std::mt19937_64 rng = seeded_rng(seed, 0x637269);
    p.convs = make_network(critic_layers(p.in_channels(), channels), rng);
    const std::size_t f = p.convs.out_channels();
    p.head_w = random_normal(Shape{f}, rng, std::sqrt(1.0 / static_cast<double>(f)));
    return p;
}

struct CriticBound {
    Bound convs;
    Var head_w, head_b;
};

inline CriticBound bind(Graph& g, const CriticParams& p, bool trainable) {
    return {bind(g, p.convs, trainable), g.leaf(p.head_w, trainable), g.leaf(p.head_b, trainable)};
}

/// What the conv stack sees for a [1,H,W] disparity map in pixels.
inline Var critic_input(const CriticParams& p, Var disparity) {
    const double inv = 1.0 / p.disparity_scale;
    return p.surface_discrimination ? surface_features(disparity, inv) : ad::scale(disparity, inv);
}

/// Stack input -> scalar score.
inline Var critic_stack(const CriticParams& p, const CriticBound& b, Var stack_in) {
    if (stack_in.shape().size() != 3 || stack_in.shape()[0] != p.in_channels())
        throw ContractError("critic: stack expects " + std::to_string(p.in_channels()) + " input channels, got " +
                            shape_str(stack_in.shape()));
    Var h = ad::spatial_mean(run(stack_in, p.convs, b.convs));
    return ad::add(ad::sum(ad::mul(h, b.head_w)), b.head_b);
}

inline Var critic_forward(const CriticParams& p, const CriticBound& b, Var disparity) {
    return critic_stack(p, b, critic_input(p, disparity));
}

inline double critic_forward(const CriticParams& p, const Tensor& disparity) {
    Graph g;
    g.set_grad_enabled(false);
    return critic_forward(p, bind(g, p, false), g.constant(disparity)).value().item();
}

// ---- optimizer ---------------------------------------------------------

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.9;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    /// One update of every tensor in `params` with the matching gradient.
    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
        if (params.size() != grads.size()) throw ContractError("adam: parameter/gradient count mismatch");
        if (m_.empty()) {
            for (const Tensor* p : params) {
                m_.emplace_back(p->shape(), 0.0);
                v_.emplace_back(p->shape(), 0.0);
            }
        }
        if (m_.size() != params.size()) throw ContractError("adam: parameter set changed between steps");
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            Tensor& p = *params[k];
            const Tensor& g = *grads[k];
            if (g.shape() != p.shape()) throw DimensionError("adam: gradient shape differs from parameter");
            for (std::size_t i = 0; i < p.size(); ++i) {
                m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g[i];
                v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                p[i] -= cfg_.lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + cfg_.eps);
            }
        }
    }

    long steps() const { return t_; }

private:
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    long t_ = 0;
};

inline void collect(Network& n, const Bound& b, Graph& g, std::vector<Tensor*>& ps, std::vector<const Tensor*>& gs) {
    for (std::size_t l = 0; l < n.layers.size(); ++l) {
        ps.push_back(&n.weights[l]);
        gs.push_back(&g.grad(b.weights[l]));
        ps.push_back(&n.biases[l]);
        gs.push_back(&g.grad(b.biases[l]));
    }
}

// ---- training ----------------------------------------------------------

struct TrainConfig {
    std::size_t height = 64, width = 64;
    std::size_t hole = 24;
    std::size_t batch = 4;
    long steps = 300;
    AdamConfig adam;
    losses::LossWeights weights;
    std::uint64_t seed = 0;
    bool vectorial_loss_on = true;
    bool surface_attention_on = true;
    bool surface_discrimination_on = true;
    bool vectorial_hole_only = false;  // V over the hole instead of the whole image
    std::size_t channels = 8;
    double disparity_max = 64.0;
    double noise_sigma = 0.0;
    attention::AttentionConfig attention;

    void validate() const {
        weights.validate();
        attention.validate();
        const std::size_t r = attention.radius();
        if (hole == 0 || hole + 2 * std::max<std::size_t>(r, 1) > std::min(height, width))
            throw SpecError("train: hole " + std::to_string(hole) + " does not fit a " + std::to_string(height) + "x" +
                            std::to_string(width) + " image with margin " + std::to_string(r));
        if (height % 4 || width % 4) throw SpecError("train: image sides must be multiples of 4");
        if (batch == 0) throw SpecError("train: batch must be positive");
        if (steps < 0) throw SpecError("train: steps must be >= 0");
        if (!(adam.lr > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
            throw SpecError("train: invalid optimizer settings");
        if (!(disparity_max > 0.0)) throw SpecError("train: disparity_max must be > 0");
        if (noise_sigma < 0.0) throw SpecError("train: noise sigma must be >= 0");
        if (channels == 0) throw SpecError("train: channels must be positive");
    }

    /// Loss weights with the ablation flags applied.
    losses::LossWeights effective_weights() const {
        losses::LossWeights w = weights;
        if (!vectorial_loss_on) w.alpha = 0.0;
        return w;
    }
};

struct Sample {
    DisparityImage disparity;
    HoleMask mask;
};

/// Seeded stream of synthetic scenes with square holes.
class SceneStream {
public:
    SceneStream(std::size_t height, std::size_t width, std::size_t hole, double noise_sigma, std::uint64_t seed)
        : h_(height), w_(width), hole_(hole), sigma_(noise_sigma), rng_(seeded_rng(seed, 0x646174)) {}

    Sample next() {
        scene::SceneSpec spec = scene::random_scene_spec(h_, w_, rng_);
        spec.noise_sigma = sigma_;
        spec.seed = rng_();
        const std::uint64_t mask_seed = rng_();
        return {scene::synth_scene(spec).disparity, scene::synth_mask(h_, w_, hole_, mask_seed)};
    }

private:
    std::size_t h_, w_, hole_;
    double sigma_;
    std::mt19937_64 rng_;
};

using Dataset = std::function<Sample()>;

inline Dataset synthetic_dataset(const TrainConfig& cfg) {
    auto stream = std::make_shared<SceneStream>(cfg.height, cfg.width, cfg.hole, cfg.noise_sigma, cfg.seed);
    return [stream] { return stream->next(); };
}

struct LogRow {
    long step = 0;
    std::string phase;  // "critic" or "generator"
    losses::LossReport report;
};

inline std::string log_csv_header() { return "step,phase,g_total,g_adv,g_l1,g_vec,d_total,d_gp,d_wasserstein"; }

inline std::string log_csv_row(const LogRow& r) {
    std::ostringstream os;
    os.precision(17);
    const auto& x = r.report;
    os << r.step << ',' << r.phase << ',' << x.g_total << ',' << x.g_adv << ',' << x.g_l1 << ',' << x.g_vec << ','
       << x.d_total << ',' << x.d_gp << ',' << x.d_wasserstein_estimate;
    return os.str();
}

inline std::string log_csv(const std::vector<LogRow>& log, const std::string& header_comment = {}) {
    std::ostringstream os;
    if (!header_comment.empty()) os << "# " << header_comment << '\n';
    os << log_csv_header() << '\n';
    for (const auto& r : log) os << log_csv_row(r) << '\n';
    return os.str();
}

struct TrainResult {
    GeneratorParams generator;
    CriticParams critic;
    std::vector<LogRow> log;
};

inline void require_finite(double v, const char* what, long step) {
    if (!std::isfinite(v)) throw TrainingDiverged(std::string(what) + " is not finite", step);
}

/// One training run. Each outer step draws a batch, runs n_critic critic
/// updates against the current generator's (detached) fills, then one
/// generator update against the updated critic.
class Trainer {
public:
    Trainer(TrainConfig cfg, Dataset data)
        : cfg_(std::move(cfg)), data_(std::move(data)), gen_opt_(cfg_.adam), critic_opt_(cfg_.adam),
          rng_(seeded_rng(cfg_.seed, 0x6d6978)) {
        cfg_.validate();
        gen_ = make_generator(cfg_.channels, cfg_.surface_attention_on, cfg_.disparity_max, cfg_.seed, cfg_.hole);
        critic_ = make_critic(cfg_.channels, cfg_.surface_discrimination_on, cfg_.disparity_max, cfg_.seed);
    }

    const GeneratorParams& generator() const { return gen_; }
    const CriticParams& critic() const { return critic_; }
    const std::vector<LogRow>& log() const { return log_; }
    long step_count() const { return step_; }

    void step() {
        const losses::LossWeights w = cfg_.effective_weights();
        std::vector<Sample> batch;
        for (std::size_t b = 0; b < cfg_.batch; ++b) batch.push_back(data_());

        Graph gg;
        const GeneratorBound gb = bind(gg, gen_, true);
        GenerateOptions gopt;
        gopt.attention = cfg_.attention;
        std::vector<std::vector<Var>> stages;
        std::vector<Var> targets;
        std::vector<Tensor> fakes;
        std::vector<Tensor> regions;
        for (const Sample& s : batch) {
            Var d = gg.constant(s.disparity.to_tensor());
            Stages st = generate(gg, gen_, gb, d, s.mask, gopt);
            stages.push_back({st.coarse, st.final});
            targets.push_back(d);
            fakes.push_back(st.final.value());
            regions.push_back(s.mask.to_tensor(1));
        }

        for (int i = 0; i < w.n_critic; ++i) {
            Graph g;
            const CriticBound cb = bind(g, critic_, true);
            std::vector<Var> real_in, fake_in;
            std::vector<double> u;
            std::uniform_real_distribution<double> U(0.0, 1.0);
            for (std::size_t b = 0; b < batch.size(); ++b) {
                real_in.push_back(critic_input(critic_, g.constant(batch[b].disparity.to_tensor())));
                fake_in.push_back(critic_input(critic_, g.constant(fakes[b])));
                u.push_back(U(rng_));
            }
            auto stack = [&](Var x) { return critic_stack(critic_, cb, x); };
            losses::CriticLoss cl = losses::critic_loss(stack, real_in, fake_in, w, u, critic_.in_channels());
            LogRow row{step_, "critic", {}};
            row.report.d_total = cl.total.value().item();
            row.report.d_gp = cl.penalty.value().item();
            row.report.d_wasserstein_estimate = cl.wasserstein.value().item();
            require_finite(row.report.d_total, "critic loss", step_);
            g.backward(cl.total);
            std::vector<Tensor*> ps;
            std::vector<const Tensor*> gs;
            collect(critic_.convs, cb.convs, g, ps, gs);
            ps.push_back(&critic_.head_w);
            gs.push_back(&g.grad(cb.head_w));
            ps.push_back(&critic_.head_b);
            gs.push_back(&g.grad(cb.head_b));
            critic_opt_.step(ps, gs);
            log_.push_back(row);
        }

        const CriticBound frozen = bind(gg, critic_, false);
        auto judge = [&](Var d) { return critic_forward(critic_, frozen, d); };
        std::vector<const Tensor*> region_ptrs;
        if (cfg_.vectorial_hole_only)
            for (const Tensor& r : regions) region_ptrs.push_back(&r);
        losses::GeneratorLoss gl = losses::generator_loss(judge, stages, targets, w, region_ptrs);
        require_finite(gl.report.g_total, "generator loss", step_);
        gg.backward(gl.total);
        std::vector<Tensor*> ps;
        std::vector<const Tensor*> gs;
        collect(gen_.coarse, gb.coarse, gg, ps, gs);
        if (gen_.surface_attention) collect(gen_.merge, gb.merge, gg, ps, gs);
        gen_opt_.step(ps, gs);
        LogRow row{step_, "generator", gl.report};
        log_.push_back(row);
        ++step_;
    }

private:
    TrainConfig cfg_;
    Dataset data_;
    GeneratorParams gen_;
    CriticParams critic_;
    Adam gen_opt_, critic_opt_;
    std::mt19937_64 rng_;
    std::vector<LogRow> log_;
    long step_ = 0;
};

inline TrainResult train(const TrainConfig& cfg, Dataset data = {},
                         const std::function<void(const Trainer&)>& on_step = {}) {
    Trainer t(cfg, data ? std::move(data) : synthetic_dataset(cfg));
    for (long s = 0; s < cfg.steps; ++s) {
        t.step();
        if (on_step) on_step(t);
    }
    return {t.generator(), t.critic(), t.log()};
}

// ---- inference ---------------------------------------------------------

/// Fills `hole` with the final generator stage. Background pixels are copied
/// bit-exactly, filled pixels are clamped to >= 0. Sizes that are not
/// multiples of 4 are edge-padded for the net and cropped back.
inline DisparityImage inpaint(const GeneratorParams& p, const DisparityImage& d, const HoleMask& hole,
                              const GenerateOptions& opt = {}, std::string* warning = nullptr) {
    if (hole.height != d.height || hole.width != d.width) throw DimensionError("inpaint: mask size differs from image");
    if (hole.empty()) return d;
    const Box box = bounding_box(hole);
    if (warning && (box.height > p.trained_hole || box.width > p.trained_hole))
        *warning = "hole " + std::to_string(box.height) + "x" + std::to_string(box.width) +
                   " is larger than the trained context " + std::to_string(p.trained_hole) + "x" +
                   std::to_string(p.trained_hole);
    const std::size_t H = d.height, W = d.width;
    const std::size_t Hp = (H + 3) / 4 * 4, Wp = (W + 3) / 4 * 4;
    Tensor in(Shape{2, Hp, Wp});
    for (std::size_t i = 0; i < Hp; ++i)
        for (std::size_t j = 0; j < Wp; ++j) {
            const std::size_t si = std::min(i, H - 1), sj = std::min(j, W - 1);
            in.at(0, i, j) = d(si, sj);
            in.at(1, i, j) = hole(si, sj) ? 1.0 : 0.0;
        }
    const Tensor final = generate(p, in, opt).second;
    DisparityImage out = d;
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j)
            if (hole(i, j)) {
                out(i, j) = std::max(0.0, final.at(0, i, j));
                out.valid[i * W + j] = 1;
            }
    return out;
}

/// Mean absolute normal error over the hole.
inline double hole_vectorial_error(const DisparityImage& gt, const DisparityImage& filled, const HoleMask& hole) {
    return metrics::vectorial_error(normals_from_disparity(filled), normals_from_disparity(gt), hole);
}

// ---- checkpoints -------------------------------------------------------
//
// "DGANCKPT", u32 version, u32 length + key=value metadata lines, u32 tensor
// count, then per tensor: u32 name length, name, u32 rank, u64 dims, f64
// payload. All integers and floats little-endian.

inline constexpr char kCheckpointMagic[8] = {'D', 'G', 'A', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

using Metadata = std::map<std::string, std::string>;

struct Checkpoint {
    GeneratorParams generator;
    CriticParams critic;
    Metadata metadata;
};

namespace detail {

template <class T>
void put(std::string& out, T v) {
    static_assert(std::is_integral_v<T> || std::is_floating_point_v<T>);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    out.append(reinterpret_cast<const char*>(buf), sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string& b) : b_(b) {}
    template <class T>
    T get(const char* what) {
        if (b_.size() - pos_ < sizeof(T)) throw ParseError(std::string("checkpoint truncated reading ") + what, pos_);
        unsigned char buf[sizeof(T)];
        std::memcpy(buf, b_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
        pos_ += sizeof(T);
        T v;
        std::memcpy(&v, buf, sizeof(T));
        return v;
    }
    std::string bytes(std::size_t n, const char* what) {
        if (b_.size() - pos_ < n) throw ParseError(std::string("checkpoint truncated reading ") + what, pos_);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t offset() const { return pos_; }
    bool done() const { return pos_ == b_.size(); }

private:
    const std::string& b_;
    std::size_t pos_ = 0;
};

inline void network_tensors(const std::string& prefix, Network& n, std::vector<std::pair<std::string, Tensor*>>& out) {
    for (std::size_t l = 0; l < n.layers.size(); ++l) {
        out.emplace_back(prefix + ".w" + std::to_string(l), &n.weights[l]);
        out.emplace_back(prefix + ".b" + std::to_string(l), &n.biases[l]);
    }
}

inline std::vector<std::pair<std::string, Tensor*>> named_tensors(Checkpoint& c) {
    std::vector<std::pair<std::string, Tensor*>> out;
    network_tensors("generator.coarse", c.generator.coarse, out);
    network_tensors("generator.merge", c.generator.merge, out);
    network_tensors("critic.convs", c.critic.convs, out);
    out.emplace_back("critic.head_w", &c.critic.head_w);
    out.emplace_back("critic.head_b", &c.critic.head_b);
    return out;
}

inline std::string meta_get(const Metadata& m, const std::string& k) {
    auto it = m.find(k);
    if (it == m.end()) throw ParseError("checkpoint metadata lacks '" + k + "'", 0);
    return it->second;
}

}  // namespace detail

inline std::string encode_checkpoint(const GeneratorParams& gen, const CriticParams& critic, Metadata meta = {}) {
    meta["generator.channels"] = std::to_string(gen.channels);
    meta["generator.surface_attention"] = gen.surface_attention ? "1" : "0";
    meta["generator.trained_hole"] = std::to_string(gen.trained_hole);
    meta["generator.seed"] = std::to_string(gen.seed);
    meta["critic.channels"] = std::to_string(critic.channels);
    meta["critic.surface_discrimination"] = critic.surface_discrimination ? "1" : "0";
    meta["critic.seed"] = std::to_string(critic.seed);
    std::ostringstream scale;
    scale.precision(17);
    scale << gen.disparity_scale;
    meta["generator.disparity_scale"] = scale.str();
    scale.str("");
    scale << critic.disparity_scale;
    meta["critic.disparity_scale"] = scale.str();

    std::string text;
    for (const auto& [k, v] : meta) {
        if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
            throw ContractError("checkpoint metadata key/value contains '=' or newline: " + k);
        text += k + "=" + v + "\n";
    }
    Checkpoint c{gen, critic, meta};
    auto tensors = detail::named_tensors(c);
    std::string out(kCheckpointMagic, 8);
    detail::put(out, kCheckpointVersion);
    detail::put(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    detail::put(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        detail::put(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        detail::put(out, static_cast<std::uint32_t>(t->rank()));
        for (std::size_t d : t->shape()) detail::put(out, static_cast<std::uint64_t>(d));
        for (double v : t->values()) detail::put(out, v);
    }
    return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
    detail::Reader r(bytes);
    if (r.bytes(8, "magic") != std::string(kCheckpointMagic, 8)) throw ParseError("not a checkpoint (bad magic)", 0);
    const std::size_t version_at = r.offset();
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion)
        throw ParseError("unsupported checkpoint version " + std::to_string(version), version_at);
    const auto text_len = r.get<std::uint32_t>("metadata length");
    const std::size_t text_at = r.offset();
    const std::string text = r.bytes(text_len, "metadata");
    Metadata meta;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("metadata line without '='", text_at);
        meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto num = [&](const std::string& k) {
        const std::string v = detail::meta_get(meta, k);
        try {
            return std::stod(v);
        } catch (const std::exception&) {
            throw ParseError("checkpoint metadata '" + k + "' is not a number", text_at);
        }
    };
    Checkpoint c;
    c.generator = make_generator(static_cast<std::size_t>(num("generator.channels")),
                                 num("generator.surface_attention") != 0.0, num("generator.disparity_scale"),
                                 static_cast<std::uint64_t>(num("generator.seed")),
                                 static_cast<std::size_t>(num("generator.trained_hole")));
    c.critic = make_critic(static_cast<std::size_t>(num("critic.channels")),
                           num("critic.surface_discrimination") != 0.0, num("critic.disparity_scale"),
                           static_cast<std::uint64_t>(num("critic.seed")));
    c.metadata = meta;
    std::map<std::string, Tensor*> slots;
    for (auto& [name, t] : detail::named_tensors(c)) slots[name] = t;
    const auto count = r.get<std::uint32_t>("tensor count");
    if (count != slots.size())
        throw ParseError("checkpoint holds " + std::to_string(count) + " tensors, architecture needs " +
                             std::to_string(slots.size()),
                         r.offset());
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::size_t at = r.offset();
        const auto name_len = r.get<std::uint32_t>("name length");
        const std::string name = r.bytes(name_len, "name");
        auto it = slots.find(name);
        if (it == slots.end()) throw ParseError("unexpected tensor '" + name + "'", at);
        const auto rank = r.get<std::uint32_t>("rank");
        Shape shape;
        for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>("dim")));
        if (shape != it->second->shape())
            throw ParseError("tensor '" + name + "' has shape " + shape_str(shape) + ", expected " +
                                 shape_str(it->second->shape()),
                             at);
        for (double& v : it->second->values()) v = r.get<double>("payload");
    }
    if (!r.done()) throw ParseError("trailing bytes after checkpoint", r.offset());
    return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const GeneratorParams& gen, const CriticParams& critic,
                            Metadata meta = {}) {
    io::write_file(path, encode_checkpoint(gen, critic, std::move(meta)));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace depthgan::model
