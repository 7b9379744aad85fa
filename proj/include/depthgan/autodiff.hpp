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

// Tape-based reverse-mode differentiation over dense double tensors.
//
// A Graph records every executed operation in insertion order. Each op
// carries a forward function (used for replay) and a backward function that
// is itself written in terms of recorded ops, so a backward pass can be
// recorded as well (create_graph) and differentiated once more. The gradient
// penalty of the critic relies on this.

#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "depthgan/errors.hpp"
#include "depthgan/tensor.hpp"

namespace depthgan::ad {

class Graph;

/// Handle to a value recorded in a Graph. Cheap to copy; only valid while the graph lives.
class Var {
public:
    Var() = default;
    Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

    bool valid() const noexcept { return graph_ != nullptr; }
    Graph& graph() const {
        if (!graph_) throw ContractError("var: use of an empty Var");
        return *graph_;
    }
    std::size_t id() const noexcept { return id_; }

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t size() const { return value().size(); }
    bool requires_grad() const;

private:
    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

using ForwardFn = std::function<Tensor(std::span<const Tensor* const>)>;
using BackwardFn = std::function<std::vector<Var>(std::span<const Var> inputs, Var output, Var grad_output)>;

struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> parents;
    bool requires_grad = false;
    bool leaf = true;
    ForwardFn forward;
    BackwardFn backward;
    std::optional<Tensor> grad;
};

Var add(Var a, Var b);
Var reshape(Var x, Shape shape);

class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value) { return push_leaf("constant", std::move(value), false); }
    Var param(Tensor value) { return push_leaf("param", std::move(value), recording_); }
    Var leaf(Tensor value, bool requires_grad) {
        return push_leaf(requires_grad ? "param" : "constant", std::move(value), requires_grad && recording_);
    }

    /// Runs `forward` on the input values and appends the result.
    Var record(std::string op, std::vector<Var> inputs, ForwardFn forward, BackwardFn backward) {
        std::vector<const Tensor*> vals;
        vals.reserve(inputs.size());
        bool rg = false;
        for (const Var& in : inputs) {
            if (&in.graph() != this) throw ContractError(op + ": input belongs to another graph");
            vals.push_back(&nodes_[in.id()].value);
            rg = rg || nodes_[in.id()].requires_grad;
        }
        Node n;
        n.op = std::move(op);
        n.value = forward(vals);
        n.leaf = false;
        n.requires_grad = rg && recording_;
        n.parents.reserve(inputs.size());
        for (const Var& in : inputs) n.parents.push_back(in.id());
        n.forward = std::move(forward);
        if (n.requires_grad) n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return Var(this, nodes_.size() - 1);
    }

    /// Gradients of a scalar `loss` w.r.t. `wrt`. With `create_graph` the
    /// backward ops are themselves recorded and differentiable; otherwise the
    /// returned Vars are constants.
    std::vector<Var> gradients(Var loss, std::span<const Var> wrt, bool create_graph = false) {
        if (&loss.graph() != this) throw ContractError("gradients: loss belongs to another graph");
        if (loss.size() != 1)
            throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
        const std::size_t top = loss.id();
        std::vector<Var> acc(top + 1);
        const bool saved = recording_;
        recording_ = create_graph && saved;
        acc[top] = constant(Tensor(loss.shape(), 1.0));
        for (std::size_t id = top + 1; id-- > 0;) {
            if (!acc[id].valid()) continue;
            const Node& nd = nodes_[id];
            if (!nd.requires_grad || !nd.backward) continue;
            std::vector<Var> inputs;
            inputs.reserve(nd.parents.size());
            for (std::size_t p : nd.parents) inputs.emplace_back(this, p);
            BackwardFn bwd = nd.backward;
            std::vector<Var> gs = bwd(inputs, Var(this, id), acc[id]);
            if (gs.size() != inputs.size()) {
                recording_ = saved;
                throw ContractError(nodes_[id].op + ": backward arity mismatch");
            }
            for (std::size_t k = 0; k < gs.size(); ++k) {
                const std::size_t p = inputs[k].id();
                if (!gs[k].valid() || !nodes_[p].requires_grad) continue;
                acc[p] = acc[p].valid() ? add(acc[p], gs[k]) : gs[k];
            }
        }
        std::vector<Var> out;
        out.reserve(wrt.size());
        for (const Var& w : wrt) {
            if (w.id() <= top && acc[w.id()].valid()) {
                Var g = acc[w.id()];
                out.push_back(g.shape() == w.shape() ? g : reshape(g, w.shape()));
            } else {
                out.push_back(constant(Tensor(w.shape(), 0.0)));
            }
        }
        recording_ = saved;
        return out;
    }

    /// Populates grad(leaf) for every requires_grad leaf.
    void backward(Var loss) {
        std::vector<Var> leaves;
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (nodes_[i].leaf && nodes_[i].requires_grad) leaves.emplace_back(this, i);
        std::vector<Var> gs = gradients(loss, leaves, false);
        for (std::size_t i = 0; i < leaves.size(); ++i) nodes_[leaves[i].id()].grad = gs[i].value();
    }

    const Tensor& grad(Var leaf) const {
        const Node& nd = nodes_.at(leaf.id());
        if (!nd.grad) throw ContractError("grad: no gradient recorded for node " + std::to_string(leaf.id()));
        return *nd.grad;
    }

    /// Re-executes every recorded op from its parents' stored values and
    /// checks the result is bit-identical to what was recorded.
    bool replay() const {
        for (const Node& nd : nodes_) {
            if (nd.leaf) continue;
            std::vector<const Tensor*> vals;
            for (std::size_t p : nd.parents) vals.push_back(&nodes_[p].value);
            if (!(nd.forward(vals) == nd.value)) return false;
        }
        return true;
    }

    std::size_t size() const noexcept { return nodes_.size(); }
    const Node& node(std::size_t id) const { return nodes_.at(id); }
    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    bool grad_enabled() const noexcept { return recording_; }
    void set_grad_enabled(bool on) noexcept { recording_ = on; }

private:
    Var push_leaf(const char* op, Tensor value, bool requires_grad) {
        Node n;
        n.op = op;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return Var(this, nodes_.size() - 1);
    }

    std::deque<Node> nodes_;
    bool recording_ = true;
};

inline const Tensor& Var::value() const { return graph().value(id_); }
inline bool Var::requires_grad() const { return graph().requires_grad(id_); }

inline Var detach(Var x) { return x.graph().constant(x.value()); }

enum class PadMode { zero, replicate };

// ---------------------------------------------------------------------------
// plain kernels

namespace kernels {

inline void require_rank3(const Tensor& t, const char* op) {
    if (t.rank() != 3) throw DimensionError(std::string(op) + ": expected [C,H,W], got " + shape_str(t.shape()));
}

inline void require_rank4(const Tensor& t, const char* op) {
    if (t.rank() != 4)
        throw DimensionError(std::string(op) + ": expected kernel [O,C,kh,kw], got " + shape_str(t.shape()));
}

/// y[o,p,q] = sum_{c,u,v} k[o,c,u,v] * x[c, p*s+u, q*s+v]
inline Tensor conv_valid(const Tensor& x, const Tensor& k, std::size_t s) {
    require_rank3(x, "conv2d");
    require_rank4(k, "conv2d");
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const std::size_t O = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    if (k.dim(1) != C)
        throw DimensionError("conv2d: input has " + std::to_string(C) + " channels, kernel expects " +
                             std::to_string(k.dim(1)));
    if (s == 0) throw DimensionError("conv2d: stride must be positive");
    if (H < kh || W < kw) throw DimensionError("conv2d: kernel larger than (padded) input");
    const std::size_t Ho = (H - kh) / s + 1, Wo = (W - kw) / s + 1;
    Tensor y(Shape{O, Ho, Wo});
    const double* xd = x.values().data();
    const double* kd = k.values().data();
    double* yd = y.values().data();
    for (std::size_t o = 0; o < O; ++o) {
        double* yo = yd + o * Ho * Wo;
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t u = 0; u < kh; ++u)
                for (std::size_t v = 0; v < kw; ++v) {
                    const double kv = kd[((o * C + c) * kh + u) * kw + v];
                    if (kv == 0.0) continue;
                    for (std::size_t p = 0; p < Ho; ++p) {
                        const double* xr = xd + (c * H + p * s + u) * W + v;
                        double* yr = yo + p * Wo;
                        if (s == 1)
                            for (std::size_t q = 0; q < Wo; ++q) yr[q] += kv * xr[q];
                        else
                            for (std::size_t q = 0; q < Wo; ++q) yr[q] += kv * xr[q * s];
                    }
                }
    }
    return y;
}

/// Adjoint of conv_valid w.r.t. its input; `out` is the [C,H,W] input shape.
inline Tensor tconv_valid(const Tensor& y, const Tensor& k, std::size_t s, const Shape& out) {
    require_rank3(y, "transpose_conv2d");
    require_rank4(k, "transpose_conv2d");
    if (out.size() != 3) throw DimensionError("transpose_conv2d: output shape must be [C,H,W]");
    const std::size_t O = k.dim(0), C = k.dim(1), kh = k.dim(2), kw = k.dim(3);
    const std::size_t Ho = y.dim(1), Wo = y.dim(2), H = out[1], W = out[2];
    if (y.dim(0) != O)
        throw DimensionError("transpose_conv2d: input has " + std::to_string(y.dim(0)) +
                             " channels, kernel expects " + std::to_string(O));
    if (out[0] != C) throw DimensionError("transpose_conv2d: output channels do not match kernel");
    if (s == 0) throw DimensionError("transpose_conv2d: stride must be positive");
    if (H < kh || W < kw || (H - kh) / s + 1 != Ho || (W - kw) / s + 1 != Wo)
        throw DimensionError("transpose_conv2d: output shape " + shape_str(out) + " inconsistent with input " +
                             shape_str(y.shape()));
    Tensor x(out);
    const double* yd = y.values().data();
    const double* kd = k.values().data();
    double* xd = x.values().data();
    for (std::size_t o = 0; o < O; ++o) {
        const double* yo = yd + o * Ho * Wo;
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t u = 0; u < kh; ++u)
                for (std::size_t v = 0; v < kw; ++v) {
                    const double kv = kd[((o * C + c) * kh + u) * kw + v];
                    if (kv == 0.0) continue;
                    for (std::size_t p = 0; p < Ho; ++p) {
                        double* xr = xd + (c * H + p * s + u) * W + v;
                        const double* yr = yo + p * Wo;
                        for (std::size_t q = 0; q < Wo; ++q) xr[q * s] += kv * yr[q];
                    }
                }
    }
    return x;
}

/// w[o,c,u,v] = sum_{p,q} g[o,p,q] * x[c, p*s+u, q*s+v]
inline Tensor conv_weight_grad(const Tensor& x, const Tensor& g, std::size_t s, const Shape& kshape) {
    require_rank3(x, "conv2d_weight_grad");
    require_rank3(g, "conv2d_weight_grad");
    const std::size_t O = kshape.at(0), C = kshape.at(1), kh = kshape.at(2), kw = kshape.at(3);
    const std::size_t H = x.dim(1), W = x.dim(2), Ho = g.dim(1), Wo = g.dim(2);
    if (x.dim(0) != C || g.dim(0) != O || (H - kh) / s + 1 != Ho || (W - kw) / s + 1 != Wo)
        throw DimensionError("conv2d_weight_grad: inconsistent shapes");
    Tensor w(kshape);
    const double* xd = x.values().data();
    const double* gd = g.values().data();
    for (std::size_t o = 0; o < O; ++o)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t u = 0; u < kh; ++u)
                for (std::size_t v = 0; v < kw; ++v) {
                    // four partial sums so the inner loop pipelines
                    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
                    for (std::size_t p = 0; p < Ho; ++p) {
                        const double* xr = xd + (c * H + p * s + u) * W + v;
                        const double* gr = gd + (o * Ho + p) * Wo;
                        std::size_t q = 0;
                        for (; q + 4 <= Wo; q += 4) {
                            a0 += gr[q] * xr[q * s];
                            a1 += gr[q + 1] * xr[(q + 1) * s];
                            a2 += gr[q + 2] * xr[(q + 2) * s];
                            a3 += gr[q + 3] * xr[(q + 3) * s];
                        }
                        for (; q < Wo; ++q) a0 += gr[q] * xr[q * s];
                    }
                    w[((o * C + c) * kh + u) * kw + v] = (a0 + a1) + (a2 + a3);
                }
    return w;
}

inline Tensor pad(const Tensor& x, std::size_t p, PadMode mode) {
    require_rank3(x, "pad");
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (mode == PadMode::replicate && (H == 0 || W == 0)) throw DimensionError("pad: empty image");
    Tensor y(Shape{C, H + 2 * p, W + 2 * p});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < H + 2 * p; ++i)
            for (std::size_t j = 0; j < W + 2 * p; ++j) {
                const long si = static_cast<long>(i) - static_cast<long>(p);
                const long sj = static_cast<long>(j) - static_cast<long>(p);
                if (mode == PadMode::zero) {
                    if (si >= 0 && sj >= 0 && si < static_cast<long>(H) && sj < static_cast<long>(W))
                        y.at(c, i, j) = x.at(c, si, sj);
                } else {
                    const long ci = std::clamp(si, 0L, static_cast<long>(H) - 1);
                    const long cj = std::clamp(sj, 0L, static_cast<long>(W) - 1);
                    y.at(c, i, j) = x.at(c, ci, cj);
                }
            }
    return y;
}

/// Adjoint of pad: folds padded border values back onto their source pixels.
inline Tensor pad_adjoint(const Tensor& y, std::size_t p, PadMode mode) {
    require_rank3(y, "pad_adjoint");
    const std::size_t C = y.dim(0);
    if (y.dim(1) < 2 * p || y.dim(2) < 2 * p) throw DimensionError("pad_adjoint: input smaller than padding");
    const std::size_t H = y.dim(1) - 2 * p, W = y.dim(2) - 2 * p;
    Tensor x(Shape{C, H, W});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < H + 2 * p; ++i)
            for (std::size_t j = 0; j < W + 2 * p; ++j) {
                const long si = static_cast<long>(i) - static_cast<long>(p);
                const long sj = static_cast<long>(j) - static_cast<long>(p);
                if (mode == PadMode::zero) {
                    if (si >= 0 && sj >= 0 && si < static_cast<long>(H) && sj < static_cast<long>(W))
                        x.at(c, si, sj) += y.at(c, i, j);
                } else {
                    const long ci = std::clamp(si, 0L, static_cast<long>(H) - 1);
                    const long cj = std::clamp(sj, 0L, static_cast<long>(W) - 1);
                    x.at(c, ci, cj) += y.at(c, i, j);
                }
            }
    return x;
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// elementwise

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    if (a == b) return a;
    if (shape_numel(b) == 1) return a;
    if (shape_numel(a) == 1) return b;
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                         " are not broadcast-compatible");
}

template <class F>
Tensor zip(const Tensor& a, const Tensor& b, F f, const char* op) {
    Tensor out(broadcast_shape(a.shape(), b.shape(), op));
    const bool sa = a.size() == 1 && out.size() != 1;
    const bool sb = b.size() == 1 && out.size() != 1;
    if (a.size() != out.size() && !sa) throw DimensionError(std::string(op) + ": size mismatch");
    if (b.size() != out.size() && !sb) throw DimensionError(std::string(op) + ": size mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(sa ? a[0] : a[i], sb ? b[0] : b[i]);
    return out;
}

template <class F>
Tensor map(const Tensor& a, F f) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}

}  // namespace detail

Var sum(Var x);
Var mul(Var a, Var b);

/// Collapses a broadcast gradient back onto `shape`.
inline Var reduce_like(Var g, const Shape& shape) {
    if (g.shape() == shape) return g;
    if (shape_numel(shape) == 1 && g.size() != 1) return reshape(sum(g), shape);
    return reshape(g, shape);
}

inline Var reshape(Var x, Shape shape) {
    if (shape_numel(shape) != x.size())
        throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    Shape from = x.shape();
    return x.graph().record(
        "reshape", {x}, [shape](std::span<const Tensor* const> in) { return in[0]->reshaped(shape); },
        [from](std::span<const Var>, Var, Var g) { return std::vector<Var>{reshape(g, from)}; });
}

inline Var add(Var a, Var b) {
    return a.graph().record(
        "add", {a, b},
        [](std::span<const Tensor* const> in) {
            return detail::zip(*in[0], *in[1], [](double u, double v) { return u + v; }, "add");
        },
        [](std::span<const Var> in, Var, Var g) {
            return std::vector<Var>{reduce_like(g, in[0].shape()), reduce_like(g, in[1].shape())};
        });
}

Var neg(Var x);

inline Var sub(Var a, Var b) {
    return a.graph().record(
        "sub", {a, b},
        [](std::span<const Tensor* const> in) {
            return detail::zip(*in[0], *in[1], [](double u, double v) { return u - v; }, "sub");
        },
        [](std::span<const Var> in, Var, Var g) {
            return std::vector<Var>{reduce_like(g, in[0].shape()), reduce_like(neg(g), in[1].shape())};
        });
}

inline Var mul(Var a, Var b) {
    return a.graph().record(
        "mul", {a, b},
        [](std::span<const Tensor* const> in) {
            return detail::zip(*in[0], *in[1], [](double u, double v) { return u * v; }, "mul");
        },
        [](std::span<const Var> in, Var, Var g) {
            Var ga = in[0].requires_grad() ? reduce_like(mul(g, in[1]), in[0].shape()) : Var{};
            Var gb = in[1].requires_grad() ? reduce_like(mul(g, in[0]), in[1].shape()) : Var{};
            return std::vector<Var>{ga, gb};
        });
}

inline Var div(Var a, Var b) {
    return a.graph().record(
        "div", {a, b},
        [](std::span<const Tensor* const> in) {
            return detail::zip(*in[0], *in[1], [](double u, double v) { return u / v; }, "div");
        },
        [](std::span<const Var> in, Var out, Var g) {
            Var ga = in[0].requires_grad() ? reduce_like(div(g, in[1]), in[0].shape()) : Var{};
            Var gb = in[1].requires_grad() ? reduce_like(neg(div(mul(g, out), in[1])), in[1].shape()) : Var{};
            return std::vector<Var>{ga, gb};
        });
}

/// x * c for a fixed scalar c.
inline Var scale(Var x, double c) {
    return x.graph().record(
        "scale", {x}, [c](std::span<const Tensor* const> in) { return detail::map(*in[0], [c](double v) { return v * c; }); },
        [c](std::span<const Var>, Var, Var g) { return std::vector<Var>{scale(g, c)}; });
}

/// x + c for a fixed scalar c.
inline Var shift(Var x, double c) {
    return x.graph().record(
        "shift", {x}, [c](std::span<const Tensor* const> in) { return detail::map(*in[0], [c](double v) { return v + c; }); },
        [](std::span<const Var>, Var, Var g) { return std::vector<Var>{g}; });
}

inline Var neg(Var x) {
    return x.graph().record(
        "neg", {x}, [](std::span<const Tensor* const> in) { return detail::map(*in[0], [](double v) { return -v; }); },
        [](std::span<const Var>, Var, Var g) { return std::vector<Var>{neg(g)}; });
}

namespace detail {

/// Multiplies g by a derivative mask computed from the (constant) input value.
template <class D>
Var masked_grad(Var g, const Tensor& x, D deriv) {
    return mul(g, g.graph().constant(map(x, deriv)));
}

}  // namespace detail

inline Var relu(Var x) {
    return x.graph().record(
        "relu", {x},
        [](std::span<const Tensor* const> in) { return detail::map(*in[0], [](double v) { return v > 0.0 ? v : 0.0; }); },
        [](std::span<const Var> in, Var, Var g) {
            return std::vector<Var>{detail::masked_grad(g, in[0].value(), [](double v) { return v > 0.0 ? 1.0 : 0.0; })};
        });
}

inline Var leaky_relu(Var x, double slope) {
    return x.graph().record(
        "leaky_relu", {x},
        [slope](std::span<const Tensor* const> in) {
            return detail::map(*in[0], [slope](double v) { return v > 0.0 ? v : slope * v; });
        },
        [slope](std::span<const Var> in, Var, Var g) {
            return std::vector<Var>{
                detail::masked_grad(g, in[0].value(), [slope](double v) { return v > 0.0 ? 1.0 : slope; })};
        });
}

inline Var abs(Var x) {
    return x.graph().record(
        "abs", {x}, [](std::span<const Tensor* const> in) { return detail::map(*in[0], [](double v) { return std::abs(v); }); },
        [](std::span<const Var> in, Var, Var g) {
            return std::vector<Var>{detail::masked_grad(
                g, in[0].value(), [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); })};
        });
}

inline Var tanh(Var x) {
    return x.graph().record(
        "tanh", {x}, [](std::span<const Tensor* const> in) { return detail::map(*in[0], [](double v) { return std::tanh(v); }); },
        [](std::span<const Var>, Var out, Var g) {
            return std::vector<Var>{mul(g, shift(neg(mul(out, out)), 1.0))};
        });
}

/// Unguarded; callers add their epsilon to the radicand where it can reach zero.
inline Var sqrt(Var x) {
    return x.graph().record(
        "sqrt", {x}, [](std::span<const Tensor* const> in) { return detail::map(*in[0], [](double v) { return std::sqrt(v); }); },
        [](std::span<const Var>, Var out, Var g) { return std::vector<Var>{div(scale(g, 0.5), out)}; });
}

/// Exact square root whose derivative is 0.5 / (sqrt(x) + eps), finite at 0.
inline Var guarded_sqrt(Var x, double eps) {
    return x.graph().record(
        "guarded_sqrt", {x},
        [](std::span<const Tensor* const> in) { return detail::map(*in[0], [](double v) { return std::sqrt(v); }); },
        [eps](std::span<const Var>, Var out, Var g) { return std::vector<Var>{div(scale(g, 0.5), shift(out, eps))}; });
}

inline Var exp(Var x) {
    return x.graph().record(
        "exp", {x}, [](std::span<const Tensor* const> in) { return detail::map(*in[0], [](double v) { return std::exp(v); }); },
        [](std::span<const Var>, Var out, Var g) { return std::vector<Var>{mul(g, out)}; });
}

/// Picks a where mask != 0, else b. The value is copied, never recomputed.
inline Var select(const Tensor& mask, Var a, Var b) {
    if (mask.shape() != a.shape() || a.shape() != b.shape())
        throw DimensionError("select: mask " + shape_str(mask.shape()) + ", operands " + shape_str(a.shape()) +
                             " / " + shape_str(b.shape()));
    return a.graph().record(
        "select", {a, b},
        [mask](std::span<const Tensor* const> in) {
            Tensor out(mask.shape());
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask[i] != 0.0 ? (*in[0])[i] : (*in[1])[i];
            return out;
        },
        [mask](std::span<const Var> in, Var, Var g) {
            Graph& gr = g.graph();
            Var ga = in[0].requires_grad() ? mul(g, gr.constant(detail::map(mask, [](double m) { return m != 0.0 ? 1.0 : 0.0; }))) : Var{};
            Var gb = in[1].requires_grad() ? mul(g, gr.constant(detail::map(mask, [](double m) { return m != 0.0 ? 0.0 : 1.0; }))) : Var{};
            return std::vector<Var>{ga, gb};
        });
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator+(Var a, double c) { return shift(a, c); }
inline Var operator-(Var a, double c) { return shift(a, -c); }

// ---------------------------------------------------------------------------
// reductions

Var broadcast_to(Var scalar, Shape shape);

inline Var sum(Var x) {
    if (x.size() == 0) throw DomainError("sum: empty tensor");
    Shape from = x.shape();
    return x.graph().record(
        "sum", {x},
        [](std::span<const Tensor* const> in) {
            double s = 0.0;
            for (double v : in[0]->values()) s += v;
            return Tensor::scalar(s);
        },
        [from](std::span<const Var>, Var, Var g) { return std::vector<Var>{broadcast_to(g, from)}; });
}

inline Var mean(Var x) {
    if (x.size() == 0) throw DomainError("mean: empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

inline Var broadcast_to(Var scalar, Shape shape) {
    if (scalar.size() != 1) throw DimensionError("broadcast_to: source must hold one element");
    return scalar.graph().record(
        "broadcast", {scalar},
        [shape](std::span<const Tensor* const> in) { return Tensor(shape, (*in[0])[0]); },
        [](std::span<const Var> in, Var, Var g) { return std::vector<Var>{reshape(sum(g), in[0].shape())}; });
}

// ---------------------------------------------------------------------------
// convolution family; conv_valid, tconv_valid and conv_weight_grad are
// closed under differentiation.

Var tconv_valid(Var y, Var k, std::size_t stride, Shape out_shape);
Var conv_weight_grad(Var x, Var g, std::size_t stride, Shape kshape);

inline Var conv_valid(Var x, Var k, std::size_t stride) {
    return x.graph().record(
        "conv2d", {x, k},
        [stride](std::span<const Tensor* const> in) { return kernels::conv_valid(*in[0], *in[1], stride); },
        [stride](std::span<const Var> in, Var, Var g) {
            Var gx = in[0].requires_grad() ? tconv_valid(g, in[1], stride, in[0].shape()) : Var{};
            Var gk = in[1].requires_grad() ? conv_weight_grad(in[0], g, stride, in[1].shape()) : Var{};
            return std::vector<Var>{gx, gk};
        });
}

inline Var tconv_valid(Var y, Var k, std::size_t stride, Shape out_shape) {
    return y.graph().record(
        "transpose_conv2d", {y, k},
        [stride, out_shape](std::span<const Tensor* const> in) {
            return kernels::tconv_valid(*in[0], *in[1], stride, out_shape);
        },
        [stride](std::span<const Var> in, Var, Var g) {
            Var gy = in[0].requires_grad() ? conv_valid(g, in[1], stride) : Var{};
            Var gk = in[1].requires_grad() ? conv_weight_grad(g, in[0], stride, in[1].shape()) : Var{};
            return std::vector<Var>{gy, gk};
        });
}

inline Var conv_weight_grad(Var x, Var g, std::size_t stride, Shape kshape) {
    return x.graph().record(
        "conv2d_weight_grad", {x, g},
        [stride, kshape](std::span<const Tensor* const> in) {
            return kernels::conv_weight_grad(*in[0], *in[1], stride, kshape);
        },
        [stride](std::span<const Var> in, Var, Var e) {
            Var gx = in[0].requires_grad() ? tconv_valid(in[1], e, stride, in[0].shape()) : Var{};
            Var gg = in[1].requires_grad() ? conv_valid(in[0], e, stride) : Var{};
            return std::vector<Var>{gx, gg};
        });
}

Var pad_adjoint(Var y, std::size_t p, PadMode mode);

inline Var pad(Var x, std::size_t p, PadMode mode) {
    if (p == 0) return x;
    return x.graph().record(
        "pad", {x}, [p, mode](std::span<const Tensor* const> in) { return kernels::pad(*in[0], p, mode); },
        [p, mode](std::span<const Var>, Var, Var g) { return std::vector<Var>{pad_adjoint(g, p, mode)}; });
}

inline Var pad_adjoint(Var y, std::size_t p, PadMode mode) {
    if (p == 0) return y;
    return y.graph().record(
        "pad_adjoint", {y}, [p, mode](std::span<const Tensor* const> in) { return kernels::pad_adjoint(*in[0], p, mode); },
        [p, mode](std::span<const Var>, Var, Var g) { return std::vector<Var>{pad(g, p, mode)}; });
}

struct ConvOptions {
    std::size_t stride = 1;
    std::size_t pad = 0;
    PadMode mode = PadMode::zero;
};

/// Cross-correlation of x [C_in,H,W] with k [C_out,C_in,kh,kw].
/// Output H' = floor((H + 2*pad - kh) / stride) + 1.
inline Var conv2d(Var x, Var k, ConvOptions opt = {}) {
    kernels::require_rank3(x.value(), "conv2d");
    kernels::require_rank4(k.value(), "conv2d");
    if (k.shape()[2] % 2 == 0 || k.shape()[3] % 2 == 0) throw DimensionError("conv2d: kernel sides must be odd");
    if (k.shape()[1] != x.shape()[0])
        throw DimensionError("conv2d: input has " + std::to_string(x.shape()[0]) + " channels, kernel expects " +
                             std::to_string(k.shape()[1]));
    return conv_valid(pad(x, opt.pad, opt.mode), k, opt.stride);
}

/// Convolution with pad = kernel radius, so stride 1 keeps H,W.
inline Var conv2d_same(Var x, Var k, std::size_t stride = 1, PadMode mode = PadMode::zero) {
    return conv2d(x, k, {stride, k.shape().at(2) / 2, mode});
}

/// Adjoint of conv2d(., k, {stride, pad, zero}). The output spatial size is
/// (H-1)*stride + kh - 2*pad unless `out_hw` overrides it (needed when the
/// forward conv floored away trailing rows/cols).
inline Var transpose_conv2d(Var y, Var k, std::size_t stride = 1, std::size_t pad_amount = 0,
                            std::optional<std::pair<std::size_t, std::size_t>> out_hw = std::nullopt) {
    kernels::require_rank3(y.value(), "transpose_conv2d");
    kernels::require_rank4(k.value(), "transpose_conv2d");
    if (stride == 0) throw DimensionError("transpose_conv2d: stride must be positive");
    if (k.shape()[0] != y.shape()[0])
        throw DimensionError("transpose_conv2d: input has " + std::to_string(y.shape()[0]) +
                             " channels, kernel expects " + std::to_string(k.shape()[0]));
    const std::size_t kh = k.shape()[2], kw = k.shape()[3];
    std::size_t H = (y.shape()[1] - 1) * stride + kh, W = (y.shape()[2] - 1) * stride + kw;
    if (out_hw) {
        H = out_hw->first + 2 * pad_amount;
        W = out_hw->second + 2 * pad_amount;
    }
    Var full = tconv_valid(y, k, stride, Shape{k.shape()[1], H, W});
    return pad_adjoint(full, pad_amount, PadMode::zero);
}

// ---------------------------------------------------------------------------
// layout ops, each paired with its adjoint

Var embed_channels(Var x, std::size_t begin, std::size_t total);

inline Var slice_channels(Var x, std::size_t begin, std::size_t count) {
    kernels::require_rank3(x.value(), "slice_channels");
    const std::size_t C = x.shape()[0];
    if (begin + count > C) throw DimensionError("slice_channels: range out of bounds");
    return x.graph().record(
        "slice_channels", {x},
        [begin, count](std::span<const Tensor* const> in) {
            const Tensor& t = *in[0];
            const std::size_t plane = t.dim(1) * t.dim(2);
            Tensor out(Shape{count, t.dim(1), t.dim(2)});
            std::copy_n(t.values().begin() + begin * plane, count * plane, out.values().begin());
            return out;
        },
        [begin, C](std::span<const Var>, Var, Var g) { return std::vector<Var>{embed_channels(g, begin, C)}; });
}

inline Var embed_channels(Var x, std::size_t begin, std::size_t total) {
    kernels::require_rank3(x.value(), "embed_channels");
    const std::size_t count = x.shape()[0];
    if (begin + count > total) throw DimensionError("embed_channels: range out of bounds");
    return x.graph().record(
        "embed_channels", {x},
        [begin, total](std::span<const Tensor* const> in) {
            const Tensor& t = *in[0];
            const std::size_t plane = t.dim(1) * t.dim(2);
            Tensor out(Shape{total, t.dim(1), t.dim(2)});
            std::copy_n(t.values().begin(), t.size(), out.values().begin() + begin * plane);
            return out;
        },
        [begin, count](std::span<const Var>, Var, Var g) { return std::vector<Var>{slice_channels(g, begin, count)}; });
}

inline Var concat_channels(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("concat_channels: no inputs");
    const std::size_t H = parts[0].shape().at(1), W = parts[0].shape().at(2);
    std::vector<std::size_t> offsets;
    std::size_t total = 0;
    for (const Var& p : parts) {
        kernels::require_rank3(p.value(), "concat_channels");
        if (p.shape()[1] != H || p.shape()[2] != W) throw DimensionError("concat_channels: spatial size mismatch");
        offsets.push_back(total);
        total += p.shape()[0];
    }
    return parts[0].graph().record(
        "concat_channels", parts,
        [total, H, W](std::span<const Tensor* const> in) {
            Tensor out(Shape{total, H, W});
            auto it = out.values().begin();
            for (const Tensor* t : in) it = std::copy(t->values().begin(), t->values().end(), it);
            return out;
        },
        [offsets](std::span<const Var> in, Var, Var g) {
            std::vector<Var> gs;
            for (std::size_t i = 0; i < in.size(); ++i)
                gs.push_back(in[i].requires_grad() ? slice_channels(g, offsets[i], in[i].shape()[0]) : Var{});
            return gs;
        });
}

Var expand_channels(Var x, std::size_t channels);

/// [C,H,W] -> [1,H,W]
inline Var channel_sum(Var x) {
    kernels::require_rank3(x.value(), "channel_sum");
    const std::size_t C = x.shape()[0];
    return x.graph().record(
        "channel_sum", {x},
        [](std::span<const Tensor* const> in) {
            const Tensor& t = *in[0];
            const std::size_t plane = t.dim(1) * t.dim(2);
            Tensor out(Shape{1, t.dim(1), t.dim(2)});
            for (std::size_t c = 0; c < t.dim(0); ++c)
                for (std::size_t i = 0; i < plane; ++i) out[i] += t[c * plane + i];
            return out;
        },
        [C](std::span<const Var>, Var, Var g) { return std::vector<Var>{expand_channels(g, C)}; });
}

/// [1,H,W] -> [C,H,W]
inline Var expand_channels(Var x, std::size_t channels) {
    kernels::require_rank3(x.value(), "expand_channels");
    if (x.shape()[0] != 1) throw DimensionError("expand_channels: source must have one channel");
    return x.graph().record(
        "expand_channels", {x},
        [channels](std::span<const Tensor* const> in) {
            const Tensor& t = *in[0];
            Tensor out(Shape{channels, t.dim(1), t.dim(2)});
            for (std::size_t c = 0; c < channels; ++c)
                std::copy(t.values().begin(), t.values().end(), out.values().begin() + c * t.size());
            return out;
        },
        [](std::span<const Var>, Var, Var g) { return std::vector<Var>{channel_sum(g)}; });
}

Var expand_spatial(Var x, std::size_t h, std::size_t w);

/// [C,H,W] -> [C]
inline Var spatial_sum(Var x) {
    kernels::require_rank3(x.value(), "spatial_sum");
    const std::size_t H = x.shape()[1], W = x.shape()[2];
    return x.graph().record(
        "spatial_sum", {x},
        [](std::span<const Tensor* const> in) {
            const Tensor& t = *in[0];
            const std::size_t plane = t.dim(1) * t.dim(2);
            Tensor out(Shape{t.dim(0)});
            for (std::size_t c = 0; c < t.dim(0); ++c) {
                double s = 0.0;
                for (std::size_t i = 0; i < plane; ++i) s += t[c * plane + i];
                out[c] = s;
            }
            return out;
        },
        [H, W](std::span<const Var>, Var, Var g) { return std::vector<Var>{expand_spatial(g, H, W)}; });
}

inline Var spatial_mean(Var x) {
    return scale(spatial_sum(x), 1.0 / static_cast<double>(x.shape().at(1) * x.shape().at(2)));
}

/// [C] -> [C,H,W]
inline Var expand_spatial(Var x, std::size_t h, std::size_t w) {
    if (x.shape().size() != 1) throw DimensionError("expand_spatial: source must be a vector");
    return x.graph().record(
        "expand_spatial", {x},
        [h, w](std::span<const Tensor* const> in) {
            const Tensor& t = *in[0];
            Tensor out(Shape{t.size(), h, w});
            for (std::size_t c = 0; c < t.size(); ++c)
                std::fill_n(out.values().begin() + c * h * w, h * w, t[c]);
            return out;
        },
        [](std::span<const Var>, Var, Var g) { return std::vector<Var>{spatial_sum(g)}; });
}

Var sumpool2(Var x);

/// Nearest-neighbour 2x upsampling.
inline Var upsample2(Var x) {
    kernels::require_rank3(x.value(), "upsample2");
    return x.graph().record(
        "upsample2", {x},
        [](std::span<const Tensor* const> in) {
            const Tensor& t = *in[0];
            const std::size_t C = t.dim(0), H = t.dim(1), W = t.dim(2);
            Tensor out(Shape{C, 2 * H, 2 * W});
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t i = 0; i < 2 * H; ++i)
                    for (std::size_t j = 0; j < 2 * W; ++j) out.at(c, i, j) = t.at(c, i / 2, j / 2);
            return out;
        },
        [](std::span<const Var>, Var, Var g) { return std::vector<Var>{sumpool2(g)}; });
}

/// 2x2 sum pooling; adjoint of upsample2.
inline Var sumpool2(Var x) {
    kernels::require_rank3(x.value(), "sumpool2");
    if (x.shape()[1] % 2 || x.shape()[2] % 2) throw DimensionError("sumpool2: odd spatial size");
    return x.graph().record(
        "sumpool2", {x},
        [](std::span<const Tensor* const> in) {
            const Tensor& t = *in[0];
            const std::size_t C = t.dim(0), H = t.dim(1) / 2, W = t.dim(2) / 2;
            Tensor out(Shape{C, H, W});
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t i = 0; i < 2 * H; ++i)
                    for (std::size_t j = 0; j < 2 * W; ++j) out.at(c, i / 2, j / 2) += t.at(c, i, j);
            return out;
        },
        [](std::span<const Var>, Var, Var g) { return std::vector<Var>{upsample2(g)}; });
}

Var uncrop(Var x, std::size_t top, std::size_t left, std::size_t height, std::size_t width);

/// Spatial window [top, top+h) x [left, left+w).
inline Var crop(Var x, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
    kernels::require_rank3(x.value(), "crop");
    const std::size_t H = x.shape()[1], W = x.shape()[2];
    if (top + h > H || left + w > W) throw DimensionError("crop: window exceeds image");
    return x.graph().record(
        "crop", {x},
        [top, left, h, w](std::span<const Tensor* const> in) {
            const Tensor& t = *in[0];
            Tensor out(Shape{t.dim(0), h, w});
            for (std::size_t c = 0; c < t.dim(0); ++c)
                for (std::size_t i = 0; i < h; ++i)
                    for (std::size_t j = 0; j < w; ++j) out.at(c, i, j) = t.at(c, top + i, left + j);
            return out;
        },
        [top, left, H, W](std::span<const Var>, Var, Var g) { return std::vector<Var>{uncrop(g, top, left, H, W)}; });
}

/// Places x into a zero [C,height,width] canvas at (top,left); adjoint of crop.
inline Var uncrop(Var x, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
    kernels::require_rank3(x.value(), "uncrop");
    const std::size_t h = x.shape()[1], w = x.shape()[2];
    if (top + h > height || left + w > width) throw DimensionError("uncrop: window exceeds canvas");
    return x.graph().record(
        "uncrop", {x},
        [top, left, height, width](std::span<const Tensor* const> in) {
            const Tensor& t = *in[0];
            Tensor out(Shape{t.dim(0), height, width});
            for (std::size_t c = 0; c < t.dim(0); ++c)
                for (std::size_t i = 0; i < t.dim(1); ++i)
                    for (std::size_t j = 0; j < t.dim(2); ++j) out.at(c, top + i, left + j) = t.at(c, i, j);
            return out;
        },
        [top, left, h, w](std::span<const Var>, Var, Var g) { return std::vector<Var>{crop(g, top, left, h, w)}; });
}

// ---------------------------------------------------------------------------
// finite-difference checking

using ScalarFn = std::function<Var(Graph&, Var)>;

/// max_i |analytic_i - numeric_i| / max(1, |analytic_i|, |numeric_i|) with
/// central differences of step h.
inline double grad_check(const ScalarFn& f, const Tensor& input, double h = 1e-5) {
    Tensor analytic;
    {
        Graph g;
        Var x = g.param(input);
        Var y = f(g, x);
        g.backward(y);
        analytic = g.grad(x);
    }
    auto eval = [&](const Tensor& t) {
        Graph g;
        g.set_grad_enabled(false);
        return f(g, g.constant(t)).value().item();
    };
    double worst = 0.0;
    Tensor probe = input;
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double x0 = probe[i];
        probe[i] = x0 + h;
        const double fp = eval(probe);
        probe[i] = x0 - h;
        const double fm = eval(probe);
        probe[i] = x0;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic[i];
        const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
        worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    return worst;
}

}  // namespace depthgan::ad
