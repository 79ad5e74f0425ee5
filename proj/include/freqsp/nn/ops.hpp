#pragma once

// Differentiable ops over NCHW tensors. Each op computes its forward value and
// registers a closure that accumulates gradients into the parents.

#include <algorithm>
#include <cmath>
#include <vector>

#include "freqsp/error.hpp"
#include "freqsp/nn/tensor.hpp"

namespace freqsp::nn {

inline constexpr double kLeakySlope = 0.01;

namespace detail_ops {

inline void require_rank4(const Tensor& t, const char* op) {
    if (t.rank() != 4) throw ContractError(std::string(op) + ": expected NCHW tensor, got " + shape_str(t.shape()));
}

inline void accumulate(Node& parent, const Tensor& g) {
    if (!parent.requires_grad) return;
    auto& dst = parent.grad_buffer().data();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

} // namespace detail_ops

struct ConvSpec {
    int stride = 1;
    int pad = 0;
    int groups = 1;
};

inline int conv_out_dim(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// Grouped 2-D convolution. x: [N, Cin, H, W], w: [Cout, Cin/groups, k, k],
// b: [Cout]. groups == Cin == Cout gives a depthwise convolution.
inline Var conv2d(const Var& x, const Var& w, const Var& b, ConvSpec spec = {}) {
    const Tensor& X = x.value();
    const Tensor& W = w.value();
    detail_ops::require_rank4(X, "conv2d");
    detail_ops::require_rank4(W, "conv2d weight");
    const int N = X.dim(0), Ci = X.dim(1), H = X.dim(2), Wd = X.dim(3);
    const int Co = W.dim(0), Cg = W.dim(1), K = W.dim(2);
    const int G = spec.groups, S = spec.stride, P = spec.pad;
    if (W.dim(3) != K || G < 1 || Ci % G != 0 || Co % G != 0 || Cg != Ci / G)
        throw ContractError("conv2d: weight " + shape_str(W.shape()) + " incompatible with input " +
                            shape_str(X.shape()) + " and groups " + std::to_string(G));
    if (b.value().size() != static_cast<size_t>(Co)) throw ContractError("conv2d: bias size mismatch");
    if (S < 1 || P < 0) throw ContractError("conv2d: bad stride or padding");
    const int Ho = conv_out_dim(H, K, S, P), Wo = conv_out_dim(Wd, K, S, P);
    if (Ho < 1 || Wo < 1) throw ContractError("conv2d: input smaller than kernel");
    const int cog = Co / G;

    Tensor Y({N, Co, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co) {
            const int g = co / cog;
            double* y = &Y.at(n, co, 0, 0);
            std::fill(y, y + static_cast<size_t>(Ho) * Wo, b.value()[co]);
            for (int cg = 0; cg < Cg; ++cg) {
                const double* xin = &X.at(n, g * Cg + cg, 0, 0);
                for (int kh = 0; kh < K; ++kh)
                    for (int kw = 0; kw < K; ++kw) {
                        const double wv = W.at(co, cg, kh, kw);
                        for (int oh = 0; oh < Ho; ++oh) {
                            const int ih = oh * S - P + kh;
                            if (ih < 0 || ih >= H) continue;
                            const double* xr = xin + static_cast<size_t>(ih) * Wd;
                            double* yr = y + static_cast<size_t>(oh) * Wo;
                            for (int ow = 0; ow < Wo; ++ow) {
                                const int iw = ow * S - P + kw;
                                if (iw >= 0 && iw < Wd) yr[ow] += wv * xr[iw];
                            }
                        }
                    }
            }
        }

    return Var::from_op(std::move(Y), {x, w, b}, [=](Node& self) {
        Node& nx = *self.parents[0];
        Node& nw = *self.parents[1];
        Node& nb = *self.parents[2];
        const Tensor& dY = self.grad;
        const Tensor& Xv = nx.value;
        const Tensor& Wv = nw.value;
        double* dX = nx.requires_grad ? nx.grad_buffer().ptr() : nullptr;
        double* dW = nw.requires_grad ? nw.grad_buffer().ptr() : nullptr;
        double* dB = nb.requires_grad ? nb.grad_buffer().ptr() : nullptr;
        for (int n = 0; n < N; ++n)
            for (int co = 0; co < Co; ++co) {
                const int g = co / cog;
                const double* dy = &dY.at(n, co, 0, 0);
                if (dB) {
                    double s = 0;
                    for (size_t i = 0; i < static_cast<size_t>(Ho) * Wo; ++i) s += dy[i];
                    dB[co] += s;
                }
                for (int cg = 0; cg < Cg; ++cg) {
                    const int ci = g * Cg + cg;
                    const double* xin = &Xv.at(n, ci, 0, 0);
                    double* dxin = dX ? dX + ((static_cast<size_t>(n) * Ci + ci) * H) * Wd : nullptr;
                    for (int kh = 0; kh < K; ++kh)
                        for (int kw = 0; kw < K; ++kw) {
                            const double wv = Wv.at(co, cg, kh, kw);
                            double dw = 0.0;
                            for (int oh = 0; oh < Ho; ++oh) {
                                const int ih = oh * S - P + kh;
                                if (ih < 0 || ih >= H) continue;
                                const double* dyr = dy + static_cast<size_t>(oh) * Wo;
                                const double* xr = xin + static_cast<size_t>(ih) * Wd;
                                double* dxr = dxin ? dxin + static_cast<size_t>(ih) * Wd : nullptr;
                                for (int ow = 0; ow < Wo; ++ow) {
                                    const int iw = ow * S - P + kw;
                                    if (iw < 0 || iw >= Wd) continue;
                                    dw += dyr[ow] * xr[iw];
                                    if (dxr) dxr[iw] += wv * dyr[ow];
                                }
                            }
                            if (dW) dW[((static_cast<size_t>(co) * Cg + cg) * K + kh) * K + kw] += dw;
                        }
                }
            }
    });
}

inline Var depthwise_conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    return conv2d(x, w, b, {stride, pad, x.value().dim(1)});
}

// 1x1 convolution.
inline Var linear(const Var& x, const Var& w, const Var& b) { return conv2d(x, w, b, {1, 0, 1}); }

// k x k average pooling with stride s and no padding.
inline Var avg_pool(const Var& x, int k, int s) {
    const Tensor& X = x.value();
    detail_ops::require_rank4(X, "avg_pool");
    const int N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
    if (k < 1 || s < 1 || H < k || W < k) throw ContractError("avg_pool: bad window for " + shape_str(X.shape()));
    const int Ho = (H - k) / s + 1, Wo = (W - k) / s + 1;
    const double inv = 1.0 / (k * k);
    Tensor Y({N, C, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) {
                    double acc = 0;
                    for (int i = 0; i < k; ++i)
                        for (int j = 0; j < k; ++j) acc += X.at(n, c, oh * s + i, ow * s + j);
                    Y.at(n, c, oh, ow) = acc * inv;
                }
    return Var::from_op(std::move(Y), {x}, [=](Node& self) {
        Node& nx = *self.parents[0];
        if (!nx.requires_grad) return;
        Tensor& dX = nx.grad_buffer();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int oh = 0; oh < Ho; ++oh)
                    for (int ow = 0; ow < Wo; ++ow) {
                        const double g = self.grad.at(n, c, oh, ow) * inv;
                        for (int i = 0; i < k; ++i)
                            for (int j = 0; j < k; ++j) dX.at(n, c, oh * s + i, ow * s + j) += g;
                    }
    });
}

// [N, C, H, W] -> [N, C, 1, 1]
inline Var global_avg_pool(const Var& x) {
    const Tensor& X = x.value();
    detail_ops::require_rank4(X, "global_avg_pool");
    const int N = X.dim(0), C = X.dim(1);
    const size_t hw = static_cast<size_t>(X.dim(2)) * X.dim(3);
    Tensor Y({N, C, 1, 1});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double* p = &X.at(n, c, 0, 0);
            double s = 0;
            for (size_t i = 0; i < hw; ++i) s += p[i];
            Y.at(n, c, 0, 0) = s / static_cast<double>(hw);
        }
    return Var::from_op(std::move(Y), {x}, [=](Node& self) {
        Node& nx = *self.parents[0];
        if (!nx.requires_grad) return;
        Tensor& dX = nx.grad_buffer();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const double g = self.grad.at(n, c, 0, 0) / static_cast<double>(hw);
                double* p = &dX.at(n, c, 0, 0);
                for (size_t i = 0; i < hw; ++i) p[i] += g;
            }
    });
}

// Elementwise op with derivative expressed in terms of the input.
template <typename F, typename D>
Var unary(const Var& x, F f, D df) {
    Tensor Y = x.value();
    for (auto& v : Y.data()) v = f(v);
    return Var::from_op(std::move(Y), {x}, [df](Node& self) {
        Node& nx = *self.parents[0];
        if (!nx.requires_grad) return;
        auto& dX = nx.grad_buffer().data();
        const auto& X = nx.value.data();
        for (size_t i = 0; i < dX.size(); ++i) dX[i] += self.grad[i] * df(X[i]);
    });
}

// Derivative at the origin taken as 0.
inline Var leaky_relu(const Var& x, double slope = kLeakySlope) {
    return unary(
        x, [slope](double v) { return v > 0 ? v : slope * v; },
        [slope](double v) { return v > 0 ? 1.0 : (v < 0 ? slope : 0.0); });
}

// clamp(x / 6 + 1/2, 0, 1)
inline Var hard_sigmoid(const Var& x) {
    return unary(
        x, [](double v) { return std::clamp(v / 6.0 + 0.5, 0.0, 1.0); },
        [](double v) { return (v > -3.0 && v < 3.0) ? 1.0 / 6.0 : 0.0; });
}

inline Var add(const Var& a, const Var& b) {
    if (a.shape() != b.shape())
        throw ContractError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor Y = a.value();
    for (size_t i = 0; i < Y.size(); ++i) Y[i] += b.value()[i];
    return Var::from_op(std::move(Y), {a, b}, [](Node& self) {
        detail_ops::accumulate(*self.parents[0], self.grad);
        detail_ops::accumulate(*self.parents[1], self.grad);
    });
}

// x: [N, C, H, W] scaled per channel by g: [N, C, 1, 1].
inline Var scale_channels(const Var& x, const Var& g) {
    const Tensor& X = x.value();
    detail_ops::require_rank4(X, "scale_channels");
    const int N = X.dim(0), C = X.dim(1);
    if (g.shape() != Shape{N, C, 1, 1}) throw ContractError("scale_channels: gate shape mismatch");
    const size_t hw = static_cast<size_t>(X.dim(2)) * X.dim(3);
    Tensor Y = X;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double s = g.value().at(n, c, 0, 0);
            double* p = &Y.at(n, c, 0, 0);
            for (size_t i = 0; i < hw; ++i) p[i] *= s;
        }
    return Var::from_op(std::move(Y), {x, g}, [=](Node& self) {
        Node& nx = *self.parents[0];
        Node& ng = *self.parents[1];
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const double* dy = &self.grad.at(n, c, 0, 0);
                const double s = ng.value.at(n, c, 0, 0);
                if (nx.requires_grad) {
                    double* dx = &nx.grad_buffer().at(n, c, 0, 0);
                    for (size_t i = 0; i < hw; ++i) dx[i] += dy[i] * s;
                }
                if (ng.requires_grad) {
                    const double* xv = &nx.value.at(n, c, 0, 0);
                    double acc = 0;
                    for (size_t i = 0; i < hw; ++i) acc += dy[i] * xv[i];
                    ng.grad_buffer().at(n, c, 0, 0) += acc;
                }
            }
    });
}

// Sum of (x * weights) over all elements; handy as a scalar probe in tests.
inline Var dot(const Var& x, const Tensor& weights) {
    if (x.value().size() != weights.size()) throw ContractError("dot: size mismatch");
    double s = 0;
    for (size_t i = 0; i < weights.size(); ++i) s += x.value()[i] * weights[i];
    return Var::from_op(Tensor({1}, s), {x}, [weights](Node& self) {
        Node& nx = *self.parents[0];
        if (!nx.requires_grad) return;
        auto& dX = nx.grad_buffer().data();
        for (size_t i = 0; i < dX.size(); ++i) dX[i] += self.grad[0] * weights[i];
    });
}

} // namespace freqsp::nn
