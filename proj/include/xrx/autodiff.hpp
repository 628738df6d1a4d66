#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "xrx/errors.hpp"
#include "xrx/network.hpp"
#include "xrx/tensor.hpp"
#include "xrx/util.hpp"

namespace xrx {

enum class Mode { Train, Eval };

// Everything forward() computed: the input to every layer (acts[i]), the final
// posterior (acts[L]), pre-softmax scores, and the bookkeeping backward() needs
// (dropout masks, max-pool winners). Tied to the network parameter version.
struct ForwardCache {
    std::vector<Tensor4> acts;               // acts[i] = input of layer i; acts[L] = output
    Tensor4 scores;                          // pre-softmax, (n, K, 1, 1)
    std::vector<std::vector<std::uint8_t>> dropout_masks;  // per layer, train mode only
    std::vector<std::vector<std::size_t>> pool_argmax;     // per layer, flat input indices
    std::uint64_t net_version = 0;
    Mode mode = Mode::Eval;

    const Tensor4& posterior() const { return acts.back(); }
    const Tensor4& layer_input(std::size_t i) const { return acts[i]; }
    const Tensor4& layer_output(std::size_t i) const { return acts[i + 1]; }
};

// Gradients of J = sum_{n,k} seed[n][k] * score[n][k] with respect to every
// parameter and every cached activation. Softmax is excluded from propagation;
// the seed applies at the pre-softmax scores.
struct GradientSet {
    std::vector<LayerParams> param_grads;  // congruent with network params
    std::vector<Tensor4> input_grads;      // input_grads[i] = dJ/d(input of layer i)

    const Tensor4& wrt_input(std::size_t i) const { return input_grads[i]; }
    // gradient with respect to the output of layer i (== input of layer i+1)
    const Tensor4& wrt_output(std::size_t i) const { return input_grads[i + 1]; }
};

namespace detail {

inline void conv2d_forward(const LayerSpec& l, const LayerParams& p, const Tensor4& x,
                           Tensor4& y) {
    const std::size_t oh = y.h, ow = y.w;
    const int K = l.kernel, S = l.stride, P = l.pad;
    std::vector<double> acc(oh * ow);
    for (std::size_t in = 0; in < x.n; ++in) {
        for (int oc = 0; oc < l.out_channels; ++oc) {
            std::fill(acc.begin(), acc.end(), static_cast<double>(p.bias[oc]));
            for (int ic = 0; ic < l.in_channels; ++ic) {
                const float* xp = x.plane(in, ic);
                const float* wp =
                    p.weights.data() + (static_cast<std::size_t>(oc) * l.in_channels + ic) * K * K;
                for (int ky = 0; ky < K; ++ky) {
                    for (int kx = 0; kx < K; ++kx) {
                        const double wv = wp[ky * K + kx];
                        if (wv == 0.0) continue;
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            const long iy = static_cast<long>(oy) * S + ky - P;
                            if (iy < 0 || iy >= static_cast<long>(x.h)) continue;
                            const float* row = xp + iy * x.w;
                            double* arow = acc.data() + oy * ow;
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                                const long ix = static_cast<long>(ox) * S + kx - P;
                                if (ix < 0 || ix >= static_cast<long>(x.w)) continue;
                                arow[ox] += wv * row[ix];
                            }
                        }
                    }
                }
            }
            float* yp = y.plane(in, oc);
            for (std::size_t i = 0; i < oh * ow; ++i) yp[i] = static_cast<float>(acc[i]);
        }
    }
}

inline void conv2d_backward(const LayerSpec& l, const LayerParams& p, const Tensor4& x,
                            const Tensor4& dy, Tensor4& dx, LayerParams& dp) {
    const std::size_t oh = dy.h, ow = dy.w;
    const int K = l.kernel, S = l.stride, P = l.pad;
    std::vector<double> dwacc(p.weights.size(), 0.0);
    std::vector<double> dbacc(p.bias.size(), 0.0);
    std::vector<double> dxacc(x.c * x.h * x.w);
    for (std::size_t in = 0; in < x.n; ++in) {
        std::fill(dxacc.begin(), dxacc.end(), 0.0);
        for (int oc = 0; oc < l.out_channels; ++oc) {
            const float* dyp = dy.plane(in, oc);
            double db = 0.0;
            for (std::size_t i = 0; i < oh * ow; ++i) db += dyp[i];
            dbacc[oc] += db;
            for (int ic = 0; ic < l.in_channels; ++ic) {
                const float* xp = x.plane(in, ic);
                double* dxp = dxacc.data() + static_cast<std::size_t>(ic) * x.h * x.w;
                const std::size_t wbase =
                    (static_cast<std::size_t>(oc) * l.in_channels + ic) * K * K;
                for (int ky = 0; ky < K; ++ky) {
                    for (int kx = 0; kx < K; ++kx) {
                        const double wv = p.weights[wbase + ky * K + kx];
                        double dw = 0.0;
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            const long iy = static_cast<long>(oy) * S + ky - P;
                            if (iy < 0 || iy >= static_cast<long>(x.h)) continue;
                            const float* xrow = xp + iy * x.w;
                            double* dxrow = dxp + iy * x.w;
                            const float* dyrow = dyp + oy * ow;
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                                const long ix = static_cast<long>(ox) * S + kx - P;
                                if (ix < 0 || ix >= static_cast<long>(x.w)) continue;
                                const double g = dyrow[ox];
                                dw += g * xrow[ix];
                                dxrow[ix] += g * wv;
                            }
                        }
                        dwacc[wbase + ky * K + kx] += dw;
                    }
                }
            }
        }
        float* out = dx.plane(in, 0);
        for (std::size_t i = 0; i < dxacc.size(); ++i) out[i] = static_cast<float>(dxacc[i]);
    }
    for (std::size_t i = 0; i < dwacc.size(); ++i)
        dp.weights[i] = static_cast<float>(dwacc[i]);
    for (std::size_t i = 0; i < dbacc.size(); ++i) dp.bias[i] = static_cast<float>(dbacc[i]);
}

inline void softmax_rows(const Tensor4& scores, Tensor4& post) {
    const std::size_t K = scores.c;
    for (std::size_t in = 0; in < scores.n; ++in) {
        const float* s = scores.v.data() + in * K;
        float* o = post.v.data() + in * K;
        double mx = s[0];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(s[k]));
        double sum = 0.0;
        std::vector<double> e(K);
        for (std::size_t k = 0; k < K; ++k) {
            e[k] = std::exp(static_cast<double>(s[k]) - mx);
            sum += e[k];
        }
        for (std::size_t k = 0; k < K; ++k) o[k] = static_cast<float>(e[k] / sum);
    }
}

}  // namespace detail

// Runs the layer chain over a batch. Eval mode is deterministic; train mode
// draws dropout masks from `seed`.
inline ForwardCache forward(const Network& net, const Tensor4& batch, Mode mode = Mode::Eval,
                            std::uint64_t seed = 0) {
    const Shape3& in = net.input_shape();
    if (batch.c != in.c || batch.h != in.h || batch.w != in.w)
        throw ShapeMismatch("forward: batch " + batch.shape_str() + " incompatible with input (" +
                            std::to_string(in.c) + "," + std::to_string(in.h) + "," +
                            std::to_string(in.w) + ")");
    if (batch.n == 0) throw ShapeMismatch("forward: empty batch");

    ForwardCache cache;
    cache.net_version = net.version();
    cache.mode = mode;
    cache.dropout_masks.resize(net.layer_count());
    cache.pool_argmax.resize(net.layer_count());
    cache.acts.reserve(net.layer_count() + 1);
    cache.acts.push_back(batch);

    for (std::size_t li = 0; li < net.layer_count(); ++li) {
        const LayerSpec& l = net.layer(li);
        const Tensor4& x = cache.acts.back();
        const Shape3& os = net.output_shape(li);
        Tensor4 y(x.n, os.c, os.h, os.w);
        switch (l.kind) {
            case LayerKind::Conv2d:
                detail::conv2d_forward(l, net.params(li), x, y);
                break;
            case LayerKind::Relu:
                for (std::size_t i = 0; i < x.size(); ++i) y.v[i] = x.v[i] > 0.0f ? x.v[i] : 0.0f;
                break;
            case LayerKind::MaxPool2d: {
                auto& arg = cache.pool_argmax[li];
                arg.resize(y.size());
                const int K = l.kernel, S = l.stride;
                for (std::size_t in_ = 0; in_ < x.n; ++in_)
                    for (std::size_t ic = 0; ic < x.c; ++ic) {
                        const float* xp = x.plane(in_, ic);
                        float* yp = y.plane(in_, ic);
                        for (std::size_t oy = 0; oy < y.h; ++oy)
                            for (std::size_t ox = 0; ox < y.w; ++ox) {
                                std::size_t best = (oy * S) * x.w + ox * S;
                                float bv = xp[best];
                                for (int ky = 0; ky < K; ++ky)
                                    for (int kx = 0; kx < K; ++kx) {
                                        const std::size_t idx =
                                            (oy * S + ky) * x.w + (ox * S + kx);
                                        if (xp[idx] > bv) {
                                            bv = xp[idx];
                                            best = idx;
                                        }
                                    }
                                yp[oy * y.w + ox] = bv;
                                arg[((in_ * x.c + ic) * y.h + oy) * y.w + ox] =
                                    (in_ * x.c + ic) * x.h * x.w + best;
                            }
                    }
                break;
            }
            case LayerKind::GlobalAvgPool: {
                const double z = static_cast<double>(x.h) * x.w;
                for (std::size_t in_ = 0; in_ < x.n; ++in_)
                    for (std::size_t ic = 0; ic < x.c; ++ic) {
                        const float* xp = x.plane(in_, ic);
                        double s = 0.0;
                        for (std::size_t i = 0; i < x.h * x.w; ++i) s += xp[i];
                        y.at(in_, ic, 0, 0) = static_cast<float>(s / z);
                    }
                break;
            }
            case LayerKind::Dense: {
                const LayerParams& p = net.params(li);
                const std::size_t F = static_cast<std::size_t>(l.in_features);
                for (std::size_t in_ = 0; in_ < x.n; ++in_) {
                    const float* xp = x.v.data() + in_ * F;
                    for (int j = 0; j < l.out_features; ++j) {
                        const float* wp = p.weights.data() + static_cast<std::size_t>(j) * F;
                        double acc = p.bias[j];
                        for (std::size_t i = 0; i < F; ++i) acc += static_cast<double>(wp[i]) * xp[i];
                        y.at(in_, j, 0, 0) = static_cast<float>(acc);
                    }
                }
                break;
            }
            case LayerKind::Dropout: {
                if (mode == Mode::Train && l.rate > 0.0f) {
                    Rng rng(derive_seed(seed, 0xD0 + li));
                    auto& mask = cache.dropout_masks[li];
                    mask.resize(x.size());
                    const float scale = 1.0f / (1.0f - l.rate);
                    for (std::size_t i = 0; i < x.size(); ++i) {
                        mask[i] = rng.uniform() >= l.rate ? 1 : 0;
                        y.v[i] = mask[i] ? x.v[i] * scale : 0.0f;
                    }
                } else {
                    y.v = x.v;
                }
                break;
            }
            case LayerKind::Softmax:
                cache.scores = x;
                detail::softmax_rows(x, y);
                break;
        }
        cache.acts.push_back(std::move(y));
    }
    return cache;
}

// Reverse pass for J = sum over batch items and classes of seed * score.
// `seed_grad` is one per-class vector per batch item, length n*K (so just the
// per-class vector for a single-sample batch).
inline GradientSet backward(const Network& net, const ForwardCache& cache,
                            const std::vector<float>& seed_grad) {
    if (cache.net_version != net.version())
        throw StaleCache("backward: network parameters changed since forward");
    const std::size_t L = net.layer_count();
    const Tensor4& scores = cache.scores;
    if (seed_grad.size() != scores.n * scores.c)
        throw ShapeMismatch("backward: seed gradient length " +
                            std::to_string(seed_grad.size()) + " != n*K");

    GradientSet g;
    g.param_grads.resize(L);
    for (std::size_t i = 0; i < L; ++i) {
        g.param_grads[i].weights.assign(net.params(i).weights.size(), 0.0f);
        g.param_grads[i].bias.assign(net.params(i).bias.size(), 0.0f);
    }
    g.input_grads.resize(L);

    // gradient flowing into the top of the chain: d J / d scores
    Tensor4 dy(scores.n, scores.c, 1, 1);
    dy.v = seed_grad;

    for (std::size_t li = L; li-- > 0;) {
        const LayerSpec& l = net.layer(li);
        const Tensor4& x = cache.layer_input(li);
        Tensor4 dx(x.n, x.c, x.h, x.w);
        switch (l.kind) {
            case LayerKind::Softmax:
                // seed is defined at the pre-softmax scores
                dx.v = dy.v;
                break;
            case LayerKind::Conv2d:
                detail::conv2d_backward(l, net.params(li), x, dy, dx, g.param_grads[li]);
                break;
            case LayerKind::Relu:
                for (std::size_t i = 0; i < x.size(); ++i)
                    dx.v[i] = x.v[i] > 0.0f ? dy.v[i] : 0.0f;
                break;
            case LayerKind::MaxPool2d: {
                const auto& arg = cache.pool_argmax[li];
                for (std::size_t i = 0; i < dy.size(); ++i) dx.v[arg[i]] += dy.v[i];
                break;
            }
            case LayerKind::GlobalAvgPool: {
                const float z = static_cast<float>(x.h * x.w);
                for (std::size_t in_ = 0; in_ < x.n; ++in_)
                    for (std::size_t ic = 0; ic < x.c; ++ic) {
                        const float gv = dy.at(in_, ic, 0, 0) / z;
                        float* dxp = dx.plane(in_, ic);
                        for (std::size_t i = 0; i < x.h * x.w; ++i) dxp[i] = gv;
                    }
                break;
            }
            case LayerKind::Dense: {
                const LayerParams& p = net.params(li);
                LayerParams& dp = g.param_grads[li];
                const std::size_t F = static_cast<std::size_t>(l.in_features);
                std::vector<double> dwacc(p.weights.size(), 0.0);
                std::vector<double> dbacc(p.bias.size(), 0.0);
                std::vector<double> dxacc(F);
                for (std::size_t in_ = 0; in_ < x.n; ++in_) {
                    const float* xp = x.v.data() + in_ * F;
                    std::fill(dxacc.begin(), dxacc.end(), 0.0);
                    for (int j = 0; j < l.out_features; ++j) {
                        const double gj = dy.at(in_, j, 0, 0);
                        dbacc[j] += gj;
                        const float* wp = p.weights.data() + static_cast<std::size_t>(j) * F;
                        double* dwp = dwacc.data() + static_cast<std::size_t>(j) * F;
                        for (std::size_t i = 0; i < F; ++i) {
                            dwp[i] += gj * xp[i];
                            dxacc[i] += gj * wp[i];
                        }
                    }
                    float* dxp = dx.v.data() + in_ * F;
                    for (std::size_t i = 0; i < F; ++i) dxp[i] = static_cast<float>(dxacc[i]);
                }
                for (std::size_t i = 0; i < dwacc.size(); ++i)
                    dp.weights[i] = static_cast<float>(dwacc[i]);
                for (std::size_t i = 0; i < dbacc.size(); ++i)
                    dp.bias[i] = static_cast<float>(dbacc[i]);
                break;
            }
            case LayerKind::Dropout: {
                const auto& mask = cache.dropout_masks[li];
                if (mask.empty()) {
                    dx.v = dy.v;
                } else {
                    const float scale = 1.0f / (1.0f - l.rate);
                    for (std::size_t i = 0; i < x.size(); ++i)
                        dx.v[i] = mask[i] ? dy.v[i] * scale : 0.0f;
                }
                break;
            }
        }
        g.input_grads[li] = dx;
        dy = std::move(dx);
    }
    return g;
}

// loss = -w_label * ln(posterior[label]); the probability is clamped at 1e-12
// rather than raising DegenerateProbability, so the loss stays finite.
inline double cross_entropy_weighted(const std::vector<float>& posterior, std::size_t label,
                                     const std::vector<float>& class_weights) {
    if (label >= posterior.size()) throw OutOfRange("cross_entropy: label >= K");
    if (class_weights.size() != posterior.size())
        throw ShapeMismatch("cross_entropy: weight count != K");
    const double p = std::max(static_cast<double>(posterior[label]), 1e-12);
    return -static_cast<double>(class_weights[label]) * std::log(p);
}

// d loss / d scores for the softmax + weighted cross-entropy pair:
// w_label * (posterior - onehot(label)).
inline std::vector<float> cross_entropy_weighted_grad(const std::vector<float>& posterior,
                                                      std::size_t label,
                                                      const std::vector<float>& class_weights) {
    if (label >= posterior.size()) throw OutOfRange("cross_entropy: label >= K");
    std::vector<float> g(posterior.size());
    const float w = class_weights[label];
    for (std::size_t k = 0; k < posterior.size(); ++k)
        g[k] = w * (posterior[k] - (k == label ? 1.0f : 0.0f));
    return g;
}

inline std::size_t argmax_row(const float* p, std::size_t k) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < k; ++i)
        if (p[i] > p[best]) best = i;
    return best;
}

}  // namespace xrx
