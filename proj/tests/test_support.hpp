#pragma once

// Shared test helpers. The `oracle` namespace holds an independent
// double-precision evaluation of the layer chain, written as plain nested
// loops on purpose: it is the reference the library implementation is checked
// against and must not share code with it.

#include <cmath>
#include <cstdint>
#include <vector>

#include "xrx/autodiff.hpp"
#include "xrx/image.hpp"
#include "xrx/network.hpp"
#include "xrx/preprocess.hpp"
#include "xrx/tensor.hpp"
#include "xrx/util.hpp"

namespace oracle {

struct Box {
    std::vector<double> v;
    std::size_t n = 0, c = 0, h = 0, w = 0;

    double at(std::size_t in, std::size_t ic, std::size_t iy, std::size_t ix) const {
        return v[((in * c + ic) * h + iy) * w + ix];
    }
};

inline Box from_tensor(const xrx::Tensor4& t) {
    Box b;
    b.n = t.n;
    b.c = t.c;
    b.h = t.h;
    b.w = t.w;
    b.v.assign(t.v.begin(), t.v.end());
    return b;
}

// Evaluates layers [start, end) of the network over `x`, stopping before the
// softmax, and returns the flat score vector (n*K). Dropout is treated as
// inert (eval semantics).
inline std::vector<double> forward_scores(const xrx::Network& net, std::size_t start, Box x) {
    using xrx::LayerKind;
    for (std::size_t li = start; li < net.layer_count(); ++li) {
        const xrx::LayerSpec& l = net.layer(li);
        if (l.kind == LayerKind::Softmax) break;
        Box y;
        y.n = x.n;
        switch (l.kind) {
            case LayerKind::Conv2d: {
                const auto& p = net.params(li);
                const std::size_t oh =
                    (x.h + 2 * static_cast<std::size_t>(l.pad) - l.kernel) / l.stride + 1;
                const std::size_t ow =
                    (x.w + 2 * static_cast<std::size_t>(l.pad) - l.kernel) / l.stride + 1;
                y.c = static_cast<std::size_t>(l.out_channels);
                y.h = oh;
                y.w = ow;
                y.v.assign(y.n * y.c * oh * ow, 0.0);
                for (std::size_t in = 0; in < x.n; ++in)
                    for (int oc = 0; oc < l.out_channels; ++oc)
                        for (std::size_t oy = 0; oy < oh; ++oy)
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                                double acc = p.bias[oc];
                                for (int ic = 0; ic < l.in_channels; ++ic)
                                    for (int ky = 0; ky < l.kernel; ++ky)
                                        for (int kx = 0; kx < l.kernel; ++kx) {
                                            const long iy =
                                                static_cast<long>(oy) * l.stride + ky - l.pad;
                                            const long ix =
                                                static_cast<long>(ox) * l.stride + kx - l.pad;
                                            if (iy < 0 || iy >= static_cast<long>(x.h) || ix < 0 ||
                                                ix >= static_cast<long>(x.w))
                                                continue;
                                            const double wv =
                                                p.weights[((static_cast<std::size_t>(oc) *
                                                                l.in_channels +
                                                            ic) *
                                                               l.kernel +
                                                           ky) *
                                                              l.kernel +
                                                          kx];
                                            acc += wv * x.at(in, ic, iy, ix);
                                        }
                                y.v[((in * y.c + oc) * oh + oy) * ow + ox] = acc;
                            }
                break;
            }
            case LayerKind::Relu:
                y = x;
                for (double& v : y.v) v = v > 0.0 ? v : 0.0;
                break;
            case LayerKind::MaxPool2d: {
                const std::size_t oh = (x.h - l.kernel) / l.stride + 1;
                const std::size_t ow = (x.w - l.kernel) / l.stride + 1;
                y.c = x.c;
                y.h = oh;
                y.w = ow;
                y.v.assign(y.n * y.c * oh * ow, 0.0);
                for (std::size_t in = 0; in < x.n; ++in)
                    for (std::size_t ic = 0; ic < x.c; ++ic)
                        for (std::size_t oy = 0; oy < oh; ++oy)
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                                double best = x.at(in, ic, oy * l.stride, ox * l.stride);
                                for (int ky = 0; ky < l.kernel; ++ky)
                                    for (int kx = 0; kx < l.kernel; ++kx)
                                        best = std::max(best, x.at(in, ic, oy * l.stride + ky,
                                                                   ox * l.stride + kx));
                                y.v[((in * y.c + ic) * oh + oy) * ow + ox] = best;
                            }
                break;
            }
            case LayerKind::GlobalAvgPool: {
                y.c = x.c;
                y.h = 1;
                y.w = 1;
                y.v.assign(y.n * y.c, 0.0);
                for (std::size_t in = 0; in < x.n; ++in)
                    for (std::size_t ic = 0; ic < x.c; ++ic) {
                        double s = 0.0;
                        for (std::size_t iy = 0; iy < x.h; ++iy)
                            for (std::size_t ix = 0; ix < x.w; ++ix) s += x.at(in, ic, iy, ix);
                        y.v[in * y.c + ic] = s / static_cast<double>(x.h * x.w);
                    }
                break;
            }
            case LayerKind::Dense: {
                const auto& p = net.params(li);
                const std::size_t F = static_cast<std::size_t>(l.in_features);
                y.c = static_cast<std::size_t>(l.out_features);
                y.h = 1;
                y.w = 1;
                y.v.assign(y.n * y.c, 0.0);
                for (std::size_t in = 0; in < x.n; ++in)
                    for (int j = 0; j < l.out_features; ++j) {
                        double acc = p.bias[j];
                        for (std::size_t i = 0; i < F; ++i)
                            acc += static_cast<double>(p.weights[j * F + i]) * x.v[in * F + i];
                        y.v[in * y.c + j] = acc;
                    }
                break;
            }
            case LayerKind::Dropout:
                y = x;
                break;
            case LayerKind::Softmax:
                break;
        }
        x = std::move(y);
    }
    return x.v;
}

// J = sum_i seed[i] * score[i], evaluated through the oracle path
inline double objective(const xrx::Network& net, const xrx::Tensor4& batch,
                        const std::vector<float>& seed) {
    const std::vector<double> s = forward_scores(net, 0, from_tensor(batch));
    double j = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) j += static_cast<double>(seed[i]) * s[i];
    return j;
}

inline double objective_from(const xrx::Network& net, std::size_t layer, const Box& act,
                             const std::vector<float>& seed) {
    const std::vector<double> s = forward_scores(net, layer, act);
    double j = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) j += static_cast<double>(seed[i]) * s[i];
    return j;
}

}  // namespace oracle

namespace testsup {

// gradcheck comparison: relative error with a small absolute floor for
// gradients that are numerically zero
inline bool grad_close(double analytic, double fd, double rtol = 1e-3, double atol = 2e-5) {
    return std::fabs(analytic - fd) <=
           atol + rtol * std::max(std::fabs(analytic), std::fabs(fd));
}

// Finite-difference probe with a kink guard. Along any single weight or
// activation axis these ReLU/max-pool chains are piecewise linear, so the two
// one-sided differences agree exactly on smooth stretches; a mismatch means a
// kink sits inside the probe interval and the central difference is
// meaningless there. Such positions are skipped and counted.
struct FdStats {
    std::size_t checked = 0, skipped = 0, failed = 0;
    std::string first_failure;
};

template <typename Eval>
inline void fd_probe(double analytic, Eval&& eval, double h, FdStats& st,
                     const std::string& what, double rtol = 1e-3, double atol = 2e-5) {
    const double j0 = eval(0.0), jp = eval(h), jm = eval(-h);
    const double fwd = (jp - j0) / h;
    const double bwd = (j0 - jm) / h;
    if (std::fabs(fwd - bwd) > 1e-6 + 1e-3 * std::max(std::fabs(fwd), std::fabs(bwd))) {
        ++st.skipped;
        return;
    }
    ++st.checked;
    const double fd = (jp - jm) / (2.0 * h);
    const double budget = atol + rtol * std::max(std::fabs(analytic), std::fabs(fd));
    if (std::fabs(analytic - fd) > budget) {
        ++st.failed;
        if (st.first_failure.empty())
            st.first_failure = what + ": analytic " + std::to_string(analytic) + " vs fd " +
                               std::to_string(fd);
    }
}

inline xrx::Tensor4 random_tensor(xrx::Rng& rng, std::size_t n, std::size_t c, std::size_t h,
                                  std::size_t w, double lo = 0.0, double hi = 1.0) {
    xrx::Tensor4 t(n, c, h, w);
    for (float& v : t.v) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

// Small random architecture covering every layer kind over many draws.
// All nets end dense -> softmax; convs are followed by relu.
inline xrx::Network random_net(xrx::Rng& rng, std::size_t* out_h = nullptr,
                               std::size_t* out_c = nullptr, bool with_dropout = false) {
    const std::size_t c = 1 + rng.uniform_index(2);
    const std::size_t hw = 6 + rng.uniform_index(4);  // 6..9
    const int k = 3;
    const int pad = static_cast<int>(rng.uniform_index(2));
    const int maps1 = 3 + static_cast<int>(rng.uniform_index(3));
    const int maps2 = 3 + static_cast<int>(rng.uniform_index(3));
    const int classes = 2 + static_cast<int>(rng.uniform_index(3));

    std::vector<xrx::LayerSpec> layers;
    layers.push_back(xrx::LayerSpec::conv2d(maps1, k, 1, pad));
    layers.push_back(xrx::LayerSpec::relu());
    std::size_t cur = hw + 2 * pad - k + 1;
    if (cur >= 4 && rng.uniform() < 0.5) {
        layers.push_back(xrx::LayerSpec::maxpool2d(2, 2));
        cur = (cur - 2) / 2 + 1;
    }
    if (cur >= k && rng.uniform() < 0.7) {
        layers.push_back(xrx::LayerSpec::conv2d(maps2, k, 1, 1));
        layers.push_back(xrx::LayerSpec::relu());
        cur = cur + 2 - k + 1;
    }
    if (with_dropout) layers.push_back(xrx::LayerSpec::dropout(0.3f));
    layers.push_back(xrx::LayerSpec::global_avg_pool());
    layers.push_back(xrx::LayerSpec::dense(classes));
    layers.push_back(xrx::LayerSpec::softmax());

    xrx::Network net(xrx::Shape3{c, hw, hw}, layers);
    net.init_params(rng.next_u64());
    if (out_h) *out_h = hw;
    if (out_c) *out_c = c;
    return net;
}

// ---------------------------------------------------------------------------
// synthetic 3-class quadrant-texture dataset

// class 0: horizontal stripes, top-left quadrant
// class 1: vertical stripes, top-right quadrant
// class 2: checkerboard, bottom-left quadrant
inline xrx::GrayImage quadrant_image(std::size_t cls, std::uint64_t seed, std::size_t side = 32) {
    xrx::Rng rng(xrx::derive_seed(seed, 0xDA7A + cls));
    xrx::GrayImage img(side, side, xrx::Regime::Levels);
    for (float& p : img.pix) {
        const double v = 0.15 + 0.05 * rng.gaussian();
        p = static_cast<float>(std::clamp(xrx::round_half_up(v * 255.0), 0, 255));
    }
    const std::size_t q = side / 2;
    const std::size_t m = 2;  // margin inside the quadrant
    auto put = [&](std::size_t y, std::size_t x) {
        img.at(y, x) = static_cast<float>(
            std::clamp(xrx::round_half_up((0.8 + 0.05 * rng.gaussian()) * 255.0), 0, 255));
    };
    if (cls == 0) {
        for (std::size_t y = m; y < q - m; y += 2)
            for (std::size_t x = m; x < q - m; ++x) put(y, x);
    } else if (cls == 1) {
        for (std::size_t y = m; y < q - m; ++y)
            for (std::size_t x = q + m; x < side - m; x += 2) put(y, x);
    } else {
        for (std::size_t y = q + m; y < side - m; ++y)
            for (std::size_t x = m; x < q - m; ++x)
                if ((y + x) % 2 == 0) put(y, x);
    }
    return img;
}

// quadrant that carries the class evidence: (row0, col0) of a q x q block
inline std::pair<std::size_t, std::size_t> quadrant_origin(std::size_t cls, std::size_t side = 32) {
    const std::size_t q = side / 2;
    if (cls == 0) return {0, 0};
    if (cls == 1) return {0, q};
    return {q, 0};
}

struct QuadrantDataset {
    xrx::Tensor4 inputs;  // (N, 1, side, side), standardized
    std::vector<std::size_t> labels;
    double mean = 0.0, std = 1.0;
};

inline QuadrantDataset quadrant_dataset(std::size_t per_class, std::uint64_t seed,
                                        std::size_t side = 32) {
    QuadrantDataset ds;
    const std::size_t n = per_class * 3;
    ds.inputs = xrx::Tensor4(n, 1, side, side);
    ds.labels.resize(n);
    std::size_t row = 0;
    for (std::size_t cls = 0; cls < 3; ++cls)
        for (std::size_t i = 0; i < per_class; ++i, ++row) {
            const xrx::GrayImage img =
                quadrant_image(cls, xrx::derive_seed(seed, row * 7919 + cls), side);
            const xrx::GrayImage unit = xrx::normalize(img);
            std::copy(unit.pix.begin(), unit.pix.end(),
                      ds.inputs.v.begin() + row * side * side);
            ds.labels[row] = cls;
        }
    double s = 0.0, s2 = 0.0;
    for (float v : ds.inputs.v) {
        s += v;
        s2 += static_cast<double>(v) * v;
    }
    ds.mean = s / static_cast<double>(ds.inputs.size());
    ds.std = std::sqrt(std::max(1e-12, s2 / static_cast<double>(ds.inputs.size()) -
                                           ds.mean * ds.mean));
    ds.inputs = xrx::standardize(ds.inputs, ds.mean, ds.std);
    return ds;
}

}  // namespace testsup
