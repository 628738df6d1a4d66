#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "xrx/autodiff.hpp"
#include "xrx/ensemble.hpp"
#include "xrx/errors.hpp"
#include "xrx/image.hpp"
#include "xrx/network.hpp"
#include "xrx/preprocess.hpp"
#include "xrx/tensor.hpp"
#include "xrx/util.hpp"

namespace xrx {

// Nonnegative attribution grid, max-normalized to [0,1].
struct SaliencyMap {
    std::size_t height = 0, width = 0;
    std::vector<float> v;
    std::string method;
    std::size_t layer = 0;
    std::size_t class_id = 0;

    float at(std::size_t y, std::size_t x) const { return v[y * width + x]; }

    // row-major argmax, lowest index on ties
    std::pair<std::size_t, std::size_t> peak() const {
        std::size_t best = 0;
        for (std::size_t i = 1; i < v.size(); ++i)
            if (v[i] > v[best]) best = i;
        return {best / width, best % width};
    }
};

// Signed per-pixel relevance, channel-summed over the input tensor.
struct RelevanceMap {
    std::size_t height = 0, width = 0;
    std::vector<float> v;
    double total = 0.0;  // relevance injected at the output layer (z_t)

    float at(std::size_t y, std::size_t x) const { return v[y * width + x]; }
};

// Input-layer relevance bounds for the bounded rule (pixel value range).
struct LrpBounds {
    double lo = 0.0;
    double hi = 1.0;

    void validate() const {
        if (lo > hi) throw InvalidConfig("lrp bounds: lower bound exceeds upper bound");
    }
};

namespace detail {

inline void max_normalize(std::vector<float>& v) {
    float mx = 0.0f;
    for (float x : v) mx = std::max(mx, x);
    if (mx > 0.0f)
        for (float& x : v) x /= mx;
}

inline void require_single_sample(const Tensor4& input) {
    if (input.n != 1) throw ShapeMismatch("explain: expects a single-sample batch");
}

inline void require_conv(const Network& net, std::size_t layer) {
    if (layer >= net.layer_count() || net.layer(layer).kind != LayerKind::Conv2d)
        throw LayerNotConv("explain: layer " + std::to_string(layer) + " is not conv2d");
}

}  // namespace detail

inline std::size_t last_conv_layer(const Network& net) {
    for (std::size_t i = net.layer_count(); i-- > 0;)
        if (net.layer(i).kind == LayerKind::Conv2d) return i;
    throw LayerNotConv("network has no conv2d layer");
}

// ---------------------------------------------------------------------------
// CAM: L_ij = sum_k w_k A_k(ij) with the class row of the single dense layer.
// Requires the head to be exactly conv -> global-avg-pool -> dense -> softmax.
inline SaliencyMap cam(const Network& net, const Tensor4& input, std::size_t class_id) {
    detail::require_single_sample(input);
    const std::size_t L = net.layer_count();
    if (L < 4 || net.layer(L - 4).kind != LayerKind::Conv2d ||
        net.layer(L - 3).kind != LayerKind::GlobalAvgPool ||
        net.layer(L - 2).kind != LayerKind::Dense ||
        net.layer(L - 1).kind != LayerKind::Softmax)
        throw ArchitectureUnsupported(
            "cam: head must be conv2d -> global-avg-pool -> dense -> softmax");
    if (class_id >= net.classes()) throw OutOfRange("cam: class id out of range");

    const ForwardCache cache = forward(net, input, Mode::Eval);
    const Tensor4& maps = cache.layer_output(L - 4);
    const LayerSpec& dense = net.layer(L - 2);
    const float* wrow =
        net.params(L - 2).weights.data() + class_id * static_cast<std::size_t>(dense.in_features);

    SaliencyMap out;
    out.height = maps.h;
    out.width = maps.w;
    out.method = "cam";
    out.layer = L - 4;
    out.class_id = class_id;
    out.v.assign(maps.h * maps.w, 0.0f);
    std::vector<double> acc(maps.h * maps.w, 0.0);
    for (std::size_t k = 0; k < maps.c; ++k) {
        const float* p = maps.plane(0, k);
        const double wk = wrow[k];
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += wk * p[i];
    }
    for (std::size_t i = 0; i < acc.size(); ++i)
        out.v[i] = acc[i] > 0.0 ? static_cast<float>(acc[i]) : 0.0f;
    detail::max_normalize(out.v);
    return out;
}

// ---------------------------------------------------------------------------
// Cached feature maps of one conv layer together with the class-score
// derivatives at every position; the shared substrate of the gradient-based
// CAM variants. Grad-CAM++ uses the exp-transformed score y = exp(s), whose
// higher-order derivatives collapse to closed forms in the first-order
// gradient g = ds/dA:
//   dy/dA = e^s g,  d2y/dA2 = e^s g^2,  d3y/dA3 = e^s g^3
// so one backward pass supplies every order.
struct ActivationStack {
    Tensor4 maps;                   // A^k at the chosen layer, (1, k, h, w)
    std::vector<float> grad;        // g = ds/dA per position, congruent with maps
    double score = 0.0;             // s, pre-softmax, for the target class
    std::size_t layer = 0;
    std::size_t class_id = 0;

    std::size_t pixels_per_map() const { return maps.h * maps.w; }  // Z

    double d1(std::size_t i) const { return std::exp(score) * grad[i]; }
    double d2(std::size_t i) const {
        const double g = grad[i];
        return std::exp(score) * g * g;
    }
    double d3(std::size_t i) const {
        const double g = grad[i];
        return std::exp(score) * g * g * g;
    }
};

inline ActivationStack activation_stack(const Network& net, const Tensor4& input,
                                        std::size_t class_id, std::size_t layer) {
    detail::require_single_sample(input);
    detail::require_conv(net, layer);
    if (class_id >= net.classes()) throw OutOfRange("activation_stack: class id out of range");
    const ForwardCache cache = forward(net, input, Mode::Eval);
    std::vector<float> seed(net.classes(), 0.0f);
    seed[class_id] = 1.0f;
    const GradientSet grads = backward(net, cache, seed);
    ActivationStack s;
    s.maps = cache.layer_output(layer);
    s.grad = grads.wrt_output(layer).v;
    s.score = cache.scores.at(0, class_id, 0, 0);
    s.layer = layer;
    s.class_id = class_id;
    return s;
}

// ---------------------------------------------------------------------------
// Grad-CAM: feature-map weights are the globally averaged gradients of the
// pre-softmax class score.
inline SaliencyMap grad_cam(const Network& net, const Tensor4& input, std::size_t class_id,
                            std::size_t layer) {
    const ActivationStack st = activation_stack(net, input, class_id, layer);
    const double z = static_cast<double>(st.pixels_per_map());
    const std::size_t plane = st.pixels_per_map();
    std::vector<double> acc(plane, 0.0);
    for (std::size_t k = 0; k < st.maps.c; ++k) {
        double alpha = 0.0;
        for (std::size_t i = 0; i < plane; ++i) alpha += st.grad[k * plane + i];
        alpha /= z;
        const float* ap = st.maps.plane(0, k);
        for (std::size_t i = 0; i < plane; ++i) acc[i] += alpha * ap[i];
    }
    SaliencyMap out;
    out.height = st.maps.h;
    out.width = st.maps.w;
    out.method = "grad-cam";
    out.layer = layer;
    out.class_id = class_id;
    out.v.resize(plane);
    for (std::size_t i = 0; i < plane; ++i)
        out.v[i] = acc[i] > 0.0 ? static_cast<float>(acc[i]) : 0.0f;
    detail::max_normalize(out.v);
    return out;
}

inline SaliencyMap grad_cam_pp(const Network& net, const Tensor4& input, std::size_t class_id,
                               std::size_t layer) {
    const ActivationStack st = activation_stack(net, input, class_id, layer);
    const std::size_t plane = st.pixels_per_map();
    std::vector<double> acc(plane, 0.0);
    for (std::size_t k = 0; k < st.maps.c; ++k) {
        const float* ap = st.maps.plane(0, k);
        double map_sum = 0.0;
        for (std::size_t i = 0; i < plane; ++i) map_sum += ap[i];

        double wk = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t idx = k * plane + i;
            const double d2 = st.d2(idx);
            const double denom = 2.0 * d2 + map_sum * st.d3(idx);
            if (denom == 0.0) continue;  // alpha defined as 0 there
            const double alpha = d2 / (denom + std::copysign(1e-8, denom));
            const double d1 = st.d1(idx);
            if (d1 > 0.0) wk += alpha * d1;
        }
        for (std::size_t i = 0; i < plane; ++i) acc[i] += wk * ap[i];
    }
    SaliencyMap out;
    out.height = st.maps.h;
    out.width = st.maps.w;
    out.method = "grad-cam++";
    out.layer = layer;
    out.class_id = class_id;
    out.v.resize(plane);
    for (std::size_t i = 0; i < plane; ++i)
        out.v[i] = acc[i] > 0.0 ? static_cast<float>(acc[i]) : 0.0f;
    detail::max_normalize(out.v);
    return out;
}

// ---------------------------------------------------------------------------
// LRP relevance propagation

namespace detail {

// z+ rule over one dense layer: relevance flows along positive weights,
// proportional to a_n * w+_nm. Stabilizer is sign-matched.
inline void lrp_dense_zplus(const LayerSpec& l, const LayerParams& p,
                            const std::vector<float>& a, const std::vector<float>& r_out,
                            std::vector<float>& r_in, double eps) {
    const std::size_t F = static_cast<std::size_t>(l.in_features);
    std::vector<double> acc(F, 0.0);
    for (int m = 0; m < l.out_features; ++m) {
        if (r_out[m] == 0.0f) continue;
        const float* wp = p.weights.data() + static_cast<std::size_t>(m) * F;
        double z = 0.0;
        for (std::size_t n = 0; n < F; ++n)
            if (wp[n] > 0.0f) z += static_cast<double>(a[n]) * wp[n];
        if (z == 0.0) continue;  // unit received no positive input; nothing to redistribute
        const double scale = r_out[m] / (z + std::copysign(eps, z));
        for (std::size_t n = 0; n < F; ++n)
            if (wp[n] > 0.0f) acc[n] += static_cast<double>(a[n]) * wp[n] * scale;
    }
    r_in.resize(F);
    for (std::size_t n = 0; n < F; ++n) r_in[n] = static_cast<float>(acc[n]);
}

// bounded rule for the layer touching pixels:
//   contribution_n = x_n w - lo * w+ - hi * w-
inline void lrp_dense_zb(const LayerSpec& l, const LayerParams& p, const std::vector<float>& x,
                         const std::vector<float>& r_out, std::vector<float>& r_in,
                         const LrpBounds& b, double eps) {
    const std::size_t F = static_cast<std::size_t>(l.in_features);
    std::vector<double> acc(F, 0.0);
    std::vector<double> num(F);
    for (int m = 0; m < l.out_features; ++m) {
        if (r_out[m] == 0.0f) continue;
        const float* wp = p.weights.data() + static_cast<std::size_t>(m) * F;
        double z = 0.0;
        for (std::size_t n = 0; n < F; ++n) {
            const double w = wp[n];
            const double wpos = w > 0.0 ? w : 0.0;
            const double wneg = w < 0.0 ? w : 0.0;
            num[n] = static_cast<double>(x[n]) * w - b.lo * wpos - b.hi * wneg;
            z += num[n];
        }
        if (z == 0.0) continue;
        const double scale = r_out[m] / (z + std::copysign(eps, z));
        for (std::size_t n = 0; n < F; ++n) acc[n] += num[n] * scale;
    }
    r_in.resize(F);
    for (std::size_t n = 0; n < F; ++n) r_in[n] = static_cast<float>(acc[n]);
}

// conv layers use the same two rules over their sliding-window connections
inline void lrp_conv(const LayerSpec& l, const LayerParams& p, const Tensor4& x,
                     const Tensor4& r_out, Tensor4& r_in, bool bounded, const LrpBounds& b,
                     double eps) {
    const int K = l.kernel, S = l.stride, P = l.pad;
    r_in = Tensor4(x.n, x.c, x.h, x.w);
    std::vector<double> acc(x.c * x.h * x.w, 0.0);
    std::vector<double> num(static_cast<std::size_t>(l.in_channels) * K * K);
    std::vector<std::size_t> tgt(num.size());
    for (int oc = 0; oc < l.out_channels; ++oc) {
        const float* rp = r_out.plane(0, oc);
        const float* wbase = p.weights.data() +
                             static_cast<std::size_t>(oc) * l.in_channels * K * K;
        for (std::size_t oy = 0; oy < r_out.h; ++oy) {
            for (std::size_t ox = 0; ox < r_out.w; ++ox) {
                const float rm = rp[oy * r_out.w + ox];
                if (rm == 0.0f) continue;
                double z = 0.0;
                std::size_t cnt = 0;
                for (int ic = 0; ic < l.in_channels; ++ic) {
                    const float* xp = x.plane(0, ic);
                    for (int ky = 0; ky < K; ++ky) {
                        const long iy = static_cast<long>(oy) * S + ky - P;
                        if (iy < 0 || iy >= static_cast<long>(x.h)) continue;
                        for (int kx = 0; kx < K; ++kx) {
                            const long ix = static_cast<long>(ox) * S + kx - P;
                            if (ix < 0 || ix >= static_cast<long>(x.w)) continue;
                            const double w = wbase[(ic * K + ky) * K + kx];
                            const double xv = xp[iy * x.w + ix];
                            double contrib;
                            if (bounded) {
                                const double wpos = w > 0.0 ? w : 0.0;
                                const double wneg = w < 0.0 ? w : 0.0;
                                contrib = xv * w - b.lo * wpos - b.hi * wneg;
                            } else {
                                contrib = w > 0.0 ? xv * w : 0.0;
                            }
                            if (contrib != 0.0) {
                                num[cnt] = contrib;
                                tgt[cnt] = (static_cast<std::size_t>(ic) * x.h + iy) * x.w + ix;
                                ++cnt;
                                z += contrib;
                            }
                        }
                    }
                }
                if (z == 0.0) continue;
                const double scale = rm / (z + std::copysign(eps, z));
                for (std::size_t i = 0; i < cnt; ++i) acc[tgt[i]] += num[i] * scale;
            }
        }
    }
    for (std::size_t i = 0; i < acc.size(); ++i) r_in.v[i] = static_cast<float>(acc[i]);
}

}  // namespace detail

// Relevance at the input of every layer; trace[i] belongs to layer i's input,
// trace.back() is the seeded output relevance. Each entry sums to z_t up to
// stabilizer effects, which the conservation tests rely on.
inline std::vector<Tensor4> lrp_trace(const Network& net, const Tensor4& input,
                                      std::size_t class_id, const LrpBounds& bounds = {},
                                      double eps = 1e-9) {
    detail::require_single_sample(input);
    bounds.validate();
    if (class_id >= net.classes()) throw OutOfRange("lrp: class id out of range");
    const std::size_t L = net.layer_count();
    std::size_t first_weighted = L;
    for (std::size_t i = 0; i < L; ++i) {
        const LayerKind k = net.layer(i).kind;
        if (k == LayerKind::Conv2d || k == LayerKind::Dense) {
            first_weighted = i;
            break;
        }
    }
    if (first_weighted == L) throw UnsupportedLayer("lrp: network has no weighted layer");

    const ForwardCache cache = forward(net, input, Mode::Eval);

    // output relevance: the target class carries its pre-softmax score
    const double z_t = cache.scores.at(0, class_id, 0, 0);
    Tensor4 r(1, net.classes(), 1, 1);
    r.at(0, class_id, 0, 0) = static_cast<float>(z_t);

    std::vector<Tensor4> trace(L);
    for (std::size_t li = L; li-- > 0;) {
        const LayerSpec& l = net.layer(li);
        const Tensor4& x = cache.layer_input(li);
        Tensor4 r_in;
        switch (l.kind) {
            case LayerKind::Softmax:
            case LayerKind::Relu:
            case LayerKind::Dropout:
                r_in = r;
                r_in.n = x.n;
                r_in.c = x.c;
                r_in.h = x.h;
                r_in.w = x.w;
                break;
            case LayerKind::MaxPool2d: {
                r_in = Tensor4(x.n, x.c, x.h, x.w);
                const auto& arg = cache.pool_argmax[li];
                for (std::size_t i = 0; i < r.size(); ++i) r_in.v[arg[i]] += r.v[i];
                break;
            }
            case LayerKind::GlobalAvgPool: {
                // the pool is a linear layer with uniform weights, so the z+
                // rule redistributes proportionally to the input activations;
                // an equal split would strand relevance on dead positions
                r_in = Tensor4(x.n, x.c, x.h, x.w);
                for (std::size_t ic = 0; ic < x.c; ++ic) {
                    const float* xp = x.plane(0, ic);
                    double z = 0.0;
                    for (std::size_t i = 0; i < x.h * x.w; ++i)
                        if (xp[i] > 0.0f) z += xp[i];
                    const float rm = r.at(0, ic, 0, 0);
                    if (rm == 0.0f || z == 0.0) continue;
                    const double scale = rm / (z + std::copysign(eps, z));
                    float* p = r_in.plane(0, ic);
                    for (std::size_t i = 0; i < x.h * x.w; ++i)
                        if (xp[i] > 0.0f) p[i] = static_cast<float>(xp[i] * scale);
                }
                break;
            }
            case LayerKind::Dense: {
                std::vector<float> ri;
                if (li == first_weighted)
                    detail::lrp_dense_zb(l, net.params(li), x.v, r.v, ri, bounds, eps);
                else
                    detail::lrp_dense_zplus(l, net.params(li), x.v, r.v, ri, eps);
                r_in = Tensor4(x.n, x.c, x.h, x.w);
                r_in.v = std::move(ri);
                break;
            }
            case LayerKind::Conv2d:
                detail::lrp_conv(l, net.params(li), x, r, r_in, li == first_weighted, bounds,
                                 eps);
                break;
        }
        trace[li] = r_in;
        r = std::move(r_in);
    }
    return trace;
}

// Channel-summed input relevance for the target class.
inline RelevanceMap lrp(const Network& net, const Tensor4& input, std::size_t class_id,
                        const LrpBounds& bounds = {}) {
    const std::vector<Tensor4> trace = lrp_trace(net, input, class_id, bounds);
    const ForwardCache cache = forward(net, input, Mode::Eval);
    const Tensor4& rin = trace.front();
    RelevanceMap out;
    out.height = rin.h;
    out.width = rin.w;
    out.total = cache.scores.at(0, class_id, 0, 0);
    out.v.assign(rin.h * rin.w, 0.0f);
    for (std::size_t c = 0; c < rin.c; ++c) {
        const float* p = rin.plane(0, c);
        for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += p[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// rendering helpers

// Bilinear (corner-aligned) upsample followed by max normalization; a map of
// all zeros stays all zeros.
inline SaliencyMap upsample_normalize(const SaliencyMap& map, std::size_t out_h,
                                      std::size_t out_w) {
    if (out_h < map.height || out_w < map.width)
        throw DimMismatch("upsample_normalize: output smaller than input");
    GrayImage tmp(map.height, map.width, Regime::Unit);
    tmp.pix = map.v;
    SaliencyMap out;
    out.height = out_h;
    out.width = out_w;
    out.method = map.method;
    out.layer = map.layer;
    out.class_id = map.class_id;
    out.v.resize(out_h * out_w);
    const double sy =
        out_h > 1 ? static_cast<double>(map.height - 1) / static_cast<double>(out_h - 1) : 0.0;
    const double sx =
        out_w > 1 ? static_cast<double>(map.width - 1) / static_cast<double>(out_w - 1) : 0.0;
    for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x)
            out.v[y * out_w + x] = detail::bilinear_sample(
                tmp, sy * static_cast<double>(y), sx * static_cast<double>(x));
    detail::max_normalize(out.v);
    return out;
}

// piecewise-linear blue -> green -> red over [0,1]
inline void saliency_color(float t, float& r, float& g, float& b) {
    t = clamp01(t);
    if (t < 0.5f) {
        r = 0.0f;
        g = 2.0f * t;
        b = 1.0f - 2.0f * t;
    } else {
        r = 2.0f * (t - 0.5f);
        g = 1.0f - 2.0f * (t - 0.5f);
        b = 0.0f;
    }
}

// out = (1-beta) * grayscale + beta * colormap(saliency)
inline RgbImage render_overlay(const GrayImage& base, const SaliencyMap& sal, double beta = 0.5) {
    if (base.height != sal.height || base.width != sal.width)
        throw DimMismatch("render_overlay: image and saliency dimensions differ");
    if (beta < 0.0 || beta > 1.0) throw InvalidConfig("render_overlay: beta must be in [0,1]");
    RgbImage out(base.height, base.width);
    const float scale = base.regime == Regime::Levels ? 1.0f / 255.0f : 1.0f;
    for (std::size_t i = 0; i < base.size(); ++i) {
        const float gray = clamp01(base.pix[i] * scale);
        float r, g, b;
        saliency_color(sal.v[i], r, g, b);
        const double fb = beta;
        const double cr = (1.0 - fb) * gray + fb * r;
        const double cg = (1.0 - fb) * gray + fb * g;
        const double cb = (1.0 - fb) * gray + fb * b;
        out.pix[i * 3 + 0] = static_cast<std::uint8_t>(std::clamp(round_half_up(cr * 255.0), 0, 255));
        out.pix[i * 3 + 1] = static_cast<std::uint8_t>(std::clamp(round_half_up(cg * 255.0), 0, 255));
        out.pix[i * 3 + 2] = static_cast<std::uint8_t>(std::clamp(round_half_up(cb * 255.0), 0, 255));
    }
    return out;
}

// Deterministic one-line explanation, percent rounded half-up.
inline std::string explain_report(const Prediction& pred, const std::string& method,
                                  const SaliencyMap& sal,
                                  const std::vector<std::string>& class_names = {}) {
    const std::string cls = pred.predicted < class_names.size()
                                ? class_names[pred.predicted]
                                : "class " + std::to_string(pred.predicted);
    const int pct = round_half_up(static_cast<double>(pred.distribution[pred.predicted]) * 100.0);
    const auto [py, px] = sal.peak();
    return "classified as " + cls + " with a probability of " + std::to_string(pct) +
           "%; method " + method + "; peak attribution at (" + std::to_string(py) + "," +
           std::to_string(px) + ")";
}

}  // namespace xrx
