#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "xrx/errors.hpp"
#include "xrx/tensor.hpp"
#include "xrx/util.hpp"

namespace xrx {

enum class LayerKind { Conv2d, Relu, MaxPool2d, GlobalAvgPool, Dense, Dropout, Softmax };

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool2d: return "maxpool2d";
        case LayerKind::GlobalAvgPool: return "global-avg-pool";
        case LayerKind::Dense: return "dense";
        case LayerKind::Dropout: return "dropout";
        case LayerKind::Softmax: return "softmax";
    }
    return "?";
}

inline LayerKind layer_kind_from_name(const std::string& s) {
    if (s == "conv2d") return LayerKind::Conv2d;
    if (s == "relu") return LayerKind::Relu;
    if (s == "maxpool2d") return LayerKind::MaxPool2d;
    if (s == "global-avg-pool") return LayerKind::GlobalAvgPool;
    if (s == "dense") return LayerKind::Dense;
    if (s == "dropout") return LayerKind::Dropout;
    if (s == "softmax") return LayerKind::Softmax;
    throw InvalidConfig("unknown layer kind: " + s);
}

// One layer description. Only the fields relevant to `kind` are used;
// in_channels / in_features are filled in when the shape chain is resolved.
struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int out_channels = 0;   // conv2d
    int kernel = 0;         // conv2d, maxpool2d
    int stride = 1;         // conv2d, maxpool2d
    int pad = 0;            // conv2d
    int out_features = 0;   // dense
    float rate = 0.0f;      // dropout, in [0,1)

    int in_channels = 0;    // resolved
    int in_features = 0;    // resolved

    static LayerSpec conv2d(int out_channels, int kernel, int stride = 1, int pad = 0) {
        LayerSpec s;
        s.kind = LayerKind::Conv2d;
        s.out_channels = out_channels;
        s.kernel = kernel;
        s.stride = stride;
        s.pad = pad;
        return s;
    }
    static LayerSpec relu() { return LayerSpec{LayerKind::Relu}; }
    static LayerSpec maxpool2d(int kernel, int stride) {
        LayerSpec s;
        s.kind = LayerKind::MaxPool2d;
        s.kernel = kernel;
        s.stride = stride;
        return s;
    }
    static LayerSpec global_avg_pool() { return LayerSpec{LayerKind::GlobalAvgPool}; }
    static LayerSpec dense(int out_features) {
        LayerSpec s;
        s.kind = LayerKind::Dense;
        s.out_features = out_features;
        return s;
    }
    static LayerSpec dropout(float rate) {
        LayerSpec s;
        s.kind = LayerKind::Dropout;
        s.rate = rate;
        return s;
    }
    static LayerSpec softmax() { return LayerSpec{LayerKind::Softmax}; }
};

struct LayerParams {
    std::vector<float> weights;
    std::vector<float> bias;

    std::size_t count() const { return weights.size() + bias.size(); }
    bool empty() const { return weights.empty() && bias.empty(); }
};

struct Shape3 {
    std::size_t c = 0, h = 0, w = 0;
    std::size_t count() const { return c * h * w; }
    bool operator==(const Shape3&) const = default;
};

inline std::size_t conv_out_dim(std::size_t in, int pad, int kernel, int stride) {
    return static_cast<std::size_t>((static_cast<long>(in) + 2L * pad - kernel) / stride + 1);
}

// Layered model: ordered layer list, one parameter set per layer, class count K.
// Parameters are mutable during training; `version` is bumped on every mutation
// so forward caches can detect staleness.
class Network {
public:
    Network() = default;

    // Resolves the shape chain, validates layer compatibility, allocates
    // zero-initialised parameters. Call init_params() before use.
    Network(Shape3 input, std::vector<LayerSpec> layers)
        : input_(input), layers_(std::move(layers)) {
        if (layers_.empty()) throw InvalidConfig("network needs at least one layer");
        shapes_.reserve(layers_.size());
        Shape3 cur = input_;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            LayerSpec& l = layers_[i];
            switch (l.kind) {
                case LayerKind::Conv2d: {
                    if (l.out_channels <= 0 || l.kernel <= 0 || l.stride <= 0 || l.pad < 0)
                        throw InvalidConfig("conv2d: shape parameters must be positive");
                    if (cur.h + 2 * static_cast<std::size_t>(l.pad) < static_cast<std::size_t>(l.kernel) ||
                        cur.w + 2 * static_cast<std::size_t>(l.pad) < static_cast<std::size_t>(l.kernel))
                        throw InvalidConfig("conv2d: kernel larger than padded input at layer " +
                                            std::to_string(i));
                    l.in_channels = static_cast<int>(cur.c);
                    cur = Shape3{static_cast<std::size_t>(l.out_channels),
                                 conv_out_dim(cur.h, l.pad, l.kernel, l.stride),
                                 conv_out_dim(cur.w, l.pad, l.kernel, l.stride)};
                    break;
                }
                case LayerKind::Relu:
                    break;
                case LayerKind::MaxPool2d: {
                    if (l.kernel <= 0 || l.stride <= 0)
                        throw InvalidConfig("maxpool2d: kernel/stride must be positive");
                    if (cur.h < static_cast<std::size_t>(l.kernel) ||
                        cur.w < static_cast<std::size_t>(l.kernel))
                        throw InvalidConfig("maxpool2d: kernel larger than input at layer " +
                                            std::to_string(i));
                    cur = Shape3{cur.c, conv_out_dim(cur.h, 0, l.kernel, l.stride),
                                 conv_out_dim(cur.w, 0, l.kernel, l.stride)};
                    break;
                }
                case LayerKind::GlobalAvgPool:
                    cur = Shape3{cur.c, 1, 1};
                    break;
                case LayerKind::Dense: {
                    if (l.out_features <= 0)
                        throw InvalidConfig("dense: out_features must be positive");
                    l.in_features = static_cast<int>(cur.count());
                    cur = Shape3{static_cast<std::size_t>(l.out_features), 1, 1};
                    break;
                }
                case LayerKind::Dropout:
                    if (l.rate < 0.0f || l.rate >= 1.0f)
                        throw InvalidConfig("dropout: rate must be in [0,1)");
                    break;
                case LayerKind::Softmax:
                    if (i + 1 != layers_.size())
                        throw InvalidConfig("softmax must be the final layer");
                    if (cur.h != 1 || cur.w != 1)
                        throw InvalidConfig("softmax expects flat (K,1,1) input");
                    break;
            }
            shapes_.push_back(cur);
        }
        if (layers_.back().kind != LayerKind::Softmax)
            throw InvalidConfig("network must end with a softmax layer");
        classes_ = cur.c;

        params_.resize(layers_.size());
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const LayerSpec& l = layers_[i];
            if (l.kind == LayerKind::Conv2d) {
                params_[i].weights.assign(static_cast<std::size_t>(l.out_channels) *
                                              l.in_channels * l.kernel * l.kernel,
                                          0.0f);
                params_[i].bias.assign(static_cast<std::size_t>(l.out_channels), 0.0f);
            } else if (l.kind == LayerKind::Dense) {
                params_[i].weights.assign(
                    static_cast<std::size_t>(l.out_features) * l.in_features, 0.0f);
                params_[i].bias.assign(static_cast<std::size_t>(l.out_features), 0.0f);
            }
        }
    }

    // Uniform init in +-sqrt(6/(fan_in+fan_out)); biases start at zero.
    void init_params(std::uint64_t seed) {
        Rng rng(derive_seed(seed, 0xC0DE));
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const LayerSpec& l = layers_[i];
            double fan_in = 0, fan_out = 0;
            if (l.kind == LayerKind::Conv2d) {
                fan_in = static_cast<double>(l.in_channels) * l.kernel * l.kernel;
                fan_out = static_cast<double>(l.out_channels) * l.kernel * l.kernel;
            } else if (l.kind == LayerKind::Dense) {
                fan_in = l.in_features;
                fan_out = l.out_features;
            } else {
                continue;
            }
            const double bound = std::sqrt(6.0 / (fan_in + fan_out));
            for (float& x : params_[i].weights)
                x = static_cast<float>(rng.uniform(-bound, bound));
            for (float& x : params_[i].bias) x = 0.0f;
        }
        ++version_;
    }

    const Shape3& input_shape() const { return input_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    const LayerSpec& layer(std::size_t i) const { return layers_[i]; }
    std::size_t layer_count() const { return layers_.size(); }
    // shape of the output of layer i
    const Shape3& output_shape(std::size_t i) const { return shapes_[i]; }
    std::size_t classes() const { return classes_; }

    const LayerParams& params(std::size_t i) const { return params_[i]; }
    LayerParams& mutable_params(std::size_t i) {
        ++version_;
        return params_[i];
    }
    const std::vector<LayerParams>& all_params() const { return params_; }
    void set_all_params(const std::vector<LayerParams>& p) {
        if (p.size() != params_.size()) throw ShapeMismatch("parameter set size mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (p[i].weights.size() != params_[i].weights.size() ||
                p[i].bias.size() != params_[i].bias.size())
                throw ShapeMismatch("parameter shape mismatch at layer " + std::to_string(i));
        }
        params_ = p;
        ++version_;
    }

    std::size_t param_count() const {
        std::size_t t = 0;
        for (const auto& p : params_) t += p.count();
        return t;
    }

    std::uint64_t version() const { return version_; }

private:
    Shape3 input_;
    std::vector<LayerSpec> layers_;
    std::vector<Shape3> shapes_;
    std::vector<LayerParams> params_;
    std::size_t classes_ = 0;
    std::uint64_t version_ = 0;
};

}  // namespace xrx
