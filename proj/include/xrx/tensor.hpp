#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "xrx/errors.hpp"

namespace xrx {

// Batched activation/image container, row-major (n, c, h, w), 32-bit values.
struct Tensor4 {
    std::size_t n = 0, c = 0, h = 0, w = 0;
    std::vector<float> v;

    Tensor4() = default;
    Tensor4(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_, float fill = 0.0f)
        : n(n_), c(c_), h(h_), w(w_), v(n_ * c_ * h_ * w_, fill) {}

    std::size_t size() const { return v.size(); }

    float& at(std::size_t in, std::size_t ic, std::size_t iy, std::size_t ix) {
        return v[((in * c + ic) * h + iy) * w + ix];
    }
    float at(std::size_t in, std::size_t ic, std::size_t iy, std::size_t ix) const {
        return v[((in * c + ic) * h + iy) * w + ix];
    }

    // pointer to the start of one (n, c) plane
    float* plane(std::size_t in, std::size_t ic) { return v.data() + (in * c + ic) * h * w; }
    const float* plane(std::size_t in, std::size_t ic) const {
        return v.data() + (in * c + ic) * h * w;
    }

    bool same_shape(const Tensor4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    bool all_finite() const {
        for (float x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    std::string shape_str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) +
               "," + std::to_string(w) + ")";
    }

    // copy selected batch items into a new tensor, in index order
    Tensor4 gather(const std::vector<std::size_t>& idx) const {
        Tensor4 out(idx.size(), c, h, w);
        const std::size_t stride = c * h * w;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] >= n) throw ShapeMismatch("gather: index out of range");
            std::copy(v.begin() + idx[i] * stride, v.begin() + (idx[i] + 1) * stride,
                      out.v.begin() + i * stride);
        }
        return out;
    }

    // single batch item as a (1,c,h,w) tensor
    Tensor4 item(std::size_t i) const { return gather({i}); }
};

}  // namespace xrx
