#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "xrx/errors.hpp"
#include "xrx/util.hpp"

namespace xrx {

// Pixel regime: Levels holds 8-bit grey levels 0..255 (stored exactly in
// float), Unit holds reals in [0,1] after normalization.
enum class Regime { Levels, Unit };

struct GrayImage {
    std::size_t height = 0, width = 0;
    std::vector<float> pix;
    Regime regime = Regime::Levels;

    GrayImage() = default;
    GrayImage(std::size_t h, std::size_t w, Regime r = Regime::Levels, float fill = 0.0f)
        : height(h), width(w), pix(h * w, fill), regime(r) {}

    std::size_t size() const { return pix.size(); }
    float& at(std::size_t y, std::size_t x) { return pix[y * width + x]; }
    float at(std::size_t y, std::size_t x) const { return pix[y * width + x]; }

    void require(Regime r, const char* op) const {
        if (regime != r)
            throw RegimeError(std::string(op) + ": image is in the " +
                              (regime == Regime::Levels ? "integer-level" : "unit-interval") +
                              " regime");
    }
};

// 8-bit RGB raster, interleaved.
struct RgbImage {
    std::size_t height = 0, width = 0;
    std::vector<std::uint8_t> pix;  // 3 bytes per pixel

    RgbImage() = default;
    RgbImage(std::size_t h, std::size_t w) : height(h), width(w), pix(h * w * 3, 0) {}

    std::uint8_t* px(std::size_t y, std::size_t x) { return pix.data() + (y * width + x) * 3; }
    const std::uint8_t* px(std::size_t y, std::size_t x) const {
        return pix.data() + (y * width + x) * 3;
    }
};

// Grey-level frequencies n_k with the derived density p and cumulative c.
struct Histogram {
    std::array<std::size_t, 256> counts{};
    std::size_t total = 0;

    double p(int k) const { return static_cast<double>(counts[k]) / static_cast<double>(total); }

    double cumulative(int k) const {
        std::size_t s = 0;
        for (int j = 0; j <= k; ++j) s += counts[j];
        return static_cast<double>(s) / static_cast<double>(total);
    }
};

inline Histogram histogram(const GrayImage& img) {
    img.require(Regime::Levels, "histogram");
    if (img.size() == 0) throw EmptyImage("histogram: image has no pixels");
    Histogram h;
    h.total = img.size();
    for (float v : img.pix) ++h.counts[static_cast<int>(v)];
    return h;
}

}  // namespace xrx
