#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "xrx/errors.hpp"
#include "xrx/image.hpp"
#include "xrx/tensor.hpp"
#include "xrx/util.hpp"

namespace xrx {

// ---------------------------------------------------------------------------
// histogram equalization

// f(X_k) = X_0 + (X_L - X_0) * c(X_k) with X_0 = 0, X_L = 255, rounded half-up.
inline GrayImage equalize(const GrayImage& img) {
    img.require(Regime::Levels, "equalize");
    const Histogram h = histogram(img);  // throws EmptyImage on empty input
    std::array<int, 256> lut{};
    double cum = 0.0;
    for (int k = 0; k < 256; ++k) {
        cum += h.p(k);
        lut[k] = std::min(255, round_half_up(255.0 * cum));
    }
    GrayImage out(img.height, img.width, Regime::Levels);
    for (std::size_t i = 0; i < img.size(); ++i)
        out.pix[i] = static_cast<float>(lut[static_cast<int>(img.pix[i])]);
    return out;
}

// ---------------------------------------------------------------------------
// Perona-Malik diffusion

enum class DiffusionVariant { C1, C2, C3 };

struct DiffusionConfig {
    double gradient_threshold = 0.1;  // K, for unit-interval images
    int iterations = 20;
    double lambda = 0.2;  // time step, must stay <= 0.25 for the 4-neighbour scheme
    DiffusionVariant variant = DiffusionVariant::C3;
};

// c1 = exp(-(g/K)^2), c2 = 1/(1+(g/K)^2), c3 = Tukey's biweight (zero beyond K*sqrt(2)).
inline double diffusion_coefficient(double g, double K, DiffusionVariant variant) {
    const double r = g / K;
    switch (variant) {
        case DiffusionVariant::C1: return std::exp(-r * r);
        case DiffusionVariant::C2: return 1.0 / (1.0 + r * r);
        case DiffusionVariant::C3: {
            const double s = g / (K * std::sqrt(2.0));
            if (s > 1.0) return 0.0;
            const double t = 1.0 - s * s;
            return 0.5 * t * t;
        }
    }
    return 0.0;
}

// Explicit 4-neighbour scheme, reflective (Neumann) boundaries:
//   u <- u + lambda * sum_d c(|grad_d u|) * grad_d u
inline GrayImage perona_malik(const GrayImage& img, const DiffusionConfig& cfg) {
    img.require(Regime::Unit, "perona_malik");
    if (cfg.lambda > 0.25 || cfg.lambda <= 0.0)
        throw InvalidConfig("perona_malik: lambda must be in (0, 0.25]");
    if (cfg.gradient_threshold <= 0.0 || cfg.iterations <= 0)
        throw InvalidConfig("perona_malik: K and iterations must be positive");

    const std::size_t H = img.height, W = img.width;
    std::vector<float> cur = img.pix, next(img.size());
    const double K = cfg.gradient_threshold;
    for (int it = 0; it < cfg.iterations; ++it) {
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                const double u = cur[y * W + x];
                // reflected neighbours give zero gradient across the border
                const double gn = (y > 0 ? cur[(y - 1) * W + x] : u) - u;
                const double gs = (y + 1 < H ? cur[(y + 1) * W + x] : u) - u;
                const double gw = (x > 0 ? cur[y * W + x - 1] : u) - u;
                const double ge = (x + 1 < W ? cur[y * W + x + 1] : u) - u;
                double flux = diffusion_coefficient(std::fabs(gn), K, cfg.variant) * gn +
                              diffusion_coefficient(std::fabs(gs), K, cfg.variant) * gs +
                              diffusion_coefficient(std::fabs(gw), K, cfg.variant) * gw +
                              diffusion_coefficient(std::fabs(ge), K, cfg.variant) * ge;
                next[y * W + x] = static_cast<float>(u + cfg.lambda * flux);
            }
        }
        cur.swap(next);
    }
    GrayImage out(H, W, Regime::Unit);
    out.pix = std::move(cur);
    return out;
}

// ---------------------------------------------------------------------------
// unsharp masking

enum class UnsharpKernel { EdgeEnhance, Sharpen };

// 3x3 convolution with reflective borders, output clamped to [0,1].
// Both kernels sum to 1, so flat regions pass through unchanged.
inline GrayImage unsharp(const GrayImage& img, UnsharpKernel kernel) {
    img.require(Regime::Unit, "unsharp");
    static constexpr double edge[9] = {-0.5, -0.5, -0.5, -0.5, 5.0, -0.5, -0.5, -0.5, -0.5};
    static constexpr double sharp[9] = {-0.125, -0.125, -0.125, -0.125, 2.0,
                                        -0.125, -0.125, -0.125, -0.125};
    const double* k = kernel == UnsharpKernel::EdgeEnhance ? edge : sharp;
    const long H = static_cast<long>(img.height), W = static_cast<long>(img.width);
    GrayImage out(img.height, img.width, Regime::Unit);
    for (long y = 0; y < H; ++y) {
        for (long x = 0; x < W; ++x) {
            double acc = 0.0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    long yy = y + dy, xx = x + dx;
                    if (yy < 0) yy = -yy;          // reflect
                    if (yy >= H) yy = 2 * H - 2 - yy;
                    if (xx < 0) xx = -xx;
                    if (xx >= W) xx = 2 * W - 2 - xx;
                    acc += k[(dy + 1) * 3 + (dx + 1)] * img.pix[yy * W + xx];
                }
            }
            out.pix[y * W + x] = clamp01(static_cast<float>(acc));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// bright-artifact removal (text glyph inpainting)

namespace detail {

// quantile by order statistic: smallest value with at least ceil(q*N) values <= it
inline float quantile(std::vector<float> v, double q) {
    const std::size_t idx = std::min(
        v.size() - 1,
        static_cast<std::size_t>(std::max(0.0, std::ceil(q * static_cast<double>(v.size())) - 1)));
    std::nth_element(v.begin(), v.begin() + idx, v.end());
    return v[idx];
}

}  // namespace detail

// Pixels above the `quantile` threshold that form 8-connected components
// smaller than 1% of the image area are masked and refilled by iterative
// 4-neighbour averaging until the largest change drops below 1e-4. Works in
// both regimes so it can run before equalization; integer-regime fills are
// rounded half-up back to levels.
inline GrayImage remove_text_artifacts(const GrayImage& img, double quantile = 0.98,
                                       double component_area_frac = 0.01) {
    if (quantile <= 0.0 || quantile > 1.0)
        throw InvalidConfig("remove_text_artifacts: quantile must be in (0,1]");
    const std::size_t H = img.height, W = img.width, N = img.size();
    if (N == 0) return img;

    const float thr = detail::quantile(img.pix, quantile);
    std::vector<std::uint8_t> bright(N, 0);
    bool any = false;
    for (std::size_t i = 0; i < N; ++i) {
        if (img.pix[i] > thr) {
            bright[i] = 1;
            any = true;
        }
    }
    if (!any) return img;

    // 8-connected components over the bright mask; keep only small ones
    const std::size_t max_size =
        static_cast<std::size_t>(component_area_frac * static_cast<double>(N));
    std::vector<std::uint8_t> mask(N, 0);
    std::vector<int> seen(N, 0);
    std::vector<std::size_t> stack, comp;
    for (std::size_t start = 0; start < N; ++start) {
        if (!bright[start] || seen[start]) continue;
        stack.assign(1, start);
        seen[start] = 1;
        comp.clear();
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            comp.push_back(p);
            const long y = static_cast<long>(p / W), x = static_cast<long>(p % W);
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    const long yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= static_cast<long>(H) || xx < 0 ||
                        xx >= static_cast<long>(W))
                        continue;
                    const std::size_t q = static_cast<std::size_t>(yy) * W + xx;
                    if (bright[q] && !seen[q]) {
                        seen[q] = 1;
                        stack.push_back(q);
                    }
                }
        }
        if (comp.size() < max_size)
            for (std::size_t p : comp) mask[p] = 1;
    }

    GrayImage out = img;
    std::size_t masked = 0;
    double unmasked_sum = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        if (mask[i])
            ++masked;
        else
            unmasked_sum += img.pix[i];
    }
    if (masked == 0) return out;
    const float init =
        masked == N ? 0.0f : static_cast<float>(unmasked_sum / static_cast<double>(N - masked));
    for (std::size_t i = 0; i < N; ++i)
        if (mask[i]) out.pix[i] = init;

    // Jacobi sweeps of 4-neighbour means over the masked set only
    std::vector<float> buf = out.pix;
    for (int it = 0; it < 20000; ++it) {
        float max_change = 0.0f;
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const std::size_t p = y * W + x;
                if (!mask[p]) continue;
                double acc = 0.0;
                acc += out.pix[y > 0 ? p - W : p];
                acc += out.pix[y + 1 < H ? p + W : p];
                acc += out.pix[x > 0 ? p - 1 : p];
                acc += out.pix[x + 1 < W ? p + 1 : p];
                const float nv = static_cast<float>(acc / 4.0);
                max_change = std::max(max_change, std::fabs(nv - out.pix[p]));
                buf[p] = nv;
            }
        out.pix.swap(buf);
        if (max_change < 1e-4f) break;
    }
    if (img.regime == Regime::Levels)
        for (std::size_t i = 0; i < N; ++i)
            if (mask[i]) out.pix[i] = static_cast<float>(round_half_up(out.pix[i]));
    return out;
}

// ---------------------------------------------------------------------------
// standardization / normalization

inline Tensor4 standardize(const Tensor4& batch, double mean, double std) {
    if (std <= 0.0) throw ZeroStd("standardize: std must be positive");
    Tensor4 out = batch;
    const float m = static_cast<float>(mean), s = static_cast<float>(std);
    for (float& v : out.v) v = (v - m) / s;
    return out;
}

// integer levels -> unit interval, value = level / 255
inline GrayImage normalize(const GrayImage& img) {
    img.require(Regime::Levels, "normalize");
    GrayImage out(img.height, img.width, Regime::Unit);
    for (std::size_t i = 0; i < img.size(); ++i) out.pix[i] = img.pix[i] / 255.0f;
    return out;
}

// ---------------------------------------------------------------------------
// resize and rotation

namespace detail {

inline float bilinear_sample(const GrayImage& img, double sy, double sx) {
    const std::size_t H = img.height, W = img.width;
    const double cy = std::clamp(sy, 0.0, static_cast<double>(H - 1));
    const double cx = std::clamp(sx, 0.0, static_cast<double>(W - 1));
    const std::size_t y0 = static_cast<std::size_t>(cy);
    const std::size_t x0 = static_cast<std::size_t>(cx);
    const std::size_t y1 = std::min(y0 + 1, H - 1);
    const std::size_t x1 = std::min(x0 + 1, W - 1);
    const double fy = cy - static_cast<double>(y0);
    const double fx = cx - static_cast<double>(x0);
    const double top = img.at(y0, x0) * (1.0 - fx) + img.at(y0, x1) * fx;
    const double bot = img.at(y1, x0) * (1.0 - fx) + img.at(y1, x1) * fx;
    return static_cast<float>(top * (1.0 - fy) + bot * fy);
}

}  // namespace detail

// Corner-aligned bilinear resize; the single channel is replicated to 3,
// giving a (1, 3, side, side) tensor.
inline Tensor4 resize_bilinear(const GrayImage& img, std::size_t side) {
    if (side < 1) throw InvalidConfig("resize_bilinear: side must be >= 1");
    if (img.size() == 0) throw EmptyImage("resize_bilinear: empty image");
    Tensor4 out(1, 3, side, side);
    const double sy = side > 1 ? static_cast<double>(img.height - 1) / static_cast<double>(side - 1)
                               : 0.0;
    const double sx = side > 1 ? static_cast<double>(img.width - 1) / static_cast<double>(side - 1)
                               : 0.0;
    const double oy = side > 1 ? 0.0 : static_cast<double>(img.height - 1) / 2.0;
    const double ox = side > 1 ? 0.0 : static_cast<double>(img.width - 1) / 2.0;
    float* p = out.plane(0, 0);
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x)
            p[y * side + x] = detail::bilinear_sample(img, oy + sy * static_cast<double>(y),
                                                      ox + sx * static_cast<double>(x));
    std::copy(p, p + side * side, out.plane(0, 1));
    std::copy(p, p + side * side, out.plane(0, 2));
    return out;
}

// Rotation about the image centre by `deg` degrees, bilinear resampling,
// out-of-bounds filled with 0.
inline GrayImage rotate(const GrayImage& img, double deg) {
    img.require(Regime::Unit, "rotate");
    if (deg == 0.0) return img;
    const double th = deg * 3.14159265358979323846 / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    const double cy = static_cast<double>(img.height - 1) / 2.0;
    const double cx = static_cast<double>(img.width - 1) / 2.0;
    GrayImage out(img.height, img.width, Regime::Unit);
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            // inverse map: rotate the output grid back into the source
            const double dy = static_cast<double>(y) - cy;
            const double dx = static_cast<double>(x) - cx;
            const double sy = cy + c * dy - s * dx;
            const double sx = cx + s * dy + c * dx;
            if (sy < 0.0 || sy > static_cast<double>(img.height - 1) || sx < 0.0 ||
                sx > static_cast<double>(img.width - 1)) {
                out.at(y, x) = 0.0f;
            } else {
                out.at(y, x) = detail::bilinear_sample(img, sy, sx);
            }
        }
    }
    return out;
}

// angle drawn for a given seed, uniform in [-max_deg, +max_deg]
inline double augment_rotation_angle(std::uint64_t rng_seed, double max_deg) {
    if (max_deg < 0.0) throw InvalidConfig("augment_rotate: max_deg must be >= 0");
    if (max_deg == 0.0) return 0.0;
    Rng rng(derive_seed(rng_seed, 0x707));
    return rng.uniform(-max_deg, max_deg);
}

// Seeded rotation augmentation.
inline GrayImage augment_rotate(const GrayImage& img, std::uint64_t rng_seed, double max_deg) {
    const double deg = augment_rotation_angle(rng_seed, max_deg);
    return deg == 0.0 ? img : rotate(img, deg);
}

// ---------------------------------------------------------------------------
// pipeline

enum class Stage {
    Grayscale,        // marker: input must be an integer-regime grey image
    RemoveArtifacts,
    Equalize,
    Normalize,
    PeronaMalik,
    Unsharp,
    Resize,
    Standardize
};

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::Grayscale: return "grayscale";
        case Stage::RemoveArtifacts: return "remove-artifacts";
        case Stage::Equalize: return "equalize";
        case Stage::Normalize: return "normalize";
        case Stage::PeronaMalik: return "perona-malik";
        case Stage::Unsharp: return "unsharp";
        case Stage::Resize: return "resize";
        case Stage::Standardize: return "standardize";
    }
    return "?";
}

inline Stage stage_from_name(const std::string& s) {
    if (s == "grayscale") return Stage::Grayscale;
    if (s == "remove-artifacts") return Stage::RemoveArtifacts;
    if (s == "equalize") return Stage::Equalize;
    if (s == "normalize") return Stage::Normalize;
    if (s == "perona-malik") return Stage::PeronaMalik;
    if (s == "unsharp") return Stage::Unsharp;
    if (s == "resize") return Stage::Resize;
    if (s == "standardize") return Stage::Standardize;
    throw InvalidConfig("unknown preprocess stage: " + s);
}

struct PreprocessConfig {
    std::vector<Stage> stages = {Stage::Grayscale,   Stage::RemoveArtifacts, Stage::Equalize,
                                 Stage::Normalize,   Stage::PeronaMalik,     Stage::Unsharp,
                                 Stage::Resize,      Stage::Standardize};
    double artifact_quantile = 0.98;
    double artifact_component_frac = 0.01;
    DiffusionConfig diffusion;
    UnsharpKernel unsharp_kernel = UnsharpKernel::EdgeEnhance;
    double mean = 0.0;   // dataset statistics for the standardize stage
    double std = 1.0;
    std::size_t output_side = 224;
    double max_rotate_deg = 15.0;  // used by augmentation, not by the deterministic chain
    int augment_copies = 0;        // extra rotated copies per training image

    void validate() const {
        if (stages.empty()) throw InvalidConfig("preprocess: stage list is empty");
        if (artifact_quantile <= 0.0 || artifact_quantile > 1.0)
            throw InvalidConfig("preprocess: artifact quantile must be in (0,1]");
        if (std <= 0.0) throw ZeroStd("preprocess: std must be positive");
        if (output_side < 1) throw InvalidConfig("preprocess: output side must be >= 1");
        if (max_rotate_deg < 0.0) throw InvalidConfig("preprocess: max rotation must be >= 0");
        if (augment_copies < 0) throw InvalidConfig("preprocess: augment copies must be >= 0");
    }
};

inline GrayImage remove_text_artifacts(const GrayImage& img, const PreprocessConfig& cfg) {
    return remove_text_artifacts(img, cfg.artifact_quantile, cfg.artifact_component_frac);
}

// Runs the configured stage chain over one image. GrayImage stages run until
// Resize converts to a (1,3,side,side) tensor; Standardize applies after.
inline Tensor4 preprocess_pipeline(const GrayImage& img, const PreprocessConfig& cfg) {
    cfg.validate();
    GrayImage cur = img;
    Tensor4 tensor;
    bool have_tensor = false;
    for (Stage st : cfg.stages) {
        if (have_tensor && st != Stage::Standardize)
            throw RegimeError(std::string("pipeline: stage ") + stage_name(st) +
                              " after resize (tensor regime)");
        switch (st) {
            case Stage::Grayscale:
                cur.require(Regime::Levels, "pipeline: grayscale stage");
                break;
            case Stage::RemoveArtifacts:
                cur = remove_text_artifacts(cur, cfg.artifact_quantile,
                                            cfg.artifact_component_frac);
                break;
            case Stage::Equalize:
                cur = equalize(cur);
                break;
            case Stage::Normalize:
                cur = normalize(cur);
                break;
            case Stage::PeronaMalik:
                cur = perona_malik(cur, cfg.diffusion);
                break;
            case Stage::Unsharp:
                cur = unsharp(cur, cfg.unsharp_kernel);
                break;
            case Stage::Resize:
                tensor = resize_bilinear(cur, cfg.output_side);
                have_tensor = true;
                break;
            case Stage::Standardize:
                if (!have_tensor)
                    throw RegimeError("pipeline: standardize before resize (needs tensor)");
                tensor = standardize(tensor, cfg.mean, cfg.std);
                break;
        }
    }
    if (!have_tensor) throw InvalidConfig("pipeline: stage list never reaches resize");
    return tensor;
}

}  // namespace xrx
