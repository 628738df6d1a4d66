#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "xrx/errors.hpp"
#include "xrx/network.hpp"

namespace xrx {

namespace detail {

// Cyclic Jacobi eigensolver for a symmetric matrix (row-major, n x n).
// Plenty for the Gram matrices handled here; converges to machine precision.
inline std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t n) {
    if (n == 1) return {a[0]};
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        double diag = 0.0;
        for (std::size_t p = 0; p < n; ++p) diag += a[p * n + p] * a[p * n + p];
        if (off <= 1e-26 * std::max(diag, 1e-300)) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) continue;
                const double app = a[p * n + p], aqq = a[q * n + q];
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a[i * n + p], aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[i * n + q] = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a[p * n + i], aqi = a[q * n + i];
                    a[p * n + i] = c * api - s * aqi;
                    a[q * n + i] = s * api + c * aqi;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a[i * n + i];
    return eig;
}

}  // namespace detail

// Empirical spectral density of a weight matrix: the squared singular values,
// descending. Computed from the Gram matrix of the smaller dimension, so the
// result is transpose-invariant. Conv kernels are unrolled beforehand to
// (out_channels, in_channels*kh*kw).
inline std::vector<double> esd(const std::vector<float>& w, std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0 || w.size() != rows * cols)
        throw ShapeMismatch("esd: bad matrix dimensions");
    bool all_zero = true;
    for (float x : w)
        if (x != 0.0f) {
            all_zero = false;
            break;
        }
    if (all_zero) throw DegenerateMatrix("esd: all matrix entries are zero");

    const bool use_rows = rows <= cols;  // pick the smaller Gram matrix
    const std::size_t n = use_rows ? rows : cols;
    std::vector<double> gram(n * n, 0.0);
    if (use_rows) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < cols; ++k)
                    s += static_cast<double>(w[i * cols + k]) * w[j * cols + k];
                gram[i * n + j] = gram[j * n + i] = s;
            }
    } else {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < rows; ++k)
                    s += static_cast<double>(w[k * cols + i]) * w[k * cols + j];
                gram[i * n + j] = gram[j * n + i] = s;
            }
    }
    std::vector<double> eig = detail::jacobi_eigenvalues(std::move(gram), n);
    for (double& e : eig) e = std::max(e, 0.0);  // clamp rounding negatives
    std::sort(eig.begin(), eig.end(), std::greater<double>());
    return eig;
}

// Continuous power-law MLE for a fixed lower cutoff:
//   alpha = 1 + n_tail / sum ln(lambda_i / xmin)  over  lambda_i >= xmin
inline double powerlaw_alpha_mle(const std::vector<double>& eigs, double xmin) {
    if (xmin <= 0.0) throw InvalidConfig("powerlaw: xmin must be positive");
    std::size_t n = 0;
    double s = 0.0;
    for (double e : eigs)
        if (e >= xmin) {
            ++n;
            s += std::log(e / xmin);
        }
    if (n < 2 || s <= 0.0)
        throw DegenerateSpectrum("powerlaw: tail needs >= 2 values with at least one above xmin");
    return 1.0 + static_cast<double>(n) / s;
}

struct PowerlawFit {
    double alpha = 0.0;
    double xmin = 0.0;
    double ks = 0.0;
};

namespace detail {

inline double powerlaw_ks(const std::vector<double>& sorted_tail, double xmin, double alpha) {
    const double n = static_cast<double>(sorted_tail.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted_tail.size(); ++i) {
        const double f = 1.0 - std::pow(xmin / sorted_tail[i], alpha - 1.0);
        const double lo = static_cast<double>(i) / n;
        const double hi = static_cast<double>(i + 1) / n;
        d = std::max(d, std::max(std::fabs(f - lo), std::fabs(f - hi)));
    }
    return d;
}

}  // namespace detail

// Fits the tail exponent by scanning every observed value as candidate xmin
// and keeping the one with the smallest KS distance (ties: smaller xmin).
inline PowerlawFit powerlaw_fit(const std::vector<double>& eigs) {
    if (eigs.size() < 10) throw TooFewSamples("powerlaw_fit: needs >= 10 values");
    std::vector<double> sorted = eigs;
    for (double e : sorted)
        if (e <= 0.0) throw InvalidConfig("powerlaw_fit: values must be positive");
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() == sorted.back())
        throw DegenerateSpectrum("powerlaw_fit: all values equal");

    PowerlawFit best;
    bool have = false;
    std::size_t start = 0;
    while (start < sorted.size()) {
        const double xmin = sorted[start];
        // tail = values >= xmin; skip candidates whose tail cannot support the MLE
        const std::size_t tail_n = sorted.size() - start;
        if (tail_n < 2 || sorted.back() == xmin) break;
        double s = 0.0;
        for (std::size_t i = start; i < sorted.size(); ++i) s += std::log(sorted[i] / xmin);
        if (s > 0.0) {
            const double alpha = 1.0 + static_cast<double>(tail_n) / s;
            std::vector<double> tail(sorted.begin() + start, sorted.end());
            const double ks = detail::powerlaw_ks(tail, xmin, alpha);
            if (!have || ks < best.ks) {
                best = {alpha, xmin, ks};
                have = true;
            }
        }
        // advance past duplicates of this candidate
        std::size_t next = start;
        while (next < sorted.size() && sorted[next] == xmin) ++next;
        start = next;
    }
    if (!have) throw DegenerateSpectrum("powerlaw_fit: no usable cutoff");
    return best;
}

// ---------------------------------------------------------------------------
// snapshot / model ranking

struct LayerSpectralStats {
    std::size_t layer = 0;  // index in the network's layer list
    std::size_t rows = 0, cols = 0;
    double lambda_max = 0.0;
    double log_frob = 0.0;  // log10 of the squared Frobenius norm
    bool has_fit = false;   // power-law fit present (needs >= 10 positive eigenvalues)
    double alpha = 0.0;
    double xmin = 0.0;
    double ks = 0.0;
    double weighted_alpha = 0.0;  // alpha * log10(lambda_max)
};

struct SpectralStats {
    std::vector<LayerSpectralStats> layers;
    double mean_weighted_alpha = 0.0;  // over layers with fits; 0 when none
    double mean_log_frob = 0.0;        // the model's "log norm"
};

// Spectral statistics over every weight matrix with min dimension >= 8.
// Layers whose spectrum is too small for a power-law fit contribute their
// norm only.
inline SpectralStats analyze_spectra(const std::vector<LayerSpec>& specs,
                                     const std::vector<LayerParams>& params,
                                     std::size_t min_dim = 8) {
    SpectralStats out;
    double wa_sum = 0.0, lf_sum = 0.0;
    std::size_t wa_n = 0;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const LayerSpec& l = specs[i];
        std::size_t rows = 0, cols = 0;
        if (l.kind == LayerKind::Conv2d) {
            rows = static_cast<std::size_t>(l.out_channels);
            cols = static_cast<std::size_t>(l.in_channels) * l.kernel * l.kernel;
        } else if (l.kind == LayerKind::Dense) {
            rows = static_cast<std::size_t>(l.out_features);
            cols = static_cast<std::size_t>(l.in_features);
        } else {
            continue;
        }
        if (std::min(rows, cols) < min_dim) continue;

        LayerSpectralStats ls;
        ls.layer = i;
        ls.rows = rows;
        ls.cols = cols;
        const std::vector<double> eig = esd(params[i].weights, rows, cols);
        ls.lambda_max = eig.front();
        const double frob2 = std::accumulate(eig.begin(), eig.end(), 0.0);
        ls.log_frob = std::log10(frob2);
        std::vector<double> positive;
        positive.reserve(eig.size());
        for (double e : eig)
            if (e > 0.0) positive.push_back(e);
        if (positive.size() >= 10 && positive.front() != positive.back()) {
            try {
                const PowerlawFit fit = powerlaw_fit(positive);
                ls.has_fit = true;
                ls.alpha = fit.alpha;
                ls.xmin = fit.xmin;
                ls.ks = fit.ks;
                ls.weighted_alpha = fit.alpha * std::log10(ls.lambda_max);
                wa_sum += ls.weighted_alpha;
                ++wa_n;
            } catch (const DegenerateSpectrum&) {
                // norm-only layer
            }
        }
        lf_sum += ls.log_frob;
        out.layers.push_back(ls);
    }
    if (out.layers.empty())
        throw DegenerateMatrix("analyze_spectra: no weight matrix with min dimension >= " +
                               std::to_string(min_dim));
    out.mean_log_frob = lf_sum / static_cast<double>(out.layers.size());
    if (wa_n > 0) out.mean_weighted_alpha = wa_sum / static_cast<double>(wa_n);
    return out;
}

inline SpectralStats analyze_spectra(const Network& net, std::size_t min_dim = 8) {
    return analyze_spectra(net.layers(), net.all_params(), min_dim);
}

inline nlohmann::json spectral_report_json(const SpectralStats& s) {
    nlohmann::json j;
    j["layers"] = nlohmann::json::array();
    for (const auto& l : s.layers) {
        nlohmann::json lj = {{"layer", l.layer},
                             {"rows", l.rows},
                             {"cols", l.cols},
                             {"lambda_max", l.lambda_max},
                             {"log_frob", l.log_frob}};
        if (l.has_fit) {
            lj["alpha"] = l.alpha;
            lj["xmin"] = l.xmin;
            lj["ks"] = l.ks;
            lj["weighted_alpha"] = l.weighted_alpha;
        }
        j["layers"].push_back(lj);
    }
    j["mean_weighted_alpha"] = s.mean_weighted_alpha;
    j["mean_log_frob"] = s.mean_log_frob;
    return j;
}

// Top-k indices: ascending mean log norm, ties broken by mean weighted alpha
// (descending by default, matching "highest weighted alpha"; the flag flips
// the tie-break for the lower-alpha convention), final ties by lowest index.
inline std::vector<std::size_t> rank_snapshots(const std::vector<SpectralStats>& stats,
                                               std::size_t k, bool prefer_high_alpha = true) {
    if (k < 1 || k > stats.size())
        throw KTooLarge("rank_snapshots: k=" + std::to_string(k) + " with " +
                        std::to_string(stats.size()) + " candidates");
    std::vector<std::size_t> idx(stats.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (stats[a].mean_log_frob != stats[b].mean_log_frob)
            return stats[a].mean_log_frob < stats[b].mean_log_frob;
        if (stats[a].mean_weighted_alpha != stats[b].mean_weighted_alpha)
            return prefer_high_alpha
                       ? stats[a].mean_weighted_alpha > stats[b].mean_weighted_alpha
                       : stats[a].mean_weighted_alpha < stats[b].mean_weighted_alpha;
        return a < b;
    });
    idx.resize(k);
    return idx;
}

}  // namespace xrx
