#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "xrx/errors.hpp"

namespace xrx {

// M x K matrix of per-model class posteriors; each row sums to 1.
struct PosteriorMatrix {
    std::size_t models = 0, classes = 0;
    std::vector<float> v;  // row-major

    PosteriorMatrix() = default;
    PosteriorMatrix(std::size_t m, std::size_t k) : models(m), classes(k), v(m * k, 0.0f) {}

    float& at(std::size_t m, std::size_t k) { return v[m * classes + k]; }
    float at(std::size_t m, std::size_t k) const { return v[m * classes + k]; }

    void validate() const {
        if (models == 0) throw EmptyEnsemble("posterior matrix has no model rows");
        if (classes == 0) throw EmptyEnsemble("posterior matrix has no classes");
        for (std::size_t m = 0; m < models; ++m) {
            double s = 0.0;
            for (std::size_t k = 0; k < classes; ++k) {
                const float p = at(m, k);
                if (p < 0.0f || p > 1.0f)
                    throw InvalidConfig("posterior entry outside [0,1]");
                s += p;
            }
            if (std::fabs(s - 1.0) > 1e-6)
                throw InvalidConfig("posterior row does not sum to 1");
        }
    }
};

struct Prediction {
    std::vector<float> distribution;   // K reals, sum 1
    std::size_t predicted = 0;         // argmax, ties to the lowest index
    PosteriorMatrix member_posteriors; // raw per-model rows, kept for audit
};

enum class ScpaMode {
    SumSoftmax,      // sums the member posteriors, then softmaxes the sums
    ArithmeticMean   // plain average, matching the method's name
};

// Softmax class posterior averaging:
//   P(j) = exp(sum_m P_m(j)) / sum_k exp(sum_m P_m(k))
inline Prediction scpa(const PosteriorMatrix& p, ScpaMode mode = ScpaMode::SumSoftmax) {
    p.validate();
    const std::size_t K = p.classes;
    std::vector<double> colsum(K, 0.0);
    for (std::size_t m = 0; m < p.models; ++m)
        for (std::size_t k = 0; k < K; ++k) colsum[k] += p.at(m, k);

    Prediction out;
    out.distribution.resize(K);
    if (mode == ScpaMode::SumSoftmax) {
        double mx = colsum[0];
        for (double s : colsum) mx = std::max(mx, s);
        double z = 0.0;
        std::vector<double> e(K);
        for (std::size_t k = 0; k < K; ++k) {
            e[k] = std::exp(colsum[k] - mx);
            z += e[k];
        }
        for (std::size_t k = 0; k < K; ++k) out.distribution[k] = static_cast<float>(e[k] / z);
    } else {
        for (std::size_t k = 0; k < K; ++k)
            out.distribution[k] = static_cast<float>(colsum[k] / static_cast<double>(p.models));
    }
    for (std::size_t k = 1; k < K; ++k)
        if (out.distribution[k] > out.distribution[out.predicted]) out.predicted = k;
    out.member_posteriors = p;
    return out;
}

// Prediction maximization: the class with the highest single-member score
// wins; the reported distribution is the per-class maxima renormalized.
inline Prediction pm(const PosteriorMatrix& p) {
    p.validate();
    const std::size_t K = p.classes;
    std::vector<double> score(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        double mx = p.at(0, k);
        for (std::size_t m = 1; m < p.models; ++m)
            mx = std::max(mx, static_cast<double>(p.at(m, k)));
        score[k] = mx;
    }
    double total = 0.0;
    for (double s : score) total += s;

    Prediction out;
    out.distribution.resize(K);
    for (std::size_t k = 0; k < K; ++k) out.distribution[k] = static_cast<float>(score[k] / total);
    for (std::size_t k = 1; k < K; ++k)
        if (score[k] > score[out.predicted]) out.predicted = k;
    out.member_posteriors = p;
    return out;
}

}  // namespace xrx
