#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "test_support.hpp"
#include "xrx/ensemble.hpp"

using namespace xrx;

namespace {

PosteriorMatrix random_posteriors(Rng& rng, std::size_t m, std::size_t k) {
    PosteriorMatrix p(m, k);
    for (std::size_t r = 0; r < m; ++r) {
        double sum = 0.0;
        std::vector<double> row(k);
        for (double& v : row) {
            v = rng.uniform(0.01, 1.0);
            sum += v;
        }
        // exact unit row sums, last entry takes the rounding remainder
        float acc = 0.0f;
        for (std::size_t c = 0; c + 1 < k; ++c) {
            p.at(r, c) = static_cast<float>(row[c] / sum);
            acc += p.at(r, c);
        }
        p.at(r, k - 1) = 1.0f - acc;
    }
    return p;
}

}  // namespace

TEST_CASE("scpa of uniform members is uniform") {
    PosteriorMatrix p(3, 4);
    for (std::size_t m = 0; m < 3; ++m)
        for (std::size_t k = 0; k < 4; ++k) p.at(m, k) = 0.25f;
    const Prediction pred = scpa(p);
    for (float v : pred.distribution) CHECK(v == Catch::Approx(0.25).margin(1e-7));
    CHECK(pred.predicted == 0);  // tie resolves to the lowest index
}

TEST_CASE("scpa evaluates the sum-then-softmax rule literally") {
    PosteriorMatrix p(2, 2);
    p.at(0, 0) = 1.0f;
    p.at(0, 1) = 0.0f;
    p.at(1, 0) = 1.0f;
    p.at(1, 1) = 0.0f;
    const Prediction pred = scpa(p);
    const double e2 = std::exp(2.0);
    CHECK(pred.distribution[0] == Catch::Approx(e2 / (e2 + 1.0)).margin(1e-6));  // ~0.8808
    CHECK(pred.distribution[1] == Catch::Approx(1.0 / (e2 + 1.0)).margin(1e-6)); // ~0.1192
    CHECK(pred.predicted == 0);
}

TEST_CASE("scpa argmax equals the column-sum argmax and rows are retained") {
    Rng rng(202);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t m = 1 + rng.uniform_index(6);
        const std::size_t k = 2 + rng.uniform_index(5);
        const PosteriorMatrix p = random_posteriors(rng, m, k);
        const Prediction pred = scpa(p);

        std::vector<double> colsum(k, 0.0);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < k; ++c) colsum[c] += p.at(r, c);
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c)
            if (colsum[c] > colsum[best]) best = c;
        CHECK(pred.predicted == best);

        double sum = 0.0;
        for (float v : pred.distribution) {
            CHECK(v > 0.0f);
            sum += v;
        }
        CHECK(std::fabs(sum - 1.0) <= 1e-6);
        CHECK(pred.member_posteriors.v == p.v);
    }
}

TEST_CASE("appending a uniform member leaves the scpa distribution unchanged") {
    // a uniform row shifts every column sum by the same constant, which the
    // softmax cancels
    Rng rng(203);
    for (int t = 0; t < 50; ++t) {
        const std::size_t k = 2 + rng.uniform_index(4);
        const PosteriorMatrix p = random_posteriors(rng, 2, k);
        PosteriorMatrix q(3, k);
        for (std::size_t c = 0; c < k; ++c) {
            q.at(0, c) = p.at(0, c);
            q.at(1, c) = p.at(1, c);
            q.at(2, c) = 1.0f / static_cast<float>(k);
        }
        const Prediction a = scpa(p);
        const Prediction b = scpa(q);
        for (std::size_t c = 0; c < k; ++c)
            CHECK(a.distribution[c] == Catch::Approx(b.distribution[c]).margin(2e-6));
    }
}

TEST_CASE("scpa arithmetic-mean variant averages the rows") {
    PosteriorMatrix p(2, 2);
    p.at(0, 0) = 0.8f;
    p.at(0, 1) = 0.2f;
    p.at(1, 0) = 0.4f;
    p.at(1, 1) = 0.6f;
    const Prediction pred = scpa(p, ScpaMode::ArithmeticMean);
    CHECK(pred.distribution[0] == Catch::Approx(0.6).margin(1e-6));
    CHECK(pred.distribution[1] == Catch::Approx(0.4).margin(1e-6));
    CHECK(pred.predicted == 0);
}

TEST_CASE("pm with a single member reduces to its argmax") {
    PosteriorMatrix p(1, 3);
    p.at(0, 0) = 0.2f;
    p.at(0, 1) = 0.5f;
    p.at(0, 2) = 0.3f;
    const Prediction pred = pm(p);
    CHECK(pred.predicted == 1);
    CHECK(pred.distribution[1] == Catch::Approx(0.5).margin(1e-6));
}

TEST_CASE("pm picks the class with the best single-member score") {
    PosteriorMatrix p(2, 2);
    p.at(0, 0) = 0.6f;
    p.at(0, 1) = 0.4f;
    p.at(1, 0) = 0.1f;
    p.at(1, 1) = 0.9f;
    const Prediction pred = pm(p);
    CHECK(pred.predicted == 1);  // scores (0.6, 0.9)
    CHECK(pred.distribution[0] == Catch::Approx(0.6 / 1.5).margin(1e-6));
    CHECK(pred.distribution[1] == Catch::Approx(0.9 / 1.5).margin(1e-6));
}

TEST_CASE("pm ties resolve to the lowest class index") {
    PosteriorMatrix p(2, 2);
    p.at(0, 0) = 0.7f;
    p.at(0, 1) = 0.3f;
    p.at(1, 0) = 0.3f;
    p.at(1, 1) = 0.7f;
    CHECK(pm(p).predicted == 0);
}

TEST_CASE("pm prediction dominates every class on max-score") {
    Rng rng(207);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t m = 1 + rng.uniform_index(5);
        const std::size_t k = 2 + rng.uniform_index(5);
        const PosteriorMatrix p = random_posteriors(rng, m, k);
        const Prediction pred = pm(p);
        double best = 0.0;
        for (std::size_t r = 0; r < m; ++r) best = std::max(best, (double)p.at(r, pred.predicted));
        for (std::size_t c = 0; c < k; ++c) {
            double cmax = 0.0;
            for (std::size_t r = 0; r < m; ++r) cmax = std::max(cmax, (double)p.at(r, c));
            CHECK(best >= cmax);
        }
    }
}

TEST_CASE("both rules are permutation-equivariant in the model axis") {
    Rng rng(211);
    for (int t = 0; t < 50; ++t) {
        const std::size_t m = 2 + rng.uniform_index(4);
        const std::size_t k = 2 + rng.uniform_index(4);
        const PosteriorMatrix p = random_posteriors(rng, m, k);
        PosteriorMatrix shuffled = p;
        std::vector<std::size_t> order(m);
        for (std::size_t i = 0; i < m; ++i) order[i] = i;
        rng.shuffle(order);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < k; ++c) shuffled.at(r, c) = p.at(order[r], c);

        const Prediction a1 = scpa(p), a2 = scpa(shuffled);
        for (std::size_t c = 0; c < k; ++c)
            CHECK(a1.distribution[c] == Catch::Approx(a2.distribution[c]).margin(1e-6));
        const Prediction b1 = pm(p), b2 = pm(shuffled);
        CHECK(b1.predicted == b2.predicted);
        for (std::size_t c = 0; c < k; ++c)
            CHECK(b1.distribution[c] == Catch::Approx(b2.distribution[c]).margin(1e-6));
    }
}

TEST_CASE("empty or invalid ensembles are rejected") {
    PosteriorMatrix p;
    CHECK_THROWS_AS(scpa(p), EmptyEnsemble);
    CHECK_THROWS_AS(pm(p), EmptyEnsemble);

    PosteriorMatrix bad(1, 2);
    bad.at(0, 0) = 0.9f;
    bad.at(0, 1) = 0.3f;  // sums to 1.2
    CHECK_THROWS_AS(scpa(bad), InvalidConfig);
}
