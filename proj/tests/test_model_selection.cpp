#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "test_support.hpp"
#include "xrx/spectral.hpp"

using namespace xrx;

namespace {

std::vector<double> pareto_sample(std::size_t n, double alpha, double xmin, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> out(n);
    for (double& x : out) {
        double u = rng.uniform();
        while (u >= 1.0) u = rng.uniform();
        x = xmin * std::pow(1.0 - u, -1.0 / (alpha - 1.0));
    }
    return out;
}

}  // namespace

TEST_CASE("esd of the identity is all ones") {
    std::vector<float> w = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    const auto eig = esd(w, 3, 3);
    REQUIRE(eig.size() == 3);
    for (double e : eig) CHECK(e == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("esd of a diagonal matrix squares the singular values") {
    std::vector<float> w = {2, 0, 0, 1};
    const auto eig = esd(w, 2, 2);
    REQUIRE(eig.size() == 2);
    CHECK(eig[0] == Catch::Approx(4.0).margin(1e-12));
    CHECK(eig[1] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("esd matches an independent eigensolver on a random matrix") {
    Rng rng(71);
    const std::size_t rows = 50, cols = 20;
    std::vector<float> w(rows * cols);
    for (float& x : w) x = static_cast<float>(rng.uniform(-1.0, 1.0));

    const auto got = esd(w, rows, cols);
    REQUIRE(got.size() == cols);

    // oracle route: Eigen self-adjoint eigensolver over W^T W
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = w[r * cols + c];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m.transpose() * m);
    std::vector<double> want(solver.eigenvalues().data(), solver.eigenvalues().data() + cols);
    std::sort(want.begin(), want.end(), std::greater<double>());

    for (std::size_t i = 0; i < cols; ++i)
        CHECK(std::fabs(got[i] - want[i]) <= 1e-6 * std::max(1.0, std::fabs(want[i])));
}

TEST_CASE("esd is transpose-invariant up to spectrum padding") {
    Rng rng(73);
    const std::size_t rows = 12, cols = 7;
    std::vector<float> w(rows * cols);
    for (float& x : w) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    std::vector<float> wt(cols * rows);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) wt[c * rows + r] = w[r * cols + c];
    const auto a = esd(w, rows, cols);
    const auto b = esd(wt, cols, rows);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i] == Catch::Approx(b[i]).margin(1e-9));
}

TEST_CASE("esd rejects the all-zero matrix") {
    std::vector<float> w(12, 0.0f);
    CHECK_THROWS_AS(esd(w, 3, 4), DegenerateMatrix);
}

TEST_CASE("power-law MLE with a fixed cutoff reproduces the hand value") {
    const double e = std::exp(1.0);
    CHECK(powerlaw_alpha_mle({1.0, e}, 1.0) == Catch::Approx(3.0).margin(1e-12));
}

TEST_CASE("power-law fit recovers the exponent of Pareto samples") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto xs = pareto_sample(10000, 3.0, 1.0, seed * 101);
        const PowerlawFit fit = powerlaw_fit(xs);
        CHECK(fit.alpha >= 2.9);
        CHECK(fit.alpha <= 3.1);
        CHECK(fit.xmin >= 1.0);
    }
}

TEST_CASE("power-law fit is scale-invariant in alpha") {
    const auto xs = pareto_sample(2000, 2.5, 1.0, 909);
    const PowerlawFit base = powerlaw_fit(xs);
    std::vector<double> scaled = xs;
    for (double& x : scaled) x *= 7.5;
    const PowerlawFit sc = powerlaw_fit(scaled);
    CHECK(sc.alpha == Catch::Approx(base.alpha).margin(1e-9));
    CHECK(sc.xmin == Catch::Approx(base.xmin * 7.5).epsilon(1e-12));
}

TEST_CASE("power-law fit degenerate inputs") {
    CHECK_THROWS_AS(powerlaw_fit(std::vector<double>(20, 2.0)), DegenerateSpectrum);
    CHECK_THROWS_AS(powerlaw_fit({1.0, 2.0, 3.0}), TooFewSamples);
}

TEST_CASE("snapshot ranking sorts by log norm then weighted alpha") {
    auto stats = [](double lf, double wa) {
        SpectralStats s;
        s.mean_log_frob = lf;
        s.mean_weighted_alpha = wa;
        return s;
    };
    const std::vector<SpectralStats> by_norm = {stats(2.0, 0), stats(1.0, 0), stats(3.0, 0)};
    const auto top = rank_snapshots(by_norm, 2);
    REQUIRE(top.size() == 2);
    CHECK(top[0] == 1);
    CHECK(top[1] == 0);

    const std::vector<SpectralStats> tied = {stats(1.0, 3.1), stats(1.0, 4.2)};
    CHECK(rank_snapshots(tied, 1)[0] == 1);
    // the inversion flag flips the tie-break to prefer the lower alpha
    CHECK(rank_snapshots(tied, 1, false)[0] == 0);

    CHECK_THROWS_AS(rank_snapshots(by_norm, 4), KTooLarge);
}

TEST_CASE("ranking is a stable, duplicate-free prefix") {
    Rng rng(79);
    std::vector<SpectralStats> stats(6);
    for (auto& s : stats) {
        s.mean_log_frob = rng.uniform(0.0, 2.0);
        s.mean_weighted_alpha = rng.uniform(1.0, 5.0);
    }
    const auto top3 = rank_snapshots(stats, 3);
    CHECK(std::set<std::size_t>(top3.begin(), top3.end()).size() == 3);

    // appending strictly worse candidates must not change the prefix
    std::vector<SpectralStats> more = stats;
    SpectralStats worse;
    worse.mean_log_frob = 99.0;
    worse.mean_weighted_alpha = 0.0;
    more.push_back(worse);
    const auto again = rank_snapshots(more, 3);
    CHECK(again == top3);
}

TEST_CASE("network analysis covers weight layers above the size floor") {
    // conv 1->8 gives an 8x9 unrolled matrix (analyzed, norm only: 8 < 10
    // eigenvalues); conv 8->16 gives 16x72 (full fit); dense 16->3 skipped
    Network net(Shape3{1, 16, 16},
                {LayerSpec::conv2d(8, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
                 LayerSpec::conv2d(16, 3, 1, 1), LayerSpec::relu(), LayerSpec::global_avg_pool(),
                 LayerSpec::dense(3), LayerSpec::softmax()});
    net.init_params(123);
    const SpectralStats stats = analyze_spectra(net);
    REQUIRE(stats.layers.size() == 2);
    CHECK(stats.layers[0].layer == 0);
    CHECK(stats.layers[0].rows == 8);
    CHECK(stats.layers[0].cols == 9);
    CHECK_FALSE(stats.layers[0].has_fit);
    CHECK(stats.layers[1].layer == 3);
    CHECK(stats.layers[1].rows == 16);
    CHECK(stats.layers[1].cols == 72);
    CHECK(stats.layers[1].has_fit);

    // log norm agrees with a direct Frobenius computation
    for (const auto& l : stats.layers) {
        double fr = 0.0;
        for (float wv : net.params(l.layer).weights) fr += static_cast<double>(wv) * wv;
        CHECK(l.log_frob == Catch::Approx(std::log10(fr)).margin(1e-9));
    }
    if (stats.layers[1].has_fit)
        CHECK(stats.layers[1].weighted_alpha ==
              Catch::Approx(stats.layers[1].alpha * std::log10(stats.layers[1].lambda_max))
                  .margin(1e-12));
}
