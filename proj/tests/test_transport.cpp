#include "picrot/transport.hpp"

#include "oracles/exact_ot.hpp"

#include "picrot/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace picrot;
using namespace picrot::transport;

namespace {

GridSpec unit_grid(std::size_t d) { return {d, 0.0, 1.0, 0.0, 1.0}; }

std::vector<double> random_histogram(Rng& rng, std::size_t n) {
    std::vector<double> h(n);
    double s = 0.0;
    for (auto& v : h) s += (v = rng.uniform(0.01, 1.0));
    for (auto& v : h) v /= s;
    return h;
}

std::vector<double> one_hot(std::size_t n, std::size_t at) {
    std::vector<double> h(n, 0.0);
    h[at] = 1.0;
    return h;
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return num / den;
}

}  // namespace

TEST(GroundCost, StencilProperties) {
    for (double p : {1.0, 2.0, 3.0}) {
        const GroundCost m({6, -1.0, 2.0, 0.0, 1.5}, p);
        EXPECT_EQ(m.at(0, 0), 0.0);
        for (int dr = -5; dr <= 5; ++dr)
            for (int dc = -5; dc <= 5; ++dc) {
                EXPECT_EQ(m.at(dr, dc), m.at(-dr, dc));
                EXPECT_EQ(m.at(dr, dc), m.at(dr, -dc));
            }
        Rng rng(1);
        for (int t = 0; t < 200; ++t) {
            const auto i = rng.below(36), j = rng.below(36), k = rng.below(36);
            EXPECT_LE(m.between(i, k), m.between(i, j) + m.between(j, k) + 1e-12);
        }
    }
}

TEST(GroundCost, UsesCellCentresInDataUnits) {
    const GroundCost m({4, 0.0, 8.0, 0.0, 4.0}, 1.0);  // cells 2 wide, 1 tall
    EXPECT_DOUBLE_EQ(m.at(0, 1), 2.0);
    EXPECT_DOUBLE_EQ(m.at(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(m.between(0, 15), 3.0 + 6.0);
    const GroundCost e({4, 0.0, 8.0, 0.0, 4.0}, 2.0);
    EXPECT_DOUBLE_EQ(e.at(1, 1), std::sqrt(5.0));
}

TEST(GroundCost, DenseMatrixIsBlockToeplitz) {
    const GroundCost m(unit_grid(4), 2.0);
    const auto full = m.dense();
    const std::size_t n = 16;
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = 1; j < n; ++j)
            if (i % 4 && j % 4) {
                EXPECT_DOUBLE_EQ(full[i * n + j], full[(i - 1) * n + (j - 1)]);
            }
}

TEST(KernelApply, OneHotReturnsShiftedStencil) {
    const GroundCost m(unit_grid(5), 2.0);
    const double lambda = 0.3;
    const auto y = kernel_apply(m, lambda, one_hot(25, 2 * 5 + 1));
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t c = 0; c < 5; ++c) {
            const double expect = std::exp(-m.at(static_cast<int>(r) - 2, static_cast<int>(c) - 1) / lambda);
            EXPECT_NEAR(y[r * 5 + c], expect, 1e-14);
        }
}

TEST(KernelApply, MatchesDenseProduct) {
    Rng rng(2);
    for (double p : {1.0, 2.0}) {
        const GroundCost m(unit_grid(8), p);
        for (double lambda : {0.05, 0.3, 2.0}) {
            std::vector<double> x(64);
            for (auto& v : x) v = rng.uniform(0.0, 1.0);
            auto dense = DenseKernel::from_grid(m, lambda);
            std::vector<double> ref(64);
            dense.apply(x, ref);
            EXPECT_LE(rel_err(kernel_apply(m, lambda, x), ref), 1e-10);
        }
    }
}

TEST(KernelApply, HugeLambdaSumsInput) {
    const GroundCost m(unit_grid(6), 1.0);
    Rng rng(3);
    std::vector<double> x(36);
    double s = 0.0;
    for (auto& v : x) s += (v = rng.uniform(0.0, 1.0));
    for (double y : kernel_apply(m, 1e12, x)) EXPECT_NEAR(y, s, 1e-9);
}

TEST(KernelApply, UnderflowIsReported) {
    const GroundCost m(unit_grid(6), 1.0);
    EXPECT_THROW((void)kernel_apply(m, 1e-6, std::vector<double>(36, 1.0)), NumericalUnderflowError);
}

TEST(Sinkhorn, SameOneHotGivesZero) {
    const GroundCost m(unit_grid(6), 2.0);
    const auto h = one_hot(36, 14);
    const auto res = sinkhorn_divergence(h, h, m, 0.5 * m.mean());
    EXPECT_LE(res.divergence, 1e-12);
}

TEST(Sinkhorn, OneHotPairCostsTheirDistance) {
    const GroundCost m(unit_grid(6), 2.0);
    for (double scale : {0.1, 1.0, 10.0}) {
        const auto res = sinkhorn_divergence(one_hot(36, 3), one_hot(36, 32), m, scale * m.mean());
        EXPECT_NEAR(res.divergence, m.between(3, 32), 1e-9) << scale;
    }
}

TEST(Sinkhorn, TwoBinClosedForm) {
    const std::vector<double> r{0.7, 0.3}, c{0.4, 0.6};
    double previous = INFINITY;
    for (double lambda : {4.0, 1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001}) {
        DenseKernel k({0.0, 1.0, 1.0, 0.0}, 2, lambda);
        const auto res = sinkhorn(k, r, c, {.tol = 1e-12, .max_iter = 100000});
        EXPECT_GE(res.divergence, 0.3 - 1e-12);
        EXPECT_LE(res.divergence, previous + 1e-12);
        previous = res.divergence;
    }
    DenseKernel k({0.0, 1.0, 1.0, 0.0}, 2, 1e-4);
    EXPECT_NEAR(sinkhorn(k, r, c, {.tol = 1e-12, .max_iter = 100000}).divergence, 0.3, 1e-6);
}

TEST(Sinkhorn, UpperBoundsExactTransport) {
    Rng rng(4);
    const GroundCost m(unit_grid(4), 2.0);
    const auto cost = m.dense();
    for (int t = 0; t < 10; ++t) {
        const auto r = random_histogram(rng, 16), c = random_histogram(rng, 16);
        const double ot = oracle::exact_ot(r, c, cost);
        double previous = INFINITY;
        for (double scale : {10.0, 1.0, 0.1, 0.02}) {
            const auto res = sinkhorn_divergence(r, c, m, scale * m.mean(), {.tol = 1e-10, .max_iter = 200000});
            EXPECT_GE(res.divergence, ot - 1e-9);
            EXPECT_LE(res.divergence, previous + 1e-9);
            previous = res.divergence;
        }
        EXPECT_LE(previous - ot, 0.05 * m.mean());
    }
}

TEST(Sinkhorn, ExactOracleSanity) {
    // Two bins, closed form |r1 - c1| * m12.
    EXPECT_NEAR(oracle::exact_ot(std::vector<double>{0.7, 0.3}, std::vector<double>{0.4, 0.6},
                                 std::vector<double>{0, 1, 1, 0}),
                0.3, 1e-15);
}

TEST(Sinkhorn, FftAndDensePathsAgree) {
    Rng rng(5);
    for (double p : {1.0, 2.0}) {
        const GroundCost m(unit_grid(8), p);
        const auto r = random_histogram(rng, 64), c = random_histogram(rng, 64);
        for (double scale : {0.1, 1.0}) {
            const double lambda = scale * m.mean();
            GridKernel fft(m, lambda);
            auto dense = DenseKernel::from_grid(m, lambda);
            const SinkhornOptions opt{.tol = 1e-9, .mode = SinkhornMode::Standard};
            const auto a = sinkhorn(fft, r, c, opt);
            const auto b = sinkhorn(dense, r, c, opt);
            EXPECT_NEAR(a.divergence, b.divergence, 1e-10 * b.divergence);
            EXPECT_EQ(a.scalings.iterations, b.scalings.iterations);
        }
    }
}

TEST(Sinkhorn, SymmetricWithinTolerance) {
    Rng rng(6);
    const GroundCost m(unit_grid(8), 2.0);
    for (int t = 0; t < 10; ++t) {
        const auto r = random_histogram(rng, 64), c = random_histogram(rng, 64);
        const SinkhornOptions opt{.tol = 1e-8};
        const double lambda = 0.3 * m.mean();
        const auto rc = sinkhorn_divergence(r, c, m, lambda, opt);
        const auto cr = sinkhorn_divergence(c, r, m, lambda, opt);
        EXPECT_LE(std::abs(rc.divergence - cr.divergence), 10 * opt.tol);
        EXPECT_LE(sinkhorn_divergence(r, r, m, lambda, opt).divergence, rc.divergence + 10 * opt.tol);
    }
}

TEST(Sinkhorn, MarginalsAndScalings) {
    Rng rng(7);
    const GroundCost m(unit_grid(8), 1.0);
    const auto r = random_histogram(rng, 64), c = random_histogram(rng, 64);
    const auto res = sinkhorn_divergence(r, c, m, 0.2 * m.mean());
    EXPECT_TRUE(res.converged);
    EXPECT_FALSE(res.log_domain);
    EXPECT_LT(res.scalings.marginal_error, 1e-6);
    for (double u : res.scalings.u()) EXPECT_TRUE(u > 0 && std::isfinite(u));
    for (double v : res.scalings.v()) EXPECT_TRUE(v > 0 && std::isfinite(v));
}

TEST(Sinkhorn, LogDomainAgreesWithStandard) {
    Rng rng(8);
    const GroundCost m(unit_grid(6), 2.0);
    const auto r = random_histogram(rng, 36), c = random_histogram(rng, 36);
    const double lambda = 0.2 * m.mean();
    const auto a = sinkhorn_divergence(r, c, m, lambda, {.tol = 1e-10, .mode = SinkhornMode::Standard});
    const auto b = sinkhorn_divergence(r, c, m, lambda, {.tol = 1e-10, .mode = SinkhornMode::LogDomain});
    EXPECT_TRUE(b.log_domain);
    EXPECT_NEAR(a.divergence, b.divergence, 1e-8);
}

TEST(Sinkhorn, TinyLambdaSwitchesToLogDomain) {
    Rng rng(9);
    const GroundCost m(unit_grid(4), 2.0);
    const auto r = random_histogram(rng, 16), c = random_histogram(rng, 16);
    const double lambda = 0.001 * m.max();
    EXPECT_THROW((void)sinkhorn_divergence(r, c, m, lambda, {.mode = SinkhornMode::Standard}), NumericalUnderflowError);
    const auto res = sinkhorn_divergence(r, c, m, lambda, {.tol = 1e-9, .max_iter = 200000});
    EXPECT_TRUE(res.log_domain);
    EXPECT_NEAR(res.divergence, oracle::exact_ot(r, c, m.dense()), 1e-3 * m.mean());
}

TEST(Sinkhorn, NonConvergenceIsFlaggedNotThrown) {
    Rng rng(10);
    const GroundCost m(unit_grid(8), 2.0);
    const auto r = random_histogram(rng, 64), c = random_histogram(rng, 64);
    const auto res = sinkhorn_divergence(r, c, m, 0.05 * m.mean(), {.tol = 1e-14, .max_iter = 3});
    EXPECT_FALSE(res.converged);
    EXPECT_EQ(res.scalings.iterations, 3);
    EXPECT_GT(res.scalings.marginal_error, 0.0);
}

TEST(Sinkhorn, RejectsUnnormalizedInput) {
    const GroundCost m(unit_grid(4), 2.0);
    std::vector<double> r(16, 0.1);
    EXPECT_THROW((void)sinkhorn_divergence(r, r, m, 0.5), ConfigError);
}

TEST(Entropy, SingletonPlanHasZeroEntropy) {
    const GroundCost m(unit_grid(5), 2.0);
    const auto res = sinkhorn_divergence(one_hot(25, 3), one_hot(25, 17), m, 0.5 * m.mean());
    EXPECT_NEAR(entropy(res.scalings, m), 0.0, 1e-9);
}

TEST(Entropy, UniformPlanAtHugeLambda) {
    const std::size_t d = 5, n = d * d;
    const GroundCost m(unit_grid(d), 2.0);
    const std::vector<double> u(n, 1.0 / n);
    const auto res = sinkhorn_divergence(u, u, m, 1e9);
    EXPECT_NEAR(entropy(res.scalings, m), 2.0 * std::log(static_cast<double>(n)), 1e-6);
}

TEST(Entropy, MatchesDensePlanAndGrowsWithLambda) {
    Rng rng(11);
    const std::size_t d = 8, n = d * d;
    const GroundCost m(unit_grid(d), 2.0);
    const auto r = random_histogram(rng, n), c = random_histogram(rng, n);
    double previous = -1.0;
    for (double scale : {0.05, 0.2, 1.0, 5.0}) {
        const double lambda = scale * m.mean();
        const auto res = sinkhorn_divergence(r, c, m, lambda, {.tol = 1e-10});
        const auto u = res.scalings.u(), v = res.scalings.v();
        double h = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double p = u[i] * std::exp(-m.between(i, j) / lambda) * v[j];
                if (p > 0) h -= p * std::log(p);
            }
        EXPECT_NEAR(entropy(res.scalings, m), h, 1e-8);
        EXPECT_GE(h, previous);
        previous = h;
    }
}
