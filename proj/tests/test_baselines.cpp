#include "picrot/baselines.hpp"

#include "oracles/naive_cepstrum.hpp"

#include "picrot/dynamics.hpp"
#include "picrot/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace picrot;
using namespace picrot::baselines;
using persistence::PersistenceDiagram;

namespace {

TimeSeries labelled(std::vector<double> v, int label) {
    TimeSeries ts;
    ts.values = std::move(v);
    ts.label = label;
    return ts;
}

std::vector<double> sine(std::size_t n, double freq, double phase, Rng* rng = nullptr, double noise = 0.0) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) + phase);
        if (rng) x[i] += noise * rng->normal();
    }
    return x;
}

std::vector<double> white(std::size_t n, Rng& rng) {
    std::vector<double> x(n);
    for (auto& v : x) v = rng.normal();
    return x;
}

// Independent entropy: log P - (1/P) sum p log p.
double entropy_oracle(const std::vector<double>& p) {
    double total = 0.0, s = 0.0;
    for (double v : p) total += v;
    for (double v : p) s += v * std::log(v);
    return std::log(total) - s / total;
}

}  // namespace

TEST(Cepstrum, MatchesNaiveTransforms) {
    Rng rng(3);
    for (std::size_t n : {16u, 45u, 64u}) {
        const auto x = white(n, rng);
        const auto got = cepstrum_features(x).coeffs;
        const auto want = oracle::naive_cepstrum(x);
        ASSERT_EQ(got.size(), want.size());
        double scale = 0.0;
        for (double v : want) scale = std::max(scale, std::abs(v));
        for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(got[k], want[k], 1e-9 * scale) << "n=" << n << " k=" << k;
    }
}

TEST(Cepstrum, IdenticalSeriesHaveZeroDistance) {
    Rng rng(5);
    const auto x = white(128, rng);
    EXPECT_EQ(ceps_distance(cepstrum_features(x), cepstrum_features(x)), 0.0);
}

TEST(Cepstrum, CircularShiftInvariance) {
    const std::size_t n = 256;
    std::vector<double> x(n), shifted(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::cos(2.0 * std::numbers::pi * 7.0 * i / n) + 0.3 * std::sin(0.37 * i * i);
    for (std::size_t s : {1u, 17u, 100u}) {
        for (std::size_t i = 0; i < n; ++i) shifted[i] = x[(i + s) % n];
        const auto a = cepstrum_features(x), b = cepstrum_features(shifted);
        double norm = 0.0;
        for (double v : a.coeffs) norm += v * v;
        EXPECT_LE(ceps_distance(a, b), 1e-6 * std::sqrt(norm)) << "shift " << s;
    }
}

TEST(Cepstrum, RejectsShortAndZeroSeries) {
    EXPECT_THROW((void)cepstrum_features(std::vector<double>{1, 2, 3}), ConfigError);
    EXPECT_THROW((void)cepstrum_features(std::vector<double>(8, 0.0)), ConfigError);
}

TEST(Cepstrum, NoiseAndSineSeparate) {
    Rng rng(11);
    const std::size_t n = 512;
    const auto w1 = cepstrum_features(white(n, rng)), w2 = cepstrum_features(white(n, rng));
    const auto s1 = cepstrum_features(sine(n, 0.05, 0.0, &rng, 0.01));
    const auto s2 = cepstrum_features(sine(n, 0.05, 1.0, &rng, 0.01));
    const double within = std::max(ceps_distance(w1, w2), ceps_distance(s1, s2));
    const double between = std::min({ceps_distance(w1, s1), ceps_distance(w1, s2), ceps_distance(w2, s1),
                                     ceps_distance(w2, s2)});
    EXPECT_LT(within, between);
}

TEST(Cepstrum, PseudometricOnSampledTriples) {
    Rng rng(13);
    std::vector<CepstralVector> f;
    for (int i = 0; i < 8; ++i) f.push_back(cepstrum_features(i % 2 ? white(64, rng) : sine(64, 0.1 * i + 0.03, 0.2, &rng, 0.1)));
    for (std::size_t a = 0; a < f.size(); ++a)
        for (std::size_t b = 0; b < f.size(); ++b) {
            EXPECT_EQ(ceps_distance(f[a], f[b]), ceps_distance(f[b], f[a]));
            for (std::size_t c = 0; c < f.size(); ++c)
                EXPECT_LE(ceps_distance(f[a], f[c]), ceps_distance(f[a], f[b]) + ceps_distance(f[b], f[c]) + 1e-12);
        }
}

TEST(CepsKnn, QueryEqualToTrainingSample) {
    Rng rng(17);
    std::vector<TimeSeries> train{labelled(white(64, rng), 0), labelled(sine(64, 0.1, 0), 1),
                                  labelled(white(64, rng), 0)};
    EXPECT_EQ(knn1_ceps(train, train[1]), 1);
    EXPECT_EQ(knn1_ceps(train, train[2]), 0);
}

TEST(CepsKnn, SingleTrainingSample) {
    Rng rng(19);
    std::vector<TimeSeries> train{labelled(white(32, rng), 1)};
    for (int i = 0; i < 3; ++i) EXPECT_EQ(knn1_ceps(train, labelled(white(32, rng), 0)), 1);
}

TEST(CepsKnn, TiesGoToLowestIndex) {
    const auto x = sine(32, 0.1, 0.0);
    std::vector<TimeSeries> train{labelled(x, 1), labelled(x, 0)};
    EXPECT_EQ(knn1_ceps(train, labelled(x, 0)), 1);
}

TEST(CepsKnn, EmptyTrainingSetThrows) {
    std::vector<TimeSeries> train;
    EXPECT_THROW((void)knn1_ceps(train, labelled(sine(32, 0.1, 0.0), 0)), ConfigError);
}

TEST(CepsKnn, SeparableSpectralFixture) {
    Rng rng(23);
    auto make = [&](int label) {
        return labelled(label ? sine(256, 0.05, rng.uniform(0, 6.28), &rng, 0.05) : white(256, rng), label);
    };
    std::vector<TimeSeries> train;
    for (int i = 0; i < 20; ++i) train.push_back(make(i % 2));
    CepsClassifier c;
    c.fit(train);
    int correct = 0;
    for (int i = 0; i < 30; ++i) {
        const auto q = make(i % 2);
        correct += c.predict(q) == *q.label;
    }
    EXPECT_GT(correct / 30.0, 0.9);
}

TEST(PersistentEntropy, UniformDiagramIsLogK) {
    for (std::size_t k : {1u, 2u, 3u, 7u, 50u}) {
        PersistenceDiagram pd;
        for (std::size_t i = 0; i < k; ++i) pd.points.push_back({static_cast<double>(i), 0.7});
        EXPECT_NEAR(persistent_entropy(pd).pent, std::log(static_cast<double>(k)), 1e-12);
    }
}

TEST(PersistentEntropy, SinglePointIsZero) {
    PersistenceDiagram pd;
    pd.points.push_back({-1.0, 2.5});
    EXPECT_EQ(persistent_entropy(pd).pent, 0.0);
}

TEST(PersistentEntropy, TwoPointExample) {
    PersistenceDiagram pd;
    pd.points = {{0, 3}, {1, 1}};
    const double h = persistent_entropy(pd).pent;
    EXPECT_NEAR(h, entropy_oracle({3, 1}), 1e-14);
    EXPECT_NEAR(h, 0.5623, 5e-5);
}

TEST(PersistentEntropy, MatchesOracleOnRandomDiagrams) {
    Rng rng(29);
    for (int t = 0; t < 50; ++t) {
        PersistenceDiagram pd;
        std::vector<double> p;
        const auto k = 1 + rng.below(20);
        for (std::size_t i = 0; i < k; ++i) {
            p.push_back(rng.uniform(0.01, 5.0));
            pd.points.push_back({rng.uniform(-1, 1), p.back()});
        }
        const double h = persistent_entropy(pd).pent;
        EXPECT_NEAR(h, entropy_oracle(p), 1e-12);
        EXPECT_GE(h, 0.0);
        EXPECT_LE(h, std::log(static_cast<double>(k)) + 1e-12);
    }
}

TEST(PersistentEntropy, ScaleInvariant) {
    PersistenceDiagram a, b;
    a.points = {{0, 1}, {1, 2}, {2, 4}};
    b.points = {{0, 2}, {1, 4}, {2, 8}};
    EXPECT_EQ(persistent_entropy(a).pent, persistent_entropy(b).pent);
}

TEST(PersistentEntropy, EmptyDiagramThrows) {
    EXPECT_THROW((void)persistent_entropy(PersistenceDiagram{}), EmptyDensityError);
}

TEST(PentKnn, NearestScalar) {
    const std::vector<EntropyFeature> train{{0.1}, {0.9}};
    EXPECT_EQ(nearest_index<EntropyFeature>(train, EntropyFeature{0.2}, pent_distance), 0u);
    EXPECT_EQ(nearest_index<EntropyFeature>(train, EntropyFeature{0.7}, pent_distance), 1u);
    const std::vector<EntropyFeature> tied{{0.25}, {0.75}};
    EXPECT_EQ(nearest_index<EntropyFeature>(tied, EntropyFeature{0.5}, pent_distance), 0u);
}

TEST(PentKnn, QueryEqualToTrainingSample) {
    Rng rng(31);
    std::vector<TimeSeries> train{labelled(white(50, rng), 0), labelled(sine(50, 0.02, 0.3), 1)};
    EXPECT_EQ(knn1_pent(train, train[0]), 0);
    EXPECT_EQ(knn1_pent(train, train[1]), 1);
}

TEST(PentKnn, SkipsEmptyTrainingDiagrams) {
    std::vector<TimeSeries> train{labelled({1, 1, 1, 1}, 1), labelled({0, 2, 1, 3}, 0)};
    PentClassifier c;
    c.fit(train);
    EXPECT_EQ(c.skipped(), 1u);
    EXPECT_EQ(c.predict(labelled({0, 5, 2, 4}, 1)), 0);
}

TEST(PentKnn, LogisticFixtureBeatsChance) {
    // Benchmark row logistic-1 at length 2500, no noise; 30 test queries.
    const auto pair = dynamics::benchmark_pairs()[0];
    auto draw = [&](int label, std::uint64_t seed) {
        auto ts = dynamics::generate_retrying(label ? pair.class1 : pair.class0, 2500, dynamics::kDefaultBurnIn, seed);
        ts.label = label;
        return ts;
    };
    std::vector<TimeSeries> train;
    for (std::uint64_t i = 0; i < 40; ++i) train.push_back(draw(static_cast<int>(i % 2), child_seed(41, {i})));
    PentClassifier c;
    c.fit(train);
    int correct = 0;
    for (std::uint64_t i = 0; i < 30; ++i) {
        const auto q = draw(static_cast<int>(i % 2), child_seed(43, {i}));
        correct += c.predict(q) == *q.label;
    }
    // P(Binomial(30, 0.5) >= 21) < 0.025
    EXPECT_GE(correct, 21);
}
