#include "picrot/density.hpp"

#include "oracles/surface_integral.hpp"

#include "picrot/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace picrot;
using namespace picrot::density;

namespace {

PersistenceDiagram random_diagram(Rng& rng, std::size_t max_points) {
    PersistenceDiagram pd;
    const auto n = 1 + rng.below(max_points);
    for (std::size_t i = 0; i < n; ++i) pd.points.push_back({rng.uniform(-2.0, 2.0), rng.uniform(0.1, 3.0)});
    return pd;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST(Density, OverlayIsMultisetUnion) {
    const std::vector<PersistenceDiagram> twice{PersistenceDiagram{{{0, 1}}}, PersistenceDiagram{{{0, 1}}}};
    EXPECT_EQ(overlay(twice).points, (std::vector<Point>{{0, 1}, {0, 1}}));
    const std::vector<PersistenceDiagram> with_empty{PersistenceDiagram{}, PersistenceDiagram{{{2, 3}}}};
    EXPECT_EQ(overlay(with_empty).points, (std::vector<Point>{{2, 3}}));
    EXPECT_THROW((void)overlay(std::span<const PersistenceDiagram>{}), ConfigError);

    Rng rng(1);
    std::vector<PersistenceDiagram> many;
    double total = 0.0;
    for (int i = 0; i < 5; ++i) {
        many.push_back(random_diagram(rng, 6));
        total += persistence::total_persistence(many.back());
    }
    EXPECT_NEAR(persistence::total_persistence(overlay(many)), total, 1e-12);
}

TEST(Density, WeightRamp) {
    EXPECT_EQ(weight(0.0, 0.2), 0.0);
    EXPECT_EQ(weight(0.2, 0.2), 1.0);
    EXPECT_EQ(weight(5.0, 0.2), 1.0);
    EXPECT_DOUBLE_EQ(weight(0.1, 0.2), 0.5);
}

TEST(Density, DefaultEpsIsHalfTheSmallestPersistence) {
    EXPECT_DOUBLE_EQ(default_eps(PersistenceDiagram{{{0, 0.4}, {1, 2}}}), 0.2);
    EXPECT_DOUBLE_EQ(default_eps(PersistenceDiagram{{{0, 1e-9}}}), kEpsFloor);
}

TEST(Density, FitGridArithmetic) {
    const auto g = fit_grid(PersistenceDiagram{{{0, 1}}}, 10, 0.1);
    EXPECT_NEAR(g.b_min, -0.4, 1e-15);
    EXPECT_NEAR(g.b_max, 0.4, 1e-15);
    EXPECT_EQ(g.p_min, 0.0);
    EXPECT_NEAR(g.p_max, 1.4, 1e-15);
}

TEST(Density, FitGridContainsEveryPointStrictly) {
    Rng rng(2);
    for (int t = 0; t < 50; ++t) {
        const std::vector<PersistenceDiagram> ds{random_diagram(rng, 5), random_diagram(rng, 5)};
        const auto g = fit_grid(ds, 16, rng.uniform(0.05, 0.5));
        for (const auto& d : ds)
            for (const auto& p : d.points) {
                EXPECT_GT(p.birth, g.b_min);
                EXPECT_LT(p.birth, g.b_max);
                EXPECT_GT(p.persistence, g.p_min);
                EXPECT_LT(p.persistence, g.p_max);
            }
    }
}

TEST(Density, FitGridRejectsEmptyInput) {
    const std::vector<PersistenceDiagram> none{PersistenceDiagram{}, PersistenceDiagram{}};
    EXPECT_THROW((void)fit_grid(none, 8, 0.1), EmptyDensityError);
}

TEST(Density, NarrowKernelGivesOneHotImage) {
    const GridSpec g{9, 0.0, 9.0, 0.0, 9.0};
    const PersistenceDiagram pd{{{4.5, 4.5}}};
    for (const auto deposit : {Deposit::NearestCenter, Deposit::Bilinear}) {
        const auto img = persistence_image(pd, g, 0.01, 0.1, {.subdivision = deposit == Deposit::Bilinear ? 4u : 1u, .deposit = deposit});
        EXPECT_NEAR(img.sum(), 1.0, 1e-9);
        EXPECT_NEAR(img.at(4, 4), 1.0, 1e-9);
    }
}

TEST(Density, MassIsConservedOnAmplyPaddedGrid) {
    Rng rng(3);
    for (int t = 0; t < 30; ++t) {
        PersistenceDiagram pd = random_diagram(rng, 8);
        const double sigma = rng.uniform(0.05, 0.3), eps = 0.4;
        const GridSpec g{20, -2.0 - 6 * sigma, 2.0 + 6 * sigma, 0.0, 3.0 + 6 * sigma};
        // keep every Gaussian clear of the p = 0 edge
        for (auto& p : pd.points) p.persistence = std::max(p.persistence, 6 * sigma);
        double expected = 0.0;
        for (const auto& p : pd.points) expected += weight(p.persistence, eps);
        EXPECT_NEAR(persistence_image(pd, g, sigma, eps).sum(), expected, 1e-9);
    }
}

TEST(Density, MatchesQuadratureOfTheSurface) {
    Rng rng(4);
    for (int t = 0; t < 10; ++t) {
        const PersistenceDiagram pd{{{rng.uniform(-1, 1), rng.uniform(0.5, 2)}, {rng.uniform(-1, 1), rng.uniform(0.5, 2)}}};
        const double sigma = 0.3, eps = 0.25;
        const auto g = fit_grid(pd, 16, sigma);
        const auto img = persistence_image(pd, g, sigma, eps);
        const auto ref = oracle::integrate_surface(pd, g, sigma, eps);
        const double peak = *std::max_element(ref.begin(), ref.end());
        EXPECT_LE(max_abs_diff(img.pixels, ref), 0.02 * peak);
    }
}

TEST(Density, CentreOfCellDepositIsCoarse) {
    // The unrefined approximation is what the refined deposit improves on.
    const PersistenceDiagram pd{{{0.13, 1.07}, {-0.61, 0.77}}};
    const double sigma = 0.3, eps = 0.25;
    const auto g = fit_grid(pd, 16, sigma);
    const auto ref = oracle::integrate_surface(pd, g, sigma, eps);
    const double peak = *std::max_element(ref.begin(), ref.end());
    const auto coarse = persistence_image(pd, g, sigma, eps, {.subdivision = 1, .deposit = Deposit::NearestCenter});
    const auto fine = persistence_image(pd, g, sigma, eps);
    EXPECT_LT(max_abs_diff(fine.pixels, ref), max_abs_diff(coarse.pixels, ref));
    EXPECT_LT(max_abs_diff(coarse.pixels, ref), 0.6 * peak);
}

TEST(Density, DirectAndFftConvolutionAgree) {
    Rng rng(5);
    for (int t = 0; t < 10; ++t) {
        const auto pd = random_diagram(rng, 20);
        const double sigma = rng.uniform(0.1, 0.6);
        const auto g = fit_grid(pd, 24, sigma);
        const auto a = persistence_image(pd, g, sigma, 0.3, {.method = ConvolutionMethod::Direct});
        const auto b = persistence_image(pd, g, sigma, 0.3, {.method = ConvolutionMethod::Fft});
        const double peak = *std::max_element(a.pixels.begin(), a.pixels.end());
        EXPECT_LE(max_abs_diff(a.pixels, b.pixels), 1e-10 * peak);
    }
}

TEST(Density, LinearInTheDiagram) {
    Rng rng(6);
    for (int t = 0; t < 20; ++t) {
        const std::vector<PersistenceDiagram> ab{random_diagram(rng, 6), random_diagram(rng, 6)};
        const double sigma = 0.2, eps = 0.3;
        const auto g = fit_grid(ab, 16, sigma);
        const auto whole = persistence_image(overlay(ab), g, sigma, eps);
        const auto a = persistence_image(ab[0], g, sigma, eps);
        const auto b = persistence_image(ab[1], g, sigma, eps);
        for (std::size_t i = 0; i < whole.pixels.size(); ++i)
            EXPECT_NEAR(whole.pixels[i], a.pixels[i] + b.pixels[i], 1e-10);
    }
}

TEST(Density, LargerEpsNeverIncreasesPixels) {
    Rng rng(7);
    const auto pd = random_diagram(rng, 10);
    const auto g = fit_grid(pd, 16, 0.2);
    const auto lo = persistence_image(pd, g, 0.2, 0.5);
    const auto hi = persistence_image(pd, g, 0.2, 2.0);
    for (std::size_t i = 0; i < lo.pixels.size(); ++i) EXPECT_LE(hi.pixels[i], lo.pixels[i] + 1e-15);
}

TEST(Density, PointOrderDoesNotMatter) {
    Rng rng(8);
    auto pd = random_diagram(rng, 10);
    const auto g = fit_grid(pd, 16, 0.2);
    const auto a = persistence_image(pd, g, 0.2, 0.3);
    rng.shuffle(pd.points.begin(), pd.points.end());
    const auto b = persistence_image(pd, g, 0.2, 0.3);
    EXPECT_LE(max_abs_diff(a.pixels, b.pixels), 1e-15);
}

TEST(Density, NormalizedImagesAreHistograms) {
    Rng rng(9);
    for (int t = 0; t < 20; ++t) {
        const auto pd = random_diagram(rng, 10);
        const auto g = fit_grid(pd, 16, 0.2);
        const auto img = normalize(persistence_image(pd, g, 0.2, 0.05));
        EXPECT_TRUE(img.normalized);
        EXPECT_NEAR(img.sum(), 1.0, 1e-12);
        for (double v : img.pixels) EXPECT_GE(v, 0.0);
    }
}

TEST(Density, EmptyDiagramFlagsEmptyDensity) {
    const GridSpec g{8, 0, 1, 0, 1};
    const auto img = persistence_image(PersistenceDiagram{}, g, 0.1, 0.1);
    EXPECT_TRUE(img.empty_density);
    EXPECT_FALSE(img.normalized);
    EXPECT_EQ(img.sum(), 0.0);
    EXPECT_THROW((void)normalize(img), EmptyDensityError);
}

TEST(Density, PointOutsideGridIsNamed) {
    const GridSpec g{8, 0, 1, 0, 1};
    try {
        (void)persistence_image(PersistenceDiagram{{{2.5, 0.5}}}, g, 0.1, 0.1);
        FAIL();
    } catch (const OutOfGridError& e) {
        EXPECT_NE(std::string(e.what()).find("2.5"), std::string::npos);
    }
}

TEST(Density, CsvAndJsonRoundTrip) {
    Rng rng(10);
    const auto pd = random_diagram(rng, 5);
    const auto g = fit_grid(pd, 8, 0.2);
    const auto img = normalize(persistence_image(pd, g, 0.2, 0.1));
    std::stringstream ss;
    write_image_csv(ss, img);
    const auto back = read_image_csv(ss, grid_from_json(to_json(g)), true);
    EXPECT_EQ(back.grid, g);
    EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Density, PgmHeaderAndSize) {
    const GridSpec g{4, 0, 1, 0, 1};
    const auto img = persistence_image(PersistenceDiagram{{{0.5, 0.5}}}, g, 0.2, 0.1);
    std::stringstream ss;
    write_pgm(ss, img);
    const auto s = ss.str();
    EXPECT_EQ(s.rfind("P5\n4 4\n65535\n", 0), 0u);
    EXPECT_EQ(s.size(), std::string("P5\n4 4\n65535\n").size() + 4 * 4 * 2);
}
