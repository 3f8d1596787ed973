#pragma once

// Persistence surfaces quantized to persistence images.
//
// The image of a diagram is built in one pass: the f-weighted points are
// deposited into a histogram on a refined copy of the grid, the histogram is
// convolved with a cell-integrated Gaussian filter, and blocks of refined
// cells are summed back onto the d x d grid. With subdivision 1 and
// nearest-centre deposit this is the plain "every point sits at its cell
// centre" approximation.

#include "picrot/error.hpp"
#include "picrot/fft.hpp"
#include "picrot/persistence.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace picrot::density {

using persistence::PersistenceDiagram;
using persistence::Point;

/// d x d grid over [b_min, b_max] x [p_min, p_max]. Rows index persistence,
/// columns index birth.
struct GridSpec {
    std::size_t d = 0;
    double b_min = 0.0;
    double b_max = 0.0;
    double p_min = 0.0;
    double p_max = 0.0;

    [[nodiscard]] double cell_width() const noexcept { return (b_max - b_min) / static_cast<double>(d); }
    [[nodiscard]] double cell_height() const noexcept { return (p_max - p_min) / static_cast<double>(d); }
    [[nodiscard]] std::size_t cells() const noexcept { return d * d; }

    [[nodiscard]] double col_center(std::size_t col) const noexcept {
        return b_min + (static_cast<double>(col) + 0.5) * cell_width();
    }
    [[nodiscard]] double row_center(std::size_t row) const noexcept {
        return p_min + (static_cast<double>(row) + 0.5) * cell_height();
    }

    [[nodiscard]] bool contains(const Point& pt) const noexcept {
        return pt.birth >= b_min && pt.birth <= b_max && pt.persistence >= p_min && pt.persistence <= p_max;
    }

    void validate() const {
        if (d == 0) throw ConfigError("grid size must be positive");
        if (!(b_max > b_min)) throw ConfigError("grid birth range is empty");
        if (!(p_max > 0.0) || !(p_max > p_min)) throw ConfigError("grid persistence range is empty");
        if (!(cell_width() > 0.0) || !(cell_height() > 0.0)) throw ConfigError("grid cells are degenerate");
    }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct PersistenceImage {
    GridSpec grid;
    std::vector<double> pixels;  // row-major, d * d
    bool normalized = false;
    /// Set when the source diagram had no points; pixels are all zero.
    bool empty_density = false;

    [[nodiscard]] double at(std::size_t row, std::size_t col) const { return pixels[row * grid.d + col]; }
    [[nodiscard]] double sum() const noexcept {
        double s = 0.0;
        for (double v : pixels) s += v;
        return s;
    }
};

/// Multiset union.
[[nodiscard]] inline PersistenceDiagram overlay(std::span<const PersistenceDiagram> diagrams) {
    if (diagrams.empty()) throw ConfigError("overlay needs at least one diagram");
    PersistenceDiagram out;
    std::size_t n = 0;
    for (const auto& d : diagrams) n += d.size();
    out.points.reserve(n);
    for (const auto& d : diagrams) out.points.insert(out.points.end(), d.points.begin(), d.points.end());
    return out;
}

/// Linear ramp min(p / eps, 1); zero on the diagonal.
[[nodiscard]] inline double weight(double p, double eps) noexcept {
    if (!(p > 0.0)) return 0.0;
    return std::min(p / eps, 1.0);
}

inline constexpr double kEpsFloor = 1e-6;

/// Half the smallest off-diagonal persistence, floored at kEpsFloor.
[[nodiscard]] inline double default_eps(const PersistenceDiagram& pd, double fraction = 0.5) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& p : pd.points) m = std::min(m, p.persistence);
    if (!std::isfinite(m)) return kEpsFloor;
    return std::max(fraction * m, kEpsFloor);
}

inline constexpr double kGridPadding = 4.0;  // in units of sigma

/// Bounding grid of all points padded by 4 sigma on every side except the
/// diagonal, where persistence starts at 0.
[[nodiscard]] inline GridSpec fit_grid(std::span<const PersistenceDiagram> diagrams, std::size_t d, double sigma) {
    if (d == 0) throw ConfigError("grid size must be positive");
    if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
    double bmin = std::numeric_limits<double>::infinity(), bmax = -bmin, pmax = 0.0;
    bool any = false;
    for (const auto& pd : diagrams)
        for (const auto& p : pd.points) {
            any = true;
            bmin = std::min(bmin, p.birth);
            bmax = std::max(bmax, p.birth);
            pmax = std::max(pmax, p.persistence);
        }
    if (!any) throw EmptyDensityError("cannot fit a grid to empty diagrams");
    GridSpec g{d, bmin - kGridPadding * sigma, bmax + kGridPadding * sigma, 0.0, pmax + kGridPadding * sigma};
    g.validate();
    return g;
}

[[nodiscard]] inline GridSpec fit_grid(const PersistenceDiagram& pd, std::size_t d, double sigma) {
    return fit_grid(std::span<const PersistenceDiagram>(&pd, 1), d, sigma);
}

enum class Deposit { NearestCenter, Bilinear };
enum class ConvolutionMethod { Auto, Direct, Fft };

struct Quantization {
    /// Refined cells per grid cell along each axis.
    std::size_t subdivision = 8;
    Deposit deposit = Deposit::Bilinear;
    ConvolutionMethod method = ConvolutionMethod::Auto;
};

namespace detail {

[[nodiscard]] inline double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Gaussian mass over cells of width `cell` centred at integer offsets,
/// truncated at 4 sigma and renormalized to sum 1.
[[nodiscard]] inline std::vector<double> gaussian_taps(double sigma, double cell) {
    const auto radius = static_cast<std::size_t>(std::ceil(kGridPadding * sigma / cell));
    std::vector<double> taps(2 * radius + 1);
    double total = 0.0;
    for (std::size_t k = 0; k < taps.size(); ++k) {
        const double j = static_cast<double>(k) - static_cast<double>(radius);
        taps[k] = normal_cdf((j + 0.5) * cell / sigma) - normal_cdf((j - 0.5) * cell / sigma);
        total += taps[k];
    }
    for (double& t : taps) t /= total;
    return taps;
}

/// Separable "same" convolution with zero padding.
inline void convolve_direct(std::vector<double>& a, std::size_t rows, std::size_t cols,
                            std::span<const double> row_taps, std::span<const double> col_taps) {
    std::vector<double> tmp(a.size(), 0.0);
    const auto rc = static_cast<std::ptrdiff_t>(col_taps.size() / 2);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            const double v = a[i * cols + j];
            if (v == 0.0) continue;
            const auto lo = std::max<std::ptrdiff_t>(-rc, -static_cast<std::ptrdiff_t>(j));
            const auto hi = std::min<std::ptrdiff_t>(rc, static_cast<std::ptrdiff_t>(cols - 1 - j));
            for (auto o = lo; o <= hi; ++o)
                tmp[i * cols + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(j) + o)] +=
                    v * col_taps[static_cast<std::size_t>(o + rc)];
        }
    std::fill(a.begin(), a.end(), 0.0);
    const auto rr = static_cast<std::ptrdiff_t>(row_taps.size() / 2);
    for (std::size_t i = 0; i < rows; ++i) {
        const auto lo = std::max<std::ptrdiff_t>(-rr, -static_cast<std::ptrdiff_t>(i));
        const auto hi = std::min<std::ptrdiff_t>(rr, static_cast<std::ptrdiff_t>(rows - 1 - i));
        for (auto o = lo; o <= hi; ++o) {
            const double t = row_taps[static_cast<std::size_t>(o + rr)];
            const std::size_t dst = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + o) * cols;
            for (std::size_t j = 0; j < cols; ++j) a[dst + j] += t * tmp[i * cols + j];
        }
    }
}

inline void convolve_fft(std::vector<double>& a, std::size_t rows, std::size_t cols,
                         std::span<const double> row_taps, std::span<const double> col_taps) {
    std::vector<double> stencil(row_taps.size() * col_taps.size());
    for (std::size_t r = 0; r < row_taps.size(); ++r)
        for (std::size_t c = 0; c < col_taps.size(); ++c) stencil[r * col_taps.size() + c] = row_taps[r] * col_taps[c];
    fft::Convolver2D conv(rows, cols, stencil, row_taps.size() / 2, col_taps.size() / 2);
    std::vector<double> out(a.size());
    conv.apply(a, out);
    // Round-off can leave tiny negative values where the true result is zero.
    for (double& v : out) v = std::max(v, 0.0);
    a = std::move(out);
}

inline constexpr std::size_t kDirectRadiusLimit = 24;

}  // namespace detail

/// Persistence image of `pd` on `grid` with Gaussian bandwidth `sigma` (data
/// units) and weight ramp width `eps`. Pixels are un-normalized; see
/// normalize().
[[nodiscard]] inline PersistenceImage persistence_image(const PersistenceDiagram& pd, const GridSpec& grid, double sigma,
                                                        double eps, const Quantization& q = {}) {
    grid.validate();
    if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
    if (!(eps > 0.0)) throw ConfigError("eps must be positive");
    if (q.subdivision == 0) throw ConfigError("subdivision must be positive");

    PersistenceImage img;
    img.grid = grid;
    img.pixels.assign(grid.cells(), 0.0);
    if (pd.empty()) {
        img.empty_density = true;
        return img;
    }
    for (const auto& p : pd.points)
        if (!grid.contains(p)) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "diagram point (%.17g, %.17g) lies outside the grid", p.birth,
                          p.persistence);
            throw OutOfGridError(buf);
        }

    const std::size_t k = q.subdivision;
    const std::size_t fine = grid.d * k;
    const std::size_t n = fine + 2;  // one guard cell per side for bilinear spill
    const double cw = grid.cell_width() / static_cast<double>(k);
    const double ch = grid.cell_height() / static_cast<double>(k);

    std::vector<double> hist(n * n, 0.0);
    for (const auto& p : pd.points) {
        const double w = weight(p.persistence, eps);
        const double fc = (p.birth - grid.b_min) / cw;
        const double fr = (p.persistence - grid.p_min) / ch;
        if (q.deposit == Deposit::NearestCenter) {
            const auto c = std::min(static_cast<std::size_t>(fc), fine - 1);
            const auto r = std::min(static_cast<std::size_t>(fr), fine - 1);
            hist[(r + 1) * n + (c + 1)] += w;
        } else {
            const double xc = fc - 0.5, xr = fr - 0.5;
            const double c0 = std::floor(xc), r0 = std::floor(xr);
            const double ac = xc - c0, ar = xr - r0;
            const auto ci = static_cast<std::size_t>(c0 + 1.0);
            const auto ri = static_cast<std::size_t>(r0 + 1.0);
            hist[ri * n + ci] += w * (1 - ar) * (1 - ac);
            hist[ri * n + ci + 1] += w * (1 - ar) * ac;
            hist[(ri + 1) * n + ci] += w * ar * (1 - ac);
            hist[(ri + 1) * n + ci + 1] += w * ar * ac;
        }
    }

    const auto row_taps = detail::gaussian_taps(sigma, ch);
    const auto col_taps = detail::gaussian_taps(sigma, cw);
    const std::size_t radius = std::max(row_taps.size(), col_taps.size()) / 2;
    const bool use_fft = q.method == ConvolutionMethod::Fft ||
                         (q.method == ConvolutionMethod::Auto && radius > detail::kDirectRadiusLimit);
    if (use_fft)
        detail::convolve_fft(hist, n, n, row_taps, col_taps);
    else
        detail::convolve_direct(hist, n, n, row_taps, col_taps);

    for (std::size_t r = 0; r < fine; ++r)
        for (std::size_t c = 0; c < fine; ++c)
            img.pixels[(r / k) * grid.d + c / k] += hist[(r + 1) * n + (c + 1)];
    return img;
}

/// Rescales to unit mass. Images of empty diagrams cannot be normalized.
[[nodiscard]] inline PersistenceImage normalize(PersistenceImage img) {
    if (img.empty_density) throw EmptyDensityError("cannot normalize the image of an empty diagram");
    const double s = img.sum();
    if (!(s > 0.0)) throw EmptyDensityError("image has no mass inside the grid");
    for (double& v : img.pixels) v /= s;
    img.normalized = true;
    return img;
}

/// Half the L1 distance between two images on the same grid.
[[nodiscard]] inline double total_variation(const PersistenceImage& a, const PersistenceImage& b) {
    if (a.pixels.size() != b.pixels.size()) throw ConfigError("images have different sizes");
    double s = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) s += std::abs(a.pixels[i] - b.pixels[i]);
    return 0.5 * s;
}

// Serialization.

[[nodiscard]] inline nlohmann::json to_json(const GridSpec& g) {
    return {{"d", g.d}, {"b_min", g.b_min}, {"b_max", g.b_max}, {"p_min", g.p_min}, {"p_max", g.p_max}};
}

[[nodiscard]] inline GridSpec grid_from_json(const nlohmann::json& j) {
    GridSpec g{j.at("d").get<std::size_t>(), j.at("b_min").get<double>(), j.at("b_max").get<double>(),
               j.at("p_min").get<double>(), j.at("p_max").get<double>()};
    g.validate();
    return g;
}

inline void write_image_csv(std::ostream& os, const PersistenceImage& img) {
    os << "row,col,value\n";
    char buf[96];
    for (std::size_t r = 0; r < img.grid.d; ++r)
        for (std::size_t c = 0; c < img.grid.d; ++c) {
            std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g\n", r, c, img.at(r, c));
            os << buf;
        }
}

[[nodiscard]] inline PersistenceImage read_image_csv(std::istream& is, const GridSpec& grid, bool normalized) {
    PersistenceImage img;
    img.grid = grid;
    img.normalized = normalized;
    img.pixels.assign(grid.cells(), 0.0);
    std::string line;
    if (!std::getline(is, line) || line.rfind("row,col,value", 0) != 0)
        throw Error("image CSV must start with header 'row,col,value'");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::size_t r = 0, c = 0;
        double v = 0.0;
        if (std::sscanf(line.c_str(), "%zu,%zu,%lf", &r, &c, &v) != 3 || r >= grid.d || c >= grid.d)
            throw Error("malformed image row: " + line);
        img.pixels[r * grid.d + c] = v;
    }
    return img;
}

/// Binary 16-bit PGM scaled to the image maximum; high persistence at the top.
inline void write_pgm(std::ostream& os, const PersistenceImage& img) {
    const std::size_t d = img.grid.d;
    const double mx = *std::max_element(img.pixels.begin(), img.pixels.end());
    os << "P5\n" << d << ' ' << d << "\n65535\n";
    for (std::size_t r = d; r-- > 0;)
        for (std::size_t c = 0; c < d; ++c) {
            const double v = mx > 0.0 ? img.at(r, c) / mx : 0.0;
            const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
            os.put(static_cast<char>(q >> 8));
            os.put(static_cast<char>(q & 0xff));
        }
}

}  // namespace picrot::density
