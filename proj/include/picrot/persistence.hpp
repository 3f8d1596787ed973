#pragma once

// Dimension-0 sublevel-set persistence of a 1D sequence.

#include "picrot/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace picrot::persistence {

/// A diagram point in (birth, persistence) coordinates, persistence > 0.
struct Point {
    double birth = 0.0;
    double persistence = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
    friend auto operator<=>(const Point&, const Point&) = default;
};

/// Finite multiset of off-diagonal points; diagonal points are implicit.
struct PersistenceDiagram {
    std::vector<Point> points;

    [[nodiscard]] std::size_t size() const noexcept { return points.size(); }
    [[nodiscard]] bool empty() const noexcept { return points.empty(); }

    /// Points in lexicographic order, for multiset comparison.
    [[nodiscard]] std::vector<Point> sorted() const {
        auto p = points;
        std::sort(p.begin(), p.end());
        return p;
    }
};

namespace detail {

/// Drops consecutive repeats so that every interior sample is a strict
/// minimum, a strict maximum or a regular point.
[[nodiscard]] inline std::vector<double> collapse_plateaus(std::span<const double> x) {
    std::vector<double> out;
    out.reserve(x.size());
    for (double v : x)
        if (out.empty() || out.back() != v) out.push_back(v);
    return out;
}

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t i) {
        while (parent_[i] != i) {
            parent_[i] = parent_[parent_[i]];
            i = parent_[i];
        }
        return i;
    }

    /// Links the tree of `child` under `root`; both must be roots.
    void attach(std::size_t child, std::size_t root) { parent_[child] = root; }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace detail

/// Elder-rule pairing over the values sorted increasingly (stable by index).
/// The component of the global minimum is closed at the global maximum.
/// O(n log n).
[[nodiscard]] inline PersistenceDiagram sublevel_diagram(std::span<const double> series) {
    for (double v : series)
        if (!std::isfinite(v)) throw NonFiniteError("series contains a non-finite value");
    PersistenceDiagram pd;
    if (series.empty()) return pd;

    const auto x = detail::collapse_plateaus(series);
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

    // A component is identified with its root; its birth is the sample that
    // created it. Elder = smaller (value, index).
    detail::UnionFind uf(n);
    std::vector<std::size_t> birth(n);
    std::vector<char> active(n, 0);
    auto older = [&](std::size_t a, std::size_t b) {
        return x[a] < x[b] || (x[a] == x[b] && a < b);
    };

    for (std::size_t i : order) {
        active[i] = 1;
        std::size_t roots[2];
        int k = 0;
        if (i > 0 && active[i - 1]) roots[k++] = uf.find(i - 1);
        if (i + 1 < n && active[i + 1]) roots[k++] = uf.find(i + 1);
        if (k == 0) {
            birth[i] = i;
        } else if (k == 1) {
            uf.attach(i, roots[0]);
        } else {
            std::size_t elder = roots[0], younger = roots[1];
            if (older(birth[younger], birth[elder])) std::swap(elder, younger);
            const double b = x[birth[younger]];
            if (x[i] > b) pd.points.push_back({b, x[i] - b});
            uf.attach(younger, elder);
            uf.attach(i, elder);
        }
    }

    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    if (*hi > *lo) pd.points.push_back({*lo, *hi - *lo});
    return pd;
}

[[nodiscard]] inline double total_persistence(const PersistenceDiagram& pd) noexcept {
    double s = 0.0;
    for (const auto& p : pd.points) s += p.persistence;
    return s;
}

inline void write_csv(std::ostream& os, const PersistenceDiagram& pd) {
    os << "birth,persistence\n";
    char buf[64];
    for (const auto& p : pd.points) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.birth, p.persistence);
        os << buf;
    }
}

[[nodiscard]] inline PersistenceDiagram read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("birth,persistence", 0) != 0)
        throw Error("diagram CSV must start with header 'birth,persistence'");
    PersistenceDiagram pd;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw Error("malformed diagram row: " + line);
        pd.points.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
    }
    return pd;
}

}  // namespace picrot::persistence
