#pragma once

// Entropy-regularized optimal transport between histograms on a d x d grid.
//
// The ground cost between two cells is the L_p distance between their
// centres, so the full d^2 x d^2 cost matrix is block Toeplitz with Toeplitz
// blocks and every product with K = exp(-M / lambda) is a 2D convolution with
// a (2d-1) x (2d-1) stencil. Sinkhorn iterations only ever need such products.
//
// Kernel operators share an informal interface used by sinkhorn():
//   size(), lambda(), max_cost(), cost(i, j),
//   apply(x, y)            y = K x
//   apply_transpose(x, y)  y = K^T x
//   apply_weighted(x, y)   y = (K o M) x

#include "picrot/density.hpp"
#include "picrot/error.hpp"
#include "picrot/fft.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

namespace picrot::transport {

using density::GridSpec;

/// L_p distances between cell centres, stored as a stationary stencil.
class GroundCost {
public:
    GroundCost(const GridSpec& grid, double p) : grid_(grid), p_(p) {
        grid.validate();
        if (!(p >= 1.0)) throw ConfigError("L_p exponent must be at least 1");
        const std::size_t w = width();
        stencil_.resize(w * w);
        const double cw = grid.cell_width(), ch = grid.cell_height();
        for (std::size_t a = 0; a < w; ++a)
            for (std::size_t b = 0; b < w; ++b) {
                const double dr = std::abs(static_cast<double>(a) - static_cast<double>(grid.d - 1)) * ch;
                const double dc = std::abs(static_cast<double>(b) - static_cast<double>(grid.d - 1)) * cw;
                double m;
                if (p == 1.0)
                    m = dr + dc;
                else if (p == 2.0)
                    m = std::hypot(dr, dc);
                else
                    m = std::pow(std::pow(dr, p) + std::pow(dc, p), 1.0 / p);
                stencil_[a * w + b] = m;
            }
    }

    [[nodiscard]] const GridSpec& grid() const noexcept { return grid_; }
    [[nodiscard]] double p() const noexcept { return p_; }
    [[nodiscard]] std::size_t d() const noexcept { return grid_.d; }
    [[nodiscard]] std::size_t size() const noexcept { return grid_.d * grid_.d; }
    /// Stencil side length, 2d - 1.
    [[nodiscard]] std::size_t width() const noexcept { return 2 * grid_.d - 1; }
    [[nodiscard]] std::span<const double> stencil() const noexcept { return stencil_; }

    /// Cost for a (row, col) offset between two cells.
    [[nodiscard]] double at(std::ptrdiff_t drow, std::ptrdiff_t dcol) const {
        const auto c = static_cast<std::ptrdiff_t>(grid_.d - 1);
        return stencil_[static_cast<std::size_t>(drow + c) * width() + static_cast<std::size_t>(dcol + c)];
    }

    /// Cost between flat cell indices i and j (row-major).
    [[nodiscard]] double between(std::size_t i, std::size_t j) const {
        const auto d = static_cast<std::ptrdiff_t>(grid_.d);
        const auto ii = static_cast<std::ptrdiff_t>(i), jj = static_cast<std::ptrdiff_t>(j);
        return at(ii / d - jj / d, ii % d - jj % d);
    }

    [[nodiscard]] double max() const { return *std::max_element(stencil_.begin(), stencil_.end()); }

    /// Smallest nonzero entry.
    [[nodiscard]] double min_positive() const {
        return std::min(grid_.cell_width(), grid_.cell_height());
    }

    /// Mean over all d^4 entries of the full matrix.
    [[nodiscard]] double mean() const {
        const auto d = static_cast<std::ptrdiff_t>(grid_.d);
        double s = 0.0;
        for (std::ptrdiff_t dr = -(d - 1); dr <= d - 1; ++dr)
            for (std::ptrdiff_t dc = -(d - 1); dc <= d - 1; ++dc)
                s += static_cast<double>((d - std::abs(dr)) * (d - std::abs(dc))) * at(dr, dc);
        return s / static_cast<double>(d * d * d * d);
    }

    /// Explicit d^2 x d^2 matrix; only sensible for small grids.
    [[nodiscard]] std::vector<double> dense() const {
        const std::size_t n = size();
        std::vector<double> m(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) m[i * n + j] = between(i, j);
        return m;
    }

private:
    GridSpec grid_;
    double p_;
    std::vector<double> stencil_;
};

enum class KernelMethod { Fft, Direct };

/// K = exp(-M / lambda) applied to grid histograms by stencil convolution.
class GridKernel {
public:
    GridKernel(const GroundCost& cost, double lambda, KernelMethod method = KernelMethod::Fft)
        : cost_(cost), lambda_(lambda), method_(method) {
        if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
        if (std::exp(-cost.min_positive() / lambda) == 0.0)
            throw NumericalUnderflowError(
                "exp(-m/lambda) underflows for every off-centre cell; use the log-domain solver");
        const auto st = cost.stencil();
        kernel_.resize(st.size());
        weighted_.resize(st.size());
        for (std::size_t k = 0; k < st.size(); ++k) {
            kernel_[k] = std::exp(-st[k] / lambda);
            weighted_[k] = kernel_[k] * st[k];
        }
        if (method_ == KernelMethod::Fft) {
            const std::size_t d = cost.d();
            kconv_ = std::make_unique<fft::Convolver2D>(d, d, kernel_, d - 1, d - 1);
            wconv_ = std::make_unique<fft::Convolver2D>(d, d, weighted_, d - 1, d - 1);
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return cost_.size(); }
    [[nodiscard]] double lambda() const noexcept { return lambda_; }
    [[nodiscard]] double max_cost() const { return cost_.max(); }
    [[nodiscard]] double cost(std::size_t i, std::size_t j) const { return cost_.between(i, j); }
    [[nodiscard]] const GroundCost& ground_cost() const noexcept { return cost_; }

    void apply(std::span<const double> x, std::span<double> y) { run(kconv_.get(), kernel_, x, y); }
    void apply_transpose(std::span<const double> x, std::span<double> y) { apply(x, y); }
    void apply_weighted(std::span<const double> x, std::span<double> y) { run(wconv_.get(), weighted_, x, y); }

private:
    void run(fft::Convolver2D* conv, const std::vector<double>& stencil, std::span<const double> x,
             std::span<double> y) {
        if (conv != nullptr) {
            conv->apply(x, y);
            return;
        }
        const auto d = static_cast<std::ptrdiff_t>(cost_.d());
        const std::size_t w = cost_.width();
        for (std::ptrdiff_t i = 0; i < d; ++i)
            for (std::ptrdiff_t j = 0; j < d; ++j) {
                double s = 0.0;
                for (std::ptrdiff_t k = 0; k < d; ++k) {
                    const std::size_t srow = static_cast<std::size_t>(i - k + d - 1) * w;
                    for (std::ptrdiff_t l = 0; l < d; ++l)
                        s += stencil[srow + static_cast<std::size_t>(j - l + d - 1)] *
                             x[static_cast<std::size_t>(k * d + l)];
                }
                y[static_cast<std::size_t>(i * d + j)] = s;
            }
    }

    GroundCost cost_;
    double lambda_;
    KernelMethod method_;
    std::vector<double> kernel_, weighted_;
    std::unique_ptr<fft::Convolver2D> kconv_, wconv_;
};

/// K = exp(-M / lambda) for an explicit n x n cost matrix (row-major).
class DenseKernel {
public:
    DenseKernel(std::vector<double> cost, std::size_t n, double lambda)
        : n_(n), lambda_(lambda), cost_(std::move(cost)) {
        if (cost_.size() != n * n) throw ConfigError("cost matrix must be n x n");
        if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
        kernel_.resize(cost_.size());
        for (std::size_t k = 0; k < cost_.size(); ++k) kernel_[k] = std::exp(-cost_[k] / lambda);
        max_cost_ = *std::max_element(cost_.begin(), cost_.end());
    }

    [[nodiscard]] static DenseKernel from_grid(const GroundCost& cost, double lambda) {
        return {cost.dense(), cost.size(), lambda};
    }

    [[nodiscard]] std::size_t size() const noexcept { return n_; }
    [[nodiscard]] double lambda() const noexcept { return lambda_; }
    [[nodiscard]] double max_cost() const noexcept { return max_cost_; }
    [[nodiscard]] double cost(std::size_t i, std::size_t j) const { return cost_[i * n_ + j]; }

    void apply(std::span<const double> x, std::span<double> y) const {
        for (std::size_t i = 0; i < n_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n_; ++j) s += kernel_[i * n_ + j] * x[j];
            y[i] = s;
        }
    }
    void apply_transpose(std::span<const double> x, std::span<double> y) const {
        std::fill(y.begin(), y.end(), 0.0);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) y[j] += kernel_[i * n_ + j] * x[i];
    }
    void apply_weighted(std::span<const double> x, std::span<double> y) const {
        for (std::size_t i = 0; i < n_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n_; ++j) s += kernel_[i * n_ + j] * cost_[i * n_ + j] * x[j];
            y[i] = s;
        }
    }

private:
    std::size_t n_;
    double lambda_;
    std::vector<double> cost_, kernel_;
    double max_cost_ = 0.0;
};

/// K x on the grid by FFT convolution.
[[nodiscard]] inline std::vector<double> kernel_apply(const GroundCost& cost, double lambda, std::span<const double> x) {
    if (x.size() != cost.size()) throw ConfigError("vector length must be d^2");
    GridKernel k(cost, lambda, KernelMethod::Fft);
    std::vector<double> y(x.size());
    k.apply(x, y);
    return y;
}

/// Sinkhorn scalings in log form: u = exp(log_u), v = exp(log_v). The implied
/// plan is diag(u) K diag(v).
struct TransportPlanScalings {
    std::vector<double> log_u;
    std::vector<double> log_v;
    double lambda = 0.0;
    int iterations = 0;
    double marginal_error = 0.0;

    [[nodiscard]] std::vector<double> u() const { return exp_of(log_u); }
    [[nodiscard]] std::vector<double> v() const { return exp_of(log_v); }

private:
    static std::vector<double> exp_of(const std::vector<double>& a) {
        std::vector<double> out(a.size());
        std::transform(a.begin(), a.end(), out.begin(), [](double x) { return std::exp(x); });
        return out;
    }
};

enum class SinkhornMode { Auto, Standard, LogDomain };

struct SinkhornOptions {
    double tol = 1e-6;
    int max_iter = 5000;
    int check_every = 10;
    SinkhornMode mode = SinkhornMode::Auto;
    /// Added to every bin before renormalizing.
    double floor = 1e-16;
    /// Auto mode goes straight to the log domain below this lambda / max cost.
    double log_domain_ratio = 0.01;
};

struct SinkhornResult {
    /// Sharp transport cost <P, M> of the regularized plan; the entropy term
    /// is not included.
    double divergence = 0.0;
    TransportPlanScalings scalings;
    bool converged = false;
    bool log_domain = false;
};

/// Adds `floor` to every bin and rescales to unit mass.
[[nodiscard]] inline std::vector<double> prepare_histogram(std::span<const double> h, double floor) {
    double s = 0.0;
    for (double v : h) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("histogram bins must be finite and nonnegative");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("histogram must sum to 1 (renormalize first)");
    std::vector<double> out(h.begin(), h.end());
    double t = 0.0;
    for (double& v : out) t += (v += floor);
    for (double& v : out) v /= t;
    return out;
}

namespace detail {

[[nodiscard]] inline bool all_positive_finite(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return v > 0.0 && std::isfinite(v); });
}

template <class Kernel>
bool sinkhorn_standard(Kernel& k, std::span<const double> r, std::span<const double> c, const SinkhornOptions& opt,
                       SinkhornResult& out) {
    const std::size_t n = r.size();
    std::vector<double> u(n, 1.0), v(n, 1.0), kv(n), ktu(n);
    double err = std::numeric_limits<double>::infinity();
    int it = 0;
    bool converged = false;
    while (it < opt.max_iter) {
        ++it;
        k.apply(v, kv);
        for (std::size_t i = 0; i < n; ++i) u[i] = r[i] / kv[i];
        k.apply_transpose(u, ktu);
        for (std::size_t j = 0; j < n; ++j) v[j] = c[j] / ktu[j];
        if (!all_positive_finite(kv) || !all_positive_finite(ktu) || !all_positive_finite(u) ||
            !all_positive_finite(v))
            return false;
        if (it % opt.check_every == 0 || it == opt.max_iter) {
            k.apply(v, kv);
            if (!all_positive_finite(kv)) return false;
            err = 0.0;
            for (std::size_t i = 0; i < n; ++i) err += std::abs(u[i] * kv[i] - r[i]);
            if (err < opt.tol) {
                converged = true;
                break;
            }
        }
    }
    std::vector<double> w(n);
    k.apply_weighted(v, w);
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) cost += u[i] * w[i];
    if (!std::isfinite(cost)) return false;

    k.apply(v, kv);
    k.apply_transpose(u, ktu);
    double row_err = 0.0, col_err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        row_err += std::abs(u[i] * kv[i] - r[i]);
        col_err += std::abs(v[i] * ktu[i] - c[i]);
    }

    out.divergence = std::max(cost, 0.0);
    out.converged = converged;
    out.log_domain = false;
    out.scalings.log_u.resize(n);
    out.scalings.log_v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.scalings.log_u[i] = std::log(u[i]);
        out.scalings.log_v[i] = std::log(v[i]);
    }
    out.scalings.lambda = k.lambda();
    out.scalings.iterations = it;
    out.scalings.marginal_error = std::max(row_err, col_err);
    return true;
}

[[nodiscard]] inline double log_sum_exp(std::span<const double> x) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : x) mx = std::max(mx, v);
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double v : x) s += std::exp(v - mx);
    return mx + std::log(s);
}

/// Dense O(n^2) per iteration; stable for any lambda.
template <class Kernel>
void sinkhorn_log(const Kernel& k, std::span<const double> r, std::span<const double> c, const SinkhornOptions& opt,
                  SinkhornResult& out) {
    const std::size_t n = r.size();
    const double lambda = k.lambda();
    std::vector<double> scaled(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) scaled[i * n + j] = -k.cost(i, j) / lambda;
    std::vector<double> a(n, 0.0), b(n, 0.0), log_r(n), log_c(n), tmp(n);
    for (std::size_t i = 0; i < n; ++i) {
        log_r[i] = std::log(r[i]);
        log_c[i] = std::log(c[i]);
    }

    auto row_marginal_error = [&] {
        double e = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) tmp[j] = b[j] + scaled[i * n + j];
            e += std::abs(std::exp(a[i] + log_sum_exp(tmp)) - r[i]);
        }
        return e;
    };
    auto col_marginal_error = [&] {
        double e = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < n; ++i) tmp[i] = a[i] + scaled[i * n + j];
            e += std::abs(std::exp(b[j] + log_sum_exp(tmp)) - c[j]);
        }
        return e;
    };

    int it = 0;
    bool converged = false;
    while (it < opt.max_iter) {
        ++it;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) tmp[j] = b[j] + scaled[i * n + j];
            a[i] = log_r[i] - log_sum_exp(tmp);
        }
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < n; ++i) tmp[i] = a[i] + scaled[i * n + j];
            b[j] = log_c[j] - log_sum_exp(tmp);
        }
        if ((it % opt.check_every == 0 || it == opt.max_iter) && row_marginal_error() < opt.tol) {
            converged = true;
            break;
        }
    }
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) cost += std::exp(a[i] + b[j] + scaled[i * n + j]) * k.cost(i, j);

    out.divergence = std::max(cost, 0.0);
    out.converged = converged;
    out.log_domain = true;
    out.scalings.log_u = a;
    out.scalings.log_v = b;
    out.scalings.lambda = lambda;
    out.scalings.iterations = it;
    out.scalings.marginal_error = std::max(row_marginal_error(), col_marginal_error());
}

}  // namespace detail

/// Sinkhorn-Knopp on a kernel operator. Both histograms must sum to 1; they
/// are floored and renormalized internally. Non-convergence within max_iter
/// is reported through `converged`, not thrown.
template <class Kernel>
[[nodiscard]] SinkhornResult sinkhorn(Kernel& k, std::span<const double> r, std::span<const double> c,
                                      const SinkhornOptions& opt = {}) {
    if (r.size() != k.size() || c.size() != k.size()) throw ConfigError("histogram length does not match kernel");
    if (!(opt.tol > 0.0) || opt.max_iter <= 0 || opt.check_every <= 0) throw ConfigError("bad Sinkhorn options");
    const auto rr = prepare_histogram(r, opt.floor);
    const auto cc = prepare_histogram(c, opt.floor);
    SinkhornResult out;
    const bool go_log = opt.mode == SinkhornMode::LogDomain ||
                        (opt.mode == SinkhornMode::Auto && k.lambda() < opt.log_domain_ratio * k.max_cost());
    if (!go_log) {
        if (detail::sinkhorn_standard(k, rr, cc, opt, out)) return out;
        if (opt.mode == SinkhornMode::Standard)
            throw NumericalUnderflowError("Sinkhorn scalings lost positivity; use the log-domain solver");
    }
    detail::sinkhorn_log(k, rr, cc, opt, out);
    return out;
}

/// Sinkhorn divergence ROT between two grid histograms.
[[nodiscard]] inline SinkhornResult sinkhorn_divergence(std::span<const double> r, std::span<const double> c,
                                                        const GroundCost& cost, double lambda,
                                                        const SinkhornOptions& opt = {}) {
    if (opt.mode == SinkhornMode::LogDomain || lambda < opt.log_domain_ratio * cost.max() ||
        std::exp(-cost.min_positive() / lambda) == 0.0) {
        if (opt.mode == SinkhornMode::Standard)
            throw NumericalUnderflowError("lambda too small for the standard solver; use the log-domain solver");
        auto dense = DenseKernel::from_grid(cost, lambda);
        auto o = opt;
        o.mode = SinkhornMode::LogDomain;
        return sinkhorn(dense, r, c, o);
    }
    GridKernel k(cost, lambda, KernelMethod::Fft);
    if (opt.mode != SinkhornMode::Auto) return sinkhorn(k, r, c, opt);
    auto o = opt;
    o.mode = SinkhornMode::Standard;
    try {
        return sinkhorn(k, r, c, o);
    } catch (const NumericalUnderflowError&) {
        auto dense = DenseKernel::from_grid(cost, lambda);
        o.mode = SinkhornMode::LogDomain;
        return sinkhorn(dense, r, c, o);
    }
}

/// Entropy -sum P log P of the plan implied by `s`, without forming P:
///   H = -sum_i rhat_i log u_i - sum_j chat_j log v_j + <P, M> / lambda,
/// where rhat, chat are the plan's actual marginals.
template <class Kernel>
[[nodiscard]] double entropy(const TransportPlanScalings& s, Kernel& k) {
    const std::size_t n = k.size();
    if (s.log_u.size() != n || s.log_v.size() != n) throw ConfigError("scalings do not match kernel");
    const auto u = s.u();
    const auto v = s.v();
    if (detail::all_positive_finite(u) && detail::all_positive_finite(v)) {
        std::vector<double> kv(n), ktu(n), w(n);
        k.apply(v, kv);
        k.apply_transpose(u, ktu);
        k.apply_weighted(v, w);
        double h = 0.0, cost = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            h -= u[i] * kv[i] * s.log_u[i] + v[i] * ktu[i] * s.log_v[i];
            cost += u[i] * w[i];
        }
        return h + cost / k.lambda();
    }
    double h = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double lp = s.log_u[i] + s.log_v[j] - k.cost(i, j) / k.lambda();
            const double p = std::exp(lp);
            if (p > 0.0) h -= p * lp;
        }
    return h;
}

[[nodiscard]] inline double entropy(const TransportPlanScalings& s, const GroundCost& cost) {
    if (cost.size() <= 64 * 64 && std::exp(-cost.min_positive() / s.lambda) > 0.0) {
        GridKernel k(cost, s.lambda, KernelMethod::Fft);
        return entropy(s, k);
    }
    auto k = DenseKernel::from_grid(cost, s.lambda);
    return entropy(s, k);
}

}  // namespace picrot::transport
