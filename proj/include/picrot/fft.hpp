#pragma once

// Thin RAII layer over FFTW3.
//
// fftw_execute is reentrant but the planner is not, so every plan is created
// and destroyed under one process-wide mutex. All objects here own their
// buffers and plans; a single object must not be used from two threads at
// once, distinct objects may.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace picrot::fft {

namespace detail {

inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

template <class T>
using Buffer = std::unique_ptr<T[], FftwFree>;

template <class T>
Buffer<T> allocate(std::size_t n) {
    auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * std::max<std::size_t>(n, 1)));
    if (p == nullptr) throw std::bad_alloc();
    return Buffer<T>(p);
}

class Plan {
public:
    Plan() = default;
    explicit Plan(fftw_plan p) : plan_(p) {
        if (plan_ == nullptr) throw std::runtime_error("fftw planner failed");
    }
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;
    Plan(Plan&& o) noexcept : plan_(std::exchange(o.plan_, nullptr)) {}
    Plan& operator=(Plan&& o) noexcept {
        if (this != &o) {
            reset();
            plan_ = std::exchange(o.plan_, nullptr);
        }
        return *this;
    }
    ~Plan() { reset(); }

    void execute() const { fftw_execute(plan_); }

private:
    void reset() noexcept {
        if (plan_ != nullptr) {
            std::lock_guard lock(planner_mutex());
            fftw_destroy_plan(plan_);
            plan_ = nullptr;
        }
    }
    fftw_plan plan_ = nullptr;
};

template <class MakePlan>
Plan make_plan(MakePlan&& make) {
    std::lock_guard lock(planner_mutex());
    return Plan(make());
}

}  // namespace detail

/// Smallest n' >= n whose only prime factors are 2, 3, 5 and 7.
[[nodiscard]] inline std::size_t good_size(std::size_t n) {
    if (n <= 1) return 1;
    for (std::size_t m = n;; ++m) {
        std::size_t r = m;
        for (std::size_t f : {2u, 3u, 5u, 7u})
            while (r % f == 0) r /= f;
        if (r == 1) return m;
    }
}

/// Linear 2D convolution of row-major rows x cols arrays
/// with a fixed real stencil, cropped to the input extent ("same" mode,
/// zero padding). The stencil has shape (2*rad_r+1) x (2*rad_c+1) and its
/// centre tap multiplies the input sample at the output position:
///   out(i, j) = sum_{a, b} stencil(a, b) * in(i - (a - rad_r), j - (b - rad_c)).
class Convolver2D {
public:
    Convolver2D(std::size_t rows, std::size_t cols, std::span<const double> stencil,
                std::size_t rad_r, std::size_t rad_c)
        : rows_(rows), cols_(cols),
          n_r_(good_size(rows + rad_r)), n_c_(good_size(cols + rad_c)),
          n_ch_(n_c_ / 2 + 1),
          real_(detail::allocate<double>(n_r_ * n_c_)),
          spec_(detail::allocate<fftw_complex>(n_r_ * n_ch_)),
          kernel_(n_r_ * n_ch_) {
        const std::size_t sr = 2 * rad_r + 1, sc = 2 * rad_c + 1;
        if (stencil.size() != sr * sc) throw std::invalid_argument("stencil shape mismatch");
        if (rows == 0 || cols == 0) throw std::invalid_argument("empty convolution domain");
        forward_ = detail::make_plan([&] {
            return fftw_plan_dft_r2c_2d(static_cast<int>(n_r_), static_cast<int>(n_c_), real_.get(),
                                        spec_.get(), FFTW_ESTIMATE);
        });
        backward_ = detail::make_plan([&] {
            return fftw_plan_dft_c2r_2d(static_cast<int>(n_r_), static_cast<int>(n_c_), spec_.get(),
                                        real_.get(), FFTW_ESTIMATE);
        });
        std::fill_n(real_.get(), n_r_ * n_c_, 0.0);
        for (std::size_t a = 0; a < sr; ++a) {
            const auto off_r = static_cast<std::ptrdiff_t>(a) - static_cast<std::ptrdiff_t>(rad_r);
            const std::size_t wr = static_cast<std::size_t>((off_r + static_cast<std::ptrdiff_t>(n_r_)) %
                                                            static_cast<std::ptrdiff_t>(n_r_));
            for (std::size_t b = 0; b < sc; ++b) {
                const auto off_c = static_cast<std::ptrdiff_t>(b) - static_cast<std::ptrdiff_t>(rad_c);
                const std::size_t wc = static_cast<std::size_t>(
                    (off_c + static_cast<std::ptrdiff_t>(n_c_)) % static_cast<std::ptrdiff_t>(n_c_));
                real_[wr * n_c_ + wc] += stencil[a * sc + b];
            }
        }
        forward_.execute();
        const double scale = 1.0 / static_cast<double>(n_r_ * n_c_);
        for (std::size_t k = 0; k < n_r_ * n_ch_; ++k)
            kernel_[k] = std::complex<double>(spec_[k][0], spec_[k][1]) * scale;
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }

    void apply(std::span<const double> in, std::span<double> out) {
        if (in.size() != rows_ * cols_ || out.size() != rows_ * cols_)
            throw std::invalid_argument("convolution input has wrong size");
        std::fill_n(real_.get(), n_r_ * n_c_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i)
            std::copy_n(in.data() + i * cols_, cols_, real_.get() + i * n_c_);
        forward_.execute();
        for (std::size_t k = 0; k < n_r_ * n_ch_; ++k) {
            const std::complex<double> z(spec_[k][0], spec_[k][1]);
            const auto w = z * kernel_[k];
            spec_[k][0] = w.real();
            spec_[k][1] = w.imag();
        }
        backward_.execute();
        for (std::size_t i = 0; i < rows_; ++i)
            std::copy_n(real_.get() + i * n_c_, cols_, out.data() + i * cols_);
    }

private:
    std::size_t rows_, cols_, n_r_, n_c_, n_ch_;
    detail::Buffer<double> real_;
    detail::Buffer<fftw_complex> spec_;
    std::vector<std::complex<double>> kernel_;
    detail::Plan forward_, backward_;
};

/// Unnormalized forward DFT of a real sequence, full complex spectrum.
[[nodiscard]] inline std::vector<std::complex<double>> forward_real(std::span<const double> x) {
    const std::size_t n = x.size();
    auto in = detail::allocate<double>(n);
    auto out = detail::allocate<fftw_complex>(n / 2 + 1);
    auto plan = detail::make_plan(
        [&] { return fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE); });
    std::copy(x.begin(), x.end(), in.get());
    plan.execute();
    std::vector<std::complex<double>> spectrum(n);
    for (std::size_t k = 0; k <= n / 2; ++k) spectrum[k] = {out[k][0], out[k][1]};
    for (std::size_t k = n / 2 + 1; k < n; ++k) spectrum[k] = std::conj(spectrum[n - k]);
    return spectrum;
}

/// Inverse DFT normalized by 1/n.
[[nodiscard]] inline std::vector<std::complex<double>> inverse(std::span<const std::complex<double>> z) {
    const std::size_t n = z.size();
    auto in = detail::allocate<fftw_complex>(n);
    auto out = detail::allocate<fftw_complex>(n);
    auto plan = detail::make_plan([&] {
        return fftw_plan_dft_1d(static_cast<int>(n), in.get(), out.get(), FFTW_BACKWARD, FFTW_ESTIMATE);
    });
    for (std::size_t k = 0; k < n; ++k) {
        in[k][0] = z[k].real();
        in[k][1] = z[k].imag();
    }
    plan.execute();
    std::vector<std::complex<double>> result(n);
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) result[k] = {out[k][0] * scale, out[k][1] * scale};
    return result;
}

/// Orthonormal DCT-II.
[[nodiscard]] inline std::vector<double> dct2(std::span<const double> x) {
    const std::size_t n = x.size();
    auto buf = detail::allocate<double>(n);
    auto out = detail::allocate<double>(n);
    auto plan = detail::make_plan(
        [&] { return fftw_plan_r2r_1d(static_cast<int>(n), buf.get(), out.get(), FFTW_REDFT10, FFTW_ESTIMATE); });
    std::copy(x.begin(), x.end(), buf.get());
    plan.execute();
    // FFTW's REDFT10 is 2 * sum x_j cos(pi (j + 1/2) k / n).
    std::vector<double> y(n);
    const double s0 = std::sqrt(1.0 / (4.0 * static_cast<double>(n)));
    const double sk = std::sqrt(1.0 / (2.0 * static_cast<double>(n)));
    for (std::size_t k = 0; k < n; ++k) y[k] = out[k] * (k == 0 ? s0 : sk);
    return y;
}

}  // namespace picrot::fft
