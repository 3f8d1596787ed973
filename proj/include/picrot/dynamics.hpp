#pragma once

// Seeded trajectories of the Logistic, Henon and Lorenz systems.

#include "picrot/error.hpp"
#include "picrot/rng.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace picrot::dynamics {

enum class System { Logistic, Henon, Lorenz };

[[nodiscard]] inline std::string to_string(System s) {
    switch (s) {
        case System::Logistic: return "logistic";
        case System::Henon: return "henon";
        case System::Lorenz: return "lorenz";
    }
    return "unknown";
}

[[nodiscard]] inline System system_from_string(const std::string& s) {
    if (s == "logistic") return System::Logistic;
    if (s == "henon") return System::Henon;
    if (s == "lorenz") return System::Lorenz;
    throw ConfigError("unknown system '" + s + "'");
}

/// Closed interval [lo, hi]; lo == hi pins a value.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    [[nodiscard]] static Interval around(double centre, double half_width) {
        return {centre - half_width, centre + half_width};
    }
    [[nodiscard]] static Interval point(double v) { return {v, v}; }
};

inline constexpr double kOverflowGuard = 1e12;
inline constexpr std::size_t kDefaultBurnIn = 1000;
inline constexpr double kDefaultLorenzStep = 0.01;

struct SystemSpec {
    System system = System::Logistic;
    std::map<std::string, Interval> params;
    std::map<std::string, Interval> init;
    std::string observable = "x";
    /// RK4 step for Lorenz; ignored by the maps.
    double dt = kDefaultLorenzStep;

    [[nodiscard]] std::vector<std::string> required_params() const {
        switch (system) {
            case System::Logistic: return {"a"};
            case System::Henon: return {"a", "b"};
            case System::Lorenz: return {"beta", "rho", "sigma"};
        }
        return {};
    }

    [[nodiscard]] std::vector<std::string> required_init() const {
        switch (system) {
            case System::Logistic: return {"x0"};
            case System::Henon: return {"x0", "y0"};
            case System::Lorenz: return {"x0", "y0", "z0"};
        }
        return {};
    }

    void validate() const {
        auto check = [](const std::map<std::string, Interval>& m, const std::vector<std::string>& names,
                        const char* what) {
            for (const auto& n : names) {
                auto it = m.find(n);
                if (it == m.end()) throw ConfigError(std::string("missing ") + what + " '" + n + "'");
                if (!(it->second.lo <= it->second.hi))
                    throw ConfigError(std::string("empty interval for ") + what + " '" + n + "'");
            }
        };
        check(params, required_params(), "parameter");
        check(init, required_init(), "initial condition");
        const bool has_observable = observable == "x" || (system != System::Logistic && observable == "y") ||
                                    (system == System::Lorenz && observable == "z");
        if (!has_observable) throw ConfigError("observable '" + observable + "' not available");
        if (system == System::Lorenz && !(dt > 0.0)) throw ConfigError("Lorenz step must be positive");
    }
};

/// Provenance of one generated series.
struct SeriesMeta {
    System system = System::Logistic;
    std::map<std::string, double> draw;  // sampled parameters and initial state
    std::uint64_t seed = 0;
    std::size_t burn_in = 0;
    double dt = 0.0;
    bool z_normalized = false;
    double noise_sigma = 0.0;
    std::uint64_t noise_seed = 0;
    int attempts = 1;
};

struct TimeSeries {
    std::vector<double> values;
    std::optional<int> label;
    SeriesMeta meta;

    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
};

// Single steps, exposed for replay checks.

[[nodiscard]] inline double logistic_step(double x, double a) noexcept { return a * x * (1.0 - x); }

[[nodiscard]] inline std::array<double, 2> henon_step(const std::array<double, 2>& s, double a,
                                                      double b) noexcept {
    return {1.0 - a * s[0] * s[0] + s[1], b * s[0]};
}

struct LorenzParams {
    double sigma = 10.0;
    double rho = 28.0;
    double beta = 8.0 / 3.0;
};

[[nodiscard]] inline std::array<double, 3> lorenz_derivative(const std::array<double, 3>& s,
                                                             const LorenzParams& p) noexcept {
    return {p.sigma * (s[1] - s[0]), s[0] * (p.rho - s[2]) - s[1], s[0] * s[1] - p.beta * s[2]};
}

/// One classical fourth-order Runge-Kutta step.
[[nodiscard]] inline std::array<double, 3> lorenz_rk4_step(const std::array<double, 3>& s,
                                                           const LorenzParams& p, double dt) noexcept {
    auto axpy = [](const std::array<double, 3>& x, double h, const std::array<double, 3>& k) {
        return std::array<double, 3>{x[0] + h * k[0], x[1] + h * k[1], x[2] + h * k[2]};
    };
    const auto k1 = lorenz_derivative(s, p);
    const auto k2 = lorenz_derivative(axpy(s, dt / 2, k1), p);
    const auto k3 = lorenz_derivative(axpy(s, dt / 2, k2), p);
    const auto k4 = lorenz_derivative(axpy(s, dt, k3), p);
    std::array<double, 3> out{};
    for (int i = 0; i < 3; ++i) out[i] = s[i] + dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    return out;
}

/// Draws parameters then initial conditions (each map in key order) from `rng`.
[[nodiscard]] inline std::map<std::string, double> draw_state(const SystemSpec& spec, Rng& rng) {
    std::map<std::string, double> draw;
    for (const auto& [name, iv] : spec.params) draw[name] = rng.uniform(iv.lo, iv.hi);
    for (const auto& [name, iv] : spec.init) draw[name] = rng.uniform(iv.lo, iv.hi);
    return draw;
}

/// Iterates the system from an explicit draw, returning `length` observations
/// after discarding the first `burn_in` sequence values (the initial state is
/// sequence value 0).
[[nodiscard]] inline std::vector<double> trajectory(const SystemSpec& spec, const std::map<std::string, double>& draw,
                                                    std::size_t length, std::size_t burn_in) {
    std::vector<double> out;
    out.reserve(length);
    const std::size_t total = burn_in + length;
    auto guard = [](double v, std::size_t step) {
        if (!std::isfinite(v) || std::abs(v) > kOverflowGuard)
            throw GenerationError("trajectory diverged", step);
    };
    const int obs = spec.observable == "x" ? 0 : spec.observable == "y" ? 1 : 2;

    switch (spec.system) {
        case System::Logistic: {
            const double a = draw.at("a");
            double x = draw.at("x0");
            for (std::size_t k = 0; k < total; ++k) {
                if (k > 0) x = logistic_step(x, a);
                if (!(x >= 0.0 && x <= 1.0)) throw GenerationError("logistic iterate left [0, 1]", k);
                if (k >= burn_in) out.push_back(x);
            }
            break;
        }
        case System::Henon: {
            const double a = draw.at("a"), b = draw.at("b");
            std::array<double, 2> s{draw.at("x0"), draw.at("y0")};
            for (std::size_t k = 0; k < total; ++k) {
                if (k > 0) s = henon_step(s, a, b);
                guard(s[0], k);
                guard(s[1], k);
                if (k >= burn_in) out.push_back(s[static_cast<std::size_t>(obs)]);
            }
            break;
        }
        case System::Lorenz: {
            const LorenzParams p{draw.at("sigma"), draw.at("rho"), draw.at("beta")};
            std::array<double, 3> s{draw.at("x0"), draw.at("y0"), draw.at("z0")};
            for (std::size_t k = 0; k < total; ++k) {
                if (k > 0) s = lorenz_rk4_step(s, p, spec.dt);
                for (double v : s) guard(v, k);
                if (k >= burn_in) out.push_back(s[static_cast<std::size_t>(obs)]);
            }
            break;
        }
    }
    return out;
}

/// Deterministic in (spec, length, burn_in, seed).
[[nodiscard]] inline TimeSeries generate(const SystemSpec& spec, std::size_t length, std::size_t burn_in,
                                         std::uint64_t seed) {
    spec.validate();
    if (length < 2) throw ConfigError("series length must be at least 2");
    Rng rng(seed);
    TimeSeries ts;
    ts.meta.system = spec.system;
    ts.meta.draw = draw_state(spec, rng);
    ts.meta.seed = seed;
    ts.meta.burn_in = burn_in;
    ts.meta.dt = spec.system == System::Lorenz ? spec.dt : 0.0;
    ts.values = trajectory(spec, ts.meta.draw, length, burn_in);
    return ts;
}

/// Retries divergent draws on child streams of `seed`: attempt k (k >= 1)
/// uses child_seed(seed, {k}). The benchmark Henon initial states escape the
/// attractor basin for roughly half of all draws.
[[nodiscard]] inline TimeSeries generate_retrying(const SystemSpec& spec, std::size_t length, std::size_t burn_in,
                                                  std::uint64_t seed, int max_attempts = 64) {
    for (int attempt = 0;; ++attempt) {
        const std::uint64_t s = attempt == 0 ? seed : child_seed(seed, {static_cast<std::uint64_t>(attempt)});
        try {
            auto ts = generate(spec, length, burn_in, s);
            ts.meta.attempts = attempt + 1;
            return ts;
        } catch (const GenerationError&) {
            if (attempt + 1 >= max_attempts) throw;
        }
    }
}

[[nodiscard]] inline double mean(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

/// Population standard deviation.
[[nodiscard]] inline double stddev(std::span<const double> x) {
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size()));
}

[[nodiscard]] inline TimeSeries z_normalize(TimeSeries ts) {
    if (ts.values.size() < 2) throw ConfigError("z-normalization needs at least 2 values");
    for (double v : ts.values)
        if (!std::isfinite(v)) throw NonFiniteError("series contains a non-finite value");
    const double m = mean(ts.values);
    const double s = stddev(ts.values);
    if (!(s > 0.0)) throw ConstantSeriesError();
    for (double& v : ts.values) v = (v - m) / s;
    ts.meta.z_normalized = true;
    return ts;
}

/// Adds i.i.d. N(0, sigma^2) noise; sigma == 0 returns the input unchanged.
[[nodiscard]] inline TimeSeries add_noise(TimeSeries ts, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw ConfigError("noise sigma must be nonnegative");
    ts.meta.noise_sigma = sigma;
    ts.meta.noise_seed = seed;
    if (sigma == 0.0) return ts;
    Rng rng(seed);
    for (double& v : ts.values) {
        v += sigma * rng.normal();
        if (!std::isfinite(v)) throw NonFiniteError("noisy series contains a non-finite value");
    }
    return ts;
}

/// One row of the benchmark table: a class-0 system and a perturbed class-1 twin.
struct SystemPair {
    std::string name;          // e.g. "henon-3"
    std::string class1_param;  // e.g. "a=1.395"
    SystemSpec class0;
    SystemSpec class1;
};

[[nodiscard]] inline std::vector<SystemPair> benchmark_pairs() {
    std::vector<SystemPair> rows;

    SystemSpec logistic;
    logistic.system = System::Logistic;
    logistic.params["a"] = Interval::around(3.9995, 0.0005);
    logistic.init["x0"] = {0.0, 1.0};
    int k = 1;
    for (double a : {3.9945, 3.9895, 3.9845, 3.9795}) {
        auto c1 = logistic;
        c1.params["a"] = Interval::around(a, 0.0005);
        char buf[32];
        std::snprintf(buf, sizeof buf, "a=%.4f", a);
        rows.push_back({"logistic-" + std::to_string(k++), buf, logistic, c1});
    }

    SystemSpec henon;
    henon.system = System::Henon;
    henon.params["a"] = Interval::around(1.4, 0.0025);
    henon.params["b"] = Interval::around(0.3035, 0.0025);
    henon.init["x0"] = {1.0, 2.0};
    henon.init["y0"] = {1.0, 2.0};
    k = 1;
    for (double b : {0.3085, 0.3135}) {
        auto c1 = henon;
        c1.params["b"] = Interval::around(b, 0.0025);
        char buf[32];
        std::snprintf(buf, sizeof buf, "b=%.4f", b);
        rows.push_back({"henon-" + std::to_string(k++), buf, henon, c1});
    }
    for (double a : {1.395, 1.390, 1.385}) {
        auto c1 = henon;
        c1.params["a"] = Interval::around(a, 0.0025);
        char buf[32];
        std::snprintf(buf, sizeof buf, "a=%.3f", a);
        rows.push_back({"henon-" + std::to_string(k++), buf, henon, c1});
    }

    SystemSpec lorenz;
    lorenz.system = System::Lorenz;
    lorenz.params["sigma"] = Interval::point(10.0);
    lorenz.params["rho"] = Interval::point(28.0);
    lorenz.params["beta"] = Interval::point(8.0 / 3.0);
    lorenz.init["x0"] = {0.0, 1.0};
    lorenz.init["y0"] = {0.0, 1.0};
    lorenz.init["z0"] = {0.0, 1.0};
    k = 1;
    for (double rho : {27.75, 27.50, 27.25, 27.00}) {
        auto c1 = lorenz;
        c1.params["rho"] = Interval::point(rho);
        char buf[32];
        std::snprintf(buf, sizeof buf, "rho=%.2f", rho);
        rows.push_back({"lorenz-" + std::to_string(k++), buf, lorenz, c1});
    }
    return rows;
}

}  // namespace picrot::dynamics
