#pragma once

// Benchmark classifiers: 1-NN on cepstral DCT coefficients (CEPS) and 1-NN
// on persistent entropy (PENT).

#include "picrot/dynamics.hpp"
#include "picrot/error.hpp"
#include "picrot/fft.hpp"
#include "picrot/persistence.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace picrot::baselines {

using dynamics::TimeSeries;

struct CepstralVector {
    std::vector<double> coeffs;
};

struct EntropyFeature {
    double pent = 0.0;
};

/// Relative floor added to the power spectrum before the logarithm.
inline constexpr double kSpectralFloor = 1e-12;

/// DCT(|IFFT(log(|FFT(t)|^2 + floor))|^2), orthonormal DCT-II.
[[nodiscard]] inline CepstralVector cepstrum_features(std::span<const double> t) {
    if (t.size() < 4) throw ConfigError("cepstrum needs at least 4 samples");
    if (std::all_of(t.begin(), t.end(), [](double v) { return v == 0.0; }))
        throw ConfigError("cepstrum of an all-zero series is undefined");
    for (double v : t)
        if (!std::isfinite(v)) throw NonFiniteError("series contains a non-finite value");

    const auto spectrum = fft::forward_real(t);
    std::vector<double> power(spectrum.size());
    double peak = 0.0;
    for (std::size_t k = 0; k < spectrum.size(); ++k) peak = std::max(peak, power[k] = std::norm(spectrum[k]));
    const double floor = kSpectralFloor * peak;
    std::vector<std::complex<double>> log_power(power.size());
    for (std::size_t k = 0; k < power.size(); ++k) log_power[k] = std::log(power[k] + floor);
    const auto ceps = fft::inverse(log_power);
    std::vector<double> sq(ceps.size());
    for (std::size_t k = 0; k < ceps.size(); ++k) sq[k] = std::norm(ceps[k]);
    return {fft::dct2(sq)};
}

[[nodiscard]] inline CepstralVector cepstrum_features(const TimeSeries& ts) { return cepstrum_features(ts.values); }

[[nodiscard]] inline double ceps_distance(const CepstralVector& a, const CepstralVector& b) {
    if (a.coeffs.size() != b.coeffs.size()) throw ConfigError("cepstra have different lengths");
    double s = 0.0;
    for (std::size_t i = 0; i < a.coeffs.size(); ++i) s += (a.coeffs[i] - b.coeffs[i]) * (a.coeffs[i] - b.coeffs[i]);
    return std::sqrt(s);
}

/// Shannon entropy of the persistence-normalized lifetimes.
[[nodiscard]] inline EntropyFeature persistent_entropy(const persistence::PersistenceDiagram& pd) {
    const double total = persistence::total_persistence(pd);
    if (pd.empty() || !(total > 0.0)) throw EmptyDensityError("persistent entropy of an empty diagram");
    double h = 0.0;
    for (const auto& p : pd.points) {
        const double q = p.persistence / total;
        if (q > 0.0) h -= q * std::log(q);
    }
    return {std::max(h, 0.0)};
}

[[nodiscard]] inline double pent_distance(const EntropyFeature& a, const EntropyFeature& b) {
    return std::abs(a.pent - b.pent);
}

/// Index of the nearest training feature; ties go to the lowest index.
template <class Feature, class Distance>
[[nodiscard]] std::size_t nearest_index(std::span<const Feature> train, const Feature& q, Distance dist) {
    if (train.empty()) throw ConfigError("1-NN needs a nonempty training set");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < train.size(); ++i) {
        const double d = dist(train[i], q);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

/// 1-NN over precomputed cepstra.
class CepsClassifier {
public:
    void fit(std::span<const TimeSeries> train) {
        if (train.empty()) throw ConfigError("1-NN needs a nonempty training set");
        features_.clear();
        labels_.clear();
        for (const auto& ts : train) {
            if (!ts.label) throw ConfigError("training series must be labelled");
            if (ts.size() != train.front().size()) throw ConfigError("CEPS needs equal-length series");
            features_.push_back(cepstrum_features(ts));
            labels_.push_back(*ts.label);
        }
    }

    [[nodiscard]] int predict(const TimeSeries& q) const {
        if (features_.empty()) throw ConfigError("classifier is not fitted");
        if (q.size() != features_.front().coeffs.size()) throw ConfigError("CEPS needs equal-length series");
        const auto f = cepstrum_features(q);
        return labels_[nearest_index<CepstralVector>(features_, f, ceps_distance)];
    }

private:
    std::vector<CepstralVector> features_;
    std::vector<int> labels_;
};

/// 1-NN over persistent entropies. Training series whose diagram is empty
/// carry no entropy and are left out of the neighbour pool.
class PentClassifier {
public:
    void fit(std::span<const TimeSeries> train) {
        if (train.empty()) throw ConfigError("1-NN needs a nonempty training set");
        features_.clear();
        labels_.clear();
        skipped_ = 0;
        for (const auto& ts : train) {
            if (!ts.label) throw ConfigError("training series must be labelled");
            try {
                features_.push_back(persistent_entropy(persistence::sublevel_diagram(ts.values)));
                labels_.push_back(*ts.label);
            } catch (const EmptyDensityError&) {
                ++skipped_;
            }
        }
        if (features_.empty()) throw TrainingError("no training series has a nonempty diagram");
    }

    [[nodiscard]] int predict(const TimeSeries& q) const {
        if (features_.empty()) throw ConfigError("classifier is not fitted");
        const auto f = persistent_entropy(persistence::sublevel_diagram(q.values));
        return labels_[nearest_index<EntropyFeature>(features_, f, pent_distance)];
    }

    [[nodiscard]] std::size_t skipped() const noexcept { return skipped_; }

private:
    std::vector<EntropyFeature> features_;
    std::vector<int> labels_;
    std::size_t skipped_ = 0;
};

[[nodiscard]] inline int knn1_ceps(std::span<const TimeSeries> train, const TimeSeries& q) {
    CepsClassifier c;
    c.fit(train);
    return c.predict(q);
}

[[nodiscard]] inline int knn1_pent(std::span<const TimeSeries> train, const TimeSeries& q) {
    PentClassifier c;
    c.fit(train);
    return c.predict(q);
}

}  // namespace picrot::baselines
