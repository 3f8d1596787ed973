#pragma once

// Experiment sweeps over the benchmark system pairs: dataset generation,
// repeated stratified train/test splits, accuracy records and rank maps.

#include "picrot/baselines.hpp"
#include "picrot/classifier.hpp"
#include "picrot/dynamics.hpp"
#include "picrot/error.hpp"
#include "picrot/parallel.hpp"
#include "picrot/persistence.hpp"
#include "picrot/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <type_traits>
#include <vector>

namespace picrot::harness {

using dynamics::TimeSeries;

enum class Scale { Paper, Desk };

[[nodiscard]] inline Scale scale_from_string(const std::string& s) {
    if (s == "paper") return Scale::Paper;
    if (s == "desk") return Scale::Desk;
    throw ConfigError("unknown scale '" + s + "' (expected paper or desk)");
}

enum class Classifier { Picrot, Ceps, Pent };

[[nodiscard]] inline std::string to_string(Classifier c) {
    switch (c) {
        case Classifier::Picrot: return "picrot";
        case Classifier::Ceps: return "ceps";
        case Classifier::Pent: return "pent";
    }
    return "?";
}

[[nodiscard]] inline Classifier classifier_from_string(const std::string& s) {
    if (s == "picrot") return Classifier::Picrot;
    if (s == "ceps") return Classifier::Ceps;
    if (s == "pent") return Classifier::Pent;
    throw ConfigError("unknown classifier '" + s + "'");
}

inline const std::vector<Classifier> kAllClassifiers{Classifier::Picrot, Classifier::Ceps, Classifier::Pent};

/// Shortest round-trip decimal form; keeps CSVs byte-stable and readable.
[[nodiscard]] inline std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

[[nodiscard]] inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
    return h;
}

struct ExperimentConfig {
    std::string id;
    dynamics::SystemPair pair;
    std::size_t length = 2500;
    double noise = 0.0;
    std::size_t n_samples = 200;
    std::size_t train_size = 170;
    std::size_t test_size = 30;
    std::size_t n_runs = 10;
    std::size_t burn_in = dynamics::kDefaultBurnIn;
    std::uint64_t master_seed = 0;

    void validate() const {
        if (train_size + test_size != n_samples) throw ConfigError(id + ": train_size + test_size != n_samples");
        if (n_samples % 2 || test_size % 2) throw ConfigError(id + ": sample and test counts must be even");
        if (test_size == 0 || train_size == 0) throw ConfigError(id + ": empty train or test split");
        if (n_runs == 0) throw ConfigError(id + ": n_runs must be positive");
        if (length < 4) throw ConfigError(id + ": length must be at least 4");
        if (!(noise >= 0.0)) throw ConfigError(id + ": noise must be nonnegative");
    }

    /// Root of every random stream used by this configuration.
    [[nodiscard]] std::uint64_t seed() const { return child_seed(master_seed, {fnv1a(id)}); }
};

[[nodiscard]] inline std::string config_id(const std::string& system, std::size_t length, double noise) {
    return system + "_L" + std::to_string(length) + "_N" + format_double(noise);
}

/// Grid of the sweep before expansion into configs.
struct SweepSpec {
    std::vector<std::string> systems;  // empty: all benchmark rows
    std::vector<std::size_t> lengths;
    std::vector<double> noise;
    std::size_t n_samples = 0, train_size = 0, test_size = 0, n_runs = 0;
    std::size_t burn_in = dynamics::kDefaultBurnIn;
    std::uint64_t master_seed = 0;
};

[[nodiscard]] inline SweepSpec sweep_for(Scale scale, std::uint64_t master_seed = 0) {
    SweepSpec s;
    s.master_seed = master_seed;
    if (scale == Scale::Paper) {
        s.lengths = {2500, 5000, 7500, 10000, 12500, 15000};
        for (int i = 0; i <= 6; ++i) s.noise.push_back(0.125 * i);
        s.n_samples = 200;
        s.train_size = 170;
        s.test_size = 30;
        s.n_runs = 10;
    } else {
        s.lengths = {2500};
        s.noise = {0.0, 0.375, 0.75};
        s.n_samples = 60;
        s.train_size = 50;
        s.test_size = 10;
        s.n_runs = 3;
    }
    return s;
}

[[nodiscard]] inline std::vector<ExperimentConfig> expand(const SweepSpec& s) {
    const auto pairs = dynamics::benchmark_pairs();
    std::vector<dynamics::SystemPair> chosen;
    if (s.systems.empty()) {
        chosen = pairs;
    } else {
        for (const auto& name : s.systems) {
            auto it = std::find_if(pairs.begin(), pairs.end(), [&](const auto& p) { return p.name == name; });
            if (it == pairs.end()) throw ConfigError("unknown system row '" + name + "'");
            chosen.push_back(*it);
        }
    }
    std::vector<ExperimentConfig> out;
    for (const auto& pair : chosen)
        for (auto length : s.lengths)
            for (double noise : s.noise) {
                ExperimentConfig c;
                c.id = config_id(pair.name, length, noise);
                c.pair = pair;
                c.length = length;
                c.noise = noise;
                c.n_samples = s.n_samples;
                c.train_size = s.train_size;
                c.test_size = s.test_size;
                c.n_runs = s.n_runs;
                c.burn_in = s.burn_in;
                c.master_seed = s.master_seed;
                c.validate();
                out.push_back(std::move(c));
            }
    return out;
}

[[nodiscard]] inline std::vector<ExperimentConfig> enumerate_configs(Scale scale, std::uint64_t master_seed = 0) {
    return expand(sweep_for(scale, master_seed));
}

// ---------------------------------------------------------------- datasets

struct Dataset {
    std::vector<TimeSeries> series;  // alternating labels 0, 1, 0, 1, ...
    std::vector<std::uint64_t> seeds;
};

/// Generates, z-normalizes, then adds noise of `noise` standard deviations.
[[nodiscard]] inline Dataset generate_dataset(const ExperimentConfig& cfg) {
    cfg.validate();
    Dataset ds;
    const std::uint64_t root = child_seed(cfg.seed(), {0x64617461});
    for (std::size_t i = 0; i < cfg.n_samples; ++i) {
        const int label = static_cast<int>(i % 2);
        const std::uint64_t seed = child_seed(root, {i});
        auto ts = dynamics::generate_retrying(label ? cfg.pair.class1 : cfg.pair.class0, cfg.length, cfg.burn_in, seed);
        ts = dynamics::z_normalize(std::move(ts));
        ts = dynamics::add_noise(std::move(ts), cfg.noise, child_seed(seed, {0x6e6f697365}));
        ts.label = label;
        ds.series.push_back(std::move(ts));
        ds.seeds.push_back(seed);
    }
    return ds;
}

inline void write_dataset_csv(std::ostream& os, const Dataset& ds) {
    os << "sample_id,label,seed";
    const std::size_t n = ds.series.empty() ? 0 : ds.series.front().size();
    for (std::size_t j = 0; j < n; ++j) os << ",v" << j;
    os << '\n';
    for (std::size_t i = 0; i < ds.series.size(); ++i) {
        os << i << ',' << ds.series[i].label.value_or(-1) << ',' << ds.seeds[i];
        for (double v : ds.series[i].values) os << ',' << format_double(v);
        os << '\n';
    }
}

/// Reads `sample_id,label,seed,v0,...` rows (label -1 means unlabelled).
/// Also accepts files that only hold value columns after an optional
/// header whose first field is not numeric.
[[nodiscard]] inline std::vector<TimeSeries> read_series_csv(std::istream& is) {
    std::vector<TimeSeries> out;
    std::string line;
    bool with_meta = false, first = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            const auto comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (first) {
            first = false;
            if (fields[0] == "sample_id") {
                with_meta = true;
                continue;
            }
            double probe;
            const auto r = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), probe);
            if (r.ec != std::errc()) continue;  // some other header
        }
        TimeSeries ts;
        std::size_t k = 0;
        if (with_meta) {
            if (fields.size() < 3) throw ConfigError("series CSV row has too few fields");
            const int label = std::stoi(fields[1]);
            if (label >= 0) ts.label = label;
            ts.meta.seed = std::stoull(fields[2]);
            k = 3;
        }
        for (; k < fields.size(); ++k) {
            double v;
            const auto& f = fields[k];
            const auto r = std::from_chars(f.data(), f.data() + f.size(), v);
            if (r.ec != std::errc() || r.ptr != f.data() + f.size())
                throw ConfigError("bad number '" + f + "' in series CSV");
            ts.values.push_back(v);
        }
        out.push_back(std::move(ts));
    }
    return out;
}

[[nodiscard]] inline nlohmann::json to_json(const dynamics::SystemSpec& s) {
    nlohmann::json j;
    j["system"] = dynamics::to_string(s.system);
    j["observable"] = s.observable;
    for (const auto& [k, v] : s.params) j["params"][k] = {v.lo, v.hi};
    for (const auto& [k, v] : s.init) j["init"][k] = {v.lo, v.hi};
    if (s.system == dynamics::System::Lorenz) j["dt"] = s.dt;
    return j;
}

[[nodiscard]] inline nlohmann::json manifest(const ExperimentConfig& cfg, const Dataset& ds) {
    nlohmann::json j;
    j["config_id"] = cfg.id;
    j["system"] = cfg.pair.name;
    j["class1_param"] = cfg.pair.class1_param;
    j["class0"] = to_json(cfg.pair.class0);
    j["class1"] = to_json(cfg.pair.class1);
    j["length"] = cfg.length;
    j["burn_in"] = cfg.burn_in;
    j["noise_sigma"] = cfg.noise;
    j["noise_units"] = "standard deviations of the z-normalized series";
    j["master_seed"] = cfg.master_seed;
    j["generator"] = kGeneratorName;
    j["dt"] = cfg.pair.class0.dt;
    j["seeds"] = ds.seeds;
    std::vector<int> attempts;
    for (const auto& ts : ds.series) attempts.push_back(ts.meta.attempts);
    j["attempts"] = attempts;
    return j;
}

// ---------------------------------------------------------------- runs

struct Split {
    std::vector<std::size_t> train, test;
    std::uint64_t hash = 0;  // of the sorted training indices
};

/// Balanced split: test_size/2 samples of each class, drawn from the run's
/// stream; everything else is training data.
[[nodiscard]] inline Split stratified_split(std::span<const TimeSeries> data, std::size_t test_size,
                                            std::uint64_t seed) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < data.size(); ++i) by_class[data[i].label.value_or(-1)].push_back(i);
    const std::size_t per_class = test_size / by_class.size();
    if (per_class * by_class.size() != test_size) throw ConfigError("test size does not divide across classes");
    Split s;
    for (auto& [label, idx] : by_class) {
        if (idx.size() <= per_class) throw ConfigError("class too small for the requested test size");
        Rng rng(child_seed(seed, {static_cast<std::uint64_t>(static_cast<std::int64_t>(label))}));
        rng.shuffle(idx.begin(), idx.end());
        s.test.insert(s.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_class));
        s.train.insert(s.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(per_class), idx.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto i : s.train) h = (h ^ i) * 0x100000001b3ULL;
    s.hash = h;
    return s;
}

struct RunResult {
    std::string config_id, system, class1_param;
    std::size_t length = 0;
    double noise = 0.0;
    std::size_t run = 0;
    Classifier classifier = Classifier::Picrot;
    std::size_t correct = 0, test_size = 0;
    double seconds = 0.0;
    std::size_t error_count = 0;
    // diagnostics
    std::uint64_t split_hash = 0;
    std::size_t ties = 0, clamped = 0, not_converged = 0;
    std::string error_message;
    classifier::Hyperparameters hyper;
    double cv_accuracy = 0.0;

    [[nodiscard]] double accuracy() const { return static_cast<double>(correct) / static_cast<double>(test_size); }
};

struct ExperimentOptions {
    std::vector<Classifier> classifiers = kAllClassifiers;
    classifier::TrainOptions picrot;
    std::size_t workers = 1;
};

namespace detail {

struct Outcome {
    std::size_t correct = 0, errors = 0, ties = 0, clamped = 0, not_converged = 0;
    std::string message;
    classifier::Hyperparameters hyper;
    double cv_accuracy = 0.0;
};

/// Scores predict(i) on the test set; any library error on a sample is a
/// coin flip from `coin`.
template <class Predict>
void score(std::span<const TimeSeries> test, Rng& coin, Outcome& out, Predict&& predict) {
    for (std::size_t i = 0; i < test.size(); ++i) {
        int label;
        try {
            label = predict(test[i]);
        } catch (const Error& e) {
            ++out.errors;
            if (out.message.empty()) out.message = e.what();
            label = static_cast<int>(coin.below(2));
        }
        out.correct += label == *test[i].label;
    }
}

inline void coin_flips(std::span<const TimeSeries> test, Rng& coin, Outcome& out, const std::string& why) {
    out.message = why;
    for (const auto& ts : test) {
        ++out.errors;
        out.correct += static_cast<int>(coin.below(2)) == *ts.label;
    }
}

inline Outcome evaluate(Classifier which, std::span<const TimeSeries> train, std::span<const TimeSeries> test,
                        const ExperimentOptions& opt, std::uint64_t seed) {
    Outcome out;
    Rng coin(child_seed(seed, {0x636f696e}));
    switch (which) {
        case Classifier::Picrot: {
            classifier::PicrotModel model;
            try {
                auto topt = opt.picrot;
                topt.workers = 1;
                classifier::TrainReport report;
                model = classifier::train(train, topt, child_seed(seed, {0x747261696e}), &report);
                for (const auto& c : report.cells) out.not_converged += c.not_converged;
            } catch (const Error& e) {
                coin_flips(test, coin, out, e.what());
                return out;
            }
            out.hyper = model.hyper;
            out.cv_accuracy = model.cv_accuracy;
            classifier::Predictor pred(model);
            score(test, coin, out, [&](const TimeSeries& q) {
                const auto p = pred.predict(q);
                out.ties += p.tie;
                out.clamped += p.clamped;
                out.not_converged += !p.converged;
                return p.label;
            });
            return out;
        }
        case Classifier::Ceps: {
            baselines::CepsClassifier c;
            try {
                c.fit(train);
            } catch (const Error& e) {
                coin_flips(test, coin, out, e.what());
                return out;
            }
            score(test, coin, out, [&](const TimeSeries& q) { return c.predict(q); });
            return out;
        }
        case Classifier::Pent: {
            baselines::PentClassifier c;
            try {
                c.fit(train);
            } catch (const Error& e) {
                coin_flips(test, coin, out, e.what());
                return out;
            }
            score(test, coin, out, [&](const TimeSeries& q) { return c.predict(q); });
            return out;
        }
    }
    return out;
}

}  // namespace detail

/// All runs of one configuration, ordered by run then classifier.
[[nodiscard]] inline std::vector<RunResult> run_experiment(const ExperimentConfig& cfg, const ExperimentOptions& opt) {
    const auto ds = generate_dataset(cfg);
    std::vector<RunResult> results;
    for (std::size_t run = 0; run < cfg.n_runs; ++run) {
        const std::uint64_t run_seed = child_seed(cfg.seed(), {0x72756e, run});
        const auto split = stratified_split(ds.series, cfg.test_size, child_seed(run_seed, {0x73706c6974}));
        std::vector<TimeSeries> train, test;
        for (auto i : split.train) train.push_back(ds.series[i]);
        for (auto i : split.test) test.push_back(ds.series[i]);
        for (auto which : opt.classifiers) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto o = detail::evaluate(which, train, test, opt,
                                            child_seed(run_seed, {static_cast<std::uint64_t>(which)}));
            const auto t1 = std::chrono::steady_clock::now();
            RunResult r;
            r.config_id = cfg.id;
            r.system = cfg.pair.name;
            r.class1_param = cfg.pair.class1_param;
            r.length = cfg.length;
            r.noise = cfg.noise;
            r.run = run;
            r.classifier = which;
            r.correct = o.correct;
            r.test_size = test.size();
            r.seconds = std::chrono::duration<double>(t1 - t0).count();
            r.error_count = o.errors;
            r.split_hash = split.hash;
            r.ties = o.ties;
            r.clamped = o.clamped;
            r.not_converged = o.not_converged;
            r.error_message = o.message;
            r.hyper = o.hyper;
            r.cv_accuracy = o.cv_accuracy;
            results.push_back(std::move(r));
        }
    }
    return results;
}

/// Runs configs concurrently; results come back in config order. The
/// optional callback is invoked (serialized) as each config finishes.
template <class OnDone = std::nullptr_t>
[[nodiscard]] std::vector<RunResult> run_sweep(std::span<const ExperimentConfig> configs,
                                               const ExperimentOptions& opt, OnDone on_done = nullptr) {
    std::vector<std::vector<RunResult>> per_config(configs.size());
    std::mutex collector;
    parallel_for(configs.size(), opt.workers, [&](std::size_t i) {
        auto r = run_experiment(configs[i], opt);
        std::lock_guard lock(collector);
        if constexpr (!std::is_same_v<OnDone, std::nullptr_t>) on_done(configs[i], r);
        per_config[i] = std::move(r);
    });
    std::vector<RunResult> out;
    for (auto& v : per_config)
        for (auto& r : v) out.push_back(std::move(r));
    return out;
}

// ---------------------------------------------------------------- reports

inline constexpr const char* kResultsHeader =
    "config_id,system,class1_param,length,noise,run,classifier,accuracy,seconds,error_count";

inline void write_results_header(std::ostream& os) { os << kResultsHeader << '\n'; }

inline void write_result_row(std::ostream& os, const RunResult& r) {
    os << r.config_id << ',' << r.system << ',' << r.class1_param << ',' << r.length << ',' << format_double(r.noise)
       << ',' << r.run << ',' << to_string(r.classifier) << ',' << format_double(r.accuracy()) << ','
       << format_double(r.seconds) << ',' << r.error_count << '\n';
}

inline void write_results_csv(std::ostream& os, std::span<const RunResult> results) {
    write_results_header(os);
    for (const auto& r : results) write_result_row(os, r);
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        f.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) return f;
        start = comma + 1;
    }
}

}  // namespace detail

/// Reads a results CSV back. test_size is not stored, so correct is
/// recovered with test_size = 1 and accuracy kept exact via the ratio.
[[nodiscard]] inline std::vector<RunResult> read_results_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kResultsHeader) throw ConfigError("not a results CSV (bad header)");
    std::vector<RunResult> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto f = detail::split_csv(line);
        if (f.size() != 10) throw ConfigError("results row has " + std::to_string(f.size()) + " fields");
        RunResult r;
        r.config_id = f[0];
        r.system = f[1];
        r.class1_param = f[2];
        r.length = std::stoull(f[3]);
        r.noise = std::stod(f[4]);
        r.run = std::stoull(f[5]);
        r.classifier = classifier_from_string(f[6]);
        // Accuracies are k / test_size; store as a fraction over 1e6 so
        // means stay exact enough for rank comparisons.
        r.test_size = 1000000;
        r.correct = static_cast<std::size_t>(std::llround(std::stod(f[7]) * 1e6));
        r.seconds = std::stod(f[8]);
        r.error_count = std::stoull(f[9]);
        out.push_back(std::move(r));
    }
    return out;
}

inline void write_diagnostics_csv(std::ostream& os, std::span<const RunResult> results) {
    os << "config_id,run,classifier,split_hash,ties,clamped,not_converged,d,sigma_cells,lambda_scale,p,eps_fraction,"
          "cv_accuracy,error\n";
    for (const auto& r : results) {
        std::string msg = r.error_message;
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        os << r.config_id << ',' << r.run << ',' << to_string(r.classifier) << ',' << r.split_hash << ',' << r.ties
           << ',' << r.clamped << ',' << r.not_converged << ',';
        if (r.classifier == Classifier::Picrot)
            os << r.hyper.d << ',' << format_double(r.hyper.sigma_cells) << ',' << format_double(r.hyper.lambda_scale)
               << ',' << format_double(r.hyper.p) << ',' << format_double(r.hyper.eps_fraction) << ','
               << format_double(r.cv_accuracy);
        else
            os << ",,,,,";
        os << ',' << msg << '\n';
    }
}

/// Mean and standard deviation of accuracy over runs.
struct Summary {
    std::string config_id, system, class1_param;
    std::size_t length = 0;
    double noise = 0.0;
    Classifier classifier = Classifier::Picrot;
    double mean = 0.0, stddev = 0.0;
    std::size_t runs = 0;
};

[[nodiscard]] inline std::vector<Summary> summarize(std::span<const RunResult> results) {
    std::map<std::pair<std::string, int>, std::vector<const RunResult*>> groups;
    std::vector<std::pair<std::string, int>> order;
    for (const auto& r : results) {
        const auto key = std::make_pair(r.config_id, static_cast<int>(r.classifier));
        auto [it, fresh] = groups.try_emplace(key);
        if (fresh) order.push_back(key);
        it->second.push_back(&r);
    }
    std::vector<Summary> out;
    for (const auto& key : order) {
        const auto& g = groups[key];
        Summary s;
        s.config_id = g.front()->config_id;
        s.system = g.front()->system;
        s.class1_param = g.front()->class1_param;
        s.length = g.front()->length;
        s.noise = g.front()->noise;
        s.classifier = g.front()->classifier;
        s.runs = g.size();
        for (const auto* r : g) s.mean += r->accuracy();
        s.mean /= static_cast<double>(g.size());
        for (const auto* r : g) s.stddev += (r->accuracy() - s.mean) * (r->accuracy() - s.mean);
        s.stddev = std::sqrt(s.stddev / static_cast<double>(g.size()));
        out.push_back(s);
    }
    return out;
}

inline void write_summary_csv(std::ostream& os, std::span<const Summary> rows) {
    os << "config_id,system,class1_param,length,noise,classifier,mean_accuracy,std_accuracy,runs\n";
    for (const auto& s : rows)
        os << s.config_id << ',' << s.system << ',' << s.class1_param << ',' << s.length << ','
           << format_double(s.noise) << ',' << to_string(s.classifier) << ',' << format_double(s.mean) << ','
           << format_double(s.stddev) << ',' << s.runs << '\n';
}

/// Figure-style map for one system row: rows are noise levels (ascending),
/// columns are lengths (ascending). white[r][c] iff PICROT's mean accuracy
/// beats both baselines strictly.
struct RankMap {
    std::string system;
    std::vector<double> noise;
    std::vector<std::size_t> lengths;
    std::vector<std::vector<bool>> white;
    std::vector<std::vector<std::array<double, 3>>> means;  // picrot, ceps, pent

    [[nodiscard]] double white_fraction() const {
        std::size_t w = 0, n = 0;
        for (const auto& row : white)
            for (bool b : row) {
                w += b;
                ++n;
            }
        return n ? static_cast<double>(w) / n : 0.0;
    }
};

[[nodiscard]] inline std::vector<RankMap> rank_map(std::span<const RunResult> results) {
    const auto summary = summarize(results);
    std::set<double> noises;
    std::set<std::size_t> lengths;
    std::vector<std::string> systems;
    std::map<std::tuple<std::string, std::size_t, double, int>, double> mean;
    for (const auto& s : summary) {
        noises.insert(s.noise);
        lengths.insert(s.length);
        if (std::find(systems.begin(), systems.end(), s.system) == systems.end()) systems.push_back(s.system);
        mean[{s.system, s.length, s.noise, static_cast<int>(s.classifier)}] = s.mean;
    }
    std::vector<std::string> missing;
    std::vector<RankMap> maps;
    for (const auto& sys : systems) {
        RankMap m;
        m.system = sys;
        m.noise.assign(noises.begin(), noises.end());
        m.lengths.assign(lengths.begin(), lengths.end());
        for (double nz : m.noise) {
            std::vector<bool> row;
            std::vector<std::array<double, 3>> mrow;
            for (auto len : m.lengths) {
                std::array<double, 3> v{};
                bool ok = true;
                for (auto c : kAllClassifiers) {
                    auto it = mean.find({sys, len, nz, static_cast<int>(c)});
                    if (it == mean.end()) {
                        missing.push_back(config_id(sys, len, nz) + "/" + to_string(c));
                        ok = false;
                    } else {
                        v[static_cast<int>(c)] = it->second;
                    }
                }
                row.push_back(ok && v[0] > v[1] && v[0] > v[2]);
                mrow.push_back(v);
            }
            m.white.push_back(std::move(row));
            m.means.push_back(std::move(mrow));
        }
        maps.push_back(std::move(m));
    }
    if (!missing.empty()) {
        std::string msg = "rank map grid is incomplete; missing:";
        for (const auto& s : missing) msg += " " + s;
        throw ConfigError(msg);
    }
    return maps;
}

/// 8-bit PGM, one pixel per cell, highest noise on the top row.
inline void write_rank_pgm(std::ostream& os, const RankMap& m) {
    os << "P5\n" << m.lengths.size() << ' ' << m.noise.size() << "\n255\n";
    for (std::size_t r = m.noise.size(); r-- > 0;)
        for (bool w : m.white[r]) os.put(static_cast<char>(w ? 255 : 0));
}

inline void write_rank_csv(std::ostream& os, std::span<const RankMap> maps) {
    os << "system,length,noise,picrot,ceps,pent,white\n";
    for (const auto& m : maps)
        for (std::size_t r = 0; r < m.noise.size(); ++r)
            for (std::size_t c = 0; c < m.lengths.size(); ++c) {
                const auto& v = m.means[r][c];
                os << m.system << ',' << m.lengths[c] << ',' << format_double(m.noise[r]) << ','
                   << format_double(v[0]) << ',' << format_double(v[1]) << ',' << format_double(v[2]) << ','
                   << (m.white[r][c] ? 1 : 0) << '\n';
            }
}

// ---------------------------------------------------------------- config

/// Experiment configuration file. Every key is optional:
///   scale, master_seed, systems, lengths, noise, n_samples, train_size,
///   test_size, n_runs, burn_in, classifiers, workers,
///   cv {d, sigma_cells, lambda_scale, p, eps_fraction, folds},
///   sinkhorn {tol, max_iter}
struct ExperimentFile {
    SweepSpec sweep;
    ExperimentOptions options;
};

[[nodiscard]] inline ExperimentFile experiment_from_json(const nlohmann::json& j) {
    ExperimentFile f;
    const Scale scale = scale_from_string(j.value("scale", std::string("desk")));
    f.sweep = sweep_for(scale, j.value("master_seed", std::uint64_t{0}));
    auto& s = f.sweep;
    if (j.contains("systems")) s.systems = j["systems"].get<std::vector<std::string>>();
    if (j.contains("lengths")) s.lengths = j["lengths"].get<std::vector<std::size_t>>();
    if (j.contains("noise")) s.noise = j["noise"].get<std::vector<double>>();
    s.n_samples = j.value("n_samples", s.n_samples);
    s.train_size = j.value("train_size", s.train_size);
    s.test_size = j.value("test_size", s.test_size);
    s.n_runs = j.value("n_runs", s.n_runs);
    s.burn_in = j.value("burn_in", s.burn_in);
    auto& o = f.options;
    o.workers = j.value("workers", default_workers());
    if (j.contains("classifiers")) {
        o.classifiers.clear();
        for (const auto& c : j["classifiers"]) o.classifiers.push_back(classifier_from_string(c.get<std::string>()));
    }
    if (scale == Scale::Desk) {
        o.picrot.cv.d = {16};
        o.picrot.cv.lambda_scale = {0.05, 0.1, 0.5, 1.0};
    }
    if (j.contains("cv")) {
        const auto& c = j["cv"];
        auto& cv = o.picrot.cv;
        if (c.contains("d")) cv.d = c["d"].get<std::vector<std::size_t>>();
        if (c.contains("sigma_cells")) cv.sigma_cells = c["sigma_cells"].get<std::vector<double>>();
        if (c.contains("lambda_scale")) cv.lambda_scale = c["lambda_scale"].get<std::vector<double>>();
        if (c.contains("p")) cv.p = c["p"].get<std::vector<double>>();
        if (c.contains("eps_fraction")) cv.eps_fraction = c["eps_fraction"].get<std::vector<double>>();
        cv.folds = c.value("folds", cv.folds);
    }
    if (j.contains("sinkhorn")) {
        o.picrot.sinkhorn.tol = j["sinkhorn"].value("tol", o.picrot.sinkhorn.tol);
        o.picrot.sinkhorn.max_iter = j["sinkhorn"].value("max_iter", o.picrot.sinkhorn.max_iter);
    }
    o.picrot.cv.validate();
    return f;
}

}  // namespace picrot::harness
