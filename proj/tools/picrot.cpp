// picrot command line: dataset generation, model training and prediction,
// experiment sweeps and rank maps.

#include "picrot/classifier.hpp"
#include "picrot/harness.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace picrot;
using nlohmann::json;

namespace {

json read_json(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream is(path);
    if (!is) throw Error("cannot open config " + path);
    return json::parse(is);
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    return os;
}

std::vector<dynamics::TimeSeries> read_series(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path);
    return harness::read_series_csv(is);
}

// Flags override the config file; empty vectors / unset options leave it alone.
struct SweepFlags {
    std::string config, scale;
    std::vector<std::string> systems;
    std::vector<std::size_t> lengths;
    std::vector<double> noise;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> samples, train_size, test_size, runs, workers;

    void add(CLI::App* app) {
        app->add_option("-c,--config", config, "JSON experiment config");
        app->add_option("--scale", scale, "paper or desk")->check(CLI::IsMember({"paper", "desk"}));
        app->add_option("--systems", systems, "benchmark rows, e.g. henon-3");
        app->add_option("--lengths", lengths, "series lengths");
        app->add_option("--noise", noise, "noise levels in standard deviations");
        app->add_option("--seed", seed, "master seed");
        app->add_option("--samples", samples, "samples per configuration");
        app->add_option("--train-size", train_size);
        app->add_option("--test-size", test_size);
        app->add_option("--runs", runs, "train/test splits per configuration");
        app->add_option("--workers", workers, "worker threads (default: PICROT_WORKERS or all cores)");
    }

    harness::ExperimentFile resolve() const {
        auto j = read_json(config);
        if (!scale.empty()) j["scale"] = scale;
        if (!systems.empty()) j["systems"] = systems;
        if (!lengths.empty()) j["lengths"] = lengths;
        if (!noise.empty()) j["noise"] = noise;
        if (seed) j["master_seed"] = *seed;
        if (samples) j["n_samples"] = *samples;
        if (train_size) j["train_size"] = *train_size;
        if (test_size) j["test_size"] = *test_size;
        if (runs) j["n_runs"] = *runs;
        if (workers) j["workers"] = *workers;
        if (samples && !train_size && !test_size) {
            // keep the scale's test share when only the sample count changes
            auto f = harness::experiment_from_json(json{{"scale", j.value("scale", std::string("desk"))}});
            const auto test = f.sweep.test_size * *samples / f.sweep.n_samples / 2 * 2;
            j["test_size"] = std::max<std::size_t>(test, 2);
            j["train_size"] = *samples - j["test_size"].get<std::size_t>();
        }
        return harness::experiment_from_json(j);
    }
};

int cmd_generate(const SweepFlags& flags, const std::string& out_dir) {
    const auto f = flags.resolve();
    const auto cfgs = harness::expand(f.sweep);
    for (const auto& cfg : cfgs) {
        const auto ds = harness::generate_dataset(cfg);
        auto csv = open_out(fs::path(out_dir) / (cfg.id + ".csv"));
        harness::write_dataset_csv(csv, ds);
        auto js = open_out(fs::path(out_dir) / (cfg.id + ".json"));
        js << harness::manifest(cfg, ds).dump(2) << '\n';
        std::cerr << "wrote " << cfg.id << " (" << ds.series.size() << " series)\n";
    }
    return 0;
}

struct CvFlags {
    std::string config;
    std::vector<std::size_t> d;
    std::vector<double> sigma_cells, lambda_scale, p;
    std::optional<std::size_t> folds, workers;

    void add(CLI::App* app) {
        app->add_option("-c,--config", config, "JSON config (its cv and sinkhorn sections are used)");
        app->add_option("--d", d, "grid sizes");
        app->add_option("--sigma-cells", sigma_cells, "bandwidths in reference cells");
        app->add_option("--lambda-scale", lambda_scale, "regularization in units of the mean ground cost");
        app->add_option("--p", p, "L_p exponents");
        app->add_option("--folds", folds, "cross-validation folds");
        app->add_option("--workers", workers);
    }

    classifier::TrainOptions resolve() const {
        auto j = read_json(config);
        auto& cv = j["cv"];
        if (!cv.is_object()) cv = json::object();
        if (!d.empty()) cv["d"] = d;
        if (!sigma_cells.empty()) cv["sigma_cells"] = sigma_cells;
        if (!lambda_scale.empty()) cv["lambda_scale"] = lambda_scale;
        if (!p.empty()) cv["p"] = p;
        if (folds) cv["folds"] = *folds;
        auto f = harness::experiment_from_json(j);
        auto opt = f.options.picrot;
        opt.workers = workers ? *workers : f.options.workers;
        return opt;
    }
};

int cmd_train(const CvFlags& flags, const std::string& data, const std::string& out_dir, std::uint64_t seed) {
    const auto series = read_series(data);
    const auto opt = flags.resolve();
    classifier::TrainReport report;
    const auto model = classifier::train(series, opt, seed, &report);
    classifier::save_model(model, out_dir);
    auto os = open_out(fs::path(out_dir) / "cv.csv");
    os << "d,sigma_cells,lambda_scale,p,eps_fraction,correct,total,accuracy,not_converged\n";
    for (const auto& c : report.cells)
        os << c.hyper.d << ',' << harness::format_double(c.hyper.sigma_cells) << ','
           << harness::format_double(c.hyper.lambda_scale) << ',' << harness::format_double(c.hyper.p) << ','
           << harness::format_double(c.hyper.eps_fraction) << ',' << c.correct << ',' << c.total << ','
           << harness::format_double(c.accuracy()) << ',' << c.not_converged << '\n';
    std::printf("d=%zu sigma=%g (%g cells) lambda=%g (%g x mean cost) p=%g eps=%g cv_accuracy=%g\n", model.grid.d,
                model.sigma, model.hyper.sigma_cells, model.lambda, model.hyper.lambda_scale, model.p, model.eps,
                model.cv_accuracy);
    return 0;
}

int cmd_predict(const std::string& model_dir, const std::string& data, const std::string& out) {
    const auto model = classifier::load_model(model_dir);
    const auto series = read_series(data);
    std::ofstream file;
    if (!out.empty()) file = open_out(out);
    std::ostream& os = out.empty() ? std::cout : file;
    os << "sample,label";
    for (int c : model.classes) os << ",divergence_" << c;
    os << ",tie,clamped\n";
    classifier::Predictor pred(model);
    std::size_t correct = 0, labelled = 0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto p = pred.predict(series[i]);
        os << i << ',' << p.label;
        for (double d : p.divergences) os << ',' << harness::format_double(d);
        os << ',' << p.tie << ',' << p.clamped << '\n';
        if (series[i].label) {
            ++labelled;
            correct += p.label == *series[i].label;
        }
    }
    if (labelled) std::cerr << "accuracy " << correct << "/" << labelled << '\n';
    return 0;
}

int cmd_experiment(const SweepFlags& flags, const std::vector<std::string>& classifiers, const std::string& out,
                   const std::string& diagnostics, const std::string& summary) {
    auto f = flags.resolve();
    if (!classifiers.empty()) {
        f.options.classifiers.clear();
        for (const auto& c : classifiers) f.options.classifiers.push_back(harness::classifier_from_string(c));
    }
    const auto cfgs = harness::expand(f.sweep);
    std::cerr << cfgs.size() << " configurations, " << f.options.workers << " worker(s)\n";
    std::size_t done = 0;
    const auto results = harness::run_sweep(cfgs, f.options, [&](const auto& cfg, const auto& rs) {
        std::cerr << '[' << ++done << '/' << cfgs.size() << "] " << cfg.id;
        for (const auto& r : rs)
            if (r.run == 0) std::cerr << ' ' << harness::to_string(r.classifier) << '=' << r.accuracy();
        std::cerr << '\n';
    });
    auto os = open_out(out);
    harness::write_results_csv(os, results);
    if (!diagnostics.empty()) {
        auto ds = open_out(diagnostics);
        harness::write_diagnostics_csv(ds, results);
    }
    if (!summary.empty()) {
        auto ss = open_out(summary);
        harness::write_summary_csv(ss, harness::summarize(results));
    }
    return 0;
}

int cmd_rankmap(const std::string& results_path, const std::string& out_dir) {
    std::ifstream is(results_path);
    if (!is) throw Error("cannot open " + results_path);
    const auto results = harness::read_results_csv(is);
    const auto maps = harness::rank_map(results);
    auto csv = open_out(fs::path(out_dir) / "rankmap.csv");
    harness::write_rank_csv(csv, maps);
    std::size_t white = 0, cells = 0;
    for (const auto& m : maps) {
        auto pgm = open_out(fs::path(out_dir) / (m.system + ".pgm"));
        harness::write_rank_pgm(pgm, m);
        std::printf("%-12s white %.3f\n", m.system.c_str(), m.white_fraction());
        for (const auto& row : m.white)
            for (bool w : row) {
                white += w;
                ++cells;
            }
    }
    std::printf("overall white %zu/%zu\n", white, cells);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time series classification with persistence images and regularized optimal transport"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("generate", "Simulate benchmark datasets (CSV + JSON manifest per configuration)");
    SweepFlags gen_flags;
    gen_flags.add(gen);
    std::string gen_out = "datasets";
    gen->add_option("-o,--out", gen_out, "output directory");

    auto* train = app.add_subcommand("train", "Fit a model on a labelled series CSV");
    CvFlags cv_flags;
    cv_flags.add(train);
    std::string train_data, train_out = "model";
    std::uint64_t train_seed = 0;
    train->add_option("data", train_data, "series CSV (sample_id,label,seed,v0,...)")->required();
    train->add_option("-o,--out", train_out, "model directory");
    train->add_option("--seed", train_seed);

    auto* predict = app.add_subcommand("predict", "Label series with a trained model");
    std::string model_dir, predict_data, predict_out;
    predict->add_option("model", model_dir, "model directory")->required();
    predict->add_option("data", predict_data, "series CSV")->required();
    predict->add_option("-o,--out", predict_out, "output CSV (default stdout)");

    auto* exp = app.add_subcommand("experiment", "Run a configuration sweep");
    SweepFlags exp_flags;
    exp_flags.add(exp);
    std::vector<std::string> classifiers;
    std::string exp_out = "results.csv", diag_out, summary_out;
    exp->add_option("--classifiers", classifiers, "subset of picrot, ceps, pent");
    exp->add_option("-o,--out", exp_out, "results CSV");
    exp->add_option("--diagnostics", diag_out, "diagnostics CSV");
    exp->add_option("--summary", summary_out, "per-configuration mean/std CSV");

    auto* rank = app.add_subcommand("rankmap", "Rank-performance maps from a results CSV");
    std::string rank_in, rank_out = "rankmaps";
    rank->add_option("results", rank_in, "results CSV")->required();
    rank->add_option("-o,--out", rank_out, "output directory");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*gen) return cmd_generate(gen_flags, gen_out);
        if (*train) return cmd_train(cv_flags, train_data, train_out, train_seed);
        if (*predict) return cmd_predict(model_dir, predict_data, predict_out);
        if (*exp) return cmd_experiment(exp_flags, classifiers, exp_out, diag_out, summary_out);
        if (*rank) return cmd_rankmap(rank_in, rank_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
