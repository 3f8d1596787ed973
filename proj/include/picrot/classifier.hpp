#pragma once

// Persistence image classification with regularized optimal transport.
//
// Training overlays the sublevel diagrams of each class, smooths the overlay
// into a normalized persistence image on a grid shared by all classes, and
// picks (d, sigma, lambda, p, eps) by stratified k-fold cross-validation.
// Prediction images the query diagram on the model grid and returns the
// class whose image is nearest in Sinkhorn divergence.

#include "picrot/density.hpp"
#include "picrot/dynamics.hpp"
#include "picrot/error.hpp"
#include "picrot/parallel.hpp"
#include "picrot/persistence.hpp"
#include "picrot/rng.hpp"
#include "picrot/transport.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace picrot::classifier {

using density::GridSpec;
using density::PersistenceImage;
using density::Quantization;
using dynamics::TimeSeries;
using persistence::PersistenceDiagram;
using transport::SinkhornOptions;

/// Candidate values searched by cross-validation. sigma is given in units of
/// the reference cell (unpadded data extent / d), lambda in units of the mean
/// ground cost, eps as a fraction of the smallest training persistence.
struct CvGrid {
    std::vector<std::size_t> d{16, 32, 64};
    std::vector<double> sigma_cells{0.5, 1.0, 2.0};
    std::vector<double> lambda_scale{0.05, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0};
    std::vector<double> p{1.0, 2.0};
    std::vector<double> eps_fraction{0.5};
    std::size_t folds = 5;

    void validate() const {
        if (d.empty() || sigma_cells.empty() || lambda_scale.empty() || p.empty() || eps_fraction.empty())
            throw ConfigError("every cross-validation candidate list must be nonempty");
        if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
        for (auto v : d)
            if (v == 0) throw ConfigError("grid size must be positive");
        for (auto* list : {&sigma_cells, &lambda_scale, &eps_fraction})
            for (double v : *list)
                if (!(v > 0.0)) throw ConfigError("cross-validation candidates must be positive");
        for (double v : p)
            if (!(v >= 1.0)) throw ConfigError("L_p exponent must be at least 1");
    }

    [[nodiscard]] std::size_t combinations() const {
        return d.size() * sigma_cells.size() * lambda_scale.size() * p.size() * eps_fraction.size();
    }
};

struct Hyperparameters {
    std::size_t d = 32;
    double sigma_cells = 1.0;
    double lambda_scale = 1.0;
    double p = 2.0;
    double eps_fraction = 0.5;

    friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

struct PicrotModel {
    std::vector<int> classes;                  // sorted
    std::vector<PersistenceImage> class_images;  // parallel to classes, normalized
    GridSpec grid;
    double sigma = 0.0;
    double eps = 0.0;
    double lambda = 0.0;
    double p = 2.0;
    std::uint64_t tie_seed = 0;
    Hyperparameters hyper;
    double cv_accuracy = 0.0;
    Quantization quantization;
    SinkhornOptions sinkhorn;
};

struct TrainOptions {
    CvGrid cv;
    Quantization quantization;
    SinkhornOptions sinkhorn;
    std::size_t workers = 1;
};

/// One evaluated hyperparameter combination.
struct CvCell {
    Hyperparameters hyper;
    std::size_t correct = 0;
    std::size_t total = 0;
    std::size_t not_converged = 0;

    [[nodiscard]] double accuracy() const { return total ? static_cast<double>(correct) / total : 0.0; }
};

struct TrainReport {
    std::vector<CvCell> cells;
    std::size_t selected = 0;
};

/// Data extent divided by d; sigma candidates are multiples of this.
[[nodiscard]] inline double reference_cell(const PersistenceDiagram& all, std::size_t d) {
    double bmin = INFINITY, bmax = -INFINITY, pmax = 0.0;
    for (const auto& p : all.points) {
        bmin = std::min(bmin, p.birth);
        bmax = std::max(bmax, p.birth);
        pmax = std::max(pmax, p.persistence);
    }
    const double extent = std::max(bmax - bmin, pmax);
    if (!(extent > 0.0)) throw EmptyDensityError("training diagrams carry no extent");
    return extent / static_cast<double>(d);
}

struct ClampResult {
    PersistenceDiagram diagram;
    std::size_t clamped = 0;
};

/// Moves each coordinate that falls outside the grid onto the centre of the
/// nearest boundary cell. Inside points are untouched.
[[nodiscard]] inline ClampResult clamp_to_grid(const PersistenceDiagram& pd, const GridSpec& grid) {
    ClampResult out;
    out.diagram.points.reserve(pd.size());
    for (auto pt : pd.points) {
        bool moved = false;
        if (pt.birth < grid.b_min) {
            pt.birth = grid.col_center(0);
            moved = true;
        } else if (pt.birth > grid.b_max) {
            pt.birth = grid.col_center(grid.d - 1);
            moved = true;
        }
        if (pt.persistence < grid.p_min) {
            pt.persistence = grid.row_center(0);
            moved = true;
        } else if (pt.persistence > grid.p_max) {
            pt.persistence = grid.row_center(grid.d - 1);
            moved = true;
        }
        out.clamped += moved;
        out.diagram.points.push_back(pt);
    }
    return out;
}

/// Class densities for fixed hyperparameters (lambda is not used here).
struct ClassImages {
    std::vector<int> classes;
    std::vector<PersistenceImage> images;
    GridSpec grid;
    double sigma = 0.0;
    double eps = 0.0;
};

[[nodiscard]] inline ClassImages build_class_images(std::span<const PersistenceDiagram> diagrams,
                                                    std::span<const int> labels, const Hyperparameters& hp,
                                                    const Quantization& q) {
    if (diagrams.size() != labels.size()) throw ConfigError("diagrams and labels differ in length");
    ClassImages out;
    out.classes.assign(labels.begin(), labels.end());
    std::sort(out.classes.begin(), out.classes.end());
    out.classes.erase(std::unique(out.classes.begin(), out.classes.end()), out.classes.end());
    if (out.classes.size() < 2) throw TrainingError("training data must contain at least two classes");

    std::vector<PersistenceDiagram> per_class(out.classes.size());
    for (std::size_t i = 0; i < diagrams.size(); ++i) {
        const auto k = static_cast<std::size_t>(
            std::lower_bound(out.classes.begin(), out.classes.end(), labels[i]) - out.classes.begin());
        auto& dst = per_class[k].points;
        dst.insert(dst.end(), diagrams[i].points.begin(), diagrams[i].points.end());
    }
    for (std::size_t k = 0; k < per_class.size(); ++k)
        if (per_class[k].empty())
            throw TrainingError("class " + std::to_string(out.classes[k]) + " has only empty diagrams");

    const auto all = density::overlay(per_class);
    out.sigma = hp.sigma_cells * reference_cell(all, hp.d);
    out.grid = density::fit_grid(per_class, hp.d, out.sigma);
    out.eps = density::default_eps(all, hp.eps_fraction);
    for (const auto& pd : per_class)
        out.images.push_back(density::normalize(density::persistence_image(pd, out.grid, out.sigma, out.eps, q)));
    return out;
}

/// Normalized image of a query diagram on a fixed grid.
[[nodiscard]] inline PersistenceImage query_image(const PersistenceDiagram& pd, const GridSpec& grid, double sigma,
                                                  double eps, const Quantization& q, std::size_t* clamped = nullptr) {
    if (pd.empty()) throw EmptyDensityError("query diagram is empty");
    const auto c = clamp_to_grid(pd, grid);
    if (clamped) *clamped = c.clamped;
    return density::normalize(density::persistence_image(c.diagram, grid, sigma, eps, q));
}

struct Prediction {
    int label = 0;
    std::vector<double> divergences;  // parallel to model classes
    bool tie = false;
    std::size_t clamped = 0;
    bool converged = true;
};

/// Stable 64-bit key of a series' values, used to seed tie-breaks.
[[nodiscard]] inline std::uint64_t series_key(std::span<const double> values) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        h = (h ^ bits) * 0x100000001b3ULL;
    }
    return h;
}

/// Index of the smallest divergence; an exact tie is broken uniformly at
/// random from the stream child_seed(seed, {key}).
[[nodiscard]] inline std::size_t choose_nearest(std::span<const double> divergences, std::uint64_t seed,
                                                std::uint64_t key, bool* tie = nullptr) {
    const double best = *std::min_element(divergences.begin(), divergences.end());
    std::vector<std::size_t> tied;
    for (std::size_t k = 0; k < divergences.size(); ++k)
        if (divergences[k] == best) tied.push_back(k);
    if (tie) *tie = tied.size() > 1;
    if (tied.size() == 1) return tied.front();
    Rng rng(child_seed(seed, {key}));
    return tied[rng.below(tied.size())];
}

/// Sinkhorn divergences of one histogram against a fixed set of class
/// histograms on one grid. Holds FFT state, so one instance per thread.
class DivergenceEngine {
public:
    DivergenceEngine(const GridSpec& grid, double p, double lambda, const SinkhornOptions& opt)
        : cost_(grid, p), lambda_(lambda), opt_(opt) {
        const bool tiny = lambda < opt.log_domain_ratio * cost_.max() ||
                          std::exp(-cost_.min_positive() / lambda) == 0.0;
        if (!tiny && opt.mode != transport::SinkhornMode::LogDomain)
            kernel_.emplace(cost_, lambda, transport::KernelMethod::Fft);
    }

    [[nodiscard]] const transport::GroundCost& cost() const noexcept { return cost_; }

    transport::SinkhornResult divergence(std::span<const double> r, std::span<const double> c) {
        if (kernel_) {
            auto o = opt_;
            o.mode = transport::SinkhornMode::Standard;
            try {
                return transport::sinkhorn(*kernel_, r, c, o);
            } catch (const NumericalUnderflowError&) {
                if (opt_.mode == transport::SinkhornMode::Standard) throw;
            }
        }
        auto o = opt_;
        o.mode = transport::SinkhornMode::LogDomain;
        return transport::sinkhorn_divergence(r, c, cost_, lambda_, o);
    }

private:
    transport::GroundCost cost_;
    double lambda_;
    SinkhornOptions opt_;
    std::optional<transport::GridKernel> kernel_;
};

/// Binds a model to reusable transport state. Not thread-safe; create one
/// per thread.
class Predictor {
public:
    explicit Predictor(const PicrotModel& model)
        : model_(model), engine_(model.grid, model.p, model.lambda, model.sinkhorn) {}

    [[nodiscard]] Prediction predict_diagram(const PersistenceDiagram& pd, std::uint64_t tie_key) {
        Prediction out;
        const auto img = query_image(pd, model_.grid, model_.sigma, model_.eps, model_.quantization, &out.clamped);
        for (const auto& cls : model_.class_images) {
            const auto res = engine_.divergence(img.pixels, cls.pixels);
            out.divergences.push_back(res.divergence);
            out.converged = out.converged && res.converged;
        }
        out.label = model_.classes[choose_nearest(out.divergences, model_.tie_seed, tie_key, &out.tie)];
        return out;
    }

    [[nodiscard]] Prediction predict(const TimeSeries& q) {
        return predict_diagram(persistence::sublevel_diagram(q.values), series_key(q.values));
    }

private:
    const PicrotModel& model_;
    DivergenceEngine engine_;
};

[[nodiscard]] inline Prediction predict(const PicrotModel& model, const TimeSeries& q) {
    Predictor p(model);
    return p.predict(q);
}

/// Fold index per sample: each class is shuffled separately and dealt round
/// robin, so every fold sees every class.
[[nodiscard]] inline std::vector<std::size_t> stratified_folds(std::span<const int> labels, std::size_t k,
                                                               std::uint64_t seed) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    std::vector<std::size_t> fold(labels.size());
    for (auto& [label, idx] : by_class) {
        if (idx.size() < k)
            throw StratificationError("class " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                                      " samples, fewer than the " + std::to_string(k) + " folds");
        Rng rng(child_seed(seed, {static_cast<std::uint64_t>(static_cast<std::int64_t>(label))}));
        rng.shuffle(idx.begin(), idx.end());
        for (std::size_t j = 0; j < idx.size(); ++j) fold[idx[j]] = j % k;
    }
    return fold;
}

/// Final model for fixed hyperparameters on all given diagrams.
[[nodiscard]] inline PicrotModel fit(std::span<const PersistenceDiagram> diagrams, std::span<const int> labels,
                                     const Hyperparameters& hp, const TrainOptions& opt, std::uint64_t seed) {
    auto ci = build_class_images(diagrams, labels, hp, opt.quantization);
    PicrotModel m;
    m.classes = std::move(ci.classes);
    m.class_images = std::move(ci.images);
    m.grid = ci.grid;
    m.sigma = ci.sigma;
    m.eps = ci.eps;
    m.p = hp.p;
    m.lambda = hp.lambda_scale * transport::GroundCost(m.grid, hp.p).mean();
    m.tie_seed = child_seed(seed, {0x7469});
    m.hyper = hp;
    m.quantization = opt.quantization;
    m.sinkhorn = opt.sinkhorn;
    return m;
}

namespace detail {

[[nodiscard]] inline std::vector<int> labels_of(std::span<const TimeSeries> xs) {
    std::vector<int> labels;
    labels.reserve(xs.size());
    for (const auto& ts : xs) {
        if (!ts.label) throw ConfigError("training series must be labelled");
        labels.push_back(*ts.label);
    }
    return labels;
}

/// Deterministic preference among equally accurate combinations.
[[nodiscard]] inline auto preference_key(const Hyperparameters& h) {
    return std::make_tuple(h.d, h.lambda_scale, h.sigma_cells, h.p, h.eps_fraction);
}

}  // namespace detail

/// Cross-validates every CvGrid combination on precomputed diagrams, then
/// refits the winner on all of them.
[[nodiscard]] inline PicrotModel train_diagrams(std::span<const PersistenceDiagram> diagrams,
                                                std::span<const int> labels, const TrainOptions& opt,
                                                std::uint64_t seed, TrainReport* report = nullptr) {
    const auto& cv = opt.cv;
    cv.validate();
    if (diagrams.size() != labels.size()) throw ConfigError("diagrams and labels differ in length");
    std::set<int> classes(labels.begin(), labels.end());
    if (classes.size() < 2) throw TrainingError("training data must contain at least two classes");
    for (int c : classes) {
        bool any = false;
        for (std::size_t i = 0; i < labels.size(); ++i) any = any || (labels[i] == c && !diagrams[i].empty());
        if (!any) throw TrainingError("class " + std::to_string(c) + " has only empty diagrams");
    }
    const auto fold = stratified_folds(labels, cv.folds, child_seed(seed, {0x666f6c64}));
    const std::uint64_t cv_tie_seed = child_seed(seed, {0x6376});

    // Image-level work units: (fold, d, sigma, eps). Each evaluates every
    // (p, lambda) pair on its validation samples.
    struct Unit {
        std::size_t fold, d, sigma, eps;
    };
    std::vector<Unit> units;
    for (std::size_t f = 0; f < cv.folds; ++f)
        for (std::size_t a = 0; a < cv.d.size(); ++a)
            for (std::size_t b = 0; b < cv.sigma_cells.size(); ++b)
                for (std::size_t e = 0; e < cv.eps_fraction.size(); ++e) units.push_back({f, a, b, e});

    const std::size_t n_p = cv.p.size(), n_l = cv.lambda_scale.size();
    auto cell_index = [&](const Unit& u, std::size_t pi, std::size_t li) {
        return (((u.d * cv.sigma_cells.size() + u.sigma) * cv.eps_fraction.size() + u.eps) * n_p + pi) * n_l + li;
    };
    const std::size_t n_cells = cv.combinations();
    std::vector<std::vector<CvCell>> partial(units.size(), std::vector<CvCell>(n_cells));

    parallel_for(units.size(), opt.workers, [&](std::size_t ui) {
        const Unit& u = units[ui];
        auto& cells = partial[ui];
        std::vector<PersistenceDiagram> train_d;
        std::vector<int> train_l;
        std::vector<std::size_t> valid;
        for (std::size_t i = 0; i < diagrams.size(); ++i) {
            if (fold[i] == u.fold) {
                valid.push_back(i);
            } else {
                train_d.push_back(diagrams[i]);
                train_l.push_back(labels[i]);
            }
        }
        const Hyperparameters base{cv.d[u.d], cv.sigma_cells[u.sigma], 1.0, 2.0, cv.eps_fraction[u.eps]};
        std::optional<ClassImages> ci;
        try {
            ci = build_class_images(train_d, train_l, base, opt.quantization);
        } catch (const TrainingError&) {
            // a class lost all its nonempty diagrams in this fold: coin flips
        } catch (const EmptyDensityError&) {
        }
        std::vector<std::optional<PersistenceImage>> queries(valid.size());
        if (ci)
            for (std::size_t v = 0; v < valid.size(); ++v) {
                try {
                    queries[v] = query_image(diagrams[valid[v]], ci->grid, ci->sigma, ci->eps, opt.quantization);
                } catch (const EmptyDensityError&) {
                }
            }

        for (std::size_t pi = 0; pi < n_p; ++pi) {
            std::optional<transport::GroundCost> cost;
            if (ci) cost.emplace(ci->grid, cv.p[pi]);
            const double mean_cost = cost ? cost->mean() : 1.0;
            for (std::size_t li = 0; li < n_l; ++li) {
                const std::size_t ci_idx = cell_index(u, pi, li);
                CvCell& cell = cells[ci_idx];
                std::optional<DivergenceEngine> engine;
                if (ci) engine.emplace(ci->grid, cv.p[pi], cv.lambda_scale[li] * mean_cost, opt.sinkhorn);
                std::vector<int> fold_classes = ci ? ci->classes : std::vector<int>(classes.begin(), classes.end());
                for (std::size_t v = 0; v < valid.size(); ++v) {
                    std::vector<double> div(fold_classes.size(), 0.0);
                    if (ci && queries[v]) {
                        for (std::size_t k = 0; k < fold_classes.size(); ++k) {
                            const auto res = engine->divergence(queries[v]->pixels, ci->images[k].pixels);
                            div[k] = res.divergence;
                            cell.not_converged += !res.converged;
                        }
                    }
                    const auto key = (static_cast<std::uint64_t>(valid[v]) << 24) ^ ci_idx;
                    const int predicted = fold_classes[choose_nearest(div, cv_tie_seed, key)];
                    cell.correct += predicted == labels[valid[v]];
                    cell.total += 1;
                }
            }
        }
    });

    std::vector<CvCell> cells(n_cells);
    for (std::size_t a = 0; a < cv.d.size(); ++a)
        for (std::size_t b = 0; b < cv.sigma_cells.size(); ++b)
            for (std::size_t e = 0; e < cv.eps_fraction.size(); ++e)
                for (std::size_t pi = 0; pi < n_p; ++pi)
                    for (std::size_t li = 0; li < n_l; ++li) {
                        const std::size_t idx = cell_index(Unit{0, a, b, e}, pi, li);
                        cells[idx].hyper = {cv.d[a], cv.sigma_cells[b], cv.lambda_scale[li], cv.p[pi],
                                            cv.eps_fraction[e]};
                    }
    for (const auto& part : partial)
        for (std::size_t i = 0; i < n_cells; ++i) {
            cells[i].correct += part[i].correct;
            cells[i].total += part[i].total;
            cells[i].not_converged += part[i].not_converged;
        }

    std::size_t best = 0;
    for (std::size_t i = 1; i < n_cells; ++i) {
        if (cells[i].correct > cells[best].correct ||
            (cells[i].correct == cells[best].correct &&
             detail::preference_key(cells[i].hyper) < detail::preference_key(cells[best].hyper)))
            best = i;
    }
    auto model = fit(diagrams, labels, cells[best].hyper, opt, seed);
    model.cv_accuracy = cells[best].accuracy();
    if (report) {
        report->cells = std::move(cells);
        report->selected = best;
    }
    return model;
}

[[nodiscard]] inline PicrotModel train(std::span<const TimeSeries> xs, const TrainOptions& opt, std::uint64_t seed,
                                       TrainReport* report = nullptr) {
    const auto labels = detail::labels_of(xs);
    std::vector<PersistenceDiagram> diagrams;
    diagrams.reserve(xs.size());
    for (const auto& ts : xs) diagrams.push_back(persistence::sublevel_diagram(ts.values));
    return train_diagrams(diagrams, labels, opt, seed, report);
}

// Serialization: model.json plus one image CSV per class.

inline void save_model(const PicrotModel& m, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["grid"] = density::to_json(m.grid);
    j["sigma"] = m.sigma;
    j["eps"] = m.eps;
    j["lambda"] = m.lambda;
    j["p"] = m.p;
    j["tie_seed"] = m.tie_seed;
    j["cv_accuracy"] = m.cv_accuracy;
    j["hyperparameters"] = {{"d", m.hyper.d},
                            {"sigma_cells", m.hyper.sigma_cells},
                            {"lambda_scale", m.hyper.lambda_scale},
                            {"p", m.hyper.p},
                            {"eps_fraction", m.hyper.eps_fraction}};
    j["quantization"] = {{"subdivision", m.quantization.subdivision},
                         {"deposit", m.quantization.deposit == density::Deposit::Bilinear ? "bilinear" : "nearest"}};
    j["sinkhorn"] = {{"tol", m.sinkhorn.tol}, {"max_iter", m.sinkhorn.max_iter}, {"check_every", m.sinkhorn.check_every}};
    j["classes"] = nlohmann::json::array();
    for (std::size_t k = 0; k < m.classes.size(); ++k) {
        const std::string file = "class_" + std::to_string(m.classes[k]) + ".csv";
        j["classes"].push_back({{"label", m.classes[k]}, {"image", file}});
        std::ofstream os(dir / file);
        density::write_image_csv(os, m.class_images[k]);
        if (!os) throw Error("failed to write " + (dir / file).string());
    }
    std::ofstream os(dir / "model.json");
    os << j.dump(2) << '\n';
    if (!os) throw Error("failed to write " + (dir / "model.json").string());
}

[[nodiscard]] inline PicrotModel load_model(const std::filesystem::path& dir) {
    std::ifstream is(dir / "model.json");
    if (!is) throw Error("cannot open " + (dir / "model.json").string());
    const auto j = nlohmann::json::parse(is);
    PicrotModel m;
    m.grid = density::grid_from_json(j.at("grid"));
    m.sigma = j.at("sigma").get<double>();
    m.eps = j.at("eps").get<double>();
    m.lambda = j.at("lambda").get<double>();
    m.p = j.at("p").get<double>();
    m.tie_seed = j.at("tie_seed").get<std::uint64_t>();
    m.cv_accuracy = j.value("cv_accuracy", 0.0);
    const auto& h = j.at("hyperparameters");
    m.hyper = {h.at("d").get<std::size_t>(), h.at("sigma_cells").get<double>(), h.at("lambda_scale").get<double>(),
               h.at("p").get<double>(), h.at("eps_fraction").get<double>()};
    const auto& q = j.at("quantization");
    m.quantization.subdivision = q.at("subdivision").get<std::size_t>();
    m.quantization.deposit =
        q.at("deposit").get<std::string>() == "bilinear" ? density::Deposit::Bilinear : density::Deposit::NearestCenter;
    const auto& s = j.at("sinkhorn");
    m.sinkhorn.tol = s.at("tol").get<double>();
    m.sinkhorn.max_iter = s.at("max_iter").get<int>();
    m.sinkhorn.check_every = s.at("check_every").get<int>();
    for (const auto& c : j.at("classes")) {
        m.classes.push_back(c.at("label").get<int>());
        std::ifstream in(dir / c.at("image").get<std::string>());
        if (!in) throw Error("cannot open class image " + c.at("image").get<std::string>());
        m.class_images.push_back(density::read_image_csv(in, m.grid, true));
    }
    return m;
}

}  // namespace picrot::classifier
