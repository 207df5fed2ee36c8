#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "scalepred/io.hpp"
#include "scalepred/labeling.hpp"
#include "scalepred/random.hpp"
#include "scalepred/tasks.hpp"

namespace scalepred {

struct EvalOptions {
    /// Staircase thresholds for boundary-excluded accuracy; empty disables it.
    std::vector<double> thresholds;
    double boundary_margin = 0.05;
};

struct EvalReport {
    std::string predictor;
    TaskKind kind = TaskKind::regress_one_step;
    int w = 0;
    std::string dataset_fingerprint;
    double delta = 0.0;
    double mse = 0.0;
    std::optional<double> accuracy;
    std::optional<double> boundary_excluded_accuracy;
    std::size_t boundary_excluded_rows = 0;
    std::size_t rows = 0;
};

/// Decoded predictions vs targets. Classification also reports exact cluster
/// match rate, overall and on rows at least `boundary_margin` from every threshold.
inline EvalReport evaluate(const TrainedPredictor& p, const SupervisedDataset& test, const EvalOptions& opts = {},
                           std::string name = {}) {
    check_dataset_matches(p.task, test);
    if (test.rows() == 0) throw DataError("evaluate: empty test set");
    const nn::Matrix x = feature_matrix(test, p.task);
    const std::vector<double> pred = predict_batch(p, x);

    EvalReport r;
    r.predictor = std::move(name);
    r.kind = p.task.kind;
    r.w = p.task.w;
    r.dataset_fingerprint = dataset_fingerprint(test);
    r.rows = test.rows();
    double sum = 0.0;
    for (std::size_t i = 0; i < test.rows(); ++i) {
        const double e = pred[i] - test.target_s[i];
        sum += e * e;
    }
    r.mse = sum / static_cast<double>(test.rows());

    if (p.task.is_classification()) {
        const std::vector<int> cls = predict_classes(p, x);
        std::size_t hits = 0;
        std::size_t far_rows = 0;
        std::size_t far_hits = 0;
        for (std::size_t i = 0; i < test.rows(); ++i) {
            const bool hit = cls[i] == test.target_cluster[i];
            hits += hit;
            if (opts.thresholds.empty() || !std::isfinite(test.target_distance[i])) continue;
            double margin = std::numeric_limits<double>::infinity();
            for (double th : opts.thresholds) margin = std::min(margin, std::abs(test.target_distance[i] - th));
            if (margin >= opts.boundary_margin) {
                ++far_rows;
                far_hits += hit;
            }
        }
        r.accuracy = static_cast<double>(hits) / static_cast<double>(test.rows());
        r.boundary_excluded_rows = far_rows;
        if (far_rows > 0) r.boundary_excluded_accuracy = static_cast<double>(far_hits) / static_cast<double>(far_rows);
    }
    return r;
}

struct SweepResult {
    std::string predictor;
    std::vector<EvalReport> rows;  // one per delta, ascending
    [[nodiscard]] double average_mse() const {
        double s = 0.0;
        for (const auto& r : rows) s += r.mse;
        return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
    }
};

inline void check_deltas(std::span<const double> deltas) {
    if (deltas.empty()) throw ConfigError("noise sweep: no deltas");
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        if (!(deltas[i] >= 0.0)) throw ConfigError("noise sweep: deltas must be >= 0");
        if (i > 0 && !(deltas[i] > deltas[i - 1])) throw ConfigError("noise sweep: deltas must be ascending");
    }
}

inline std::uint64_t noise_seed(std::uint64_t seed, std::size_t delta_index, const char* side) {
    return derive_seed(derive_seed(seed, side), delta_index);
}

/// Fixed predictor, noisy test inputs: human positions in `test_samples` get
/// N(0, delta^2) per horizontal axis before windowing.
inline SweepResult noise_sweep_eval_only(const TrainedPredictor& p, std::span<const LabeledSample> test_samples,
                                         std::span<const double> deltas, std::uint64_t seed,
                                         const EvalOptions& opts = {}, const std::string& name = {}) {
    check_deltas(deltas);
    SweepResult out{name, {}};
    for (std::size_t k = 0; k < deltas.size(); ++k) {
        const auto noisy = inject_noise(test_samples, NoiseSpec{deltas[k], noise_seed(seed, k, "test-noise")});
        auto r = evaluate(p, build_dataset(noisy, p.task.window()), opts, name);
        r.delta = deltas[k];
        out.rows.push_back(std::move(r));
    }
    return out;
}

struct RetrainSweep {
    SweepResult result;
    std::vector<TrainedPredictor> predictors;
    std::vector<nn::TrainHistory> histories;
};

/// One model per delta: the same noise level is injected into training and
/// test inputs, then the task is trained and evaluated.
inline RetrainSweep noise_sweep_retrain(const Task& task, std::span<const LabeledSample> train_samples,
                                        std::span<const LabeledSample> test_samples, const ClusterModel& clusters,
                                        const nn::TrainConfig& cfg, std::span<const double> deltas,
                                        std::uint64_t seed, const EvalOptions& opts = {},
                                        const std::string& name = {}) {
    check_deltas(deltas);
    RetrainSweep out;
    out.result.predictor = name;
    for (std::size_t k = 0; k < deltas.size(); ++k) {
        const auto train = inject_noise(train_samples, NoiseSpec{deltas[k], noise_seed(seed, k, "train-noise")});
        const auto test = inject_noise(test_samples, NoiseSpec{deltas[k], noise_seed(seed, k, "test-noise")});
        auto trained = train_task(task, build_dataset(train, task.window()), clusters, cfg);
        auto r = evaluate(trained.predictor, build_dataset(test, task.window()), opts, name);
        r.delta = deltas[k];
        out.result.rows.push_back(std::move(r));
        out.predictors.push_back(std::move(trained.predictor));
        out.histories.push_back(std::move(trained.history));
    }
    return out;
}

// ---- heatmaps -------------------------------------------------------------------

struct HeatmapCell {
    std::size_t count = 0;
    double metric_sum = 0.0;
    double squared_error_sum = 0.0;

    [[nodiscard]] std::optional<double> mean_metric() const {
        if (count == 0) return std::nullopt;
        return metric_sum / static_cast<double>(count);
    }
    [[nodiscard]] std::optional<double> mean_squared_error() const {
        if (count == 0) return std::nullopt;
        return squared_error_sum / static_cast<double>(count);
    }
};

/// Per-cell error over the human's horizontal position. The metric is
/// |prediction - target| for regressors and the misclassification
/// indicator for classifiers, so 0 means perfect in both cases.
struct HeatmapGrid {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double cell = 0.1;
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::string metric;
    std::vector<HeatmapCell> cells;  // row-major in y, then x

    [[nodiscard]] const HeatmapCell& at(std::size_t ix, std::size_t iy) const { return cells[iy * nx + ix]; }
    [[nodiscard]] std::size_t total_count() const {
        std::size_t n = 0;
        for (const auto& c : cells) n += c.count;
        return n;
    }
};

inline std::int64_t cell_index(double coord, double origin, double cell) {
    return static_cast<std::int64_t>(std::floor((coord - origin) / cell));
}

inline HeatmapGrid make_heatmap(const TrainedPredictor& p, const SupervisedDataset& test, double cell) {
    if (!(cell > 0.0)) throw ConfigError("heatmap: cell size must be positive");
    check_dataset_matches(p.task, test);
    HeatmapGrid g;
    g.cell = cell;
    g.metric = p.task.is_classification() ? "misclassification" : "abs_error";
    if (test.rows() == 0) return g;

    // xh occupies feature columns 3..5
    double min_x = std::numeric_limits<double>::infinity();
    double min_y = min_x;
    double max_x = -min_x;
    double max_y = -min_x;
    for (std::size_t i = 0; i < test.rows(); ++i) {
        const auto r = test.row(i);
        min_x = std::min(min_x, r[3]);
        max_x = std::max(max_x, r[3]);
        min_y = std::min(min_y, r[4]);
        max_y = std::max(max_y, r[4]);
    }
    g.origin_x = std::floor(min_x / cell) * cell;
    g.origin_y = std::floor(min_y / cell) * cell;
    g.nx = static_cast<std::size_t>(cell_index(max_x, g.origin_x, cell)) + 1;
    g.ny = static_cast<std::size_t>(cell_index(max_y, g.origin_y, cell)) + 1;
    g.cells.assign(g.nx * g.ny, {});

    const nn::Matrix x = feature_matrix(test, p.task);
    const std::vector<double> pred = predict_batch(p, x);
    std::vector<int> cls;
    if (p.task.is_classification()) cls = predict_classes(p, x);
    for (std::size_t i = 0; i < test.rows(); ++i) {
        const auto r = test.row(i);
        const auto ix = static_cast<std::size_t>(std::clamp<std::int64_t>(
            cell_index(r[3], g.origin_x, cell), 0, static_cast<std::int64_t>(g.nx) - 1));
        const auto iy = static_cast<std::size_t>(std::clamp<std::int64_t>(
            cell_index(r[4], g.origin_y, cell), 0, static_cast<std::int64_t>(g.ny) - 1));
        auto& c = g.cells[iy * g.nx + ix];
        const double e = pred[i] - test.target_s[i];
        ++c.count;
        c.squared_error_sum += e * e;
        c.metric_sum += p.task.is_classification() ? (cls[i] == test.target_cluster[i] ? 0.0 : 1.0) : std::abs(e);
    }
    return g;
}

// ---- report rendering --------------------------------------------------------------

struct NamedHeatmap {
    std::string name;
    HeatmapGrid grid;
};

struct ReportBundle {
    /// Noise-sweep rows for the one-step table (rows = predictors, columns = deltas).
    std::vector<SweepResult> noise_table;
    /// Horizon predictors for the N-step table.
    std::vector<EvalReport> horizon_table;
    std::vector<NamedHeatmap> heatmaps;
};

namespace detail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace detail

inline std::string report_csv_row(const EvalReport& r) {
    return r.predictor + "," + detail::fmt(r.delta) + "," + detail::fmt(r.mse) + "," + detail::fmt(r.accuracy) + "," +
           detail::fmt(r.boundary_excluded_accuracy) + "," + std::to_string(r.rows) + "\n";
}

inline constexpr std::string_view kReportHeader = "predictor,delta,mse,accuracy,boundary_excluded_accuracy,rows\n";

/// Heatmap CSV plus `.meta.json` and, when non-empty, a binary PGM image
/// (0 -> white, max -> black, empty -> mid-gray, top row = largest y).
inline void write_heatmap(const std::filesystem::path& dir, const NamedHeatmap& h) {
    const auto& g = h.grid;
    std::string csv = "cell_x,cell_y,count,mean_metric\n";
    for (std::size_t iy = 0; iy < g.ny; ++iy) {
        for (std::size_t ix = 0; ix < g.nx; ++ix) {
            const auto& c = g.at(ix, iy);
            csv += std::to_string(ix) + "," + std::to_string(iy) + "," + std::to_string(c.count) + "," +
                   detail::fmt(c.mean_metric()) + "\n";
        }
    }
    detail::write_text(dir / (h.name + ".csv"), csv);
    write_json(dir / (h.name + ".meta.json"), {{"origin", {g.origin_x, g.origin_y}},
                                                {"cell_size", g.cell},
                                                {"nx", g.nx},
                                                {"ny", g.ny},
                                                {"axes", "human x, human y (m)"},
                                                {"metric", g.metric},
                                                {"rows", g.total_count()}});
    if (g.total_count() == 0) return;
    double max_metric = 0.0;
    for (const auto& c : g.cells) {
        if (auto m = c.mean_metric()) max_metric = std::max(max_metric, *m);
    }
    std::string pgm = "P5\n" + std::to_string(g.nx) + " " + std::to_string(g.ny) + "\n255\n";
    for (std::size_t row = 0; row < g.ny; ++row) {
        const std::size_t iy = g.ny - 1 - row;
        for (std::size_t ix = 0; ix < g.nx; ++ix) {
            const auto m = g.at(ix, iy).mean_metric();
            unsigned char px = 128;
            if (m) px = static_cast<unsigned char>(std::lround(max_metric > 0.0 ? 255.0 * (1.0 - *m / max_metric) : 255.0));
            pgm.push_back(static_cast<char>(px));
        }
    }
    detail::write_text(dir / (h.name + ".pgm"), pgm);
}

/// Writes report.csv (every evaluated row), table_noise.csv (rows = predictors,
/// columns = deltas + avg), table_horizon.csv and the heatmaps.
inline void render_report(const ReportBundle& bundle, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string report(kReportHeader);
    for (const auto& s : bundle.noise_table) {
        for (const auto& r : s.rows) report += report_csv_row(r);
    }
    for (const auto& r : bundle.horizon_table) report += report_csv_row(r);
    detail::write_text(dir / "report.csv", report);

    if (!bundle.noise_table.empty()) {
        std::string t1 = "predictor";
        for (const auto& r : bundle.noise_table.front().rows) t1 += ",delta=" + detail::fmt(r.delta);
        t1 += ",avg\n";
        for (const auto& s : bundle.noise_table) {
            t1 += s.predictor;
            for (const auto& r : s.rows) t1 += "," + detail::fmt(r.mse);
            t1 += "," + detail::fmt(s.average_mse()) + "\n";
        }
        detail::write_text(dir / "table_noise.csv", t1);
    }
    if (!bundle.horizon_table.empty()) {
        std::string t2 = "predictor,w,mse\n";
        for (const auto& r : bundle.horizon_table) {
            t2 += r.predictor + "," + std::to_string(r.w) + "," + detail::fmt(r.mse) + "\n";
        }
        detail::write_text(dir / "table_horizon.csv", t2);
    }
    for (const auto& h : bundle.heatmaps) write_heatmap(dir, h);
}

}  // namespace scalepred
