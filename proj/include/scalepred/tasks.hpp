#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scalepred/io.hpp"
#include "scalepred/labeling.hpp"
#include "scalepred/nn/network.hpp"
#include "scalepred/nn/serialize.hpp"
#include "scalepred/nn/train.hpp"
#include "scalepred/random.hpp"

namespace scalepred {

enum class TaskKind { classify_one_step, classify_n_step, regress_one_step, regress_n_step, average_window };

inline std::string to_string(TaskKind k) {
    switch (k) {
        case TaskKind::classify_one_step: return "classify_one_step";
        case TaskKind::classify_n_step: return "classify_n_step";
        case TaskKind::regress_one_step: return "regress_one_step";
        case TaskKind::regress_n_step: return "regress_n_step";
        case TaskKind::average_window: return "average";
    }
    return "?";
}

inline TaskKind task_kind_from_string(const std::string& s) {
    for (auto k : {TaskKind::classify_one_step, TaskKind::classify_n_step, TaskKind::regress_one_step,
                   TaskKind::regress_n_step, TaskKind::average_window}) {
        if (to_string(k) == s) return k;
    }
    if (s == "average_window") return TaskKind::average_window;
    throw ConfigError("unknown task kind '" + s + "'");
}

/// Prediction problem: what to predict, how far ahead, and whether goals are inputs.
struct Task {
    TaskKind kind = TaskKind::regress_one_step;
    int w = 0;
    /// Off drops (gr, gh) from the 12-wide inputs; used for the goal ablation.
    bool use_goals = true;

    [[nodiscard]] bool is_classification() const {
        return kind == TaskKind::classify_one_step || kind == TaskKind::classify_n_step;
    }
    [[nodiscard]] bool is_one_step() const {
        return kind == TaskKind::classify_one_step || kind == TaskKind::regress_one_step;
    }
    [[nodiscard]] WindowSpec window() const {
        if (is_one_step()) return {0, WindowMode::one_step};
        return {w, kind == TaskKind::average_window ? WindowMode::average : WindowMode::n_step};
    }
    [[nodiscard]] std::size_t input_width() const { return is_one_step() || !use_goals ? 6 : 12; }

    void validate() const {
        if (is_one_step() && w != 0) throw ConfigError("task " + to_string(kind) + " requires w = 0");
        if (kind == TaskKind::average_window && w < 1) throw ConfigError("average task requires w >= 1");
        if (w < 0) throw ConfigError("task horizon w must be >= 0");
    }
};

// ---- architecture presets -------------------------------------------------------

inline constexpr std::size_t kHiddenWidth = 64;

namespace detail {

inline void hidden_blocks(std::vector<nn::LayerSpec>& specs, std::size_t input_width, int blocks) {
    std::size_t w = input_width;
    for (int i = 0; i < blocks; ++i) {
        specs.push_back({nn::LayerKind::dense, w, kHiddenWidth});
        specs.push_back({nn::LayerKind::batchnorm1d, kHiddenWidth, kHiddenWidth});
        specs.push_back({nn::LayerKind::relu, kHiddenWidth, kHiddenWidth});
        w = kHiddenWidth;
    }
}

}  // namespace detail

/// input -> [dense 64, batch-norm, ReLU] x4 -> dense P -> softmax.
inline nn::Network build_classification_net(std::size_t input_width, std::size_t classes, std::uint64_t seed) {
    if (classes < 2) throw ConfigError("classification net needs P >= 2");
    std::vector<nn::LayerSpec> specs;
    detail::hidden_blocks(specs, input_width, 4);
    specs.push_back({nn::LayerKind::dense, kHiddenWidth, classes});
    specs.push_back({nn::LayerKind::softmax, classes, classes});
    nn::Network net(specs);
    net.initialize(seed);
    return net;
}

/// input -> [dense 64, batch-norm, ReLU] x5 -> dense 1 -> hardtanh01.
inline nn::Network build_regression_net(std::size_t input_width, std::uint64_t seed) {
    std::vector<nn::LayerSpec> specs;
    detail::hidden_blocks(specs, input_width, 5);
    specs.push_back({nn::LayerKind::dense, kHiddenWidth, 1});
    specs.push_back({nn::LayerKind::hardtanh01, 1, 1});
    nn::Network net(specs);
    net.initialize(seed);
    return net;
}

/// input -> [dense 64, batch-norm, ReLU] x5 -> dense P -> softmax -> linear head.
/// The head computes beta_0 + sum_i beta_i y_i over the P softmax outputs.
inline nn::Network build_mixed_net(std::size_t input_width, std::size_t classes, std::uint64_t seed) {
    if (classes < 2) throw ConfigError("mixed net needs P >= 2");
    std::vector<nn::LayerSpec> specs;
    detail::hidden_blocks(specs, input_width, 5);
    specs.push_back({nn::LayerKind::dense, kHiddenWidth, classes});
    specs.push_back({nn::LayerKind::softmax, classes, classes});
    specs.push_back({nn::LayerKind::linear_head, classes, 1});
    nn::Network net(specs);
    net.initialize(seed);
    return net;
}

inline nn::Network build_network_for(const Task& task, std::size_t classes, std::uint64_t seed) {
    switch (task.kind) {
        case TaskKind::classify_one_step:
        case TaskKind::classify_n_step: return build_classification_net(task.input_width(), classes, seed);
        case TaskKind::regress_one_step:
        case TaskKind::regress_n_step: return build_regression_net(task.input_width(), seed);
        case TaskKind::average_window: return build_mixed_net(task.input_width(), classes, seed);
    }
    throw ConfigError("unhandled task kind");
}

// ---- trained predictors ---------------------------------------------------------

struct TrainedPredictor {
    Task task;
    nn::Network net;
    ClusterModel clusters;
    std::string dataset_fingerprint;
};

/// Column-selected feature matrix for `task` (goals dropped when not used).
inline nn::Matrix feature_matrix(const SupervisedDataset& ds, const Task& task) {
    const std::size_t cols = task.input_width();
    if (cols > ds.width) throw DataError("dataset has fewer feature columns than the task needs");
    nn::Matrix m(static_cast<Eigen::Index>(ds.rows()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        const double* row = ds.features.data() + i * ds.width;
        for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c];
    }
    return m;
}

inline void check_dataset_matches(const Task& task, const SupervisedDataset& ds) {
    const WindowSpec want = task.window();
    if (ds.window.mode != want.mode || ds.window.w != want.w) {
        throw DataError("dataset window (" + to_string(ds.window.mode) + ", w=" + std::to_string(ds.window.w) +
                        ") does not match task " + to_string(task.kind) + " (w=" + std::to_string(want.w) + ")");
    }
}

inline std::string dataset_fingerprint(const SupervisedDataset& ds) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    mix(ds.features.data(), ds.features.size() * sizeof(double));
    mix(ds.target_s.data(), ds.target_s.size() * sizeof(double));
    mix(ds.target_cluster.data(), ds.target_cluster.size() * sizeof(int));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline nn::Targets task_targets(const Task& task, const SupervisedDataset& ds, std::size_t classes) {
    nn::Targets t;
    if (task.is_classification()) {
        t.classes.reserve(ds.rows());
        for (int c : ds.target_cluster) {
            if (c < 1 || static_cast<std::size_t>(c) > classes) {
                throw DataError("dataset cluster label " + std::to_string(c) + " outside 1.." + std::to_string(classes));
            }
            t.classes.push_back(c - 1);
        }
    } else {
        t.values = ds.target_s;
    }
    return t;
}

struct TrainResult {
    TrainedPredictor predictor;
    nn::TrainHistory history;
};

/// Trains the task's preset network. Validation rows are whole episodes
/// carved from `train`; classification uses cross-entropy on cluster labels,
/// everything else MSE on the scaling targets.
inline TrainResult train_task(const Task& task, const SupervisedDataset& train, const ClusterModel& clusters,
                              const nn::TrainConfig& cfg) {
    task.validate();
    check_dataset_matches(task, train);
    if (train.rows() == 0) throw DataError("train_task: empty dataset");
    clusters.validate();
    const std::size_t classes = clusters.size();

    const auto parts =
        split_dataset(train, 1.0 - cfg.validation_fraction, derive_seed(cfg.seed, "validation-split"));
    const nn::Matrix x_train = feature_matrix(parts.train, task);
    const nn::Matrix x_val = feature_matrix(parts.test, task);

    TrainResult result;
    result.predictor.task = task;
    result.predictor.clusters = clusters;
    result.predictor.dataset_fingerprint = dataset_fingerprint(train);
    result.predictor.net = build_network_for(task, classes, derive_seed(cfg.seed, "init"));

    nn::TrainConfig run = cfg;
    run.seed = derive_seed(cfg.seed, "shuffle");
    result.history = nn::train_network(result.predictor.net, x_train, task_targets(task, parts.train, classes), x_val,
                                       task_targets(task, parts.test, classes),
                                       task.is_classification() ? nn::LossKind::cross_entropy : nn::LossKind::mse,
                                       run);
    result.predictor.net.metadata.seed = cfg.seed;
    return result;
}

/// Index of the largest probability; ties go to the lower index.
inline std::size_t argmax_lower(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
        if (row[j] > row[best]) best = j;
    }
    return best;
}

/// Scaling estimates for each row of raw (unstandardized) inputs. Classifiers
/// decode to the centroid of the argmax class; regressors return their output,
/// clamped to [0,1] for the unconstrained average head.
inline std::vector<double> predict_batch(const TrainedPredictor& p, const nn::Matrix& inputs) {
    if (static_cast<std::size_t>(inputs.cols()) != p.task.input_width()) {
        throw DataError("predict: input width " + std::to_string(inputs.cols()) + ", expected " +
                        std::to_string(p.task.input_width()));
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(inputs.rows()));
    constexpr Eigen::Index chunk = 8192;
    std::vector<double> row;
    for (Eigen::Index begin = 0; begin < inputs.rows(); begin += chunk) {
        const Eigen::Index n = std::min(chunk, inputs.rows() - begin);
        const nn::Matrix y = p.net.predict(inputs.middleRows(begin, n));
        row.resize(static_cast<std::size_t>(y.cols()));
        for (Eigen::Index i = 0; i < n; ++i) {
            if (p.task.is_classification()) {
                for (Eigen::Index j = 0; j < y.cols(); ++j) row[static_cast<std::size_t>(j)] = y(i, j);
                out.push_back(p.clusters.centroids[argmax_lower(row)]);
            } else {
                out.push_back(std::clamp(y(i, 0), 0.0, 1.0));
            }
        }
    }
    return out;
}

/// Predicted cluster (1-based) per row; classification tasks only.
inline std::vector<int> predict_classes(const TrainedPredictor& p, const nn::Matrix& inputs) {
    if (!p.task.is_classification()) throw DataError("predict_classes: not a classification task");
    const nn::Matrix y = p.net.predict(inputs);
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(y.rows()));
    std::vector<double> row(static_cast<std::size_t>(y.cols()));
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        for (Eigen::Index j = 0; j < y.cols(); ++j) row[static_cast<std::size_t>(j)] = y(i, j);
        out.push_back(static_cast<int>(argmax_lower(row)) + 1);
    }
    return out;
}

inline double predict_scaling(const TrainedPredictor& p, std::span<const double> input) {
    nn::Matrix x(1, static_cast<Eigen::Index>(input.size()));
    for (std::size_t c = 0; c < input.size(); ++c) x(0, static_cast<Eigen::Index>(c)) = input[c];
    return predict_batch(p, x).front();
}

// ---- predictor file -------------------------------------------------------------

inline constexpr const char* kPredictorFormat = "scalepred-predictor/1";

inline nlohmann::json predictor_to_json(const TrainedPredictor& p) {
    return {{"format", kPredictorFormat},
            {"task", {{"kind", to_string(p.task.kind)}, {"w", p.task.w}, {"use_goals", p.task.use_goals}}},
            {"clusters", cluster_model_to_json(p.clusters)},
            {"dataset_fingerprint", p.dataset_fingerprint},
            {"network", nn::network_to_json(p.net)}};
}

inline TrainedPredictor predictor_from_json(const nlohmann::json& j) {
    TrainedPredictor p;
    try {
        if (j.at("format") != kPredictorFormat) throw DataError("predictor file: unsupported format");
        const auto& t = j.at("task");
        p.task = {task_kind_from_string(t.at("kind").get<std::string>()), t.at("w").get<int>(),
                  t.at("use_goals").get<bool>()};
        p.clusters = cluster_model_from_json(j.at("clusters"));
        p.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("predictor file: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("predictor file: ") + e.what());
    }
    p.net = nn::network_from_json(j.at("network"));
    if (p.net.input_width() != p.task.input_width()) throw DataError("predictor file: input width mismatch");
    if (p.task.is_classification() && p.net.output_width() != p.clusters.size()) {
        throw DataError("predictor file: output width differs from the cluster count");
    }
    return p;
}

inline void save_predictor(const std::filesystem::path& path, const TrainedPredictor& p) {
    write_json(path, predictor_to_json(p));
}

inline TrainedPredictor load_predictor(const std::filesystem::path& path) {
    return predictor_from_json(read_json_data(path));
}

}  // namespace scalepred
