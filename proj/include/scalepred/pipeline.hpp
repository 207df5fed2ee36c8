#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scalepred/evalkit.hpp"
#include "scalepred/io.hpp"
#include "scalepred/labeling.hpp"
#include "scalepred/scene.hpp"
#include "scalepred/simulator.hpp"
#include "scalepred/tasks.hpp"

namespace scalepred {

namespace fs = std::filesystem;

struct LabelingConfig {
    double eps = 0.02;
    int min_pts = 10;
    double train_fraction = 0.8;
};

struct EvaluationConfig {
    std::vector<double> deltas;
    bool retrain_sweep = true;
    double heatmap_cell = 0.1;
    double boundary_margin = 0.05;
};

struct TaskConfig {
    std::string name;
    Task task;
    bool noise_sweep = false;
    bool heatmap = false;
    /// Training section merged with the task's own `training` overrides.
    std::optional<nn::TrainConfig> training;
};

struct ImportConfig {
    fs::path trace;
    std::optional<StaircaseSafetyFunction> safety;  // thresholds for boundary-excluded accuracy
    std::vector<std::string> tasks;                 // names from the task list to retrain on the import
};

/// Whole-pipeline configuration. Sections are parsed on demand so single
/// commands only need the sections they use.
struct RunConfig {
    nlohmann::json raw;
    fs::path base_dir;  // relative paths in the file resolve against this

    static RunConfig load(const fs::path& path) {
        RunConfig c;
        c.raw = read_json_file(path.string());
        c.base_dir = fs::absolute(path).parent_path();
        return c;
    }

    [[nodiscard]] const nlohmann::json& section(const char* name) const {
        if (!raw.contains(name)) throw ConfigError(std::string("config: missing section '") + name + "'");
        return raw.at(name);
    }

    [[nodiscard]] std::uint64_t seed() const { return get<std::uint64_t>(raw, "seed", "config"); }
    [[nodiscard]] SceneConfig scene() const { return scene_from_json(section("scene")); }
    [[nodiscard]] int episodes() const { return get<int>(section("campaign"), "episodes", "campaign"); }
    [[nodiscard]] unsigned threads() const {
        const auto& c = section("campaign");
        return c.contains("threads") ? c.at("threads").get<unsigned>() : 1U;
    }

    [[nodiscard]] LabelingConfig labeling() const {
        const auto& j = section("labeling");
        LabelingConfig l{get<double>(j, "eps", "labeling"), get<int>(j, "min_pts", "labeling"),
                         get<double>(j, "train_fraction", "labeling")};
        if (!(l.eps > 0.0) || l.min_pts < 1) throw ConfigError("labeling: need eps > 0 and min_pts >= 1");
        if (!(l.train_fraction > 0.0 && l.train_fraction < 1.0)) {
            throw ConfigError("labeling: train_fraction must lie in (0,1)");
        }
        return l;
    }

    [[nodiscard]] nn::TrainConfig training() const { return parse_training(section("training")); }

    static nn::TrainConfig parse_training(const nlohmann::json& j) {
        nn::TrainConfig t;
        t.adam.learning_rate = get<double>(j, "learning_rate", "training");
        t.adam.beta1 = get<double>(j, "beta1", "training");
        t.adam.beta2 = get<double>(j, "beta2", "training");
        t.adam.epsilon = get<double>(j, "epsilon", "training");
        t.batch_size = get<std::size_t>(j, "batch_size", "training");
        t.max_epochs = get<int>(j, "max_epochs", "training");
        t.patience = get<int>(j, "patience", "training");
        t.validation_fraction = get<double>(j, "validation_fraction", "training");
        t.max_batches_per_epoch = get<std::size_t>(j, "max_batches_per_epoch", "training");
        t.lr_plateau_patience = get<int>(j, "lr_plateau_patience", "training");
        t.lr_decay = get<double>(j, "lr_decay", "training");
        t.validate();
        return t;
    }

    [[nodiscard]] EvaluationConfig evaluation() const {
        const auto& j = section("evaluation");
        EvaluationConfig e;
        e.deltas = get<std::vector<double>>(j, "deltas", "evaluation");
        const auto mode = get<std::string>(j, "sweep_mode", "evaluation");
        if (mode != "retrain" && mode != "eval_only") throw ConfigError("evaluation: sweep_mode is retrain|eval_only");
        e.retrain_sweep = mode == "retrain";
        e.heatmap_cell = get<double>(j, "heatmap_cell", "evaluation");
        e.boundary_margin = get<double>(j, "boundary_margin", "evaluation");
        check_deltas(e.deltas);
        if (!(e.heatmap_cell > 0.0)) throw ConfigError("evaluation: heatmap_cell must be positive");
        return e;
    }

    [[nodiscard]] std::vector<TaskConfig> tasks() const {
        std::vector<TaskConfig> out;
        for (const auto& j : section("tasks")) {
            TaskConfig t;
            t.name = get<std::string>(j, "name", "tasks");
            t.task.kind = task_kind_from_string(get<std::string>(j, "kind", "tasks"));
            t.task.w = get<int>(j, "w", "tasks");
            t.task.use_goals = j.contains("use_goals") ? j.at("use_goals").get<bool>() : true;
            t.noise_sweep = j.contains("noise_sweep") && j.at("noise_sweep").get<bool>();
            t.heatmap = j.contains("heatmap") && j.at("heatmap").get<bool>();
            if (j.contains("training")) {
                nlohmann::json merged = section("training");
                merged.merge_patch(j.at("training"));
                t.training = parse_training(merged);
            }
            t.task.validate();
            out.push_back(std::move(t));
        }
        return out;
    }

    [[nodiscard]] std::optional<ImportConfig> import_config() const {
        if (!raw.contains("import") || raw.at("import").is_null()) return std::nullopt;
        const auto& j = raw.at("import");
        ImportConfig c;
        c.trace = resolve(get<std::string>(j, "trace", "import"));
        if (j.contains("safety")) c.safety = safety_from_json(j.at("safety"));
        c.tasks = get<std::vector<std::string>>(j, "tasks", "import");
        return c;
    }

    [[nodiscard]] fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }

private:
    template <typename T>
    static T get(const nlohmann::json& j, const char* key, const char* where) {
        try {
            return j.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string(where) + "." + key + ": " + e.what());
        }
    }
};

// ---- simulate ---------------------------------------------------------------------

struct SimulateSummary {
    int episodes = 0;
    std::size_t samples = 0;
    std::map<double, double> level_shares;
};

inline SimulateSummary summarize(std::span<const EpisodeTrace> traces) {
    SimulateSummary s;
    s.episodes = static_cast<int>(traces.size());
    std::map<double, std::size_t> counts;
    for (const auto& tr : traces) {
        s.samples += tr.samples.size();
        for (const auto& x : tr.samples) ++counts[x.s];
    }
    for (auto [level, n] : counts) s.level_shares[level] = static_cast<double>(n) / static_cast<double>(s.samples);
    return s;
}

inline std::uint64_t campaign_seed(std::uint64_t master) { return derive_seed(master, "simulate"); }

inline SimulateSummary cmd_simulate(const SceneConfig& scene, int episodes, std::uint64_t master_seed,
                                    const fs::path& out, unsigned threads = 1) {
    const auto traces = run_campaign(scene, episodes, campaign_seed(master_seed), threads);
    write_trace_csv(out, traces);
    return summarize(traces);
}

// ---- label ------------------------------------------------------------------------

struct LabelOutputs {
    fs::path clusters;
    fs::path labeled;
    fs::path train;
    fs::path test;
};

inline LabelOutputs label_outputs(const fs::path& dir) {
    return {dir / "clusters.json", dir / "labeled.csv", dir / "labeled_train.csv", dir / "labeled_test.csv"};
}

struct LabelSummary {
    ClusterModel model;
    std::size_t samples = 0;
    std::size_t train_samples = 0;
    std::size_t test_samples = 0;
    std::size_t noise_points = 0;
};

/// Clusters the scalings of a trace, labels every sample and splits by
/// episode into train/test files next to the cluster model.
inline LabelSummary cmd_label(const fs::path& trace, const LabelingConfig& cfg, std::uint64_t master_seed,
                              const fs::path& out_dir) {
    const auto samples = read_samples_csv(trace);
    if (samples.empty()) throw DataError(trace.string() + ": no samples");
    const auto values = scaling_values(samples);
    const auto clustered = cluster_scalings(values, cfg.eps, cfg.min_pts);
    const auto plain = to_samples(samples);
    const auto labeled = assign_labels(std::span<const Sample>(plain), clustered.model);
    const auto split = split_samples(labeled, cfg.train_fraction, derive_seed(master_seed, "split"));

    const auto paths = label_outputs(out_dir);
    write_json(paths.clusters, cluster_model_to_json(clustered.model));
    write_labeled_csv(paths.labeled, labeled);
    write_labeled_csv(paths.train, split.train);
    write_labeled_csv(paths.test, split.test);

    LabelSummary s;
    s.model = clustered.model;
    s.samples = labeled.size();
    s.train_samples = split.train.size();
    s.test_samples = split.test.size();
    s.noise_points = static_cast<std::size_t>(std::count(clustered.assignment.begin(), clustered.assignment.end(), -1));
    return s;
}

/// Labeled samples from a labeled CSV, or from a plain trace labeled with `model`.
inline std::vector<LabeledSample> load_labeled(const fs::path& path, const ClusterModel& model) {
    auto samples = read_samples_csv(path);
    for (auto& s : samples) {
        const int nearest = model.nearest(s.s);
        if (s.cluster_index == 0) {
            s.cluster_index = nearest;
        } else if (s.cluster_index != nearest) {
            throw DataError(path.string() + ": stored cluster labels disagree with the cluster model");
        }
    }
    return samples;
}

// ---- train ------------------------------------------------------------------------

inline std::uint64_t task_seed(std::uint64_t master, const std::string& name) {
    return derive_seed(master, ("train:" + name).c_str());
}

inline void write_training_log(const fs::path& path, const nn::TrainHistory& h) {
    std::string csv = "epoch,train_loss,validation_loss,learning_rate\n";
    for (const auto& e : h.epochs) {
        csv += std::to_string(e.epoch) + "," + detail::fmt(e.train_loss) + "," + detail::fmt(e.validation_loss) + "," +
               detail::fmt(e.learning_rate) + "\n";
    }
    detail::write_text(path, csv);
}

inline fs::path training_log_path(const fs::path& predictor) {
    return predictor.parent_path() / (predictor.stem().string() + ".log.csv");
}

struct TrainSummary {
    std::size_t rows = 0;
    std::size_t short_episodes = 0;
    nn::TrainHistory history;
};

/// Windows the labeled samples for `task`, adds training-input noise delta,
/// trains and writes the predictor plus `<stem>.log.csv`.
inline TrainSummary cmd_train(std::span<const LabeledSample> samples, const ClusterModel& clusters, const Task& task,
                              double delta, const nn::TrainConfig& cfg, const fs::path& out) {
    task.validate();
    const auto noisy = inject_noise(samples, NoiseSpec{delta, derive_seed(cfg.seed, "train-noise")});
    const auto ds = build_dataset(noisy, task.window());
    if (ds.rows() == 0) throw DataError("train: dataset is empty after windowing");
    auto result = train_task(task, ds, clusters, cfg);
    save_predictor(out, result.predictor);
    write_training_log(training_log_path(out), result.history);
    return {ds.rows(), ds.short_episodes, std::move(result.history)};
}

// ---- eval ---------------------------------------------------------------------------

struct EvalSummary {
    EvalReport base;
    SweepResult sweep;
    HeatmapGrid heatmap;
};

/// Plain evaluation, eval-only noise sweep, heatmap and report files.
inline EvalSummary cmd_eval(const TrainedPredictor& p, std::span<const LabeledSample> test_samples,
                            std::span<const double> deltas, double heatmap_cell, const EvalOptions& opts,
                            std::uint64_t seed, const fs::path& out_dir, const std::string& name = "predictor") {
    EvalSummary s;
    const auto ds = build_dataset(test_samples, p.task.window());
    s.base = evaluate(p, ds, opts, name);
    s.sweep = noise_sweep_eval_only(p, test_samples, deltas, seed, opts, name);
    s.heatmap = make_heatmap(p, ds, heatmap_cell);
    ReportBundle bundle;
    bundle.noise_table.push_back(s.sweep);
    if (!p.task.is_one_step()) bundle.horizon_table.push_back(s.base);
    bundle.heatmaps.push_back({name + "_heatmap", s.heatmap});
    render_report(bundle, out_dir);
    return s;
}

// ---- reproduce ------------------------------------------------------------------------

struct ReproduceSummary {
    SimulateSummary simulation;
    LabelSummary labels;
    ReportBundle report;
    std::vector<fs::path> files;
};

using ProgressFn = std::function<void(const std::string&)>;

namespace detail {

template <typename F>
auto run_stage(const std::string& stage, const ProgressFn& progress, F&& body) {
    if (progress) progress(stage);
    try {
        return body();
    } catch (const ConfigError& e) {
        throw ConfigError("stage '" + stage + "': " + e.what());
    } catch (const std::exception& e) {
        throw DataError("stage '" + stage + "': " + e.what());
    }
}

inline EvalOptions eval_options(const StaircaseSafetyFunction& safety, const EvaluationConfig& e) {
    return {safety.thresholds(), e.boundary_margin};
}

// Trains (and sweeps) every configured task on one labeled split; fills the bundle.
inline void train_and_evaluate(const std::vector<TaskConfig>& tasks, const std::vector<LabeledSample>& train,
                               const std::vector<LabeledSample>& test, const ClusterModel& clusters,
                               const nn::TrainConfig& base_cfg, const EvaluationConfig& eval,
                               const EvalOptions& opts, std::uint64_t master, const fs::path& model_dir,
                               const std::string& suffix, ReportBundle& bundle, const ProgressFn& progress) {
    for (const auto& tc : tasks) {
        const std::string name = tc.name + suffix;
        run_stage("train " + name, progress, [&] {
            nn::TrainConfig cfg = tc.training.value_or(base_cfg);
            cfg.seed = task_seed(master, name);
            TrainedPredictor base;
            if (tc.noise_sweep) {
                SweepResult sweep;
                if (eval.retrain_sweep) {
                    auto r = noise_sweep_retrain(tc.task, train, test, clusters, cfg, eval.deltas, cfg.seed, opts, name);
                    for (std::size_t k = 0; k < r.predictors.size(); ++k) {
                        const auto path = model_dir / (name + "_delta" + fmt(eval.deltas[k]) + ".json");
                        save_predictor(path, r.predictors[k]);
                        write_training_log(training_log_path(path), r.histories[k]);
                    }
                    // the delta = 0 model doubles as the plain predictor when the sweep starts at 0
                    if (eval.deltas.front() == 0.0) {
                        base = r.predictors.front();
                    } else {
                        cmd_train(train, clusters, tc.task, 0.0, cfg, model_dir / (name + ".json"));
                        base = load_predictor(model_dir / (name + ".json"));
                    }
                    sweep = std::move(r.result);
                } else {
                    cmd_train(train, clusters, tc.task, 0.0, cfg, model_dir / (name + ".json"));
                    base = load_predictor(model_dir / (name + ".json"));
                    sweep = noise_sweep_eval_only(base, test, eval.deltas, cfg.seed, opts, name);
                }
                bundle.noise_table.push_back(std::move(sweep));
            } else {
                cmd_train(train, clusters, tc.task, 0.0, cfg, model_dir / (name + ".json"));
                base = load_predictor(model_dir / (name + ".json"));
            }
            const auto test_ds = build_dataset(test, tc.task.window());
            if (!tc.task.is_one_step()) bundle.horizon_table.push_back(evaluate(base, test_ds, opts, name));
            if (tc.heatmap) {
                bundle.heatmaps.push_back({name + "_heatmap", make_heatmap(base, test_ds, eval.heatmap_cell)});
            }
            return 0;
        });
    }
}

inline std::vector<fs::path> list_files(const fs::path& root) {
    std::vector<fs::path> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

/// simulate -> label -> split -> train every task (noise sweeps included) ->
/// evaluate -> tables and heatmaps, all under `out_dir`, from one master seed.
/// A failing stage leaves earlier stage outputs on disk.
inline ReproduceSummary cmd_reproduce(const RunConfig& cfg, const fs::path& out_dir, const ProgressFn& progress = {}) {
    const std::uint64_t master = cfg.seed();
    struct Parsed {
        SceneConfig scene;
        LabelingConfig labeling;
        nn::TrainConfig training;
        EvaluationConfig evaluation;
        std::vector<TaskConfig> tasks;
        std::optional<ImportConfig> import;
        int episodes = 0;
        unsigned threads = 1;
    };
    const Parsed parsed = detail::run_stage("config", progress, [&] {
        Parsed p{cfg.scene(),  cfg.labeling(),      cfg.training(), cfg.evaluation(),
                 cfg.tasks(),  cfg.import_config(), cfg.episodes(), cfg.threads()};
        if (p.import) {
            for (const auto& name : p.import->tasks) {
                if (std::none_of(p.tasks.begin(), p.tasks.end(), [&](const TaskConfig& t) { return t.name == name; })) {
                    throw ConfigError("import: unknown task '" + name + "'");
                }
            }
        }
        return p;
    });
    const auto& tasks = parsed.tasks;
    const auto& import = parsed.import;
    const std::uint64_t import_seed = derive_seed(master, "import");

    nlohmann::json seeds = {{"simulate", campaign_seed(master)}, {"split", derive_seed(master, "split")}};
    for (const auto& t : tasks) seeds["train"][t.name] = task_seed(master, t.name);
    if (import) seeds["import"] = import_seed;

    ReproduceSummary summary;
    fs::create_directories(out_dir);
    write_json(out_dir / "run.json", {{"master_seed", master}, {"seeds", seeds}, {"config", cfg.raw}});

    const fs::path trace = out_dir / "trace.csv";
    summary.simulation = detail::run_stage("simulate", progress, [&] {
        return cmd_simulate(parsed.scene, parsed.episodes, master, trace, parsed.threads);
    });
    summary.labels = detail::run_stage("label", progress, [&] {
        return cmd_label(trace, parsed.labeling, master, out_dir / "labels");
    });

    struct Labeled {
        ClusterModel clusters;
        std::vector<LabeledSample> train;
        std::vector<LabeledSample> test;
    };
    auto load_split = [](const fs::path& dir) {
        const auto paths = label_outputs(dir);
        Labeled l;
        l.clusters = cluster_model_from_json(read_json_data(paths.clusters));
        l.train = load_labeled(paths.train, l.clusters);
        l.test = load_labeled(paths.test, l.clusters);
        return l;
    };
    const Labeled sim = detail::run_stage("load", progress, [&] { return load_split(out_dir / "labels"); });
    detail::train_and_evaluate(tasks, sim.train, sim.test, sim.clusters, parsed.training, parsed.evaluation,
                               detail::eval_options(parsed.scene.safety, parsed.evaluation), master,
                               out_dir / "models", "", summary.report, progress);

    if (import) {
        const Labeled imp = detail::run_stage("import", progress, [&] {
            cmd_label(import->trace, parsed.labeling, import_seed, out_dir / "import" / "labels");
            return load_split(out_dir / "import" / "labels");
        });
        std::vector<TaskConfig> itasks;
        for (const auto& name : import->tasks) {
            TaskConfig t = *std::find_if(tasks.begin(), tasks.end(), [&](const TaskConfig& x) { return x.name == name; });
            t.noise_sweep = false;
            t.heatmap = true;
            itasks.push_back(std::move(t));
        }
        detail::train_and_evaluate(itasks, imp.train, imp.test, imp.clusters, parsed.training, parsed.evaluation,
                                   detail::eval_options(import->safety.value_or(parsed.scene.safety), parsed.evaluation),
                                   import_seed, out_dir / "import" / "models", "_imported", summary.report, progress);
    }

    detail::run_stage("report", progress, [&] {
        render_report(summary.report, out_dir / "report");
        return 0;
    });
    summary.files = detail::list_files(out_dir);
    return summary;
}

}  // namespace scalepred
