// scalepred: simulate, label, train, evaluate and reproduce safety-scaling predictors.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scalepred/scalepred.hpp"

namespace sp = scalepred;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

std::optional<sp::RunConfig> maybe_config(const std::string& path) {
    if (path.empty()) return std::nullopt;
    return sp::RunConfig::load(path);
}

template <typename T>
T pick(const std::optional<T>& flag, const std::optional<sp::RunConfig>& cfg, T (*from)(const sp::RunConfig&),
       const char* what) {
    if (flag) return *flag;
    if (cfg) return from(*cfg);
    throw sp::ConfigError(std::string("no value for ") + what + ": pass the flag or --config");
}

void print_shares(const sp::SimulateSummary& s) {
    std::printf("episodes: %d\nsamples: %zu\n", s.episodes, s.samples);
    for (auto [level, share] : s.level_shares) std::printf("share s=%g: %.6f\n", level, share);
}

void print_model(const sp::ClusterModel& m) {
    std::printf("P = %zu\ncentroids:", m.size());
    for (double c : m.centroids) std::printf(" %.9g", c);
    std::printf("\n");
}

struct SimulateArgs {
    std::string config;
    std::optional<int> episodes;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string out;
};

int run_simulate(const SimulateArgs& a) {
    const auto cfg = sp::RunConfig::load(a.config);
    const int episodes = a.episodes.value_or(cfg.episodes());
    const auto seed = a.seed.value_or(cfg.seed());
    print_shares(sp::cmd_simulate(cfg.scene(), episodes, seed, a.out, a.threads.value_or(cfg.threads())));
    std::printf("wrote %s\n", a.out.c_str());
    return 0;
}

struct LabelArgs {
    std::string trace;
    std::string config;
    std::optional<double> eps;
    std::optional<int> min_pts;
    std::optional<double> train_fraction;
    std::optional<std::uint64_t> seed;
    std::string out;
};

int run_label(const LabelArgs& a) {
    const auto cfg = maybe_config(a.config);
    sp::LabelingConfig l;
    l.eps = pick<double>(a.eps, cfg, [](const sp::RunConfig& c) { return c.labeling().eps; }, "--eps");
    l.min_pts = pick<int>(a.min_pts, cfg, [](const sp::RunConfig& c) { return c.labeling().min_pts; }, "--min-pts");
    l.train_fraction = pick<double>(a.train_fraction, cfg,
                                    [](const sp::RunConfig& c) { return c.labeling().train_fraction; },
                                    "--train-fraction");
    const auto seed = pick<std::uint64_t>(a.seed, cfg, [](const sp::RunConfig& c) { return c.seed(); }, "--seed");
    if (!(l.eps > 0.0) || l.min_pts < 1) throw sp::ConfigError("need --eps > 0 and --min-pts >= 1");
    if (!(l.train_fraction > 0.0 && l.train_fraction < 1.0)) throw sp::ConfigError("--train-fraction must lie in (0,1)");

    const auto s = sp::cmd_label(a.trace, l, seed, a.out);
    print_model(s.model);
    std::printf("samples: %zu (train %zu, test %zu), noise points: %zu\n", s.samples, s.train_samples,
                s.test_samples, s.noise_points);
    return 0;
}

struct TrainArgs {
    std::string data;
    std::string clusters;
    std::string config;
    std::string task;
    std::optional<int> w;
    double delta = 0.0;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
    bool no_goals = false;
    std::string out;
};

int run_train(const TrainArgs& a) {
    const auto cfg = sp::RunConfig::load(a.config);
    auto tc = cfg.training();
    tc.seed = a.seed.value_or(cfg.seed());
    if (a.epochs) tc.max_epochs = *a.epochs;
    tc.validate();

    sp::Task task;
    task.kind = sp::task_kind_from_string(a.task);
    task.w = a.w.value_or(0);
    task.use_goals = !a.no_goals;
    task.validate();
    if (!(a.delta >= 0.0)) throw sp::ConfigError("--delta must be >= 0");

    const fs::path clusters_path = a.clusters.empty() ? fs::path(a.data).parent_path() / "clusters.json"
                                                      : fs::path(a.clusters);
    const auto clusters = sp::cluster_model_from_json(sp::read_json_data(clusters_path));
    const auto samples = sp::load_labeled(a.data, clusters);
    const auto s = sp::cmd_train(samples, clusters, task, a.delta, tc, a.out);
    std::printf("rows: %zu (short episodes %zu)\nepochs: %zu, best epoch: %d, best validation loss: %.9g\n", s.rows,
                s.short_episodes, s.history.epochs.size(), s.history.best_epoch, s.history.best_validation_loss);
    std::printf("wrote %s\n", a.out.c_str());
    return 0;
}

struct EvalArgs {
    std::string predictor;
    std::string data;
    std::string config;
    std::optional<std::vector<double>> deltas;
    std::optional<double> heatmap_cell;
    std::optional<std::uint64_t> seed;
    std::string out;
};

int run_eval(const EvalArgs& a) {
    const auto cfg = maybe_config(a.config);
    const auto deltas = pick<std::vector<double>>(
        a.deltas, cfg, [](const sp::RunConfig& c) { return c.evaluation().deltas; }, "--deltas");
    const double cell = pick<double>(a.heatmap_cell, cfg,
                                     [](const sp::RunConfig& c) { return c.evaluation().heatmap_cell; },
                                     "--heatmap-cell");
    const auto seed = pick<std::uint64_t>(a.seed, cfg, [](const sp::RunConfig& c) { return c.seed(); }, "--seed");
    sp::check_deltas(deltas);
    if (!(cell > 0.0)) throw sp::ConfigError("--heatmap-cell must be positive");

    sp::EvalOptions opts;
    if (cfg) {
        opts.thresholds = cfg->scene().safety.thresholds();
        opts.boundary_margin = cfg->evaluation().boundary_margin;
    }
    const auto p = sp::load_predictor(a.predictor);
    const auto test = sp::load_labeled(a.data, p.clusters);
    const auto name = fs::path(a.predictor).stem().string();
    const auto s = sp::cmd_eval(p, test, deltas, cell, opts, seed, a.out, name);

    std::printf("rows: %zu\nmse: %.9g\n", s.base.rows, s.base.mse);
    if (s.base.accuracy) std::printf("accuracy: %.6f\n", *s.base.accuracy);
    if (s.base.boundary_excluded_accuracy) {
        std::printf("boundary-excluded accuracy: %.6f (%zu rows)\n", *s.base.boundary_excluded_accuracy,
                    s.base.boundary_excluded_rows);
    }
    for (const auto& r : s.sweep.rows) std::printf("delta=%g mse=%.9g\n", r.delta, r.mse);
    std::printf("wrote %s\n", a.out.c_str());
    return 0;
}

int run_predict(const std::string& predictor, const std::vector<double>& input) {
    const auto p = sp::load_predictor(predictor);
    const std::size_t width = p.task.input_width();
    if (input.size() != width) {
        throw sp::ConfigError("--input needs " + std::to_string(width) + " values for this predictor, got " +
                              std::to_string(input.size()));
    }
    for (double v : input) {
        if (!std::isfinite(v)) throw sp::DataError("--input values must be finite");
    }
    const double s = sp::predict_scaling(p, input);
    if (p.task.is_classification()) {
        std::printf("cluster: %d\n", p.clusters.nearest(s));
    }
    std::printf("scaling: %.9g\n", s);
    return 0;
}

int run_reproduce(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out) {
    auto cfg = sp::RunConfig::load(config);
    if (seed) cfg.raw["seed"] = *seed;
    const auto s = sp::cmd_reproduce(cfg, out, [](const std::string& stage) {
        std::fprintf(stderr, "[reproduce] %s\n", stage.c_str());
    });
    print_shares(s.simulation);
    print_model(s.labels.model);
    for (const auto& row : s.report.noise_table) {
        std::printf("%s:", row.predictor.c_str());
        for (const auto& r : row.rows) std::printf(" delta=%g mse=%.6g", r.delta, r.mse);
        std::printf("\n");
    }
    for (const auto& r : s.report.horizon_table) std::printf("%s: w=%d mse=%.6g\n", r.predictor.c_str(), r.w, r.mse);
    std::printf("files: %zu under %s\n", s.files.size(), out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Safety-scaling prediction for human-robot collaboration"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Run a simulation campaign and write the trace CSV");
    c_sim->add_option("--config", sim.config, "Config file")->required()->check(CLI::ExistingFile);
    c_sim->add_option("--episodes", sim.episodes, "Episode count")->check(CLI::PositiveNumber);
    c_sim->add_option("--seed", sim.seed, "Master seed");
    c_sim->add_option("--threads", sim.threads, "Worker threads")->check(CLI::PositiveNumber);
    c_sim->add_option("--out", sim.out, "Trace CSV path")->required();

    LabelArgs lab;
    auto* c_lab = app.add_subcommand("label", "Cluster scalings, label samples and split by episode");
    c_lab->add_option("trace", lab.trace, "Trace CSV")->required()->check(CLI::ExistingFile);
    c_lab->add_option("--config", lab.config, "Config file")->check(CLI::ExistingFile);
    c_lab->add_option("--eps", lab.eps, "DBSCAN radius");
    c_lab->add_option("--min-pts", lab.min_pts, "DBSCAN core threshold");
    c_lab->add_option("--train-fraction", lab.train_fraction, "Share of episodes for training");
    c_lab->add_option("--seed", lab.seed, "Master seed for the split");
    c_lab->add_option("--out", lab.out, "Output directory")->required();

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train", "Train a predictor on labeled samples");
    c_tr->add_option("data", tr.data, "Labeled CSV")->required()->check(CLI::ExistingFile);
    c_tr->add_option("--config", tr.config, "Config file (training section)")->required()->check(CLI::ExistingFile);
    c_tr->add_option("--clusters", tr.clusters, "Cluster model (default: clusters.json next to the data)");
    c_tr->add_option("--task", tr.task, "classify_one_step|classify_n_step|regress_one_step|regress_n_step|average")
        ->required();
    c_tr->add_option("--w", tr.w, "Window length in ticks");
    c_tr->add_option("--delta", tr.delta, "Training noise on the human position (m)");
    c_tr->add_option("--seed", tr.seed, "Training seed");
    c_tr->add_option("--epochs", tr.epochs, "Override max epochs")->check(CLI::PositiveNumber);
    c_tr->add_flag("--no-goals", tr.no_goals, "Drop goal features");
    c_tr->add_option("--out", tr.out, "Predictor file")->required();

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval", "Evaluate a predictor: noise sweep, heatmap, report");
    c_ev->add_option("predictor", ev.predictor, "Predictor file")->required()->check(CLI::ExistingFile);
    c_ev->add_option("data", ev.data, "Test CSV (labeled or plain trace)")->required()->check(CLI::ExistingFile);
    c_ev->add_option("--config", ev.config, "Config file")->check(CLI::ExistingFile);
    c_ev->add_option("--deltas", ev.deltas, "Noise levels (m)")->delimiter(',');
    c_ev->add_option("--heatmap-cell", ev.heatmap_cell, "Heatmap cell size (m)");
    c_ev->add_option("--seed", ev.seed, "Noise seed");
    c_ev->add_option("--out", ev.out, "Output directory")->required();

    std::string pred_path;
    std::vector<double> pred_input;
    auto* c_pr = app.add_subcommand("predict", "Single-row inference");
    c_pr->add_option("predictor", pred_path, "Predictor file")->required()->check(CLI::ExistingFile);
    c_pr->add_option("--input", pred_input, "Feature row: xr, xh[, gr, gh]")->required()->delimiter(',');

    std::string rep_config;
    std::string rep_out;
    std::optional<std::uint64_t> rep_seed;
    auto* c_rep = app.add_subcommand("reproduce", "Full pipeline from one config and master seed");
    c_rep->add_option("--config", rep_config, "Config file")->required()->check(CLI::ExistingFile);
    c_rep->add_option("--seed", rep_seed, "Override master seed");
    c_rep->add_option("--out", rep_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*c_sim) return run_simulate(sim);
        if (*c_lab) return run_label(lab);
        if (*c_tr) return run_train(tr);
        if (*c_ev) return run_eval(ev);
        if (*c_pr) return run_predict(pred_path, pred_input);
        if (*c_rep) return run_reproduce(rep_config, rep_seed, rep_out);
    } catch (const sp::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitConfig;
}
