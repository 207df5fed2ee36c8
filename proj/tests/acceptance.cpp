// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Also writes the lines to acceptance_report.txt.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <thread>

#include "scalepred/scalepred.hpp"

using namespace scalepred;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct Reporter {
    std::vector<std::string> lines;
    bool all_passed = true;

    void record(int id, bool pass, const std::string& what) {
        const std::string line = std::string(pass ? "PASS" : "FAIL") + " criterion " + std::to_string(id) + ": " + what;
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
        lines.push_back(line);
        all_passed = all_passed && pass;
    }

    // Criteria that throw are failures with the error as the reason.
    void run(int id, const std::function<void()>& body) {
        try {
            body();
        } catch (const std::exception& e) {
            record(id, false, std::string("error: ") + e.what());
        }
    }
};

void note(const std::string& s) {
    std::fprintf(stderr, "  %s\n", s.c_str());
    std::fflush(stderr);
}

double scan_oracle(const std::vector<double>& levels, const std::vector<double>& thresholds, double d) {
    double lo = 0.0;
    for (std::size_t p = 0; p < thresholds.size(); ++p) {
        const bool inside = (p == 0) ? (d >= lo && d <= thresholds[p]) : (d > lo && d <= thresholds[p]);
        if (inside) return levels[p];
        lo = thresholds[p];
    }
    return levels.back();
}

nn::Matrix random_batch(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    nn::Matrix x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
    return x;
}

struct Trained {
    TrainedPredictor predictor;
    EvalReport report;
    double seconds = 0.0;
};

// One training at input noise delta (train and test), evaluated on the test split.
Trained train_eval(const Task& task, const std::vector<LabeledSample>& train, const std::vector<LabeledSample>& test,
                   const ClusterModel& clusters, nn::TrainConfig cfg, std::uint64_t seed, double delta,
                   std::size_t delta_index, const EvalOptions& opts, const std::string& name) {
    cfg.seed = seed;
    const auto noisy_train = inject_noise(std::span<const LabeledSample>(train), NoiseSpec{delta, noise_seed(seed, delta_index, "train-noise")});
    const auto noisy_test = inject_noise(std::span<const LabeledSample>(test), NoiseSpec{delta, noise_seed(seed, delta_index, "test-noise")});
    const auto t0 = Clock::now();
    auto r = train_task(task, build_dataset(noisy_train, task.window()), clusters, cfg);
    Trained out;
    out.seconds = seconds_since(t0);
    out.report = evaluate(r.predictor, build_dataset(noisy_test, task.window()), opts, name);
    out.report.delta = delta;
    out.predictor = std::move(r.predictor);
    note(fmt("%s delta=%g: mse %.6g, %zu epochs (best %d), %.1f s", name.c_str(), delta, out.report.mse,
             r.history.epochs.size(), r.history.best_epoch, out.seconds));
    return out;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + SCALEPRED_CLI + "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> checksums(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& rel : detail::list_files(root)) out[rel.generic_string()] = file_fingerprint(root / rel);
    return out;
}

}  // namespace

int main() {
    Reporter rep;
    const fs::path config_dir = SCALEPRED_CONFIG_DIR;
    const auto cfg = RunConfig::load(config_dir / "default.json");
    const std::uint64_t master = cfg.seed();
    const auto scene = cfg.scene();
    const auto labeling = cfg.labeling();
    const auto eval_cfg = cfg.evaluation();
    const EvalOptions opts{scene.safety.thresholds(), eval_cfg.boundary_margin};

    // Shorter schedule than the config default (200 epochs, patience 20),
    // with learning-rate decay on plateaus to compensate.
    nlohmann::json training_json = cfg.section("training");
    training_json["max_epochs"] = 30;
    training_json["patience"] = 10;
    training_json["lr_plateau_patience"] = 3;
    training_json["lr_decay"] = 0.5;
    const nn::TrainConfig train_cfg = RunConfig::parse_training(training_json);

    // 1. staircase oracle
    rep.run(1, [&] {
        const auto t0 = Clock::now();
        std::mt19937_64 rng(derive_seed(master, "acceptance:staircase"));
        std::uniform_int_distribution<int> count(1, 10);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::size_t mismatches = 0;
        std::size_t evaluated = 0;
        for (int k = 0; k < 100; ++k) {
            const int P = count(rng);
            std::vector<double> levels;
            while (static_cast<int>(levels.size()) < P) {
                levels.push_back(u(rng));
                std::sort(levels.begin(), levels.end());
                levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
            }
            std::vector<double> thresholds;
            double d = 0.0;
            for (int i = 0; i + 1 < P; ++i) thresholds.push_back(d += 0.01 + 1.5 * u(rng));
            const StaircaseSafetyFunction f(levels, thresholds);
            std::uniform_real_distribution<double> dist(0.0, d + 2.0);
            for (int i = 0; i < 100000; ++i) {
                // every 97th draw sits exactly on a threshold
                const double x = (i % 97 == 0 && !thresholds.empty())
                                     ? thresholds[static_cast<std::size_t>(i) % thresholds.size()]
                                     : dist(rng);
                mismatches += eval_scaling_by_distance(f, x) != scan_oracle(levels, thresholds, x);
                ++evaluated;
            }
        }
        const double secs = seconds_since(t0);
        rep.record(1, mismatches == 0 && secs < 5.0,
                   fmt("staircase vs interval scan: %zu mismatches in %zu evaluations, %.2f s (limit 5 s)", mismatches,
                       evaluated, secs));
    });

    // campaign shared by criteria 2, 4-8 and 10
    const unsigned threads = std::max(1U, std::thread::hardware_concurrency());
    auto t_sim = Clock::now();
    const auto traces = run_campaign(scene, cfg.episodes(), campaign_seed(master), threads);
    note(fmt("simulated %d episodes in %.1f s on %u threads", cfg.episodes(), seconds_since(t_sim), threads));

    ClusterResult clustered;
    std::vector<LabeledSample> train_samples;
    std::vector<LabeledSample> test_samples;
    std::vector<double> values;

    // 2. clustering recovery (labeling stage: cluster, label, split)
    rep.run(2, [&] {
        const auto t0 = Clock::now();
        for (const auto& tr : traces) {
            for (const auto& s : tr.samples) values.push_back(s.s);
        }
        clustered = cluster_scalings(values, labeling.eps, labeling.min_pts);
        const auto labeled = assign_labels(std::span<const EpisodeTrace>(traces), clustered.model);
        auto split = split_samples(labeled, labeling.train_fraction, derive_seed(master, "split"));
        train_samples = std::move(split.train);
        test_samples = std::move(split.test);
        const double secs = seconds_since(t0);

        const double levels[] = {0.0, 0.25, 0.5, 0.75, 1.0};
        double worst = 0.0;
        const bool five = clustered.model.size() == 5;
        if (five) {
            for (std::size_t j = 0; j < 5; ++j) worst = std::max(worst, std::abs(clustered.model.centroids[j] - levels[j]));
        }
        std::string cs;
        for (double c : clustered.model.centroids) cs += fmt("%s%.6g", cs.empty() ? "" : ", ", c);
        rep.record(2, five && worst <= 0.02 && secs < 30.0,
                   fmt("P = %zu, centroids {%s}, max deviation %.3g (limit 0.02), labeling %.2f s (limit 30 s)",
                       clustered.model.size(), cs.c_str(), worst, secs));
    });

    // 3. gradient fidelity on the three presets
    rep.run(3, [&] {
        const auto t0 = Clock::now();
        const std::size_t P = std::max<std::size_t>(2, clustered.model.size());
        std::mt19937_64 rng(derive_seed(master, "acceptance:gradcheck"));
        std::uniform_int_distribution<int> cls(0, static_cast<int>(P) - 1);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        nn::Targets t;
        for (int i = 0; i < 16; ++i) {
            t.classes.push_back(cls(rng));
            t.values.push_back(u(rng));
        }
        const auto a = nn::gradient_check(build_classification_net(6, P, 1), random_batch(16, 6, 2), t,
                                          nn::LossKind::cross_entropy, 1e-5, 1e-4);
        const auto b = nn::gradient_check(build_regression_net(12, 3), random_batch(16, 12, 4), t, nn::LossKind::mse,
                                          1e-5, 1e-4);
        const auto c =
            nn::gradient_check(build_mixed_net(12, P, 5), random_batch(16, 12, 6), t, nn::LossKind::mse, 1e-5, 1e-4);
        const double secs = seconds_since(t0);
        rep.record(3, a.passed && b.passed && c.passed && secs < 60.0,
                   fmt("max relative error classification %.3g (%zu coords, %zu bn-cancelled biases), regression %.3g (%zu coords, %zu at "
                       "kinks), mixed %.3g (%zu coords); tolerance 1e-4; %.2f s (limit 60 s)",
                       a.max_relative_error, a.checked, a.excluded_invariant, b.max_relative_error, b.checked, b.skipped_at_kinks,
                       c.max_relative_error, c.checked, secs));
    });

    const auto tasks = cfg.tasks();
    auto find_task = [&](TaskKind kind, int w) -> const TaskConfig& {
        for (const auto& t : tasks) {
            if (t.task.kind == kind && t.task.w == w) return t;
        }
        throw ConfigError("default config has no " + to_string(kind) + " task with w = " + std::to_string(w));
    };

    // 4-6. retrain-mode sweeps for the two one-step nets; the delta = 0 models serve criteria 4 and 6
    std::vector<Trained> reg_sweep;
    std::vector<Trained> cls_sweep;
    rep.run(4, [&] {
        for (auto* sweep : {&reg_sweep, &cls_sweep}) {
            const auto& tc = find_task(sweep == &reg_sweep ? TaskKind::regress_one_step : TaskKind::classify_one_step, 0);
            const auto seed = task_seed(master, tc.name);
            for (std::size_t k = 0; k < eval_cfg.deltas.size(); ++k) {
                sweep->push_back(train_eval(tc.task, train_samples, test_samples, clustered.model,
                                            tc.training.value_or(train_cfg), seed, eval_cfg.deltas[k], k, opts,
                                            tc.name));
            }
        }
        if (eval_cfg.deltas.front() != 0.0) throw ConfigError("evaluation deltas must start at 0");
        const auto& r = reg_sweep.front();
        const auto& c = cls_sweep.front();
        rep.record(4, r.report.mse <= 2e-3 && c.report.mse <= 3e-3 && r.seconds <= 600.0 && c.seconds <= 600.0,
                   fmt("noiseless test MSE regression %.4g (limit 2e-3, %.0f s), classification %.4g (limit 3e-3, "
                       "%.0f s); training limit 600 s each",
                       r.report.mse, r.seconds, c.report.mse, c.seconds));
    });

    rep.run(5, [&] {
        if (reg_sweep.size() != eval_cfg.deltas.size() || cls_sweep.size() != eval_cfg.deltas.size()) {
            throw DataError("sweep did not complete");
        }
        auto describe = [](const std::vector<Trained>& s, bool& increasing, double& secs) {
            std::string out;
            increasing = true;
            secs = 0.0;
            for (std::size_t k = 0; k < s.size(); ++k) {
                out += fmt("%s%.4g", k ? " < " : "", s[k].report.mse);
                if (k > 0 && !(s[k].report.mse > s[k - 1].report.mse)) increasing = false;
                secs += s[k].seconds;
            }
            return out;
        };
        bool reg_up = false;
        bool cls_up = false;
        double reg_s = 0.0;
        double cls_s = 0.0;
        const auto reg = describe(reg_sweep, reg_up, reg_s);
        const auto cls = describe(cls_sweep, cls_up, cls_s);
        std::string ds;
        for (double d : eval_cfg.deltas) ds += fmt("%s%g", ds.empty() ? "" : ", ", d);
        rep.record(5, reg_up && cls_up && reg_s <= 1800.0 && cls_s <= 1800.0,
                   fmt("MSE over delta {%s}: regression %s (%s, %.0f s), classification %s (%s, %.0f s); limit "
                       "1800 s per sweep",
                       ds.c_str(), reg.c_str(), reg_up ? "increasing" : "NOT increasing", reg_s, cls.c_str(),
                       cls_up ? "increasing" : "NOT increasing", cls_s));
    });

    rep.run(6, [&] {
        if (cls_sweep.empty()) throw DataError("no noiseless classification model");
        const auto& r = cls_sweep.front().report;
        const double acc = r.boundary_excluded_accuracy.value_or(0.0);
        rep.record(6, r.boundary_excluded_accuracy.has_value() && acc >= 0.95,
                   fmt("boundary-excluded accuracy %.4f on %zu of %zu test rows (limit 0.95; overall %.4f)", acc,
                       r.boundary_excluded_rows, r.rows, r.accuracy.value_or(0.0)));
    });

    // 7. N-step at w = 20, plus the goal ablation
    rep.run(7, [&] {
        const auto& c = find_task(TaskKind::classify_n_step, 20);
        const auto& r = find_task(TaskKind::regress_n_step, 20);
        const auto cls = train_eval(c.task, train_samples, test_samples, clustered.model,
                                    c.training.value_or(train_cfg), task_seed(master, c.name), 0.0, 0, opts, c.name);
        const auto reg = train_eval(r.task, train_samples, test_samples, clustered.model,
                                    r.training.value_or(train_cfg), task_seed(master, r.name), 0.0, 0, opts, r.name);
        // same seed as the 12-wide net: only the goal columns differ
        Task ablation = r.task;
        ablation.use_goals = false;
        const std::string ablation_name = r.name + "_no_goals";
        const auto six = train_eval(ablation, train_samples, test_samples, clustered.model,
                                    r.training.value_or(train_cfg), task_seed(master, r.name), 0.0, 0, opts,
                                    ablation_name);
        rep.record(7, cls.report.mse <= 3e-2 && reg.report.mse <= 3e-2 && reg.report.mse < six.report.mse,
                   fmt("w=20 test MSE classification %.4g, regression %.4g (limit 3e-2); 12-wide regression %.4g vs "
                       "6-wide %.4g",
                       cls.report.mse, reg.report.mse, reg.report.mse, six.report.mse));
    });

    // 8. average windows
    rep.run(8, [&] {
        std::string parts;
        bool ok = true;
        for (int w : {140, 190}) {
            const auto& a = find_task(TaskKind::average_window, w);
            const auto r = train_eval(a.task, train_samples, test_samples, clustered.model,
                                      a.training.value_or(train_cfg), task_seed(master, a.name), 0.0, 0, opts, a.name);
            const auto test_ds = build_dataset(test_samples, a.task.window());
            const auto heat = make_heatmap(r.predictor, test_ds, eval_cfg.heatmap_cell);
            const bool conserved = heat.total_count() == test_ds.rows();
            ok = ok && r.report.mse <= 2e-2 && conserved;
            parts += fmt("%sw=%d MSE %.4g, heatmap %zu/%zu rows", parts.empty() ? "" : "; ", w, r.report.mse,
                         heat.total_count(), test_ds.rows());
        }
        rep.record(8, ok, parts + " (limit 2e-2, counts must match)");
    });

    // 9. determinism of the full pipeline through the CLI
    rep.run(9, [&] {
        const auto root = fs::temp_directory_path() / "scalepred_acceptance_reproduce";
        fs::remove_all(root);
        const std::string config = "\"" + (config_dir / "smoke.json").string() + "\"";
        const int a = run_cli("reproduce --config " + config + " --out \"" + (root / "a").string() + "\"");
        const int b = run_cli("reproduce --config " + config + " --out \"" + (root / "b").string() + "\"");
        if (a != 0 || b != 0) throw DataError(fmt("reproduce exited with %d and %d", a, b));
        const auto ca = checksums(root / "a");
        const auto cb = checksums(root / "b");
        std::size_t differing = 0;
        for (const auto& [file, sum] : ca) {
            const auto it = cb.find(file);
            differing += it == cb.end() || it->second != sum;
        }
        rep.record(9, ca.size() == cb.size() && differing == 0 && !ca.empty(),
                   fmt("two reproduce runs: %zu and %zu files, %zu with differing checksums", ca.size(), cb.size(),
                       differing));
        fs::remove_all(root);
    });

    // 10. exact centroid means and window averages
    rep.run(10, [&] {
        std::vector<long double> sums(clustered.model.size(), 0.0L);
        std::vector<std::size_t> counts(clustered.model.size(), 0);
        for (std::size_t i = 0; i < values.size(); ++i) {
            const int a = clustered.assignment[i];
            if (a < 0) continue;
            sums[static_cast<std::size_t>(a)] += values[i];
            ++counts[static_cast<std::size_t>(a)];
        }
        long double worst_centroid = 0.0L;
        for (std::size_t j = 0; j < sums.size(); ++j) {
            const long double mean = sums[j] / static_cast<long double>(counts[j]);
            worst_centroid = std::max(worst_centroid, std::abs(mean - clustered.model.centroids[j]));
        }

        double worst_window = 0.0;
        std::size_t checked = 0;
        for (int w : {140, 190}) {
            const auto ds = build_dataset(train_samples, {w, WindowMode::average});
            // rows follow sample order: episode by episode, window start ascending
            std::size_t row = 0;
            std::size_t begin = 0;
            while (begin < train_samples.size()) {
                std::size_t end = begin;
                while (end < train_samples.size() && train_samples[end].episode == train_samples[begin].episode) ++end;
                for (std::size_t i = begin; i + static_cast<std::size_t>(w) < end; ++i, ++row) {
                    long double sum = 0.0L;
                    for (std::size_t j = i; j <= i + static_cast<std::size_t>(w); ++j) sum += train_samples[j].s;
                    const double ref = static_cast<double>(sum / (w + 1));
                    worst_window = std::max(worst_window, std::abs(ds.target_s.at(row) - ref));
                    ++checked;
                }
                begin = end;
            }
            if (row != ds.rows()) throw DataError("window row count differs from the direct enumeration");
        }
        rep.record(10, worst_centroid <= 1e-12L && worst_window <= 1e-12,
                   fmt("max |centroid - member mean| %.3g over %zu clusters; max |window target - direct sum| %.3g "
                       "over %zu windows (limit 1e-12)",
                       static_cast<double>(worst_centroid), sums.size(), worst_window, checked));
    });

    std::ofstream report("acceptance_report.txt");
    for (const auto& l : rep.lines) report << l << "\n";
    return rep.all_passed ? 0 : 1;
}
