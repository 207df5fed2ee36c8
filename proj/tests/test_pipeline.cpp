#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <catch_amalgamated.hpp>

#include "scalepred/io.hpp"
#include "scalepred/pipeline.hpp"

using namespace scalepred;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigDir = SCALEPRED_CONFIG_DIR;

struct Run {
    int code = -1;
    std::string out;
};

// Runs the CLI with `args`, capturing stdout+stderr.
Run cli(const std::string& args, const fs::path& scratch) {
    fs::create_directories(scratch);
    const auto log = scratch / "cli.log";
    const std::string cmd = std::string("\"") + SCALEPRED_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

fs::path scratch_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("scalepred_pipeline_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("CLI exit codes", "[pipeline][cli]") {
    const auto dir = scratch_dir("codes");
    CHECK(cli("", dir).code == 2);
    CHECK(cli("bogus", dir).code == 2);
    CHECK(cli("simulate --config " + q(dir / "missing.json") + " --out " + q(dir / "t.csv"), dir).code == 2);
    CHECK(cli("simulate --config " + q(kConfigDir / "smoke.json") + " --episodes 0 --out " + q(dir / "t.csv"), dir).code ==
          2);

    detail::write_text(dir / "broken.json", "{ not json");
    CHECK(cli("reproduce --config " + q(dir / "broken.json") + " --out " + q(dir / "r"), dir).code == 2);

    detail::write_text(dir / "garbage.csv", "this,is,not,a,trace\n1,2\n");
    const auto bad = cli("label " + q(dir / "garbage.csv") + " --eps 0.02 --min-pts 10 --train-fraction 0.8 --seed 1 --out " +
                             q(dir / "lab"),
                         dir);
    CHECK(bad.code == 3);
    CHECK(bad.out.find("error:") != std::string::npos);

    // label without a config needs every labeling value
    CHECK(cli("label " + q(dir / "garbage.csv") + " --out " + q(dir / "lab"), dir).code == 2);
    fs::remove_all(dir);
}

TEST_CASE("simulate is deterministic for a fixed seed", "[pipeline][cli]") {
    const auto dir = scratch_dir("sim");
    const auto cfg = q(kConfigDir / "default.json");
    REQUIRE(cli("simulate --config " + cfg + " --episodes 1 --seed 7 --out " + q(dir / "a.csv"), dir).code == 0);
    REQUIRE(cli("simulate --config " + cfg + " --episodes 1 --seed 7 --out " + q(dir / "b.csv"), dir).code == 0);
    REQUIRE(cli("simulate --config " + cfg + " --episodes 1 --seed 8 --out " + q(dir / "c.csv"), dir).code == 0);
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
    CHECK(slurp(dir / "a.csv") != slurp(dir / "c.csv"));
    CHECK(slurp(dir / "a.csv").rfind(std::string(kTraceHeader), 0) == 0);
    fs::remove_all(dir);
}

TEST_CASE("label, train, eval and predict through the CLI", "[pipeline][cli]") {
    const auto dir = scratch_dir("chain");
    const auto cfg = q(kConfigDir / "smoke.json");
    REQUIRE(cli("simulate --config " + cfg + " --episodes 40 --out " + q(dir / "trace.csv"), dir).code == 0);
    const auto lab = cli("label " + q(dir / "trace.csv") + " --config " + cfg + " --out " + q(dir / "labels"), dir);
    REQUIRE(lab.code == 0);

    const auto model = cluster_model_from_json(read_json_data(dir / "labels" / "clusters.json"));
    REQUIRE(model.size() == 5);
    const double levels[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(model.centroids[j] - levels[j]) < 1e-9);

    // relabeling the labeled file reproduces the same model and labels
    REQUIRE(cli("label " + q(dir / "labels" / "labeled.csv") + " --config " + cfg + " --out " + q(dir / "relabel"), dir)
                .code == 0);
    CHECK(slurp(dir / "relabel" / "clusters.json") == slurp(dir / "labels" / "clusters.json"));
    CHECK(slurp(dir / "relabel" / "labeled.csv") == slurp(dir / "labels" / "labeled.csv"));
    CHECK(slurp(dir / "relabel" / "labeled_test.csv") == slurp(dir / "labels" / "labeled_test.csv"));

    const auto train = cli("train " + q(dir / "labels" / "labeled_train.csv") + " --config " + cfg +
                               " --task classify_one_step --out " + q(dir / "cls.json"),
                           dir);
    REQUIRE(train.code == 0);
    CHECK(fs::exists(dir / "cls.log.csv"));

    const auto ev = cli("eval " + q(dir / "cls.json") + " " + q(dir / "labels" / "labeled_test.csv") + " --config " + cfg +
                            " --deltas 0 --out " + q(dir / "eval"),
                        dir);
    REQUIRE(ev.code == 0);
    const auto table = slurp(dir / "eval" / "table_noise.csv");
    CHECK(std::count(table.begin(), table.end(), '\n') == 2);
    CHECK(table.rfind("predictor,delta=0,avg\n", 0) == 0);
    CHECK(fs::exists(dir / "eval" / "cls_heatmap.csv"));

    const auto pr = cli("predict " + q(dir / "cls.json") + " --input 0.35,0,1.2,-3,0,1", dir);
    REQUIRE(pr.code == 0);
    CHECK(pr.out.find("cluster: ") != std::string::npos);
    CHECK(pr.out.find("scaling: ") != std::string::npos);
    CHECK(cli("predict " + q(dir / "cls.json") + " --input 0.35,0,1.2", dir).code == 2);

    // an n-step task on the one-step predictor's data: bad --w for a one-step kind
    CHECK(cli("train " + q(dir / "labels" / "labeled_train.csv") + " --config " + cfg +
                  " --task regress_one_step --w 5 --out " + q(dir / "x.json"),
              dir)
              .code == 2);
    fs::remove_all(dir);
}

TEST_CASE("a constant-scaling trace yields one cluster", "[pipeline]") {
    const auto dir = scratch_dir("const");
    std::vector<EpisodeTrace> traces(10);
    for (int e = 0; e < 10; ++e) {
        traces[static_cast<std::size_t>(e)].episode_id = e;
        for (int i = 0; i < 50; ++i) {
            Sample s;
            s.episode = e;
            s.t = i * 0.1;
            s.xr = {0.3, 0.0, 1.0};
            s.xh = {-3.0 + 0.01 * i, 0.0, 1.0};
            s.s = 1.0;
            traces[static_cast<std::size_t>(e)].samples.push_back(s);
        }
    }
    write_trace_csv(dir / "t.csv", traces);
    const auto s = cmd_label(dir / "t.csv", {0.02, 10, 0.8}, 3, dir / "labels");
    REQUIRE(s.model.size() == 1);
    CHECK(s.model.centroids[0] == 1.0);
    CHECK(s.noise_points == 0);
    CHECK(s.train_samples == 400);
    CHECK(s.test_samples == 100);
    fs::remove_all(dir);
}

TEST_CASE("config parsing", "[pipeline][config]") {
    auto cfg = RunConfig::load(kConfigDir / "default.json");
    CHECK(cfg.episodes() == 1000);
    CHECK(cfg.labeling().min_pts == 10);
    const auto tasks = cfg.tasks();
    REQUIRE(tasks.size() >= 6);
    for (const auto& t : tasks) CHECK_FALSE(t.training.has_value());
    CHECK_FALSE(cfg.import_config().has_value());

    // per-task training override merges onto the global section
    cfg.raw["tasks"][0]["training"] = {{"max_epochs", 3}, {"learning_rate", 0.01}};
    const auto over = cfg.tasks();
    REQUIRE(over[0].training.has_value());
    CHECK(over[0].training->max_epochs == 3);
    CHECK(over[0].training->adam.learning_rate == 0.01);
    CHECK(over[0].training->batch_size == cfg.training().batch_size);
    CHECK_FALSE(over[1].training.has_value());

    cfg.raw["tasks"][0]["training"] = {{"max_epochs", 0}};
    CHECK_THROWS_AS(cfg.tasks(), ConfigError);

    auto missing = RunConfig::load(kConfigDir / "default.json");
    missing.raw.erase("labeling");
    CHECK_THROWS_AS(missing.labeling(), ConfigError);
    missing.raw["evaluation"]["sweep_mode"] = "sometimes";
    CHECK_THROWS_AS(missing.evaluation(), ConfigError);
    missing.raw["evaluation"]["sweep_mode"] = "retrain";
    missing.raw["evaluation"]["deltas"] = {0.05, 0.0};
    CHECK_THROWS_AS(missing.evaluation(), ConfigError);
}

TEST_CASE("a failing stage keeps earlier outputs", "[pipeline][reproduce]") {
    const auto dir = scratch_dir("fault");
    auto cfg = RunConfig::load(kConfigDir / "smoke.json");
    cfg.raw["import"] = {{"trace", (dir / "does_not_exist.csv").string()}, {"tasks", {"classification_one_step"}}};
    std::vector<std::string> stages;
    try {
        cmd_reproduce(cfg, dir / "out", [&](const std::string& s) { stages.push_back(s); });
        FAIL("reproduce should fail in the import stage");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("stage 'import'") != std::string::npos);
    }
    REQUIRE_FALSE(stages.empty());
    CHECK(stages.back() == "import");
    CHECK(fs::exists(dir / "out" / "run.json"));
    CHECK(fs::exists(dir / "out" / "trace.csv"));
    CHECK(fs::exists(dir / "out" / "labels" / "clusters.json"));
    CHECK(fs::exists(dir / "out" / "models" / "regression_one_step_delta0.json"));
    CHECK_FALSE(fs::exists(dir / "out" / "report"));

    // an unknown import task is caught before anything runs
    cfg.raw["import"]["tasks"] = {"nope"};
    CHECK_THROWS_AS(cmd_reproduce(cfg, dir / "out2"), ConfigError);
    CHECK_FALSE(fs::exists(dir / "out2"));
    fs::remove_all(dir);
}
