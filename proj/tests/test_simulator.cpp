#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <catch_amalgamated.hpp>

#include "scalepred/io.hpp"
#include "scalepred/simulator.hpp"

using namespace scalepred;
using Catch::Matchers::WithinAbs;

namespace {

SceneConfig default_scene() {
    return scene_from_json(read_json_file(SCALEPRED_CONFIG_DIR "/default.json").at("scene"));
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double sample_std(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_CASE("robot_tick single steps", "[sim]") {
    Path path{{{1.0, 0.0, 0.0}}, 0};
    auto r = robot_tick({0, 0, 0}, path, 1.0, 1.0, 0.1);
    CHECK_THAT(r.pos.x, WithinAbs(0.1, 1e-15));
    CHECK(r.pos.y == 0.0);
    CHECK_FALSE(r.path.done());

    auto halt = robot_tick({0.3, 0.2, 0.1}, path, 0.0, 1.0, 0.1);
    CHECK(halt.pos == Position3{0.3, 0.2, 0.1});
    CHECK(halt.path.next == 0);
}

TEST_CASE("robot_tick consumes waypoints and carries leftover budget", "[sim]") {
    Path path{{{0.05, 0.0, 0.0}, {0.05, 1.0, 0.0}}, 0};
    auto r = robot_tick({0, 0, 0}, path, 1.0, 1.0, 0.1);
    CHECK(r.path.next == 1);
    CHECK_THAT(r.pos.x, WithinAbs(0.05, 1e-15));
    CHECK_THAT(r.pos.y, WithinAbs(0.05, 1e-15));

    Path last{{{0.02, 0.0, 0.0}}, 0};
    auto end = robot_tick({0, 0, 0}, last, 1.0, 1.0, 0.1);
    CHECK(end.path.done());
    CHECK(end.pos == Position3{0.02, 0.0, 0.0});
}

TEST_CASE("traversal time matches length / (s v)", "[sim][oracle]") {
    // 2 m at s = 0.5, v = 1: closed form 4.0 s
    Path path{{{1.0, 0.0, 0.0}, {1.0, 1.0, 0.0}}, 0};
    Position3 pos{0, 0, 0};
    int ticks = 0;
    while (!path.done()) {
        auto r = robot_tick(pos, std::move(path), 0.5, 1.0, 0.1);
        pos = r.pos;
        path = std::move(r.path);
        ++ticks;
        REQUIRE(ticks < 1000);
    }
    const double t = ticks * 0.1;
    CHECK(std::abs(t - 4.0) <= 0.1 + 1e-9);
}

TEST_CASE("plan_human_path without noise is the straight midpoint route", "[sim]") {
    Rng rng(1);
    Workspace ws{-5, 5, -5, 5};
    const Position3 a{0, 0, 1};
    const Position3 g{2, 1, 1};
    auto p = plan_human_path(a, g, 0.0, 0.0, ws, rng);
    REQUIRE(p.path.waypoints.size() == 3);
    CHECK(p.path.waypoints[0] == a);
    CHECK(p.path.waypoints[1] == midpoint(a, g));
    CHECK(p.path.waypoints[2] == g);
    CHECK_FALSE(p.clamped);
}

TEST_CASE("plan_human_path perturbation statistics", "[sim][oracle]") {
    Rng rng(42);
    Workspace ws{-50, 50, -50, 50};
    const Position3 a{0, 0, 1};
    const Position3 g{2, 1, 1};
    std::vector<double> gx, gy, mx, my;
    for (int i = 0; i < 10000; ++i) {
        auto p = plan_human_path(a, g, 0.05, 0.25, ws, rng);
        const auto& goal = p.path.waypoints[2];
        const auto& mid = p.path.waypoints[1];
        REQUIRE(goal.z == g.z);
        gx.push_back(goal.x - g.x);
        gy.push_back(goal.y - g.y);
        const auto nominal_mid = midpoint(a, goal);
        mx.push_back(mid.x - nominal_mid.x);
        my.push_back(mid.y - nominal_mid.y);
    }
    CHECK_THAT(sample_std(gx), WithinAbs(0.05, 0.005));
    CHECK_THAT(sample_std(gy), WithinAbs(0.05, 0.005));
    CHECK_THAT(sample_std(mx), WithinAbs(0.25, 0.025));
    CHECK_THAT(sample_std(my), WithinAbs(0.25, 0.025));
}

TEST_CASE("plan_human_path clamps to the workspace", "[sim]") {
    Rng rng(2);
    Workspace ws{-1, 1, -1, 1};
    auto p = plan_human_path({0, 0, 1}, {5, 0, 1}, 0.0, 0.0, ws, rng);
    CHECK(p.clamped);
    CHECK(p.path.waypoints[2] == Position3{1, 0, 1});
}

TEST_CASE("default scene loads and validates", "[sim]") {
    const auto cfg = default_scene();
    CHECK(cfg.table_slot_count() == 10);
    CHECK(cfg.inbound.size() == 6);
    CHECK(cfg.outbound_slot_count() == 6);
    CHECK(cfg.goal_sigma == 0.05);
    CHECK(cfg.midpoint_sigma == 0.25);
    CHECK(cfg.tick == 0.1);
    CHECK(cfg.safety.thresholds() == std::vector<double>{1.2, 1.5, 1.9, 2.4});
}

TEST_CASE("scene config errors", "[sim]") {
    auto j = read_json_file(SCALEPRED_CONFIG_DIR "/default.json").at("scene");
    auto bad = j;
    bad["tick"] = 0.0;
    CHECK_THROWS_AS(scene_from_json(bad), ConfigError);
    bad = j;
    bad.erase("goal_sigma");
    CHECK_THROWS_AS(scene_from_json(bad), ConfigError);
    bad = j;
    bad["dwell_range"] = {3.0, 1.0};
    CHECK_THROWS_AS(scene_from_json(bad), ConfigError);
    bad = j;
    bad["safety"]["thresholds"] = {1.5, 1.2, 1.9, 2.4};
    CHECK_THROWS_AS(scene_from_json(bad), ConfigError);
}

TEST_CASE("episode invariants", "[sim][oracle]") {
    const auto cfg = default_scene();
    const auto trace = simulate_episode(cfg, derive_seed(99, std::uint64_t{0}), 0);
    REQUIRE(trace.samples.size() > 100);
    const double eps = 1e-9;
    bool saw_top = false;
    bool saw_below = false;
    for (std::size_t i = 0; i < trace.samples.size(); ++i) {
        const auto& s = trace.samples[i];
        // replay oracle
        REQUIRE(s.s == eval_scaling(cfg.safety, s.xr, s.xh));
        REQUIRE(s.t == static_cast<double>(i) * cfg.tick);
        saw_top = saw_top || s.s == 1.0;
        saw_below = saw_below || s.s < 1.0;
        if (i + 1 < trace.samples.size()) {
            const auto& n = trace.samples[i + 1];
            REQUIRE(n.t > s.t);
            REQUIRE(distance(s.xr, n.xr) <= s.s * cfg.robot_nominal_speed * cfg.tick + eps);
            REQUIRE(distance(s.xh, n.xh) <= cfg.human_speed * cfg.tick + eps);
        }
    }
    CHECK(saw_top);
    CHECK(saw_below);
}

TEST_CASE("robot moves at exactly s v dt on straight stretches", "[sim]") {
    const auto cfg = default_scene();
    const auto trace = simulate_episode(cfg, 5, 0);
    int exact = 0;
    for (std::size_t i = 0; i + 2 < trace.samples.size(); ++i) {
        const auto& a = trace.samples[i];
        const auto& b = trace.samples[i + 1];
        const auto& c = trace.samples[i + 2];
        // same goal across three samples and a collinear, non-stopping step away from the goal
        if (a.gr == b.gr && b.gr == c.gr && a.s > 0.0 && distance(b.xr, a.gr) > 0.2) {
            const double step = distance(a.xr, b.xr);
            if (step > 0.0) {
                CHECK_THAT(step, WithinAbs(a.s * cfg.robot_nominal_speed * cfg.tick, 1e-9));
                ++exact;
            }
        }
    }
    CHECK(exact > 50);
}

TEST_CASE("every default-campaign episode hits the top level and interacts", "[sim]") {
    const auto cfg = default_scene();
    const auto traces = run_campaign(cfg, 50, 17);
    for (const auto& tr : traces) {
        bool top = false;
        bool below = false;
        for (const auto& s : tr.samples) {
            top = top || s.s == 1.0;
            below = below || s.s < 1.0;
        }
        CHECK(top);
        CHECK(below);
    }
}

TEST_CASE("determinism and seeding", "[sim]") {
    const auto cfg = default_scene();
    const auto a = simulate_episode(cfg, 1234, 3);
    const auto b = simulate_episode(cfg, 1234, 3);
    CHECK(a.samples == b.samples);

    const auto single = run_campaign(cfg, 1, 77);
    const auto direct = simulate_episode(cfg, derive_seed(77, std::uint64_t{0}), 0);
    CHECK(single.front().samples == direct.samples);

    const auto dir = std::filesystem::temp_directory_path() / "scalepred_sim_test";
    std::filesystem::create_directories(dir);
    const auto seq = run_campaign(cfg, 24, 5, 1);
    const auto par = run_campaign(cfg, 24, 5, 4);
    write_trace_csv(dir / "seq.csv", seq);
    write_trace_csv(dir / "par.csv", par);
    CHECK(slurp(dir / "seq.csv") == slurp(dir / "par.csv"));
    write_trace_csv(dir / "seq2.csv", run_campaign(cfg, 24, 5, 1));
    CHECK(slurp(dir / "seq.csv") == slurp(dir / "seq2.csv"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("episode length bookkeeping is 10 Hz", "[sim]") {
    const auto cfg = default_scene();
    const auto tr = simulate_episode(cfg, 8, 0);
    const double duration = static_cast<double>(tr.samples.size()) * cfg.tick;
    CHECK(static_cast<std::size_t>(std::llround(duration / cfg.tick)) == tr.samples.size());
    CHECK_THAT(tr.samples.back().t, WithinAbs(duration - cfg.tick, 1e-9));
}

TEST_CASE("non-terminating scene aborts at max duration", "[sim]") {
    auto cfg = default_scene();
    // human parked on top of the robot route: the robot halts forever
    cfg.human_home = cfg.conveyor;
    cfg.inbound = {cfg.conveyor};
    cfg.outbound = {{cfg.conveyor}};
    cfg.goal_sigma = 0.0;
    cfg.midpoint_sigma = 0.0;
    cfg.dwell_min = cfg.dwell_max = 1e6;
    cfg.max_duration = 30.0;
    CHECK_THROWS_AS(simulate_episode(cfg, 1, 0), SimulationAborted);
    try {
        run_campaign(cfg, 3, 1, 2);
        FAIL("expected abort");
    } catch (const SimulationAborted& e) {
        CHECK(std::string(e.what()).find("episode 0") != std::string::npos);
    }
}

TEST_CASE("trace CSV round trip", "[sim][io]") {
    const auto cfg = default_scene();
    const auto traces = run_campaign(cfg, 2, 3);
    const auto dir = std::filesystem::temp_directory_path() / "scalepred_trace_rt";
    write_trace_csv(dir / "t.csv", traces);
    const auto back = read_samples_csv(dir / "t.csv");
    std::size_t n = 0;
    for (const auto& tr : traces) {
        for (const auto& s : tr.samples) {
            const auto& r = back[n++];
            REQUIRE(r.episode == s.episode);
            REQUIRE(r.s == s.s);
            REQUIRE(std::abs(r.xh.x - s.xh.x) <= 1e-8 * std::max(1.0, std::abs(s.xh.x)));
            REQUIRE(r.cluster_index == 0);
        }
    }
    CHECK(n == back.size());
    // 9 significant digits: writing what was read back is a fixed point
    std::vector<EpisodeTrace> rebuilt(1);
    for (const auto& s : back) rebuilt[0].samples.push_back(s);
    write_trace_csv(dir / "t2.csv", rebuilt);
    CHECK(slurp(dir / "t.csv") == slurp(dir / "t2.csv"));
    std::filesystem::remove_all(dir);
}
