#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "scalepred/core.hpp"
#include "scalepred/random.hpp"
#include "scalepred/safety.hpp"
#include "scalepred/scene.hpp"

namespace scalepred {

/// One recorded tick: positions, goals and the applied scaling.
struct Sample {
    int episode = 0;
    double t = 0.0;
    Position3 xr;
    Position3 xh;
    Position3 gr;
    Position3 gh;
    double s = 1.0;

    friend bool operator==(const Sample&, const Sample&) = default;
};

struct EpisodeTrace {
    int episode_id = 0;
    std::uint64_t seed = 0;
    std::vector<Sample> samples;
};

/// Remaining piecewise-linear route; `next` indexes the next waypoint to reach.
struct Path {
    std::vector<Position3> waypoints;
    std::size_t next = 0;

    [[nodiscard]] bool done() const { return next >= waypoints.size(); }
    [[nodiscard]] const Position3& goal() const { return waypoints.back(); }
    [[nodiscard]] double remaining_length(const Position3& from) const {
        double len = 0.0;
        Position3 cur = from;
        for (std::size_t i = next; i < waypoints.size(); ++i) {
            len += distance(cur, waypoints[i]);
            cur = waypoints[i];
        }
        return len;
    }
};

struct HumanPath {
    Path path;
    bool clamped = false;
};

/// Human route [start, midpoint', goal']. Perturbations are
/// horizontal Gaussians; points leaving the workspace are clamped.
inline HumanPath plan_human_path(const Position3& start, const Position3& nominal_goal, double goal_sigma,
                                 double midpoint_sigma, const Workspace& ws, Rng& rng) {
    std::normal_distribution<double> unit(0.0, 1.0);
    HumanPath out;
    Position3 goal = nominal_goal;
    goal.x += goal_sigma * unit(rng);
    goal.y += goal_sigma * unit(rng);
    Position3 mid = midpoint(start, goal);
    mid.x += midpoint_sigma * unit(rng);
    mid.y += midpoint_sigma * unit(rng);
    if (!ws.contains(goal) || !ws.contains(mid)) out.clamped = true;
    out.path.waypoints = {start, ws.clamp(mid), ws.clamp(goal)};
    return out;
}

inline HumanPath plan_human_path(const SceneConfig& cfg, const Position3& start, const Position3& nominal_goal,
                                 Rng& rng) {
    return plan_human_path(start, nominal_goal, cfg.goal_sigma, cfg.midpoint_sigma, cfg.workspace, rng);
}

struct TickResult {
    Position3 pos;
    Path path;
};

/// Moves `pos` along `path` by s * v_nom * dt, consuming reached waypoints.
inline TickResult robot_tick(const Position3& pos, Path path, double s, double v_nom, double dt) {
    double budget = s * v_nom * dt;
    Position3 cur = pos;
    while (budget > 0.0 && !path.done()) {
        const Position3& target = path.waypoints[path.next];
        const double seg = distance(cur, target);
        if (seg <= budget) {
            budget -= seg;
            cur = target;
            ++path.next;
        } else {
            cur = cur + (budget / seg) * (target - cur);
            budget = 0.0;
        }
    }
    return {cur, std::move(path)};
}

class SimulationAborted : public DataError {
public:
    using DataError::DataError;
};

namespace detail {

// Robot pick-and-place loop: conveyor -> random free table slot until full, then home.
class RobotProcess {
public:
    RobotProcess(const SceneConfig& cfg, Rng& rng) : cfg_(cfg), rng_(rng), pos_(cfg.robot_home) {
        for (const auto& t : cfg.tables) free_slots_.insert(free_slots_.end(), t.begin(), t.end());
        start_trip(cfg_.conveyor);
    }

    [[nodiscard]] const Position3& position() const { return pos_; }
    [[nodiscard]] const Position3& goal() const { return goal_; }
    [[nodiscard]] bool finished() const { return phase_ == Phase::finished; }

    void step(double s) {
        const double dt = cfg_.tick;
        switch (phase_) {
            case Phase::moving: {
                auto r = robot_tick(pos_, std::move(path_), s, cfg_.robot_nominal_speed, dt);
                pos_ = r.pos;
                path_ = std::move(r.path);
                if (path_.done()) {
                    phase_ = going_home_ ? Phase::finished : Phase::dwelling;
                    dwell_left_ = cfg_.robot_dwell;
                }
                break;
            }
            case Phase::dwelling:
                // gripper actions run on the scaled clock as well
                dwell_left_ -= s * dt;
                if (dwell_left_ <= 1e-12) next_trip();
                break;
            case Phase::finished:
                break;
        }
    }

private:
    enum class Phase { moving, dwelling, finished };

    void start_trip(const Position3& target) {
        path_ = Path{{target}, 0};
        goal_ = target;
        phase_ = Phase::moving;
    }

    void next_trip() {
        if (carrying_) {
            carrying_ = false;
            if (free_slots_.empty()) {
                going_home_ = true;
                start_trip(cfg_.robot_home);
            } else {
                start_trip(cfg_.conveyor);
            }
            return;
        }
        std::uniform_int_distribution<std::size_t> pick(0, free_slots_.size() - 1);
        const std::size_t k = pick(rng_);
        const Position3 slot = free_slots_[k];
        free_slots_.erase(free_slots_.begin() + static_cast<std::ptrdiff_t>(k));
        carrying_ = true;
        start_trip(slot);
    }

    const SceneConfig& cfg_;
    Rng& rng_;
    Position3 pos_;
    Position3 goal_;
    Path path_;
    Phase phase_ = Phase::moving;
    double dwell_left_ = 0.0;
    bool carrying_ = false;
    bool going_home_ = false;
    std::vector<Position3> free_slots_;
};

// Human box loop: inbound slot k -> random free outbound slot, then back home.
class HumanProcess {
public:
    HumanProcess(const SceneConfig& cfg, Rng& rng) : cfg_(cfg), rng_(rng), pos_(cfg.human_home) {
        for (const auto& a : cfg.outbound) free_slots_.insert(free_slots_.end(), a.begin(), a.end());
        depart(cfg_.inbound[0]);
    }

    [[nodiscard]] const Position3& position() const { return pos_; }
    [[nodiscard]] const Position3& goal() const { return goal_; }
    [[nodiscard]] bool finished() const { return phase_ == Phase::finished; }
    [[nodiscard]] int clamped_paths() const { return clamped_; }

    void step() {
        const double dt = cfg_.tick;
        switch (phase_) {
            case Phase::walking: {
                auto r = robot_tick(pos_, std::move(path_), 1.0, cfg_.human_speed, dt);
                pos_ = r.pos;
                path_ = std::move(r.path);
                if (path_.done()) {
                    if (going_home_) {
                        phase_ = Phase::finished;
                    } else {
                        phase_ = Phase::dwelling;
                        std::uniform_real_distribution<double> dwell(cfg_.dwell_min, cfg_.dwell_max);
                        dwell_left_ = dwell(rng_);
                    }
                }
                break;
            }
            case Phase::dwelling:
                dwell_left_ -= dt;
                if (dwell_left_ <= 1e-12) next_trip();
                break;
            case Phase::finished:
                break;
        }
    }

private:
    enum class Phase { walking, dwelling, finished };

    void depart(const Position3& nominal_goal) {
        auto planned = plan_human_path(cfg_, pos_, nominal_goal, rng_);
        if (planned.clamped) ++clamped_;
        path_ = std::move(planned.path);
        goal_ = path_.goal();
        phase_ = Phase::walking;
    }

    void next_trip() {
        if (!carrying_) {
            carrying_ = true;
            std::uniform_int_distribution<std::size_t> pick(0, free_slots_.size() - 1);
            const std::size_t k = pick(rng_);
            const Position3 slot = free_slots_[k];
            free_slots_.erase(free_slots_.begin() + static_cast<std::ptrdiff_t>(k));
            depart(slot);
            return;
        }
        carrying_ = false;
        ++boxes_moved_;
        if (boxes_moved_ == cfg_.inbound.size()) {
            going_home_ = true;
            depart(cfg_.human_home);
        } else {
            depart(cfg_.inbound[boxes_moved_]);
        }
    }

    const SceneConfig& cfg_;
    Rng& rng_;
    Position3 pos_;
    Position3 goal_;
    Path path_;
    Phase phase_ = Phase::walking;
    double dwell_left_ = 0.0;
    bool carrying_ = false;
    bool going_home_ = false;
    std::size_t boxes_moved_ = 0;
    int clamped_ = 0;
    std::vector<Position3> free_slots_;
};

}  // namespace detail

/// Runs one box-transfer episode to completion. Each tick records the state,
/// then moves the robot at the recorded scaling and the human at full speed.
inline EpisodeTrace simulate_episode(const SceneConfig& cfg, std::uint64_t seed, int episode_id = 0) {
    // Separate streams keep robot slot choices independent of human draws.
    Rng robot_rng(derive_seed(seed, "robot"));
    Rng human_rng(derive_seed(seed, "human"));
    detail::RobotProcess robot(cfg, robot_rng);
    detail::HumanProcess human(cfg, human_rng);

    EpisodeTrace trace{episode_id, seed, {}};
    const auto max_ticks = static_cast<std::int64_t>(std::ceil(cfg.max_duration / cfg.tick));
    trace.samples.reserve(1024);
    for (std::int64_t i = 0;; ++i) {
        if (robot.finished() && human.finished()) break;
        if (i >= max_ticks) {
            throw SimulationAborted("episode " + std::to_string(episode_id) + " exceeded max_duration of " +
                                    std::to_string(cfg.max_duration) + " s");
        }
        const double s = eval_scaling(cfg.safety, robot.position(), human.position());
        trace.samples.push_back(Sample{episode_id, static_cast<double>(i) * cfg.tick, robot.position(),
                                       human.position(), robot.goal(), human.goal(), s});
        robot.step(s);
        human.step();
    }
    return trace;
}

/// Episode i runs on derive_seed(master_seed, i); output is ordered by index
/// whatever the number of worker threads.
inline std::vector<EpisodeTrace> run_campaign(const SceneConfig& cfg, int n_episodes, std::uint64_t master_seed,
                                              unsigned threads = 1) {
    if (n_episodes < 1) throw ConfigError("run_campaign: n_episodes must be >= 1");
    cfg.validate();
    std::vector<EpisodeTrace> out(static_cast<std::size_t>(n_episodes));
    auto run_one = [&](int i) {
        try {
            out[static_cast<std::size_t>(i)] =
                simulate_episode(cfg, derive_seed(master_seed, static_cast<std::uint64_t>(i)), i);
        } catch (const std::exception& e) {
            throw SimulationAborted("episode " + std::to_string(i) + ": " + e.what());
        }
    };
    if (threads <= 1) {
        for (int i = 0; i < n_episodes; ++i) run_one(i);
        return out;
    }
    std::atomic<int> next{0};
    std::mutex err_mutex;
    std::optional<std::pair<int, std::exception_ptr>> first_error;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (int i = next++; i < n_episodes; i = next++) {
                try {
                    run_one(i);
                } catch (...) {
                    std::lock_guard lock(err_mutex);
                    if (!first_error || i < first_error->first) first_error.emplace(i, std::current_exception());
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error->second);
    return out;
}

}  // namespace scalepred
