#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scalepred/core.hpp"
#include "scalepred/safety.hpp"

namespace scalepred {

/// Horizontal bounds that perturbed human waypoints are clamped to.
struct Workspace {
    double x_min = -1.0;
    double x_max = 1.0;
    double y_min = -1.0;
    double y_max = 1.0;

    [[nodiscard]] bool contains(const Position3& p) const {
        return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
    }
    [[nodiscard]] Position3 clamp(const Position3& p) const {
        return {std::clamp(p.x, x_min, x_max), std::clamp(p.y, y_min, y_max), p.z};
    }
};

/// Box-transfer cell: robot moves boxes conveyor -> table slots, the human
/// moves boxes from inbound slots to outbound slots near the robot tables.
struct SceneConfig {
    Position3 robot_home;
    Position3 conveyor;
    std::vector<std::vector<Position3>> tables;  // place slots per table

    Position3 human_home;
    std::vector<Position3> inbound;                // one pick slot per box
    std::vector<std::vector<Position3>> outbound;  // place slots per area

    double robot_nominal_speed = 1.0;  // m/s
    double human_speed = 1.0;          // m/s
    double goal_sigma = 0.05;          // m, horizontal
    double midpoint_sigma = 0.25;      // m, horizontal
    double dwell_min = 1.0;            // s, human dwell at stations
    double dwell_max = 3.0;
    double robot_dwell = 0.5;  // s of nominal-speed process time per pick or place
    double tick = 0.1;         // s
    double max_duration = 600.0;
    Workspace workspace;
    StaircaseSafetyFunction safety{{1.0}, {}};

    [[nodiscard]] std::size_t table_slot_count() const {
        std::size_t n = 0;
        for (const auto& t : tables) n += t.size();
        return n;
    }
    [[nodiscard]] std::size_t outbound_slot_count() const {
        std::size_t n = 0;
        for (const auto& a : outbound) n += a.size();
        return n;
    }

    void validate() const {
        auto require = [](bool ok, const char* what) {
            if (!ok) throw ConfigError(std::string("scene config: ") + what);
        };
        require(tick > 0.0, "tick must be positive");
        require(robot_nominal_speed > 0.0 && human_speed > 0.0, "speeds must be positive");
        require(goal_sigma >= 0.0 && midpoint_sigma >= 0.0, "sigmas must be non-negative");
        require(dwell_min >= 0.0 && dwell_min <= dwell_max, "dwell range must satisfy 0 <= min <= max");
        require(robot_dwell >= 0.0, "robot_dwell must be non-negative");
        require(max_duration > tick, "max_duration must exceed one tick");
        require(workspace.x_min < workspace.x_max && workspace.y_min < workspace.y_max,
                "workspace bounds are empty");
        require(table_slot_count() > 0, "at least one table slot required");
        require(!inbound.empty(), "at least one inbound slot required");
        require(outbound_slot_count() >= inbound.size(), "not enough outbound slots for inbound boxes");
        auto finite = [&](const Position3& p) { require(p.finite(), "non-finite station coordinate"); };
        finite(robot_home);
        finite(conveyor);
        finite(human_home);
        for (const auto& t : tables) std::for_each(t.begin(), t.end(), finite);
        for (const auto& a : outbound) std::for_each(a.begin(), a.end(), finite);
        std::for_each(inbound.begin(), inbound.end(), finite);
    }
};

inline void to_json(nlohmann::json& j, const Position3& p) { j = nlohmann::json::array({p.x, p.y, p.z}); }

inline void from_json(const nlohmann::json& j, Position3& p) {
    if (!j.is_array() || j.size() != 3) throw ConfigError("position must be a 3-element array");
    p = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline void to_json(nlohmann::json& j, const StaircaseSafetyFunction& f) {
    j = {{"levels", f.levels()}, {"thresholds", f.thresholds()}, {"metric", "euclidean"}};
}

inline StaircaseSafetyFunction safety_from_json(const nlohmann::json& j) {
    if (j.contains("metric") && j.at("metric") != "euclidean") {
        throw ConfigError("safety function: only the euclidean metric is supported");
    }
    return {j.at("levels").get<std::vector<double>>(), j.at("thresholds").get<std::vector<double>>()};
}

inline nlohmann::json scene_to_json(const SceneConfig& c) {
    return {
        {"robot", {{"home", c.robot_home}, {"conveyor", c.conveyor}, {"tables", c.tables}}},
        {"human", {{"home", c.human_home}, {"inbound", c.inbound}, {"outbound", c.outbound}}},
        {"robot_nominal_speed", c.robot_nominal_speed},
        {"human_speed", c.human_speed},
        {"goal_sigma", c.goal_sigma},
        {"midpoint_sigma", c.midpoint_sigma},
        {"dwell_range", {c.dwell_min, c.dwell_max}},
        {"robot_dwell", c.robot_dwell},
        {"tick", c.tick},
        {"max_duration", c.max_duration},
        {"workspace",
         {{"x", {c.workspace.x_min, c.workspace.x_max}}, {"y", {c.workspace.y_min, c.workspace.y_max}}}},
        {"safety", c.safety},
    };
}

/// Parses and validates a scene section. Every key is required.
inline SceneConfig scene_from_json(const nlohmann::json& j) {
    SceneConfig c;
    try {
        const auto& r = j.at("robot");
        c.robot_home = r.at("home").get<Position3>();
        c.conveyor = r.at("conveyor").get<Position3>();
        c.tables = r.at("tables").get<std::vector<std::vector<Position3>>>();
        const auto& h = j.at("human");
        c.human_home = h.at("home").get<Position3>();
        c.inbound = h.at("inbound").get<std::vector<Position3>>();
        c.outbound = h.at("outbound").get<std::vector<std::vector<Position3>>>();
        c.robot_nominal_speed = j.at("robot_nominal_speed").get<double>();
        c.human_speed = j.at("human_speed").get<double>();
        c.goal_sigma = j.at("goal_sigma").get<double>();
        c.midpoint_sigma = j.at("midpoint_sigma").get<double>();
        const auto dwell = j.at("dwell_range").get<std::vector<double>>();
        if (dwell.size() != 2) throw ConfigError("scene config: dwell_range must be [min, max]");
        c.dwell_min = dwell[0];
        c.dwell_max = dwell[1];
        c.robot_dwell = j.at("robot_dwell").get<double>();
        c.tick = j.at("tick").get<double>();
        c.max_duration = j.at("max_duration").get<double>();
        const auto wx = j.at("workspace").at("x").get<std::vector<double>>();
        const auto wy = j.at("workspace").at("y").get<std::vector<double>>();
        if (wx.size() != 2 || wy.size() != 2) throw ConfigError("scene config: workspace bounds are [min, max]");
        c.workspace = {wx[0], wx[1], wy[0], wy[1]};
        c.safety = safety_from_json(j.at("safety"));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scene config: ") + e.what());
    }
    c.validate();
    return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

}  // namespace scalepred
