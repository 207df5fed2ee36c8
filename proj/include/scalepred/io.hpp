#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "scalepred/labeling.hpp"
#include "scalepred/simulator.hpp"

namespace scalepred {

inline constexpr std::string_view kTraceHeader =
    "episode,t,xr_x,xr_y,xr_z,xh_x,xh_y,xh_z,gr_x,gr_y,gr_z,gh_x,gh_y,gh_z,s";

namespace detail {

inline void append_number(std::string& out, double v, int digits) {
    char buf[40];
    const int n = std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    out.append(buf, static_cast<std::size_t>(n));
}

inline void append_position(std::string& out, const Position3& p, int digits) {
    for (double v : {p.x, p.y, p.z}) {
        out.push_back(',');
        append_number(out, v, digits);
    }
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline double parse_double(std::string_view f, const std::string& where) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw DataError(where + ": cannot parse number '" + std::string(f) + "'");
    }
    return v;
}

inline int parse_int(std::string_view f, const std::string& where) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw DataError(where + ": cannot parse integer '" + std::string(f) + "'");
    }
    return v;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed for " + path.string());
}

inline std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

}  // namespace detail

// ---- campaign traces --------------------------------------------------------

inline void append_trace_row(std::string& out, const Sample& s) {
    out += std::to_string(s.episode);
    out.push_back(',');
    detail::append_number(out, s.t, 9);
    detail::append_position(out, s.xr, 9);
    detail::append_position(out, s.xh, 9);
    detail::append_position(out, s.gr, 9);
    detail::append_position(out, s.gh, 9);
    out.push_back(',');
    detail::append_number(out, s.s, 9);
}

/// One row per sample, 9 significant digits.
inline void write_trace_csv(const std::filesystem::path& path, std::span<const EpisodeTrace> traces) {
    std::string out(kTraceHeader);
    out.push_back('\n');
    for (const auto& tr : traces) {
        for (const auto& s : tr.samples) {
            append_trace_row(out, s);
            out.push_back('\n');
        }
    }
    detail::write_text(path, out);
}

/// Trace rows plus a trailing 1-based `cluster` column.
inline void write_labeled_csv(const std::filesystem::path& path, std::span<const LabeledSample> samples) {
    std::string out(kTraceHeader);
    out += ",cluster\n";
    for (const auto& s : samples) {
        append_trace_row(out, s);
        out.push_back(',');
        out += std::to_string(s.cluster_index);
        out.push_back('\n');
    }
    detail::write_text(path, out);
}

/// Reads a trace or labeled-trace CSV. Rows of a plain trace get cluster_index 0.
inline std::vector<LabeledSample> read_samples_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
    line = detail::strip_cr(line);
    bool labeled = false;
    if (line == std::string(kTraceHeader) + ",cluster") {
        labeled = true;
    } else if (line != kTraceHeader) {
        throw DataError(path.string() + ": unexpected header '" + line + "'");
    }
    const std::size_t columns = labeled ? 16 : 15;
    std::vector<LabeledSample> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        const auto f = detail::split_fields(line);
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (f.size() != columns) throw DataError(where + ": expected " + std::to_string(columns) + " fields");
        LabeledSample s;
        s.episode = detail::parse_int(f[0], where);
        s.t = detail::parse_double(f[1], where);
        auto pos = [&](std::size_t k) {
            return Position3{detail::parse_double(f[k], where), detail::parse_double(f[k + 1], where),
                             detail::parse_double(f[k + 2], where)};
        };
        s.xr = pos(2);
        s.xh = pos(5);
        s.gr = pos(8);
        s.gh = pos(11);
        s.s = detail::parse_double(f[14], where);
        if (!(s.s >= 0.0 && s.s <= 1.0)) throw DataError(where + ": scaling outside [0,1]");
        if (!s.xr.finite() || !s.xh.finite() || !s.gr.finite() || !s.gh.finite()) {
            throw DataError(where + ": non-finite coordinate");
        }
        if (labeled) s.cluster_index = detail::parse_int(f[15], where);
        out.push_back(s);
    }
    return out;
}

inline std::vector<Sample> to_samples(std::span<const LabeledSample> labeled) {
    return {labeled.begin(), labeled.end()};
}

// ---- cluster model -----------------------------------------------------------

inline nlohmann::json cluster_model_to_json(const ClusterModel& m) {
    return {{"format", "scalepred-clusters/1"},
            {"eps", m.eps},
            {"min_pts", m.min_pts},
            {"centroids", m.centroids},
            {"member_counts", m.member_counts}};
}

inline ClusterModel cluster_model_from_json(const nlohmann::json& j) {
    ClusterModel m;
    try {
        m.eps = j.at("eps").get<double>();
        m.min_pts = j.at("min_pts").get<int>();
        m.centroids = j.at("centroids").get<std::vector<double>>();
        if (j.contains("member_counts")) m.member_counts = j.at("member_counts").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("cluster model: ") + e.what());
    }
    m.validate();
    return m;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    detail::write_text(path, j.dump(2) + "\n");
}

inline nlohmann::json read_json_data(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

// ---- supervised datasets -------------------------------------------------------

inline std::vector<std::string> feature_names(std::size_t width) {
    std::vector<std::string> names;
    for (const char* agent : {"xr", "xh", "gr", "gh"}) {
        for (const char* axis : {"_x", "_y", "_z"}) {
            if (names.size() < width) names.push_back(std::string(agent) + axis);
        }
    }
    return names;
}

/// `episode,t,<features>,target_s,target_cluster` at full precision, with the
/// window stored in a `.meta.json` sidecar.
inline void write_dataset_csv(const std::filesystem::path& path, const SupervisedDataset& ds) {
    std::string out = "episode,t";
    for (const auto& n : feature_names(ds.width)) out += "," + n;
    out += ",target_s,target_cluster\n";
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        out += std::to_string(ds.episode[i]);
        out.push_back(',');
        detail::append_number(out, ds.t[i], 17);
        for (double v : ds.row(i)) {
            out.push_back(',');
            detail::append_number(out, v, 17);
        }
        out.push_back(',');
        detail::append_number(out, ds.target_s[i], 17);
        out.push_back(',');
        if (ds.has_clusters()) out += std::to_string(ds.target_cluster[i]);
        out.push_back('\n');
    }
    detail::write_text(path, out);
    write_json(path.string() + ".meta.json",
               {{"mode", to_string(ds.window.mode)}, {"w", ds.window.w}, {"rows", ds.rows()}});
}

inline WindowMode window_mode_from_string(const std::string& s) {
    for (auto m : {WindowMode::one_step, WindowMode::n_step, WindowMode::average}) {
        if (to_string(m) == s) return m;
    }
    throw ConfigError("unknown window mode '" + s + "'");
}

/// Reads a supervised dataset. target_distance is unknown in this format and set to NaN.
inline SupervisedDataset read_dataset_csv(const std::filesystem::path& path) {
    const auto meta = read_json_data(path.string() + ".meta.json");
    SupervisedDataset ds;
    ds.window = {meta.at("w").get<int>(), window_mode_from_string(meta.at("mode").get<std::string>())};
    ds.width = ds.window.feature_width();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    const std::size_t columns = ds.width + 4;
    if (detail::split_fields(detail::strip_cr(line)).size() != columns) {
        throw DataError(path.string() + ": header does not match window " + to_string(ds.window.mode));
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        const auto f = detail::split_fields(line);
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (f.size() != columns) throw DataError(where + ": wrong field count");
        ds.episode.push_back(detail::parse_int(f[0], where));
        ds.t.push_back(detail::parse_double(f[1], where));
        for (std::size_t c = 0; c < ds.width; ++c) ds.features.push_back(detail::parse_double(f[2 + c], where));
        ds.target_s.push_back(detail::parse_double(f[2 + ds.width], where));
        const auto cl = f[3 + ds.width];
        ds.target_cluster.push_back(cl.empty() ? 0 : detail::parse_int(cl, where));
        ds.target_distance.push_back(std::numeric_limits<double>::quiet_NaN());
    }
    return ds;
}

/// FNV-1a over the file bytes, as 16 hex digits.
inline std::string file_fingerprint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::uint64_t h = 1469598103934665603ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

}  // namespace scalepred
