#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "scalepred/core.hpp"
#include "scalepred/random.hpp"
#include "scalepred/simulator.hpp"

namespace scalepred {

/// Scaling levels recovered by 1-D density clustering.
struct ClusterModel {
    std::vector<double> centroids;  // ascending
    std::vector<std::size_t> member_counts;
    double eps = 0.02;
    int min_pts = 10;

    [[nodiscard]] std::size_t size() const { return centroids.size(); }

    /// 1-based index of the nearest centroid; ties go to the lower index.
    [[nodiscard]] int nearest(double s) const {
        std::size_t best = 0;
        double best_d = std::abs(s - centroids[0]);
        for (std::size_t j = 1; j < centroids.size(); ++j) {
            const double d = std::abs(s - centroids[j]);
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        return static_cast<int>(best) + 1;
    }

    [[nodiscard]] double centroid(int cluster_index) const {
        return centroids.at(static_cast<std::size_t>(cluster_index - 1));
    }

    void validate() const {
        if (centroids.empty()) throw DataError("cluster model: no centroids");
        for (std::size_t j = 0; j < centroids.size(); ++j) {
            if (!(centroids[j] >= 0.0 && centroids[j] <= 1.0)) {
                throw DataError("cluster model: centroid outside [0,1]");
            }
            if (j > 0 && !(centroids[j] > centroids[j - 1])) {
                throw DataError("cluster model: centroids must be strictly increasing");
            }
        }
    }
};

struct ClusterResult {
    ClusterModel model;
    /// Density-cluster membership per input value (0-based), -1 for noise points.
    std::vector<int> assignment;
};

namespace detail {

// Neumaier-compensated sum.
inline double compensated_sum(std::span<const double> xs) {
    double sum = 0.0;
    double c = 0.0;
    for (double x : xs) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    return sum + c;
}

}  // namespace detail

/// DBSCAN on scalar scaling values.
///
/// In one dimension a cluster is a maximal run of sorted core points whose
/// consecutive gaps are <= eps. Border points join the cluster of their
/// nearest core point; centroids are member means. Points left as noise
/// are reported with assignment -1.
inline ClusterResult cluster_scalings(std::span<const double> values, double eps, int min_pts) {
    if (values.empty()) throw DataError("cluster_scalings: no values");
    if (!(eps > 0.0) || min_pts < 1) throw ConfigError("cluster_scalings: need eps > 0 and min_pts >= 1");
    for (double v : values) {
        if (!(v >= 0.0 && v <= 1.0)) throw DataError("cluster_scalings: value outside [0,1]");
    }

    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> sorted(n);
    for (std::size_t i = 0; i < n; ++i) sorted[i] = values[order[i]];

    // neighbourhood counts with two pointers
    std::vector<char> core(n, 0);
    std::size_t lo = 0;
    std::size_t hi = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (sorted[i] - sorted[lo] > eps) ++lo;
        if (hi < i) hi = i;
        while (hi + 1 < n && sorted[hi + 1] - sorted[i] <= eps) ++hi;
        core[i] = (hi - lo + 1) >= static_cast<std::size_t>(min_pts);
    }

    std::vector<int> sorted_label(n, -1);
    int clusters = 0;
    std::size_t prev_core = n;
    std::vector<std::size_t> core_pos;
    for (std::size_t i = 0; i < n; ++i) {
        if (!core[i]) continue;
        if (prev_core == n || sorted[i] - sorted[prev_core] > eps) ++clusters;
        sorted_label[i] = clusters - 1;
        prev_core = i;
        core_pos.push_back(i);
    }
    if (clusters == 0) {
        throw DataError("cluster_scalings: every point is noise; increase eps or decrease min_pts");
    }

    // border points: nearest core point within eps
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) continue;
        auto it = std::lower_bound(core_pos.begin(), core_pos.end(), i);
        double best = std::numeric_limits<double>::infinity();
        int label = -1;
        if (it != core_pos.begin()) {
            const std::size_t p = *(it - 1);
            best = sorted[i] - sorted[p];
            label = sorted_label[p];
        }
        if (it != core_pos.end()) {
            const double d = sorted[*it] - sorted[i];
            if (d < best) {
                best = d;
                label = sorted_label[*it];
            }
        }
        if (best <= eps) sorted_label[i] = label;
    }

    ClusterResult result;
    result.model.eps = eps;
    result.model.min_pts = min_pts;
    std::vector<std::vector<double>> members(static_cast<std::size_t>(clusters));
    result.assignment.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        result.assignment[order[i]] = sorted_label[i];
        if (sorted_label[i] >= 0) members[static_cast<std::size_t>(sorted_label[i])].push_back(sorted[i]);
    }
    for (const auto& m : members) {
        result.model.centroids.push_back(detail::compensated_sum(m) / static_cast<double>(m.size()));
        result.model.member_counts.push_back(m.size());
    }
    result.model.validate();
    return result;
}

/// Trace sample augmented with its 1-based cluster index.
struct LabeledSample : Sample {
    int cluster_index = 0;

    friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

inline std::vector<LabeledSample> assign_labels(std::span<const Sample> samples, const ClusterModel& model) {
    model.validate();
    std::vector<LabeledSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(LabeledSample{s, model.nearest(s.s)});
    return out;
}

inline std::vector<LabeledSample> assign_labels(std::span<const EpisodeTrace> traces, const ClusterModel& model) {
    std::vector<Sample> flat;
    for (const auto& tr : traces) flat.insert(flat.end(), tr.samples.begin(), tr.samples.end());
    return assign_labels(std::span<const Sample>(flat), model);
}

inline std::vector<double> scaling_values(std::span<const LabeledSample> samples) {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.s);
    return out;
}

struct NoiseSpec {
    double delta = 0.0;  // m, std per horizontal axis
    std::uint64_t seed = 0;
};

/// Adds N(0, delta^2) to the horizontal human coordinates. Targets, labels and
/// goals are untouched.
template <typename SampleT>
    requires std::derived_from<SampleT, Sample>
std::vector<SampleT> inject_noise(std::span<const SampleT> samples, const NoiseSpec& spec) {
    if (!(spec.delta >= 0.0)) throw ConfigError("inject_noise: delta must be >= 0");
    std::vector<SampleT> out(samples.begin(), samples.end());
    if (spec.delta == 0.0) return out;
    Rng rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.delta);
    for (auto& s : out) {
        s.xh.x += noise(rng);
        s.xh.y += noise(rng);
    }
    return out;
}

enum class WindowMode { one_step, n_step, average };

inline std::string to_string(WindowMode m) {
    switch (m) {
        case WindowMode::one_step: return "one_step";
        case WindowMode::n_step: return "n_step";
        case WindowMode::average: return "average";
    }
    return "?";
}

struct WindowSpec {
    int w = 0;
    WindowMode mode = WindowMode::one_step;

    void validate() const {
        if (w < 0) throw ConfigError("window: w must be >= 0");
        if (mode == WindowMode::one_step && w != 0) throw ConfigError("window: one_step requires w = 0");
    }
    [[nodiscard]] std::size_t feature_width() const { return mode == WindowMode::one_step ? 6 : 12; }
};

/// Row-major supervised rows plus the bookkeeping the evaluators need.
struct SupervisedDataset {
    WindowSpec window;
    std::size_t width = 0;
    std::vector<double> features;
    std::vector<double> target_s;
    std::vector<int> target_cluster;  // 1-based, 0 when not applicable
    std::vector<int> episode;
    std::vector<double> t;
    std::vector<double> target_distance;  // human-robot distance at the target tick
    std::size_t short_episodes = 0;       // episodes with fewer than w+1 samples

    [[nodiscard]] std::size_t rows() const { return target_s.size(); }
    [[nodiscard]] std::span<const double> row(std::size_t i) const {
        return {features.data() + i * width, width};
    }
    [[nodiscard]] bool has_clusters() const { return window.mode != WindowMode::average; }

    void reserve(std::size_t n) {
        features.reserve(n * width);
        target_s.reserve(n);
        target_cluster.reserve(n);
        episode.reserve(n);
        t.reserve(n);
        target_distance.reserve(n);
    }

    /// Keeps the named columns (feature subsets, e.g. dropping goals).
    [[nodiscard]] SupervisedDataset select_columns(std::span<const std::size_t> columns) const {
        SupervisedDataset out = *this;
        out.width = columns.size();
        out.features.clear();
        out.features.reserve(rows() * columns.size());
        for (std::size_t i = 0; i < rows(); ++i) {
            for (std::size_t c : columns) out.features.push_back(features[i * width + c]);
        }
        return out;
    }

    /// Rows whose episode id satisfies `keep`.
    template <typename Pred>
    [[nodiscard]] SupervisedDataset filter_episodes(Pred keep) const {
        SupervisedDataset out;
        out.window = window;
        out.width = width;
        for (std::size_t i = 0; i < rows(); ++i) {
            if (!keep(episode[i])) continue;
            auto r = row(i);
            out.features.insert(out.features.end(), r.begin(), r.end());
            out.target_s.push_back(target_s[i]);
            out.target_cluster.push_back(target_cluster[i]);
            out.episode.push_back(episode[i]);
            out.t.push_back(t[i]);
            out.target_distance.push_back(target_distance[i]);
        }
        return out;
    }
};

namespace detail {

inline void push_position(std::vector<double>& f, const Position3& p) {
    f.push_back(p.x);
    f.push_back(p.y);
    f.push_back(p.z);
}

// [begin, end) ranges of consecutive samples sharing an episode id.
template <typename SampleT>
std::vector<std::pair<std::size_t, std::size_t>> episode_runs(std::span<const SampleT> samples) {
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    std::unordered_set<int> seen;
    std::size_t begin = 0;
    for (std::size_t i = 1; i <= samples.size(); ++i) {
        if (i < samples.size() && samples[i].episode == samples[begin].episode) {
            if (!(samples[i].t > samples[i - 1].t)) {
                throw DataError("episode " + std::to_string(samples[i].episode) + ": timestamps not increasing");
            }
            continue;
        }
        if (!seen.insert(samples[begin].episode).second) {
            throw DataError("episode " + std::to_string(samples[begin].episode) + " is not contiguous");
        }
        runs.emplace_back(begin, i);
        begin = i;
    }
    if (samples.empty()) runs.clear();
    return runs;
}

}  // namespace detail

/// Builds supervised rows per episode; windows never cross episode boundaries.
///
/// one_step: (xr, xh) -> s_i. n_step: (xr, xh, gr, gh) -> s_{i+w}.
/// average: (xr, xh, gr, gh) -> mean(s_i..s_{i+w}).
inline SupervisedDataset build_dataset(std::span<const LabeledSample> samples, const WindowSpec& window) {
    window.validate();
    SupervisedDataset ds;
    ds.window = window;
    ds.width = window.feature_width();
    ds.reserve(samples.size());
    const auto w = static_cast<std::size_t>(window.w);
    for (auto [begin, end] : detail::episode_runs(samples)) {
        const std::size_t n = end - begin;
        if (n < w + 1) {
            ++ds.short_episodes;
            continue;
        }
        for (std::size_t i = begin; i + w < end; ++i) {
            const LabeledSample& cur = samples[i];
            const LabeledSample& tgt = samples[i + w];
            detail::push_position(ds.features, cur.xr);
            detail::push_position(ds.features, cur.xh);
            if (window.mode != WindowMode::one_step) {
                detail::push_position(ds.features, cur.gr);
                detail::push_position(ds.features, cur.gh);
            }
            if (window.mode == WindowMode::average) {
                double sum = 0.0;
                for (std::size_t j = 0; j <= w; ++j) sum += samples[i + j].s;
                ds.target_s.push_back(sum / static_cast<double>(w + 1));
                ds.target_cluster.push_back(0);
            } else {
                ds.target_s.push_back(tgt.s);
                ds.target_cluster.push_back(tgt.cluster_index);
            }
            ds.episode.push_back(cur.episode);
            ds.t.push_back(cur.t);
            ds.target_distance.push_back(distance(tgt.xr, tgt.xh));
        }
    }
    return ds;
}

/// Episode ids assigned to the training side; a seeded shuffle of the
/// distinct ids with round(fraction * count) on the training side.
inline std::unordered_set<int> split_episode_ids(std::vector<int> ids, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("split: train_fraction must be in (0,1)");
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() < 2) throw DataError("split: need at least 2 episodes");
    Rng rng(seed);
    // Fisher-Yates with an explicit draw so the order does not depend on std::shuffle internals.
    for (std::size_t i = ids.size() - 1; i > 0; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i);
        std::swap(ids[i], ids[pick(rng)]);
    }
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, ids.size() - 1);
    return {ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train)};
}

template <typename T>
struct Split {
    T train;
    T test;
};

inline Split<SupervisedDataset> split_dataset(const SupervisedDataset& ds, double train_fraction,
                                              std::uint64_t seed) {
    const auto train_ids = split_episode_ids(ds.episode, train_fraction, seed);
    return {ds.filter_episodes([&](int e) { return train_ids.contains(e); }),
            ds.filter_episodes([&](int e) { return !train_ids.contains(e); })};
}

inline Split<std::vector<LabeledSample>> split_samples(std::span<const LabeledSample> samples,
                                                       double train_fraction, std::uint64_t seed) {
    std::vector<int> ids;
    ids.reserve(samples.size());
    for (const auto& s : samples) ids.push_back(s.episode);
    const auto train_ids = split_episode_ids(std::move(ids), train_fraction, seed);
    Split<std::vector<LabeledSample>> out;
    for (const auto& s : samples) (train_ids.contains(s.episode) ? out.train : out.test).push_back(s);
    return out;
}

}  // namespace scalepred
