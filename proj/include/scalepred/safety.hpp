#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "scalepred/core.hpp"

namespace scalepred {

enum class DistanceMetric { euclidean };

/// Piecewise-constant speed scaling over human-robot distance.
///
/// With thresholds d_1 < ... < d_{P-1} the intervals are right-closed:
/// [0, d_1], (d_1, d_2], ..., (d_{P-1}, inf). A distance exactly on a
/// threshold maps to the lower (slower) level.
class StaircaseSafetyFunction {
public:
    StaircaseSafetyFunction(std::vector<double> levels, std::vector<double> thresholds,
                            DistanceMetric metric = DistanceMetric::euclidean)
        : levels_(std::move(levels)), thresholds_(std::move(thresholds)), metric_(metric) {
        validate();
    }

    [[nodiscard]] const std::vector<double>& levels() const { return levels_; }
    [[nodiscard]] const std::vector<double>& thresholds() const { return thresholds_; }
    [[nodiscard]] DistanceMetric metric() const { return metric_; }
    [[nodiscard]] std::size_t level_count() const { return levels_.size(); }

    /// Index of the interval containing d (0-based).
    [[nodiscard]] std::size_t interval_index(double d) const {
        if (!std::isfinite(d) || d < 0.0) {
            throw DataError("safety function: distance must be finite and non-negative, got " +
                            std::to_string(d));
        }
        // lower_bound counts thresholds strictly below d, which realizes right-closed intervals.
        auto it = std::lower_bound(thresholds_.begin(), thresholds_.end(), d);
        return static_cast<std::size_t>(it - thresholds_.begin());
    }

    [[nodiscard]] double scaling_at(double d) const { return levels_[interval_index(d)]; }

    /// Smallest distance from d to any threshold.
    [[nodiscard]] double margin_to_threshold(double d) const {
        double best = std::numeric_limits<double>::infinity();
        for (double th : thresholds_) best = std::min(best, std::abs(d - th));
        return best;
    }

private:
    void validate() const {
        if (levels_.empty()) throw ConfigError("safety function: at least one level required");
        if (thresholds_.size() + 1 != levels_.size()) {
            throw ConfigError("safety function: need exactly levels-1 thresholds");
        }
        for (std::size_t i = 0; i < levels_.size(); ++i) {
            if (!(levels_[i] >= 0.0 && levels_[i] <= 1.0)) {
                throw ConfigError("safety function: levels must lie in [0,1]");
            }
            if (i > 0 && !(levels_[i] > levels_[i - 1])) {
                throw ConfigError("safety function: levels must be strictly increasing");
            }
        }
        for (std::size_t i = 0; i < thresholds_.size(); ++i) {
            if (!(std::isfinite(thresholds_[i]) && thresholds_[i] > 0.0)) {
                throw ConfigError("safety function: thresholds must be finite and positive");
            }
            if (i > 0 && !(thresholds_[i] > thresholds_[i - 1])) {
                throw ConfigError("safety function: thresholds must be strictly increasing");
            }
        }
    }

    std::vector<double> levels_;
    std::vector<double> thresholds_;
    DistanceMetric metric_;
};

inline double eval_scaling_by_distance(const StaircaseSafetyFunction& f, double d) {
    return f.scaling_at(d);
}

/// Ground-truth scaling for robot TCP `xr` and human centroid `xh`.
inline double eval_scaling(const StaircaseSafetyFunction& f, const Position3& xr, const Position3& xh) {
    if (!xr.finite() || !xh.finite()) throw DataError("eval_scaling: non-finite position");
    return f.scaling_at(distance(xr, xh));
}

}  // namespace scalepred
