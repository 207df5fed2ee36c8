#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace scalepred {

/// Invalid configuration or usage. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input data or a failed run. The CLI maps this to exit code 3.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Cartesian position in meters, z up.
struct Position3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend bool operator==(const Position3&, const Position3&) = default;

    Position3& operator+=(const Position3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    friend Position3 operator+(Position3 a, const Position3& b) { return a += b; }
    friend Position3 operator-(const Position3& a, const Position3& b) {
        return {a.x - b.x, a.y - b.y, a.z - b.z};
    }
    friend Position3 operator*(double k, const Position3& a) { return {k * a.x, k * a.y, k * a.z}; }

    [[nodiscard]] double norm() const { return std::sqrt(x * x + y * y + z * z); }
    [[nodiscard]] bool finite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
    }
};

inline double distance(const Position3& a, const Position3& b) { return (a - b).norm(); }

inline Position3 midpoint(const Position3& a, const Position3& b) { return 0.5 * (a + b); }

}  // namespace scalepred
