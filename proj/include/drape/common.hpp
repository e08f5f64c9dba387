#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace drape {

/// Thrown on any contract violation (bad input, shape mismatch, parse error).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void check(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

inline bool is_finite(double x) { return std::isfinite(x); }

constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double d) { return d * kPi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / kPi; }

} // namespace drape
