#pragma once

#include <cmath>
#include <cstdint>

namespace vrsim {

// Simulation time in integer nanoseconds since run start. All durations in the
// model are held in whole nanoseconds so that arithmetic is exact and runs are
// reproducible bit for bit.
using SimTime = std::int64_t;

constexpr SimTime kNsPerUs = 1'000;
constexpr SimTime kNsPerMs = 1'000'000;
constexpr SimTime kNsPerSec = 1'000'000'000;

constexpr SimTime from_us(std::int64_t us) { return us * kNsPerUs; }
constexpr SimTime from_ms(std::int64_t ms) { return ms * kNsPerMs; }
constexpr SimTime from_sec(std::int64_t s) { return s * kNsPerSec; }

inline SimTime from_us_f(double us) { return std::llround(us * 1e3); }
inline SimTime from_ms_f(double ms) { return std::llround(ms * 1e6); }
inline SimTime from_sec_f(double s) { return std::llround(s * 1e9); }

constexpr double to_ms(SimTime t) { return static_cast<double>(t) / 1e6; }
constexpr double to_sec(SimTime t) { return static_cast<double>(t) / 1e9; }

// Ceiling division for non-negative integers.
constexpr std::int64_t ceil_div(std::int64_t num, std::int64_t den) {
    return (num + den - 1) / den;
}

}  // namespace vrsim
