#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ctwin::domain {

struct TimedValue {
    double time_s;
    double value;
};

enum class Reduction { count, max, mean };

/// Buckets events into w windows of interval_s starting at start_s. An event on a
/// boundary belongs to the later window. Empty windows yield 0 for every reduction.
std::vector<double> aggregate_to_intervals(std::span<const TimedValue> events, double start_s, double interval_s,
                                           std::size_t w, Reduction how);

/// Window index of t, or throws when t is outside [start, start + w * interval).
std::size_t interval_of(double t, double start_s, double interval_s, std::size_t w);

}  // namespace ctwin::domain
