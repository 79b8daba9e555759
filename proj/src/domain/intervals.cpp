#include "corridor_twin/domain/intervals.hpp"

#include "corridor_twin/errors.hpp"

#include <algorithm>
#include <cmath>

namespace ctwin::domain {

std::size_t interval_of(double t, double start_s, double interval_s, std::size_t w)
{
    const double end = start_s + interval_s * static_cast<double>(w);
    if (!(t >= start_s && t < end))
        throw ContractError("event at " + std::to_string(t) + " s outside the horizon [" + std::to_string(start_s) +
                            ", " + std::to_string(end) + ")");
    const auto idx = static_cast<std::size_t>(std::floor((t - start_s) / interval_s));
    return std::min(idx, w - 1);
}

std::vector<double> aggregate_to_intervals(std::span<const TimedValue> events, double start_s, double interval_s,
                                           std::size_t w, Reduction how)
{
    if (w == 0 || !(interval_s > 0.0))
        throw ContractError("aggregation needs a positive interval count and width");
    std::vector<double> out(w, 0.0);
    std::vector<std::size_t> seen(w, 0);
    for (const auto& e : events) {
        const std::size_t j = interval_of(e.time_s, start_s, interval_s, w);
        switch (how) {
        case Reduction::count: out[j] += 1.0; break;
        case Reduction::max: out[j] = seen[j] == 0 ? e.value : std::max(out[j], e.value); break;
        case Reduction::mean: out[j] += e.value; break;
        }
        ++seen[j];
    }
    if (how == Reduction::mean)
        for (std::size_t j = 0; j < w; ++j)
            if (seen[j] > 0)
                out[j] /= static_cast<double>(seen[j]);
    return out;
}

}  // namespace ctwin::domain
