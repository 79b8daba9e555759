#include "corridor_twin/domain/types.hpp"

#include "corridor_twin/errors.hpp"

#include <cmath>

namespace ctwin::domain {

std::string_view phase_name(Phase p)
{
    static constexpr std::array<std::string_view, phase_count> names{
        "major_through_eb", "major_through_wb", "major_left_eb", "major_left_wb",
        "minor_through_nb", "minor_through_sb", "minor_left_nb", "minor_left_sb"};
    return names.at(static_cast<std::size_t>(p));
}

std::string_view approach_name(Approach a)
{
    static constexpr std::array<std::string_view, 4> names{"EB", "WB", "NB", "SB"};
    return names.at(static_cast<std::size_t>(a));
}

std::string_view turn_name(Turn t)
{
    static constexpr std::array<std::string_view, 3> names{"L", "T", "R"};
    return names.at(static_cast<std::size_t>(t));
}

Stage stage_of(Phase p)
{
    return static_cast<Stage>(static_cast<std::size_t>(p) / 2);
}

bool is_major(Approach a)
{
    return a == Approach::eb || a == Approach::wb;
}

Phase phase_of(Approach a, Turn t)
{
    const bool left = t == Turn::left;
    switch (a) {
    case Approach::eb: return left ? Phase::major_left_eb : Phase::major_through_eb;
    case Approach::wb: return left ? Phase::major_left_wb : Phase::major_through_wb;
    case Approach::nb: return left ? Phase::minor_left_nb : Phase::minor_through_nb;
    case Approach::sb: return left ? Phase::minor_left_sb : Phase::minor_through_sb;
    }
    throw ContractError("unknown approach");
}

void CorridorGeometry::validate() const
{
    if (intersections < 2)
        throw ContractError("geometry: need at least 2 intersections, got " + std::to_string(intersections));
    if (link_length_m.size() != intersections - 1)
        throw ContractError("geometry: expected " + std::to_string(intersections - 1) + " link lengths, got " +
                            std::to_string(link_length_m.size()));
    if (lanes_per_movement == 0)
        throw ContractError("geometry: lanes_per_movement must be positive");
    if (!(detector_setback_m > 0.0))
        throw ContractError("geometry: detector setback must be positive");
    for (std::size_t i = 0; i < link_length_m.size(); ++i) {
        if (!(link_length_m[i] > 0.0))
            throw ContractError("geometry: link " + std::to_string(i) + " length must be positive");
        if (detector_setback_m > link_length_m[i])
            throw ContractError("geometry: detector setback " + std::to_string(detector_setback_m) +
                                " m exceeds link " + std::to_string(i) + " length " +
                                std::to_string(link_length_m[i]) + " m");
    }
}

bool SignalPlan::always_green() const
{
    std::size_t served = 0;
    bool full = false;
    for (double f : max_green_fraction) {
        served += f > 0.0;
        full = full || f == 1.0;
    }
    return served == 1 && full;
}

void SignalPlan::validate(std::size_t intersection, double startup_lost_time_s) const
{
    const std::string where = "signal plan at intersection " + std::to_string(intersection) + ": ";
    if (!(cycle_length_s > 0.0))
        throw ContractError(where + "cycle length must be positive");
    if (!(offset_s >= 0.0 && offset_s < cycle_length_s))
        throw ContractError(where + "offset " + std::to_string(offset_s) + " outside [0, cycle)");
    for (double f : max_green_fraction)
        if (!(f >= 0.0 && f <= 1.0))
            throw ContractError(where + "green fraction " + std::to_string(f) + " outside [0, 1]");
    if (always_green())
        return;
    double used = 0.0;
    for (std::size_t s = 0; s < stage_count; ++s) {
        const double green = max_green_fraction[s] * cycle_length_s;
        if (green <= 0.0)
            continue;
        if (green <= startup_lost_time_s)
            throw ContractError(where + "stage " + std::to_string(s) + " green " + std::to_string(green) +
                                " s does not exceed the startup lost time");
        used += green + stage_lost_time_s;
    }
    if (used > cycle_length_s + 1e-9)
        throw ContractError(where + "ring oversubscribed: greens plus lost time need " + std::to_string(used) +
                            " s of a " + std::to_string(cycle_length_s) + " s cycle");
}

void DrivingBehavior::validate() const
{
    if (!(free_flow_speed_mps > 0.0 && saturation_headway_s > 0.0 && startup_lost_time_s >= 0.0))
        throw ContractError("driving behavior: speed and headway must be positive, startup lost time non-negative");
    if (!(speed_factor >= 0.8 && speed_factor <= 1.2))
        throw ContractError("driving behavior: speed factor " + std::to_string(speed_factor) + " outside [0.8, 1.2]");
}

double TurnSplit::share(Turn t) const
{
    switch (t) {
    case Turn::left: return left;
    case Turn::through: return through;
    case Turn::right: return right;
    }
    return 0.0;
}

std::vector<std::pair<std::size_t, Approach>> external_approaches(std::size_t k)
{
    std::vector<std::pair<std::size_t, Approach>> out{{0, Approach::eb}, {k - 1, Approach::wb}};
    for (std::size_t i = 0; i < k; ++i) {
        out.emplace_back(i, Approach::nb);
        out.emplace_back(i, Approach::sb);
    }
    return out;
}

void Scenario::validate() const
{
    if (intervals == 0 || !(interval_s > 0.0))
        throw ContractError("scenario: interval count and width must be positive");
    geometry.validate();
    behavior.validate();
    const std::size_t n = k();
    if (signals.size() != n)
        throw ContractError("scenario: expected " + std::to_string(n) + " signal plans, got " +
                            std::to_string(signals.size()));
    for (std::size_t i = 0; i < n; ++i)
        signals[i].validate(i, behavior.startup_lost_time_s);
    if (turning.size() != n)
        throw ContractError("scenario: expected " + std::to_string(n) + " turning-ratio sets, got " +
                            std::to_string(turning.size()));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < 4; ++a) {
            const auto& t = turning[i][a];
            if (t.left < 0.0 || t.through < 0.0 || t.right < 0.0 ||
                std::abs(t.left + t.through + t.right - 1.0) > 1e-9)
                throw ContractError("scenario: turning ratios at intersection " + std::to_string(i) + " approach " +
                                    std::string(approach_name(static_cast<Approach>(a))) +
                                    " must be non-negative and sum to 1");
        }
    const auto expected = external_approaches(n);
    if (demand.size() != expected.size())
        throw ContractError("scenario: expected " + std::to_string(expected.size()) + " demand profiles, got " +
                            std::to_string(demand.size()));
    for (std::size_t d = 0; d < demand.size(); ++d) {
        const auto& dm = demand[d];
        if (dm.intersection != expected[d].first || dm.approach != expected[d].second)
            throw ContractError("scenario: demand profile " + std::to_string(d) + " is not in canonical order");
        if (dm.veh_per_hour.size() != intervals)
            throw ContractError("scenario: demand profile " + std::to_string(d) + " has " +
                                std::to_string(dm.veh_per_hour.size()) + " intervals, expected " +
                                std::to_string(intervals));
        for (double r : dm.veh_per_hour)
            if (!(r >= 0.0))
                throw ContractError("scenario: negative demand on profile " + std::to_string(d));
    }
}

Tensor DynamicGraphSample::edge_features() const
{
    const std::size_t e = edge_static.dim(0), s = edge_static.dim(1), w = edge_series.dim(1);
    Tensor out({e, s + w});
    for (std::size_t r = 0; r < e; ++r) {
        for (std::size_t c = 0; c < s; ++c)
            out[r * (s + w) + c] = edge_static[r * s + c];
        for (std::size_t c = 0; c < w; ++c)
            out[r * (s + w) + s + c] = edge_series[r * w + c];
    }
    return out;
}

}  // namespace ctwin::domain
