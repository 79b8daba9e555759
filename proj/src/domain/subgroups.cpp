#include "corridor_twin/domain/subgroups.hpp"

namespace ctwin::domain {

std::string_view level_name(Level l)
{
    switch (l) {
    case Level::low: return "Low";
    case Level::medium: return "Medium";
    case Level::high: return "High";
    }
    return "?";
}

std::string_view dimension_name(Dimension d)
{
    switch (d) {
    case Dimension::cycle_length: return "cycle_length";
    case Dimension::volume: return "traffic_volume";
    case Dimension::max_green: return "max_green";
    }
    return "?";
}

namespace {
Level bucket(double v, double lower, double upper)
{
    if (v < lower)
        return Level::low;
    return v < upper ? Level::medium : Level::high;
}
}  // namespace

Level cycle_level(double cycle_length_s) { return bucket(cycle_length_s, 160.0, 200.0); }
Level volume_level(double completed_volume) { return bucket(completed_volume, 700.0, 900.0); }
Level max_green_level(double major_through_fraction) { return bucket(major_through_fraction, 0.25, 0.50); }

Level SubgroupLabels::at(Dimension d) const
{
    switch (d) {
    case Dimension::cycle_length: return cycle;
    case Dimension::volume: return volume;
    case Dimension::max_green: return max_green;
    }
    return cycle;
}

std::vector<SubgroupLabels> partition_subgroups(std::span<const ScenarioSummary> scenarios)
{
    std::vector<SubgroupLabels> out;
    out.reserve(scenarios.size());
    for (const auto& s : scenarios)
        out.push_back({cycle_level(s.cycle_length_s), volume_level(s.completed_volume),
                       max_green_level(s.major_through_fraction)});
    return out;
}

std::array<std::array<std::size_t, 3>, 3> subgroup_counts(std::span<const SubgroupLabels> labels)
{
    std::array<std::array<std::size_t, 3>, 3> counts{};
    for (const auto& l : labels)
        for (std::size_t d = 0; d < 3; ++d)
            ++counts[d][static_cast<std::size_t>(l.at(all_dimensions[d]))];
    return counts;
}

}  // namespace ctwin::domain
