#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace ctwin::domain {

enum class Level { low, medium, high };
enum class Dimension { cycle_length, volume, max_green };

inline constexpr std::array<Dimension, 3> all_dimensions{Dimension::cycle_length, Dimension::volume,
                                                         Dimension::max_green};
inline constexpr std::array<Level, 3> all_levels{Level::low, Level::medium, Level::high};

std::string_view level_name(Level l);
std::string_view dimension_name(Dimension d);

/// Boundaries {160, 200} s.
Level cycle_level(double cycle_length_s);
/// Boundaries {700, 900} vehicles.
Level volume_level(double completed_volume);
/// Boundaries {0.25, 0.50} of the cycle.
Level max_green_level(double major_through_fraction);

struct ScenarioSummary {
    double cycle_length_s;
    double completed_volume;
    double major_through_fraction;
};

struct SubgroupLabels {
    Level cycle;
    Level volume;
    Level max_green;

    Level at(Dimension d) const;
};

std::vector<SubgroupLabels> partition_subgroups(std::span<const ScenarioSummary> scenarios);

/// counts[d][l] over the labelled scenarios.
std::array<std::array<std::size_t, 3>, 3> subgroup_counts(std::span<const SubgroupLabels> labels);

}  // namespace ctwin::domain
