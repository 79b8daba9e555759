#pragma once

#include "corridor_twin/autodiff/tensor.hpp"
#include "corridor_twin/graph/gat.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ctwin::domain {

using ad::Tensor;

inline constexpr std::size_t phase_count = 8;
inline constexpr std::size_t stage_count = 4;
inline constexpr std::size_t node_feature_rows = 14;
inline constexpr std::size_t edge_feature_count = 19;
inline constexpr double masked_sentinel = -1.0;
/// Clearance (yellow + all-red) charged to every served stage.
inline constexpr double stage_lost_time_s = 4.0;

/// Lane groups in column order.
enum class Phase : std::uint8_t {
    major_through_eb,
    major_through_wb,
    major_left_eb,
    major_left_wb,
    minor_through_nb,
    minor_through_sb,
    minor_left_nb,
    minor_left_sb,
};

/// Signal stages served in this order each cycle; max-green fractions are indexed the same way.
enum class Stage : std::uint8_t { major_through, major_left, minor_through, minor_left };

/// Direction of travel on the approach.
enum class Approach : std::uint8_t { eb, wb, nb, sb };

enum class Turn : std::uint8_t { left, through, right };

std::string_view phase_name(Phase p);
std::string_view approach_name(Approach a);
std::string_view turn_name(Turn t);
Stage stage_of(Phase p);
/// Right turns share the through lane group.
Phase phase_of(Approach a, Turn t);
bool is_major(Approach a);

struct CorridorGeometry {
    std::size_t intersections = 8;
    std::vector<double> link_length_m;  // intersections - 1 entries, west to east
    std::size_t lanes_per_movement = 2;
    double detector_setback_m = 500.0;

    void validate() const;
};

struct SignalPlan {
    double cycle_length_s = 120.0;
    double offset_s = 0.0;
    std::array<double, stage_count> max_green_fraction{};  // by Stage

    void validate(std::size_t intersection, double startup_lost_time_s) const;
    /// True when one stage owns the whole cycle and never changes.
    bool always_green() const;
};

struct DrivingBehavior {
    double free_flow_speed_mps = 15.0;
    double saturation_headway_s = 2.0;
    double startup_lost_time_s = 2.0;
    double speed_factor = 1.0;

    double cruise_speed_mps() const { return free_flow_speed_mps * speed_factor; }
    void validate() const;
};

struct TurnSplit {
    double left = 0.0;
    double through = 1.0;
    double right = 0.0;

    double share(Turn t) const;
    bool operator==(const TurnSplit&) const = default;
};

using ApproachTurns = std::array<TurnSplit, 4>;  // by Approach

/// Arrival-rate profile of one external approach, one entry per interval (veh/h).
struct ApproachDemand {
    std::size_t intersection = 0;
    Approach approach = Approach::eb;
    std::vector<double> veh_per_hour;
};

enum class ArrivalProcess : std::uint8_t { poisson, uniform };

struct Scenario {
    std::uint64_t seed = 0;
    std::size_t intervals = 10;
    double interval_s = 300.0;
    CorridorGeometry geometry;
    std::vector<SignalPlan> signals;  // per intersection
    DrivingBehavior behavior;
    std::vector<ApproachTurns> turning;  // per intersection
    std::vector<ApproachDemand> demand;  // canonical order, see external_approaches
    ArrivalProcess arrivals = ArrivalProcess::poisson;

    std::size_t k() const { return geometry.intersections; }
    double cycle_length_s() const { return signals.at(0).cycle_length_s; }
    double major_through_fraction() const { return signals.at(0).max_green_fraction[0]; }
    /// Throws ContractError naming the first violated invariant.
    void validate() const;
};

/// (intersection, approach) pairs fed from outside the corridor: eastbound at the
/// west end, westbound at the east end, then northbound and southbound at each node.
std::vector<std::pair<std::size_t, Approach>> external_approaches(std::size_t k);

struct TargetBundle {
    Tensor imputed_volumes;  // [k x p] veh
    Tensor travel_time_eb;   // [w] s
    Tensor travel_time_wb;   // [w] s
    Tensor queue_length;     // [k x p x w] veh
    Tensor waiting_time;     // [k x p x w] s
    double completed_trips_eb = 0.0;
    double completed_trips_wb = 0.0;

    /// Both directions together; the value used for volume subgroups.
    double completed_volume() const { return completed_trips_eb + completed_trips_wb; }
};

/// Detector and link observations produced by the oracle.
struct Observations {
    Tensor detector_counts;  // [k x p x w] per-interval counts
    Tensor link_density;     // [E x w] veh/km, rows in canonical edge order
};

struct StaticGraphSample {
    graph::GraphTopology topology{1, {}};
    Tensor node_features;  // [k x p], masked entries hold the sentinel
    Tensor mask;           // [k x p], 1 where masked
    Tensor edge_features;  // [E x 19]
};

/// Per-interval observations as delivered to inference: counts with masked
/// entries set to the sentinel, plus link densities.
struct DynamicInputs {
    Tensor detector_counts;  // [k x p x w]
    Tensor link_density;     // [E x w]
};

struct DynamicGraphSample {
    graph::GraphTopology topology{1, {}};
    Tensor node_tensor;  // [k x 14 x w]
    Tensor edge_static;  // [E x 19]
    Tensor edge_series;  // [E x w]

    /// Static edge features followed by the density series, per edge.
    Tensor edge_features() const;
};

struct DatasetRecord {
    Scenario scenario;
    StaticGraphSample static_graph;
    DynamicInputs dynamic_inputs;
    TargetBundle targets;
};

}  // namespace ctwin::domain
