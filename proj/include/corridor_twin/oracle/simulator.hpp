#pragma once

#include "corridor_twin/domain/types.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ctwin::oracle {

using domain::Approach;
using domain::Scenario;
using domain::Turn;

struct Range {
    double lo;
    double hi;
};

/// Bounds used to draw random scenarios.
struct SamplingRanges {
    std::size_t intersections = 8;
    std::size_t intervals = 10;
    double interval_s = 300.0;
    double detector_setback_m = 500.0;
    Range cycle_s{120.0, 240.0};
    Range major_through_green{0.15, 0.60};
    Range major_demand{300.0, 900.0};  // veh/h
    Range minor_demand{50.0, 400.0};
    double demand_ramp = 0.3;  // relative change from first to last interval is within +-this
    Range link_length_m{500.0, 1000.0};
    Range lanes{2.0, 3.0};  // integer lanes drawn inclusive
    Range free_flow_speed_mps{12.0, 18.0};
    Range saturation_headway_s{1.8, 2.2};
    Range startup_lost_time_s{1.5, 3.0};
    Range speed_factor{0.8, 1.2};
    Range major_turn{0.03, 0.10};  // each of left and right on the arterial
    Range minor_turn{0.10, 0.40};
    domain::ArrivalProcess arrivals = domain::ArrivalProcess::poisson;

    void validate() const;
};

/// Deterministic in (seed, ranges).
Scenario sample_scenario(std::uint64_t seed, const SamplingRanges& ranges);

struct SimConfig {
    double time_step_s = 1.0;
    double warmup_s = 600.0;
    bool record_events = true;

    double horizon_s(const Scenario& s) const { return warmup_s + static_cast<double>(s.intervals) * s.interval_s; }
    void validate(const Scenario& s) const;
};

enum class EventKind : std::uint8_t { enter, detector, arrive_stopline, depart, exit };

std::string_view event_kind_name(EventKind k);

struct Event {
    double time_s;
    EventKind kind;
    std::size_t intersection;
    Approach approach;
    Turn turn;
    std::uint64_t vehicle;

    /// Movement code such as "EB-T".
    std::string movement() const;
};

using EventLog = std::vector<Event>;

struct StoplineVisit {
    std::size_t intersection;
    Approach approach;
    Turn turn;
    double detector_s;
    double arrival_s;  // unimpeded arrival at the stopline
    double departure_s;
};

struct VehicleRecord {
    std::uint64_t id;
    std::size_t origin_intersection;
    Approach origin;
    double entry_s;
    std::vector<StoplineVisit> visits;
    std::optional<double> exit_s;
    bool corridor_through = false;
};

struct SimulationResult {
    EventLog events;  // ordered by time, then vehicle id
    std::vector<VehicleRecord> vehicles;
    domain::Observations observations;
    domain::TargetBundle targets;
    double horizon_s = 0.0;
    double measure_start_s = 0.0;
    double free_flow_eb_s = 0.0;
    double free_flow_wb_s = 0.0;
};

/// Runs arrivals until the horizon, then lets the network drain so every vehicle
/// has a complete record.
SimulationResult simulate_scenario(const Scenario& scenario, const SimConfig& config);

/// Sum of link lengths / cruise speed: the corridor trip with no signal delay.
double free_flow_travel_time(const Scenario& scenario);

/// Next instant >= t at which `phase` has effective green at `intersection`;
/// throws when the phase is never served.
double next_effective_green(const Scenario& scenario, std::size_t intersection, domain::Phase phase, double t);

struct ConservationRow {
    std::string label;
    std::size_t entered = 0;
    std::size_t exited = 0;
    std::size_t in_network = 0;

    bool balanced() const { return entered == exited + in_network; }
};

struct ConservationReport {
    bool ok = true;
    std::vector<std::string> violations;
    std::vector<ConservationRow> approaches;  // one per origin approach that saw traffic
    ConservationRow total;
    std::map<std::string, std::size_t> movement_departures;  // "i:EB-T" -> departures before the horizon
};

/// Checks entered == exited + in_network at the horizon, per origin approach and in
/// total. Entered/exited come from the log, in_network from the vehicle records.
ConservationReport verify_conservation(const EventLog& log, std::span<const VehicleRecord> vehicles, double horizon_s);

/// CSV with header time_s,event_kind,intersection,movement,vehicle_id.
void write_event_log_csv(const EventLog& log, const std::filesystem::path& path);

}  // namespace ctwin::oracle
