#include "corridor_twin/oracle/simulator.hpp"

#include "corridor_twin/domain/intervals.hpp"
#include "corridor_twin/errors.hpp"
#include "corridor_twin/util/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <queue>
#include <unordered_map>

namespace ctwin::oracle {

using ad::Tensor;
using domain::Phase;
using domain::phase_count;

namespace {

constexpr std::uint64_t arrival_salt = 0xA11CE5EEDull;
constexpr std::uint64_t turn_salt = 0x7E11CA5Eull;

void check_range(const Range& r, const char* name, double floor_lo = -INFINITY, double ceil_hi = INFINITY)
{
    if (!(r.lo <= r.hi))
        throw ContractError(std::string("sampling range '") + name + "' is empty");
    if (r.lo < floor_lo || r.hi > ceil_hi)
        throw ContractError(std::string("sampling range '") + name + "' [" + std::to_string(r.lo) + ", " +
                            std::to_string(r.hi) + "] leaves [" + std::to_string(floor_lo) + ", " +
                            std::to_string(ceil_hi) + "]");
}

double draw(Rng& rng, const Range& r) { return r.lo == r.hi ? r.lo : rng.uniform(r.lo, r.hi); }

}  // namespace

void SamplingRanges::validate() const
{
    if (intersections < 2 || intervals == 0 || !(interval_s > 0.0) || !(detector_setback_m > 0.0))
        throw ContractError("sampling ranges: need >= 2 intersections, >= 1 interval and positive widths");
    check_range(cycle_s, "cycle_s", 120.0, 240.0);
    check_range(major_through_green, "major_through_green", 0.15, 0.60);
    check_range(major_demand, "major_demand", 50.0, 1200.0);
    check_range(minor_demand, "minor_demand", 50.0, 1200.0);
    check_range(link_length_m, "link_length_m", detector_setback_m);
    check_range(lanes, "lanes", 1.0);
    check_range(free_flow_speed_mps, "free_flow_speed_mps", 1e-9);
    check_range(saturation_headway_s, "saturation_headway_s", 1e-9);
    check_range(startup_lost_time_s, "startup_lost_time_s", 0.0);
    check_range(speed_factor, "speed_factor", 0.8, 1.2);
    check_range(major_turn, "major_turn", 0.0, 0.5);
    check_range(minor_turn, "minor_turn", 0.0, 0.5);
    if (!(demand_ramp >= 0.0 && demand_ramp < 2.0))
        throw ContractError("sampling ranges: demand_ramp must lie in [0, 2)");
    // The three non-arterial stages share what the major through leaves; the
    // smallest share must still beat the startup lost time.
    const double spare = 1.0 - major_through_green.hi - domain::stage_count * domain::stage_lost_time_s / cycle_s.lo;
    if (spare * cycle_s.lo * 0.125 <= startup_lost_time_s.hi)
        throw ContractError("sampling ranges: too little cycle left for the minor and left-turn stages");
}

Scenario sample_scenario(std::uint64_t seed, const SamplingRanges& ranges)
{
    ranges.validate();
    Rng rng(seed);
    Scenario s;
    s.seed = seed;
    s.intervals = ranges.intervals;
    s.interval_s = ranges.interval_s;
    s.arrivals = ranges.arrivals;
    const std::size_t k = ranges.intersections;

    const double cycle = draw(rng, ranges.cycle_s);
    const double major_through = draw(rng, ranges.major_through_green);

    s.geometry.intersections = k;
    s.geometry.detector_setback_m = ranges.detector_setback_m;
    for (std::size_t i = 0; i + 1 < k; ++i)
        s.geometry.link_length_m.push_back(draw(rng, ranges.link_length_m));
    const auto lane_lo = static_cast<std::uint64_t>(ranges.lanes.lo);
    const auto lane_hi = static_cast<std::uint64_t>(ranges.lanes.hi);
    s.geometry.lanes_per_movement = lane_lo + rng.below(lane_hi - lane_lo + 1);

    s.behavior.free_flow_speed_mps = draw(rng, ranges.free_flow_speed_mps);
    s.behavior.saturation_headway_s = draw(rng, ranges.saturation_headway_s);
    s.behavior.startup_lost_time_s = draw(rng, ranges.startup_lost_time_s);
    s.behavior.speed_factor = draw(rng, ranges.speed_factor);

    const double spare = 1.0 - major_through - domain::stage_count * domain::stage_lost_time_s / cycle;
    for (std::size_t i = 0; i < k; ++i) {
        domain::SignalPlan plan;
        plan.cycle_length_s = cycle;
        plan.offset_s = rng.uniform() * cycle;
        const double major_left = rng.uniform(0.5, 1.0);
        const double minor_through = rng.uniform(1.0, 2.0);
        const double minor_left = rng.uniform(0.5, 1.0);
        const double total = major_left + minor_through + minor_left;
        plan.max_green_fraction = {major_through, spare * major_left / total, spare * minor_through / total,
                                   spare * minor_left / total};
        s.signals.push_back(plan);
    }

    for (std::size_t i = 0; i < k; ++i) {
        domain::ApproachTurns turns;
        for (std::size_t a = 0; a < 4; ++a) {
            const auto& r = domain::is_major(static_cast<Approach>(a)) ? ranges.major_turn : ranges.minor_turn;
            const double left = draw(rng, r);
            const double right = draw(rng, r);
            turns[a] = {left, 1.0 - left - right, right};
        }
        s.turning.push_back(turns);
    }

    for (const auto& [node, approach] : domain::external_approaches(k)) {
        const auto& r = domain::is_major(approach) ? ranges.major_demand : ranges.minor_demand;
        const double base = draw(rng, r);
        const double ramp = rng.uniform(-ranges.demand_ramp, ranges.demand_ramp);
        domain::ApproachDemand d{node, approach, {}};
        for (std::size_t j = 0; j < s.intervals; ++j) {
            const double position = s.intervals == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(s.intervals - 1) - 0.5;
            d.veh_per_hour.push_back(base * (1.0 + ramp * position));
        }
        s.demand.push_back(std::move(d));
    }
    s.validate();
    return s;
}

void SimConfig::validate(const Scenario& s) const
{
    if (!(time_step_s > 0.0) || !(warmup_s >= 0.0))
        throw ContractError("sim config: time step must be positive and warm-up non-negative");
    const double steps = s.interval_s / time_step_s;
    if (std::abs(steps - std::round(steps)) > 1e-9)
        throw ContractError("sim config: time step " + std::to_string(time_step_s) + " s does not divide interval " +
                            std::to_string(s.interval_s) + " s");
}

std::string_view event_kind_name(EventKind k)
{
    switch (k) {
    case EventKind::enter: return "enter";
    case EventKind::detector: return "detector";
    case EventKind::arrive_stopline: return "arrive_stopline";
    case EventKind::depart: return "depart";
    case EventKind::exit: return "exit";
    }
    return "?";
}

std::string Event::movement() const
{
    return std::string(domain::approach_name(approach)) + "-" + std::string(domain::turn_name(turn));
}

double free_flow_travel_time(const Scenario& s)
{
    double length = 0.0;
    for (double l : s.geometry.link_length_m)
        length += l;
    return length / s.behavior.cruise_speed_mps();
}

double next_effective_green(const Scenario& s, std::size_t intersection, Phase phase, double t)
{
    const auto& plan = s.signals.at(intersection);
    const auto stage = static_cast<std::size_t>(domain::stage_of(phase));
    if (!(plan.max_green_fraction[stage] > 0.0))
        throw ContractError("phase " + std::string(domain::phase_name(phase)) + " at intersection " +
                            std::to_string(intersection) + " is never served but has traffic");
    if (plan.always_green())
        return t;
    const double cycle = plan.cycle_length_s;
    double start = 0.0;
    for (std::size_t r = 0; r < stage; ++r)
        if (plan.max_green_fraction[r] > 0.0)
            start += plan.max_green_fraction[r] * cycle + domain::stage_lost_time_s;
    const double open = start + s.behavior.startup_lost_time_s;
    const double close = start + plan.max_green_fraction[stage] * cycle;
    double tau = std::fmod(t - plan.offset_s, cycle);
    if (tau < 0.0)
        tau += cycle;
    if (tau >= open && tau < close)
        return t;
    if (tau < open)
        return t + (open - tau);
    return t + (cycle - tau) + open;
}

namespace {

/// Candidate rate for thinning; any profile rate above it is rejected.
constexpr double max_rate_veh_per_hour = 3600.0;

struct Arrival {
    double time_s;
    std::uint64_t index;  // stable per candidate, so raising demand only adds vehicles
};

/// Arrival instants on [0, horizon) for a piecewise-constant rate; warm-up uses
/// the first interval's rate. Poisson thins a fixed-rate candidate stream drawn
/// from a counter-based hash; uniform places the n-th arrival where the
/// cumulative intensity reaches n + 1/2.
std::vector<Arrival> arrival_times(const Scenario& s, const SimConfig& cfg, std::size_t profile)
{
    const auto& rates = s.demand[profile].veh_per_hour;
    const double horizon = cfg.horizon_s(s);
    auto rate_at = [&](double t) {
        if (t < cfg.warmup_s)
            return rates[0] / 3600.0;
        const auto j = std::min(static_cast<std::size_t>((t - cfg.warmup_s) / s.interval_s), s.intervals - 1);
        return rates[j] / 3600.0;
    };
    const std::uint64_t stream = hash_combine(hash_combine(s.seed, arrival_salt), profile);
    std::vector<Arrival> out;

    if (s.arrivals == domain::ArrivalProcess::poisson) {
        const double cap = max_rate_veh_per_hour / 3600.0;
        double t = 0.0;
        for (std::uint64_t n = 0;; ++n) {
            const double gap = -std::log1p(-unit_from_bits(hash_combine(stream, 2 * n)));
            t += gap / cap;
            if (t >= horizon)
                break;
            if (unit_from_bits(hash_combine(stream, 2 * n + 1)) * cap < rate_at(t))
                out.push_back({t, n});
        }
        return out;
    }

    struct Segment {
        double start, end, rate;
    };
    std::vector<Segment> segments{{0.0, cfg.warmup_s, rates[0] / 3600.0}};
    for (std::size_t j = 0; j < s.intervals; ++j) {
        const double a = cfg.warmup_s + static_cast<double>(j) * s.interval_s;
        segments.push_back({a, a + s.interval_s, rates[j] / 3600.0});
    }
    double cumulative = 0.0;
    std::uint64_t n = 0;
    for (const auto& seg : segments) {
        const double mass = seg.rate * (seg.end - seg.start);
        while (seg.rate > 0.0 && static_cast<double>(n) + 0.5 < cumulative + mass) {
            out.push_back({seg.start + (static_cast<double>(n) + 0.5 - cumulative) / seg.rate, n});
            ++n;
        }
        cumulative += mass;
    }
    return out;
}

Turn choose_turn(const Scenario& s, std::uint64_t vehicle, std::size_t intersection, Approach approach)
{
    const double u = unit_from_bits(hash_combine(hash_combine(hash_combine(s.seed, turn_salt), vehicle), intersection));
    const auto& split = s.turning[intersection][static_cast<std::size_t>(approach)];
    if (u < split.left)
        return Turn::left;
    if (u < split.left + split.through)
        return Turn::through;
    return Turn::right;
}

enum class Heading { east, west, north, south };

Heading heading_after(Approach a, Turn t)
{
    static constexpr Heading table[4][3] = {
        {Heading::north, Heading::east, Heading::south},  // EB: L, T, R
        {Heading::south, Heading::west, Heading::north},  // WB
        {Heading::west, Heading::north, Heading::east},   // NB
        {Heading::east, Heading::south, Heading::west},   // SB
    };
    return table[static_cast<std::size_t>(a)][static_cast<std::size_t>(t)];
}

struct Pending {
    double time;
    std::uint64_t vehicle;
    std::size_t record;
    std::size_t intersection;
    Approach approach;
    double detector_s;

    bool operator>(const Pending& o) const { return time != o.time ? time > o.time : vehicle > o.vehicle; }
};

/// Canonical edge row of the link leaving `from` in the given heading.
std::size_t edge_row(std::size_t k, std::size_t from, Heading h)
{
    return h == Heading::east ? from : (k - 1) + (k - 1 - from);
}

/// Max number of waiting vehicles per window from (arrival, departure) pairs;
/// only vehicles that actually waited are counted.
std::vector<double> max_queue(std::vector<std::pair<double, double>> stays, double start, double width, std::size_t w)
{
    std::vector<std::pair<double, int>> deltas;
    for (const auto& [a, d] : stays)
        if (d > a) {
            deltas.emplace_back(a, +1);
            deltas.emplace_back(d, -1);
        }
    std::sort(deltas.begin(), deltas.end());  // departures sort before arrivals at equal times
    std::vector<double> out(w, 0.0);
    std::size_t next = 0;
    long count = 0;
    for (std::size_t j = 0; j < w; ++j) {
        const double lo = start + static_cast<double>(j) * width;
        const double hi = lo + width;
        while (next < deltas.size() && deltas[next].first <= lo)
            count += deltas[next++].second;
        double peak = static_cast<double>(count);
        while (next < deltas.size() && deltas[next].first < hi) {
            const double t = deltas[next].first;
            while (next < deltas.size() && deltas[next].first == t)
                count += deltas[next++].second;
            peak = std::max(peak, static_cast<double>(count));
        }
        out[j] = peak;
    }
    return out;
}

}  // namespace

SimulationResult simulate_scenario(const Scenario& s, const SimConfig& cfg)
{
    s.validate();
    cfg.validate(s);
    for (const auto& d : s.demand)
        for (double r : d.veh_per_hour)
            if (r > max_rate_veh_per_hour)
                throw ContractError("demand " + std::to_string(r) + " veh/h at " +
                                    std::string(domain::approach_name(d.approach)) + "@" +
                                    std::to_string(d.intersection) + " exceeds the simulator cap of " +
                                    std::to_string(max_rate_veh_per_hour) + " veh/h");
    const std::size_t k = s.k(), w = s.intervals, p = phase_count;
    const double horizon = cfg.horizon_s(s);
    const double start = cfg.warmup_s;
    const double speed = s.behavior.cruise_speed_mps();
    const double setback_time = s.geometry.detector_setback_m / speed;
    const double service_gap = s.behavior.saturation_headway_s / static_cast<double>(s.geometry.lanes_per_movement);

    SimulationResult result;
    result.horizon_s = horizon;
    result.measure_start_s = start;
    result.free_flow_eb_s = result.free_flow_wb_s = free_flow_travel_time(s);
    auto& vehicles = result.vehicles;
    auto& log = result.events;

    std::priority_queue<Pending, std::vector<Pending>, std::greater<>> pending;
    const auto externals = domain::external_approaches(k);
    for (std::size_t d = 0; d < externals.size(); ++d) {
        const auto [node, approach] = externals[d];
        for (const auto& arrival : arrival_times(s, cfg, d)) {
            const std::uint64_t id = (static_cast<std::uint64_t>(d) << 32) | arrival.index;
            vehicles.push_back({id, node, approach, arrival.time_s, {}, std::nullopt, false});
            pending.push({arrival.time_s + setback_time, id, vehicles.size() - 1, node, approach, arrival.time_s});
        }
    }

    std::vector<double> next_free(k * p, -INFINITY);
    auto process = [&](const Pending& ev) {
        auto& rec = vehicles[ev.record];
        const Turn turn = choose_turn(s, ev.vehicle, ev.intersection, ev.approach);
        const Phase phase = domain::phase_of(ev.approach, turn);
        const std::size_t group = ev.intersection * p + static_cast<std::size_t>(phase);
        const double departure =
            next_effective_green(s, ev.intersection, phase, std::max(ev.time, next_free[group]));
        next_free[group] = departure + service_gap;
        rec.visits.push_back({ev.intersection, ev.approach, turn, ev.detector_s, ev.time, departure});

        const Heading h = heading_after(ev.approach, turn);
        const bool east_next = h == Heading::east && ev.intersection + 1 < k;
        const bool west_next = h == Heading::west && ev.intersection > 0;
        if (east_next || west_next) {
            const std::size_t to = east_next ? ev.intersection + 1 : ev.intersection - 1;
            const double length = s.geometry.link_length_m[std::min(ev.intersection, to)];
            const double arrive = departure + length / speed;
            pending.push({arrive, ev.vehicle, ev.record, to, east_next ? Approach::eb : Approach::wb,
                          arrive - setback_time});
            return;
        }
        rec.exit_s = departure;
        rec.corridor_through =
            (rec.origin == Approach::eb && rec.origin_intersection == 0 && h == Heading::east) ||
            (rec.origin == Approach::wb && rec.origin_intersection == k - 1 && h == Heading::west);
        if (rec.corridor_through)
            for (const auto& v : rec.visits)
                rec.corridor_through = rec.corridor_through && v.turn == Turn::through;
    };

    // Fixed-step clock; events inside a step are handled in time order.
    double clock = 0.0;
    while (!pending.empty()) {
        if (pending.top().time >= clock + cfg.time_step_s)
            clock = std::floor(pending.top().time / cfg.time_step_s) * cfg.time_step_s;
        const double step_end = clock + cfg.time_step_s;
        while (!pending.empty() && pending.top().time < step_end) {
            const Pending ev = pending.top();
            pending.pop();
            process(ev);
        }
        clock = step_end;
    }

    if (cfg.record_events) {
        for (const auto& rec : vehicles) {
            const auto& first = rec.visits.front();
            log.push_back({rec.entry_s, EventKind::enter, rec.origin_intersection, rec.origin, first.turn, rec.id});
            for (const auto& v : rec.visits) {
                log.push_back({v.detector_s, EventKind::detector, v.intersection, v.approach, v.turn, rec.id});
                log.push_back({v.arrival_s, EventKind::arrive_stopline, v.intersection, v.approach, v.turn, rec.id});
                log.push_back({v.departure_s, EventKind::depart, v.intersection, v.approach, v.turn, rec.id});
            }
            const auto& last = rec.visits.back();
            log.push_back({*rec.exit_s, EventKind::exit, last.intersection, last.approach, last.turn, rec.id});
        }
        std::sort(log.begin(), log.end(), [](const Event& a, const Event& b) {
            if (a.time_s != b.time_s)
                return a.time_s < b.time_s;
            if (a.vehicle != b.vehicle)
                return a.vehicle < b.vehicle;
            return a.kind < b.kind;
        });
    }

    // Measures over [start, horizon).
    const std::size_t edges = 2 * (k - 1);
    Tensor counts({k, p, w}), queue({k, p, w}), waiting({k, p, w}), density({edges, w});
    std::vector<std::vector<std::pair<double, double>>> stays(k * p);
    std::vector<std::vector<domain::TimedValue>> waits(k * p);
    std::vector<domain::TimedValue> tt_east, tt_west;
    double completed_east = 0.0, completed_west = 0.0;
    auto in_window = [&](double t) { return t >= start && t < horizon; };

    for (const auto& rec : vehicles) {
        for (std::size_t v = 0; v < rec.visits.size(); ++v) {
            const auto& visit = rec.visits[v];
            const std::size_t group =
                visit.intersection * p + static_cast<std::size_t>(domain::phase_of(visit.approach, visit.turn));
            if (in_window(visit.detector_s))
                counts[group * w + domain::interval_of(visit.detector_s, start, s.interval_s, w)] += 1.0;
            stays[group].emplace_back(visit.arrival_s, visit.departure_s);
            if (in_window(visit.departure_s))
                waits[group].push_back({visit.departure_s, visit.departure_s - visit.arrival_s});

            if (v + 1 < rec.visits.size()) {
                const Heading h = rec.visits[v + 1].intersection > visit.intersection ? Heading::east : Heading::west;
                const std::size_t row = edge_row(k, visit.intersection, h);
                const double length =
                    s.geometry.link_length_m[std::min(visit.intersection, rec.visits[v + 1].intersection)];
                const double enter = visit.departure_s, leave = rec.visits[v + 1].departure_s;
                for (std::size_t j = 0; j < w; ++j) {
                    const double lo = start + static_cast<double>(j) * s.interval_s;
                    const double overlap = std::min(leave, lo + s.interval_s) - std::max(enter, lo);
                    if (overlap > 0.0)
                        density[row * w + j] += overlap / (s.interval_s * length / 1000.0);
                }
            }
        }
        const bool from_west = rec.origin == Approach::eb && rec.origin_intersection == 0;
        const bool from_east = rec.origin == Approach::wb && rec.origin_intersection == k - 1;
        if ((from_west || from_east) && in_window(rec.entry_s) && rec.exit_s && *rec.exit_s < horizon)
            (from_west ? completed_east : completed_west) += 1.0;
        // Corridor trip runs from the first stopline to the last departure.
        const double corridor_entry = rec.visits.front().arrival_s;
        if (rec.corridor_through && in_window(corridor_entry))
            (from_west ? tt_east : tt_west).push_back({corridor_entry, *rec.exit_s - corridor_entry});
    }

    for (std::size_t g = 0; g < k * p; ++g) {
        const auto q = max_queue(std::move(stays[g]), start, s.interval_s, w);
        const auto m = domain::aggregate_to_intervals(waits[g], start, s.interval_s, w, domain::Reduction::mean);
        for (std::size_t j = 0; j < w; ++j) {
            queue[g * w + j] = q[j];
            waiting[g * w + j] = m[j];
        }
    }

    Tensor volumes({k, p});
    for (std::size_t g = 0; g < k * p; ++g)
        for (std::size_t j = 0; j < w; ++j)
            volumes[g] += counts[g * w + j];

    auto series = [&](const std::vector<domain::TimedValue>& samples, double fallback) {
        const auto mean = domain::aggregate_to_intervals(samples, start, s.interval_s, w, domain::Reduction::mean);
        const auto n = domain::aggregate_to_intervals(samples, start, s.interval_s, w, domain::Reduction::count);
        Tensor out(ad::Shape{w});
        for (std::size_t j = 0; j < w; ++j)
            out[j] = n[j] > 0.0 ? mean[j] : fallback;
        return out;
    };

    result.observations = {counts, density};
    result.targets.imputed_volumes = std::move(volumes);
    result.targets.travel_time_eb = series(tt_east, result.free_flow_eb_s);
    result.targets.travel_time_wb = series(tt_west, result.free_flow_wb_s);
    result.targets.queue_length = std::move(queue);
    result.targets.waiting_time = std::move(waiting);
    result.targets.completed_trips_eb = completed_east;
    result.targets.completed_trips_wb = completed_west;
    return result;
}

ConservationReport verify_conservation(const EventLog& log, std::span<const VehicleRecord> vehicles, double horizon_s)
{
    auto label = [](std::size_t node, Approach a) {
        return std::string(domain::approach_name(a)) + "@" + std::to_string(node);
    };
    std::unordered_map<std::uint64_t, std::string> origin;
    std::map<std::string, ConservationRow> rows;
    ConservationReport report;
    for (const auto& rec : vehicles) {
        origin[rec.id] = label(rec.origin_intersection, rec.origin);
        auto& row = rows[origin[rec.id]];
        row.label = origin[rec.id];
        if (rec.entry_s < horizon_s && (!rec.exit_s || *rec.exit_s >= horizon_s))
            ++row.in_network;
        double last = rec.entry_s;
        for (const auto& v : rec.visits) {
            if (!(v.detector_s >= last - 1e-9 && v.arrival_s >= v.detector_s && v.departure_s >= v.arrival_s)) {
                report.violations.push_back("vehicle " + std::to_string(rec.id) + " has non-monotone timestamps at intersection " +
                                            std::to_string(v.intersection));
                break;
            }
            last = v.departure_s;
        }
    }
    for (const auto& e : log) {
        if (e.time_s >= horizon_s)
            continue;
        if (e.kind == EventKind::enter) {
            auto& row = rows[label(e.intersection, e.approach)];
            row.label = label(e.intersection, e.approach);
            ++row.entered;
        } else if (e.kind == EventKind::exit) {
            auto it = origin.find(e.vehicle);
            if (it == origin.end()) {
                report.violations.push_back("exit of unknown vehicle " + std::to_string(e.vehicle));
                continue;
            }
            ++rows[it->second].exited;
        } else if (e.kind == EventKind::depart) {
            ++report.movement_departures[std::to_string(e.intersection) + ":" + e.movement()];
        }
    }
    report.total.label = "total";
    for (auto& [name, row] : rows) {
        report.total.entered += row.entered;
        report.total.exited += row.exited;
        report.total.in_network += row.in_network;
        if (!row.balanced())
            report.violations.push_back(name + ": entered " + std::to_string(row.entered) + " != exited " +
                                        std::to_string(row.exited) + " + in network " + std::to_string(row.in_network));
        report.approaches.push_back(row);
    }
    if (!report.total.balanced())
        report.violations.push_back("total: entered " + std::to_string(report.total.entered) + " != exited " +
                                    std::to_string(report.total.exited) + " + in network " +
                                    std::to_string(report.total.in_network));
    report.ok = report.violations.empty();
    return report;
}

void write_event_log_csv(const EventLog& log, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot open event log for writing: " + path.string());
    out << "time_s,event_kind,intersection,movement,vehicle_id\n";
    char buf[64];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof buf, "%.17g", e.time_s);
        out << buf << ',' << event_kind_name(e.kind) << ',' << e.intersection << ',' << e.movement() << ','
            << e.vehicle << '\n';
    }
    if (!out)
        throw IoError("failed writing event log: " + path.string());
}

}  // namespace ctwin::oracle
