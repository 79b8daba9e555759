#include "corridor_twin/domain/graphs.hpp"
#include "corridor_twin/domain/intervals.hpp"
#include "corridor_twin/domain/subgroups.hpp"
#include "corridor_twin/errors.hpp"
#include "corridor_twin/oracle/simulator.hpp"
#include "scenarios.hpp"

#include <doctest.h>

#include <cmath>
#include <map>

using namespace ctwin;
using namespace ctwin::domain;
using ad::Shape;
using oracle::EventKind;
using oracle::SimConfig;
using testing::demand_at;
using testing::quiet_corridor;

namespace {

constexpr std::size_t p = phase_count;

Scenario busy_three_node()
{
    Scenario s = quiet_corridor(3, 2, 300.0);
    s.seed = 99;
    for (auto& d : s.demand)
        d.veh_per_hour = domain::is_major(d.approach) ? std::vector<double>{500.0, 650.0}
                                                      : std::vector<double>{150.0, 120.0};
    for (auto& node : s.turning) {
        node[0] = {0.1, 0.8, 0.1};
        node[1] = {0.15, 0.75, 0.1};
        node[2] = {0.3, 0.5, 0.2};
        node[3] = {0.25, 0.5, 0.25};
    }
    s.signals[1].offset_s = 40.0;
    s.signals[2].offset_s = 80.0;
    return s;
}

}  // namespace

TEST_CASE("arterial mask covers major phases at internal nodes only")
{
    const Tensor mask = arterial_mask(8);
    CHECK(mask.shape() == Shape{8, 8});
    std::size_t ones = 0;
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t ph = 0; ph < p; ++ph) {
            const bool expected = i >= 1 && i <= 6 && ph < 4;
            CHECK((mask[i * p + ph] != 0.0) == expected);
            ones += mask[i * p + ph] != 0.0;
        }
    CHECK(ones == 24);
    // Purely topological: identical for any other scenario of the same size.
    const auto a = build_static_graph(quiet_corridor(8, 2), oracle::simulate_scenario(quiet_corridor(8, 2), {}).observations);
    for (std::size_t i = 0; i < mask.size(); ++i)
        CHECK(a.mask[i] == mask[i]);
}

TEST_CASE("zero demand gives zero unmasked node features")
{
    const Scenario s = quiet_corridor(8, 10);
    const auto sim = oracle::simulate_scenario(s, {});
    const auto g = build_static_graph(s, sim.observations);
    CHECK(g.node_features.shape() == Shape{8, 8});
    CHECK(g.edge_features.shape() == Shape{14, edge_feature_count});
    for (std::size_t i = 0; i < g.node_features.size(); ++i)
        CHECK(g.node_features[i] == (g.mask[i] != 0.0 ? masked_sentinel : 0.0));
}

TEST_CASE("missing detector record names intersection and phase")
{
    const Scenario s = quiet_corridor(3, 2);
    auto obs = oracle::simulate_scenario(s, {}).observations;
    obs.detector_counts[(2 * p + 5) * 2 + 1] = std::nan("");
    try {
        (void)build_static_graph(s, obs);
        FAIL("expected a ContractError");
    } catch (const ContractError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("intersection 2") != std::string::npos);
        CHECK(msg.find("minor_through_sb") != std::string::npos);
    }
}

TEST_CASE("static node features match a hand tally of detector events")
{
    const Scenario s = busy_three_node();
    const SimConfig cfg;
    const auto sim = oracle::simulate_scenario(s, cfg);
    const auto g = build_static_graph(s, sim.observations);

    std::map<std::size_t, double> tally;
    for (const auto& e : sim.events)
        if (e.kind == EventKind::detector && e.time_s >= cfg.warmup_s && e.time_s < cfg.horizon_s(s))
            tally[e.intersection * p + static_cast<std::size_t>(phase_of(e.approach, e.turn))] += 1.0;

    double total = 0.0;
    for (std::size_t i = 0; i < 3 * p; ++i) {
        if (g.mask[i] != 0.0) {
            CHECK(g.node_features[i] == masked_sentinel);
            continue;
        }
        CHECK(g.node_features[i] == tally[i]);
        total += tally[i];
    }
    CHECK(total > 100.0);
    // The middle node's arterial phases are hidden but did carry traffic.
    CHECK(tally[1 * p + 0] > 0.0);
}

TEST_CASE("static edge features follow the column schema")
{
    Scenario s = busy_three_node();
    s.geometry.link_length_m = {700.0, 900.0};
    const auto sim = oracle::simulate_scenario(s, {});
    const auto g = build_static_graph(s, sim.observations);
    REQUIRE(g.edge_features.shape() == Shape{4, 19});
    const auto row = [&](std::size_t e, std::size_t c) { return g.edge_features[e * 19 + c]; };
    // Edges: 0->1, 1->2 eastbound then 2->1, 1->0 westbound.
    CHECK(row(0, 0) == 700.0);
    CHECK(row(1, 0) == 900.0);
    CHECK(row(2, 0) == 900.0);
    CHECK(row(3, 0) == 700.0);
    CHECK(row(0, 16) == 0.0);
    CHECK(row(3, 16) == 1.0);
    CHECK(row(1, 10) == 80.0);  // downstream offset of node 2
    CHECK(row(2, 8) == 80.0);   // upstream offset of node 2
    CHECK(row(0, 4) == doctest::Approx(0.1));
    CHECK(row(3, 4) == doctest::Approx(0.15));
    CHECK(row(0, 18) == 300.0);
}

TEST_CASE("dynamic graph has the documented shape and constant rows")
{
    Scenario s = quiet_corridor(8, 10);
    for (auto& d : s.demand)
        d.veh_per_hour.assign(10, domain::is_major(d.approach) ? 400.0 : 100.0);
    const auto sim = oracle::simulate_scenario(s, {});
    const auto g = build_static_graph(s, sim.observations);
    const auto inputs = mask_observations(g, sim.observations);
    const auto dyn = build_dynamic_graph(g, sim.targets.imputed_volumes, s, inputs);

    CHECK(dyn.node_tensor.shape() == Shape{8, 14, 10});
    CHECK(dyn.edge_features().shape() == Shape{14, 29});
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t r = p; r < 14; ++r)
            for (std::size_t t = 1; t < 10; ++t)
                CHECK(dyn.node_tensor[(i * 14 + r) * 10 + t] == dyn.node_tensor[(i * 14 + r) * 10]);
        CHECK(dyn.node_tensor[(i * 14 + 8) * 10] == 120.0);
        CHECK(dyn.node_tensor[(i * 14 + 10) * 10] == 0.4);
        for (std::size_t ph = 0; ph < p; ++ph) {
            double sum = 0.0;
            for (std::size_t t = 0; t < 10; ++t)
                sum += dyn.node_tensor[(i * 14 + ph) * 10 + t];
            CHECK(sum == doctest::Approx(sim.targets.imputed_volumes[i * p + ph]));
        }
    }
}

TEST_CASE("dynamic graph rejects sentinels in the imputed volumes")
{
    const Scenario s = quiet_corridor(3, 2);
    const auto sim = oracle::simulate_scenario(s, {});
    const auto g = build_static_graph(s, sim.observations);
    CHECK_THROWS_AS(build_dynamic_graph(g, g.node_features, s, mask_observations(g, sim.observations)),
                    ContractError);
}

TEST_CASE("link densities match a recount from the event log")
{
    const Scenario s = busy_three_node();
    const SimConfig cfg;
    const auto sim = oracle::simulate_scenario(s, cfg);
    const std::size_t w = s.intervals;

    // Occupancy of a link runs from one stopline departure to the next.
    std::map<std::uint64_t, std::vector<std::pair<double, std::size_t>>> departures;
    for (const auto& e : sim.events)
        if (e.kind == EventKind::depart)
            departures[e.vehicle].emplace_back(e.time_s, e.intersection);
    Tensor recount({4, w});
    for (auto& [id, seq] : departures) {
        std::sort(seq.begin(), seq.end());
        for (std::size_t v = 0; v + 1 < seq.size(); ++v) {
            const auto [t0, from] = seq[v];
            const auto [t1, to] = seq[v + 1];
            const std::size_t row = to > from ? from : 2 + (2 - from);
            const double length = s.geometry.link_length_m[std::min(from, to)];
            for (std::size_t j = 0; j < w; ++j) {
                const double lo = cfg.warmup_s + static_cast<double>(j) * s.interval_s;
                const double overlap = std::min(t1, lo + s.interval_s) - std::max(t0, lo);
                if (overlap > 0.0)
                    recount[row * w + j] += overlap / s.interval_s / (length / 1000.0);
            }
        }
    }
    const auto g = build_static_graph(s, sim.observations);
    const auto dyn = build_dynamic_graph(g, sim.targets.imputed_volumes, s, mask_observations(g, sim.observations));
    for (std::size_t i = 0; i < recount.size(); ++i) {
        CHECK(dyn.edge_series[i] == doctest::Approx(recount[i]).epsilon(1e-12));
        CHECK(recount[i] > 0.0);
    }
}

TEST_CASE("aggregate_to_intervals examples")
{
    const std::vector<TimedValue> none;
    const auto empty = aggregate_to_intervals(none, 0.0, 300.0, 10, Reduction::count);
    CHECK(empty == std::vector<double>(10, 0.0));

    const std::vector<TimedValue> at_zero{{0.0, 1.0}};
    CHECK(aggregate_to_intervals(at_zero, 0.0, 300.0, 3, Reduction::count) == std::vector<double>{1.0, 0.0, 0.0});

    const std::vector<TimedValue> on_boundary{{300.0, 1.0}, {600.0, 1.0}};
    CHECK(aggregate_to_intervals(on_boundary, 0.0, 300.0, 3, Reduction::count) == std::vector<double>{0.0, 1.0, 1.0});

    // Synthetic log built from target counts.
    const std::vector<double> target{3, 0, 7, 1, 12};
    std::vector<TimedValue> log;
    Rng rng(5);
    for (std::size_t j = 0; j < target.size(); ++j)
        for (int n = 0; n < static_cast<int>(target[j]); ++n)
            log.push_back({100.0 + 60.0 * static_cast<double>(j) + rng.uniform() * 60.0, static_cast<double>(n)});
    rng.shuffle(std::span(log));
    CHECK(aggregate_to_intervals(log, 100.0, 60.0, 5, Reduction::count) == target);
    const auto maxima = aggregate_to_intervals(log, 100.0, 60.0, 5, Reduction::max);
    CHECK(maxima == std::vector<double>{2, 0, 6, 0, 11});
    const auto means = aggregate_to_intervals(log, 100.0, 60.0, 5, Reduction::mean);
    CHECK(means[2] == doctest::Approx(3.0));
    CHECK(means[1] == 0.0);

    const std::vector<TimedValue> outside{{400.0, 1.0}};
    CHECK_THROWS_AS(aggregate_to_intervals(outside, 100.0, 60.0, 5, Reduction::count), ContractError);
    const std::vector<TimedValue> before{{99.0, 1.0}};
    CHECK_THROWS_AS(aggregate_to_intervals(before, 100.0, 60.0, 5, Reduction::count), ContractError);
}

TEST_CASE("subgroup boundaries")
{
    CHECK(cycle_level(159.9) == Level::low);
    CHECK(cycle_level(160.0) == Level::medium);
    CHECK(cycle_level(199.9) == Level::medium);
    CHECK(cycle_level(200.0) == Level::high);
    CHECK(volume_level(699.0) == Level::low);
    CHECK(volume_level(700.0) == Level::medium);
    CHECK(volume_level(900.0) == Level::high);
    CHECK(max_green_level(0.249) == Level::low);
    CHECK(max_green_level(0.25) == Level::medium);
    CHECK(max_green_level(0.5) == Level::high);
}

TEST_CASE("subgroup labels partition the dataset")
{
    Rng rng(3);
    std::vector<ScenarioSummary> items;
    for (int n = 0; n < 500; ++n)
        items.push_back({rng.uniform(120.0, 240.0), rng.uniform(400.0, 1200.0), rng.uniform(0.15, 0.6)});
    const auto labels = partition_subgroups(items);
    REQUIRE(labels.size() == items.size());
    const auto counts = subgroup_counts(labels);
    for (Dimension d : all_dimensions) {
        std::size_t total = 0;
        for (Level l : all_levels)
            total += counts[static_cast<std::size_t>(d)][static_cast<std::size_t>(l)];
        CHECK(total == items.size());
    }
    for (std::size_t n = 0; n < items.size(); ++n) {
        CHECK(labels[n].cycle == cycle_level(items[n].cycle_length_s));
        CHECK(labels[n].at(Dimension::volume) == volume_level(items[n].completed_volume));
    }
}
