// Heavier checks that only the acceptance runner executes.
#include "corridor_twin/domain/graphs.hpp"
#include "corridor_twin/eval/metrics.hpp"
#include "corridor_twin/model/tgdt.hpp"
#include "corridor_twin/oracle/dataset.hpp"
#include "corridor_twin/oracle/simulator.hpp"
#include "gat_oracle.hpp"
#include "gradcheck.hpp"

#include <doctest.h>

#include <cmath>

using namespace ctwin;
using ad::Tape;
using ad::Tensor;
using ad::Value;
using testing::gradient_check;
using testing::random_tensor;

namespace {

Value probe(Tape& t, const Value& v, std::uint64_t seed)
{
    Rng r(seed);
    return ad::sum_all(ad::mul(v, t.constant(random_tensor(v.shape(), r))));
}

void squash(Tensor& t)
{
    for (auto& v : t.data())
        v = std::tanh(v / 100.0);
}

}  // namespace

TEST_CASE("acceptance: model modules pass the finite-difference check for ten seeds")
{
    constexpr std::size_t k = 3, w = 4;
    oracle::GenerationConfig gen;
    gen.ranges.intersections = k;
    gen.ranges.intervals = w;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        CAPTURE(seed);
        const auto records = oracle::generate_records(2, 500 + seed, gen, Execution::serial);
        model::ModelConfig mc;
        mc.intersections = k;
        mc.intervals = w;
        mc.init_seed = 900 + seed;
        model::TgdtModel net(mc);
        std::vector<const domain::StaticGraphSample*> statics{&records[0].static_graph, &records[1].static_graph};
        auto inflow_in = model::encode_inflow(net.norm, statics);
        std::vector<domain::DynamicGraphSample> dynamic;
        for (const auto& r : records)
            dynamic.push_back(domain::build_dynamic_graph(r.static_graph, r.targets.imputed_volumes, r.scenario,
                                                          r.dynamic_inputs));
        std::vector<const domain::DynamicGraphSample*> dyn{&dynamic[0], &dynamic[1]};
        auto dyn_in = model::encode_dynamic(net.norm, dyn);
        for (Tensor* t : {&dyn_in.node_steps, &dyn_in.step_edges, &dyn_in.edge_static, &dyn_in.edge_series,
                          &inflow_in.nodes, &inflow_in.edges})
            squash(*t);

        auto inflow = [&](Tape& t) {
            return probe(t, net.inflow.forward(t, net.topology(), 2, t.constant(inflow_in.nodes),
                                               t.constant(inflow_in.edges)),
                         seed);
        };
        CHECK(gradient_check(net.inflow.parameters(), inflow, seed) <= 1e-4);

        auto tt = [&](Tape& t) {
            return net.travel_time.forward(t, net.topology(), 2, t.constant(dyn_in.node_steps),
                                           t.constant(dyn_in.step_edges), t.constant(dyn_in.edge_static),
                                           t.constant(dyn_in.edge_series));
        };
        auto travel = [&](Tape& t) {
            const auto out = tt(t);
            return ad::add(probe(t, out.eastbound, seed), probe(t, out.westbound, seed + 1));
        };
        CHECK(gradient_check(net.travel_time.parameters(), travel, seed) <= 1e-4);

        Rng r(seed);
        const Tensor pooled = random_tensor({2 * k, model::hidden_width}, r);
        for (model::MoeHead* head : {&net.queue, &net.waiting}) {
            auto loss = [&](Tape& t) { return probe(t, head->forward(t, t.constant(pooled)), seed + 2); };
            CHECK(gradient_check(head->parameters(), loss, seed) <= 1e-4);
        }

        // Travel-time backbone feeding both heads through the pooled hidden state.
        auto composite = [&](Tape& t) {
            const auto out = tt(t);
            const Value hidden = model::pool_hidden(out.hidden, 2, w, k);
            return ad::add(ad::add(probe(t, net.queue.forward(t, hidden), seed + 3),
                                   probe(t, net.waiting.forward(t, hidden), seed + 4)),
                           probe(t, out.eastbound, seed + 5));
        };
        auto params = net.travel_time.parameters();
        for (auto* head : {&net.queue, &net.waiting})
            for (auto* prm : head->parameters())
                params.push_back(prm);
        CHECK(gradient_check(params, composite, seed) <= 1e-4);
    }
}

TEST_CASE("acceptance: dense-mask oracle on every directed graph up to five nodes")
{
    Rng rng(8);
    graph::GatLayer layer("g", 2, 3, 2, 2, rng);
    for (std::size_t n = 1; n <= 5; ++n) {
        CAPTURE(n);
        double worst_node = 0.0, worst_attention = 0.0, worst_row = 0.0;
        std::size_t graphs = 0;
        testing::for_each_directed_topology(n, [&](const graph::GraphTopology& topo) {
            const auto c = testing::compare_with_oracle(layer, topo, rng);
            worst_node = std::max(worst_node, c.max_node_diff);
            worst_attention = std::max(worst_attention, c.max_attention_diff);
            worst_row = std::max(worst_row, c.max_row_sum_error);
            ++graphs;
        });
        CHECK(graphs == (std::size_t{1} << (n * (n - 1))));
        CHECK(worst_node <= 1e-9);
        CHECK(worst_attention <= 1e-9);
        CHECK(worst_row <= 1e-9);
    }
}

TEST_CASE("acceptance: conservation and free-flow bound over 100 sampled scenarios")
{
    const oracle::SamplingRanges ranges;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        CAPTURE(seed);
        const auto s = oracle::sample_scenario(1000 + seed, ranges);
        const auto sim = oracle::simulate_scenario(s, {});
        const auto report = oracle::verify_conservation(sim.events, sim.vehicles, sim.horizon_s);
        CHECK(report.ok);
        CHECK(report.total.entered == report.total.exited + report.total.in_network);
        const double bound = oracle::free_flow_travel_time(s);
        for (std::size_t j = 0; j < s.intervals; ++j) {
            CHECK(sim.targets.travel_time_eb[j] >= bound - 1e-9);
            CHECK(sim.targets.travel_time_wb[j] >= bound - 1e-9);
        }
    }
}

TEST_CASE("acceptance: more demand never lowers an approach's detector count")
{
    oracle::SamplingRanges ranges;
    ranges.intersections = 4;
    ranges.intervals = 3;
    constexpr std::size_t p = domain::phase_count;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto base = oracle::sample_scenario(2000 + seed, ranges);
        for (const auto& [node, approach] : domain::external_approaches(ranges.intersections)) {
            CAPTURE(seed);
            CAPTURE(node);
            const auto through = static_cast<std::size_t>(domain::phase_of(approach, domain::Turn::through));
            const auto left = static_cast<std::size_t>(domain::phase_of(approach, domain::Turn::left));
            auto counted = [&, n = node](const domain::Scenario& s) {
                const auto sim = oracle::simulate_scenario(s, {});
                double total = 0.0;
                for (std::size_t ph : {through, left})
                    for (std::size_t j = 0; j < s.intervals; ++j)
                        total += sim.observations.detector_counts[(n * p + ph) * s.intervals + j];
                return total;
            };
            auto s = base;
            double previous = counted(s);
            for (int step = 0; step < 3; ++step) {
                for (auto& d : s.demand)
                    if (d.intersection == node && d.approach == approach)
                        for (double& rate : d.veh_per_hour)
                            rate += 150.0;
                const double now = counted(s);
                CHECK(now >= previous);
                previous = now;
            }
        }
    }
}

TEST_CASE("acceptance: identical series give exactly zero on every metric")
{
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> s(2 + rng.below(40));
        for (auto& v : s)
            v = rng.uniform(0.1, 500.0);
        CHECK(eval::mape(s, s) == 0.0);
        CHECK(eval::nrmse(s, s) == 0.0);
        CHECK(eval::hellinger(s, s) == 0.0);
        CHECK(eval::emd(s, s) == 0.0);
        CHECK(eval::mae(s, s) == 0.0);
        CHECK(eval::mse(s, s) == 0.0);
        CHECK(eval::rmse(s, s) == 0.0);
    }
}
