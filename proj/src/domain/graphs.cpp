#include "corridor_twin/domain/graphs.hpp"

#include "corridor_twin/errors.hpp"

#include <cmath>

namespace ctwin::domain {

namespace {

constexpr std::size_t p = phase_count;

void expect_shape(const Tensor& t, const ad::Shape& shape, const char* what)
{
    if (t.shape() != shape)
        throw ContractError(std::string(what) + " has shape " + ad::shape_string(t.shape()) + ", expected " +
                            ad::shape_string(shape));
}

double mean_rate(const ApproachDemand& d)
{
    double s = 0.0;
    for (double r : d.veh_per_hour)
        s += r;
    return s / static_cast<double>(d.veh_per_hour.size());
}

}  // namespace

Tensor arterial_mask(std::size_t k)
{
    Tensor mask({k, p});
    for (std::size_t i = 1; i + 1 < k; ++i)
        for (Phase ph : {Phase::major_through_eb, Phase::major_through_wb, Phase::major_left_eb, Phase::major_left_wb})
            mask[i * p + static_cast<std::size_t>(ph)] = 1.0;
    return mask;
}

StaticGraphSample build_static_graph(const Scenario& scenario, const Observations& obs)
{
    const std::size_t k = scenario.k(), w = scenario.intervals;
    auto topology = graph::GraphTopology::corridor(k);
    const std::size_t edges = topology.num_edges();
    expect_shape(obs.detector_counts, {k, p, w}, "detector counts");
    expect_shape(obs.link_density, {edges, w}, "link density");

    Tensor mask = arterial_mask(k);
    Tensor nodes({k, p});
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t ph = 0; ph < p; ++ph) {
            double total = 0.0;
            for (std::size_t t = 0; t < w; ++t) {
                const double c = obs.detector_counts[(i * p + ph) * w + t];
                if (!std::isfinite(c) || c < 0.0)
                    throw ContractError("missing detector record at intersection " + std::to_string(i) + " phase " +
                                        std::string(phase_name(static_cast<Phase>(ph))) + " interval " +
                                        std::to_string(t));
                total += c;
            }
            nodes[i * p + ph] = mask[i * p + ph] != 0.0 ? masked_sentinel : total;
        }

    const auto& g = scenario.geometry;
    const auto& b = scenario.behavior;
    const double east_demand = mean_rate(scenario.demand[0]);
    const double west_demand = mean_rate(scenario.demand[1]);

    Tensor r({edges, edge_feature_count});
    for (std::size_t e = 0; e < edges; ++e) {
        const auto& edge = topology.edges()[e];
        const bool east = edge.direction == graph::Direction::eastbound;
        const std::size_t link = std::min(edge.source, edge.target);
        const auto& up = scenario.signals[edge.source];
        const auto& down = scenario.signals[edge.target];
        const auto& turns = scenario.turning[edge.target][static_cast<std::size_t>(east ? Approach::eb : Approach::wb)];
        double density = 0.0;
        for (std::size_t t = 0; t < w; ++t)
            density += obs.link_density[e * w + t];
        const std::array<double, edge_feature_count> row{
            g.link_length_m[link],
            static_cast<double>(g.lanes_per_movement),
            b.free_flow_speed_mps,
            b.saturation_headway_s,
            turns.left,
            turns.through,
            turns.right,
            up.cycle_length_s,
            up.offset_s,
            down.cycle_length_s,
            down.offset_s,
            down.max_green_fraction[0],
            b.startup_lost_time_s,
            b.speed_factor,
            east ? east_demand : west_demand,
            density / static_cast<double>(w),
            east ? 0.0 : 1.0,
            g.detector_setback_m,
            scenario.interval_s,
        };
        std::copy(row.begin(), row.end(), r.raw() + e * edge_feature_count);
    }
    return {std::move(topology), std::move(nodes), std::move(mask), std::move(r)};
}

DynamicInputs mask_observations(const StaticGraphSample& sample, const Observations& obs)
{
    Tensor counts = obs.detector_counts;
    const std::size_t k = sample.mask.dim(0);
    const std::size_t w = counts.size() / (k * p);
    for (std::size_t i = 0; i < k * p; ++i)
        if (sample.mask[i] != 0.0)
            for (std::size_t t = 0; t < w; ++t)
                counts[i * w + t] = masked_sentinel;
    return {std::move(counts), obs.link_density};
}

DynamicGraphSample build_dynamic_graph(const StaticGraphSample& sample, const Tensor& imputed,
                                       const Scenario& scenario, const DynamicInputs& inputs)
{
    const std::size_t k = scenario.k(), w = scenario.intervals;
    const std::size_t edges = sample.topology.num_edges();
    expect_shape(imputed, {k, p}, "imputed volumes");
    expect_shape(inputs.detector_counts, {k, p, w}, "dynamic detector counts");
    expect_shape(inputs.link_density, {edges, w}, "dynamic link density");
    for (std::size_t i = 0; i < imputed.size(); ++i)
        if (imputed[i] == masked_sentinel || !std::isfinite(imputed[i]))
            throw ContractError("imputed volumes still hold a sentinel at intersection " + std::to_string(i / p) +
                                " phase " + std::string(phase_name(static_cast<Phase>(i % p))));

    Tensor x({k, node_feature_rows, w});
    for (std::size_t i = 0; i < k; ++i) {
        // Temporal profile of the node from the phases it actually observed.
        std::vector<double> profile(w, 0.0);
        double total = 0.0;
        for (std::size_t ph = 0; ph < p; ++ph) {
            if (sample.mask[i * p + ph] != 0.0)
                continue;
            for (std::size_t t = 0; t < w; ++t) {
                profile[t] += inputs.detector_counts[(i * p + ph) * w + t];
                total += inputs.detector_counts[(i * p + ph) * w + t];
            }
        }
        for (std::size_t t = 0; t < w; ++t)
            profile[t] = total > 0.0 ? profile[t] / total : 1.0 / static_cast<double>(w);

        for (std::size_t ph = 0; ph < p; ++ph)
            for (std::size_t t = 0; t < w; ++t)
                x[(i * node_feature_rows + ph) * w + t] = imputed[i * p + ph] * profile[t];
        const auto& plan = scenario.signals[i];
        const std::array<double, 6> constants{plan.cycle_length_s, plan.offset_s, plan.max_green_fraction[0],
                                              plan.max_green_fraction[1], plan.max_green_fraction[2],
                                              plan.max_green_fraction[3]};
        for (std::size_t c = 0; c < constants.size(); ++c)
            for (std::size_t t = 0; t < w; ++t)
                x[(i * node_feature_rows + p + c) * w + t] = constants[c];
    }
    return {sample.topology, std::move(x), sample.edge_features, inputs.link_density};
}

}  // namespace ctwin::domain
