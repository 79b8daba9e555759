#include "corridor_twin/domain/io.hpp"

#include "corridor_twin/errors.hpp"

#include <json.hpp>

#include <fstream>

namespace ctwin::domain {

using nlohmann::json;

namespace {

json tensor_json(const Tensor& t) { return {{"shape", t.shape()}, {"data", t.values()}}; }

Tensor tensor_from(const json& j)
{
    auto shape = j.at("shape").get<ad::Shape>();
    auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != ad::element_count(shape))
        throw ContractError("array of shape " + ad::shape_string(shape) + " carries " + std::to_string(data.size()) +
                            " values");
    return Tensor(std::move(shape), std::move(data));
}

json scenario_json(const Scenario& s)
{
    json signals = json::array();
    for (const auto& p : s.signals)
        signals.push_back({{"cycle_length_s", p.cycle_length_s},
                           {"offset_s", p.offset_s},
                           {"max_green_fraction", p.max_green_fraction}});
    json turning = json::array();
    for (const auto& node : s.turning) {
        json row = json::array();
        for (const auto& t : node)
            row.push_back({t.left, t.through, t.right});
        turning.push_back(row);
    }
    json demand = json::array();
    for (const auto& d : s.demand)
        demand.push_back({{"intersection", d.intersection},
                          {"approach", approach_name(d.approach)},
                          {"veh_per_hour", d.veh_per_hour}});
    return {
        {"seed", s.seed},
        {"intervals", s.intervals},
        {"interval_s", s.interval_s},
        {"arrivals", s.arrivals == ArrivalProcess::poisson ? "poisson" : "uniform"},
        {"geometry",
         {{"intersections", s.geometry.intersections},
          {"link_length_m", s.geometry.link_length_m},
          {"lanes_per_movement", s.geometry.lanes_per_movement},
          {"detector_setback_m", s.geometry.detector_setback_m}}},
        {"signals", signals},
        {"behavior",
         {{"free_flow_speed_mps", s.behavior.free_flow_speed_mps},
          {"saturation_headway_s", s.behavior.saturation_headway_s},
          {"startup_lost_time_s", s.behavior.startup_lost_time_s},
          {"speed_factor", s.behavior.speed_factor}}},
        {"turning", turning},
        {"demand", demand},
    };
}

Approach approach_from(const std::string& name)
{
    for (Approach a : {Approach::eb, Approach::wb, Approach::nb, Approach::sb})
        if (approach_name(a) == name)
            return a;
    throw ContractError("unknown approach '" + name + "'");
}

Scenario scenario_from(const json& j)
{
    Scenario s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.intervals = j.at("intervals").get<std::size_t>();
    s.interval_s = j.at("interval_s").get<double>();
    const auto arrivals = j.at("arrivals").get<std::string>();
    if (arrivals != "poisson" && arrivals != "uniform")
        throw ContractError("unknown arrival process '" + arrivals + "'");
    s.arrivals = arrivals == "poisson" ? ArrivalProcess::poisson : ArrivalProcess::uniform;
    const auto& g = j.at("geometry");
    s.geometry.intersections = g.at("intersections").get<std::size_t>();
    s.geometry.link_length_m = g.at("link_length_m").get<std::vector<double>>();
    s.geometry.lanes_per_movement = g.at("lanes_per_movement").get<std::size_t>();
    s.geometry.detector_setback_m = g.at("detector_setback_m").get<double>();
    for (const auto& p : j.at("signals"))
        s.signals.push_back({p.at("cycle_length_s").get<double>(), p.at("offset_s").get<double>(),
                             p.at("max_green_fraction").get<std::array<double, stage_count>>()});
    const auto& b = j.at("behavior");
    s.behavior = {b.at("free_flow_speed_mps").get<double>(), b.at("saturation_headway_s").get<double>(),
                  b.at("startup_lost_time_s").get<double>(), b.at("speed_factor").get<double>()};
    for (const auto& node : j.at("turning")) {
        ApproachTurns turns;
        if (node.size() != 4)
            throw ContractError("turning ratios need 4 approaches per intersection");
        for (std::size_t a = 0; a < 4; ++a) {
            const auto t = node[a].get<std::array<double, 3>>();
            turns[a] = {t[0], t[1], t[2]};
        }
        s.turning.push_back(turns);
    }
    for (const auto& d : j.at("demand"))
        s.demand.push_back({d.at("intersection").get<std::size_t>(), approach_from(d.at("approach").get<std::string>()),
                            d.at("veh_per_hour").get<std::vector<double>>()});
    s.validate();
    return s;
}

json record_json(const DatasetRecord& r)
{
    json edges = json::array();
    for (const auto& e : r.static_graph.topology.edges())
        edges.push_back({e.source, e.target, e.direction == graph::Direction::eastbound ? "EB" : "WB"});
    return {
        {"scenario", scenario_json(r.scenario)},
        {"static_graph",
         {{"nodes", r.static_graph.topology.num_nodes()},
          {"edges", edges},
          {"node_features", tensor_json(r.static_graph.node_features)},
          {"mask", tensor_json(r.static_graph.mask)},
          {"edge_features", tensor_json(r.static_graph.edge_features)}}},
        {"dynamic_inputs",
         {{"detector_counts", tensor_json(r.dynamic_inputs.detector_counts)},
          {"link_density", tensor_json(r.dynamic_inputs.link_density)}}},
        {"targets",
         {{"imputed_volumes", tensor_json(r.targets.imputed_volumes)},
          {"travel_time_eb", tensor_json(r.targets.travel_time_eb)},
          {"travel_time_wb", tensor_json(r.targets.travel_time_wb)},
          {"queue_length", tensor_json(r.targets.queue_length)},
          {"waiting_time", tensor_json(r.targets.waiting_time)},
          {"completed_trips_eb", r.targets.completed_trips_eb},
          {"completed_trips_wb", r.targets.completed_trips_wb}}},
    };
}

DatasetRecord record_from(const json& j)
{
    DatasetRecord r;
    r.scenario = scenario_from(j.at("scenario"));
    const auto& g = j.at("static_graph");
    std::vector<graph::Edge> edges;
    for (const auto& e : g.at("edges")) {
        const auto dir = e.at(2).get<std::string>();
        if (dir != "EB" && dir != "WB")
            throw ContractError("unknown edge direction '" + dir + "'");
        edges.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(),
                         dir == "EB" ? graph::Direction::eastbound : graph::Direction::westbound});
    }
    r.static_graph = {graph::GraphTopology(g.at("nodes").get<std::size_t>(), std::move(edges)),
                      tensor_from(g.at("node_features")), tensor_from(g.at("mask")),
                      tensor_from(g.at("edge_features"))};
    const auto& d = j.at("dynamic_inputs");
    r.dynamic_inputs = {tensor_from(d.at("detector_counts")), tensor_from(d.at("link_density"))};
    const auto& t = j.at("targets");
    r.targets.imputed_volumes = tensor_from(t.at("imputed_volumes"));
    r.targets.travel_time_eb = tensor_from(t.at("travel_time_eb"));
    r.targets.travel_time_wb = tensor_from(t.at("travel_time_wb"));
    r.targets.queue_length = tensor_from(t.at("queue_length"));
    r.targets.waiting_time = tensor_from(t.at("waiting_time"));
    r.targets.completed_trips_eb = t.at("completed_trips_eb").get<double>();
    r.targets.completed_trips_wb = t.at("completed_trips_wb").get<double>();

    const std::size_t k = r.scenario.k(), w = r.scenario.intervals, e = r.static_graph.topology.num_edges();
    const auto expect = [](const Tensor& x, const ad::Shape& shape, const char* what) {
        if (x.shape() != shape)
            throw ContractError(std::string("record field ") + what + " has shape " + ad::shape_string(x.shape()) +
                                ", expected " + ad::shape_string(shape));
    };
    expect(r.static_graph.node_features, {k, phase_count}, "node_features");
    expect(r.static_graph.mask, {k, phase_count}, "mask");
    expect(r.static_graph.edge_features, {e, edge_feature_count}, "edge_features");
    expect(r.dynamic_inputs.detector_counts, {k, phase_count, w}, "detector_counts");
    expect(r.dynamic_inputs.link_density, {e, w}, "link_density");
    expect(r.targets.imputed_volumes, {k, phase_count}, "imputed_volumes");
    expect(r.targets.travel_time_eb, {w}, "travel_time_eb");
    expect(r.targets.travel_time_wb, {w}, "travel_time_wb");
    expect(r.targets.queue_length, {k, phase_count, w}, "queue_length");
    expect(r.targets.waiting_time, {k, phase_count, w}, "waiting_time");
    return r;
}

json parse_json(std::string_view text)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError(std::string("malformed JSON: ") + e.what());
    }
}

template <typename T, typename F>
T convert(F&& f)
{
    try {
        return f();
    } catch (const json::exception& e) {
        throw ContractError(std::string("unexpected JSON content: ") + e.what());
    }
}

}  // namespace

std::string serialize_record(const DatasetRecord& record) { return record_json(record).dump(); }

DatasetRecord parse_record(std::string_view line)
{
    const json j = parse_json(line);
    return convert<DatasetRecord>([&] { return record_from(j); });
}

std::string serialize_scenario(const Scenario& scenario) { return scenario_json(scenario).dump(); }

Scenario parse_scenario(std::string_view text)
{
    const json j = parse_json(text);
    return convert<Scenario>([&] { return scenario_from(j); });
}

void write_dataset(std::span<const DatasetRecord> records, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open dataset for writing: " + path.string());
    for (const auto& r : records)
        out << serialize_record(r) << '\n';
    out.flush();
    if (!out)
        throw IoError("failed writing dataset: " + path.string());
}

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open dataset: " + path.string());
    std::vector<DatasetRecord> out;
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.empty())
            continue;
        try {
            out.push_back(parse_record(line));
        } catch (const IoError& e) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const ContractError& e) {
            throw ContractError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace ctwin::domain
