#include "corridor_twin/oracle/dataset.hpp"

#include "corridor_twin/domain/graphs.hpp"
#include "corridor_twin/domain/io.hpp"
#include "corridor_twin/errors.hpp"
#include "corridor_twin/util/rng.hpp"

#include <json.hpp>

#include <cstdio>
#include <exception>
#include <fstream>
#include <iterator>

namespace ctwin::oracle {

using nlohmann::json;

domain::DatasetRecord make_record(const Scenario& scenario, const SimConfig& config,
                                  const std::optional<std::filesystem::path>& event_log)
{
    SimConfig run = config;
    run.record_events = event_log.has_value();
    auto sim = simulate_scenario(scenario, run);
    if (event_log)
        write_event_log_csv(sim.events, *event_log);
    auto static_graph = domain::build_static_graph(scenario, sim.observations);
    auto inputs = domain::mask_observations(static_graph, sim.observations);
    return {scenario, std::move(static_graph), std::move(inputs), std::move(sim.targets)};
}

std::vector<domain::DatasetRecord> generate_records(std::size_t n, std::uint64_t seed, const GenerationConfig& config,
                                                    Execution execution)
{
    config.ranges.validate();
    if (config.event_log_dir) {
        std::error_code ec;
        std::filesystem::create_directories(*config.event_log_dir, ec);
        if (ec)
            throw IoError("cannot create event log directory " + config.event_log_dir->string() + ": " + ec.message());
    }
    std::vector<domain::DatasetRecord> records(n);
    std::vector<std::exception_ptr> failures(n);
    auto build = [&](std::size_t i) {
        try {
            const auto scenario = sample_scenario(hash_combine(seed, i), config.ranges);
            std::optional<std::filesystem::path> log;
            if (config.event_log_dir)
                log = *config.event_log_dir / ("events_" + std::to_string(i) + ".csv");
            records[i] = make_record(scenario, config.sim, log);
        } catch (...) {
            failures[i] = std::current_exception();
        }
    };
    if (execution == Execution::parallel) {
        const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < count; ++i)
            build(static_cast<std::size_t>(i));
    } else {
        for (std::size_t i = 0; i < n; ++i)
            build(i);
    }
    for (const auto& f : failures)
        if (f)
            std::rethrow_exception(f);
    return records;
}

domain::ScenarioSummary summarize(const domain::DatasetRecord& record)
{
    return {record.scenario.cycle_length_s(), record.targets.completed_volume(),
            record.scenario.major_through_fraction()};
}

std::string fnv1a_hex(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string file_digest(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open for digest: " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a_hex(bytes);
}

std::string config_digest(const GenerationConfig& c)
{
    const auto& r = c.ranges;
    auto range = [](const Range& x) { return json::array({x.lo, x.hi}); };
    const json j = {
        {"intersections", r.intersections},
        {"intervals", r.intervals},
        {"interval_s", r.interval_s},
        {"detector_setback_m", r.detector_setback_m},
        {"cycle_s", range(r.cycle_s)},
        {"major_through_green", range(r.major_through_green)},
        {"major_demand", range(r.major_demand)},
        {"minor_demand", range(r.minor_demand)},
        {"demand_ramp", r.demand_ramp},
        {"link_length_m", range(r.link_length_m)},
        {"lanes", range(r.lanes)},
        {"free_flow_speed_mps", range(r.free_flow_speed_mps)},
        {"saturation_headway_s", range(r.saturation_headway_s)},
        {"startup_lost_time_s", range(r.startup_lost_time_s)},
        {"speed_factor", range(r.speed_factor)},
        {"major_turn", range(r.major_turn)},
        {"minor_turn", range(r.minor_turn)},
        {"arrivals", r.arrivals == domain::ArrivalProcess::poisson ? "poisson" : "uniform"},
        {"time_step_s", c.sim.time_step_s},
        {"warmup_s", c.sim.warmup_s},
    };
    return fnv1a_hex(j.dump());
}

std::filesystem::path manifest_path(const std::filesystem::path& dataset)
{
    auto p = dataset;
    p += ".manifest.json";
    return p;
}

std::string DatasetManifest::to_json() const
{
    json groups = json::object();
    for (auto d : domain::all_dimensions) {
        json levels = json::object();
        for (auto l : domain::all_levels)
            levels[std::string(domain::level_name(l))] =
                subgroup_counts[static_cast<std::size_t>(d)][static_cast<std::size_t>(l)];
        groups[std::string(domain::dimension_name(d))] = levels;
    }
    const json j = {{"seed", seed},
                    {"n", n},
                    {"config_digest", config_digest},
                    {"dataset_digest", dataset_digest},
                    {"subgroup_counts", groups}};
    return j.dump(2);
}

DatasetManifest DatasetManifest::from_json(std::string_view text)
{
    try {
        const json j = json::parse(text);
        DatasetManifest m;
        m.seed = j.at("seed").get<std::uint64_t>();
        m.n = j.at("n").get<std::size_t>();
        m.config_digest = j.at("config_digest").get<std::string>();
        m.dataset_digest = j.at("dataset_digest").get<std::string>();
        for (auto d : domain::all_dimensions)
            for (auto l : domain::all_levels)
                m.subgroup_counts[static_cast<std::size_t>(d)][static_cast<std::size_t>(l)] =
                    j.at("subgroup_counts")
                        .at(std::string(domain::dimension_name(d)))
                        .at(std::string(domain::level_name(l)))
                        .get<std::size_t>();
        return m;
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed manifest: ") + e.what());
    }
}

DatasetManifest generate_dataset(std::size_t n, std::uint64_t seed, const GenerationConfig& config,
                                 const std::filesystem::path& path, Execution execution)
{
    const auto records = generate_records(n, seed, config, execution);
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec)
            throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    domain::write_dataset(records, path);

    std::vector<domain::ScenarioSummary> summaries;
    for (const auto& r : records)
        summaries.push_back(summarize(r));
    DatasetManifest m;
    m.seed = seed;
    m.n = n;
    m.config_digest = oracle::config_digest(config);
    m.dataset_digest = file_digest(path);
    m.subgroup_counts = domain::subgroup_counts(domain::partition_subgroups(summaries));

    const auto mpath = manifest_path(path);
    std::ofstream out(mpath, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open manifest for writing: " + mpath.string());
    out << m.to_json() << '\n';
    if (!out)
        throw IoError("failed writing manifest: " + mpath.string());
    return m;
}

}  // namespace ctwin::oracle
