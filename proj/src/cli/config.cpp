#include "corridor_twin/cli/app.hpp"

#include "corridor_twin/errors.hpp"
#include "corridor_twin/util/parallel.hpp"

#include <cstdlib>
#include <fstream>
#include <iterator>

namespace ctwin::cli {

using nlohmann::json;

namespace {

json range(const oracle::Range& r) { return json::array({r.lo, r.hi}); }

bool same_kind(const json& a, const json& b)
{
    if (a.is_number() && b.is_number()) {
        // An integer field must stay a non-negative integer.
        if (a.is_number_unsigned())
            return b.is_number_unsigned();
        if (a.is_number_integer())
            return b.is_number_integer();
        return true;
    }
    return a.type() == b.type() || (a.is_null() && b.is_string()) || (a.is_string() && b.is_null());
}

void merge(json& base, const json& patch, const std::string& path)
{
    if (base.is_object()) {
        if (!patch.is_object())
            throw UsageError("config field '" + path + "' must be an object");
        for (const auto& [key, value] : patch.items()) {
            const auto child = path.empty() ? key : path + "." + key;
            if (!base.contains(key))
                throw UsageError("unknown config field '" + child + "'");
            merge(base[key], value, child);
        }
        return;
    }
    if (base.is_array() && patch.is_array()) {
        if (base.size() != patch.size())
            throw UsageError("config field '" + path + "' needs " + std::to_string(base.size()) + " entries, got " +
                             std::to_string(patch.size()));
        for (std::size_t i = 0; i < base.size(); ++i)
            if (!same_kind(base[i], patch[i]))
                throw UsageError("config field '" + path + "' entry " + std::to_string(i) + " has the wrong type");
        base = patch;
        return;
    }
    if (!same_kind(base, patch))
        throw UsageError("config field '" + path + "' expects " + std::string(base.type_name()) + ", got " +
                         std::string(patch.type_name()) + " (" + patch.dump() + ")");
    base = patch;
}

oracle::Range read_range(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

json default_config()
{
    const oracle::SamplingRanges r;
    const oracle::SimConfig sim;
    const model::TrainConfig train;
    const eval::ReportOptions report;
    return {
        {"parallelism", 0},
        {"generate",
         {{"n", 2048u},
          {"seed", 0u},
          {"event_log_dir", ""},
          {"ranges",
           {{"intersections", r.intersections},
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
            {"arrivals", "poisson"}}},
          {"sim", {{"time_step_s", sim.time_step_s}, {"warmup_s", sim.warmup_s}}}}},
        {"train", json::parse(train.to_json())},
        {"eval", {{"chart_samples", report.chart_samples}, {"subset", "all"}}},
        {"bench", {{"n", 1000u}, {"seed", 0u}, {"compare_serial", false}}},
    };
}

json effective_config(const std::optional<std::filesystem::path>& file,
                      std::span<const std::pair<std::string, std::string>> overrides)
{
    json config = default_config();
    if (file) {
        std::ifstream in(*file, std::ios::binary);
        if (!in)
            throw UsageError("cannot read config file " + file->string());
        const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        json patch;
        try {
            patch = json::parse(text);
        } catch (const json::parse_error& e) {
            throw UsageError("config file " + file->string() + " is not valid JSON: " + e.what());
        }
        merge(config, patch, "");
    }
    for (const auto& [path, raw] : overrides) {
        json value;
        try {
            value = json::parse(raw);
        } catch (const json::parse_error&) {
            value = raw;
        }
        json patch = value;
        std::string rest = path;
        std::vector<std::string> parts;
        for (std::size_t dot; (dot = rest.find('.')) != std::string::npos; rest = rest.substr(dot + 1))
            parts.push_back(rest.substr(0, dot));
        parts.push_back(rest);
        for (auto it = parts.rbegin(); it != parts.rend(); ++it)
            patch = json{{*it, patch}};
        merge(config, patch, "");
    }
    return config;
}

oracle::GenerationConfig generation_config(const json& config)
{
    const auto& g = config.at("generate");
    const auto& r = g.at("ranges");
    oracle::GenerationConfig c;
    try {
        c.ranges.intersections = r.at("intersections").get<std::size_t>();
        c.ranges.intervals = r.at("intervals").get<std::size_t>();
        c.ranges.interval_s = r.at("interval_s").get<double>();
        c.ranges.detector_setback_m = r.at("detector_setback_m").get<double>();
        c.ranges.cycle_s = read_range(r.at("cycle_s"));
        c.ranges.major_through_green = read_range(r.at("major_through_green"));
        c.ranges.major_demand = read_range(r.at("major_demand"));
        c.ranges.minor_demand = read_range(r.at("minor_demand"));
        c.ranges.demand_ramp = r.at("demand_ramp").get<double>();
        c.ranges.link_length_m = read_range(r.at("link_length_m"));
        c.ranges.lanes = read_range(r.at("lanes"));
        c.ranges.free_flow_speed_mps = read_range(r.at("free_flow_speed_mps"));
        c.ranges.saturation_headway_s = read_range(r.at("saturation_headway_s"));
        c.ranges.startup_lost_time_s = read_range(r.at("startup_lost_time_s"));
        c.ranges.speed_factor = read_range(r.at("speed_factor"));
        c.ranges.major_turn = read_range(r.at("major_turn"));
        c.ranges.minor_turn = read_range(r.at("minor_turn"));
        c.sim.time_step_s = g.at("sim").at("time_step_s").get<double>();
        c.sim.warmup_s = g.at("sim").at("warmup_s").get<double>();
    } catch (const json::exception& e) {
        throw UsageError(std::string("generate config: ") + e.what());
    }
    const auto arrivals = r.at("arrivals").get<std::string>();
    if (arrivals == "poisson")
        c.ranges.arrivals = domain::ArrivalProcess::poisson;
    else if (arrivals == "uniform")
        c.ranges.arrivals = domain::ArrivalProcess::uniform;
    else
        throw UsageError("config field 'generate.ranges.arrivals' must be \"poisson\" or \"uniform\", got \"" +
                         arrivals + "\"");
    const auto log_dir = g.at("event_log_dir").get<std::string>();
    if (!log_dir.empty())
        c.event_log_dir = log_dir;
    try {
        c.ranges.validate();
    } catch (const ContractError& e) {
        throw UsageError(std::string("generate.ranges: ") + e.what());
    }
    return c;
}

model::TrainConfig train_config(const json& config)
{
    try {
        return model::TrainConfig::from_json(config.at("train").dump());
    } catch (const ContractError& e) {
        throw UsageError(e.what());
    }
}

int resolve_parallelism(int requested)
{
    if (requested > 0)
        return requested;
    if (const char* env = std::getenv("CORRIDOR_TWIN_THREADS"); env && *env) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (*end != '\0' || v < 1)
            throw UsageError(std::string("CORRIDOR_TWIN_THREADS must be a positive integer, got '") + env + "'");
        return static_cast<int>(v);
    }
    return max_threads();
}

}  // namespace ctwin::cli
