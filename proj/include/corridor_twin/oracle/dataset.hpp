#pragma once

#include "corridor_twin/domain/subgroups.hpp"
#include "corridor_twin/domain/types.hpp"
#include "corridor_twin/oracle/simulator.hpp"
#include "corridor_twin/util/parallel.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ctwin::oracle {

struct GenerationConfig {
    SamplingRanges ranges;
    SimConfig sim;
    /// When set, every scenario's event log is written there as events_<index>.csv.
    std::optional<std::filesystem::path> event_log_dir;
};

/// Simulates one scenario and turns its outputs into a dataset record.
domain::DatasetRecord make_record(const Scenario& scenario, const SimConfig& config,
                                  const std::optional<std::filesystem::path>& event_log = std::nullopt);

/// Scenario i uses seed hash_combine(seed, i); output order is by index whatever the execution.
std::vector<domain::DatasetRecord> generate_records(std::size_t n, std::uint64_t seed, const GenerationConfig& config,
                                                    Execution execution = Execution::parallel);

domain::ScenarioSummary summarize(const domain::DatasetRecord& record);

struct DatasetManifest {
    std::uint64_t seed = 0;
    std::size_t n = 0;
    std::string config_digest;
    std::string dataset_digest;  // FNV-1a of the dataset file bytes
    std::array<std::array<std::size_t, 3>, 3> subgroup_counts{};

    std::string to_json() const;
    static DatasetManifest from_json(std::string_view text);
};

std::string config_digest(const GenerationConfig& config);
std::string fnv1a_hex(std::string_view bytes);
std::string file_digest(const std::filesystem::path& path);

/// Manifest path for a dataset: the dataset path with ".manifest.json" appended.
std::filesystem::path manifest_path(const std::filesystem::path& dataset);

/// Writes the JSON-lines dataset and its manifest.
DatasetManifest generate_dataset(std::size_t n, std::uint64_t seed, const GenerationConfig& config,
                                 const std::filesystem::path& path, Execution execution = Execution::parallel);

}  // namespace ctwin::oracle
