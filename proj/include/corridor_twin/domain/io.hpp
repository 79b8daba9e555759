#pragma once

#include "corridor_twin/domain/types.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ctwin::domain {

/// One JSON object on a single line: {scenario, static_graph, dynamic_inputs, targets}.
/// Arrays carry an explicit row-major shape.
std::string serialize_record(const DatasetRecord& record);
/// Throws IoError on malformed JSON and ContractError when the content breaks an invariant.
DatasetRecord parse_record(std::string_view line);

std::string serialize_scenario(const Scenario& scenario);
Scenario parse_scenario(std::string_view json);

void write_dataset(std::span<const DatasetRecord> records, const std::filesystem::path& path);
std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path);

}  // namespace ctwin::domain
