#pragma once

#include "corridor_twin/eval/report.hpp"
#include "corridor_twin/model/train.hpp"
#include "corridor_twin/oracle/dataset.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ctwin::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 1;
inline constexpr int exit_runtime = 2;

/// Raised for bad flags, unknown or ill-typed config fields and missing input files.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The full configuration tree with every leaf at its default. Sections:
/// parallelism, generate{n, seed, ranges, sim}, train{...}, eval{chart_samples, subset}, bench{n, seed, compare_serial}.
nlohmann::json default_config();

/// Defaults, then the file's values, then dotted overrides ("train.seed", "3").
/// Values are parsed as JSON when possible, otherwise taken as strings.
/// Unknown paths and type mismatches raise UsageError naming the field.
nlohmann::json effective_config(const std::optional<std::filesystem::path>& file,
                                std::span<const std::pair<std::string, std::string>> overrides);

oracle::GenerationConfig generation_config(const nlohmann::json& config);
model::TrainConfig train_config(const nlohmann::json& config);

/// Thread count: the explicit value if positive, else CORRIDOR_TWIN_THREADS, else the OpenMP default.
int resolve_parallelism(int requested);

/// Runs one subcommand (args exclude the program name). Returns the process exit code.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace ctwin::cli
