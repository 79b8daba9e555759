#pragma once

#include "corridor_twin/model/tgdt.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace ctwin::model {

inline constexpr std::uint32_t checkpoint_version = 1;

/// Byte layout (little endian), see README:
///   "CTWCKPT\0" | u32 version | u64 meta_len | meta JSON
///   | u64 array_count | per array: u32 name_len, name, u32 rank, u64 dims[rank], f64 data[]
///   | u64 FNV-1a of every preceding byte
struct Checkpoint {
    TgdtModel model;
    /// Free-form metadata; "model" holds the ModelConfig and is always present.
    std::string meta_json;
};

/// meta_json must be a JSON object (or empty); the model config is merged in under "model".
void save_checkpoint(TgdtModel& model, const std::filesystem::path& path, const std::string& meta_json = "{}");

/// Builds the model from the stored config, then loads every array into it.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Loads arrays into an existing model; every stored name and shape must match.
/// Returns the metadata JSON.
std::string load_parameters(const std::filesystem::path& path, TgdtModel& model);

}  // namespace ctwin::model
