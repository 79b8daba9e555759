#pragma once

#include "corridor_twin/model/tgdt.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ctwin::model {

/// Stages: 0 inflow, 1 travel time, 2 queue head, 3 waiting head.
struct TrainConfig {
    std::array<std::size_t, 4> stage_epochs{150, 200, 150, 150};
    std::array<double, 4> learning_rates{1e-3, 1e-3, 5e-4, 5e-4};
    std::uint64_t seed = 0;
    std::array<double, 3> split{0.70, 0.15, 0.15};
    bool standardize = true;
    std::size_t batch_size = 32;
    /// Train both MoE heads together under one optimizer (stage 2 epochs and rate).
    bool share_moe_optimizer = false;

    void validate() const;
    std::string to_json() const;
    /// Missing keys keep their defaults; unknown keys are rejected.
    static TrainConfig from_json(std::string_view text);
};

struct DataSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

/// Seeded shuffle then cut by the split fractions; throws when a part is empty.
DataSplit split_dataset(std::size_t n, const TrainConfig& config);

struct LossPoint {
    std::size_t stage;
    std::size_t epoch;
    double train_loss;
    double validation_loss;
    double best_validation;
};

struct TrainHooks {
    std::function<void(const LossPoint&)> on_epoch;
    /// Called after each stage has restored its best parameters.
    std::function<void(std::size_t stage, TgdtModel&)> after_stage;
};

struct TrainResult {
    TgdtModel model;
    std::vector<LossPoint> curve;
    DataSplit split;
};

/// Sequential training: each stage fits one module while the earlier ones stay frozen,
/// keeping the parameters with the best validation loss.
TrainResult train_sequential(std::span<const domain::DatasetRecord> dataset, const TrainConfig& config,
                             const TrainHooks& hooks = {});

/// Writes stage,epoch,train_loss,validation_loss,best_validation.
void write_loss_curve_csv(std::span<const LossPoint> curve, const std::filesystem::path& path);

}  // namespace ctwin::model
