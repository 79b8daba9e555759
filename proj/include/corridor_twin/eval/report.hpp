#pragma once

#include "corridor_twin/domain/subgroups.hpp"
#include "corridor_twin/domain/types.hpp"
#include "corridor_twin/model/tgdt.hpp"
#include "corridor_twin/util/parallel.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ctwin::eval {

enum class Moe { travel_time, waiting_time, queue_length, volume };
enum class Metric { mape, emd, hld, nrmse, mae, mse, rmse };

inline constexpr std::array<Moe, 4> all_moes{Moe::travel_time, Moe::waiting_time, Moe::queue_length, Moe::volume};
inline constexpr std::array<Metric, 7> all_metrics{Metric::mape, Metric::emd, Metric::hld, Metric::nrmse,
                                                   Metric::mae,  Metric::mse, Metric::rmse};

std::string_view moe_name(Moe m);
std::string_view metric_name(Metric m);
/// Travel and waiting time: MAPE, EMD, HLD, NRMSE. Queue length and volume: MAE, MSE, RMSE, NRMSE.
bool applies(Moe moe, Metric metric);

using MetricValues = std::array<std::optional<double>, all_metrics.size()>;

/// Metrics of one scenario plus the flattened series they came from.
/// Volume series hold the masked entries only; the other MOEs hold every entry.
struct ScenarioEvaluation {
    std::size_t index = 0;
    domain::SubgroupLabels labels{};
    std::array<MetricValues, all_moes.size()> metrics{};
    std::array<std::vector<double>, all_moes.size()> truth;
    std::array<std::vector<double>, all_moes.size()> pred;
};

/// EMD and HLD of a series-valued MOE are averaged over its component series
/// (the two directions, or the k*p lane groups), skipping undefined components.
ScenarioEvaluation evaluate_scenario(std::size_t index, const domain::DatasetRecord& record,
                                     const model::Prediction& prediction);

inline constexpr std::string_view report_csv_header =
    "dimension,level,moe,scenarios,mape,emd,hld,nrmse,mae,mse,rmse,undefined";

struct ReportRow {
    std::string dimension;  // cycle_length | volume | max_green | total
    std::string level;      // low | medium | high | all
    Moe moe = Moe::travel_time;
    std::size_t scenarios = 0;
    MetricValues values{};
    std::size_t undefined = 0;
};

struct SubgroupReport {
    std::vector<ReportRow> rows;  // 3 dimensions x 3 levels x 4 MOEs, then 4 totals

    const ReportRow& find(std::string_view dimension, std::string_view level, Moe moe) const;
    std::string to_csv() const;
    static SubgroupReport from_csv(std::string_view text);
};

/// MAPE, NRMSE, MAE, MSE and RMSE are computed on the entries pooled over the
/// group's scenarios; EMD and HLD are means of the per-scenario values.
/// `undefined` counts metric values that could not be computed (pooled ones and
/// per-scenario EMD/HLD), which are left empty.
SubgroupReport aggregate(std::span<const ScenarioEvaluation> scenarios);

struct ReportOptions {
    std::size_t chart_samples = 3;
    Execution execution = Execution::parallel;
    // Position of each evaluated record in its source file, used for metrics.jsonl
    // indices and chart names. Empty: records are the whole file.
    std::vector<std::size_t> source_index;
};

struct EvaluationOutput {
    SubgroupReport report;
    std::vector<ScenarioEvaluation> scenarios;                // successfully evaluated, dataset order
    std::vector<std::pair<std::size_t, std::string>> failures;  // prediction errors by dataset index
};

/// Pairs records with predictions (same order); a missing prediction marks a failure.
EvaluationOutput evaluate_predictions(std::span<const domain::DatasetRecord> dataset,
                                      std::span<const std::optional<model::Prediction>> predictions,
                                      Execution execution = Execution::parallel);

/// Writes report.csv, metrics.jsonl and charts/scenario_<index>_<moe>.svg under out_dir.
void write_report_files(const EvaluationOutput& output, std::span<const domain::DatasetRecord> dataset,
                        std::span<const std::optional<model::Prediction>> predictions,
                        const std::filesystem::path& out_dir, const ReportOptions& options = {});

/// Predicts every record, evaluates and writes the report files.
EvaluationOutput evaluate_and_report(model::TgdtModel& model, std::span<const domain::DatasetRecord> dataset,
                                     const std::filesystem::path& out_dir, const ReportOptions& options = {});

/// A predictor that returns the oracle targets; reproduces them with zero error.
model::Prediction prediction_from_targets(const domain::DatasetRecord& record);

struct ChartSeries {
    std::string label;
    std::vector<double> values;
    bool dashed = false;
};

/// Self-contained line chart with one polyline per series over a shared index axis.
std::string overlay_svg(std::string_view title, std::string_view x_label, std::string_view y_label,
                        std::span<const ChartSeries> series);

}  // namespace ctwin::eval
