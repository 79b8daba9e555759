#pragma once

#include "corridor_twin/domain/types.hpp"
#include "corridor_twin/graph/gat.hpp"
#include "corridor_twin/nn/layers.hpp"
#include "corridor_twin/util/parallel.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ctwin::model {

using ad::Parameter;
using ad::Tape;
using ad::Tensor;
using ad::Value;

inline constexpr std::size_t hidden_width = graph::EdgeMlp::embedding_width;  // 64
inline constexpr std::size_t inflow_position_width = 16;

struct ModelConfig {
    std::size_t intersections = 8;
    std::size_t intervals = 10;
    std::size_t heads = 4;
    std::uint64_t init_seed = 0;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// Affine maps between raw units and the units the networks see. Inputs are
/// z-scored; non-negative targets are only divided by a scale so that zero
/// (and the final ReLU of the MoE heads) keeps its meaning.
struct Standardizer {
    Tensor inflow_mean, inflow_std;     // [p], observed node totals
    Tensor inflow_target_scale;         // [p]
    Tensor node_mean, node_std;         // [14], rows of the dynamic node tensor
    Tensor edge_mean, edge_std;         // [19]
    Tensor density_stats;               // [2] mean, std
    Tensor travel_time_stats;           // [2] mean, std of log travel time
    Tensor queue_scale, waiting_scale;  // [p]

    static Standardizer identity();
    /// Named arrays in a fixed order, for checkpoints.
    std::vector<std::pair<std::string, Tensor*>> arrays();
};

/// Travel time is modelled in log space; throws ContractError unless seconds > 0.
double log_travel_time(double seconds);

/// Encoded inputs of B static samples.
struct InflowBatch {
    std::size_t samples = 0;
    Tensor nodes;  // [B*k x 2p]: standardized totals (0 where masked) then mask flags
    Tensor edges;  // [B*E x 19]
    Tensor mask;   // [B*k x p]
};

/// Encoded inputs of B dynamic samples. Step replica r = b*w + t.
struct DynamicBatch {
    std::size_t samples = 0;
    Tensor node_steps;   // [B*w*k x 14]
    Tensor step_edges;   // [B*w*E x 20]: static columns then that step's density
    Tensor edge_static;  // [B*E x 19]
    Tensor edge_series;  // [B*E x w]
};

InflowBatch encode_inflow(const Standardizer& norm, std::span<const domain::StaticGraphSample* const> samples);
DynamicBatch encode_dynamic(const Standardizer& norm, std::span<const domain::DynamicGraphSample* const> samples);

/// Self-attention over node vectors, GAT (4 heads), GAT (1 head), dense head to p.
class InflowModule {
public:
    InflowModule(const ModelConfig& config, Rng& rng);

    /// [B*k x p] in target-scaled units, before the replacement rule.
    Value forward(Tape& tape, const graph::GraphTopology& topology, std::size_t samples, Value nodes, Value edges);
    std::vector<Parameter*> parameters();

    Parameter position;  // [k x 16] added to the node input before attention
    nn::DenseLayer input;
    nn::SelfAttentionBlock attention;
    graph::GatLayer gat_multi;
    graph::GatLayer gat_single;
    nn::DenseLayer head;
};

/// Time-distributed GAT stack (14 -> 64) with an edge MLP, fusion and one dense head per direction.
class TravelTimeModule {
public:
    TravelTimeModule(const ModelConfig& config, Rng& rng);

    struct Output {
        Value eastbound;  // [B x w], standardized
        Value westbound;
        Value hidden;  // [B*w*k x 64], pre-fusion node embeddings in step-replica order
    };

    Output forward(Tape& tape, const graph::GraphTopology& topology, std::size_t samples, Value node_steps,
                   Value step_edges, Value edge_static, Value edge_series);
    std::vector<Parameter*> parameters();

    graph::GatLayer gat_multi;
    graph::GatLayer gat_single;
    graph::EdgeMlp edges;
    nn::DenseLayer eastbound_head;
    nn::DenseLayer westbound_head;

private:
    std::size_t intervals_;
};

/// Mean over time of the [B*w*k x 64] hidden states -> [B*k x 64].
Value pool_hidden(Value hidden, std::size_t samples, std::size_t intervals, std::size_t intersections);

/// Two direction branches (east-west phases 0-3, north-south phases 4-7), each
/// deconv 64->32 (kernel w) on the length-1 pooled embedding, pointwise conv
/// 32->16, conv 16->16 (width 3), max-pool (2, 1), dense to 4 phases x w.
/// Outputs are scaled and non-negative.
class MoeHead {
public:
    MoeHead(std::string name, const ModelConfig& config, Rng& rng);

    /// pooled: [N x 64] -> [N x p x w]
    Value forward(Tape& tape, Value pooled);
    std::vector<Parameter*> parameters();

    struct Branch {
        nn::TemporalDeconvLayer upsample;
        nn::TemporalConvLayer narrow;
        nn::TemporalConvLayer encode;
        nn::TemporalPoolLayer pool;
        nn::DenseLayer out;
    };
    std::vector<Branch> branches;

private:
    std::size_t intervals_;
};

class TgdtModel {
public:
    explicit TgdtModel(const ModelConfig& config);

    const ModelConfig& config() const noexcept { return config_; }
    const graph::GraphTopology& topology() const noexcept { return topology_; }
    /// Every parameter with a unique name, modules in stage order.
    std::vector<Parameter*> parameters();

    Standardizer norm;
    InflowModule inflow;
    TravelTimeModule travel_time;
    MoeHead queue;
    MoeHead waiting;

private:
    TgdtModel(const ModelConfig& config, Rng rng);

    ModelConfig config_;
    graph::GraphTopology topology_;
};

/// Imputed [k x p] volumes: model output at masked entries, observed totals elsewhere.
Tensor forward_inflow(TgdtModel& model, const domain::StaticGraphSample& sample);

struct TravelTimePrediction {
    Tensor eastbound;  // [w] s
    Tensor westbound;
    Tensor hidden;  // [k x 64 x w]
};
TravelTimePrediction forward_travel_time(TgdtModel& model, const domain::DynamicGraphSample& sample);

/// hidden [k x 64 x w] -> [k x p x w] in raw units (veh for queues, s for waiting).
Tensor forward_moe_head(TgdtModel& model, MoeHead& head, const Tensor& hidden);

struct PredictionInput {
    domain::Scenario scenario;
    domain::StaticGraphSample static_graph;
    domain::DynamicInputs dynamic_inputs;

    static PredictionInput from(const domain::DatasetRecord& record);
};

struct Prediction {
    Tensor imputed_volumes;
    Tensor travel_time_eb;
    Tensor travel_time_wb;
    Tensor queue_length;
    Tensor waiting_time;
};

/// The full chain for one scenario.
Prediction predict(TgdtModel& model, const PredictionInput& input);

struct BatchPrediction {
    std::vector<std::optional<Prediction>> results;  // input order
    std::vector<std::pair<std::size_t, std::string>> failures;
};

/// Parameters are only read; one tape per sample. Bit-identical for any thread count.
BatchPrediction predict_batch(TgdtModel& model, std::span<const PredictionInput> inputs,
                              Execution execution = Execution::parallel);

}  // namespace ctwin::model
