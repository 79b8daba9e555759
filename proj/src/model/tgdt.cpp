#include "corridor_twin/model/tgdt.hpp"

#include "corridor_twin/domain/graphs.hpp"
#include "corridor_twin/errors.hpp"

#include <cmath>
#include <exception>

namespace ctwin::model {

using domain::edge_feature_count;
using domain::node_feature_rows;
using domain::phase_count;

namespace {

constexpr std::size_t p = phase_count;

void expect_shape(const Tensor& t, const ad::Shape& shape, const std::string& what)
{
    if (t.shape() != shape)
        throw ContractError(what + " has shape " + ad::shape_string(t.shape()) + ", model expects " +
                            ad::shape_string(shape));
}

std::vector<Parameter*> join(std::initializer_list<std::vector<Parameter*>> parts)
{
    std::vector<Parameter*> out;
    for (const auto& part : parts)
        out.insert(out.end(), part.begin(), part.end());
    return out;
}

const ModelConfig& checked(const ModelConfig& c)
{
    c.validate();
    return c;
}

}  // namespace

void ModelConfig::validate() const
{
    if (intersections < 2)
        throw ContractError("model config: need at least 2 intersections, got " + std::to_string(intersections));
    if (intervals < 2)
        throw ContractError("model config: need at least 2 intervals, got " + std::to_string(intervals));
    if (heads == 0 || hidden_width % heads != 0)
        throw ContractError("model config: heads must divide " + std::to_string(hidden_width) + ", got " +
                            std::to_string(heads));
}

double log_travel_time(double seconds)
{
    if (!(seconds > 0.0))
        throw ContractError("travel time must be positive, got " + std::to_string(seconds));
    return std::log(seconds);
}

Standardizer Standardizer::identity()
{
    Standardizer s;
    s.inflow_mean = Tensor({p});
    s.inflow_std = Tensor({p}, 1.0);
    s.inflow_target_scale = Tensor({p}, 1.0);
    s.node_mean = Tensor({node_feature_rows});
    s.node_std = Tensor({node_feature_rows}, 1.0);
    s.edge_mean = Tensor({edge_feature_count});
    s.edge_std = Tensor({edge_feature_count}, 1.0);
    s.density_stats = Tensor({2}, std::vector<double>{0.0, 1.0});
    s.travel_time_stats = Tensor({2}, std::vector<double>{0.0, 1.0});
    s.queue_scale = Tensor({p}, 1.0);
    s.waiting_scale = Tensor({p}, 1.0);
    return s;
}

std::vector<std::pair<std::string, Tensor*>> Standardizer::arrays()
{
    return {{"norm.inflow_mean", &inflow_mean},
            {"norm.inflow_std", &inflow_std},
            {"norm.inflow_target_scale", &inflow_target_scale},
            {"norm.node_mean", &node_mean},
            {"norm.node_std", &node_std},
            {"norm.edge_mean", &edge_mean},
            {"norm.edge_std", &edge_std},
            {"norm.density_stats", &density_stats},
            {"norm.travel_time_stats", &travel_time_stats},
            {"norm.queue_scale", &queue_scale},
            {"norm.waiting_scale", &waiting_scale}};
}

InflowBatch encode_inflow(const Standardizer& norm, std::span<const domain::StaticGraphSample* const> samples)
{
    if (samples.empty())
        throw ContractError("encode_inflow: empty batch");
    const std::size_t k = samples[0]->node_features.dim(0);
    const std::size_t edges = samples[0]->topology.num_edges();
    InflowBatch out;
    out.samples = samples.size();
    out.nodes = Tensor({samples.size() * k, 2 * p});
    out.edges = Tensor({samples.size() * edges, edge_feature_count});
    out.mask = Tensor({samples.size() * k, p});
    for (std::size_t b = 0; b < samples.size(); ++b) {
        const auto& s = *samples[b];
        expect_shape(s.node_features, {k, p}, "static node features");
        expect_shape(s.mask, {k, p}, "static mask");
        expect_shape(s.edge_features, {edges, edge_feature_count}, "static edge features");
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t ph = 0; ph < p; ++ph) {
                const bool masked = s.mask[i * p + ph] != 0.0;
                const std::size_t row = b * k + i;
                out.nodes[row * 2 * p + ph] =
                    masked ? 0.0 : (s.node_features[i * p + ph] - norm.inflow_mean[ph]) / norm.inflow_std[ph];
                out.nodes[row * 2 * p + p + ph] = masked ? 1.0 : 0.0;
                out.mask[row * p + ph] = masked ? 1.0 : 0.0;
            }
        for (std::size_t e = 0; e < edges; ++e)
            for (std::size_t c = 0; c < edge_feature_count; ++c)
                out.edges[(b * edges + e) * edge_feature_count + c] =
                    (s.edge_features[e * edge_feature_count + c] - norm.edge_mean[c]) / norm.edge_std[c];
    }
    return out;
}

DynamicBatch encode_dynamic(const Standardizer& norm, std::span<const domain::DynamicGraphSample* const> samples)
{
    if (samples.empty())
        throw ContractError("encode_dynamic: empty batch");
    const std::size_t k = samples[0]->node_tensor.dim(0);
    const std::size_t w = samples[0]->node_tensor.dim(2);
    const std::size_t edges = samples[0]->topology.num_edges();
    const std::size_t n = samples.size();
    constexpr std::size_t rows = node_feature_rows, cols = edge_feature_count;
    const double dmean = norm.density_stats[0], dstd = norm.density_stats[1];

    DynamicBatch out;
    out.samples = n;
    out.node_steps = Tensor({n * w * k, rows});
    out.step_edges = Tensor({n * w * edges, cols + 1});
    out.edge_static = Tensor({n * edges, cols});
    out.edge_series = Tensor({n * edges, w});
    for (std::size_t b = 0; b < n; ++b) {
        const auto& s = *samples[b];
        expect_shape(s.node_tensor, {k, rows, w}, "dynamic node tensor");
        expect_shape(s.edge_static, {edges, cols}, "dynamic static edge features");
        expect_shape(s.edge_series, {edges, w}, "dynamic edge series");
        for (std::size_t t = 0; t < w; ++t)
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t r = 0; r < rows; ++r)
                    out.node_steps[((b * w + t) * k + i) * rows + r] =
                        (s.node_tensor[(i * rows + r) * w + t] - norm.node_mean[r]) / norm.node_std[r];
        for (std::size_t e = 0; e < edges; ++e) {
            for (std::size_t c = 0; c < cols; ++c) {
                const double z = (s.edge_static[e * cols + c] - norm.edge_mean[c]) / norm.edge_std[c];
                out.edge_static[(b * edges + e) * cols + c] = z;
                for (std::size_t t = 0; t < w; ++t)
                    out.step_edges[((b * w + t) * edges + e) * (cols + 1) + c] = z;
            }
            for (std::size_t t = 0; t < w; ++t) {
                const double z = (s.edge_series[e * w + t] - dmean) / dstd;
                out.edge_series[(b * edges + e) * w + t] = z;
                out.step_edges[((b * w + t) * edges + e) * (cols + 1) + cols] = z;
            }
        }
    }
    return out;
}

InflowModule::InflowModule(const ModelConfig& config, Rng& rng)
    : position("inflow.position",
               nn::glorot_uniform({config.intersections, inflow_position_width}, config.intersections,
                                  inflow_position_width, rng)),
      input("inflow.input", 2 * p, inflow_position_width, nn::Activation::none, rng),
      attention("inflow.attention", inflow_position_width, hidden_width, rng),
      gat_multi("inflow.gat_multi", hidden_width, edge_feature_count, config.heads, hidden_width / config.heads, rng),
      gat_single("inflow.gat_single", hidden_width, edge_feature_count, 1, hidden_width, rng),
      head("inflow.head", hidden_width, p, nn::Activation::none, rng)
{
}

Value InflowModule::forward(Tape& tape, const graph::GraphTopology& topology, std::size_t samples, Value nodes,
                            Value edges)
{
    const std::size_t k = topology.num_nodes();
    if (position.value.dim(0) != k)
        throw ContractError("inflow module was built for " + std::to_string(position.value.dim(0)) +
                            " intersections, got " + std::to_string(k));
    const graph::GraphBatch batch(topology, samples);
    std::vector<std::size_t> slot(samples * k);
    for (std::size_t r = 0; r < slot.size(); ++r)
        slot[r] = r % k;
    Value h = ad::add(input.forward(tape, nodes), ad::gather_rows(tape.param(position), slot));
    h = ad::reshape(h, {samples, k, inflow_position_width});
    h = ad::reshape(attention.forward(tape, h), {samples * k, hidden_width});
    h = gat_multi.forward(tape, batch, h, edges);
    h = gat_single.forward(tape, batch, h, edges);
    return head.forward(tape, h);
}

std::vector<Parameter*> InflowModule::parameters()
{
    return join({{&position}, input.parameters(), attention.parameters(), gat_multi.parameters(),
                 gat_single.parameters(), head.parameters()});
}

TravelTimeModule::TravelTimeModule(const ModelConfig& config, Rng& rng)
    : gat_multi("travel_time.gat_multi", node_feature_rows, edge_feature_count + 1, config.heads,
                hidden_width / config.heads, rng),
      gat_single("travel_time.gat_single", hidden_width, edge_feature_count + 1, 1, hidden_width, rng),
      edges("travel_time.edge_mlp", edge_feature_count, config.intervals, rng),
      eastbound_head("travel_time.eastbound_head", 3 * hidden_width * config.intervals, config.intervals,
                     nn::Activation::none, rng),
      westbound_head("travel_time.westbound_head", 3 * hidden_width * config.intervals, config.intervals,
                     nn::Activation::none, rng),
      intervals_(config.intervals)
{
}

TravelTimeModule::Output TravelTimeModule::forward(Tape& tape, const graph::GraphTopology& topology,
                                                   std::size_t samples, Value node_steps, Value step_edges,
                                                   Value edge_static, Value edge_series)
{
    const std::size_t w = intervals_;
    const graph::GraphBatch steps(topology, samples * w);
    const graph::GraphBatch whole(topology, samples);

    Value hidden = gat_multi.forward(tape, steps, node_steps, step_edges);
    hidden = gat_single.forward(tape, steps, hidden, step_edges);

    const auto pools = graph::directional_pool(whole, edges.forward(tape, edge_static, edge_series));
    std::vector<std::size_t> owner(samples * w);
    for (std::size_t r = 0; r < owner.size(); ++r)
        owner[r] = r / w;
    const graph::DirectionalPool per_step{ad::gather_rows(pools.eastbound, owner),
                                          ad::gather_rows(pools.westbound, owner)};
    Value fused = graph::fuse_embeddings(steps, hidden, per_step);
    fused = ad::reshape(fused, {samples, 3 * hidden_width * w});
    return {eastbound_head.forward(tape, fused), westbound_head.forward(tape, fused), hidden};
}

std::vector<Parameter*> TravelTimeModule::parameters()
{
    return join({gat_multi.parameters(), gat_single.parameters(), edges.parameters(), eastbound_head.parameters(),
                 westbound_head.parameters()});
}

Value pool_hidden(Value hidden, std::size_t samples, std::size_t intervals, std::size_t intersections)
{
    Value grouped = ad::reshape(hidden, {samples, intervals, intersections * hidden_width});
    return ad::reshape(ad::reduce_mean(grouped, 1), {samples * intersections, hidden_width});
}

MoeHead::MoeHead(std::string name, const ModelConfig& config, Rng& rng) : intervals_(config.intervals)
{
    const std::size_t w = config.intervals;
    const std::size_t half = p / 2;
    for (const char* dir : {"east_west", "north_south"}) {
        const std::string base = name + "." + dir;
        nn::TemporalDeconvLayer upsample(base + ".upsample", hidden_width, 32, w, rng, 1);
        nn::TemporalConvLayer narrow(base + ".narrow", 32, 16, 1, rng);
        nn::TemporalConvLayer encode(base + ".encode", 16, 16, 3, rng, 1, 1);
        nn::TemporalPoolLayer pool(2, 1);
        nn::DenseLayer out(base + ".dense", 16 * pool.output_length(w), half * w, nn::Activation::none, rng);
        branches.push_back({std::move(upsample), std::move(narrow), std::move(encode), pool, std::move(out)});
    }
}

Value MoeHead::forward(Tape& tape, Value pooled)
{
    const auto& shape = pooled.shape();
    if (shape.size() != 2 || shape[1] != hidden_width)
        throw ContractError("MoE head: expected [N x " + std::to_string(hidden_width) + "] input, got " +
                            ad::shape_string(shape));
    const std::size_t n = shape[0], w = intervals_;
    const Value seq = ad::reshape(pooled, {n, hidden_width, 1});
    std::vector<Value> parts;
    for (auto& b : branches) {
        Value x = ad::relu(b.upsample.forward(tape, seq));  // length 1 -> w
        x = ad::relu(b.narrow.forward(tape, x));
        x = ad::relu(b.encode.forward(tape, x));
        x = b.pool.forward(tape, x);
        x = ad::reshape(x, {n, x.shape()[1] * x.shape()[2]});
        parts.push_back(b.out.forward(tape, x));
    }
    return ad::reshape(ad::relu(ad::concat(parts, 1)), {n, p, w});
}

std::vector<Parameter*> MoeHead::parameters()
{
    std::vector<Parameter*> out;
    for (auto& b : branches)
        out = join({out, b.upsample.parameters(), b.narrow.parameters(), b.encode.parameters(), b.out.parameters()});
    return out;
}

TgdtModel::TgdtModel(const ModelConfig& config) : TgdtModel(checked(config), Rng(config.init_seed)) {}

TgdtModel::TgdtModel(const ModelConfig& config, Rng rng)
    : norm(Standardizer::identity()),
      inflow(config, rng),
      travel_time(config, rng),
      queue("queue", config, rng),
      waiting("waiting", config, rng),
      config_(config),
      topology_(graph::GraphTopology::corridor(config.intersections))
{
}

std::vector<Parameter*> TgdtModel::parameters()
{
    return join({inflow.parameters(), travel_time.parameters(), queue.parameters(), waiting.parameters()});
}

namespace {

void check_topology(const TgdtModel& model, const graph::GraphTopology& topology)
{
    if (!(topology == model.topology()))
        throw ContractError("sample graph has " + std::to_string(topology.num_nodes()) + " nodes and " +
                            std::to_string(topology.num_edges()) + " edges; model expects the " +
                            std::to_string(model.config().intersections) + "-intersection corridor");
}

}  // namespace

Tensor forward_inflow(TgdtModel& model, const domain::StaticGraphSample& sample)
{
    check_topology(model, sample.topology);
    const std::size_t k = model.config().intersections;
    const domain::StaticGraphSample* one[] = {&sample};
    const auto enc = encode_inflow(model.norm, one);
    Tape tape;
    const Value out =
        model.inflow.forward(tape, model.topology(), 1, tape.constant(enc.nodes), tape.constant(enc.edges));
    Tensor imputed({k, p});
    for (std::size_t i = 0; i < k * p; ++i)
        imputed[i] = sample.mask[i] != 0.0 ? out.val()[i] * model.norm.inflow_target_scale[i % p]
                                           : sample.node_features[i];
    return imputed;
}

TravelTimePrediction forward_travel_time(TgdtModel& model, const domain::DynamicGraphSample& sample)
{
    check_topology(model, sample.topology);
    const std::size_t k = model.config().intersections, w = model.config().intervals;
    const domain::DynamicGraphSample* one[] = {&sample};
    const auto enc = encode_dynamic(model.norm, one);
    if (sample.node_tensor.dim(2) != w)
        throw ContractError("dynamic sample has " + std::to_string(sample.node_tensor.dim(2)) +
                            " intervals, model expects " + std::to_string(w));
    Tape tape;
    const auto out = model.travel_time.forward(tape, model.topology(), 1, tape.constant(enc.node_steps),
                                               tape.constant(enc.step_edges), tape.constant(enc.edge_static),
                                               tape.constant(enc.edge_series));
    const double mean = model.norm.travel_time_stats[0], stdev = model.norm.travel_time_stats[1];
    TravelTimePrediction pred{Tensor({w}), Tensor({w}), Tensor({k, hidden_width, w})};
    for (std::size_t t = 0; t < w; ++t) {
        pred.eastbound[t] = std::exp(out.eastbound.val()[t] * stdev + mean);
        pred.westbound[t] = std::exp(out.westbound.val()[t] * stdev + mean);
    }
    const auto& h = out.hidden.val();
    for (std::size_t t = 0; t < w; ++t)
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t c = 0; c < hidden_width; ++c)
                pred.hidden[(i * hidden_width + c) * w + t] = h[(t * k + i) * hidden_width + c];
    return pred;
}

Tensor forward_moe_head(TgdtModel& model, MoeHead& head, const Tensor& hidden)
{
    const std::size_t k = model.config().intersections, w = model.config().intervals;
    expect_shape(hidden, {k, hidden_width, w}, "hidden representation");
    Tensor pooled({k, hidden_width});
    for (std::size_t i = 0; i < k * hidden_width; ++i) {
        double acc = 0.0;
        for (std::size_t t = 0; t < w; ++t)
            acc += hidden[i * w + t];
        pooled[i] = acc / static_cast<double>(w);
    }
    Tape tape;
    Tensor out = head.forward(tape, tape.constant(std::move(pooled))).val();
    const Tensor& scale = &head == &model.queue ? model.norm.queue_scale : model.norm.waiting_scale;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] *= scale[(i / w) % p];
    return out;
}

PredictionInput PredictionInput::from(const domain::DatasetRecord& record)
{
    return {record.scenario, record.static_graph, record.dynamic_inputs};
}

Prediction predict(TgdtModel& model, const PredictionInput& input)
{
    Tensor imputed = forward_inflow(model, input.static_graph);
    const auto dynamic = domain::build_dynamic_graph(input.static_graph, imputed, input.scenario, input.dynamic_inputs);
    auto tt = forward_travel_time(model, dynamic);
    Tensor queue = forward_moe_head(model, model.queue, tt.hidden);
    Tensor waiting = forward_moe_head(model, model.waiting, tt.hidden);
    return {std::move(imputed), std::move(tt.eastbound), std::move(tt.westbound), std::move(queue),
            std::move(waiting)};
}

BatchPrediction predict_batch(TgdtModel& model, std::span<const PredictionInput> inputs, Execution execution)
{
    BatchPrediction out;
    out.results.resize(inputs.size());
    std::vector<std::string> errors(inputs.size());
    auto run = [&](std::size_t i) {
        try {
            out.results[i] = predict(model, inputs[i]);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    };
    if (execution == Execution::parallel) {
        const auto n = static_cast<std::ptrdiff_t>(inputs.size());
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < n; ++i)
            run(static_cast<std::size_t>(i));
    } else {
        for (std::size_t i = 0; i < inputs.size(); ++i)
            run(i);
    }
    for (std::size_t i = 0; i < inputs.size(); ++i)
        if (!out.results[i])
            out.failures.emplace_back(i, errors[i]);
    return out;
}

}  // namespace ctwin::model
