#include "corridor_twin/model/train.hpp"

#include "corridor_twin/autodiff/adam.hpp"
#include "corridor_twin/domain/graphs.hpp"
#include "corridor_twin/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

namespace ctwin::model {

using domain::DatasetRecord;
using domain::phase_count;
using nlohmann::json;

namespace {

constexpr std::size_t p = phase_count;

// ---- config ---------------------------------------------------------------

template <typename T>
void read_key(const json& j, const char* key, T& into, std::set<std::string>& seen)
{
    if (!j.contains(key))
        return;
    seen.insert(key);
    try {
        into = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ContractError(std::string("train config field '") + key + "': " + e.what());
    }
}

// ---- statistics -----------------------------------------------------------

struct Moments {
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n = 0;

    void add(double v)
    {
        sum += v;
        sum_sq += v * v;
        ++n;
    }
    double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
    double stdev() const
    {
        if (n < 2)
            return 1.0;
        const double m = mean();
        const double var = std::max(0.0, sum_sq / static_cast<double>(n) - m * m);
        return var > 1e-18 ? std::sqrt(var) : 1.0;
    }
    double rms() const
    {
        const double r = n ? std::sqrt(sum_sq / static_cast<double>(n)) : 0.0;
        return r > 1e-12 ? r : 1.0;
    }
};

void fit_static_stats(Standardizer& norm, std::span<const DatasetRecord> data, std::span<const std::size_t> train)
{
    std::vector<Moments> inflow(p), target(p), queue(p), waiting(p), edge(domain::edge_feature_count);
    Moments density, travel;
    for (std::size_t idx : train) {
        const auto& r = data[idx];
        const auto& g = r.static_graph;
        for (std::size_t i = 0; i < g.node_features.size(); ++i) {
            if (g.mask[i] == 0.0)
                inflow[i % p].add(g.node_features[i]);
            target[i % p].add(r.targets.imputed_volumes[i]);
        }
        for (std::size_t i = 0; i < g.edge_features.size(); ++i)
            edge[i % domain::edge_feature_count].add(g.edge_features[i]);
        for (double v : r.dynamic_inputs.link_density.data())
            density.add(v);
        for (const Tensor* t : {&r.targets.travel_time_eb, &r.targets.travel_time_wb})
            for (double v : t->data())
                travel.add(log_travel_time(v));
        const std::size_t w = r.scenario.intervals;
        for (std::size_t i = 0; i < r.targets.queue_length.size(); ++i) {
            queue[(i / w) % p].add(r.targets.queue_length[i]);
            waiting[(i / w) % p].add(r.targets.waiting_time[i]);
        }
    }
    for (std::size_t ph = 0; ph < p; ++ph) {
        norm.inflow_mean[ph] = inflow[ph].mean();
        norm.inflow_std[ph] = inflow[ph].stdev();
        norm.inflow_target_scale[ph] = target[ph].rms();
        norm.queue_scale[ph] = queue[ph].rms();
        norm.waiting_scale[ph] = waiting[ph].rms();
    }
    for (std::size_t c = 0; c < edge.size(); ++c) {
        norm.edge_mean[c] = edge[c].mean();
        norm.edge_std[c] = edge[c].stdev();
    }
    norm.density_stats[0] = density.mean();
    norm.density_stats[1] = density.stdev();
    norm.travel_time_stats[0] = travel.mean();
    norm.travel_time_stats[1] = travel.stdev();
}

void fit_node_stats(Standardizer& norm, std::span<const domain::DynamicGraphSample> dynamic,
                    std::span<const std::size_t> train)
{
    std::vector<Moments> rows(domain::node_feature_rows);
    for (std::size_t idx : train) {
        const auto& x = dynamic[idx].node_tensor;
        const std::size_t w = x.dim(2);
        for (std::size_t i = 0; i < x.size(); ++i)
            rows[(i / w) % domain::node_feature_rows].add(x[i]);
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
        norm.node_mean[r] = rows[r].mean();
        norm.node_std[r] = rows[r].stdev();
    }
}

// ---- generic stage loop ---------------------------------------------------

using BatchLoss = std::function<Value(Tape&, std::span<const std::size_t>)>;

std::vector<Tensor> snapshot(std::span<Parameter* const> params)
{
    std::vector<Tensor> out;
    for (auto* prm : params)
        out.push_back(prm->value);
    return out;
}

void restore(std::span<Parameter* const> params, const std::vector<Tensor>& values)
{
    for (std::size_t i = 0; i < params.size(); ++i)
        params[i]->value = values[i];
}

double evaluate(const BatchLoss& loss, std::span<const std::size_t> items, std::size_t batch)
{
    double total = 0.0;
    for (std::size_t start = 0; start < items.size(); start += batch) {
        const auto part = items.subspan(start, std::min(batch, items.size() - start));
        Tape tape;
        total += loss(tape, part).val()[0] * static_cast<double>(part.size());
    }
    return total / static_cast<double>(items.size());
}

void run_stage(std::size_t stage, std::vector<Parameter*> params, double learning_rate, std::size_t epochs,
               const BatchLoss& loss, const DataSplit& split, const TrainConfig& config, std::vector<LossPoint>& curve,
               const TrainHooks& hooks)
{
    ad::Adam adam(params, {learning_rate});
    Rng rng(hash_combine(config.seed, 0x57A6E000ull + stage));
    std::vector<std::size_t> order = split.train;
    double best = std::numeric_limits<double>::infinity();
    auto best_values = snapshot(params);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(std::span(order));
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const auto part =
                std::span<const std::size_t>(order).subspan(start, std::min(config.batch_size, order.size() - start));
            Tape tape;
            const Value l = loss(tape, part);
            tape.backward(l);
            adam.step();
            total += l.val()[0] * static_cast<double>(part.size());
        }
        const double train_loss = total / static_cast<double>(order.size());
        const double val_loss = evaluate(loss, split.validation, config.batch_size);
        if (val_loss < best) {
            best = val_loss;
            best_values = snapshot(params);
        }
        curve.push_back({stage, epoch, train_loss, val_loss, best});
        if (hooks.on_epoch)
            hooks.on_epoch(curve.back());
    }
    if (epochs > 0)
        restore(params, best_values);
}

std::vector<std::size_t> masked_rows(const Tensor& mask)
{
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] != 0.0)
            rows.push_back(i);
    return rows;
}

}  // namespace

void TrainConfig::validate() const
{
    const double total = split[0] + split[1] + split[2];
    if (std::abs(total - 1.0) > 1e-9 || split[0] <= 0.0 || split[1] <= 0.0 || split[2] <= 0.0)
        throw ContractError("train config: split fractions must be positive and sum to 1");
    for (double lr : learning_rates)
        if (!(lr > 0.0))
            throw ContractError("train config: learning rates must be positive");
    if (batch_size == 0)
        throw ContractError("train config: batch_size must be positive");
}

std::string TrainConfig::to_json() const
{
    const json j = {{"stage_epochs", stage_epochs},   {"learning_rates", learning_rates},
                    {"seed", seed},                   {"split", split},
                    {"standardize", standardize},     {"batch_size", batch_size},
                    {"share_moe_optimizer", share_moe_optimizer}};
    return j.dump(2);
}

TrainConfig TrainConfig::from_json(std::string_view text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ContractError(std::string("train config is not valid JSON: ") + e.what());
    }
    if (!j.is_object())
        throw ContractError("train config must be a JSON object");
    TrainConfig c;
    std::set<std::string> seen;
    read_key(j, "stage_epochs", c.stage_epochs, seen);
    read_key(j, "learning_rates", c.learning_rates, seen);
    read_key(j, "seed", c.seed, seen);
    read_key(j, "split", c.split, seen);
    read_key(j, "standardize", c.standardize, seen);
    read_key(j, "batch_size", c.batch_size, seen);
    read_key(j, "share_moe_optimizer", c.share_moe_optimizer, seen);
    for (const auto& [key, value] : j.items())
        if (!seen.count(key))
            throw ContractError("train config: unknown field '" + key + "'");
    c.validate();
    return c;
}

DataSplit split_dataset(std::size_t n, const TrainConfig& config)
{
    config.validate();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(hash_combine(config.seed, 0x5B117ull));
    rng.shuffle(std::span(order));
    const auto n_train = static_cast<std::size_t>(std::floor(config.split[0] * static_cast<double>(n) + 1e-9));
    const auto n_val = static_cast<std::size_t>(std::floor(config.split[1] * static_cast<double>(n) + 1e-9));
    DataSplit s;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(n_train, n)));
    s.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(s.train.size()),
                        order.begin() + static_cast<std::ptrdiff_t>(std::min(n, s.train.size() + n_val)));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(s.train.size() + s.validation.size()), order.end());
    if (s.train.empty() || s.validation.empty() || s.test.empty())
        throw ContractError("dataset of " + std::to_string(n) + " scenarios leaves an empty split (train " +
                            std::to_string(s.train.size()) + ", validation " + std::to_string(s.validation.size()) +
                            ", test " + std::to_string(s.test.size()) + ")");
    return s;
}

TrainResult train_sequential(std::span<const DatasetRecord> data, const TrainConfig& config, const TrainHooks& hooks)
{
    config.validate();
    if (data.empty())
        throw ContractError("cannot train on an empty dataset");
    ModelConfig mc;
    mc.intersections = data[0].scenario.k();
    mc.intervals = data[0].scenario.intervals;
    mc.init_seed = hash_combine(config.seed, 0x1417ull);
    for (std::size_t i = 0; i < data.size(); ++i)
        if (data[i].scenario.k() != mc.intersections || data[i].scenario.intervals != mc.intervals)
            throw ContractError("scenario " + std::to_string(i) + " has a different corridor size or interval count");

    TrainResult result{TgdtModel(mc), {}, split_dataset(data.size(), config)};
    auto& model = result.model;
    const auto& split = result.split;
    const std::size_t k = mc.intersections, w = mc.intervals;
    if (config.standardize)
        fit_static_stats(model.norm, data, split.train);

    // Stage 0: inflow imputation, loss on masked entries only.
    auto inflow_loss = [&](Tape& tape, std::span<const std::size_t> items) {
        std::vector<const domain::StaticGraphSample*> samples;
        for (auto i : items)
            samples.push_back(&data[i].static_graph);
        const auto enc = encode_inflow(model.norm, samples);
        const auto rows = masked_rows(enc.mask);
        Tensor target({rows.size(), 1});
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const std::size_t b = rows[r] / (k * p), within = rows[r] % (k * p);
            target[r] = data[items[b]].targets.imputed_volumes[within] / model.norm.inflow_target_scale[within % p];
        }
        Value out = model.inflow.forward(tape, model.topology(), items.size(), tape.constant(enc.nodes),
                                         tape.constant(enc.edges));
        out = ad::gather_rows(ad::reshape(out, {items.size() * k * p, 1}), rows);
        return ad::mse_loss(out, tape.constant(std::move(target)));
    };
    run_stage(0, model.inflow.parameters(), config.learning_rates[0], config.stage_epochs[0], inflow_loss, split,
              config, result.curve, hooks);
    if (hooks.after_stage)
        hooks.after_stage(0, model);

    // Dynamic graphs from the frozen imputation.
    std::vector<domain::DynamicGraphSample> dynamic;
    dynamic.reserve(data.size());
    for (const auto& r : data)
        dynamic.push_back(domain::build_dynamic_graph(r.static_graph, forward_inflow(model, r.static_graph),
                                                      r.scenario, r.dynamic_inputs));
    if (config.standardize)
        fit_node_stats(model.norm, dynamic, split.train);

    // Stage 1: travel time, sum of the directional losses on standardized log travel time.
    const double tt_mean = model.norm.travel_time_stats[0], tt_std = model.norm.travel_time_stats[1];
    auto tt_forward = [&](Tape& tape, std::span<const std::size_t> items) {
        std::vector<const domain::DynamicGraphSample*> samples;
        for (auto i : items)
            samples.push_back(&dynamic[i]);
        const auto enc = encode_dynamic(model.norm, samples);
        return model.travel_time.forward(tape, model.topology(), items.size(), tape.constant(enc.node_steps),
                                         tape.constant(enc.step_edges), tape.constant(enc.edge_static),
                                         tape.constant(enc.edge_series));
    };
    auto tt_loss = [&](Tape& tape, std::span<const std::size_t> items) {
        const auto out = tt_forward(tape, items);
        Tensor east({items.size(), w}), west({items.size(), w});
        for (std::size_t b = 0; b < items.size(); ++b)
            for (std::size_t t = 0; t < w; ++t) {
                east[b * w + t] = (log_travel_time(data[items[b]].targets.travel_time_eb[t]) - tt_mean) / tt_std;
                west[b * w + t] = (log_travel_time(data[items[b]].targets.travel_time_wb[t]) - tt_mean) / tt_std;
            }
        return ad::add(ad::mse_loss(out.eastbound, tape.constant(std::move(east))),
                       ad::mse_loss(out.westbound, tape.constant(std::move(west))));
    };
    run_stage(1, model.travel_time.parameters(), config.learning_rates[1], config.stage_epochs[1], tt_loss, split,
              config, result.curve, hooks);
    if (hooks.after_stage)
        hooks.after_stage(1, model);

    // Frozen H, pooled over time once for every scenario.
    std::vector<Tensor> pooled(data.size());
    for (std::size_t start = 0; start < data.size(); start += config.batch_size) {
        std::vector<std::size_t> items;
        for (std::size_t i = start; i < std::min(data.size(), start + config.batch_size); ++i)
            items.push_back(i);
        Tape tape;
        const auto out = tt_forward(tape, items);
        const Tensor& h = pool_hidden(out.hidden, items.size(), w, k).val();
        for (std::size_t b = 0; b < items.size(); ++b)
            pooled[items[b]] = Tensor({k, hidden_width}, std::vector<double>(h.raw() + b * k * hidden_width,
                                                                               h.raw() + (b + 1) * k * hidden_width));
    }

    auto head_loss = [&](MoeHead& head, const Tensor& scale, Tensor domain::TargetBundle::*field) {
        return [&, field](Tape& tape, std::span<const std::size_t> items) {
            Tensor in({items.size() * k, hidden_width});
            Tensor target({items.size() * k, p, w});
            for (std::size_t b = 0; b < items.size(); ++b) {
                std::copy(pooled[items[b]].data().begin(), pooled[items[b]].data().end(),
                          in.raw() + b * k * hidden_width);
                const Tensor& y = data[items[b]].targets.*field;
                for (std::size_t i = 0; i < k * p * w; ++i)
                    target[b * k * p * w + i] = y[i] / scale[(i / w) % p];
            }
            return ad::mse_loss(head.forward(tape, tape.constant(std::move(in))), tape.constant(std::move(target)));
        };
    };
    const BatchLoss queue_loss = head_loss(model.queue, model.norm.queue_scale, &domain::TargetBundle::queue_length);
    const BatchLoss waiting_loss =
        head_loss(model.waiting, model.norm.waiting_scale, &domain::TargetBundle::waiting_time);

    if (config.share_moe_optimizer) {
        auto both = [&](Tape& tape, std::span<const std::size_t> items) {
            return ad::add(queue_loss(tape, items), waiting_loss(tape, items));
        };
        auto params = model.queue.parameters();
        const auto more = model.waiting.parameters();
        params.insert(params.end(), more.begin(), more.end());
        run_stage(2, params, config.learning_rates[2], config.stage_epochs[2], both, split, config, result.curve,
                  hooks);
        if (hooks.after_stage) {
            hooks.after_stage(2, model);
            hooks.after_stage(3, model);
        }
    } else {
        run_stage(2, model.queue.parameters(), config.learning_rates[2], config.stage_epochs[2], queue_loss, split,
                  config, result.curve, hooks);
        if (hooks.after_stage)
            hooks.after_stage(2, model);
        run_stage(3, model.waiting.parameters(), config.learning_rates[3], config.stage_epochs[3], waiting_loss,
                  split, config, result.curve, hooks);
        if (hooks.after_stage)
            hooks.after_stage(3, model);
    }
    return result;
}

void write_loss_curve_csv(std::span<const LossPoint> curve, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open loss curve for writing: " + path.string());
    out << "stage,epoch,train_loss,validation_loss,best_validation\n";
    char buf[160];
    for (const auto& pt : curve) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g\n", pt.stage, pt.epoch, pt.train_loss,
                      pt.validation_loss, pt.best_validation);
        out << buf;
    }
    if (!out)
        throw IoError("failed writing loss curve: " + path.string());
}

}  // namespace ctwin::model
