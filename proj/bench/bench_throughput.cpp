#include "corridor_twin/model/tgdt.hpp"
#include "corridor_twin/oracle/dataset.hpp"
#include "corridor_twin/util/parallel.hpp"

#include <benchmark/benchmark.h>

using namespace ctwin;

namespace {

const std::vector<model::PredictionInput>& inputs()
{
    static const auto cached = [] {
        const auto records = oracle::generate_records(64, 1, {}, Execution::parallel);
        std::vector<model::PredictionInput> out;
        for (const auto& r : records)
            out.push_back(model::PredictionInput::from(r));
        return out;
    }();
    return cached;
}

void predict(benchmark::State& state, Execution execution)
{
    model::TgdtModel net(model::ModelConfig{});
    const auto& in = inputs();
    for (auto _ : state)
        benchmark::DoNotOptimize(model::predict_batch(net, in, execution));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * in.size()));
    state.counters["threads"] = max_threads();
}

void simulate(benchmark::State& state, Execution execution)
{
    std::uint64_t seed = 0;
    for (auto _ : state)
        benchmark::DoNotOptimize(oracle::generate_records(16, seed++, {}, execution));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 16));
    state.counters["threads"] = max_threads();
}

}  // namespace

BENCHMARK_CAPTURE(predict, serial, Execution::serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(predict, parallel, Execution::parallel)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(simulate, serial, Execution::serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(simulate, parallel, Execution::parallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
