#include "corridor_twin/cli/app.hpp"

#include "corridor_twin/domain/io.hpp"
#include "corridor_twin/errors.hpp"
#include "corridor_twin/model/checkpoint.hpp"
#include "corridor_twin/util/parallel.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstring>
#include <fstream>
#include <iterator>

namespace ctwin::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config_file;
    int parallelism = 0;
    std::string out;
    std::string data;
    std::string model;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> n;
};

void require_file(const std::string& path, const char* flag)
{
    if (path.empty())
        throw UsageError(std::string(flag) + " is required");
    if (!fs::is_regular_file(path))
        throw UsageError(std::string(flag) + ": no such file '" + path + "'");
}

void require_out(const std::string& path)
{
    if (path.empty())
        throw UsageError("--out is required");
}

std::vector<std::pair<std::string, std::string>> dotted_overrides(const std::vector<std::string>& extras)
{
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const auto& tok = extras[i];
        if (tok.rfind("--", 0) != 0 || tok.find('.') == std::string::npos)
            throw UsageError("unknown argument '" + tok + "'");
        const auto eq = tok.find('=');
        if (eq != std::string::npos) {
            out.emplace_back(tok.substr(2, eq - 2), tok.substr(eq + 1));
        } else {
            if (i + 1 >= extras.size())
                throw UsageError("override " + tok + " needs a value");
            out.emplace_back(tok.substr(2), extras[++i]);
        }
    }
    return out;
}

void write_file(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec)
            throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out)
        throw IoError("failed writing " + path.string());
}

fs::path with_suffix(const fs::path& p, const std::string& suffix)
{
    auto out = p;
    out += suffix;
    return out;
}

json file_entry(const fs::path& p) { return {{"path", p.generic_string()}, {"digest", oracle::file_digest(p)}}; }

/// Effective config, inputs and outputs: enough to rerun the command exactly.
void write_run_manifest(const fs::path& path, const std::string& command, const json& config, const json& inputs,
                        const json& outputs)
{
    const json m = {{"command", command}, {"config", config}, {"inputs", inputs}, {"outputs", outputs}};
    write_file(path, m.dump(2) + "\n");
}

Execution apply_threads(int threads)
{
    set_threads(threads);
    return threads == 1 ? Execution::serial : Execution::parallel;
}

json tensor_json(const ad::Tensor& t) { return {{"shape", t.shape()}, {"data", t.values()}}; }

std::string prediction_digest(std::span<const std::optional<model::Prediction>> results)
{
    std::string bytes;
    auto add = [&](const ad::Tensor& t) {
        const auto& v = t.values();
        bytes.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
    };
    for (const auto& r : results) {
        if (!r) {
            bytes += "<failed>";
            continue;
        }
        add(r->imputed_volumes);
        add(r->travel_time_eb);
        add(r->travel_time_wb);
        add(r->queue_length);
        add(r->waiting_time);
    }
    return oracle::fnv1a_hex(bytes);
}

std::vector<model::PredictionInput> read_inference_inputs(const fs::path& path, const oracle::SimConfig& sim,
                                                          Execution execution)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);)
        if (!line.empty())
            lines.push_back(line);
    std::vector<model::PredictionInput> inputs(lines.size());
    std::vector<std::string> errors(lines.size());
    auto load = [&](std::size_t i) {
        try {
            const auto j = json::parse(lines[i]);
            if (j.contains("static_graph")) {
                inputs[i] = model::PredictionInput::from(domain::parse_record(lines[i]));
            } else {
                const auto scenario = domain::parse_scenario(lines[i]);
                inputs[i] = model::PredictionInput::from(oracle::make_record(scenario, sim));
            }
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    };
    if (execution == Execution::parallel) {
        const auto n = static_cast<std::ptrdiff_t>(lines.size());
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < n; ++i)
            load(static_cast<std::size_t>(i));
    } else {
        for (std::size_t i = 0; i < lines.size(); ++i)
            load(i);
    }
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty())
            throw ContractError(path.string() + " line " + std::to_string(i + 1) + ": " + errors[i]);
    return inputs;
}

// ---- subcommands ------------------------------------------------------------

int cmd_generate(const Common& c, json config, std::ostream& out)
{
    require_out(c.out);
    if (c.seed)
        config["generate"]["seed"] = *c.seed;
    if (c.n)
        config["generate"]["n"] = *c.n;
    const auto gen = generation_config(config);
    const auto threads = resolve_parallelism(c.parallelism ? c.parallelism : config["parallelism"].get<int>());
    const auto execution = apply_threads(threads);
    const auto n = config["generate"]["n"].get<std::size_t>();
    const auto seed = config["generate"]["seed"].get<std::uint64_t>();
    const auto manifest = oracle::generate_dataset(n, seed, gen, c.out, execution);
    write_run_manifest(with_suffix(c.out, ".run.json"), "generate", config, json::object(),
                       {{"dataset", file_entry(c.out)}, {"manifest", file_entry(oracle::manifest_path(c.out))}});
    out << "wrote " << n << " scenarios to " << c.out << " (digest " << manifest.dataset_digest << ")\n";
    return exit_ok;
}

int cmd_train(const Common& c, json config, std::ostream& out)
{
    require_file(c.data, "--data");
    require_out(c.out);
    if (c.seed)
        config["train"]["seed"] = *c.seed;
    const auto train = train_config(config);
    const auto records = domain::read_dataset(c.data);
    if (records.empty())
        throw UsageError("--data: dataset " + c.data + " is empty");
    const auto data_digest = oracle::file_digest(c.data);

    model::TrainHooks hooks;
    hooks.after_stage = [&](std::size_t stage, model::TgdtModel&) { out << "stage " << stage << " done\n"; };
    auto result = model::train_sequential(records, train, hooks);

    const json meta = {{"train", json::parse(train.to_json())},
                       {"dataset_digest", data_digest},
                       {"dataset_size", records.size()},
                       {"split_sizes", {result.split.train.size(), result.split.validation.size(), result.split.test.size()}}};
    model::save_checkpoint(result.model, c.out, meta.dump());
    const auto loss_path = with_suffix(c.out, ".loss.csv");
    model::write_loss_curve_csv(result.curve, loss_path);
    write_run_manifest(with_suffix(c.out, ".run.json"), "train", config, {{"data", file_entry(c.data)}},
                       {{"checkpoint", file_entry(c.out)}, {"loss_curve", file_entry(loss_path)}});
    out << "wrote checkpoint " << c.out << " and loss curve " << loss_path.string() << "\n";
    return exit_ok;
}

// Records of the chosen split plus their positions in the file.
std::pair<std::vector<domain::DatasetRecord>, std::vector<std::size_t>> select_subset(
    std::vector<domain::DatasetRecord> records, const std::string& subset, const json& meta,
    const std::string& data_digest)
{
    if (subset == "all")
        return {std::move(records), {}};
    if (subset != "train" && subset != "validation" && subset != "test")
        throw UsageError("config field 'eval.subset' must be all, train, validation or test; got '" + subset + "'");
    if (!meta.contains("dataset_digest") || meta["dataset_digest"] != data_digest)
        throw UsageError("eval.subset=" + subset + " needs the dataset the checkpoint was trained on");
    const auto train = model::TrainConfig::from_json(meta.at("train").dump());
    const auto split = model::split_dataset(records.size(), train);
    const auto& pick = subset == "train" ? split.train : subset == "validation" ? split.validation : split.test;
    std::vector<domain::DatasetRecord> out;
    for (auto i : pick)
        out.push_back(std::move(records[i]));
    return {std::move(out), pick};
}

int cmd_eval(const Common& c, json config, std::ostream& out)
{
    require_file(c.data, "--data");
    require_file(c.model, "--model");
    require_out(c.out);
    const auto threads = resolve_parallelism(c.parallelism ? c.parallelism : config["parallelism"].get<int>());
    eval::ReportOptions options;
    options.execution = apply_threads(threads);
    options.chart_samples = config["eval"]["chart_samples"].get<std::size_t>();
    auto ck = model::load_checkpoint(c.model);
    const auto data_digest = oracle::file_digest(c.data);
    auto [records, positions] = select_subset(domain::read_dataset(c.data), config["eval"]["subset"].get<std::string>(),
                                              json::parse(ck.meta_json), data_digest);
    options.source_index = std::move(positions);
    const auto result = eval::evaluate_and_report(ck.model, records, c.out, options);
    const fs::path dir(c.out);
    write_run_manifest(dir / "run.json", "eval", config, {{"data", file_entry(c.data)}, {"model", file_entry(c.model)}},
                       {{"report", file_entry(dir / "report.csv")}, {"metrics", file_entry(dir / "metrics.jsonl")}});
    out << "evaluated " << result.scenarios.size() << " scenarios into " << c.out;
    if (!result.failures.empty())
        out << " (" << result.failures.size() << " failed; see metrics.jsonl)";
    out << "\n";
    return result.failures.empty() ? exit_ok : exit_runtime;
}

int cmd_infer(const Common& c, json config, std::ostream& out)
{
    require_file(c.data, "--data");
    require_file(c.model, "--model");
    require_out(c.out);
    const auto threads = resolve_parallelism(c.parallelism ? c.parallelism : config["parallelism"].get<int>());
    const auto execution = apply_threads(threads);
    auto ck = model::load_checkpoint(c.model);
    const auto inputs = read_inference_inputs(c.data, generation_config(config).sim, execution);
    const auto batch = model::predict_batch(ck.model, inputs, execution);
    std::string lines;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        json j = {{"index", i}};
        if (const auto& p = batch.results[i]) {
            j["imputed_volumes"] = tensor_json(p->imputed_volumes);
            j["travel_time_eb"] = tensor_json(p->travel_time_eb);
            j["travel_time_wb"] = tensor_json(p->travel_time_wb);
            j["queue_length"] = tensor_json(p->queue_length);
            j["waiting_time"] = tensor_json(p->waiting_time);
        } else {
            for (const auto& [index, message] : batch.failures)
                if (index == i)
                    j["error"] = message;
        }
        lines += j.dump() + '\n';
    }
    write_file(c.out, lines);
    write_run_manifest(with_suffix(c.out, ".run.json"), "infer", config,
                       {{"data", file_entry(c.data)}, {"model", file_entry(c.model)}},
                       {{"predictions", file_entry(c.out)}});
    out << "wrote " << inputs.size() - batch.failures.size() << " predictions to " << c.out << "\n";
    return batch.failures.empty() ? exit_ok : exit_runtime;
}

int cmd_bench(const Common& c, json config, std::ostream& out)
{
    if (c.seed)
        config["bench"]["seed"] = *c.seed;
    if (c.n)
        config["bench"]["n"] = *c.n;
    const auto threads = resolve_parallelism(c.parallelism ? c.parallelism : config["parallelism"].get<int>());
    const auto n = config["bench"]["n"].get<std::size_t>();
    const auto seed = config["bench"]["seed"].get<std::uint64_t>();
    auto gen = generation_config(config);

    std::optional<model::Checkpoint> ck;
    if (!c.model.empty()) {
        require_file(c.model, "--model");
        ck = model::load_checkpoint(c.model);
        gen.ranges.intersections = ck->model.config().intersections;
        gen.ranges.intervals = ck->model.config().intervals;
    }
    model::ModelConfig mc;
    mc.intersections = gen.ranges.intersections;
    mc.intervals = gen.ranges.intervals;
    model::TgdtModel fallback(mc);
    model::TgdtModel& net = ck ? ck->model : fallback;

    using clock = std::chrono::steady_clock;
    const auto execution = apply_threads(threads);
    const auto t0 = clock::now();
    const auto records = oracle::generate_records(n, seed, gen, execution);
    std::vector<model::PredictionInput> inputs;
    inputs.reserve(n);
    for (const auto& r : records)
        inputs.push_back(model::PredictionInput::from(r));
    const auto t1 = clock::now();
    const auto batch = model::predict_batch(net, inputs, execution);
    const auto t2 = clock::now();
    const double generation_s = std::chrono::duration<double>(t1 - t0).count();
    const double wall_s = std::chrono::duration<double>(t2 - t1).count();

    json summary = {{"n", n},
                    {"parallelism", threads},
                    {"wall_time_s", wall_s},
                    {"scenarios_per_s", wall_s > 0 ? static_cast<double>(n) / wall_s : 0.0},
                    {"generation_time_s", generation_s},
                    {"failures", batch.failures.size()},
                    {"prediction_digest", prediction_digest(batch.results)}};
    if (config["bench"]["compare_serial"].get<bool>()) {
        apply_threads(1);
        const auto s0 = clock::now();
        const auto serial = model::predict_batch(net, inputs, Execution::serial);
        const double serial_s = std::chrono::duration<double>(clock::now() - s0).count();
        summary["serial_wall_time_s"] = serial_s;
        summary["speedup"] = wall_s > 0 ? serial_s / wall_s : 0.0;
        summary["identical_to_serial"] = prediction_digest(serial.results) == summary["prediction_digest"];
    }
    out << summary.dump(2) << "\n";
    if (!c.out.empty())
        write_file(c.out, summary.dump(2) + "\n");
    return batch.failures.empty() ? exit_ok : exit_runtime;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Corridor traffic digital twin: oracle data, staged training, evaluation and inference"};
    app.require_subcommand(1);
    Common c;
    struct Sub {
        CLI::App* app;
        int (*handler)(const Common&, json, std::ostream&);
    };
    std::vector<Sub> subs;
    auto add = [&](const char* name, const char* help, bool data, bool model, bool seed_n,
                   int (*handler)(const Common&, json, std::ostream&)) {
        auto* s = app.add_subcommand(name, help);
        s->allow_extras();
        s->add_option("--config", c.config_file, "JSON config file");
        s->add_option("--parallelism", c.parallelism, "worker threads (0: CORRIDOR_TWIN_THREADS or all cores)")
            ->check(CLI::NonNegativeNumber);
        s->add_option("--out", c.out, "output path");
        if (data)
            s->add_option("--data", c.data, "dataset or scenario JSON-lines file");
        if (model)
            s->add_option("--model", c.model, "checkpoint file");
        if (seed_n) {
            s->add_option("--seed", c.seed, "random seed");
            s->add_option("--n", c.n, "number of scenarios");
        }
        subs.push_back({s, handler});
    };
    add("generate", "simulate scenarios into a dataset and manifest", false, false, true, cmd_generate);
    add("train", "train the four modules stage by stage", true, false, false, cmd_train);
    app.get_subcommand("train")->add_option("--seed", c.seed, "training seed");
    add("eval", "evaluate a checkpoint and write the subgroup report", true, true, false, cmd_eval);
    add("infer", "predict every scenario of a file", true, true, false, cmd_infer);
    add("bench", "time batch prediction on generated scenarios", false, true, true, cmd_bench);

    std::vector<std::string> argv(args.rbegin(), args.rend());  // CLI11 consumes a reversed vector
    try {
        app.parse(argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    }

    for (const auto& s : subs) {
        if (!s.app->parsed())
            continue;
        try {
            std::optional<fs::path> file;
            if (!c.config_file.empty()) {
                require_file(c.config_file, "--config");
                file = c.config_file;
            }
            const auto config = effective_config(file, dotted_overrides(s.app->remaining()));
            return s.handler(c, config, out);
        } catch (const UsageError& e) {
            err << "usage error: " << e.what() << "\n";
            return exit_usage;
        } catch (const std::exception& e) {
            err << "error: " << e.what() << "\n";
            return exit_runtime;
        }
    }
    err << "error: no subcommand\n";
    return exit_usage;
}

}  // namespace ctwin::cli
