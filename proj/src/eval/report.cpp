#include "corridor_twin/eval/report.hpp"

#include "corridor_twin/errors.hpp"
#include "corridor_twin/eval/metrics.hpp"
#include "corridor_twin/oracle/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace ctwin::eval {

using domain::DatasetRecord;
using nlohmann::json;

namespace {

constexpr std::size_t idx(Moe m) { return static_cast<std::size_t>(m); }
constexpr std::size_t idx(Metric m) { return static_cast<std::size_t>(m); }

std::optional<double> guarded(const std::function<double()>& f)
{
    try {
        return f();
    } catch (const UndefinedMetricError&) {
        return std::nullopt;
    }
}

bool any_negative(std::span<const double> v)
{
    return std::any_of(v.begin(), v.end(), [](double x) { return x < 0.0 || std::isnan(x); });
}

/// Mean of a distribution metric over consecutive components of `length` entries.
std::optional<double> component_mean(std::span<const double> truth, std::span<const double> pred, std::size_t length,
                                     double (*metric)(std::span<const double>, std::span<const double>))
{
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t start = 0; start + length <= truth.size(); start += length) {
        const auto t = truth.subspan(start, length), p = pred.subspan(start, length);
        if (any_negative(t) || any_negative(p))
            continue;
        if (auto v = guarded([&] { return metric(t, p); })) {
            acc += *v;
            ++n;
        }
    }
    if (n == 0)
        return std::nullopt;
    return acc / static_cast<double>(n);
}

std::vector<double> concat(const ad::Tensor& a, const ad::Tensor& b)
{
    std::vector<double> out(a.values());
    out.insert(out.end(), b.values().begin(), b.values().end());
    return out;
}

MetricValues pointwise(Moe moe, std::span<const double> truth, std::span<const double> pred)
{
    MetricValues v{};
    if (truth.empty())
        return v;
    for (auto m : all_metrics) {
        if (!applies(moe, m) || m == Metric::emd || m == Metric::hld)
            continue;
        switch (m) {
        case Metric::mape: v[idx(m)] = guarded([&] { return mape(truth, pred); }); break;
        case Metric::nrmse: v[idx(m)] = guarded([&] { return nrmse(truth, pred); }); break;
        case Metric::mae: v[idx(m)] = mae(truth, pred); break;
        case Metric::mse: v[idx(m)] = mse(truth, pred); break;
        case Metric::rmse: v[idx(m)] = rmse(truth, pred); break;
        default: break;
        }
    }
    return v;
}

std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(std::string_view line)
{
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos)
            return cells;
        start = comma + 1;
    }
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out)
        throw IoError("failed writing " + path.string());
}

json metric_json(Moe moe, const MetricValues& values)
{
    json j = json::object();
    for (auto m : all_metrics)
        if (applies(moe, m))
            j[std::string(metric_name(m))] = values[idx(m)] ? json(*values[idx(m)]) : json(nullptr);
    return j;
}

std::vector<double> interval_means(const ad::Tensor& t)  // [k x p x w] -> [w]
{
    const std::size_t w = t.dim(2), groups = t.dim(0) * t.dim(1);
    std::vector<double> out(w, 0.0);
    for (std::size_t g = 0; g < groups; ++g)
        for (std::size_t s = 0; s < w; ++s)
            out[s] += t[g * w + s] / static_cast<double>(groups);
    return out;
}

}  // namespace

std::string_view moe_name(Moe m)
{
    switch (m) {
    case Moe::travel_time: return "travel_time";
    case Moe::waiting_time: return "waiting_time";
    case Moe::queue_length: return "queue_length";
    case Moe::volume: return "intervening_volume";
    }
    throw ContractError("unknown MOE");
}

std::string_view metric_name(Metric m)
{
    switch (m) {
    case Metric::mape: return "mape";
    case Metric::emd: return "emd";
    case Metric::hld: return "hld";
    case Metric::nrmse: return "nrmse";
    case Metric::mae: return "mae";
    case Metric::mse: return "mse";
    case Metric::rmse: return "rmse";
    }
    throw ContractError("unknown metric");
}

bool applies(Moe moe, Metric metric)
{
    if (metric == Metric::nrmse)
        return true;
    const bool timing = moe == Moe::travel_time || moe == Moe::waiting_time;
    const bool distribution = metric == Metric::mape || metric == Metric::emd || metric == Metric::hld;
    return timing == distribution;
}

ScenarioEvaluation evaluate_scenario(std::size_t index, const DatasetRecord& record, const model::Prediction& pred)
{
    const auto& y = record.targets;
    const std::size_t w = record.scenario.intervals;
    auto require = [](const ad::Tensor& a, const ad::Tensor& b, const char* what) {
        if (a.shape() != b.shape())
            throw ContractError(std::string("prediction ") + what + " has shape " + ad::shape_string(b.shape()) +
                                ", target has " + ad::shape_string(a.shape()));
    };
    require(y.imputed_volumes, pred.imputed_volumes, "volumes");
    require(y.travel_time_eb, pred.travel_time_eb, "eastbound travel time");
    require(y.travel_time_wb, pred.travel_time_wb, "westbound travel time");
    require(y.queue_length, pred.queue_length, "queue length");
    require(y.waiting_time, pred.waiting_time, "waiting time");

    ScenarioEvaluation ev;
    ev.index = index;
    ev.labels = domain::partition_subgroups(std::vector{oracle::summarize(record)})[0];
    ev.truth[idx(Moe::travel_time)] = concat(y.travel_time_eb, y.travel_time_wb);
    ev.pred[idx(Moe::travel_time)] = concat(pred.travel_time_eb, pred.travel_time_wb);
    ev.truth[idx(Moe::waiting_time)] = y.waiting_time.values();
    ev.pred[idx(Moe::waiting_time)] = pred.waiting_time.values();
    ev.truth[idx(Moe::queue_length)] = y.queue_length.values();
    ev.pred[idx(Moe::queue_length)] = pred.queue_length.values();
    const auto& mask = record.static_graph.mask;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] != 0.0) {
            ev.truth[idx(Moe::volume)].push_back(y.imputed_volumes[i]);
            ev.pred[idx(Moe::volume)].push_back(pred.imputed_volumes[i]);
        }

    for (auto moe : all_moes) {
        auto& values = ev.metrics[idx(moe)];
        values = pointwise(moe, ev.truth[idx(moe)], ev.pred[idx(moe)]);
        if (applies(moe, Metric::emd)) {
            values[idx(Metric::emd)] = component_mean(ev.truth[idx(moe)], ev.pred[idx(moe)], w, &emd);
            values[idx(Metric::hld)] = component_mean(ev.truth[idx(moe)], ev.pred[idx(moe)], w, &hellinger);
        }
    }
    return ev;
}

const ReportRow& SubgroupReport::find(std::string_view dimension, std::string_view level, Moe moe) const
{
    for (const auto& r : rows)
        if (r.dimension == dimension && r.level == level && r.moe == moe)
            return r;
    throw ContractError("report has no row " + std::string(dimension) + "/" + std::string(level) + "/" +
                        std::string(moe_name(moe)));
}

SubgroupReport aggregate(std::span<const ScenarioEvaluation> scenarios)
{
    auto build = [&](std::string dimension, std::string level, Moe moe, const auto& member) {
        ReportRow row;
        row.dimension = std::move(dimension);
        row.level = std::move(level);
        row.moe = moe;
        std::vector<double> truth, pred;
        std::array<double, all_metrics.size()> sums{};
        std::array<std::size_t, all_metrics.size()> counts{};
        for (const auto& s : scenarios) {
            if (!member(s))
                continue;
            ++row.scenarios;
            truth.insert(truth.end(), s.truth[idx(moe)].begin(), s.truth[idx(moe)].end());
            pred.insert(pred.end(), s.pred[idx(moe)].begin(), s.pred[idx(moe)].end());
            for (auto m : {Metric::emd, Metric::hld}) {
                if (!applies(moe, m))
                    continue;
                if (const auto& v = s.metrics[idx(moe)][idx(m)]) {
                    sums[idx(m)] += *v;
                    ++counts[idx(m)];
                } else {
                    ++row.undefined;
                }
            }
        }
        if (row.scenarios == 0)
            return row;
        row.values = pointwise(moe, truth, pred);
        for (auto m : all_metrics) {
            if (!applies(moe, m))
                continue;
            if (m == Metric::emd || m == Metric::hld) {
                if (counts[idx(m)] > 0)
                    row.values[idx(m)] = sums[idx(m)] / static_cast<double>(counts[idx(m)]);
            } else if (!row.values[idx(m)]) {
                ++row.undefined;
            }
        }
        return row;
    };

    SubgroupReport report;
    for (auto d : domain::all_dimensions)
        for (auto l : domain::all_levels)
            for (auto moe : all_moes)
                report.rows.push_back(build(std::string(domain::dimension_name(d)), std::string(domain::level_name(l)),
                                            moe, [&](const ScenarioEvaluation& s) { return s.labels.at(d) == l; }));
    for (auto moe : all_moes)
        report.rows.push_back(build("total", "all", moe, [](const ScenarioEvaluation&) { return true; }));
    return report;
}

std::string SubgroupReport::to_csv() const
{
    std::string out(report_csv_header);
    out += '\n';
    for (const auto& r : rows) {
        out += r.dimension + ',' + r.level + ',' + std::string(moe_name(r.moe)) + ',' + std::to_string(r.scenarios);
        for (const auto& v : r.values) {
            out += ',';
            if (v)
                out += format_double(*v);
        }
        out += ',' + std::to_string(r.undefined) + '\n';
    }
    return out;
}

SubgroupReport SubgroupReport::from_csv(std::string_view text)
{
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != report_csv_header)
        throw ContractError("report.csv: unexpected header");
    SubgroupReport report;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        const auto cells = split_csv_line(line);
        const auto where = "report.csv line " + std::to_string(line_no);
        if (cells.size() != 12)
            throw ContractError(where + ": expected 12 cells, got " + std::to_string(cells.size()));
        ReportRow row;
        row.dimension = cells[0];
        row.level = cells[1];
        const auto moe = std::find_if(all_moes.begin(), all_moes.end(), [&](Moe m) { return moe_name(m) == cells[2]; });
        if (moe == all_moes.end())
            throw ContractError(where + ": unknown MOE '" + cells[2] + "'");
        row.moe = *moe;
        auto parse_count = [&](const std::string& s) {
            std::size_t v = 0;
            const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (res.ec != std::errc() || res.ptr != s.data() + s.size())
                throw ContractError(where + ": bad count '" + s + "'");
            return v;
        };
        row.scenarios = parse_count(cells[3]);
        for (std::size_t m = 0; m < all_metrics.size(); ++m) {
            const auto& cell = cells[4 + m];
            if (cell.empty())
                continue;
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end != cell.c_str() + cell.size())
                throw ContractError(where + ": bad number '" + cell + "'");
            row.values[m] = v;
        }
        row.undefined = parse_count(cells[11]);
        report.rows.push_back(std::move(row));
    }
    return report;
}

EvaluationOutput evaluate_predictions(std::span<const DatasetRecord> dataset,
                                      std::span<const std::optional<model::Prediction>> predictions,
                                      Execution execution)
{
    if (dataset.size() != predictions.size())
        throw ContractError("evaluate: " + std::to_string(dataset.size()) + " records but " +
                            std::to_string(predictions.size()) + " predictions");
    const std::size_t n = dataset.size();
    std::vector<std::optional<ScenarioEvaluation>> slots(n);
    std::vector<std::string> errors(n);
    auto run = [&](std::size_t i) {
        if (!predictions[i]) {
            errors[i] = "no prediction";
            return;
        }
        try {
            slots[i] = evaluate_scenario(i, dataset[i], *predictions[i]);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    };
    if (execution == Execution::parallel) {
        const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < count; ++i)
            run(static_cast<std::size_t>(i));
    } else {
        for (std::size_t i = 0; i < n; ++i)
            run(i);
    }
    EvaluationOutput out;
    for (std::size_t i = 0; i < n; ++i) {
        if (slots[i])
            out.scenarios.push_back(std::move(*slots[i]));
        else
            out.failures.emplace_back(i, errors[i]);
    }
    out.report = aggregate(out.scenarios);
    return out;
}

void write_report_files(const EvaluationOutput& output, std::span<const DatasetRecord> dataset,
                        std::span<const std::optional<model::Prediction>> predictions,
                        const std::filesystem::path& out_dir, const ReportOptions& options)
{
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "charts", ec);
    if (ec)
        throw IoError("cannot create report directory " + out_dir.string() + ": " + ec.message());
    write_text(out_dir / "report.csv", output.report.to_csv());

    if (!options.source_index.empty() && options.source_index.size() != dataset.size())
        throw ContractError("report: source_index has " + std::to_string(options.source_index.size()) +
                            " entries for " + std::to_string(dataset.size()) + " records");
    auto source = [&](std::size_t i) { return options.source_index.empty() ? i : options.source_index[i]; };

    std::string lines;
    std::size_t next = 0;
    auto failure_line = [&](const std::pair<std::size_t, std::string>& f) {
        lines += json{{"index", source(f.first)}, {"error", f.second}}.dump() + '\n';
    };
    for (const auto& s : output.scenarios) {
        while (next < output.failures.size() && output.failures[next].first < s.index)
            failure_line(output.failures[next++]);
        json metrics = json::object();
        for (auto moe : all_moes)
            metrics[std::string(moe_name(moe))] = metric_json(moe, s.metrics[idx(moe)]);
        json j = {{"index", source(s.index)}};
        for (auto d : domain::all_dimensions)
            j[std::string(domain::dimension_name(d))] = std::string(domain::level_name(s.labels.at(d)));
        j["metrics"] = std::move(metrics);
        lines += j.dump() + '\n';
    }
    while (next < output.failures.size())
        failure_line(output.failures[next++]);
    write_text(out_dir / "metrics.jsonl", lines);

    std::size_t drawn = 0;
    for (const auto& s : output.scenarios) {
        if (drawn++ >= options.chart_samples)
            break;
        const auto& y = dataset[s.index].targets;
        const auto& p = *predictions[s.index];
        const auto stem = "scenario_" + std::to_string(source(s.index)) + "_";
        const std::vector<ChartSeries> tt{{"actual EB", y.travel_time_eb.values(), false},
                                          {"predicted EB", p.travel_time_eb.values(), true},
                                          {"actual WB", y.travel_time_wb.values(), false},
                                          {"predicted WB", p.travel_time_wb.values(), true}};
        write_text(out_dir / "charts" / (stem + "travel_time.svg"),
                   overlay_svg("Corridor travel time", "interval", "s", tt));
        const std::vector<ChartSeries> wt{{"actual", interval_means(y.waiting_time), false},
                                          {"predicted", interval_means(p.waiting_time), true}};
        write_text(out_dir / "charts" / (stem + "waiting_time.svg"),
                   overlay_svg("Mean lane-group waiting time", "interval", "s", wt));
        const std::vector<ChartSeries> ql{{"actual", interval_means(y.queue_length), false},
                                          {"predicted", interval_means(p.queue_length), true}};
        write_text(out_dir / "charts" / (stem + "queue_length.svg"),
                   overlay_svg("Mean lane-group queue length", "interval", "veh", ql));
        const std::vector<ChartSeries> vol{{"actual", s.truth[idx(Moe::volume)], false},
                                           {"predicted", s.pred[idx(Moe::volume)], true}};
        write_text(out_dir / "charts" / (stem + "intervening_volume.svg"),
                   overlay_svg("Imputed volume at masked entries", "masked entry", "veh", vol));
    }
}

EvaluationOutput evaluate_and_report(model::TgdtModel& model, std::span<const DatasetRecord> dataset,
                                     const std::filesystem::path& out_dir, const ReportOptions& options)
{
    std::vector<model::PredictionInput> inputs;
    inputs.reserve(dataset.size());
    for (const auto& r : dataset)
        inputs.push_back(model::PredictionInput::from(r));
    auto batch = model::predict_batch(model, inputs, options.execution);
    auto output = evaluate_predictions(dataset, batch.results, options.execution);
    write_report_files(output, dataset, batch.results, out_dir, options);
    return output;
}

model::Prediction prediction_from_targets(const DatasetRecord& record)
{
    const auto& y = record.targets;
    return {y.imputed_volumes, y.travel_time_eb, y.travel_time_wb, y.queue_length, y.waiting_time};
}

std::string overlay_svg(std::string_view title, std::string_view x_label, std::string_view y_label,
                        std::span<const ChartSeries> series)
{
    constexpr double width = 640, height = 360, left = 64, right = 150, top = 36, bottom = 48;
    constexpr const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::size_t length = 0;
    for (const auto& s : series) {
        length = std::max(length, s.values.size());
        for (double v : s.values)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    }
    if (!std::isfinite(lo)) {
        lo = 0.0;
        hi = 1.0;
    }
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double plot_w = width - left - right, plot_h = height - top - bottom;
    auto x_at = [&](std::size_t i) {
        return left + (length > 1 ? plot_w * static_cast<double>(i) / static_cast<double>(length - 1) : plot_w / 2);
    };
    auto y_at = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };
    auto escape = [](std::string_view s) {
        std::string out;
        for (char c : s) {
            if (c == '<')
                out += "&lt;";
            else if (c == '>')
                out += "&gt;";
            else if (c == '&')
                out += "&amp;";
            else
                out += c;
        }
        return out;
    };

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"360\" viewBox=\"0 0 640 360\" "
                      "font-family=\"sans-serif\" font-size=\"12\">\n";
    svg += "<rect width=\"640\" height=\"360\" fill=\"white\"/>\n";
    svg += "<text x=\"" + num(left) + "\" y=\"22\" font-size=\"14\">" + escape(title) + "</text>\n";
    svg += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(plot_w) + "\" height=\"" +
           num(plot_h) + "\" fill=\"none\" stroke=\"#444\"/>\n";
    svg += "<text x=\"" + num(left - 6) + "\" y=\"" + num(top + 4) + "\" text-anchor=\"end\">" + num(hi) + "</text>\n";
    svg += "<text x=\"" + num(left - 6) + "\" y=\"" + num(top + plot_h) + "\" text-anchor=\"end\">" + num(lo) +
           "</text>\n";
    svg += "<text x=\"" + num(left) + "\" y=\"" + num(top + plot_h + 16) + "\">0</text>\n";
    svg += "<text x=\"" + num(left + plot_w) + "\" y=\"" + num(top + plot_h + 16) + "\" text-anchor=\"end\">" +
           std::to_string(length ? length - 1 : 0) + "</text>\n";
    svg += "<text x=\"" + num(left + plot_w / 2) + "\" y=\"" + num(height - 12) + "\" text-anchor=\"middle\">" +
           escape(x_label) + "</text>\n";
    svg += "<text x=\"14\" y=\"" + num(top + plot_h / 2) + "\" transform=\"rotate(-90 14 " + num(top + plot_h / 2) +
           ")\" text-anchor=\"middle\">" + escape(y_label) + "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = colors[s % std::size(colors)];
        std::string points;
        for (std::size_t i = 0; i < series[s].values.size(); ++i) {
            if (!std::isfinite(series[s].values[i]))
                continue;
            points += num(x_at(i)) + "," + num(y_at(series[s].values[i])) + " ";
        }
        if (!points.empty())
            points.pop_back();
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\"" +
               (series[s].dashed ? " stroke-dasharray=\"6 4\"" : "") + " points=\"" + points + "\"/>\n";
        const double ly = top + 12 + 18 * static_cast<double>(s);
        svg += "<line x1=\"" + num(width - right + 12) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" +
               num(width - right + 36) + "\" y2=\"" + num(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"" +
               (series[s].dashed ? " stroke-dasharray=\"6 4\"" : "") + "/>\n";
        svg += "<text x=\"" + num(width - right + 42) + "\" y=\"" + num(ly) + "\">" + escape(series[s].label) +
               "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace ctwin::eval
