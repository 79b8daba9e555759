#include "corridor_twin/errors.hpp"
#include "corridor_twin/eval/metrics.hpp"
#include "corridor_twin/eval/report.hpp"
#include "corridor_twin/oracle/dataset.hpp"
#include "gradcheck.hpp"
#include "tempdir.hpp"

#include <doctest.h>

#include <cmath>
#include <json.hpp>

using namespace ctwin;
using namespace ctwin::eval;
using V = std::vector<double>;

namespace {

std::vector<domain::DatasetRecord> toy_records(std::size_t n, std::uint64_t seed)
{
    oracle::GenerationConfig c;
    c.ranges.intersections = 3;
    c.ranges.intervals = 4;
    return oracle::generate_records(n, seed, c, Execution::serial);
}

V random_series(Rng& rng, std::size_t n, double lo, double hi)
{
    V v(n);
    for (auto& x : v)
        x = rng.uniform(lo, hi);
    return v;
}

}  // namespace

TEST_CASE("metric worked examples")
{
    CHECK(mape(V{100, 200}, V{110, 180}) == doctest::Approx(0.10).epsilon(1e-12));
    CHECK(mape(V{0, 100}, V{5, 110}) == doctest::Approx(0.10).epsilon(1e-12));
    CHECK(nrmse(V{0, 10}, V{1, 9}) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(std::abs(hellinger(V{1, 0}, V{0.5, 0.5}) - std::sqrt(1.0 - std::sqrt(0.5))) <= 1e-12);
    CHECK(std::abs(hellinger(V{1, 0}, V{0.5, 0.5}) - 0.5412) <= 1e-4);
    CHECK(hellinger(V{1, 0}, V{0, 1}) == doctest::Approx(1.0));
    CHECK(emd(V{1, 0}, V{0, 1}) == doctest::Approx(1.0));
    CHECK(emd(V{1, 0, 0}, V{0, 0, 1}) == doctest::Approx(1.0));
    CHECK(emd(V{1, 0, 0}, V{0, 1, 0}) == doctest::Approx(0.5));
    CHECK(mae(V{1, 2}, V{2, 4}) == 1.5);
    CHECK(mse(V{1, 2}, V{2, 4}) == 2.5);
    CHECK(rmse(V{1, 2}, V{2, 4}) == doctest::Approx(std::sqrt(2.5)));
    // Unnormalized inputs are scaled to unit mass first.
    CHECK(hellinger(V{4, 0}, V{3, 3}) == doctest::Approx(hellinger(V{1, 0}, V{0.5, 0.5})));
}

TEST_CASE("identical series score zero on every metric")
{
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const auto s = random_series(rng, 2 + rng.below(30), 0.1, 50.0);
        CHECK(mape(s, s) == 0.0);
        CHECK(nrmse(s, s) == 0.0);
        CHECK(hellinger(s, s) <= 1e-7);
        CHECK(emd(s, s) <= 1e-12);
        CHECK(mae(s, s) == 0.0);
        CHECK(mse(s, s) == 0.0);
        CHECK(rmse(s, s) == 0.0);
    }
    CHECK(hellinger(V{0, 0}, V{0, 0}) == 0.0);
    CHECK(emd(V{0, 0, 0}, V{0, 0, 0}) == 0.0);
}

TEST_CASE("metric properties on random pairs")
{
    Rng rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng.below(20);
        const auto a = random_series(rng, n, 0.0, 10.0), b = random_series(rng, n, 0.0, 10.0);
        const double h = hellinger(a, b), e = emd(a, b);
        CHECK(h >= 0.0);
        CHECK(h <= 1.0);
        CHECK(e >= 0.0);
        CHECK(e <= 1.0 + 1e-12);
        CHECK(h == doctest::Approx(hellinger(b, a)).epsilon(1e-12));
        CHECK(e == doctest::Approx(emd(b, a)).epsilon(1e-12));
        CHECK(mape(a, b) >= 0.0);
    }
    for (int trial = 0; trial < 20; ++trial) {
        const double p = rng.uniform(), q = rng.uniform();
        CHECK(std::abs(emd(V{p, 1 - p}, V{q, 1 - q}) - std::abs(p - q)) <= 1e-15);
    }
}

TEST_CASE("NRMSE matches a two-pass recomputation")
{
    Rng rng(101);
    const auto t = random_series(rng, 100, -5.0, 20.0), p = random_series(rng, 100, -5.0, 20.0);
    double lo = t[0], hi = t[0];
    for (double v : t) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i)
        sq += (t[i] - p[i]) * (t[i] - p[i]);
    CHECK(std::abs(nrmse(t, p) - std::sqrt(sq / 100.0) / (hi - lo)) <= 1e-12);
}

TEST_CASE("metric preconditions")
{
    CHECK_THROWS_AS(mape(V{0, 1e-10}, V{1, 1}), UndefinedMetricError);
    CHECK_THROWS_AS(nrmse(V{3, 3}, V{1, 2}), UndefinedMetricError);
    CHECK_THROWS_AS(hellinger(V{1, -1}, V{1, 1}), ContractError);
    CHECK_THROWS_AS(emd(V{1, 1}, V{-1, 1}), ContractError);
    CHECK_THROWS_AS(hellinger(V{0, 0}, V{1, 1}), UndefinedMetricError);
    CHECK_THROWS_AS(emd(V{1}, V{1}), ContractError);
    CHECK_THROWS_AS(mae(V{1, 2}, V{1}), ContractError);
    CHECK_THROWS_AS(mse(V{}, V{}), ContractError);
}

TEST_CASE("metric applicability mirrors the table layout")
{
    CHECK(applies(Moe::travel_time, Metric::mape));
    CHECK(applies(Moe::travel_time, Metric::hld));
    CHECK_FALSE(applies(Moe::travel_time, Metric::mae));
    CHECK(applies(Moe::queue_length, Metric::rmse));
    CHECK_FALSE(applies(Moe::queue_length, Metric::emd));
    for (auto moe : all_moes)
        CHECK(applies(moe, Metric::nrmse));
}

TEST_CASE("oracle targets as predictions give zero error")
{
    const auto records = toy_records(12, 5);
    std::vector<std::optional<model::Prediction>> preds;
    for (const auto& r : records)
        preds.emplace_back(prediction_from_targets(r));
    const auto out = evaluate_predictions(records, preds, Execution::serial);
    CHECK(out.failures.empty());
    REQUIRE(out.report.rows.size() == 40);
    for (const auto& row : out.report.rows)
        for (const auto& v : row.values)
            if (v)
                CHECK(std::abs(*v) <= 1e-7);
    const auto& total = out.report.find("total", "all", Moe::travel_time);
    CHECK(total.scenarios == 12);
    CHECK(total.values[static_cast<std::size_t>(Metric::mape)].has_value());
    CHECK_FALSE(total.values[static_cast<std::size_t>(Metric::mae)].has_value());
}

TEST_CASE("report rows, totals and CSV round trip")
{
    const auto records = toy_records(24, 9);
    std::vector<std::optional<model::Prediction>> preds;
    Rng rng(4);
    for (const auto& r : records) {
        auto p = prediction_from_targets(r);
        for (ad::Tensor* t : {&p.travel_time_eb, &p.travel_time_wb, &p.queue_length, &p.waiting_time,
                              &p.imputed_volumes})
            for (auto& v : t->data())
                v = std::max(0.0, v * rng.uniform(0.8, 1.2) + rng.uniform(0.0, 2.0));
        preds.emplace_back(std::move(p));
    }
    preds[7].reset();
    const auto out = evaluate_predictions(records, preds, Execution::parallel);
    REQUIRE(out.failures.size() == 1);
    CHECK(out.failures[0].first == 7);
    CHECK(out.scenarios.size() == 23);
    CHECK(evaluate_predictions(records, preds, Execution::serial).report.to_csv() == out.report.to_csv());

    SUBCASE("levels partition the evaluated scenarios")
    {
        for (auto d : domain::all_dimensions) {
            std::size_t sum = 0;
            for (auto l : domain::all_levels)
                sum += out.report.find(domain::dimension_name(d), domain::level_name(l), Moe::queue_length).scenarios;
            CHECK(sum == 23);
        }
    }
    SUBCASE("total matches an independent recomputation")
    {
        V tt_true, tt_pred, vol_true, vol_pred;
        double hld_sum = 0.0;
        std::size_t hld_n = 0;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (!preds[i])
                continue;
            const auto& y = records[i].targets;
            const auto& p = *preds[i];
            for (const auto* pair : {&y.travel_time_eb, &y.travel_time_wb})
                tt_true.insert(tt_true.end(), pair->values().begin(), pair->values().end());
            for (const auto* pair : {&p.travel_time_eb, &p.travel_time_wb})
                tt_pred.insert(tt_pred.end(), pair->values().begin(), pair->values().end());
            for (std::size_t j = 0; j < y.imputed_volumes.size(); ++j)
                if (records[i].static_graph.mask[j] != 0.0) {
                    vol_true.push_back(y.imputed_volumes[j]);
                    vol_pred.push_back(p.imputed_volumes[j]);
                }
            const double h = 0.5 * (hellinger(y.travel_time_eb.values(), p.travel_time_eb.values()) +
                                     hellinger(y.travel_time_wb.values(), p.travel_time_wb.values()));
            hld_sum += h;
            ++hld_n;
        }
        const auto& tt = out.report.find("total", "all", Moe::travel_time);
        CHECK(std::abs(*tt.values[static_cast<std::size_t>(Metric::nrmse)] - nrmse(tt_true, tt_pred)) <= 1e-12);
        CHECK(std::abs(*tt.values[static_cast<std::size_t>(Metric::mape)] - mape(tt_true, tt_pred)) <= 1e-12);
        CHECK(std::abs(*tt.values[static_cast<std::size_t>(Metric::hld)] - hld_sum / static_cast<double>(hld_n)) <=
              1e-12);
        const auto& vol = out.report.find("total", "all", Moe::volume);
        CHECK(std::abs(*vol.values[static_cast<std::size_t>(Metric::rmse)] - rmse(vol_true, vol_pred)) <= 1e-12);
    }
    SUBCASE("CSV parses back to the same report")
    {
        const auto csv = out.report.to_csv();
        CHECK(csv.rfind(std::string(report_csv_header) + "\n", 0) == 0);
        const auto back = SubgroupReport::from_csv(csv);
        REQUIRE(back.rows.size() == out.report.rows.size());
        for (std::size_t i = 0; i < back.rows.size(); ++i) {
            const auto& a = back.rows[i];
            const auto& b = out.report.rows[i];
            CHECK(a.dimension == b.dimension);
            CHECK(a.level == b.level);
            CHECK(a.moe == b.moe);
            CHECK(a.scenarios == b.scenarios);
            CHECK(a.undefined == b.undefined);
            CHECK(a.values == b.values);
        }
        CHECK(back.to_csv() == csv);
        CHECK_THROWS_AS(SubgroupReport::from_csv("nope\n"), ContractError);
        CHECK_THROWS_AS(SubgroupReport::from_csv(std::string(report_csv_header) + "\ntotal,all,bogus,1,,,,,,,,0\n"),
                        ContractError);
    }
    SUBCASE("report files")
    {
        testing::TempDir dir;
        ReportOptions opts;
        opts.chart_samples = 2;
        write_report_files(out, records, preds, dir.path / "report", opts);
        CHECK(testing::slurp(dir.path / "report" / "report.csv") == out.report.to_csv());
        const auto jsonl = testing::slurp(dir.path / "report" / "metrics.jsonl");
        CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 24);
        CHECK(jsonl.find("\"error\":\"no prediction\"") != std::string::npos);
        std::size_t charts = 0;
        for (const auto& e : std::filesystem::directory_iterator(dir.path / "report" / "charts")) {
            ++charts;
            const auto svg = testing::slurp(e.path());
            CHECK(svg.rfind("<svg xmlns=\"http://www.w3.org/2000/svg\"", 0) == 0);
            CHECK(svg.find("<polyline") != std::string::npos);
            CHECK(svg.find("href") == std::string::npos);
        }
        CHECK(charts == 8);
    }
}

TEST_CASE("undefined metrics are counted, not dropped")
{
    auto records = toy_records(1, 2);
    auto& y = records[0].targets;
    std::fill(y.travel_time_eb.data().begin(), y.travel_time_eb.data().end(), 60.0);
    std::fill(y.travel_time_wb.data().begin(), y.travel_time_wb.data().end(), 60.0);
    std::vector<std::optional<model::Prediction>> preds{prediction_from_targets(records[0])};
    const auto out = evaluate_predictions(records, preds, Execution::serial);
    const auto& row = out.report.find("total", "all", Moe::travel_time);
    CHECK_FALSE(row.values[static_cast<std::size_t>(Metric::nrmse)].has_value());
    CHECK(row.undefined >= 1);
    CHECK(row.values[static_cast<std::size_t>(Metric::mape)].has_value());
}

TEST_CASE("model evaluation writes a complete report")
{
    const auto records = toy_records(6, 12);
    model::ModelConfig mc;
    mc.intersections = 3;
    mc.intervals = 4;
    model::TgdtModel net(mc);
    testing::TempDir dir;
    const auto out = evaluate_and_report(net, records, dir.path);
    CHECK(out.failures.empty());
    const auto parsed = SubgroupReport::from_csv(testing::slurp(dir.path / "report.csv"));
    CHECK(parsed.rows.size() == 40);
    CHECK(std::filesystem::exists(dir.path / "charts" / "scenario_0_travel_time.svg"));
}
