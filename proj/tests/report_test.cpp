// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include <avr/report.hpp>

#include "testutil.hpp"

using namespace avr;

namespace {

MetricsTable sample_metrics() {
    MetricsTable table;
    table.columns.push_back({"rf", {0.801, 0.894, 0.845, 0.838}});
    table.columns.push_back({"lr", {0.800, 0.872, 0.834, 0.829}});
    return table;
}

MarginReport sample_margin() {
    MarginReport report;
    report.n_normal = 3893;
    report.n_attack = 13902;
    report.bands.push_back({0.4, 0.5, 155, 0, 155.0 / 3893.0, 0.0});
    report.bands.push_back({0.3, 0.5, 293, 0, 293.0 / 3893.0, 0.0});
    report.bands.push_back({0.4, 0.6, 155, 26, 155.0 / 3893.0, 26.0 / 13902.0});
    report.bands.push_back({0.3, 0.6, 293, 26, 293.0 / 3893.0, 26.0 / 13902.0});
    return report;
}

BatchResult sample_batch() {
    BatchResult result;
    result.trials_per_cell = 2;
    result.tampers_per_trial = 5;
    result.seed = 9;
    BatchCell cell;
    cell.speed = 0.5;
    cell.interval_s = 1.0;
    cell.trials = 2;
    cell.success_rate = 1.0;
    cell.mean_latency = 0.43;
    cell.max_latency = 0.81;
    cell.control_false_detections = 0;
    result.cells.push_back(cell);
    return result;
}

}  // namespace

TEST_CASE("format names round trip") {
    CHECK(report_format_from_string("json") == ReportFormat::Json);
    CHECK(report_format_from_string("csv") == ReportFormat::Csv);
    CHECK(report_format_from_string("markdown") == ReportFormat::Markdown);
    CHECK(report_format_from_string("md") == ReportFormat::Markdown);
    CHECK_THROWS_AS(report_format_from_string("pdf"), invalid_argument);
    for (ReportFormat f : {ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown})
        CHECK(report_format_from_string(to_string(f)) == f);
}

TEST_CASE("metrics render to every format") {
    const MetricsTable table = sample_metrics();

    const std::string csv = metrics_to_csv(table);
    CHECK(csv.rfind("metric,rf,lr\n", 0) == 0);
    CHECK(csv.find("precision,") != std::string::npos);
    CHECK(csv.find("f1_score,") != std::string::npos);

    const std::string md = metrics_to_markdown(table);
    CHECK(md.find("| Metrics |") != std::string::npos);
    CHECK(md.find("| Precision | 0.801 | 0.800 |") != std::string::npos);
    CHECK(md.find("| Recall | 0.894 | 0.872 |") != std::string::npos);
    CHECK(md.find("| F1 Score | 0.845 | 0.834 |") != std::string::npos);
    CHECK(md.find("| Accuracy | 0.838 | 0.829 |") != std::string::npos);

    const std::string json = metrics_to_json(table);
    CHECK(json.find("\"type\": \"metrics\"") != std::string::npos);
}

TEST_CASE("empty metrics render headers only") {
    const MetricsTable empty;
    CHECK(metrics_to_csv(empty) == "metric\nprecision\nrecall\nf1_score\naccuracy\n");
    const std::string md = metrics_to_markdown(empty);
    CHECK(md.find("| Metrics |") != std::string::npos);
}

TEST_CASE("margin renders the four-column analysis table") {
    const MarginReport report = sample_margin();

    const std::string csv = margin_to_csv(report);
    CHECK(csv.rfind("lower,upper,normal_misclassified,attack_misclassified,fp_rate,fn_rate\n", 0) ==
          0);

    const std::string md = margin_to_markdown(report);
    CHECK(md.find("Detection Margin") != std::string::npos);
    CHECK(md.find("0.40 - 0.50") != std::string::npos);
    CHECK(md.find("| 155 | 0 |") != std::string::npos);
    CHECK(md.find("| 293 | 26 |") != std::string::npos);
}

TEST_CASE("rerendering a json report reproduces the direct renderers") {
    SUBCASE("metrics") {
        const MetricsTable table = sample_metrics();
        const std::string json = metrics_to_json(table);
        CHECK(rerender_report(json, ReportFormat::Json) == json);
        CHECK(rerender_report(json, ReportFormat::Csv) == metrics_to_csv(table));
        CHECK(rerender_report(json, ReportFormat::Markdown) == metrics_to_markdown(table));
    }
    SUBCASE("margin") {
        const MarginReport report = sample_margin();
        const std::string json = margin_to_json(report);
        CHECK(rerender_report(json, ReportFormat::Json) == json);
        CHECK(rerender_report(json, ReportFormat::Csv) == margin_to_csv(report));
        CHECK(rerender_report(json, ReportFormat::Markdown) == margin_to_markdown(report));
    }
    SUBCASE("batch") {
        const BatchResult result = sample_batch();
        const std::string json = batch_to_json(result);
        CHECK(rerender_report(json, ReportFormat::Json) == json);
        CHECK(rerender_report(json, ReportFormat::Csv) == batch_to_csv(result));
        CHECK(rerender_report(json, ReportFormat::Markdown) == batch_to_markdown(result));
    }
    SUBCASE("scenario") {
        Scenario sc;
        sc.name = "tiny";
        sc.seed = 1;
        sc.duration = 2.0;
        sc.detector.enabled = false;
        sc.tampers.push_back({"perception-model", 0.5, "flip_bytes"});
        avrtest::TempDir work;
        const ScenarioReport report = run_scenario(sc, work.path());
        const std::string json = report_to_json(report);
        CHECK(rerender_report(json, ReportFormat::Json) == json);
        const std::string md = rerender_report(json, ReportFormat::Markdown);
        CHECK(md == scenario_to_markdown(report));
        CHECK(md.find("tiny") != std::string::npos);
    }
}

TEST_CASE("rerendering rejects garbage") {
    CHECK_THROWS_AS(rerender_report("not json", ReportFormat::Json), avr::error);
    CHECK_THROWS_AS(rerender_report(R"({"type": "sonnet"})", ReportFormat::Json), avr::error);
    CHECK_THROWS_AS(rerender_report(R"({"untyped": true})", ReportFormat::Json), avr::error);
}

TEST_CASE("batch markdown carries the grid cells") {
    const std::string md = batch_to_markdown(sample_batch());
    CHECK(md.find("0.5") != std::string::npos);
    CHECK(md.find("1.0") != std::string::npos);
    CHECK(md.find("|") != std::string::npos);
}

TEST_CASE("renderers are pure functions of their input") {
    CHECK(metrics_to_json(sample_metrics()) == metrics_to_json(sample_metrics()));
    CHECK(margin_to_csv(sample_margin()) == margin_to_csv(sample_margin()));
    CHECK(batch_to_markdown(sample_batch()) == batch_to_markdown(sample_batch()));
}
