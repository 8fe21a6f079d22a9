// SPDX-License-Identifier: Apache-2.0
#include "avr/report.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include <nlohmann/json.hpp>

namespace avr {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

std::string exact(double v) { return fmt("%.17g", v); }

std::string upper_name(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

std::string band_label(const MarginBand& b) {
    return fmt("%.2f", b.lower) + " - " + fmt("%.2f", b.upper);
}

}  // namespace

const char* to_string(ReportFormat f) {
    switch (f) {
        case ReportFormat::Json: return "json";
        case ReportFormat::Csv: return "csv";
        case ReportFormat::Markdown: return "markdown";
    }
    return "?";
}

ReportFormat report_format_from_string(const std::string& s) {
    if (s == "json") return ReportFormat::Json;
    if (s == "csv") return ReportFormat::Csv;
    if (s == "markdown" || s == "md") return ReportFormat::Markdown;
    throw invalid_argument("unknown report format: " + s);
}

// ---- metrics ----

std::string metrics_to_json(const MetricsTable& table) {
    ordered_json j;
    j["type"] = "metrics";
    ordered_json models = ordered_json::array();
    for (const auto& [name, m] : table.columns) {
        models.push_back({{"model", name},
                          {"precision", m.precision},
                          {"recall", m.recall},
                          {"f1", m.f1},
                          {"accuracy", m.accuracy}});
    }
    j["models"] = std::move(models);
    return j.dump(2) + "\n";
}

std::string metrics_to_csv(const MetricsTable& table) {
    std::string out = "metric";
    for (const auto& [name, m] : table.columns) out += "," + name;
    out += "\n";
    const auto row = [&](const char* label, auto getter) {
        out += label;
        for (const auto& [name, m] : table.columns) out += "," + exact(getter(m));
        out += "\n";
    };
    row("precision", [](const MeanMetrics& m) { return m.precision; });
    row("recall", [](const MeanMetrics& m) { return m.recall; });
    row("f1_score", [](const MeanMetrics& m) { return m.f1; });
    row("accuracy", [](const MeanMetrics& m) { return m.accuracy; });
    return out;
}

std::string metrics_to_markdown(const MetricsTable& table) {
    std::string out = "| Metrics |";
    for (const auto& [name, m] : table.columns) out += " " + upper_name(name) + " |";
    out += "\n| --- |";
    for (std::size_t i = 0; i < table.columns.size(); ++i) out += " --- |";
    out += "\n";
    const auto row = [&](const char* label, auto getter) {
        out += std::string("| ") + label + " |";
        for (const auto& [name, m] : table.columns) out += " " + fmt("%.3f", getter(m)) + " |";
        out += "\n";
    };
    row("Precision", [](const MeanMetrics& m) { return m.precision; });
    row("Recall", [](const MeanMetrics& m) { return m.recall; });
    row("F1 Score", [](const MeanMetrics& m) { return m.f1; });
    row("Accuracy", [](const MeanMetrics& m) { return m.accuracy; });
    return out;
}

// ---- margin ----

std::string margin_to_json(const MarginReport& report) {
    ordered_json j;
    j["type"] = "margin";
    j["n_normal"] = report.n_normal;
    j["n_attack"] = report.n_attack;
    ordered_json bands = ordered_json::array();
    for (const auto& b : report.bands) {
        bands.push_back({{"lower", b.lower},
                         {"upper", b.upper},
                         {"normal_misclassified", b.normal_misclassified},
                         {"attack_misclassified", b.attack_misclassified},
                         {"fp_rate", b.fp_rate},
                         {"fn_rate", b.fn_rate}});
    }
    j["bands"] = std::move(bands);
    return j.dump(2) + "\n";
}

std::string margin_to_csv(const MarginReport& report) {
    std::string out = "lower,upper,normal_misclassified,attack_misclassified,fp_rate,fn_rate\n";
    for (const auto& b : report.bands) {
        out += exact(b.lower) + "," + exact(b.upper) + "," +
               std::to_string(b.normal_misclassified) + "," +
               std::to_string(b.attack_misclassified) + "," + exact(b.fp_rate) + "," +
               exact(b.fn_rate) + "\n";
    }
    return out;
}

std::string margin_to_markdown(const MarginReport& report) {
    std::string out =
        "| Detection Margin | Normal Data Misclassified | Attack Data Misclassified "
        "| FP Rate | FN Rate |\n"
        "| --- | --- | --- | --- | --- |\n";
    for (const auto& b : report.bands) {
        out += "| " + band_label(b) + " | " + std::to_string(b.normal_misclassified) + " | " +
               std::to_string(b.attack_misclassified) + " | " + fmt("%.4g", b.fp_rate) + " | " +
               fmt("%.4g", b.fn_rate) + " |\n";
    }
    return out;
}

// ---- batch / scenario markdown ----

std::string batch_to_markdown(const BatchResult& result) {
    std::string out =
        "| Speed (m/s) | Interval (s) | Success Rate | Mean Latency (s) | Max Latency (s) "
        "| Control False Detections |\n"
        "| --- | --- | --- | --- | --- | --- |\n";
    for (const auto& c : result.cells) {
        out += "| " + fmt("%.2f", c.speed) + " | " + fmt("%.2f", c.interval_s) + " | " +
               fmt("%.3f", c.success_rate) + " | " +
               (c.mean_latency ? fmt("%.4f", *c.mean_latency) : std::string("n/a")) + " | " +
               (c.max_latency ? fmt("%.4f", *c.max_latency) : std::string("n/a")) + " | " +
               std::to_string(c.control_false_detections) + " |\n";
    }
    return out;
}

std::string scenario_to_markdown(const ScenarioReport& report) {
    std::string out = "# Scenario " + report.name + "\n\n";
    out += "Final mode: " + std::string(to_string(report.final_mode)) + "\n\n";
    out += "| Time (s) | Event | Detail |\n| --- | --- | --- |\n";
    for (const auto& ev : report.timeline)
        out += "| " + fmt("%.3f", ev.time) + " | " + ev.kind + " | " + ev.detail + " |\n";
    out += "\n| Attack | Onset (s) | Detected | Detection Latency (s) |\n| --- | --- | --- | --- |\n";
    for (const auto& lat : report.latencies) {
        out += "| " + lat.attack_id + " | " + fmt("%.3f", lat.onset) + " | " +
               (lat.detected ? "yes" : "no") + " | " +
               (lat.detection_latency ? fmt("%.4f", *lat.detection_latency) : std::string("n/a")) +
               " |\n";
    }
    return out;
}

// ---- re-rendering from stored JSON ----

namespace {

MetricsTable metrics_from_json(const ordered_json& j) {
    MetricsTable table;
    for (const auto& row : j.at("models")) {
        MeanMetrics m;
        m.precision = row.at("precision").get<double>();
        m.recall = row.at("recall").get<double>();
        m.f1 = row.at("f1").get<double>();
        m.accuracy = row.at("accuracy").get<double>();
        table.columns.push_back({row.at("model").get<std::string>(), m});
    }
    return table;
}

MarginReport margin_from_json(const ordered_json& j) {
    MarginReport report;
    report.n_normal = j.at("n_normal").get<std::uint64_t>();
    report.n_attack = j.at("n_attack").get<std::uint64_t>();
    for (const auto& row : j.at("bands")) {
        MarginBand b;
        b.lower = row.at("lower").get<double>();
        b.upper = row.at("upper").get<double>();
        b.normal_misclassified = row.at("normal_misclassified").get<std::uint64_t>();
        b.attack_misclassified = row.at("attack_misclassified").get<std::uint64_t>();
        b.fp_rate = row.at("fp_rate").get<double>();
        b.fn_rate = row.at("fn_rate").get<double>();
        report.bands.push_back(b);
    }
    return report;
}

BatchResult batch_from_json(const ordered_json& j) {
    BatchResult result;
    result.seed = j.at("seed").get<std::uint64_t>();
    result.trials_per_cell = j.at("trials_per_cell").get<std::size_t>();
    result.tampers_per_trial = j.at("tampers_per_trial").get<std::size_t>();
    for (const auto& row : j.at("cells")) {
        BatchCell c;
        c.speed = row.at("speed").get<double>();
        c.interval_s = row.at("interval").get<double>();
        c.trials = row.at("trials").get<std::size_t>();
        c.success_rate = row.at("success_rate").get<double>();
        if (!row.at("mean_latency").is_null()) c.mean_latency = row.at("mean_latency").get<double>();
        if (!row.at("max_latency").is_null()) c.max_latency = row.at("max_latency").get<double>();
        c.control_false_detections = row.at("control_false_detections").get<std::size_t>();
        result.cells.push_back(c);
    }
    return result;
}

ScenarioReport scenario_report_from_json(const ordered_json& j) {
    ScenarioReport report;
    report.name = j.at("name").get<std::string>();
    report.seed = j.at("seed").get<std::uint64_t>();
    report.final_mode = coordinator_mode_from_string(j.at("final_mode").get<std::string>());
    report.stop_sign_halted = j.at("stop_sign_halted").get<bool>();
    for (const auto& ev : j.at("timeline"))
        report.timeline.push_back({ev.at("time").get<double>(), ev.at("kind").get<std::string>(),
                                   ev.at("detail").get<std::string>()});
    for (const auto& row : j.at("latencies")) {
        AttackLatency lat;
        lat.attack_id = row.at("attack").get<std::string>();
        lat.onset = row.at("onset").get<double>();
        lat.detected = row.at("detected").get<bool>();
        if (!row.at("detection_latency").is_null())
            lat.detection_latency = row.at("detection_latency").get<double>();
        if (!row.at("switchover_latency").is_null())
            lat.switchover_latency = row.at("switchover_latency").get<double>();
        if (!row.at("restore_latency").is_null())
            lat.restore_latency = row.at("restore_latency").get<double>();
        report.latencies.push_back(std::move(lat));
    }
    for (const auto& p : j.at("speed_profile"))
        report.speed_profile.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    if (!j.at("anomaly").is_null()) {
        AnomalyStats stats;
        stats.median_score_inside = j.at("anomaly").at("median_score_inside").get<double>();
        stats.median_score_outside = j.at("anomaly").at("median_score_outside").get<double>();
        stats.samples_inside = j.at("anomaly").at("samples_inside").get<std::size_t>();
        stats.samples_outside = j.at("anomaly").at("samples_outside").get<std::size_t>();
        report.anomaly = stats;
    }
    for (const auto& v : j.at("safety").at("violations"))
        report.safety.violations.push_back({v.at("time").get<double>(),
                                            v.at("active_id").get<std::string>(),
                                            v.at("unresolved_event").get<std::string>()});
    return report;
}

}  // namespace

std::string rerender_report(const std::string& json_text, ReportFormat format) {
    ordered_json j;
    try {
        j = ordered_json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw error(std::string("report parse failure: ") + e.what());
    }
    if (!j.contains("type")) throw error("report JSON lacks a \"type\" field");
    const auto type = j.at("type").get<std::string>();
    try {
        if (type == "metrics") {
            const MetricsTable table = metrics_from_json(j);
            switch (format) {
                case ReportFormat::Json: return metrics_to_json(table);
                case ReportFormat::Csv: return metrics_to_csv(table);
                case ReportFormat::Markdown: return metrics_to_markdown(table);
            }
        } else if (type == "margin") {
            const MarginReport report = margin_from_json(j);
            switch (format) {
                case ReportFormat::Json: return margin_to_json(report);
                case ReportFormat::Csv: return margin_to_csv(report);
                case ReportFormat::Markdown: return margin_to_markdown(report);
            }
        } else if (type == "batch_result") {
            const BatchResult result = batch_from_json(j);
            switch (format) {
                case ReportFormat::Json: return batch_to_json(result);
                case ReportFormat::Csv: return batch_to_csv(result);
                case ReportFormat::Markdown: return batch_to_markdown(result);
            }
        } else if (type == "scenario_report") {
            const ScenarioReport report = scenario_report_from_json(j);
            switch (format) {
                case ReportFormat::Json: return report_to_json(report);
                case ReportFormat::Csv: return speed_profile_to_csv(report);
                case ReportFormat::Markdown: return scenario_to_markdown(report);
            }
        } else if (type == "threat_catalog") {
            throw error("use the threats command to re-render the catalog");
        }
    } catch (const nlohmann::json::exception& e) {
        throw error(std::string("report parse failure: ") + e.what());
    }
    throw error("unknown report type: " + type);
}

}  // namespace avr
