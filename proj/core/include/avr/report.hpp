// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "avr/evaluation.hpp"
#include "avr/scenario.hpp"

namespace avr {

enum class ReportFormat { Json, Csv, Markdown };

const char* to_string(ReportFormat f);
ReportFormat report_format_from_string(const std::string& s);

/// Per-model metrics, one column per model, in insertion order.
struct MetricsTable {
    std::vector<std::pair<std::string, MeanMetrics>> columns;
};

// All serializers are pure functions of their input: identical inputs give
// byte-identical output. Empty inputs render headers only.
std::string metrics_to_json(const MetricsTable& table);
std::string metrics_to_csv(const MetricsTable& table);
std::string metrics_to_markdown(const MetricsTable& table);

std::string margin_to_json(const MarginReport& report);
std::string margin_to_csv(const MarginReport& report);
std::string margin_to_markdown(const MarginReport& report);

std::string batch_to_markdown(const BatchResult& result);
std::string scenario_to_markdown(const ScenarioReport& report);

// Re-renders a previously written JSON report (any "type" produced by this
// library) in the requested format.
std::string rerender_report(const std::string& json_text, ReportFormat format);

}  // namespace avr
