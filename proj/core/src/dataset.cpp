// SPDX-License-Identifier: Apache-2.0
#include "avr/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "avr/features.hpp"
#include "avr/rng.hpp"
#include "avr/telemetry.hpp"

namespace avr {

std::size_t LabeledDataset::count(Label l) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l));
}

LabeledDataset LabeledDataset::select(std::span<const std::size_t> indices) const {
    LabeledDataset out;
    out.feature_names = feature_names;
    out.features = FeatureMatrix(indices.size(), features.cols());
    out.labels.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto src = features.row(indices[r]);
        std::copy(src.begin(), src.end(), out.features.row(r).begin());
        out.labels.push_back(labels[indices[r]]);
    }
    return out;
}

SchemaMap SchemaMap::from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw error(std::string("schema map parse failure: ") + e.what());
    }
    SchemaMap m;
    if (!j.contains("features") || !j["features"].is_array())
        throw error("schema map needs a \"features\" array of [name, column] pairs");
    for (const auto& entry : j["features"]) {
        if (entry.is_array() && entry.size() == 2)
            m.features.emplace_back(entry[0].get<std::string>(), entry[1].get<std::string>());
        else if (entry.is_object())
            m.features.emplace_back(entry.at("name").get<std::string>(),
                                    entry.at("column").get<std::string>());
        else
            throw error("schema map feature entries must be [name, column] pairs");
    }
    if (m.features.empty()) throw error("schema map has no features");
    m.label_column = j.at("label_column").get<std::string>();
    if (j.contains("delimiter")) {
        const auto d = j["delimiter"].get<std::string>();
        if (d.size() != 1) throw error("delimiter must be a single character");
        m.delimiter = d[0];
    }
    return m;
}

SchemaMap SchemaMap::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open schema map " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, delim)) cells.push_back(cell);
    if (!line.empty() && line.back() == delim) cells.emplace_back();
    return cells;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool parse_cell(const std::string& raw, double& out) {
    const std::string v = trim(raw);
    if (v.empty()) return false;
    try {
        std::size_t pos = 0;
        out = std::stod(v, &pos);
        if (pos != v.size()) return false;
    } catch (...) {
        return false;
    }
    return std::isfinite(out);
}

bool parse_label(const std::string& raw, Label& out) {
    const std::string v = lower(trim(raw));
    if (v == "normal" || v == "0" || v == "false") {
        out = Label::Normal;
        return true;
    }
    if (v == "abnormal" || v == "attack" || v == "1" || v == "true") {
        out = Label::Abnormal;
        return true;
    }
    double num;
    if (parse_cell(v, num)) {
        out = num != 0.0 ? Label::Abnormal : Label::Normal;
        return true;
    }
    return false;
}

}  // namespace

LoadResult load_avp_dataset(const std::filesystem::path& path, const SchemaMap& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("dataset file not found: " + path.string());

    std::string header_line;
    if (!std::getline(in, header_line)) throw error("zero usable rows in " + path.string());
    if (!header_line.empty() && header_line.back() == '\r') header_line.pop_back();

    const auto header = split_line(header_line, schema.delimiter);
    auto column_of = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (trim(header[i]) == name) return i;
        throw error("mapped column \"" + name + "\" not found in " + path.string());
    };

    std::vector<std::size_t> feature_cols;
    LoadResult result;
    for (const auto& [feat, col] : schema.features) {
        feature_cols.push_back(column_of(col));
        result.dataset.feature_names.push_back(feat);
    }
    const std::size_t label_col = column_of(schema.label_column);

    result.dataset.features = FeatureMatrix(0, 0);
    std::vector<double> row(schema.features.size());
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto cells = split_line(line, schema.delimiter);
        bool usable = true;
        for (std::size_t f = 0; f < feature_cols.size() && usable; ++f) {
            usable = feature_cols[f] < cells.size() && parse_cell(cells[feature_cols[f]], row[f]);
        }
        Label lab = Label::Normal;
        usable = usable && label_col < cells.size() && parse_label(cells[label_col], lab);
        if (!usable) {
            ++result.rows_dropped;
            continue;
        }
        result.dataset.features.append_row(row);
        result.dataset.labels.push_back(lab);
        (lab == Label::Normal ? result.n_normal : result.n_abnormal)++;
    }

    if (result.dataset.labels.empty()) throw error("zero usable rows in " + path.string());
    return result;
}

std::vector<std::size_t> FoldAssignment::indices_of(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_index_per_sample.size(); ++i)
        if (fold_index_per_sample[i] == fold) out.push_back(i);
    return out;
}

std::vector<std::size_t> FoldAssignment::indices_not_of(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_index_per_sample.size(); ++i)
        if (fold_index_per_sample[i] != fold) out.push_back(i);
    return out;
}

FoldAssignment split_stratified(const LabeledDataset& dataset, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw invalid_argument("k must be >= 2");
    std::vector<std::size_t> per_class[2];
    for (std::size_t i = 0; i < dataset.labels.size(); ++i)
        per_class[dataset.labels[i] == Label::Abnormal ? 1 : 0].push_back(i);
    for (int c = 0; c < 2; ++c) {
        if (!per_class[c].empty() && per_class[c].size() < k)
            throw invalid_argument(std::string("class ") + (c ? "abnormal" : "normal") +
                                   " has fewer than k samples");
    }

    FoldAssignment fa;
    fa.k = k;
    fa.fold_index_per_sample.assign(dataset.labels.size(), 0);
    Rng rng(seed);
    for (int c = 0; c < 2; ++c) {
        auto& idx = per_class[c];
        Rng cls = rng.fork(static_cast<std::uint64_t>(c));
        cls.shuffle(idx);
        // Deal shuffled members round-robin; fold sizes differ by at most one.
        for (std::size_t i = 0; i < idx.size(); ++i) fa.fold_index_per_sample[idx[i]] = i % k;
    }
    return fa;
}

LabeledDataset make_blinding_dataset(std::size_t n_samples, std::uint64_t seed,
                                     double nominal_speed) {
    if (n_samples == 0) throw invalid_argument("n_samples must be > 0");
    // Traces of 40 s at 10 Hz with two attack windows covering half the trace.
    const double duration = 40.0;
    const double rate = 10.0;
    const auto per_trace = static_cast<std::size_t>(duration * rate);
    const std::size_t n_traces = (n_samples + per_trace - 1) / per_trace;

    Rng rng(seed);
    LabeledDataset out;
    out.feature_names = feature_names();
    for (std::size_t t = 0; t < n_traces; ++t) {
        Rng tr = rng.fork(t);
        TraceConfig cfg;
        cfg.duration = duration;
        cfg.sample_rate = rate;
        cfg.nominal_speed = nominal_speed;
        // Two windows of 10 s each, jittered, non-overlapping.
        const double a = tr.uniform(2.0, 6.0);
        const double b = tr.uniform(22.0, 26.0);
        cfg.attack_windows = {{a, a + 10.0}, {b, b + 10.0}};
        const auto ds = extract_features(generate_trace(cfg, tr.next_u64()));
        for (std::size_t i = 0; i < ds.size() && out.size() < n_samples; ++i) {
            out.features.append_row(ds.features.row(i));
            out.labels.push_back(ds.labels[i]);
        }
    }
    return out;
}

}  // namespace avr
