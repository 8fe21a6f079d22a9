// SPDX-License-Identifier: Apache-2.0
#include "avr/threats.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "avr/types.hpp"

namespace avr {

using ordered_json = nlohmann::ordered_json;

const std::vector<ThreatCatalogEntry>& threat_catalog() {
    static const std::vector<ThreatCatalogEntry> catalog = {
        {"Driver Interface and Control System",
         "Malicious driver input injection; compromised dashboard/override signals",
         "Unauthorized override of system behavior; driver confusion leading to unsafe maneuvers",
         "Authenticate commands, secure UI design, redundant safety checks for manual override",
         {}},
        {"Control Layer",
         "Command injection in steering/braking; kernel-level rootkits",
         "Silent manipulation of vehicle dynamics, risk of collisions",
         "Runtime integrity monitoring, secure boot, anomaly detection in actuation signals",
         {}},
        {"Decision-Making Layer",
         "Tampered ML models; adversarial inputs to planning module",
         "Unsafe maneuvers, rule violations, unsafe path selection",
         "Model validation, adversarial robustness testing, consensus-based decision redundancy",
         {}},
        {"Knowledge Processing Layer",
         "Data poisoning; sensor fusion manipulation",
         "Distorted environmental model, leading to misinformed decisions",
         "Trusted data provenance, anomaly detection in fused data, hash-based detection, "
         "back up and fall back",
         {"integrity-guard", "resilience-coordinator"}},
        {"Perception Layer",
         "Sensor spoofing (LiDAR, radar, camera); adversarial image perturbations",
         "Incorrect object detection, phantom obstacles, missed hazards",
         "Sensor redundancy, adversarial training, anomaly detection",
         {"telemetry", "anomaly-ids", "resilience-coordinator"}},
        {"Communication Framework",
         "V2V/V2I spoofing, replay, DoS, packet manipulation",
         "Loss of situational awareness, degraded coordination between vehicles",
         "Encryption, authentication protocols, rate limiting, intrusion detection systems",
         {}},
        {"Cross-Layer Coordinator",
         "Early-stage poisoning cascading through layers",
         "System-wide compromise, cascading unsafe behavior",
         "Cross-layer consistency checks, layered anomaly detection, resilient failover "
         "strategies",
         {}},
    };
    return catalog;
}

std::vector<std::string> threat_layers() {
    std::vector<std::string> names;
    for (const auto& entry : threat_catalog()) names.push_back(entry.layer);
    return names;
}

std::vector<ThreatCatalogEntry> threats_for_layer(const std::string& layer) {
    const auto layers = threat_layers();
    if (std::find(layers.begin(), layers.end(), layer) == layers.end())
        throw invalid_argument("unknown layer: " + layer);
    std::vector<ThreatCatalogEntry> out;
    for (const auto& entry : threat_catalog())
        if (entry.layer == layer) out.push_back(entry);
    return out;
}

std::string threats_to_json(const std::vector<ThreatCatalogEntry>& entries) {
    ordered_json j;
    j["type"] = "threat_catalog";
    ordered_json rows = ordered_json::array();
    for (const auto& e : entries) {
        rows.push_back({{"layer", e.layer},
                        {"attack_surface", e.attack_surface},
                        {"impact", e.impact},
                        {"mitigation", e.mitigation},
                        {"covered_by", e.covered_by}});
    }
    j["entries"] = std::move(rows);
    return j.dump(2) + "\n";
}

std::vector<ThreatCatalogEntry> threats_from_json(const std::string& json_text) {
    std::vector<ThreatCatalogEntry> out;
    const auto layers = threat_layers();
    try {
        const auto j = ordered_json::parse(json_text);
        for (const auto& row : j.at("entries")) {
            ThreatCatalogEntry e;
            e.layer = row.at("layer").get<std::string>();
            e.attack_surface = row.at("attack_surface").get<std::string>();
            e.impact = row.at("impact").get<std::string>();
            e.mitigation = row.at("mitigation").get<std::string>();
            e.covered_by = row.value("covered_by", std::vector<std::string>{});
            if (std::find(layers.begin(), layers.end(), e.layer) == layers.end())
                throw error("unknown layer in catalog: " + e.layer);
            out.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw error(std::string("threat catalog parse failure: ") + ex.what());
    }
    return out;
}

std::string threats_to_markdown(const std::vector<ThreatCatalogEntry>& entries) {
    std::string out =
        "| Layer | Attack Surface | Impact | Mitigation Strategy | Covered By |\n"
        "| --- | --- | --- | --- | --- |\n";
    for (const auto& e : entries) {
        std::string covered;
        for (std::size_t i = 0; i < e.covered_by.size(); ++i)
            covered += (i ? ", " : "") + e.covered_by[i];
        out += "| " + e.layer + " | " + e.attack_surface + " | " + e.impact + " | " +
               e.mitigation + " | " + covered + " |\n";
    }
    return out;
}

}  // namespace avr
