// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>
#include <string>

#include <avr/threats.hpp>
#include <avr/types.hpp>
#include <nlohmann/json.hpp>

using namespace avr;

TEST_CASE("the catalog names seven distinct layers in architecture order") {
    const auto& catalog = threat_catalog();
    REQUIRE(catalog.size() == 7);

    const auto layers = threat_layers();
    REQUIRE(layers.size() == 7);
    std::set<std::string> unique(layers.begin(), layers.end());
    CHECK(unique.size() == 7);
    for (std::size_t i = 0; i < 7; ++i) CHECK(catalog[i].layer == layers[i]);

    for (const auto& entry : catalog) {
        CHECK_FALSE(entry.attack_surface.empty());
        CHECK_FALSE(entry.impact.empty());
        CHECK_FALSE(entry.mitigation.empty());
    }
}

TEST_CASE("layer lookup is exact and rejects unknown names") {
    const auto perception = threats_for_layer("Perception Layer");
    REQUIRE(perception.size() == 1);
    CHECK(perception[0].layer == "Perception Layer");

    CHECK_THROWS_AS(threats_for_layer("perception layer"), invalid_argument);  // case matters
    CHECK_THROWS_AS(threats_for_layer("Imagination Layer"), invalid_argument);
    try {
        threats_for_layer("Imagination Layer");
    } catch (const invalid_argument& e) {
        CHECK(std::string(e.what()).find("unknown layer") != std::string::npos);
    }
}

TEST_CASE("implemented defenses are tagged on exactly the covered layers") {
    const auto& catalog = threat_catalog();
    std::size_t covered_rows = 0;
    for (const auto& entry : catalog) {
        if (entry.covered_by.empty()) continue;
        ++covered_rows;
        const bool perception = entry.layer == "Perception Layer";
        const bool knowledge = entry.layer.find("Knowledge") != std::string::npos;
        CHECK((perception || knowledge));
        auto has = [&entry](const char* module_name) {
            return std::find(entry.covered_by.begin(), entry.covered_by.end(), module_name) !=
                   entry.covered_by.end();
        };
        CHECK(has("resilience-coordinator"));
        if (perception) {
            CHECK(has("telemetry"));
            CHECK(has("anomaly-ids"));
        }
        if (knowledge) CHECK(has("integrity-guard"));
    }
    CHECK(covered_rows == 2);
}

TEST_CASE("json serialization round trips the whole catalog") {
    const auto& catalog = threat_catalog();
    const std::string json = threats_to_json(catalog);
    const auto parsed = nlohmann::json::parse(json);
    CHECK(parsed.at("type") == "threat_catalog");
    CHECK(parsed.at("entries").size() == 7);

    const auto back = threats_from_json(json);
    CHECK(back == catalog);

    // Serialization is deterministic.
    CHECK(threats_to_json(back) == json);
}

TEST_CASE("json loading validates layer names") {
    auto j = nlohmann::json::parse(threats_to_json(threat_catalog()));
    j["entries"][0]["layer"] = "Mystery Layer";
    CHECK_THROWS_AS(threats_from_json(j.dump()), avr::error);
}

TEST_CASE("markdown table lists one row per entry") {
    const std::string md = threats_to_markdown(threat_catalog());
    CHECK(md.find("| Layer | Attack Surface | Impact | Mitigation Strategy | Covered By |") !=
          std::string::npos);
    // Header + separator + 7 data rows.
    const std::size_t rows = static_cast<std::size_t>(std::count(md.begin(), md.end(), '\n'));
    CHECK(rows == 9);
    CHECK(md.find("Perception Layer") != std::string::npos);

    const std::string partial = threats_to_markdown(threats_for_layer("Perception Layer"));
    CHECK(std::count(partial.begin(), partial.end(), '\n') == 3);
}
