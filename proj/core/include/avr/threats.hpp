// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace avr {

/**
 * One row of the layer threat model: which architecture layer is attacked,
 * how, what breaks, and what defends it. `covered_by` lists the modules in
 * this codebase that implement a defense for the row; most rows are out of
 * scope here and carry an empty list, which keeps the implemented coverage
 * machine-auditable.
 */
struct ThreatCatalogEntry {
    std::string layer;
    std::string attack_surface;
    std::string impact;
    std::string mitigation;
    std::vector<std::string> covered_by;

    bool operator==(const ThreatCatalogEntry&) const = default;
};

/// The fixed seven-layer catalog, in architecture order (driver interface
/// down to the cross-layer coordinator).
const std::vector<ThreatCatalogEntry>& threat_catalog();

/// The seven valid layer names, in catalog order.
std::vector<std::string> threat_layers();

/// Entries whose layer matches exactly. Unknown layer names are an error so
/// that typos cannot silently produce an empty result.
std::vector<ThreatCatalogEntry> threats_for_layer(const std::string& layer);

std::string threats_to_json(const std::vector<ThreatCatalogEntry>& entries);
std::vector<ThreatCatalogEntry> threats_from_json(const std::string& json_text);
std::string threats_to_markdown(const std::vector<ThreatCatalogEntry>& entries);

}  // namespace avr
