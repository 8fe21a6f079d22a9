// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avr/types.hpp"

namespace avr {

struct Digest {
    std::array<unsigned char, 32> bytes{};

    std::string hex() const;
    static Digest from_hex(const std::string& hex);
    bool operator==(const Digest&) const = default;
};

// SHA-256 of the exact byte sequence.
Digest digest_bytes(std::span<const unsigned char> data);
Digest digest_string(const std::string& data);
// Empty optional when the file cannot be read; callers treat that as untrusted.
std::optional<Digest> digest_file(const std::filesystem::path& path);

enum class Criticality : unsigned char { SafetyCritical, Standard };
const char* to_string(Criticality c);
Criticality criticality_from_string(const std::string& s);

struct ManifestEntry {
    std::string artifact_id;
    std::string path;  // resolved against ArtifactManifest::base_dir when relative
    Criticality criticality = Criticality::Standard;
};

struct ArtifactManifest {
    std::string algorithm = "sha256";
    std::vector<ManifestEntry> entries;
    std::filesystem::path base_dir = ".";  // not serialized; set by load_manifest

    std::filesystem::path resolve(const ManifestEntry& entry) const;
    const ManifestEntry* find(const std::string& artifact_id) const;
};

// Throws on duplicate ids, empty ids/paths, or an unsupported algorithm.
void check_manifest(const ArtifactManifest& manifest);

std::string manifest_to_json(const ArtifactManifest& manifest);
ArtifactManifest manifest_from_json(const std::string& json_text);
void save_manifest(const ArtifactManifest& manifest, const std::filesystem::path& path);
ArtifactManifest load_manifest(const std::filesystem::path& path);

struct BaselineEntry {
    std::string artifact_id;
    Digest digest;
    std::string backup_location;  // resolved against TrustedBaseline::base_dir when relative
};

struct TrustedBaseline {
    std::string algorithm = "sha256";
    std::string created_at;  // ISO-8601 UTC
    std::vector<BaselineEntry> entries;
    std::filesystem::path base_dir = ".";  // not serialized; set by load_baseline

    std::filesystem::path resolve_backup(const BaselineEntry& entry) const;
    const BaselineEntry* find(const std::string& artifact_id) const;
};

// Digests every manifest artifact and places verified byte-exact copies in
// backup_dir. An empty created_at means "now" (UTC); pass a fixed value for
// reproducible baseline files.
TrustedBaseline create_baseline(const ArtifactManifest& manifest,
                                const std::filesystem::path& backup_dir,
                                const std::string& created_at = "");

// The serialized form carries a checksum over its own entries; loading
// verifies it. Backup paths are stored relative to the baseline file.
std::string baseline_to_json(const TrustedBaseline& baseline);
TrustedBaseline baseline_from_json(const std::string& json_text);
void save_baseline(const TrustedBaseline& baseline, const std::filesystem::path& path);
TrustedBaseline load_baseline(const std::filesystem::path& path);

struct ObservedDigest {
    std::string artifact_id;
    std::string digest_hex;  // empty when the artifact was unreadable
    bool matched = false;
};

enum class ValidationResult : unsigned char { Match, Mismatch };

struct ValidationEvent {
    double time = 0.0;
    ValidationResult result = ValidationResult::Match;
    std::vector<std::string> mismatched;  // non-empty iff result == Mismatch
    std::vector<ObservedDigest> observed;
};

std::string validation_event_to_json(const ValidationEvent& event);
ValidationEvent validation_event_from_json(const std::string& json_text);

// Validates the named artifacts (all manifest entries when `artifact_ids` is
// empty) against the baseline. Unreadable artifacts count as mismatched.
ValidationEvent validate_once(const ArtifactManifest& manifest, const TrustedBaseline& baseline,
                              double time = 0.0,
                              const std::vector<std::string>& artifact_ids = {});

struct RestoreOutcome {
    std::vector<std::string> restored;
    double duration_s = 0.0;
};

// Raised when any requested backup is missing or fails digest verification;
// no artifact is written in that case.
class restore_refused : public error {
public:
    restore_refused(const std::string& what, std::vector<std::string> artifact_ids)
        : error(what), artifacts(std::move(artifact_ids)) {}
    std::vector<std::string> artifacts;
};

class Clock;

// Copies verified backup bytes over the named artifacts. Every backup is
// checked before the first write. Duration is measured on `clock` when given.
RestoreOutcome restore(const ArtifactManifest& manifest, const TrustedBaseline& baseline,
                       const std::vector<std::string>& artifact_ids, Clock* clock = nullptr);

}  // namespace avr
