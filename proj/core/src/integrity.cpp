// SPDX-License-Identifier: Apache-2.0
#include "avr/integrity.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include <openssl/evp.h>
#include <nlohmann/json.hpp>

#include "avr/clock.hpp"

namespace avr {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string Digest::hex() const {
    static const char* kHex = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (unsigned char b : bytes) {
        out.push_back(kHex[b >> 4]);
        out.push_back(kHex[b & 0x0f]);
    }
    return out;
}

Digest Digest::from_hex(const std::string& hex) {
    if (hex.size() != 64) throw invalid_argument("digest hex must be 64 characters");
    auto nibble = [](char c) -> unsigned {
        if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
        if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
        if (c >= 'A' && c <= 'F') return static_cast<unsigned>(c - 'A' + 10);
        throw invalid_argument("digest hex contains a non-hex character");
    };
    Digest d;
    for (std::size_t i = 0; i < 32; ++i)
        d.bytes[i] = static_cast<unsigned char>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
    return d;
}

Digest digest_bytes(std::span<const unsigned char> data) {
    Digest d;
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr) throw error("digest context allocation failed");
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, data.data(), data.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, d.bytes.data(), &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok || len != d.bytes.size()) throw error("sha256 computation failed");
    return d;
}

Digest digest_string(const std::string& data) {
    return digest_bytes({reinterpret_cast<const unsigned char*>(data.data()), data.size()});
}

std::optional<Digest> digest_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr) throw error("digest context allocation failed");
    if (EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw error("sha256 init failed");
    }
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const std::streamsize got = in.gcount();
        if (got > 0 && EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(got)) != 1) {
            EVP_MD_CTX_free(ctx);
            throw error("sha256 update failed");
        }
    }
    if (in.bad()) {
        EVP_MD_CTX_free(ctx);
        return std::nullopt;
    }
    Digest d;
    unsigned int len = 0;
    const bool ok = EVP_DigestFinal_ex(ctx, d.bytes.data(), &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok || len != d.bytes.size()) throw error("sha256 finalization failed");
    return d;
}

const char* to_string(Criticality c) {
    return c == Criticality::SafetyCritical ? "safety_critical" : "standard";
}

Criticality criticality_from_string(const std::string& s) {
    if (s == "safety_critical") return Criticality::SafetyCritical;
    if (s == "standard") return Criticality::Standard;
    throw invalid_argument("unknown criticality: " + s);
}

fs::path ArtifactManifest::resolve(const ManifestEntry& entry) const {
    fs::path p(entry.path);
    return p.is_absolute() ? p : base_dir / p;
}

const ManifestEntry* ArtifactManifest::find(const std::string& artifact_id) const {
    for (const auto& e : entries)
        if (e.artifact_id == artifact_id) return &e;
    return nullptr;
}

void check_manifest(const ArtifactManifest& manifest) {
    if (manifest.algorithm != "sha256")
        throw invalid_argument("unsupported digest algorithm: " + manifest.algorithm);
    if (manifest.entries.empty()) throw invalid_argument("manifest has no entries");
    std::set<std::string> seen;
    for (const auto& e : manifest.entries) {
        if (e.artifact_id.empty()) throw invalid_argument("manifest entry with empty artifact_id");
        if (e.path.empty())
            throw invalid_argument("manifest entry " + e.artifact_id + " has an empty path");
        if (!seen.insert(e.artifact_id).second)
            throw invalid_argument("duplicate artifact_id: " + e.artifact_id);
    }
}

std::string manifest_to_json(const ArtifactManifest& manifest) {
    ordered_json j;
    j["algorithm"] = manifest.algorithm;
    ordered_json entries = ordered_json::array();
    for (const auto& e : manifest.entries)
        entries.push_back({{"artifact_id", e.artifact_id},
                           {"path", e.path},
                           {"criticality", to_string(e.criticality)}});
    j["entries"] = std::move(entries);
    return j.dump(2) + "\n";
}

ArtifactManifest manifest_from_json(const std::string& json_text) {
    ArtifactManifest m;
    try {
        const auto j = ordered_json::parse(json_text);
        m.algorithm = j.value("algorithm", std::string("sha256"));
        for (const auto& je : j.at("entries")) {
            ManifestEntry e;
            e.artifact_id = je.at("artifact_id").get<std::string>();
            e.path = je.at("path").get<std::string>();
            e.criticality = criticality_from_string(je.value("criticality", std::string("standard")));
            m.entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw error(std::string("manifest parse failure: ") + ex.what());
    }
    check_manifest(m);
    return m;
}

void save_manifest(const ArtifactManifest& manifest, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot open " + path.string() + " for writing");
    out << manifest_to_json(manifest);
}

ArtifactManifest load_manifest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("manifest file not found: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    ArtifactManifest m = manifest_from_json(ss.str());
    m.base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
    return m;
}

fs::path TrustedBaseline::resolve_backup(const BaselineEntry& entry) const {
    fs::path p(entry.backup_location);
    return p.is_absolute() ? p : base_dir / p;
}

const BaselineEntry* TrustedBaseline::find(const std::string& artifact_id) const {
    for (const auto& e : entries)
        if (e.artifact_id == artifact_id) return &e;
    return nullptr;
}

namespace {

std::string sanitize_backup_name(const std::string& artifact_id) {
    std::string out = artifact_id;
    for (char& c : out) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
        if (!ok) c = '_';
    }
    return out;
}

std::string utc_now_iso8601() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

std::vector<unsigned char> read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot read " + path.string());
    std::vector<unsigned char> bytes;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        bytes.insert(bytes.end(), buf, buf + in.gcount());
    }
    if (in.bad()) throw error("read failure on " + path.string());
    return bytes;
}

void write_file_bytes(const fs::path& path, std::span<const unsigned char> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw error("write failure on " + path.string());
}

// Checksum input: one line per entry plus the metadata, in serialized order.
std::string baseline_canonical_text(const TrustedBaseline& b) {
    std::string text = b.algorithm + "\n" + b.created_at + "\n";
    for (const auto& e : b.entries)
        text += e.artifact_id + "\t" + e.digest.hex() + "\t" + e.backup_location + "\n";
    return text;
}

}  // namespace

TrustedBaseline create_baseline(const ArtifactManifest& manifest, const fs::path& backup_dir,
                                const std::string& created_at) {
    check_manifest(manifest);
    const fs::path backup_root =
        backup_dir.is_absolute() ? backup_dir : manifest.base_dir / backup_dir;
    fs::create_directories(backup_root);

    TrustedBaseline baseline;
    baseline.algorithm = manifest.algorithm;
    baseline.created_at = created_at.empty() ? utc_now_iso8601() : created_at;
    baseline.base_dir = manifest.base_dir;

    std::set<std::string> backup_names;
    for (const auto& entry : manifest.entries) {
        const std::string name = sanitize_backup_name(entry.artifact_id);
        if (!backup_names.insert(name).second)
            throw error("backup name collision for artifact " + entry.artifact_id);

        const fs::path source = manifest.resolve(entry);
        std::vector<unsigned char> bytes;
        try {
            bytes = read_file_bytes(source);
        } catch (const error&) {
            throw error("artifact unreadable: " + entry.artifact_id + " (" + source.string() + ")");
        }
        const Digest digest = digest_bytes(bytes);

        const fs::path backup_path = backup_root / name;
        write_file_bytes(backup_path, bytes);
        const auto copied = digest_file(backup_path);
        if (!copied || !(*copied == digest))
            throw error("copy verification failed for artifact " + entry.artifact_id);

        BaselineEntry be;
        be.artifact_id = entry.artifact_id;
        be.digest = digest;
        be.backup_location = (backup_dir / name).generic_string();
        baseline.entries.push_back(std::move(be));
    }
    return baseline;
}

std::string baseline_to_json(const TrustedBaseline& baseline) {
    ordered_json j;
    j["algorithm"] = baseline.algorithm;
    j["created_at"] = baseline.created_at;
    ordered_json entries = ordered_json::array();
    for (const auto& e : baseline.entries)
        entries.push_back({{"artifact_id", e.artifact_id},
                           {"digest", e.digest.hex()},
                           {"backup_location", e.backup_location}});
    j["entries"] = std::move(entries);
    j["checksum"] = digest_string(baseline_canonical_text(baseline)).hex();
    return j.dump(2) + "\n";
}

TrustedBaseline baseline_from_json(const std::string& json_text) {
    TrustedBaseline b;
    std::string checksum;
    try {
        const auto j = ordered_json::parse(json_text);
        b.algorithm = j.at("algorithm").get<std::string>();
        b.created_at = j.at("created_at").get<std::string>();
        for (const auto& je : j.at("entries")) {
            BaselineEntry e;
            e.artifact_id = je.at("artifact_id").get<std::string>();
            e.digest = Digest::from_hex(je.at("digest").get<std::string>());
            e.backup_location = je.at("backup_location").get<std::string>();
            b.entries.push_back(std::move(e));
        }
        checksum = j.at("checksum").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
        throw error(std::string("baseline parse failure: ") + ex.what());
    }
    if (digest_string(baseline_canonical_text(b)).hex() != checksum)
        throw error("baseline checksum mismatch: file is corrupt or was edited");
    return b;
}

void save_baseline(const TrustedBaseline& baseline, const fs::path& path) {
    const fs::path file_dir =
        path.has_parent_path() ? fs::weakly_canonical(path.parent_path()) : fs::current_path();
    TrustedBaseline rewritten = baseline;
    for (auto& e : rewritten.entries) {
        const fs::path abs = fs::weakly_canonical(baseline.resolve_backup(e));
        e.backup_location = abs.lexically_proximate(file_dir).generic_string();
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot open " + path.string() + " for writing");
    out << baseline_to_json(rewritten);
}

TrustedBaseline load_baseline(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("baseline file not found: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    TrustedBaseline b = baseline_from_json(ss.str());
    b.base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
    return b;
}

namespace {

std::string fmt_time_6(double t) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", t);
    return buf;
}

}  // namespace

std::string validation_event_to_json(const ValidationEvent& event) {
    ordered_json j;
    j["time"] = ordered_json::parse(fmt_time_6(event.time));
    j["result"] = event.result == ValidationResult::Match ? "match" : "mismatch";
    j["mismatched"] = event.mismatched;
    ordered_json obs = ordered_json::array();
    for (const auto& o : event.observed)
        obs.push_back({{"artifact_id", o.artifact_id},
                       {"digest", o.digest_hex},
                       {"matched", o.matched}});
    j["observed"] = std::move(obs);
    return j.dump();
}

ValidationEvent validation_event_from_json(const std::string& json_text) {
    ValidationEvent ev;
    try {
        const auto j = ordered_json::parse(json_text);
        ev.time = j.at("time").get<double>();
        const auto result = j.at("result").get<std::string>();
        if (result == "match") ev.result = ValidationResult::Match;
        else if (result == "mismatch") ev.result = ValidationResult::Mismatch;
        else throw error("unknown validation result: " + result);
        ev.mismatched = j.at("mismatched").get<std::vector<std::string>>();
        for (const auto& jo : j.at("observed"))
            ev.observed.push_back({jo.at("artifact_id").get<std::string>(),
                                   jo.at("digest").get<std::string>(),
                                   jo.at("matched").get<bool>()});
    } catch (const nlohmann::json::exception& ex) {
        throw error(std::string("validation event parse failure: ") + ex.what());
    }
    return ev;
}

ValidationEvent validate_once(const ArtifactManifest& manifest, const TrustedBaseline& baseline,
                              double time, const std::vector<std::string>& artifact_ids) {
    check_manifest(manifest);
    std::vector<const ManifestEntry*> targets;
    if (artifact_ids.empty()) {
        for (const auto& e : manifest.entries) targets.push_back(&e);
    } else {
        for (const auto& id : artifact_ids) {
            const ManifestEntry* e = manifest.find(id);
            if (e == nullptr) throw invalid_argument("artifact not in manifest: " + id);
            targets.push_back(e);
        }
    }
    for (const ManifestEntry* e : targets)
        if (baseline.find(e->artifact_id) == nullptr)
            throw invalid_argument("baseline missing artifact: " + e->artifact_id);

    ValidationEvent ev;
    ev.time = time;
    for (const ManifestEntry* e : targets) {
        const BaselineEntry* be = baseline.find(e->artifact_id);
        const auto current = digest_file(manifest.resolve(*e));
        ObservedDigest obs;
        obs.artifact_id = e->artifact_id;
        if (current) {
            obs.digest_hex = current->hex();
            obs.matched = *current == be->digest;
        } else {
            obs.matched = false;  // unreadable is untrusted
        }
        if (!obs.matched) ev.mismatched.push_back(e->artifact_id);
        ev.observed.push_back(std::move(obs));
    }
    ev.result = ev.mismatched.empty() ? ValidationResult::Match : ValidationResult::Mismatch;
    return ev;
}

RestoreOutcome restore(const ArtifactManifest& manifest, const TrustedBaseline& baseline,
                       const std::vector<std::string>& artifact_ids, Clock* clock) {
    if (artifact_ids.empty()) throw invalid_argument("restore called with no artifacts");
    const double start = clock ? clock->now() : 0.0;

    struct Pending {
        const ManifestEntry* entry;
        std::vector<unsigned char> bytes;
    };
    std::vector<Pending> pending;
    std::vector<std::string> bad;
    for (const auto& id : artifact_ids) {
        const ManifestEntry* me = manifest.find(id);
        if (me == nullptr) throw invalid_argument("artifact not in manifest: " + id);
        const BaselineEntry* be = baseline.find(id);
        if (be == nullptr) throw invalid_argument("artifact not in baseline: " + id);
        const fs::path backup = baseline.resolve_backup(*be);
        std::vector<unsigned char> bytes;
        try {
            bytes = read_file_bytes(backup);
        } catch (const error&) {
            bad.push_back(id);
            continue;
        }
        if (!(digest_bytes(bytes) == be->digest)) {
            bad.push_back(id);
            continue;
        }
        pending.push_back({me, std::move(bytes)});
    }
    if (!bad.empty()) {
        std::string what = "restore refused, backup missing or corrupt for:";
        for (const auto& id : bad) what += " " + id;
        throw restore_refused(what, std::move(bad));
    }

    RestoreOutcome outcome;
    for (auto& p : pending) {
        write_file_bytes(manifest.resolve(*p.entry), p.bytes);
        outcome.restored.push_back(p.entry->artifact_id);
    }
    outcome.duration_s = clock ? clock->now() - start : 0.0;
    return outcome;
}

}  // namespace avr
