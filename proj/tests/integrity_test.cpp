// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include <avr/clock.hpp>
#include <avr/integrity.hpp>
#include <avr/rng.hpp>

#include "testutil.hpp"

using namespace avr;

namespace {

struct Store {
    avrtest::TempDir dir;
    ArtifactManifest manifest;
    TrustedBaseline baseline;

    Store() {
        avrtest::write_file(dir / "store/model.bin", blob(4096, 0x11));
        avrtest::write_file(dir / "store/config.json", "{\"threshold\": 0.45}\n");
        avrtest::write_file(dir / "store/classes.txt", "normal\nabnormal\n");

        manifest.base_dir = dir.path();
        manifest.entries.push_back({"model", "store/model.bin", Criticality::SafetyCritical});
        manifest.entries.push_back({"config", "store/config.json", Criticality::SafetyCritical});
        manifest.entries.push_back({"classes", "store/classes.txt", Criticality::Standard});
        check_manifest(manifest);

        baseline = create_baseline(manifest, "backups", "1970-01-01T00:00:00Z");
    }

    static std::string blob(std::size_t n, std::uint64_t seed) {
        Rng rng(seed);
        std::string out(n, '\0');
        for (auto& c : out) c = static_cast<char>(rng.below(256));
        return out;
    }

    std::filesystem::path file(const std::string& rel) const { return dir / rel; }
};

}  // namespace

TEST_CASE("sha-256 matches the published test vectors") {
    CHECK(digest_string("").hex() ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(digest_string("abc").hex() ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(digest_string("The quick brown fox jumps over the lazy dog").hex() ==
          "d7a8fbb307d7809469ca9abcb0082e4f8d5651e46d3cdb762d02d0bf37c9e592");
}

TEST_CASE("digest helpers agree and hex round trips") {
    const std::string content = "payload bytes";
    const Digest d = digest_string(content);
    const std::vector<unsigned char> raw(content.begin(), content.end());
    CHECK(digest_bytes(raw) == d);
    CHECK(Digest::from_hex(d.hex()) == d);
    CHECK_THROWS_AS(Digest::from_hex("zz"), avr::error);
    CHECK_THROWS_AS(Digest::from_hex(d.hex() + "00"), avr::error);

    avrtest::TempDir dir;
    avrtest::write_file(dir / "f.bin", content);
    const auto from_file = digest_file(dir / "f.bin");
    REQUIRE(from_file.has_value());
    CHECK(*from_file == d);
}

TEST_CASE("unreadable paths yield no digest") {
    avrtest::TempDir dir;
    CHECK_FALSE(digest_file(dir / "absent.bin").has_value());
    // A directory is not a readable byte stream either.
    CHECK_FALSE(digest_file(dir.path()).has_value());
}

TEST_CASE("every single-bit flip changes the digest") {
    Rng rng(1234);
    std::vector<unsigned char> buf(256);
    for (auto& b : buf) b = static_cast<unsigned char>(rng.below(256));
    const Digest original = digest_bytes(buf);

    for (int i = 0; i < 1000; ++i) {
        const std::size_t bit = static_cast<std::size_t>(rng.below(buf.size() * 8));
        std::vector<unsigned char> flipped = buf;
        flipped[bit / 8] ^= static_cast<unsigned char>(1u << (bit % 8));
        CHECK_FALSE(digest_bytes(flipped) == original);
        // Flipping the same bit back restores the digest.
        flipped[bit / 8] ^= static_cast<unsigned char>(1u << (bit % 8));
        CHECK(digest_bytes(flipped) == original);
    }
}

TEST_CASE("baseline creation copies verified backups") {
    Store s;
    CHECK(s.baseline.entries.size() == 3);
    CHECK(s.baseline.created_at == "1970-01-01T00:00:00Z");
    for (const auto& entry : s.baseline.entries) {
        const auto backup = s.baseline.resolve_backup(entry);
        REQUIRE(std::filesystem::exists(backup));
        const auto manifest_entry = s.manifest.find(entry.artifact_id);
        REQUIRE(manifest_entry != nullptr);
        CHECK(avrtest::read_file(backup) == avrtest::read_file(s.manifest.resolve(*manifest_entry)));
        const auto digest = digest_file(backup);
        REQUIRE(digest.has_value());
        CHECK(*digest == entry.digest);
    }
}

TEST_CASE("validation matches a clean store and names tampered artifacts") {
    Store s;
    ValidationEvent clean = validate_once(s.manifest, s.baseline, 1.0);
    CHECK(clean.result == ValidationResult::Match);
    CHECK(clean.mismatched.empty());
    CHECK(clean.observed.size() == 3);
    for (const auto& obs : clean.observed) CHECK(obs.matched);

    avrtest::write_file(s.file("store/config.json"), "{\"threshold\": 0.99}\n");
    const ValidationEvent bad = validate_once(s.manifest, s.baseline, 2.0);
    CHECK(bad.result == ValidationResult::Mismatch);
    CHECK(bad.mismatched == std::vector<std::string>{"config"});

    // Partial validation of an untouched artifact still matches.
    const ValidationEvent partial = validate_once(s.manifest, s.baseline, 3.0, {"model"});
    CHECK(partial.result == ValidationResult::Match);
    CHECK(partial.observed.size() == 1);

    // Restore puts the trusted bytes back.
    const RestoreOutcome outcome = restore(s.manifest, s.baseline, {"config"});
    CHECK(outcome.restored == std::vector<std::string>{"config"});
    CHECK(avrtest::read_file(s.file("store/config.json")) == "{\"threshold\": 0.45}\n");
    CHECK(validate_once(s.manifest, s.baseline, 4.0).result == ValidationResult::Match);
}

TEST_CASE("a deleted artifact fails closed") {
    Store s;
    std::filesystem::remove(s.file("store/model.bin"));
    const ValidationEvent e = validate_once(s.manifest, s.baseline, 1.0);
    CHECK(e.result == ValidationResult::Mismatch);
    CHECK(e.mismatched == std::vector<std::string>{"model"});
    for (const auto& obs : e.observed) {
        if (obs.artifact_id == "model") {
            CHECK_FALSE(obs.matched);
            CHECK(obs.digest_hex.empty());  // unreadable, no digest to report
        }
    }
    // The backup brings it back.
    restore(s.manifest, s.baseline, {"model"});
    CHECK(validate_once(s.manifest, s.baseline, 2.0).result == ValidationResult::Match);
}

TEST_CASE("validate of an unknown artifact id is a usage error") {
    Store s;
    CHECK_THROWS_AS(validate_once(s.manifest, s.baseline, 0.0, {"nonesuch"}), invalid_argument);
}

TEST_CASE("restore refuses everything when any backup is corrupt") {
    Store s;
    // Tamper two artifacts, then corrupt one of their backups.
    avrtest::write_file(s.file("store/model.bin"), "tampered model");
    avrtest::write_file(s.file("store/config.json"), "tampered config");
    const auto* model_entry = s.baseline.find("model");
    REQUIRE(model_entry != nullptr);
    avrtest::write_file(s.baseline.resolve_backup(*model_entry), "corrupt backup");

    bool refused = false;
    try {
        restore(s.manifest, s.baseline, {"model", "config"});
    } catch (const restore_refused& e) {
        refused = true;
        CHECK(std::find(e.artifacts.begin(), e.artifacts.end(), "model") != e.artifacts.end());
    }
    CHECK(refused);
    // No partial writes: the artifact with the good backup is still tampered.
    CHECK(avrtest::read_file(s.file("store/config.json")) == "tampered config");
    CHECK(avrtest::read_file(s.file("store/model.bin")) == "tampered model");

    // Restoring only the artifact with the intact backup works.
    restore(s.manifest, s.baseline, {"config"});
    CHECK(avrtest::read_file(s.file("store/config.json")) == "{\"threshold\": 0.45}\n");
}

TEST_CASE("restore refuses a missing backup") {
    Store s;
    const auto* entry = s.baseline.find("classes");
    REQUIRE(entry != nullptr);
    std::filesystem::remove(s.baseline.resolve_backup(*entry));
    CHECK_THROWS_AS(restore(s.manifest, s.baseline, {"classes"}), restore_refused);
}

TEST_CASE("restore on a virtual clock reports zero duration") {
    Store s;
    avrtest::write_file(s.file("store/classes.txt"), "tampered");
    VirtualClock clock(10.0);
    const RestoreOutcome outcome = restore(s.manifest, s.baseline, {"classes"}, &clock);
    CHECK(outcome.duration_s == 0.0);  // virtual time does not advance by itself
    CHECK(outcome.restored.size() == 1);
}

TEST_CASE("manifest json round trip and validation") {
    Store s;
    const std::string json = manifest_to_json(s.manifest);
    const ArtifactManifest back = manifest_from_json(json);
    REQUIRE(back.entries.size() == 3);
    CHECK(back.algorithm == "sha256");
    CHECK(back.entries[0].artifact_id == "model");
    CHECK(back.entries[0].criticality == Criticality::SafetyCritical);
    CHECK(back.entries[2].criticality == Criticality::Standard);

    ArtifactManifest dup = s.manifest;
    dup.entries.push_back({"model", "store/other.bin", Criticality::Standard});
    CHECK_THROWS_AS(check_manifest(dup), invalid_argument);

    ArtifactManifest bad_algo = s.manifest;
    bad_algo.algorithm = "md5";
    CHECK_THROWS_AS(check_manifest(bad_algo), invalid_argument);

    ArtifactManifest empty_id = s.manifest;
    empty_id.entries[0].artifact_id.clear();
    CHECK_THROWS_AS(check_manifest(empty_id), invalid_argument);
}

TEST_CASE("baseline file round trip keeps digests and relative backups") {
    Store s;
    save_baseline(s.baseline, s.file("baseline.json"));
    const TrustedBaseline loaded = load_baseline(s.file("baseline.json"));
    REQUIRE(loaded.entries.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(loaded.entries[i].artifact_id == s.baseline.entries[i].artifact_id);
        CHECK(loaded.entries[i].digest == s.baseline.entries[i].digest);
        CHECK(std::filesystem::exists(loaded.resolve_backup(loaded.entries[i])));
    }
    // The reloaded baseline validates the same store.
    CHECK(validate_once(s.manifest, loaded, 0.0).result == ValidationResult::Match);
}

TEST_CASE("a tampered baseline file fails its own checksum") {
    Store s;
    save_baseline(s.baseline, s.file("baseline.json"));
    std::string text = avrtest::read_file(s.file("baseline.json"));
    // Swap one hex digit inside the first digest found.
    const std::size_t pos = text.find(s.baseline.entries[0].digest.hex());
    REQUIRE(pos != std::string::npos);
    text[pos] = text[pos] == 'f' ? '0' : 'f';
    avrtest::write_file(s.file("baseline.json"), text);
    CHECK_THROWS_AS(load_baseline(s.file("baseline.json")), avr::error);
}

TEST_CASE("validation event json round trip") {
    Store s;
    avrtest::write_file(s.file("store/model.bin"), "bad");
    const ValidationEvent e = validate_once(s.manifest, s.baseline, 12.5);
    const ValidationEvent back = validation_event_from_json(validation_event_to_json(e));
    CHECK(back.time == e.time);
    CHECK(back.result == e.result);
    CHECK(back.mismatched == e.mismatched);
    REQUIRE(back.observed.size() == e.observed.size());
    for (std::size_t i = 0; i < e.observed.size(); ++i) {
        CHECK(back.observed[i].artifact_id == e.observed[i].artifact_id);
        CHECK(back.observed[i].digest_hex == e.observed[i].digest_hex);
        CHECK(back.observed[i].matched == e.observed[i].matched);
    }
}
