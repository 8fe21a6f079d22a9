// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <avr/scenario.hpp>

#include "testutil.hpp"

using namespace avr;

namespace {

Scenario quiet_scenario() {
    Scenario sc;
    sc.name = "quiet";
    sc.seed = 3;
    sc.duration = 5.0;
    sc.sample_rate = 10.0;
    sc.detector.enabled = false;
    return sc;
}

Scenario tamper_scenario() {
    Scenario sc;
    sc.name = "tamper";
    sc.seed = 3;
    sc.duration = 8.0;
    sc.sample_rate = 10.0;
    sc.detector.enabled = false;
    sc.tampers.push_back({"perception-model", 3.0, "flip_bytes"});
    return sc;
}

const TimelineEvent* first_event(const ScenarioReport& report, const std::string& kind) {
    for (const auto& e : report.timeline)
        if (e.kind == kind) return &e;
    return nullptr;
}

double speed_at(const ScenarioReport& report, double t) {
    for (const auto& [time, speed] : report.speed_profile)
        if (std::abs(time - t) < 1e-6) return speed;
    REQUIRE_MESSAGE(false, "no profile point at the requested time");
    return 0.0;
}

}  // namespace

TEST_CASE("scenario validation rejects malformed setups") {
    Scenario sc = quiet_scenario();
    sc.duration = 0.0;
    CHECK_THROWS_AS(check_scenario(sc), invalid_argument);

    sc = quiet_scenario();
    sc.sample_rate = -1.0;
    CHECK_THROWS_AS(check_scenario(sc), invalid_argument);

    sc = quiet_scenario();
    sc.tampers.push_back({"ghost-artifact", 1.0, "flip_bytes"});
    CHECK_THROWS_AS(check_scenario(sc), invalid_argument);

    sc = quiet_scenario();
    sc.tampers.push_back({"perception-model", 99.0, "flip_bytes"});
    CHECK_THROWS_AS(check_scenario(sc), invalid_argument);

    sc = quiet_scenario();
    sc.tampers.push_back({"perception-model", 1.0, "reformat"});
    CHECK_THROWS_AS(check_scenario(sc), invalid_argument);

    sc = quiet_scenario();
    sc.blinding.push_back({4.0, 2.0});  // empty window
    CHECK_THROWS_AS(check_scenario(sc), invalid_argument);

    sc = quiet_scenario();
    sc.blinding.push_back({1.0, 9.0});  // beyond duration
    CHECK_THROWS_AS(check_scenario(sc), invalid_argument);

    sc = quiet_scenario();
    sc.vehicle.stop_sign_time = 99.0;
    CHECK_THROWS_AS(check_scenario(sc), invalid_argument);

    sc = quiet_scenario();
    sc.coordinator.debounce = 0;
    CHECK_THROWS_AS(check_scenario(sc), invalid_argument);

    sc = quiet_scenario();
    sc.restore_duration_s = -0.1;
    CHECK_THROWS_AS(check_scenario(sc), invalid_argument);

    // Wall-clock runs are for integrity scheduling; the detector needs the
    // virtual clock.
    sc = quiet_scenario();
    sc.clock = ClockMode::Wall;
    sc.detector.enabled = true;
    sc.detector.train_samples = 400;
    CHECK_THROWS_AS(check_scenario(sc), invalid_argument);
}

TEST_CASE("scenario json round trip is stable") {
    Scenario sc;
    sc.name = "full";
    sc.seed = 21;
    sc.vehicle.nominal_speed = 0.75;
    sc.vehicle.stop_sign_time = 20.0;
    sc.duration = 30.0;
    sc.blinding.push_back({10.0, 15.0});
    sc.tampers.push_back({"detection-config", 12.0, "rewrite_threshold"});
    sc.schedule = SchedulePolicy::staggered(1.0, {0.0, 0.3, 0.6});
    sc.detector.enabled = true;
    sc.detector.kind = DetectorKind::LogisticRegression;
    sc.detector.threshold = 0.45;
    sc.detector.train_samples = 500;
    sc.coordinator.debounce = 2;

    const std::string json = scenario_to_json(sc);
    const Scenario back = scenario_from_json(json);
    CHECK(scenario_to_json(back) == json);
    CHECK(back.name == sc.name);
    CHECK(back.vehicle.stop_sign_time == 20.0);
    CHECK(back.blinding.size() == 1);
    CHECK(back.tampers.size() == 1);
    CHECK(back.tampers[0].mutation == "rewrite_threshold");
    CHECK(back.schedule.mode == ScheduleMode::Staggered);
    CHECK(back.schedule.offsets == std::vector<double>{0.0, 0.3, 0.6});
    CHECK(back.detector.kind == DetectorKind::LogisticRegression);
    CHECK(back.coordinator.debounce == 2);

    Scenario event_driven = quiet_scenario();
    event_driven.schedule = SchedulePolicy::event_driven({Trigger::OnUpdate, Trigger::OnCheckpoint});
    event_driven.checkpoints = {2.0, 4.0};
    event_driven.clock = ClockMode::Wall;
    const std::string json2 = scenario_to_json(event_driven);
    const Scenario back2 = scenario_from_json(json2);
    CHECK(scenario_to_json(back2) == json2);
    CHECK(back2.schedule.mode == ScheduleMode::EventDriven);
    CHECK(back2.schedule.triggers == std::set<Trigger>{Trigger::OnUpdate, Trigger::OnCheckpoint});
    CHECK(back2.checkpoints == std::vector<double>{2.0, 4.0});
    CHECK(back2.clock == ClockMode::Wall);

    avrtest::TempDir dir;
    save_scenario(sc, dir / "scenario.json");
    const Scenario loaded = load_scenario(dir / "scenario.json");
    CHECK(scenario_to_json(loaded) == json);
}

TEST_CASE("a quiet run cruises with nothing to report") {
    avrtest::TempDir work;
    const ScenarioReport report = run_scenario(quiet_scenario(), work.path());

    CHECK(report.timeline.empty());
    CHECK(report.latencies.empty());
    CHECK(report.final_mode == CoordinatorMode::NormalOp);
    CHECK(report.safety.ok());
    CHECK_FALSE(report.stop_sign_halted);
    CHECK_FALSE(report.anomaly.has_value());  // detector disabled
    REQUIRE(report.speed_profile.size() == 50);
    for (const auto& [t, v] : report.speed_profile) CHECK(v == 0.33);
}

TEST_CASE("a tampered artifact is caught, switched away from, and restored") {
    avrtest::TempDir work;
    const ScenarioReport report = run_scenario(tamper_scenario(), work.path());

    const TimelineEvent* onset = first_event(report, "attack_onset");
    const TimelineEvent* detection = first_event(report, "detection");
    const TimelineEvent* switchover = first_event(report, "switchover");
    const TimelineEvent* restored = first_event(report, "restore_complete");
    REQUIRE(onset != nullptr);
    REQUIRE(detection != nullptr);
    REQUIRE(switchover != nullptr);
    REQUIRE(restored != nullptr);

    CHECK(onset->time == 3.0);
    CHECK(detection->time > 3.0);
    CHECK(detection->time <= 4.0);  // within one fixed interval
    CHECK(switchover->time >= detection->time);
    CHECK(restored->time >= switchover->time);
    CHECK(detection->detail.find("perception-model") != std::string::npos);

    // After the restore the next validation is clean and control returns.
    bool returned = false;
    for (const auto& e : report.timeline)
        if (e.kind == "switchover" && e.detail.find("to_primary") != std::string::npos &&
            e.time > restored->time)
            returned = true;
    CHECK(returned);
    CHECK(report.final_mode == CoordinatorMode::NormalOp);
    CHECK(report.safety.ok());

    // The store holds the trusted bytes again: artifact equals its backup.
    CHECK(avrtest::read_file(work / "store/perception-model.bin") ==
          avrtest::read_file(work / "backups/perception-model"));

    REQUIRE(report.latencies.size() == 1);
    const AttackLatency& lat = report.latencies[0];
    CHECK(lat.attack_id == "tamper-0");
    CHECK(lat.onset == 3.0);
    CHECK(lat.detected);
    REQUIRE(lat.detection_latency.has_value());
    CHECK(*lat.detection_latency > 0.0);
    CHECK(*lat.detection_latency <= 1.0);
    REQUIRE(lat.switchover_latency.has_value());
    CHECK(*lat.switchover_latency >= 0.0);
    REQUIRE(lat.restore_latency.has_value());
    CHECK(*lat.restore_latency >= 0.0);
}

TEST_CASE("every tamper mutation is detectable") {
    for (const std::string mutation : {"flip_bytes", "rewrite_threshold", "truncate", "delete"}) {
        avrtest::TempDir work;
        Scenario sc = tamper_scenario();
        sc.tampers[0] = {"detection-config", 3.0, mutation};
        const ScenarioReport report = run_scenario(sc, work.path());
        const TimelineEvent* detection = first_event(report, "detection");
        REQUIRE_MESSAGE(detection != nullptr, mutation);
        CHECK(detection->time <= 4.0);
        CHECK(report.final_mode == CoordinatorMode::NormalOp);
    }
}

TEST_CASE("timeline ordering is causal and non-decreasing") {
    avrtest::TempDir work;
    Scenario sc = tamper_scenario();
    sc.tampers.push_back({"class-map", 5.0, "truncate"});
    const ScenarioReport report = run_scenario(sc, work.path());

    for (std::size_t i = 1; i < report.timeline.size(); ++i)
        CHECK(report.timeline[i].time >= report.timeline[i - 1].time);

    // Each detection strictly follows the matching onset.
    const TimelineEvent* onset = first_event(report, "attack_onset");
    const TimelineEvent* detection = first_event(report, "detection");
    REQUIRE(onset != nullptr);
    REQUIRE(detection != nullptr);
    CHECK(detection->time > onset->time);

    REQUIRE(report.latencies.size() == 2);
    CHECK(report.latencies[0].attack_id == "tamper-0");
    CHECK(report.latencies[1].attack_id == "tamper-1");
    CHECK(report.latencies[1].detected);
}

TEST_CASE("the coordinated vehicle halts at the stop sign despite the tamper") {
    Scenario sc;
    sc.name = "stop";
    sc.seed = 5;
    sc.duration = 30.0;
    sc.vehicle.nominal_speed = 0.33;
    sc.vehicle.stop_sign_time = 20.0;
    sc.detector.enabled = false;
    sc.tampers.push_back({"perception-model", 10.0, "flip_bytes"});

    avrtest::TempDir work;
    const ScenarioReport report = run_scenario(sc, work.path());

    CHECK(report.stop_sign_halted);
    CHECK(first_event(report, "stop_sign_halt") != nullptr);
    // Moving the whole way to the braking point.
    for (const auto& [t, v] : report.speed_profile)
        if (t > 10.0 && t < 19.0) CHECK(v > 0.0);
    CHECK(speed_at(report, 20.0) == 0.0);
    CHECK(speed_at(report, 21.5) == 0.0);   // dwell
    CHECK(speed_at(report, 23.5) == doctest::Approx(0.33));  // resumed
    CHECK(report.safety.ok());
}

TEST_CASE("without the coordinator the tampered store misses the stop sign") {
    Scenario sc;
    sc.name = "stop-nocoord";
    sc.seed = 5;
    sc.duration = 30.0;
    sc.vehicle.nominal_speed = 0.33;
    sc.vehicle.stop_sign_time = 20.0;
    sc.detector.enabled = false;
    sc.coordinator.enabled = false;
    sc.tampers.push_back({"perception-model", 10.0, "flip_bytes"});

    avrtest::TempDir work;
    const ScenarioReport report = run_scenario(sc, work.path());

    CHECK_FALSE(report.stop_sign_halted);
    CHECK(first_event(report, "stop_sign_halt") == nullptr);
    CHECK(speed_at(report, 20.0) == doctest::Approx(0.33));
}

TEST_CASE("blinding raises anomaly scores and triggers a fallback episode") {
    Scenario sc;
    sc.name = "blinding";
    sc.seed = 9;
    sc.duration = 20.0;
    sc.blinding.push_back({8.0, 13.0});
    sc.detector.enabled = true;
    sc.detector.kind = DetectorKind::RandomForest;
    sc.detector.threshold = 0.45;
    sc.detector.train_samples = 1500;

    avrtest::TempDir work;
    const ScenarioReport report = run_scenario(sc, work.path());

    REQUIRE(report.anomaly.has_value());
    CHECK(report.anomaly->samples_inside > 0);
    CHECK(report.anomaly->samples_outside > 0);
    CHECK(report.anomaly->median_score_inside > report.anomaly->median_score_outside);
    CHECK(report.anomaly->median_score_inside > 0.45);

    REQUIRE(report.latencies.size() == 1);
    const AttackLatency& lat = report.latencies[0];
    CHECK(lat.attack_id == "blinding-0");
    CHECK(lat.detected);
    REQUIRE(lat.detection_latency.has_value());
    CHECK(*lat.detection_latency > 0.0);
    CHECK(*lat.detection_latency <= 5.0);

    const TimelineEvent* switchover = first_event(report, "switchover");
    REQUIRE(switchover != nullptr);
    CHECK(switchover->detail.find("to_fallback") != std::string::npos);
    CHECK(report.safety.ok());
    CHECK(report.final_mode == CoordinatorMode::NormalOp);
}

TEST_CASE("event-driven validation fires at checkpoints and after restores") {
    Scenario sc;
    sc.name = "event-driven";
    sc.seed = 2;
    sc.duration = 15.0;
    sc.detector.enabled = false;
    sc.schedule = SchedulePolicy::event_driven({Trigger::OnUpdate, Trigger::OnCheckpoint});
    sc.checkpoints = {12.0};
    sc.tampers.push_back({"perception-model", 10.0, "flip_bytes"});

    avrtest::TempDir work;
    const ScenarioReport report = run_scenario(sc, work.path());

    // Nothing validates between the onset and the checkpoint.
    const TimelineEvent* detection = first_event(report, "detection");
    REQUIRE(detection != nullptr);
    CHECK(detection->time == doctest::Approx(12.0));

    // The restore completion triggers an on-update validation, which comes
    // back clean and hands control to the primary almost immediately.
    bool returned = false;
    for (const auto& e : report.timeline)
        if (e.kind == "switchover" && e.detail.find("to_primary") != std::string::npos) {
            returned = true;
            CHECK(e.time == doctest::Approx(12.0 + sc.restore_duration_s));
        }
    CHECK(returned);
    CHECK(report.final_mode == CoordinatorMode::NormalOp);
}

TEST_CASE("staggered scheduling detects within one interval") {
    Scenario sc = tamper_scenario();
    sc.schedule = SchedulePolicy::staggered_even(1.0, 3);

    avrtest::TempDir work;
    const ScenarioReport report = run_scenario(sc, work.path());
    REQUIRE(report.latencies.size() == 1);
    REQUIRE(report.latencies[0].detection_latency.has_value());
    CHECK(*report.latencies[0].detection_latency <= 1.0);
}

TEST_CASE("identical scenarios serialize to identical reports") {
    avrtest::TempDir work_a, work_b;
    Scenario sc = tamper_scenario();
    const ScenarioReport a = run_scenario(sc, work_a.path());
    const ScenarioReport b = run_scenario(sc, work_b.path());
    CHECK(report_to_json(a) == report_to_json(b));
    CHECK(speed_profile_to_csv(a) == speed_profile_to_csv(b));

    sc.seed = 4;
    avrtest::TempDir work_c;
    const ScenarioReport c = run_scenario(sc, work_c.path());
    CHECK(report_to_json(c) != report_to_json(a));
}

TEST_CASE("reports never embed the work directory path") {
    avrtest::TempDir work;
    const ScenarioReport report = run_scenario(tamper_scenario(), work.path());
    const std::string json = report_to_json(report);
    CHECK(json.find(work.path().string()) == std::string::npos);
}

TEST_CASE("latency summarization averages detected attacks") {
    avrtest::TempDir work;
    const ScenarioReport report = run_scenario(tamper_scenario(), work.path());
    const LatencySummary summary = measure_latencies(report);
    CHECK(summary.n_attacks == 1);
    CHECK(summary.n_detected == 1);
    REQUIRE(summary.mean_detection.has_value());
    CHECK(*summary.mean_detection > 0.0);
    CHECK(*summary.mean_detection <= 1.0);
    REQUIRE(summary.mean_switchover.has_value());
    REQUIRE(summary.mean_restore.has_value());

    avrtest::TempDir quiet_work;
    const ScenarioReport quiet = run_scenario(quiet_scenario(), quiet_work.path());
    CHECK_THROWS_AS(measure_latencies(quiet), invalid_argument);
}

TEST_CASE("wall-clock integrity scenario detects in real time") {
    Scenario sc;
    sc.name = "wall";
    sc.seed = 6;
    sc.duration = 1.2;
    sc.sample_rate = 10.0;
    sc.detector.enabled = false;
    sc.clock = ClockMode::Wall;
    sc.schedule = SchedulePolicy::fixed(0.25);
    sc.tampers.push_back({"perception-model", 0.4, "flip_bytes"});

    avrtest::TempDir work;
    const ScenarioReport report = run_scenario(sc, work.path());
    REQUIRE(report.latencies.size() == 1);
    CHECK(report.latencies[0].detected);
    REQUIRE(report.latencies[0].detection_latency.has_value());
    // One interval plus generous scheduling jitter; the tight bound is proven
    // under the virtual clock, this run only shows the wall path works.
    CHECK(*report.latencies[0].detection_latency < 0.85);
    CHECK(report.safety.ok());
}

TEST_CASE("batch grid reports perfect detection and quiet controls") {
    avrtest::TempDir work;
    const BatchResult result = batch_run({0.5, 1.0}, {1.0}, 2, 31, work.path(), 2);

    REQUIRE(result.cells.size() == 2);
    CHECK(result.trials_per_cell == 2);
    CHECK(result.tampers_per_trial == 2);
    for (const auto& cell : result.cells) {
        CHECK(cell.interval_s == 1.0);
        CHECK(cell.trials == 2);
        CHECK(cell.success_rate == 1.0);
        CHECK(cell.control_false_detections == 0);
        REQUIRE(cell.mean_latency.has_value());
        CHECK(*cell.mean_latency > 0.0);
        CHECK(*cell.mean_latency <= 1.0);
        REQUIRE(cell.max_latency.has_value());
        CHECK(*cell.max_latency <= 1.0);
        CHECK(*cell.max_latency >= *cell.mean_latency);
    }

    const std::string csv = batch_to_csv(result);
    CHECK(csv.rfind("speed,interval,success_rate,mean_latency,max_latency\n", 0) == 0);

    // Byte-identical on a rerun.
    avrtest::TempDir work2;
    const BatchResult again = batch_run({0.5, 1.0}, {1.0}, 2, 31, work2.path(), 2);
    CHECK(batch_to_json(again) == batch_to_json(result));
    CHECK(batch_to_csv(again) == csv);
}

TEST_CASE("batch latencies concentrate near half the interval") {
    // Onsets are uniform inside an interval, so the mean detection latency
    // converges to interval / 2; 50 samples keep the estimate within a few
    // standard errors.
    avrtest::TempDir work;
    const BatchResult result = batch_run({0.5}, {1.0}, 50, 13, work.path(), 1);
    REQUIRE(result.cells.size() == 1);
    REQUIRE(result.cells[0].mean_latency.has_value());
    CHECK(*result.cells[0].mean_latency > 0.35);
    CHECK(*result.cells[0].mean_latency < 0.65);
}
