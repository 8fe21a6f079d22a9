// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "avr/coordinator.hpp"
#include "avr/detector.hpp"
#include "avr/schedule.hpp"
#include "avr/telemetry.hpp"

namespace avr {

struct VehicleConfig {
    double nominal_speed = 0.33;    // m/s
    double stop_sign_time = -1.0;   // s; negative = no stop sign on the route
};

struct BlindingAttack {
    double start = 0.0;  // window is open on the left: active for start < t <= end
    double end = 0.0;
};

// Byte-level mutation of one artifact in the simulated store at `onset`;
// persists until restored.
struct TamperAttack {
    std::string artifact_id;
    double onset = 0.0;
    std::string mutation = "flip_bytes";  // flip_bytes | rewrite_threshold | truncate | delete
};

struct DetectorSetup {
    bool enabled = true;
    DetectorKind kind = DetectorKind::RandomForest;
    double threshold = 0.5;
    std::string model_path;          // empty: train on embedded synthetic data
    std::size_t train_samples = 4000;
};

struct CoordinatorSetup {
    bool enabled = true;
    int debounce = 1;
};

enum class ClockMode : unsigned char { Virtual, Wall };

struct Scenario {
    std::string name = "scenario";
    std::uint64_t seed = 1;
    VehicleConfig vehicle;
    double duration = 30.0;      // s
    double sample_rate = 10.0;   // Hz
    std::vector<BlindingAttack> blinding;
    std::vector<TamperAttack> tampers;
    SchedulePolicy schedule = SchedulePolicy::fixed(1.0);
    std::vector<double> checkpoints;  // on-checkpoint trigger instants (event-driven)
    DetectorSetup detector;
    CoordinatorSetup coordinator;
    double restore_duration_s = 0.002;
    ClockMode clock = ClockMode::Virtual;
};

// Artifact ids available in the simulated store.
std::vector<std::string> scenario_artifact_ids();

void check_scenario(const Scenario& scenario);

std::string scenario_to_json(const Scenario& scenario);
Scenario scenario_from_json(const std::string& json_text);
Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& scenario, const std::filesystem::path& path);

struct TimelineEvent {
    double time = 0.0;
    std::string kind;  // attack_onset attack_end detection switchover restore_complete
                       // stop_sign_halt safe_stop
    std::string detail;
};

struct AttackLatency {
    std::string attack_id;  // "tamper-0", "blinding-1", ... in onset order per kind
    double onset = 0.0;
    bool detected = false;
    std::optional<double> detection_latency;   // Detection - onset
    std::optional<double> switchover_latency;  // Switchover - Detection
    std::optional<double> restore_latency;     // RestoreComplete - Switchover
};

struct AnomalyStats {
    double median_score_inside = 0.0;
    double median_score_outside = 0.0;
    std::size_t samples_inside = 0;
    std::size_t samples_outside = 0;
};

struct ScenarioReport {
    std::string name;
    std::uint64_t seed = 0;
    std::vector<TimelineEvent> timeline;  // time-ordered
    std::vector<std::pair<double, double>> speed_profile;  // (t, commanded speed)
    std::vector<AttackLatency> latencies;
    bool stop_sign_halted = false;
    CoordinatorMode final_mode = CoordinatorMode::NormalOp;
    std::optional<AnomalyStats> anomaly;
    SafetyReport safety;
};

// Runs the closed loop under a virtual clock (or wall clock when configured).
// `work_dir` receives the simulated artifact store; the report never embeds
// absolute paths, so identical (scenario, seed) runs serialize identically.
ScenarioReport run_scenario(const Scenario& scenario, const std::filesystem::path& work_dir);

std::string report_to_json(const ScenarioReport& report);
std::string speed_profile_to_csv(const ScenarioReport& report);

struct LatencySummary {
    std::size_t n_attacks = 0;
    std::size_t n_detected = 0;
    std::optional<double> mean_detection;
    std::optional<double> max_detection;
    std::optional<double> mean_switchover;
    std::optional<double> mean_restore;
};

// Requires at least one detected attack; asserts detection strictly follows
// onset for every detected attack.
LatencySummary measure_latencies(const ScenarioReport& report);

struct BatchCell {
    double speed = 0.0;
    double interval_s = 0.0;
    std::size_t trials = 0;
    double success_rate = 0.0;  // fraction of trials with every tamper detected
    std::optional<double> mean_latency;
    std::optional<double> max_latency;
    std::size_t control_false_detections = 0;  // detections in the no-attack control trial
};

struct BatchResult {
    std::vector<BatchCell> cells;
    std::size_t trials_per_cell = 0;
    std::size_t tampers_per_trial = 0;
    std::uint64_t seed = 0;
};

// One control trial (no attacks) plus `trials_per_cell` attack trials per
// (speed, interval) cell, each with `tampers_per_trial` spaced tampers at
// seeded-random onsets.
BatchResult batch_run(const std::vector<double>& speeds, const std::vector<double>& intervals,
                      std::size_t trials_per_cell, std::uint64_t seed,
                      const std::filesystem::path& work_dir, std::size_t tampers_per_trial = 5);

std::string batch_to_json(const BatchResult& result);
// Header: speed,interval,success_rate,mean_latency,max_latency
std::string batch_to_csv(const BatchResult& result);

}  // namespace avr
