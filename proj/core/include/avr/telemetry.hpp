// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "avr/rng.hpp"
#include "avr/types.hpp"

namespace avr {

/// One timestep of vehicle and depth-sensor state.
struct TelemetrySample {
    double timestamp = 0.0;             // s, strictly increasing within a trace
    double speed = 0.0;                 // m/s, >= 0
    double commanded_steering = 0.0;    // rad
    double commanded_throttle = 0.0;    // [0, 1]
    double yaw_rate = 0.0;              // rad/s
    double lateral_velocity = 0.0;      // m/s
    double depth_mean = 0.0;            // m
    double depth_valid_ratio = 0.0;     // [0, 1], fraction of valid depth returns
    double min_obstacle_distance = 0.0; // m, >= 0
    bool braking_active = false;
    Label label = Label::Normal;
};

/// Open on the left: a sample at time t is attacked iff start < t <= end.
/// The activation instant itself is excluded so any detection of the window
/// is strictly later than its onset.
struct AttackWindow {
    double start = 0.0;
    double end = 0.0;

    bool contains(double t) const { return t > start && t <= end; }
};

struct TelemetryTrace {
    std::vector<TelemetrySample> samples;
    double sample_rate = 0.0;                // Hz
    std::vector<std::uint8_t> attack_signal; // 1:1 with samples, 1 = attack device active
};

/// Parameters for the synthetic trace generator.
struct TraceConfig {
    double duration = 30.0;       // s, > 0
    double sample_rate = 10.0;    // Hz, > 0
    double nominal_speed = 0.33;  // m/s; 0.5-1.75 used for batch grids
    std::vector<AttackWindow> attack_windows;

    // Blinding effect inside attack windows: valid-ratio collapse target and
    // obstacle-distance saturation level.
    double blinded_valid_ratio = 0.05;
    double saturated_obstacle_distance = 8.0;
};

/**
 * Per-sample telemetry source behind generate_trace, exposed so the scenario
 * simulator can produce the identical stream while steering the speed itself.
 *
 * Every step draws the same number of variates whether attacked or not, so
 * attack windows never shift the random stream of later samples.
 */
class SampleGenerator {
public:
    SampleGenerator(const TraceConfig& config, std::uint64_t seed);

    /// Sample index i lives at t = i / sample_rate. speed_override < 0 means
    /// nominal cruise; otherwise the kinematic speed to perturb around.
    TelemetrySample step(std::size_t index, bool attacked, double speed_override = -1.0);

    const TraceConfig& config() const { return config_; }

private:
    TraceConfig config_;
    Rng rng_;
};

/**
 * Generate a labeled synthetic trace with optional blinding-attack windows.
 *
 * Deterministic in (config, seed). Inside a window the depth channel
 * degrades: depth_valid_ratio collapses toward blinded_valid_ratio with
 * multiplicative noise and min_obstacle_distance saturates high. Labels are
 * Abnormal exactly where attack_signal is 1.
 *
 * Throws invalid_argument for non-positive duration/rate and for attack
 * windows that overlap or fall outside [0, duration].
 */
TelemetryTrace generate_trace(const TraceConfig& config, std::uint64_t seed);

/// Serialize with 17-significant-digit floats so a written trace re-reads
/// bit-exactly and identical runs produce identical bytes.
std::string trace_to_json(const TelemetryTrace& trace);
TelemetryTrace trace_from_json(const std::string& json_text);

void save_trace(const TelemetryTrace& trace, const std::filesystem::path& path);
TelemetryTrace load_trace(const std::filesystem::path& path);

/// Validate trace invariants: signal aligned 1:1, timestamps strictly
/// increasing and spaced 1/sample_rate within 1e-9 s, field ranges respected.
/// Throws error on violation.
void check_trace(const TelemetryTrace& trace);

}  // namespace avr
