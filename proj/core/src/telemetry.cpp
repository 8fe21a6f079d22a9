// SPDX-License-Identifier: Apache-2.0
#include "avr/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace avr {

namespace {

void check_config(const TraceConfig& config) {
    if (config.duration <= 0.0) throw invalid_argument("trace duration must be > 0");
    if (config.sample_rate <= 0.0) throw invalid_argument("sample rate must be > 0");
    if (config.nominal_speed < 0.0) throw invalid_argument("nominal speed must be >= 0");

    std::vector<AttackWindow> sorted = config.attack_windows;
    std::sort(sorted.begin(), sorted.end(),
              [](const AttackWindow& a, const AttackWindow& b) { return a.start < b.start; });
    double prev_end = -1.0;
    for (const auto& w : sorted) {
        if (w.start < 0.0 || w.end > config.duration || w.start >= w.end)
            throw invalid_argument("attack window outside [0, duration] or empty");
        if (w.start < prev_end) throw invalid_argument("attack windows overlap");
        prev_end = w.end;
    }
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace

SampleGenerator::SampleGenerator(const TraceConfig& config, std::uint64_t seed)
    : config_(config), rng_(Rng(seed).fork(0x7e1e)) {
    check_config(config_);
}

TelemetrySample SampleGenerator::step(std::size_t index, bool attacked, double speed_override) {
    const double t = static_cast<double>(index) / config_.sample_rate;
    const double base_speed = speed_override >= 0.0 ? speed_override : config_.nominal_speed;

    // Draw every variate unconditionally; see class comment.
    const double speed_noise = rng_.normal(0.0, 0.01);
    const double steer = 0.08 * std::sin(0.4 * t) + rng_.normal(0.0, 0.01);
    const double yaw_noise = rng_.normal(0.0, 0.02);
    const double latv_noise = rng_.normal(0.0, 0.005);
    const double depth_noise = rng_.normal(0.0, 0.15);
    const double ratio_noise = rng_.normal(0.0, 0.01);
    const double obstacle_wave = 1.2 * std::sin(0.23 * t + 1.1);
    const double obstacle_noise = rng_.normal(0.0, 0.08);
    const double blind_ratio_mult = std::abs(1.0 + rng_.normal(0.0, 0.5));
    const double blind_obstacle_jitter = rng_.normal(0.0, 0.3);

    TelemetrySample s;
    s.timestamp = t;
    s.speed = std::max(0.0, base_speed + (base_speed > 0.0 ? speed_noise : 0.0));
    s.commanded_steering = steer;
    s.commanded_throttle = clamp01(base_speed / 2.0 + 0.05);
    s.yaw_rate = s.speed * std::tan(s.commanded_steering) / 0.26 + yaw_noise;
    s.lateral_velocity = 0.1 * s.yaw_rate + latv_noise;
    s.depth_mean = std::max(0.1, 2.4 + depth_noise);
    if (attacked) {
        // Blinded camera: valid returns collapse, obstacles become invisible.
        s.depth_valid_ratio = clamp01(config_.blinded_valid_ratio * blind_ratio_mult);
        s.min_obstacle_distance =
            std::max(0.0, config_.saturated_obstacle_distance + blind_obstacle_jitter);
        s.braking_active = false;  // nothing visible to brake for
    } else {
        s.depth_valid_ratio = clamp01(0.97 + ratio_noise);
        s.min_obstacle_distance = std::max(0.0, 3.0 + obstacle_wave + obstacle_noise);
        s.braking_active = s.min_obstacle_distance < 2.0;
    }
    s.label = attacked ? Label::Abnormal : Label::Normal;
    return s;
}

TelemetryTrace generate_trace(const TraceConfig& config, std::uint64_t seed) {
    check_config(config);
    SampleGenerator gen(config, seed);

    const auto n = static_cast<std::size_t>(std::llround(config.duration * config.sample_rate));
    TelemetryTrace trace;
    trace.sample_rate = config.sample_rate;
    trace.samples.reserve(n);
    trace.attack_signal.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / config.sample_rate;
        const bool attacked = std::any_of(config.attack_windows.begin(), config.attack_windows.end(),
                                          [t](const AttackWindow& w) { return w.contains(t); });
        trace.samples.push_back(gen.step(i, attacked));
        trace.attack_signal.push_back(attacked ? 1 : 0);
    }
    return trace;
}

void check_trace(const TelemetryTrace& trace) {
    if (trace.samples.size() != trace.attack_signal.size())
        throw error("attack_signal length differs from sample count");
    if (trace.sample_rate <= 0.0) throw error("sample_rate must be > 0");
    const double dt = 1.0 / trace.sample_rate;
    for (std::size_t i = 0; i < trace.samples.size(); ++i) {
        const auto& s = trace.samples[i];
        if (i > 0) {
            const double prev = trace.samples[i - 1].timestamp;
            if (s.timestamp <= prev) throw error("timestamps not strictly increasing");
            if (std::abs((s.timestamp - prev) - dt) > 1e-9)
                throw error("sample spacing differs from 1/sample_rate");
        }
        if (s.depth_valid_ratio < 0.0 || s.depth_valid_ratio > 1.0)
            throw error("depth_valid_ratio outside [0, 1]");
        if (s.speed < 0.0) throw error("negative speed");
        if (s.min_obstacle_distance < 0.0) throw error("negative min_obstacle_distance");
        const bool abnormal = s.label == Label::Abnormal;
        if (abnormal != (trace.attack_signal[i] == 1))
            throw error("label does not match attack_signal");
    }
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string trace_to_json(const TelemetryTrace& trace) {
    std::ostringstream out;
    out << "{\n  \"sample_rate\": " << fmt_double(trace.sample_rate) << ",\n  \"samples\": [\n";
    for (std::size_t i = 0; i < trace.samples.size(); ++i) {
        const auto& s = trace.samples[i];
        out << "    {\"timestamp\": " << fmt_double(s.timestamp)
            << ", \"speed\": " << fmt_double(s.speed)
            << ", \"commanded_steering\": " << fmt_double(s.commanded_steering)
            << ", \"commanded_throttle\": " << fmt_double(s.commanded_throttle)
            << ", \"yaw_rate\": " << fmt_double(s.yaw_rate)
            << ", \"lateral_velocity\": " << fmt_double(s.lateral_velocity)
            << ", \"depth_mean\": " << fmt_double(s.depth_mean)
            << ", \"depth_valid_ratio\": " << fmt_double(s.depth_valid_ratio)
            << ", \"min_obstacle_distance\": " << fmt_double(s.min_obstacle_distance)
            << ", \"braking_active\": " << (s.braking_active ? "true" : "false")
            << ", \"label\": \"" << to_string(s.label) << "\"}";
        out << (i + 1 < trace.samples.size() ? ",\n" : "\n");
    }
    out << "  ],\n  \"attack_signal\": [";
    for (std::size_t i = 0; i < trace.attack_signal.size(); ++i) {
        if (i) out << ", ";
        out << static_cast<int>(trace.attack_signal[i]);
    }
    out << "]\n}\n";
    return out.str();
}

TelemetryTrace trace_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw error(std::string("trace parse failure: ") + e.what());
    }
    TelemetryTrace trace;
    try {
        trace.sample_rate = j.at("sample_rate").get<double>();
        for (const auto& js : j.at("samples")) {
            TelemetrySample s;
            s.timestamp = js.at("timestamp").get<double>();
            s.speed = js.at("speed").get<double>();
            s.commanded_steering = js.at("commanded_steering").get<double>();
            s.commanded_throttle = js.at("commanded_throttle").get<double>();
            s.yaw_rate = js.at("yaw_rate").get<double>();
            s.lateral_velocity = js.at("lateral_velocity").get<double>();
            s.depth_mean = js.at("depth_mean").get<double>();
            s.depth_valid_ratio = js.at("depth_valid_ratio").get<double>();
            s.min_obstacle_distance = js.at("min_obstacle_distance").get<double>();
            s.braking_active = js.at("braking_active").get<bool>();
            s.label = js.at("label").get<std::string>() == "abnormal" ? Label::Abnormal : Label::Normal;
            trace.samples.push_back(s);
        }
        for (const auto& v : j.at("attack_signal"))
            trace.attack_signal.push_back(v.get<int>() ? 1 : 0);
    } catch (const nlohmann::json::exception& e) {
        throw error(std::string("trace field error: ") + e.what());
    }
    check_trace(trace);
    return trace;
}

void save_trace(const TelemetryTrace& trace, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot open " + path.string() + " for writing");
    out << trace_to_json(trace);
}

TelemetryTrace load_trace(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open trace file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return trace_from_json(ss.str());
}

}  // namespace avr
