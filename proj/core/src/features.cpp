// SPDX-License-Identifier: Apache-2.0
#include "avr/features.hpp"

#include <algorithm>

namespace avr {

namespace {

constexpr const char* kRawNames[] = {
    "speed",        "commanded_steering",   "commanded_throttle",
    "yaw_rate",     "lateral_velocity",     "depth_mean",
    "depth_valid_ratio", "min_obstacle_distance", "braking_active",
};
constexpr std::size_t kRawCount = std::size(kRawNames);

struct WindowStats {
    double mean;
    double variance;  // population variance over the window
};

WindowStats stats(const std::deque<double>& w) {
    const auto n = static_cast<double>(w.size());
    double sum = 0.0;
    for (double x : w) sum += x;
    const double mean = sum / n;
    const auto [mn, mx] = std::minmax_element(w.begin(), w.end());
    if (*mn == *mx) return {mean, 0.0};  // exact zero for constant windows
    double ss = 0.0;
    for (double x : w) ss += (x - mean) * (x - mean);
    return {mean, ss / n};
}

}  // namespace

std::vector<std::string> feature_names(std::size_t window) {
    std::vector<std::string> names(std::begin(kRawNames), std::end(kRawNames));
    const std::string w = std::to_string(window);
    names.push_back("depth_valid_ratio_mean_w" + w);
    names.push_back("depth_valid_ratio_var_w" + w);
    names.push_back("min_obstacle_distance_mean_w" + w);
    names.push_back("min_obstacle_distance_var_w" + w);
    return names;
}

FeatureWindow::FeatureWindow(std::size_t window) : window_(window) {
    if (window == 0) throw invalid_argument("feature window must be >= 1");
}

std::size_t FeatureWindow::n_features() const { return kRawCount + 4; }

std::vector<double> FeatureWindow::push(const TelemetrySample& s) {
    valid_ratio_.push_back(s.depth_valid_ratio);
    obstacle_.push_back(s.min_obstacle_distance);
    if (valid_ratio_.size() > window_) {
        valid_ratio_.pop_front();
        obstacle_.pop_front();
    }
    const WindowStats vr = stats(valid_ratio_);
    const WindowStats ob = stats(obstacle_);
    return {
        s.speed,
        s.commanded_steering,
        s.commanded_throttle,
        s.yaw_rate,
        s.lateral_velocity,
        s.depth_mean,
        s.depth_valid_ratio,
        s.min_obstacle_distance,
        s.braking_active ? 1.0 : 0.0,
        vr.mean,
        vr.variance,
        ob.mean,
        ob.variance,
    };
}

LabeledDataset extract_features(const TelemetryTrace& trace, std::size_t window) {
    if (trace.samples.empty()) throw invalid_argument("cannot extract features from an empty trace");
    if (trace.samples.size() < window)
        throw invalid_argument("trace shorter than feature window");

    FeatureWindow fw(window);
    LabeledDataset ds;
    ds.feature_names = feature_names(window);
    ds.features = FeatureMatrix(0, 0);
    ds.labels.reserve(trace.samples.size());
    for (const auto& s : trace.samples) {
        const auto row = fw.push(s);
        ds.features.append_row(row);
        ds.labels.push_back(s.label);
    }
    return ds;
}

}  // namespace avr
