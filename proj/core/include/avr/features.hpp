// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <string>
#include <vector>

#include "avr/dataset.hpp"
#include "avr/telemetry.hpp"

namespace avr {

inline constexpr std::size_t kDefaultFeatureWindow = 10;

/// Names of the feature columns produced by the representation map, in order:
/// 9 raw channels followed by 4 trailing-window statistics.
std::vector<std::string> feature_names(std::size_t window = kDefaultFeatureWindow);

/**
 * Streaming representation map: turns one telemetry sample at a time into a
 * feature row (raw channels + trailing rolling mean/variance of
 * depth_valid_ratio and min_obstacle_distance over the last `window`
 * samples). The first rows use shrinking windows. No lookahead.
 *
 * Both batch extraction and the live simulator go through this class, so a
 * trained detector sees the identical representation in either path.
 */
class FeatureWindow {
public:
    explicit FeatureWindow(std::size_t window = kDefaultFeatureWindow);

    std::vector<double> push(const TelemetrySample& s);

    std::size_t window() const { return window_; }
    std::size_t n_features() const;

private:
    std::size_t window_;
    std::deque<double> valid_ratio_;
    std::deque<double> obstacle_;
};

/**
 * Batch representation map over a whole trace. One output row per sample,
 * labels carried through. Throws invalid_argument if the trace is empty or
 * shorter than the window.
 */
LabeledDataset extract_features(const TelemetryTrace& trace,
                                std::size_t window = kDefaultFeatureWindow);

}  // namespace avr
