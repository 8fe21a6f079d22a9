// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "avr/dataset.hpp"
#include "avr/rng.hpp"

namespace avr {

enum class DetectorKind { RandomForest, LogisticRegression, KNearestNeighbor };

const char* to_string(DetectorKind kind);
DetectorKind detector_kind_from_string(const std::string& s);

struct RfParams {
    int n_trees = 100;
    int max_depth = 16;      // levels below the root
    int max_features = 0;    // candidate features per split; 0 = floor(sqrt(n))
    bool bootstrap = true;
    int min_samples_split = 2;
};

struct LrParams {
    int iterations = 400;
    double learning_rate = 0.5;
    double l2 = 1e-6;
};

struct KnnParams {
    int k = 5;
};

struct Hyperparams {
    RfParams rf{};
    LrParams lr{};
    KnnParams knn{};
};

/// Per-feature z-score normalization, fitted on training data only.
struct StandardScaler {
    std::vector<double> mean;
    std::vector<double> stddev;  // zero-variance features get stddev 1

    void fit(const FeatureMatrix& x);
    std::vector<double> transform(std::span<const double> row) const;
    FeatureMatrix transform(const FeatureMatrix& x) const;
};

struct TreeNode {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;     // x[feature] <= threshold goes left
    std::int32_t left = -1;
    std::int32_t right = -1;
    Label leaf = Label::Normal;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
    Label predict(std::span<const double> x) const;
};

struct Forest {
    std::vector<DecisionTree> trees;
};

struct LinearModel {
    std::vector<double> weights;
    double bias = 0.0;
};

struct KnnMemory {
    FeatureMatrix points;       // already scaled
    std::vector<Label> labels;
};

/**
 * A trained abnormality scorer: the learned memory plus the alarm threshold.
 * Immutable once fitted; score/classify are safe for concurrent readers.
 */
struct DetectorModel {
    DetectorKind kind = DetectorKind::RandomForest;
    Hyperparams params{};
    double threshold = 0.5;  // default until tuned
    std::vector<std::string> feature_names;
    StandardScaler scaler;
    std::variant<Forest, LinearModel, KnnMemory> memory;

    /// Abnormality of one sample in [0, 1]. Forest: fraction of trees voting
    /// Abnormal. kNN: fraction of the k nearest training points labeled
    /// Abnormal. LR: sigmoid of the linear response.
    /// Throws on dimension mismatch or non-finite input.
    double score(std::span<const double> x) const;

    /// Abnormal iff score(x) > threshold, strictly; a score equal to the
    /// threshold stays Normal.
    Label classify(std::span<const double> x) const;
};

/**
 * Train a detector. Deterministic in seed. Requires both classes present and
 * valid hyperparameters for the kind (forest: n_trees >= 1 and max_depth >=
 * 1; kNN: 1 <= k <= n; LR: iterations >= 1 and learning_rate > 0).
 */
DetectorModel fit(const LabeledDataset& dataset, DetectorKind kind, const Hyperparams& params,
                  std::uint64_t seed);

/// JSON round trip; scores are preserved exactly (shortest round-trip floats).
std::string model_to_json(const DetectorModel& model);
DetectorModel model_from_json(const std::string& json_text);
void save_model(const DetectorModel& model, const std::filesystem::path& path);
DetectorModel load_model(const std::filesystem::path& path);

// internal: single-tree trainer shared by fit(); exposed for the forest unit
// tests (scaled inputs, explicit rng stream).
DecisionTree train_tree(const FeatureMatrix& x, const std::vector<Label>& y, const RfParams& params,
                        Rng& rng);

}  // namespace avr
