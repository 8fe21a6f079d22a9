// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "avr/dataset.hpp"
#include "avr/detector.hpp"

namespace avr {

// Confusion counts with Abnormal as the positive class.
struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
};

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
    ConfusionCounts confusion;

    // Rates degrade to 0 when their denominator is 0.
    static Metrics from_confusion(const ConfusionCounts& c);
};

ConfusionCounts confusion_from_predictions(const std::vector<Label>& truth,
                                           const std::vector<Label>& predicted);

// Scores and classifies every row of `dataset` with the model's own threshold.
Metrics evaluate(const DetectorModel& model, const LabeledDataset& dataset);

struct FoldResult {
    Metrics metrics;
    std::vector<std::size_t> eval_indices;
    std::vector<double> scores;
    std::vector<Label> predictions;
};

struct MeanMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
};

struct CvResult {
    MeanMetrics mean;      // unweighted mean of the per-fold rates
    ConfusionCounts pooled;  // summed counts, for reference only
    std::vector<FoldResult> folds;
};

// Stratified k-fold cross-validation: fit on k-1 folds, evaluate on the
// held-out fold. Fold results are independent of `parallel`.
CvResult cross_validate(const LabeledDataset& dataset, DetectorKind kind,
                        const Hyperparams& params, int k, std::uint64_t seed,
                        bool parallel = false);

struct MarginBand {
    double lower = 0.0;
    double upper = 0.0;
    std::uint64_t normal_misclassified = 0;  // Normal samples with score > lower
    std::uint64_t attack_misclassified = 0;  // Abnormal samples with score < upper
    double fp_rate = 0.0;
    double fn_rate = 0.0;
};

struct MarginReport {
    std::uint64_t n_normal = 0;
    std::uint64_t n_attack = 0;
    std::vector<MarginBand> bands;
};

// Worst-case misclassification over any threshold placed inside each band.
MarginReport margin_from_scores(const std::vector<double>& scores,
                                const std::vector<Label>& labels,
                                const std::vector<std::pair<double, double>>& bands);

MarginReport margin_analysis(const DetectorModel& model, const LabeledDataset& eval_set,
                             const std::vector<std::pair<double, double>>& bands);

struct ThresholdPolicy {
    enum class Kind { ZeroFnMinFp, TargetFp };
    Kind kind = Kind::ZeroFnMinFp;
    double max_fp = 0.0;  // only read for TargetFp

    static ThresholdPolicy zero_fn_min_fp() { return {Kind::ZeroFnMinFp, 0.0}; }
    static ThresholdPolicy target_fp(double max) { return {Kind::TargetFp, max}; }
};

// Returns the midpoint of the best band satisfying the policy; throws
// "no band satisfies policy" when none qualifies.
double select_threshold(const MarginReport& report, const ThresholdPolicy& policy);

}  // namespace avr
