// SPDX-License-Identifier: Apache-2.0
#include "avr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "avr/rng.hpp"

namespace avr {

Metrics Metrics::from_confusion(const ConfusionCounts& c) {
    Metrics m;
    m.confusion = c;
    const auto tp = static_cast<double>(c.tp);
    if (c.tp + c.fp > 0) m.precision = tp / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) m.recall = tp / static_cast<double>(c.tp + c.fn);
    if (m.precision + m.recall > 0.0)
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    if (c.total() > 0)
        m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    return m;
}

ConfusionCounts confusion_from_predictions(const std::vector<Label>& truth,
                                           const std::vector<Label>& predicted) {
    if (truth.size() != predicted.size())
        throw invalid_argument("truth/prediction length mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool actual = truth[i] == Label::Abnormal;
        const bool alarm = predicted[i] == Label::Abnormal;
        if (actual && alarm) ++c.tp;
        else if (!actual && alarm) ++c.fp;
        else if (!actual && !alarm) ++c.tn;
        else ++c.fn;
    }
    return c;
}

Metrics evaluate(const DetectorModel& model, const LabeledDataset& dataset) {
    if (dataset.size() == 0) throw invalid_argument("empty evaluation set");
    std::vector<Label> predicted;
    predicted.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i)
        predicted.push_back(model.classify(dataset.features.row(i)));
    return Metrics::from_confusion(confusion_from_predictions(dataset.labels, predicted));
}

namespace {

FoldResult run_fold(const LabeledDataset& dataset, const FoldAssignment& fa, int fold,
                    DetectorKind kind, const Hyperparams& params, std::uint64_t fold_seed) {
    const std::vector<std::size_t> train_idx = fa.indices_not_of(fold);
    FoldResult fr;
    fr.eval_indices = fa.indices_of(fold);

    const LabeledDataset train = dataset.select(train_idx);
    const DetectorModel model = fit(train, kind, params, fold_seed);

    std::vector<Label> truth;
    truth.reserve(fr.eval_indices.size());
    for (std::size_t idx : fr.eval_indices) {
        const double s = model.score(dataset.features.row(idx));
        fr.scores.push_back(s);
        fr.predictions.push_back(s > model.threshold ? Label::Abnormal : Label::Normal);
        truth.push_back(dataset.labels[idx]);
    }
    fr.metrics = Metrics::from_confusion(confusion_from_predictions(truth, fr.predictions));
    return fr;
}

}  // namespace

CvResult cross_validate(const LabeledDataset& dataset, DetectorKind kind,
                        const Hyperparams& params, int k, std::uint64_t seed, bool parallel) {
    const FoldAssignment fa = split_stratified(dataset, k, seed);
    CvResult result;
    result.folds.resize(static_cast<std::size_t>(k));

    // Fold seeds come from a dedicated stream so they never collide with the
    // shuffle stream used inside split_stratified.
    std::vector<std::uint64_t> fold_seeds(static_cast<std::size_t>(k));
    Rng root(seed);
    for (int f = 0; f < k; ++f)
        fold_seeds[static_cast<std::size_t>(f)] =
            root.fork(0x0f01d000u + static_cast<std::uint64_t>(f)).seed();

    if (parallel) {
        std::vector<std::jthread> workers;
        workers.reserve(static_cast<std::size_t>(k));
        for (int f = 0; f < k; ++f)
            workers.emplace_back([&, f] {
                result.folds[static_cast<std::size_t>(f)] =
                    run_fold(dataset, fa, f, kind, params, fold_seeds[static_cast<std::size_t>(f)]);
            });
    } else {
        for (int f = 0; f < k; ++f)
            result.folds[static_cast<std::size_t>(f)] =
                run_fold(dataset, fa, f, kind, params, fold_seeds[static_cast<std::size_t>(f)]);
    }

    for (const FoldResult& fr : result.folds) {
        result.mean.precision += fr.metrics.precision;
        result.mean.recall += fr.metrics.recall;
        result.mean.f1 += fr.metrics.f1;
        result.mean.accuracy += fr.metrics.accuracy;
        result.pooled.tp += fr.metrics.confusion.tp;
        result.pooled.fp += fr.metrics.confusion.fp;
        result.pooled.tn += fr.metrics.confusion.tn;
        result.pooled.fn += fr.metrics.confusion.fn;
    }
    const double inv_k = 1.0 / static_cast<double>(k);
    result.mean.precision *= inv_k;
    result.mean.recall *= inv_k;
    result.mean.f1 *= inv_k;
    result.mean.accuracy *= inv_k;
    return result;
}

MarginReport margin_from_scores(const std::vector<double>& scores,
                                const std::vector<Label>& labels,
                                const std::vector<std::pair<double, double>>& bands) {
    if (scores.size() != labels.size())
        throw invalid_argument("score/label length mismatch");
    if (scores.empty()) throw invalid_argument("empty evaluation set");
    for (const auto& [lo, hi] : bands)
        if (!(0.0 <= lo && lo <= hi && hi <= 1.0))
            throw invalid_argument("invalid margin band: bounds must satisfy 0 <= lower <= upper <= 1");

    MarginReport report;
    for (Label l : labels) (l == Label::Normal ? report.n_normal : report.n_attack)++;

    for (const auto& [lo, hi] : bands) {
        MarginBand band;
        band.lower = lo;
        band.upper = hi;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (labels[i] == Label::Normal) {
                if (scores[i] > lo) ++band.normal_misclassified;
            } else {
                if (scores[i] < hi) ++band.attack_misclassified;
            }
        }
        if (report.n_normal > 0)
            band.fp_rate = static_cast<double>(band.normal_misclassified) /
                           static_cast<double>(report.n_normal);
        if (report.n_attack > 0)
            band.fn_rate = static_cast<double>(band.attack_misclassified) /
                           static_cast<double>(report.n_attack);
        report.bands.push_back(band);
    }
    return report;
}

MarginReport margin_analysis(const DetectorModel& model, const LabeledDataset& eval_set,
                             const std::vector<std::pair<double, double>>& bands) {
    if (eval_set.size() == 0) throw invalid_argument("empty evaluation set");
    std::vector<double> scores;
    scores.reserve(eval_set.size());
    for (std::size_t i = 0; i < eval_set.size(); ++i)
        scores.push_back(model.score(eval_set.features.row(i)));
    return margin_from_scores(scores, eval_set.labels, bands);
}

double select_threshold(const MarginReport& report, const ThresholdPolicy& policy) {
    if (report.bands.empty()) throw invalid_argument("empty margin report");

    const MarginBand* best = nullptr;
    for (const MarginBand& band : report.bands) {
        const bool qualifies = policy.kind == ThresholdPolicy::Kind::ZeroFnMinFp
                                   ? band.attack_misclassified == 0
                                   : band.fp_rate <= policy.max_fp;
        if (!qualifies) continue;
        if (best == nullptr) {
            best = &band;
            continue;
        }
        // zero_fn_min_fp minimizes FP; target_fp minimizes FN. Then prefer the
        // wider band; final tie goes to the higher lower bound.
        const std::uint64_t cand_primary = policy.kind == ThresholdPolicy::Kind::ZeroFnMinFp
                                               ? band.normal_misclassified
                                               : band.attack_misclassified;
        const std::uint64_t best_primary = policy.kind == ThresholdPolicy::Kind::ZeroFnMinFp
                                               ? best->normal_misclassified
                                               : best->attack_misclassified;
        if (cand_primary != best_primary) {
            if (cand_primary < best_primary) best = &band;
            continue;
        }
        const double cand_width = band.upper - band.lower;
        const double best_width = best->upper - best->lower;
        if (cand_width != best_width) {
            if (cand_width > best_width) best = &band;
            continue;
        }
        if (band.lower > best->lower) best = &band;
    }
    if (best == nullptr) throw error("no band satisfies policy");
    return 0.5 * (best->lower + best->upper);
}

}  // namespace avr
