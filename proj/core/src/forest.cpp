// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>

#include "avr/detector.hpp"

namespace avr {

namespace {

struct SplitResult {
    bool found = false;
    double threshold = 0.0;
    double impurity = 0.0;  // weighted child Gini, lower is better
};

double gini(std::int64_t abnormal, std::int64_t total) {
    if (total == 0) return 0.0;
    const double p = static_cast<double>(abnormal) / static_cast<double>(total);
    return 2.0 * p * (1.0 - p);
}

/// Exact best split of one feature over the node's samples: sort by value,
/// sweep boundaries between distinct values. Class counts at a boundary
/// cover whole equal-value blocks, so tie order inside a block cannot change
/// the outcome.
SplitResult best_split_on_feature(const FeatureMatrix& x, const std::vector<Label>& y,
                                  const std::vector<std::size_t>& node, std::size_t feature,
                                  std::vector<std::pair<double, Label>>& scratch) {
    scratch.clear();
    for (std::size_t i : node) scratch.emplace_back(x(i, feature), y[i]);
    std::sort(scratch.begin(), scratch.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    const auto n = static_cast<std::int64_t>(scratch.size());
    std::int64_t total_abn = 0;
    for (const auto& [v, lab] : scratch) total_abn += lab == Label::Abnormal;

    SplitResult best;
    std::int64_t left_n = 0, left_abn = 0;
    for (std::int64_t i = 0; i + 1 < n; ++i) {
        ++left_n;
        left_abn += scratch[static_cast<std::size_t>(i)].second == Label::Abnormal;
        const double v = scratch[static_cast<std::size_t>(i)].first;
        const double next = scratch[static_cast<std::size_t>(i + 1)].first;
        if (v == next) continue;
        const std::int64_t right_n = n - left_n;
        const double impurity = (static_cast<double>(left_n) * gini(left_abn, left_n) +
                                 static_cast<double>(right_n) * gini(total_abn - left_abn, right_n)) /
                                static_cast<double>(n);
        if (!best.found || impurity < best.impurity) {
            best.found = true;
            best.impurity = impurity;
            best.threshold = v + (next - v) / 2.0;
        }
    }
    return best;
}

class TreeBuilder {
public:
    TreeBuilder(const FeatureMatrix& x, const std::vector<Label>& y, const RfParams& params,
                Rng& rng)
        : x_(x), y_(y), params_(params), rng_(rng) {}

    DecisionTree build(std::vector<std::size_t> root_indices) {
        tree_.nodes.clear();
        grow(std::move(root_indices), 0);
        return std::move(tree_);
    }

private:
    std::int32_t make_leaf(const std::vector<std::size_t>& node) {
        std::int64_t abn = 0;
        for (std::size_t i : node) abn += y_[i] == Label::Abnormal;
        TreeNode leaf;
        // strict majority votes Abnormal; a tie stays Normal
        leaf.leaf = 2 * abn > static_cast<std::int64_t>(node.size()) ? Label::Abnormal : Label::Normal;
        tree_.nodes.push_back(leaf);
        return static_cast<std::int32_t>(tree_.nodes.size() - 1);
    }

    std::int32_t grow(std::vector<std::size_t> node, int depth) {
        std::int64_t abn = 0;
        for (std::size_t i : node) abn += y_[i] == Label::Abnormal;
        const bool pure = abn == 0 || abn == static_cast<std::int64_t>(node.size());
        if (pure || depth >= params_.max_depth ||
            node.size() < static_cast<std::size_t>(params_.min_samples_split))
            return make_leaf(node);

        const std::size_t d = x_.cols();
        std::size_t m = params_.max_features > 0
                            ? std::min<std::size_t>(static_cast<std::size_t>(params_.max_features), d)
                            : std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));

        // Random feature order; examine m candidates and keep going past m
        // only while no candidate produced a valid split.
        std::vector<std::size_t> order(d);
        std::iota(order.begin(), order.end(), 0);
        rng_.shuffle(order);

        SplitResult best;
        std::size_t best_feature = 0;
        std::size_t examined = 0;
        for (std::size_t f : order) {
            if (examined >= m && best.found) break;
            ++examined;
            const SplitResult s = best_split_on_feature(x_, y_, node, f, scratch_);
            if (s.found && (!best.found || s.impurity < best.impurity)) {
                best = s;
                best_feature = f;
            }
        }
        if (!best.found) return make_leaf(node);  // every feature constant in this node

        std::vector<std::size_t> left, right;
        for (std::size_t i : node) {
            (x_(i, best_feature) <= best.threshold ? left : right).push_back(i);
        }
        node.clear();
        node.shrink_to_fit();

        TreeNode split;
        split.feature = static_cast<std::int32_t>(best_feature);
        split.threshold = best.threshold;
        tree_.nodes.push_back(split);
        const auto self = static_cast<std::int32_t>(tree_.nodes.size() - 1);
        const std::int32_t l = grow(std::move(left), depth + 1);
        const std::int32_t r = grow(std::move(right), depth + 1);
        tree_.nodes[static_cast<std::size_t>(self)].left = l;
        tree_.nodes[static_cast<std::size_t>(self)].right = r;
        return self;
    }

    const FeatureMatrix& x_;
    const std::vector<Label>& y_;
    const RfParams& params_;
    Rng& rng_;
    DecisionTree tree_;
    std::vector<std::pair<double, Label>> scratch_;
};

}  // namespace

Label DecisionTree::predict(std::span<const double> x) const {
    std::int32_t at = 0;
    while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
        const TreeNode& n = nodes[static_cast<std::size_t>(at)];
        at = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(at)].leaf;
}

DecisionTree train_tree(const FeatureMatrix& x, const std::vector<Label>& y, const RfParams& params,
                        Rng& rng) {
    std::vector<std::size_t> indices;
    const std::size_t n = x.rows();
    indices.reserve(n);
    if (params.bootstrap) {
        for (std::size_t i = 0; i < n; ++i) indices.push_back(rng.below(n));
    } else {
        indices.resize(n);
        std::iota(indices.begin(), indices.end(), 0);
    }
    return TreeBuilder(x, y, params, rng).build(std::move(indices));
}

}  // namespace avr
