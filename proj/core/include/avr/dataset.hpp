// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "avr/types.hpp"

namespace avr {

/// Dense row-major feature matrix.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    std::span<const double> row(std::size_t i) const {
        return {values_.data() + i * cols_, cols_};
    }
    std::span<double> row(std::size_t i) { return {values_.data() + i * cols_, cols_}; }

    double operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }
    double& operator()(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }

    void append_row(std::span<const double> r) {
        if (cols_ == 0) cols_ = r.size();
        if (r.size() != cols_) throw invalid_argument("row width mismatch");
        values_.insert(values_.end(), r.begin(), r.end());
        ++rows_;
    }

    const std::vector<double>& values() const { return values_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

struct LabeledDataset {
    FeatureMatrix features;
    std::vector<Label> labels;
    std::vector<std::string> feature_names;

    std::size_t size() const { return labels.size(); }
    std::size_t count(Label l) const;

    /// Row-subset view materialized as a new dataset.
    LabeledDataset select(std::span<const std::size_t> indices) const;
};

/// Binds canonical feature names to columns of a delimited-text table.
struct SchemaMap {
    /// (canonical feature name, column header) pairs; order fixes the
    /// feature-column order of the loaded dataset.
    std::vector<std::pair<std::string, std::string>> features;
    std::string label_column;
    char delimiter = ',';

    static SchemaMap from_json_file(const std::filesystem::path& path);
    static SchemaMap from_json(const std::string& json_text);
};

struct LoadResult {
    LabeledDataset dataset;
    std::size_t rows_dropped = 0;  // rows with missing or non-finite cells
    std::size_t n_normal = 0;
    std::size_t n_abnormal = 0;
};

/**
 * Load a delimited-text dataset (header row, UTF-8). Rows with missing or
 * non-finite feature cells are dropped and counted. Label cells accept
 * normal/abnormal (case-insensitive) or numeric 0 / nonzero.
 *
 * Throws error for a missing file, a mapped column absent from the header,
 * or zero usable rows.
 */
LoadResult load_avp_dataset(const std::filesystem::path& path, const SchemaMap& schema);

struct FoldAssignment {
    std::vector<std::size_t> fold_index_per_sample;  // values in [0, k)
    std::size_t k = 0;

    std::vector<std::size_t> indices_of(std::size_t fold) const;
    std::vector<std::size_t> indices_not_of(std::size_t fold) const;
};

/**
 * Stratified k-fold assignment: per-class counts of every fold are within
 * one sample of n_class/k. Deterministic in seed. Throws invalid_argument if
 * k < 2 or any class has fewer than k samples.
 */
FoldAssignment split_stratified(const LabeledDataset& dataset, std::size_t k, std::uint64_t seed);

/**
 * Balanced synthetic blinding dataset: trace batches with attack windows
 * covering ~half of each trace, run through the representation map.
 * Deterministic in seed. Used when the real vehicle dataset is not on disk.
 */
LabeledDataset make_blinding_dataset(std::size_t n_samples, std::uint64_t seed,
                                     double nominal_speed = 0.33);

}  // namespace avr
