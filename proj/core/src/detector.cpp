// SPDX-License-Identifier: Apache-2.0
#include "avr/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace avr {

using ordered_json = nlohmann::ordered_json;

const char* to_string(DetectorKind kind) {
    switch (kind) {
        case DetectorKind::RandomForest: return "rf";
        case DetectorKind::LogisticRegression: return "lr";
        case DetectorKind::KNearestNeighbor: return "knn";
    }
    return "rf";
}

DetectorKind detector_kind_from_string(const std::string& s) {
    if (s == "rf" || s == "random_forest") return DetectorKind::RandomForest;
    if (s == "lr" || s == "logistic_regression") return DetectorKind::LogisticRegression;
    if (s == "knn" || s == "k_nearest_neighbor") return DetectorKind::KNearestNeighbor;
    throw invalid_argument("unknown detector kind: " + s);
}

void StandardScaler::fit(const FeatureMatrix& x) {
    const std::size_t n = x.rows(), d = x.cols();
    mean.assign(d, 0.0);
    stddev.assign(d, 1.0);
    if (n == 0) return;
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = x.row(i);
        for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
    }
    for (double& m : mean) m /= static_cast<double>(n);
    std::vector<double> ss(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = x.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double delta = row[j] - mean[j];
            ss[j] += delta * delta;
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        const double var = ss[j] / static_cast<double>(n);
        stddev[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
}

std::vector<double> StandardScaler::transform(std::span<const double> row) const {
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - mean[j]) / stddev[j];
    return out;
}

FeatureMatrix StandardScaler::transform(const FeatureMatrix& x) const {
    FeatureMatrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto src = x.row(i);
        auto dst = out.row(i);
        for (std::size_t j = 0; j < x.cols(); ++j) dst[j] = (src[j] - mean[j]) / stddev[j];
    }
    return out;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

LinearModel fit_logistic(const FeatureMatrix& x, const std::vector<Label>& y, const LrParams& p) {
    const std::size_t n = x.rows(), d = x.cols();
    LinearModel m;
    m.weights.assign(d, 0.0);
    m.bias = 0.0;
    std::vector<double> grad(d);
    for (int it = 0; it < p.iterations; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double grad_b = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = x.row(i);
            double z = m.bias;
            for (std::size_t j = 0; j < d; ++j) z += m.weights[j] * row[j];
            const double err = sigmoid(z) - (y[i] == Label::Abnormal ? 1.0 : 0.0);
            for (std::size_t j = 0; j < d; ++j) grad[j] += err * row[j];
            grad_b += err;
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t j = 0; j < d; ++j)
            m.weights[j] -= p.learning_rate * (grad[j] * inv_n + p.l2 * m.weights[j]);
        m.bias -= p.learning_rate * grad_b * inv_n;
    }
    return m;
}

void validate_hyperparams(DetectorKind kind, const Hyperparams& params, std::size_t n) {
    switch (kind) {
        case DetectorKind::RandomForest:
            if (params.rf.n_trees < 1) throw invalid_argument("rf: n_trees must be >= 1");
            if (params.rf.max_depth < 1) throw invalid_argument("rf: max_depth must be >= 1");
            if (params.rf.min_samples_split < 2)
                throw invalid_argument("rf: min_samples_split must be >= 2");
            break;
        case DetectorKind::LogisticRegression:
            if (params.lr.iterations < 1) throw invalid_argument("lr: iterations must be >= 1");
            if (params.lr.learning_rate <= 0.0)
                throw invalid_argument("lr: learning_rate must be > 0");
            if (params.lr.l2 < 0.0) throw invalid_argument("lr: l2 must be >= 0");
            break;
        case DetectorKind::KNearestNeighbor:
            if (params.knn.k < 1 || static_cast<std::size_t>(params.knn.k) > n)
                throw invalid_argument("knn: k must satisfy 1 <= k <= n");
            break;
    }
}

}  // namespace

DetectorModel fit(const LabeledDataset& dataset, DetectorKind kind, const Hyperparams& params,
                  std::uint64_t seed) {
    const std::size_t n = dataset.size();
    if (n == 0) throw invalid_argument("empty training set");
    if (dataset.features.rows() != n) throw invalid_argument("feature/label row mismatch");
    const std::size_t n_abn = dataset.count(Label::Abnormal);
    if (n_abn == 0 || n_abn == n)
        throw invalid_argument("training set must contain both classes");
    validate_hyperparams(kind, params, n);

    DetectorModel model;
    model.kind = kind;
    model.params = params;
    model.feature_names = dataset.feature_names;
    model.scaler.fit(dataset.features);
    const FeatureMatrix scaled = model.scaler.transform(dataset.features);

    Rng rng(seed);
    switch (kind) {
        case DetectorKind::RandomForest: {
            Forest forest;
            forest.trees.reserve(static_cast<std::size_t>(params.rf.n_trees));
            for (int t = 0; t < params.rf.n_trees; ++t) {
                Rng tree_rng = rng.fork(static_cast<std::uint64_t>(t));
                forest.trees.push_back(train_tree(scaled, dataset.labels, params.rf, tree_rng));
            }
            model.memory = std::move(forest);
            break;
        }
        case DetectorKind::LogisticRegression:
            model.memory = fit_logistic(scaled, dataset.labels, params.lr);
            break;
        case DetectorKind::KNearestNeighbor: {
            KnnMemory mem;
            mem.points = scaled;
            mem.labels = dataset.labels;
            model.memory = std::move(mem);
            break;
        }
    }
    return model;
}

double DetectorModel::score(std::span<const double> x) const {
    if (x.size() != feature_names.size())
        throw invalid_argument("feature count mismatch: got " + std::to_string(x.size()) +
                               ", model expects " + std::to_string(feature_names.size()));
    for (double v : x)
        if (!std::isfinite(v)) throw invalid_argument("non-finite feature value");

    const std::vector<double> z = scaler.transform(x);

    if (const auto* forest = std::get_if<Forest>(&memory)) {
        if (forest->trees.empty()) throw error("forest memory is empty");
        std::size_t abnormal_votes = 0;
        for (const auto& tree : forest->trees)
            abnormal_votes += tree.predict(z) == Label::Abnormal;
        return static_cast<double>(abnormal_votes) / static_cast<double>(forest->trees.size());
    }
    if (const auto* lin = std::get_if<LinearModel>(&memory)) {
        double resp = lin->bias;
        for (std::size_t j = 0; j < z.size(); ++j) resp += lin->weights[j] * z[j];
        return sigmoid(resp);
    }
    const auto& knn = std::get<KnnMemory>(memory);
    const std::size_t n = knn.points.rows();
    if (n == 0) throw error("knn memory is empty");
    const auto k = static_cast<std::size_t>(params.knn.k);
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = knn.points.row(i);
        double d2 = 0.0;
        for (std::size_t j = 0; j < z.size(); ++j) {
            const double delta = p[j] - z[j];
            d2 += delta * delta;
        }
        dist[i] = {d2, i};
    }
    // ties broken by training index, so the neighbor set is deterministic
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
    std::size_t abnormal = 0;
    for (std::size_t i = 0; i < k; ++i) abnormal += knn.labels[dist[i].second] == Label::Abnormal;
    return static_cast<double>(abnormal) / static_cast<double>(k);
}

Label DetectorModel::classify(std::span<const double> x) const {
    return score(x) > threshold ? Label::Abnormal : Label::Normal;
}

// ---- serialization ----

namespace {

ordered_json params_to_json(DetectorKind kind, const Hyperparams& p) {
    ordered_json j;
    switch (kind) {
        case DetectorKind::RandomForest:
            j["n_trees"] = p.rf.n_trees;
            j["max_depth"] = p.rf.max_depth;
            j["max_features"] = p.rf.max_features;
            j["bootstrap"] = p.rf.bootstrap;
            j["min_samples_split"] = p.rf.min_samples_split;
            break;
        case DetectorKind::LogisticRegression:
            j["iterations"] = p.lr.iterations;
            j["learning_rate"] = p.lr.learning_rate;
            j["l2"] = p.lr.l2;
            break;
        case DetectorKind::KNearestNeighbor:
            j["k"] = p.knn.k;
            break;
    }
    return j;
}

ordered_json matrix_to_json(const FeatureMatrix& m) {
    ordered_json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    j["values"] = m.values();
    return j;
}

FeatureMatrix matrix_from_json(const ordered_json& j) {
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    const auto values = j.at("values").get<std::vector<double>>();
    if (values.size() != rows * cols) throw error("matrix payload size mismatch");
    FeatureMatrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t jx = 0; jx < cols; ++jx) m(i, jx) = values[i * cols + jx];
    return m;
}

std::vector<Label> labels_from_json(const ordered_json& j) {
    std::vector<Label> labels;
    for (const auto& v : j) labels.push_back(v.get<int>() ? Label::Abnormal : Label::Normal);
    return labels;
}

}  // namespace

std::string model_to_json(const DetectorModel& model) {
    ordered_json j;
    j["kind"] = to_string(model.kind);
    j["hyperparams"] = params_to_json(model.kind, model.params);
    j["threshold"] = model.threshold;
    j["feature_names"] = model.feature_names;

    ordered_json mem;
    mem["scaler"] = {{"mean", model.scaler.mean}, {"stddev", model.scaler.stddev}};
    if (const auto* forest = std::get_if<Forest>(&model.memory)) {
        ordered_json trees = ordered_json::array();
        for (const auto& tree : forest->trees) {
            ordered_json nodes = ordered_json::array();
            for (const auto& n : tree.nodes)
                nodes.push_back({n.feature, n.threshold, n.left, n.right,
                                 n.leaf == Label::Abnormal ? 1 : 0});
            trees.push_back(std::move(nodes));
        }
        mem["trees"] = std::move(trees);
    } else if (const auto* lin = std::get_if<LinearModel>(&model.memory)) {
        mem["weights"] = lin->weights;
        mem["bias"] = lin->bias;
    } else {
        const auto& knn = std::get<KnnMemory>(model.memory);
        mem["points"] = matrix_to_json(knn.points);
        ordered_json labs = ordered_json::array();
        for (Label l : knn.labels) labs.push_back(l == Label::Abnormal ? 1 : 0);
        mem["labels"] = std::move(labs);
    }
    j["memory"] = std::move(mem);
    return j.dump(2) + "\n";
}

DetectorModel model_from_json(const std::string& json_text) {
    ordered_json j;
    try {
        j = ordered_json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw error(std::string("model parse failure: ") + e.what());
    }
    DetectorModel model;
    try {
        model.kind = detector_kind_from_string(j.at("kind").get<std::string>());
        const auto& hp = j.at("hyperparams");
        switch (model.kind) {
            case DetectorKind::RandomForest:
                model.params.rf.n_trees = hp.at("n_trees").get<int>();
                model.params.rf.max_depth = hp.at("max_depth").get<int>();
                model.params.rf.max_features = hp.at("max_features").get<int>();
                model.params.rf.bootstrap = hp.at("bootstrap").get<bool>();
                model.params.rf.min_samples_split = hp.at("min_samples_split").get<int>();
                break;
            case DetectorKind::LogisticRegression:
                model.params.lr.iterations = hp.at("iterations").get<int>();
                model.params.lr.learning_rate = hp.at("learning_rate").get<double>();
                model.params.lr.l2 = hp.at("l2").get<double>();
                break;
            case DetectorKind::KNearestNeighbor:
                model.params.knn.k = hp.at("k").get<int>();
                break;
        }
        model.threshold = j.at("threshold").get<double>();
        if (model.threshold < 0.0 || model.threshold > 1.0)
            throw error("threshold outside [0, 1]");
        model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        const auto& mem = j.at("memory");
        model.scaler.mean = mem.at("scaler").at("mean").get<std::vector<double>>();
        model.scaler.stddev = mem.at("scaler").at("stddev").get<std::vector<double>>();
        switch (model.kind) {
            case DetectorKind::RandomForest: {
                Forest forest;
                for (const auto& jt : mem.at("trees")) {
                    DecisionTree tree;
                    for (const auto& jn : jt) {
                        TreeNode n;
                        n.feature = jn.at(0).get<std::int32_t>();
                        n.threshold = jn.at(1).get<double>();
                        n.left = jn.at(2).get<std::int32_t>();
                        n.right = jn.at(3).get<std::int32_t>();
                        n.leaf = jn.at(4).get<int>() ? Label::Abnormal : Label::Normal;
                        tree.nodes.push_back(n);
                    }
                    if (tree.nodes.empty()) throw error("empty tree in model");
                    forest.trees.push_back(std::move(tree));
                }
                if (forest.trees.empty()) throw error("model memory has no trees");
                model.memory = std::move(forest);
                break;
            }
            case DetectorKind::LogisticRegression: {
                LinearModel lin;
                lin.weights = mem.at("weights").get<std::vector<double>>();
                lin.bias = mem.at("bias").get<double>();
                model.memory = std::move(lin);
                break;
            }
            case DetectorKind::KNearestNeighbor: {
                KnnMemory knn;
                knn.points = matrix_from_json(mem.at("points"));
                knn.labels = labels_from_json(mem.at("labels"));
                if (knn.points.rows() != knn.labels.size())
                    throw error("knn memory row/label mismatch");
                model.memory = std::move(knn);
                break;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw error(std::string("model field error: ") + e.what());
    }
    return model;
}

void save_model(const DetectorModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot open " + path.string() + " for writing");
    out << model_to_json(model);
}

DetectorModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open model file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

}  // namespace avr
