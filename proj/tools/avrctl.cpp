// SPDX-License-Identifier: Apache-2.0
//
// avrctl: command-line supervisor for the resilient perception pipeline.
// Subcommands cover detector training/evaluation, threshold tuning,
// integrity baselines and verification, attack-scenario simulation, batch
// sweeps, the threat catalog, and report re-rendering.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "avr/dataset.hpp"
#include "avr/detector.hpp"
#include "avr/evaluation.hpp"
#include "avr/features.hpp"
#include "avr/integrity.hpp"
#include "avr/report.hpp"
#include "avr/rng.hpp"
#include "avr/scenario.hpp"
#include "avr/schedule.hpp"
#include "avr/threats.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

int g_exit = 0;  // operational-failure code set by handlers (verify on Mismatch)

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw avr::error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw avr::error("cannot write " + path.string());
    out << text;
}

std::uint64_t env_default_seed() {
    if (const char* env = std::getenv("AVR_SEED")) {
        try {
            return std::stoull(env);
        } catch (...) {
            throw avr::invalid_argument("AVR_SEED must be an unsigned integer");
        }
    }
    return 1;
}

// Settings resolve as: explicit flag > config-file key > built-in default.
class ConfigLayer {
public:
    void load(const std::string& path) {
        if (path.empty()) return;
        try {
            cfg_ = ordered_json::parse(read_file(path));
        } catch (const nlohmann::json::exception& e) {
            throw avr::invalid_argument("unreadable config " + path + ": " + e.what());
        }
    }

    template <typename T>
    void merge(const CLI::Option* opt, const char* key, T& value) const {
        if (opt != nullptr && opt->count() > 0) return;
        if (!cfg_.contains(key)) return;
        try {
            value = cfg_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw avr::invalid_argument(std::string("bad config value for ") + key + ": " +
                                        e.what());
        }
    }

private:
    ordered_json cfg_ = ordered_json::object();
};

// ---- dataset plumbing shared by train / evaluate / tune-threshold ----

struct DataArgs {
    std::string dataset;  // delimited text file; empty = synthetic
    std::string schema;   // schema-map JSON; empty = canonical identity map
    std::size_t synthetic = 20000;
    CLI::Option* dataset_opt = nullptr;
    CLI::Option* schema_opt = nullptr;
    CLI::Option* synthetic_opt = nullptr;

    void add_to(CLI::App* cmd) {
        dataset_opt = cmd->add_option("--dataset", dataset,
                                      "Labeled dataset file (header row, delimited text)");
        schema_opt = cmd->add_option("--schema", schema,
                                     "Schema map JSON binding canonical features to columns");
        synthetic_opt = cmd->add_option(
            "--synthetic", synthetic,
            "Synthetic blinding-dataset size used when no --dataset is given");
    }

    void merge(const ConfigLayer& cfg) {
        cfg.merge(dataset_opt, "dataset", dataset);
        cfg.merge(schema_opt, "schema", schema);
        cfg.merge(synthetic_opt, "synthetic", synthetic);
    }

    avr::LabeledDataset acquire(std::uint64_t seed) const {
        if (!dataset.empty()) {
            avr::SchemaMap map;
            if (!schema.empty()) {
                map = avr::SchemaMap::from_json_file(schema);
            } else {
                for (const auto& name : avr::feature_names()) map.features.push_back({name, name});
                map.label_column = "label";
            }
            const avr::LoadResult loaded = avr::load_avp_dataset(dataset, map);
            std::cerr << "loaded " << loaded.dataset.size() << " samples ("
                      << loaded.n_normal << " normal, " << loaded.n_abnormal << " abnormal, "
                      << loaded.rows_dropped << " dropped)\n";
            return loaded.dataset;
        }
        return avr::make_blinding_dataset(synthetic, avr::Rng(seed).fork(0xda7a).seed());
    }
};

struct HyperArgs {
    avr::Hyperparams hp;
    CLI::Option* trees_opt = nullptr;
    CLI::Option* depth_opt = nullptr;
    CLI::Option* iters_opt = nullptr;
    CLI::Option* lr_opt = nullptr;
    CLI::Option* k_opt = nullptr;

    void add_to(CLI::App* cmd) {
        trees_opt = cmd->add_option("--trees", hp.rf.n_trees, "Random-forest tree count");
        depth_opt = cmd->add_option("--depth", hp.rf.max_depth, "Random-forest max depth");
        iters_opt = cmd->add_option("--iterations", hp.lr.iterations,
                                    "Logistic-regression gradient steps");
        lr_opt = cmd->add_option("--learning-rate", hp.lr.learning_rate,
                                 "Logistic-regression learning rate");
        k_opt = cmd->add_option("--k", hp.knn.k, "kNN neighbor count");
    }

    void merge(const ConfigLayer& cfg) {
        cfg.merge(trees_opt, "trees", hp.rf.n_trees);
        cfg.merge(depth_opt, "depth", hp.rf.max_depth);
        cfg.merge(iters_opt, "iterations", hp.lr.iterations);
        cfg.merge(lr_opt, "learning_rate", hp.lr.learning_rate);
        cfg.merge(k_opt, "k", hp.knn.k);
    }
};

std::vector<std::pair<double, double>> parse_bands(const std::vector<std::string>& specs) {
    std::vector<std::pair<double, double>> bands;
    for (const std::string& s : specs) {
        const auto colon = s.find(':');
        if (colon == std::string::npos)
            throw avr::invalid_argument("band must be lower:upper, got " + s);
        try {
            bands.push_back({std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))});
        } catch (const std::exception&) {
            throw avr::invalid_argument("band must be numeric lower:upper, got " + s);
        }
    }
    return bands;
}

avr::Scenario scenario_preset(const std::string& name) {
    avr::Scenario s;
    s.name = name;
    if (name == "quiet") {
        s.detector.enabled = false;
        return s;
    }
    if (name == "tamper-timeline") {
        s.tampers.push_back({"perception-model", 25.0, "flip_bytes"});
        s.detector.enabled = false;
        return s;
    }
    if (name == "stop-sign" || name == "stop-sign-nocoord") {
        s.tampers.push_back({"perception-model", 10.0, "flip_bytes"});
        s.vehicle.stop_sign_time = 20.0;
        s.detector.enabled = false;
        s.coordinator.enabled = name == "stop-sign";
        return s;
    }
    if (name == "blinding") {
        s.blinding.push_back({10.0, 15.0});
        s.detector.enabled = true;
        s.detector.kind = avr::DetectorKind::RandomForest;
        s.detector.threshold = 0.45;
        return s;
    }
    throw avr::invalid_argument(
        "unknown preset: " + name +
        " (available: quiet, tamper-timeline, stop-sign, stop-sign-nocoord, blinding)");
}

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

// ---- subcommand registration ----

void register_train(CLI::App& app) {
    auto* cmd = app.add_subcommand("train", "Train a detector and write model.json");
    struct TrainOpts {
        std::string config, model = "rf", out = ".";
        std::uint64_t seed = 0;
        double threshold = 0.5;
        DataArgs data;
        HyperArgs hyper;
        CLI::Option *model_opt, *out_opt, *seed_opt, *threshold_opt;
    };
    auto opts = std::make_shared<TrainOpts>();
    cmd->add_option("--config", opts->config, "JSON config file");
    opts->data.add_to(cmd);
    opts->hyper.add_to(cmd);
    opts->model_opt = cmd->add_option("--model", opts->model, "Detector kind: rf, lr, knn");
    opts->seed_opt = cmd->add_option("--seed", opts->seed, "Random seed (default: AVR_SEED or 1)");
    opts->threshold_opt = cmd->add_option("--threshold", opts->threshold, "Alarm threshold in [0,1]");
    opts->out_opt = cmd->add_option("--out", opts->out, "Output directory");
    cmd->callback([opts] {
        ConfigLayer cfg;
        cfg.load(opts->config);
        opts->data.merge(cfg);
        opts->hyper.merge(cfg);
        cfg.merge(opts->model_opt, "model", opts->model);
        cfg.merge(opts->threshold_opt, "threshold", opts->threshold);
        cfg.merge(opts->out_opt, "out", opts->out);
        std::uint64_t seed = env_default_seed();
        cfg.merge(nullptr, "seed", seed);
        if (opts->seed_opt->count() > 0) seed = opts->seed;

        const avr::DetectorKind kind = avr::detector_kind_from_string(opts->model);
        const avr::LabeledDataset data = opts->data.acquire(seed);
        avr::DetectorModel model =
            avr::fit(data, kind, opts->hyper.hp, avr::Rng(seed).fork(0x7aa1).seed());
        model.threshold = opts->threshold;
        const fs::path out_path = fs::path(opts->out) / "model.json";
        fs::create_directories(opts->out);
        avr::save_model(model, out_path);
        std::cout << "wrote " << out_path.string() << "\n";
    });
}

void register_evaluate(CLI::App& app) {
    auto* cmd =
        app.add_subcommand("evaluate", "Cross-validate detectors and write a metrics report");
    struct EvaluateOpts {
        std::string config, out = ".";
        std::vector<std::string> models = {"rf"};
        std::size_t folds = 5;
        std::uint64_t seed = 0;
        bool parallel = false;
        DataArgs data;
        HyperArgs hyper;
        CLI::Option *models_opt, *folds_opt, *seed_opt, *out_opt, *parallel_opt;
    };
    auto opts = std::make_shared<EvaluateOpts>();
    cmd->add_option("--config", opts->config, "JSON config file");
    opts->data.add_to(cmd);
    opts->hyper.add_to(cmd);
    opts->models_opt =
        cmd->add_option("--model", opts->models, "Detector kind (repeatable): rf, lr, knn");
    opts->folds_opt = cmd->add_option("--folds", opts->folds, "Cross-validation fold count");
    opts->seed_opt = cmd->add_option("--seed", opts->seed, "Random seed (default: AVR_SEED or 1)");
    opts->out_opt = cmd->add_option("--out", opts->out, "Output directory");
    opts->parallel_opt =
        cmd->add_flag("--parallel", opts->parallel, "Evaluate folds on worker threads");
    cmd->callback([opts] {
        ConfigLayer cfg;
        cfg.load(opts->config);
        opts->data.merge(cfg);
        opts->hyper.merge(cfg);
        cfg.merge(opts->models_opt, "models", opts->models);
        cfg.merge(opts->folds_opt, "folds", opts->folds);
        cfg.merge(opts->out_opt, "out", opts->out);
        cfg.merge(opts->parallel_opt, "parallel", opts->parallel);
        std::uint64_t seed = env_default_seed();
        cfg.merge(nullptr, "seed", seed);
        if (opts->seed_opt->count() > 0) seed = opts->seed;

        const avr::LabeledDataset data = opts->data.acquire(seed);
        avr::MetricsTable table;
        for (const std::string& name : opts->models) {
            const avr::DetectorKind kind = avr::detector_kind_from_string(name);
            const avr::CvResult cv = avr::cross_validate(data, kind, opts->hyper.hp, opts->folds,
                                                         seed, opts->parallel);
            table.columns.push_back({name, cv.mean});
        }
        fs::create_directories(opts->out);
        write_file(fs::path(opts->out) / "metrics.json", avr::metrics_to_json(table));
        write_file(fs::path(opts->out) / "metrics.csv", avr::metrics_to_csv(table));
        write_file(fs::path(opts->out) / "metrics.md", avr::metrics_to_markdown(table));
        std::cout << avr::metrics_to_markdown(table);
    });
}

void register_tune_threshold(CLI::App& app) {
    auto* cmd = app.add_subcommand(
        "tune-threshold", "Margin analysis on a held-out fold plus threshold selection");
    struct TuneOpts {
        std::string config, model = "rf", out = ".";
        std::size_t folds = 5;
        std::uint64_t seed = 0;
        std::vector<std::string> bands = {"0.4:0.5", "0.3:0.5", "0.4:0.6", "0.3:0.6"};
        double max_fp = -1.0;
        DataArgs data;
        HyperArgs hyper;
        CLI::Option *model_opt, *folds_opt, *seed_opt, *out_opt, *bands_opt, *max_fp_opt;
    };
    auto opts = std::make_shared<TuneOpts>();
    cmd->add_option("--config", opts->config, "JSON config file");
    opts->data.add_to(cmd);
    opts->hyper.add_to(cmd);
    opts->model_opt = cmd->add_option("--model", opts->model, "Detector kind: rf, lr, knn");
    opts->folds_opt =
        cmd->add_option("--folds", opts->folds, "Fold count; fold 0 is the evaluation fold");
    opts->seed_opt = cmd->add_option("--seed", opts->seed, "Random seed (default: AVR_SEED or 1)");
    opts->bands_opt =
        cmd->add_option("--band", opts->bands, "Candidate band lower:upper (repeatable)");
    opts->max_fp_opt = cmd->add_option(
        "--max-fp", opts->max_fp, "Select by FP-rate cap instead of the zero-FN policy");
    opts->out_opt = cmd->add_option("--out", opts->out, "Output directory");
    cmd->callback([opts] {
        ConfigLayer cfg;
        cfg.load(opts->config);
        opts->data.merge(cfg);
        opts->hyper.merge(cfg);
        cfg.merge(opts->model_opt, "model", opts->model);
        cfg.merge(opts->folds_opt, "folds", opts->folds);
        cfg.merge(opts->bands_opt, "bands", opts->bands);
        cfg.merge(opts->max_fp_opt, "max_fp", opts->max_fp);
        cfg.merge(opts->out_opt, "out", opts->out);
        std::uint64_t seed = env_default_seed();
        cfg.merge(nullptr, "seed", seed);
        if (opts->seed_opt->count() > 0) seed = opts->seed;

        const avr::DetectorKind kind = avr::detector_kind_from_string(opts->model);
        const avr::LabeledDataset data = opts->data.acquire(seed);
        const avr::FoldAssignment folds = avr::split_stratified(data, opts->folds, seed);
        const avr::LabeledDataset train = data.select(folds.indices_not_of(0));
        const avr::LabeledDataset eval_fold = data.select(folds.indices_of(0));
        const avr::DetectorModel model =
            avr::fit(train, kind, opts->hyper.hp, avr::Rng(seed).fork(0x7aa1).seed());
        const avr::MarginReport margin =
            avr::margin_analysis(model, eval_fold, parse_bands(opts->bands));
        const avr::ThresholdPolicy policy = opts->max_fp >= 0.0
                                                ? avr::ThresholdPolicy::target_fp(opts->max_fp)
                                                : avr::ThresholdPolicy::zero_fn_min_fp();
        const double threshold = avr::select_threshold(margin, policy);

        fs::create_directories(opts->out);
        write_file(fs::path(opts->out) / "margin.json", avr::margin_to_json(margin));
        write_file(fs::path(opts->out) / "margin.csv", avr::margin_to_csv(margin));
        write_file(fs::path(opts->out) / "margin.md", avr::margin_to_markdown(margin));
        ordered_json jt;
        jt["type"] = "threshold";
        jt["policy"] = opts->max_fp >= 0.0 ? "target_fp" : "zero_fn_min_fp";
        if (opts->max_fp >= 0.0) jt["max_fp"] = opts->max_fp;
        jt["value"] = threshold;
        write_file(fs::path(opts->out) / "threshold.json", jt.dump(2) + "\n");
        std::cout << avr::margin_to_markdown(margin);
        std::cout << "selected threshold: " << threshold << "\n";
    });
}

void register_baseline(CLI::App& app) {
    auto* cmd = app.add_subcommand(
        "baseline", "Record trusted digests and backups for a manifest's artifacts");
    struct BaselineOpts {
        std::string config, manifest, backup_dir = "backups", out = ".", created_at;
        CLI::Option *manifest_opt, *backup_opt, *out_opt, *created_opt;
    };
    auto opts = std::make_shared<BaselineOpts>();
    cmd->add_option("--config", opts->config, "JSON config file");
    opts->manifest_opt =
        cmd->add_option("--manifest", opts->manifest, "Artifact manifest JSON")->required();
    opts->backup_opt = cmd->add_option("--backup-dir", opts->backup_dir,
                                       "Backup directory (relative to the manifest)");
    opts->out_opt = cmd->add_option("--out", opts->out, "Output directory");
    opts->created_opt = cmd->add_option("--created-at", opts->created_at,
                                        "Timestamp to record (default: current UTC time)");
    cmd->callback([opts] {
        ConfigLayer cfg;
        cfg.load(opts->config);
        cfg.merge(opts->backup_opt, "backup_dir", opts->backup_dir);
        cfg.merge(opts->out_opt, "out", opts->out);
        cfg.merge(opts->created_opt, "created_at", opts->created_at);
        const avr::ArtifactManifest manifest = avr::load_manifest(opts->manifest);
        const avr::TrustedBaseline baseline =
            avr::create_baseline(manifest, opts->backup_dir, opts->created_at);
        const fs::path out_path = fs::path(opts->out) / "baseline.json";
        fs::create_directories(opts->out);
        avr::save_baseline(baseline, out_path);
        std::cout << "wrote " << out_path.string() << " (" << baseline.entries.size()
                  << " artifacts)\n";
    });
}

void register_verify(CLI::App& app) {
    auto* cmd =
        app.add_subcommand("verify", "Validate artifacts against a baseline; exit 1 on mismatch");
    struct VerifyOpts {
        std::string config, manifest, baseline, log;
        std::vector<std::string> ids;
        CLI::Option *log_opt;
    };
    auto opts = std::make_shared<VerifyOpts>();
    cmd->add_option("--config", opts->config, "JSON config file");
    cmd->add_option("--manifest", opts->manifest, "Artifact manifest JSON")->required();
    cmd->add_option("--baseline", opts->baseline, "Trusted baseline JSON")->required();
    cmd->add_option("--id", opts->ids, "Validate only these artifact ids (repeatable)");
    opts->log_opt = cmd->add_option("--log", opts->log, "Append the event to this NDJSON log");
    cmd->callback([opts] {
        ConfigLayer cfg;
        cfg.load(opts->config);
        cfg.merge(opts->log_opt, "log", opts->log);
        const avr::ArtifactManifest manifest = avr::load_manifest(opts->manifest);
        const avr::TrustedBaseline baseline = avr::load_baseline(opts->baseline);
        const avr::ValidationEvent event =
            avr::validate_once(manifest, baseline, now_seconds(), opts->ids);
        if (!opts->log.empty()) avr::append_event_log(opts->log, event);
        std::cout << avr::validation_event_to_json(event) << "\n";
        if (event.result == avr::ValidationResult::Mismatch) g_exit = 1;
    });
}

void register_simulate(CLI::App& app) {
    auto* cmd = app.add_subcommand("simulate", "Run one attack scenario and write its report");
    struct SimulateOpts {
        std::string config, scenario, preset, out = ".", work_dir, policy;
        std::uint64_t seed = 0;
        double interval = 0.0;
        CLI::Option *scenario_opt, *preset_opt, *out_opt, *work_opt, *seed_opt, *policy_opt,
            *interval_opt;
    };
    auto opts = std::make_shared<SimulateOpts>();
    cmd->add_option("--config", opts->config, "JSON config file");
    opts->scenario_opt = cmd->add_option("--scenario", opts->scenario, "Scenario JSON file");
    opts->preset_opt = cmd->add_option(
        "--preset", opts->preset,
        "Built-in scenario: quiet, tamper-timeline, stop-sign, stop-sign-nocoord, blinding");
    opts->seed_opt = cmd->add_option("--seed", opts->seed, "Override the scenario seed");
    opts->policy_opt = cmd->add_option("--policy", opts->policy,
                                       "Override schedule mode: fixed, staggered, event");
    opts->interval_opt =
        cmd->add_option("--interval", opts->interval, "Override validation interval (s)");
    opts->out_opt = cmd->add_option("--out", opts->out, "Output directory");
    opts->work_opt =
        cmd->add_option("--work-dir", opts->work_dir, "Simulated store directory (default out/work)");
    cmd->callback([opts] {
        ConfigLayer cfg;
        cfg.load(opts->config);
        cfg.merge(opts->scenario_opt, "scenario", opts->scenario);
        cfg.merge(opts->preset_opt, "preset", opts->preset);
        cfg.merge(opts->policy_opt, "policy", opts->policy);
        cfg.merge(opts->interval_opt, "interval", opts->interval);
        cfg.merge(opts->out_opt, "out", opts->out);
        cfg.merge(opts->work_opt, "work_dir", opts->work_dir);

        avr::Scenario scenario;
        if (!opts->scenario.empty())
            scenario = avr::load_scenario(opts->scenario);
        else if (!opts->preset.empty())
            scenario = scenario_preset(opts->preset);
        else
            throw avr::invalid_argument("simulate needs --scenario or --preset");
        if (opts->seed_opt->count() > 0) scenario.seed = opts->seed;
        if (!opts->policy.empty()) {
            const avr::ScheduleMode mode = avr::schedule_mode_from_string(opts->policy);
            if (mode == avr::ScheduleMode::FixedInterval)
                scenario.schedule = avr::SchedulePolicy::fixed(scenario.schedule.interval_s);
            else if (mode == avr::ScheduleMode::Staggered)
                scenario.schedule = avr::SchedulePolicy::staggered_even(
                    scenario.schedule.interval_s, avr::scenario_artifact_ids().size());
            else
                scenario.schedule = avr::SchedulePolicy::event_driven(
                    {avr::Trigger::OnUpdate, avr::Trigger::OnCheckpoint});
        }
        if (opts->interval_opt->count() > 0 || opts->interval > 0.0) {
            if (opts->interval <= 0.0)
                throw avr::invalid_argument("--interval must be > 0");
            scenario.schedule.interval_s = opts->interval;
            if (scenario.schedule.mode == avr::ScheduleMode::Staggered)
                scenario.schedule = avr::SchedulePolicy::staggered_even(
                    opts->interval, avr::scenario_artifact_ids().size());
        }

        const fs::path out_dir(opts->out);
        const fs::path work =
            opts->work_dir.empty() ? out_dir / "work" : fs::path(opts->work_dir);
        const avr::ScenarioReport report = avr::run_scenario(scenario, work);
        fs::create_directories(out_dir);
        write_file(out_dir / "scenario.json", avr::scenario_to_json(scenario));
        write_file(out_dir / "report.json", avr::report_to_json(report));
        write_file(out_dir / "speed.csv", avr::speed_profile_to_csv(report));
        std::cout << "final mode: " << avr::to_string(report.final_mode) << ", timeline events: "
                  << report.timeline.size() << ", safety "
                  << (report.safety.ok() ? "ok" : "VIOLATED") << "\n";
    });
}

void register_batch(CLI::App& app) {
    auto* cmd = app.add_subcommand(
        "batch", "Sweep a speed-by-interval grid of tamper scenarios and tabulate detection");
    struct BatchOpts {
        std::string config, out = ".", work_dir;
        std::vector<double> speeds = {0.5, 0.75, 1.0, 1.25, 1.5, 1.75};
        std::vector<double> intervals = {1.0, 3.0, 5.0};
        std::size_t trials = 1, tampers = 5;
        std::uint64_t seed = 0;
        CLI::Option *speeds_opt, *intervals_opt, *trials_opt, *tampers_opt, *seed_opt, *out_opt,
            *work_opt;
    };
    auto opts = std::make_shared<BatchOpts>();
    cmd->add_option("--config", opts->config, "JSON config file");
    opts->speeds_opt =
        cmd->add_option("--speeds", opts->speeds, "Nominal speeds (m/s)")->delimiter(',');
    opts->intervals_opt =
        cmd->add_option("--intervals", opts->intervals, "Validation intervals (s)")->delimiter(',');
    opts->trials_opt = cmd->add_option("--trials", opts->trials, "Attack trials per cell");
    opts->tampers_opt = cmd->add_option("--tampers", opts->tampers, "Tamper events per trial");
    opts->seed_opt = cmd->add_option("--seed", opts->seed, "Random seed (default: AVR_SEED or 1)");
    opts->out_opt = cmd->add_option("--out", opts->out, "Output directory");
    opts->work_opt =
        cmd->add_option("--work-dir", opts->work_dir, "Simulated store directory (default out/work)");
    cmd->callback([opts] {
        ConfigLayer cfg;
        cfg.load(opts->config);
        cfg.merge(opts->speeds_opt, "speeds", opts->speeds);
        cfg.merge(opts->intervals_opt, "intervals", opts->intervals);
        cfg.merge(opts->trials_opt, "trials", opts->trials);
        cfg.merge(opts->tampers_opt, "tampers", opts->tampers);
        cfg.merge(opts->out_opt, "out", opts->out);
        cfg.merge(opts->work_opt, "work_dir", opts->work_dir);
        std::uint64_t seed = env_default_seed();
        cfg.merge(nullptr, "seed", seed);
        if (opts->seed_opt->count() > 0) seed = opts->seed;

        const fs::path out_dir(opts->out);
        const fs::path work =
            opts->work_dir.empty() ? out_dir / "work" : fs::path(opts->work_dir);
        const avr::BatchResult result = avr::batch_run(opts->speeds, opts->intervals,
                                                       opts->trials, seed, work, opts->tampers);
        fs::create_directories(out_dir);
        write_file(out_dir / "batch.json", avr::batch_to_json(result));
        write_file(out_dir / "batch.csv", avr::batch_to_csv(result));
        std::cout << avr::batch_to_markdown(result);
    });
}

void register_threats(CLI::App& app) {
    auto* cmd = app.add_subcommand("threats", "Print the layer threat catalog");
    struct ThreatsOpts {
        std::string layer, format = "markdown", out;
    };
    auto opts = std::make_shared<ThreatsOpts>();
    cmd->add_option("--layer", opts->layer, "Only the rows for this exact layer name");
    cmd->add_option("--format", opts->format, "Output format: json, markdown");
    cmd->add_option("--out", opts->out, "Also write the catalog to this directory");
    cmd->callback([opts] {
        const std::vector<avr::ThreatCatalogEntry> entries =
            opts->layer.empty() ? avr::threat_catalog() : avr::threats_for_layer(opts->layer);
        std::string text;
        if (opts->format == "json")
            text = avr::threats_to_json(entries);
        else if (opts->format == "markdown" || opts->format == "md")
            text = avr::threats_to_markdown(entries);
        else
            throw avr::invalid_argument("unsupported format for threats: " + opts->format);
        std::cout << text;
        if (!opts->out.empty()) {
            const char* name = opts->format == "json" ? "threats.json" : "threats.md";
            write_file(fs::path(opts->out) / name, text);
        }
    });
}

void register_report(CLI::App& app) {
    auto* cmd =
        app.add_subcommand("report", "Re-render a stored JSON report as json, csv, or markdown");
    struct ReportOpts {
        std::string in, format = "markdown", out;
    };
    auto opts = std::make_shared<ReportOpts>();
    cmd->add_option("--in", opts->in, "Report JSON produced by another subcommand")->required();
    cmd->add_option("--format", opts->format, "Output format: json, csv, markdown");
    cmd->add_option("--out", opts->out, "Write here instead of stdout");
    cmd->callback([opts] {
        const std::string text =
            avr::rerender_report(read_file(opts->in), avr::report_format_from_string(opts->format));
        if (opts->out.empty())
            std::cout << text;
        else
            write_file(opts->out, text);
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"avrctl: resilient perception-pipeline supervisor"};
    app.require_subcommand(1);
    register_train(app);
    register_evaluate(app);
    register_tune_threshold(app);
    register_baseline(app);
    register_verify(app);
    register_simulate(app);
    register_batch(app);
    register_threats(app);
    register_report(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // help/version print and exit 0; usage errors exit 2
    } catch (const avr::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return g_exit;
}
