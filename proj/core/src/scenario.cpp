// SPDX-License-Identifier: Apache-2.0
#include "avr/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <queue>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "avr/features.hpp"
#include "avr/rng.hpp"

namespace avr {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr double kEps = 1e-9;
constexpr double kStopRampSeconds = 1.0;
constexpr double kStopDwellSeconds = 2.0;

const char* kModelId = "perception-model";
const char* kConfigId = "detection-config";
const char* kClassMapId = "class-map";

std::string join_ids(const std::vector<std::string>& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) out += (i ? "," : "") + ids[i];
    return out;
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

bool known_mutation(const std::string& m) {
    return m == "flip_bytes" || m == "rewrite_threshold" || m == "truncate" || m == "delete";
}

}  // namespace

std::vector<std::string> scenario_artifact_ids() {
    return {kModelId, kConfigId, kClassMapId};
}

void check_scenario(const Scenario& sc) {
    if (!(sc.duration > 0.0)) throw invalid_argument("scenario duration must be > 0");
    if (!(sc.sample_rate > 0.0)) throw invalid_argument("sample rate must be > 0");
    if (sc.vehicle.nominal_speed < 0.0) throw invalid_argument("nominal speed must be >= 0");
    if (sc.vehicle.stop_sign_time >= 0.0 && sc.vehicle.stop_sign_time > sc.duration)
        throw invalid_argument("stop sign lies beyond the scenario end");
    for (const auto& b : sc.blinding)
        if (!(b.start >= 0.0 && b.start < b.end && b.end <= sc.duration))
            throw invalid_argument("blinding window outside [0, duration] or empty");
    const auto ids = scenario_artifact_ids();
    for (const auto& t : sc.tampers) {
        if (std::find(ids.begin(), ids.end(), t.artifact_id) == ids.end())
            throw invalid_argument("tamper names an artifact not in the simulated store: " +
                                   t.artifact_id);
        if (!(t.onset >= 0.0 && t.onset <= sc.duration))
            throw invalid_argument("tamper onset outside [0, duration]");
        if (!known_mutation(t.mutation))
            throw invalid_argument("unknown tamper mutation: " + t.mutation);
    }
    check_policy(sc.schedule, ids.size());
    for (double c : sc.checkpoints)
        if (!(c >= 0.0 && c <= sc.duration))
            throw invalid_argument("checkpoint outside [0, duration]");
    if (sc.detector.enabled) {
        if (sc.detector.threshold < 0.0 || sc.detector.threshold > 1.0)
            throw invalid_argument("detector threshold outside [0, 1]");
        if (sc.detector.model_path.empty() && sc.detector.train_samples < 100)
            throw invalid_argument("embedded training needs at least 100 samples");
    }
    if (sc.coordinator.debounce < 1) throw invalid_argument("debounce must be >= 1");
    if (sc.restore_duration_s < 0.0) throw invalid_argument("restore duration must be >= 0");
    if (sc.clock == ClockMode::Wall && sc.detector.enabled)
        throw invalid_argument("wall-clock mode runs integrity scenarios only; disable the detector");
}

// ---- JSON ----

std::string scenario_to_json(const Scenario& sc) {
    ordered_json j;
    j["name"] = sc.name;
    j["seed"] = sc.seed;
    j["vehicle"]["nominal_speed"] = sc.vehicle.nominal_speed;
    if (sc.vehicle.stop_sign_time >= 0.0)
        j["vehicle"]["stop_sign_time"] = sc.vehicle.stop_sign_time;
    else
        j["vehicle"]["stop_sign_time"] = nullptr;
    j["duration"] = sc.duration;
    j["sample_rate"] = sc.sample_rate;
    ordered_json attacks = ordered_json::array();
    for (const auto& b : sc.blinding)
        attacks.push_back({{"kind", "blinding"}, {"start", b.start}, {"end", b.end}});
    for (const auto& t : sc.tampers)
        attacks.push_back({{"kind", "tamper"},
                           {"artifact_id", t.artifact_id},
                           {"onset", t.onset},
                           {"mutation", t.mutation}});
    j["attacks"] = std::move(attacks);
    j["schedule"]["mode"] = to_string(sc.schedule.mode);
    j["schedule"]["interval"] = sc.schedule.interval_s;
    j["schedule"]["offsets"] = sc.schedule.offsets;
    ordered_json triggers = ordered_json::array();
    for (Trigger t : sc.schedule.triggers) triggers.push_back(to_string(t));
    j["schedule"]["triggers"] = std::move(triggers);
    j["schedule"]["checkpoints"] = sc.checkpoints;
    j["detector"]["enabled"] = sc.detector.enabled;
    j["detector"]["kind"] = to_string(sc.detector.kind);
    j["detector"]["threshold"] = sc.detector.threshold;
    j["detector"]["model_path"] = sc.detector.model_path;
    j["detector"]["train_samples"] = sc.detector.train_samples;
    j["coordinator"]["enabled"] = sc.coordinator.enabled;
    j["coordinator"]["debounce"] = sc.coordinator.debounce;
    j["restore_duration"] = sc.restore_duration_s;
    j["clock"] = sc.clock == ClockMode::Virtual ? "virtual" : "wall";
    return j.dump(2) + "\n";
}

Scenario scenario_from_json(const std::string& json_text) {
    Scenario sc;
    try {
        const auto j = ordered_json::parse(json_text);
        sc.name = j.value("name", std::string("scenario"));
        sc.seed = j.value("seed", std::uint64_t{1});
        if (j.contains("vehicle")) {
            const auto& v = j.at("vehicle");
            sc.vehicle.nominal_speed = v.value("nominal_speed", 0.33);
            if (v.contains("stop_sign_time") && !v.at("stop_sign_time").is_null())
                sc.vehicle.stop_sign_time = v.at("stop_sign_time").get<double>();
        }
        sc.duration = j.value("duration", 30.0);
        sc.sample_rate = j.value("sample_rate", 10.0);
        for (const auto& ja : j.value("attacks", ordered_json::array())) {
            const auto kind = ja.at("kind").get<std::string>();
            if (kind == "blinding") {
                sc.blinding.push_back({ja.at("start").get<double>(), ja.at("end").get<double>()});
            } else if (kind == "tamper") {
                TamperAttack t;
                t.artifact_id = ja.at("artifact_id").get<std::string>();
                t.onset = ja.at("onset").get<double>();
                t.mutation = ja.value("mutation", std::string("flip_bytes"));
                sc.tampers.push_back(std::move(t));
            } else {
                throw error("unknown attack kind: " + kind);
            }
        }
        if (j.contains("schedule")) {
            const auto& js = j.at("schedule");
            sc.schedule.mode = schedule_mode_from_string(js.value("mode", std::string("fixed")));
            sc.schedule.interval_s = js.value("interval", 1.0);
            sc.schedule.offsets = js.value("offsets", std::vector<double>{});
            for (const auto& t : js.value("triggers", std::vector<std::string>{}))
                sc.schedule.triggers.insert(trigger_from_string(t));
            sc.checkpoints = js.value("checkpoints", std::vector<double>{});
        }
        if (j.contains("detector")) {
            const auto& jd = j.at("detector");
            sc.detector.enabled = jd.value("enabled", true);
            sc.detector.kind = detector_kind_from_string(jd.value("kind", std::string("rf")));
            sc.detector.threshold = jd.value("threshold", 0.5);
            sc.detector.model_path = jd.value("model_path", std::string());
            sc.detector.train_samples = jd.value("train_samples", std::size_t{4000});
        }
        if (j.contains("coordinator")) {
            sc.coordinator.enabled = j.at("coordinator").value("enabled", true);
            sc.coordinator.debounce = j.at("coordinator").value("debounce", 1);
        }
        sc.restore_duration_s = j.value("restore_duration", 0.002);
        const auto clock = j.value("clock", std::string("virtual"));
        if (clock == "virtual") sc.clock = ClockMode::Virtual;
        else if (clock == "wall") sc.clock = ClockMode::Wall;
        else throw error("unknown clock mode: " + clock);
    } catch (const nlohmann::json::exception& e) {
        throw error(std::string("scenario parse failure: ") + e.what());
    }
    check_scenario(sc);
    return sc;
}

Scenario load_scenario(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("scenario file not found: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return scenario_from_json(ss.str());
}

void save_scenario(const Scenario& sc, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot open " + path.string() + " for writing");
    out << scenario_to_json(sc);
}

// ---- store fixtures ----

namespace {

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw error("cannot open " + path.string() + " for writing");
    out << text;
}

void make_store(const fs::path& work_dir) {
    fs::create_directories(work_dir / "store");
    // Fixed-seed blob: the fixture's bytes are part of the simulated world,
    // not of any particular run.
    Rng rng(0xA5F1C5);
    std::string blob(4096, '\0');
    for (char& c : blob) c = static_cast<char>(rng.below(256));
    write_text_file(work_dir / "store" / "perception-model.bin", blob);
    write_text_file(work_dir / "store" / "detection-config.json",
                    "{\n  \"threshold\": 0.45,\n  \"window\": 10\n}\n");
    write_text_file(work_dir / "store" / "class-map.json",
                    "{\n  \"0\": \"normal\",\n  \"1\": \"abnormal\"\n}\n");
}

ArtifactManifest make_manifest(const fs::path& work_dir) {
    ArtifactManifest m;
    m.base_dir = work_dir;
    m.entries.push_back({kModelId, "store/perception-model.bin", Criticality::SafetyCritical});
    m.entries.push_back({kConfigId, "store/detection-config.json", Criticality::SafetyCritical});
    m.entries.push_back({kClassMapId, "store/class-map.json", Criticality::Standard});
    return m;
}

void apply_mutation(const fs::path& file, const std::string& mutation) {
    if (mutation == "delete") {
        fs::remove(file);
        return;
    }
    if (mutation == "truncate") {
        write_text_file(file, "");
        return;
    }
    if (mutation == "rewrite_threshold") {
        write_text_file(file, "{\n  \"threshold\": 0.99,\n  \"window\": 10\n}\n");
        return;
    }
    // flip_bytes
    std::ifstream in(file, std::ios::binary);
    if (!in) throw error("cannot read artifact for mutation: " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string bytes = ss.str();
    if (bytes.empty()) bytes.push_back('\xff');
    for (std::size_t i = 0; i < std::min<std::size_t>(16, bytes.size()); ++i)
        bytes[i] = static_cast<char>(bytes[i] ^ '\xff');
    write_text_file(file, bytes);
}

DetectorModel prepare_detector(const Scenario& sc) {
    DetectorModel model;
    if (!sc.detector.model_path.empty()) {
        model = load_model(sc.detector.model_path);
    } else {
        const LabeledDataset train = make_blinding_dataset(
            sc.detector.train_samples, Rng(sc.seed).fork(0xde7ec7).seed(), sc.vehicle.nominal_speed);
        model = fit(train, sc.detector.kind, Hyperparams{}, Rng(sc.seed).fork(0xf17).seed());
    }
    model.threshold = sc.detector.threshold;
    return model;
}

ModuleRegistry make_registry() {
    ModuleRegistry r;
    r.primary = {"perception-primary", "depth-camera", true};
    r.fallbacks.push_back({"perception-fallback", "lidar-rules", true});
    r.active_id = r.primary.id;
    return r;
}

// Shared state and handlers for the virtual- and wall-clock drivers.
struct Engine {
    const Scenario& sc;
    fs::path work_dir;
    ArtifactManifest manifest;
    TrustedBaseline baseline;
    IntegrityMonitor monitor;
    std::optional<Coordinator> coordinator;
    std::optional<DetectorModel> detector;
    FeatureWindow window{kDefaultFeatureWindow};
    SampleGenerator gen;
    ModuleRegistry initial_registry;

    // Wall-clock driver only: source of processing-record timestamps. Events
    // carry validator-side clock readings, so records must take a fresh
    // reading to land after every reaction already applied; nominal sample
    // times would appear to precede the switchover during the audit replay.
    Clock* wall_clock = nullptr;

    ScenarioReport report;
    std::vector<ProcessingRecord> processing;
    std::vector<double> scores_inside, scores_outside;
    bool alert_outstanding = false;
    bool plain_alert_active = false;  // detector-only episode flag (coordinator disabled)
    bool sign_decided = false;
    bool sign_seen = false;
    bool halt_emitted = false;
    double safe_stop_time = -1.0;
    // restores requested by the coordinator, to be completed by the driver
    std::vector<std::pair<double, std::vector<std::string>>> restore_queue;

    Engine(const Scenario& scenario, const fs::path& dir, const TraceConfig& trace_cfg)
        : sc(scenario),
          work_dir(dir),
          gen(trace_cfg, Rng(scenario.seed).fork(0x7a5e).seed()) {
        make_store(work_dir);
        manifest = make_manifest(work_dir);
        baseline = create_baseline(manifest, "backups", "1970-01-01T00:00:00Z");
        initial_registry = make_registry();
        if (sc.coordinator.enabled)
            coordinator.emplace(initial_registry, sc.coordinator.debounce);
        if (sc.detector.enabled) detector = prepare_detector(sc);
        report.name = sc.name;
        report.seed = sc.seed;
    }

    void emit(double time, const std::string& kind, const std::string& detail) {
        report.timeline.push_back({time, kind, detail});
    }

    bool blinded_at(double t) const {
        return std::any_of(sc.blinding.begin(), sc.blinding.end(), [t](const BlindingAttack& b) {
            return t > b.start && t <= b.end;
        });
    }

    void handle_actions(const std::vector<Action>& actions, double t) {
        for (const Action& a : actions) {
            switch (a.kind) {
                case ActionKind::SwitchToFallback:
                    emit(t, "switchover", "to_fallback " + a.target_id);
                    break;
                case ActionKind::SwitchToPrimary:
                    emit(t, "switchover", "to_primary " + a.target_id);
                    break;
                case ActionKind::RestoreRequested:
                    restore_queue.push_back({t, a.artifacts});
                    break;
                case ActionKind::SafeStop:
                    emit(t, "safe_stop", a.detail);
                    if (safe_stop_time < 0.0) safe_stop_time = t;
                    break;
                case ActionKind::Shuffle:
                    break;
            }
        }
    }

    void handle_validation(const ValidationEvent& ev) {
        const auto signal = monitor.observe(ev);
        if (signal == IntegrityMonitor::Signal::Mismatch) {
            emit(ev.time, "detection", "integrity-guard " + join_ids(ev.mismatched));
            if (coordinator)
                handle_actions(
                    coordinator->on_event(CoordinatorEvent::integrity_mismatch(ev.time, ev.mismatched)),
                    ev.time);
        } else if (signal == IntegrityMonitor::Signal::AllClear) {
            if (coordinator)
                handle_actions(coordinator->on_event(CoordinatorEvent::integrity_match(ev.time)),
                               ev.time);
        }
    }

    void do_validation_tick(double t, const std::vector<std::string>& ids) {
        handle_validation(validate_once(manifest, baseline, t, ids));
    }

    void do_tamper(const TamperAttack& attack, double t) {
        const ManifestEntry* entry = manifest.find(attack.artifact_id);
        apply_mutation(manifest.resolve(*entry), attack.mutation);
        emit(t, "attack_onset", "tamper " + attack.artifact_id + " " + attack.mutation);
    }

    // Returns false when the restore was refused (vehicle halts).
    bool do_restore(const std::vector<std::string>& ids, double t, Clock* clock) {
        try {
            RestoreOutcome outcome = restore(manifest, baseline, ids, clock);
            const double duration = clock ? outcome.duration_s : sc.restore_duration_s;
            emit(t, "restore_complete", join_ids(outcome.restored) + " duration=" + fmt6(duration));
            return true;
        } catch (const restore_refused& e) {
            emit(t, "safe_stop", e.what());
            if (safe_stop_time < 0.0) safe_stop_time = t;
            return false;
        }
    }

    double commanded_speed(double t) const {
        double v = sc.vehicle.nominal_speed;
        if (sign_decided && sign_seen && sc.vehicle.stop_sign_time >= 0.0) {
            const double stop = sc.vehicle.stop_sign_time;
            if (t >= stop - kStopRampSeconds && t < stop)
                v = std::min(v, sc.vehicle.nominal_speed * (stop - t) / kStopRampSeconds);
            else if (t >= stop && t < stop + kStopDwellSeconds)
                v = 0.0;
            else if (t >= stop + kStopDwellSeconds && t < stop + kStopDwellSeconds + kStopRampSeconds)
                v = std::min(v, sc.vehicle.nominal_speed * (t - stop - kStopDwellSeconds) /
                                     kStopRampSeconds);
        }
        if (safe_stop_time >= 0.0 && t >= safe_stop_time)
            v = std::min(v, std::max(0.0, sc.vehicle.nominal_speed *
                                              (1.0 - (t - safe_stop_time) / kStopRampSeconds)));
        return v;
    }

    void do_sample(std::size_t index) {
        const double t = static_cast<double>(index) / sc.sample_rate;
        const bool blinded = blinded_at(t);

        if (!sign_decided && sc.vehicle.stop_sign_time >= 0.0 &&
            t >= sc.vehicle.stop_sign_time - kStopRampSeconds - kEps) {
            sign_decided = true;
            const bool fallback_active =
                coordinator && coordinator->state().mode == CoordinatorMode::FallbackActive;
            if (fallback_active) {
                sign_seen = true;  // the verified fallback always sees the sign
            } else {
                // The primary sees the sign iff its perception store is intact.
                sign_seen =
                    validate_once(manifest, baseline, t).result == ValidationResult::Match;
            }
        }

        const double v = commanded_speed(t);
        report.speed_profile.push_back({t, v});
        if (!halt_emitted && sign_decided && sign_seen && t >= sc.vehicle.stop_sign_time - kEps) {
            halt_emitted = true;
            report.stop_sign_halted = true;
            emit(sc.vehicle.stop_sign_time, "stop_sign_halt", "speed reached 0");
        }

        const TelemetrySample sample = gen.step(index, blinded, v);
        const std::vector<double> features = window.push(sample);

        if (detector) {
            const double score = detector->score(features);
            (blinded ? scores_inside : scores_outside).push_back(score);
            const bool alarm = score > detector->threshold;
            if (coordinator) {
                if (alarm) {
                    const bool had_cause =
                        coordinator->state().has_cause(CompromiseCause::Anomaly);
                    const std::vector<Action> actions = coordinator->on_event(
                        CoordinatorEvent::anomaly_alert(t, score, detector->threshold));
                    if (!had_cause && coordinator->state().has_cause(CompromiseCause::Anomaly))
                        emit(t, "detection", "anomaly-ids score=" + fmt6(score));
                    handle_actions(actions, t);
                    alert_outstanding = true;
                } else if (alert_outstanding) {
                    handle_actions(coordinator->on_event(CoordinatorEvent::anomaly_cleared(t)), t);
                    if (!coordinator->state().has_cause(CompromiseCause::Anomaly))
                        alert_outstanding = false;
                }
            } else {
                if (alarm && !plain_alert_active) {
                    emit(t, "detection", "anomaly-ids score=" + fmt6(score));
                    plain_alert_active = true;
                } else if (!alarm) {
                    plain_alert_active = false;
                }
            }
        }

        // The perception result consumed at this instant is attributed to the
        // module left active after the coordinator's same-instant reaction: a
        // switchover preempts the flagged module before its output is used.
        const std::string active_id =
            coordinator ? coordinator->state().registry.active_id : initial_registry.primary.id;
        processing.push_back({wall_clock != nullptr ? wall_clock->now() : t, active_id});
    }

    void finalize() {
        compute_latencies();
        if (detector && !scores_inside.empty() && !scores_outside.empty()) {
            AnomalyStats stats;
            stats.samples_inside = scores_inside.size();
            stats.samples_outside = scores_outside.size();
            stats.median_score_inside = median(scores_inside);
            stats.median_score_outside = median(scores_outside);
            report.anomaly = stats;
        }
        report.final_mode =
            coordinator ? coordinator->state().mode : CoordinatorMode::NormalOp;
        if (safe_stop_time >= 0.0 && coordinator &&
            coordinator->state().mode != CoordinatorMode::SafeStopped)
            report.final_mode = CoordinatorMode::SafeStopped;
        if (coordinator)
            report.safety =
                audit(initial_registry, coordinator->log(), coordinator->events_seen(), processing);
    }

    static double median(std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }

    void compute_latencies() {
        std::vector<double> integrity_detections, fallback_switchovers, restores;
        for (const auto& ev : report.timeline) {
            if (ev.kind == "detection" && ev.detail.rfind("integrity-guard", 0) == 0)
                integrity_detections.push_back(ev.time);
            else if (ev.kind == "switchover" && ev.detail.rfind("to_fallback", 0) == 0)
                fallback_switchovers.push_back(ev.time);
            else if (ev.kind == "restore_complete")
                restores.push_back(ev.time);
        }

        std::vector<std::size_t> order(sc.tampers.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return sc.tampers[a].onset < sc.tampers[b].onset;
        });

        std::size_t di = 0, si = 0, ri = 0;
        for (std::size_t k = 0; k < order.size(); ++k) {
            const TamperAttack& att = sc.tampers[order[k]];
            const double next_onset =
                k + 1 < order.size() ? sc.tampers[order[k + 1]].onset : sc.duration + 1.0;
            AttackLatency lat;
            lat.attack_id = "tamper-" + std::to_string(k);
            lat.onset = att.onset;
            while (di < integrity_detections.size() && integrity_detections[di] <= att.onset + kEps)
                ++di;
            if (di < integrity_detections.size() &&
                integrity_detections[di] <= next_onset + kEps) {
                const double d = integrity_detections[di++];
                lat.detected = true;
                lat.detection_latency = d - att.onset;
                while (si < fallback_switchovers.size() && fallback_switchovers[si] < d - kEps)
                    ++si;
                double switch_time = -1.0;
                if (si < fallback_switchovers.size() &&
                    fallback_switchovers[si] <= next_onset + kEps) {
                    switch_time = fallback_switchovers[si++];
                    lat.switchover_latency = switch_time - d;
                }
                while (ri < restores.size() && restores[ri] < d - kEps) ++ri;
                if (ri < restores.size() && switch_time >= 0.0) {
                    lat.restore_latency = restores[ri++] - switch_time;
                }
            }
            report.latencies.push_back(std::move(lat));
        }

        // Blinding attacks: detection only, via the anomaly path.
        std::vector<double> anomaly_detections;
        for (const auto& ev : report.timeline)
            if (ev.kind == "detection" && ev.detail.rfind("anomaly-ids", 0) == 0)
                anomaly_detections.push_back(ev.time);
        for (std::size_t k = 0; k < sc.blinding.size(); ++k) {
            const BlindingAttack& b = sc.blinding[k];
            AttackLatency lat;
            lat.attack_id = "blinding-" + std::to_string(k);
            lat.onset = b.start;
            for (double d : anomaly_detections) {
                if (d > b.start && d <= b.end + kEps) {
                    lat.detected = true;
                    lat.detection_latency = d - b.start;
                    break;
                }
            }
            report.latencies.push_back(std::move(lat));
        }
    }
};

// Discrete events in (time, phase, seq) order; phases keep same-instant
// causality fixed: validations see the pre-attack store, restores land before
// the sample that follows them.
struct SimEvent {
    double time;
    int phase;  // 0 validation, 1 attack marker/mutation, 2 restore, 3 sample
    std::uint64_t seq;
    int kind;  // 0 tick, 1 tamper, 2 blinding-start, 3 blinding-end, 4 restore, 5 sample
    std::size_t index = 0;
    std::vector<std::string> ids;
};

struct SimEventLater {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
        if (a.time != b.time) return a.time > b.time;
        if (a.phase != b.phase) return a.phase > b.phase;
        return a.seq > b.seq;
    }
};

ScenarioReport run_virtual(const Scenario& sc, const fs::path& work_dir) {
    TraceConfig trace_cfg;
    trace_cfg.duration = sc.duration;
    trace_cfg.sample_rate = sc.sample_rate;
    trace_cfg.nominal_speed = sc.vehicle.nominal_speed;
    for (const auto& b : sc.blinding) trace_cfg.attack_windows.push_back({b.start, b.end});
    Engine eng(sc, work_dir, trace_cfg);

    std::priority_queue<SimEvent, std::vector<SimEvent>, SimEventLater> queue;
    std::uint64_t seq = 0;
    const auto push = [&](double time, int phase, int kind, std::size_t index,
                          std::vector<std::string> ids = {}) {
        queue.push({time, phase, seq++, kind, index, std::move(ids)});
    };

    const auto artifact_ids = scenario_artifact_ids();
    for (const ValidationTick& tick : enumerate_ticks(sc.schedule, artifact_ids, 0.0, sc.duration))
        push(tick.time, 0, 0, 0, tick.artifact_ids);
    if (sc.schedule.mode == ScheduleMode::EventDriven &&
        sc.schedule.triggers.count(Trigger::OnCheckpoint))
        for (double c : sc.checkpoints) push(c, 0, 0, 0, {});
    for (std::size_t i = 0; i < sc.tampers.size(); ++i) push(sc.tampers[i].onset, 1, 1, i);
    for (std::size_t i = 0; i < sc.blinding.size(); ++i) {
        push(sc.blinding[i].start, 1, 2, i);
        push(sc.blinding[i].end, 1, 3, i);
    }
    const auto n_samples =
        static_cast<std::size_t>(std::llround(sc.duration * sc.sample_rate));
    for (std::size_t i = 0; i < n_samples; ++i)
        push(static_cast<double>(i) / sc.sample_rate, 3, 5, i);

    while (!queue.empty()) {
        const SimEvent ev = queue.top();
        queue.pop();
        if (ev.time > sc.duration + kEps) continue;
        switch (ev.kind) {
            case 0:
                eng.do_validation_tick(ev.time, ev.ids);
                break;
            case 1:
                eng.do_tamper(sc.tampers[ev.index], ev.time);
                break;
            case 2:
                eng.emit(ev.time, "attack_onset", "blinding");
                break;
            case 3:
                eng.emit(ev.time, "attack_end", "blinding");
                break;
            case 4: {
                const bool ok = eng.do_restore(ev.ids, ev.time, nullptr);
                if (ok && sc.schedule.mode == ScheduleMode::EventDriven &&
                    sc.schedule.triggers.count(Trigger::OnUpdate))
                    eng.do_validation_tick(ev.time, {});  // on-update trigger
                break;
            }
            case 5:
                eng.do_sample(ev.index);
                break;
        }
        // Restores requested by the coordinator complete after the configured
        // simulated duration.
        for (auto& [t, ids] : eng.restore_queue)
            push(t + sc.restore_duration_s, 2, 4, 0, std::move(ids));
        eng.restore_queue.clear();
    }

    eng.finalize();
    return eng.report;
}

ScenarioReport run_wall(const Scenario& sc, const fs::path& work_dir) {
    TraceConfig trace_cfg;
    trace_cfg.duration = sc.duration;
    trace_cfg.sample_rate = sc.sample_rate;
    trace_cfg.nominal_speed = sc.vehicle.nominal_speed;
    Engine eng(sc, work_dir, trace_cfg);

    WallClock clock;
    eng.wall_clock = &clock;
    EventChannel<ValidationEvent> channel;
    ScheduledValidator validator(eng.manifest, eng.baseline, sc.schedule, clock, channel);

    std::vector<std::size_t> tamper_order(sc.tampers.size());
    for (std::size_t i = 0; i < tamper_order.size(); ++i) tamper_order[i] = i;
    std::sort(tamper_order.begin(), tamper_order.end(), [&](std::size_t a, std::size_t b) {
        return sc.tampers[a].onset < sc.tampers[b].onset;
    });

    std::size_t next_tamper = 0;
    std::size_t next_sample = 0;
    const auto n_samples = static_cast<std::size_t>(std::llround(sc.duration * sc.sample_rate));

    const auto service = [&](double now) {
        while (auto ev = channel.try_pop()) eng.handle_validation(*ev);
        while (next_tamper < tamper_order.size() &&
               sc.tampers[tamper_order[next_tamper]].onset <= now) {
            const TamperAttack& att = sc.tampers[tamper_order[next_tamper]];
            eng.do_tamper(att, now);
            ++next_tamper;
        }
        for (auto& [t, ids] : eng.restore_queue) eng.do_restore(ids, clock.now(), &clock);
        eng.restore_queue.clear();
        while (next_sample < n_samples &&
               static_cast<double>(next_sample) / sc.sample_rate <= now) {
            eng.do_sample(next_sample);
            ++next_sample;
        }
    };

    while (clock.now() < sc.duration) {
        service(clock.now());
        if (!validator.fatal_error().empty()) throw error(validator.fatal_error());
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    validator.stop();
    service(sc.duration + 1.0);  // drain

    eng.finalize();
    return eng.report;
}

}  // namespace

ScenarioReport run_scenario(const Scenario& sc, const fs::path& work_dir) {
    check_scenario(sc);
    fs::create_directories(work_dir);
    return sc.clock == ClockMode::Virtual ? run_virtual(sc, work_dir) : run_wall(sc, work_dir);
}

// ---- report serialization ----

std::string report_to_json(const ScenarioReport& report) {
    ordered_json j;
    j["type"] = "scenario_report";
    j["name"] = report.name;
    j["seed"] = report.seed;
    j["final_mode"] = to_string(report.final_mode);
    j["stop_sign_halted"] = report.stop_sign_halted;
    ordered_json timeline = ordered_json::array();
    for (const auto& ev : report.timeline)
        timeline.push_back({{"time", ev.time}, {"kind", ev.kind}, {"detail", ev.detail}});
    j["timeline"] = std::move(timeline);
    ordered_json lats = ordered_json::array();
    for (const auto& lat : report.latencies) {
        ordered_json jl;
        jl["attack"] = lat.attack_id;
        jl["onset"] = lat.onset;
        jl["detected"] = lat.detected;
        jl["detection_latency"] =
            lat.detection_latency ? ordered_json(*lat.detection_latency) : ordered_json(nullptr);
        jl["switchover_latency"] =
            lat.switchover_latency ? ordered_json(*lat.switchover_latency) : ordered_json(nullptr);
        jl["restore_latency"] =
            lat.restore_latency ? ordered_json(*lat.restore_latency) : ordered_json(nullptr);
        lats.push_back(std::move(jl));
    }
    j["latencies"] = std::move(lats);
    ordered_json profile = ordered_json::array();
    for (const auto& [t, v] : report.speed_profile) profile.push_back({t, v});
    j["speed_profile"] = std::move(profile);
    if (report.anomaly) {
        j["anomaly"] = {{"median_score_inside", report.anomaly->median_score_inside},
                        {"median_score_outside", report.anomaly->median_score_outside},
                        {"samples_inside", report.anomaly->samples_inside},
                        {"samples_outside", report.anomaly->samples_outside}};
    } else {
        j["anomaly"] = nullptr;
    }
    ordered_json violations = ordered_json::array();
    for (const auto& v : report.safety.violations)
        violations.push_back({{"time", v.time},
                              {"active_id", v.active_id},
                              {"unresolved_event", v.unresolved_event}});
    j["safety"] = {{"ok", report.safety.ok()}, {"violations", std::move(violations)}};
    return j.dump(2) + "\n";
}

std::string speed_profile_to_csv(const ScenarioReport& report) {
    std::string out = "t,speed\n";
    for (const auto& [t, v] : report.speed_profile) {
        out += fmt6(t);
        out += ",";
        out += fmt6(v);
        out += "\n";
    }
    return out;
}

LatencySummary measure_latencies(const ScenarioReport& report) {
    LatencySummary summary;
    std::vector<double> detections, switchovers, restores;
    for (const AttackLatency& lat : report.latencies) {
        ++summary.n_attacks;
        if (!lat.detected) continue;
        ++summary.n_detected;
        if (!lat.detection_latency || *lat.detection_latency <= 0.0)
            throw error("detection must strictly follow attack onset");
        detections.push_back(*lat.detection_latency);
        if (lat.switchover_latency) switchovers.push_back(*lat.switchover_latency);
        if (lat.restore_latency) restores.push_back(*lat.restore_latency);
    }
    if (summary.n_detected == 0)
        throw invalid_argument("latency summary needs at least one detected attack");
    const auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    summary.mean_detection = mean(detections);
    summary.max_detection = *std::max_element(detections.begin(), detections.end());
    if (!switchovers.empty()) summary.mean_switchover = mean(switchovers);
    if (!restores.empty()) summary.mean_restore = mean(restores);
    return summary;
}

// ---- batch grid ----

BatchResult batch_run(const std::vector<double>& speeds, const std::vector<double>& intervals,
                      std::size_t trials_per_cell, std::uint64_t seed, const fs::path& work_dir,
                      std::size_t tampers_per_trial) {
    if (speeds.empty() || intervals.empty()) throw invalid_argument("empty batch grid");
    if (trials_per_cell < 1) throw invalid_argument("trials_per_cell must be >= 1");
    if (tampers_per_trial < 1) throw invalid_argument("tampers_per_trial must be >= 1");

    BatchResult result;
    result.trials_per_cell = trials_per_cell;
    result.tampers_per_trial = tampers_per_trial;
    result.seed = seed;

    const auto artifact_ids = scenario_artifact_ids();
    const auto count_detections = [](const ScenarioReport& r) {
        std::size_t n = 0;
        for (const auto& ev : r.timeline)
            if (ev.kind == "detection") ++n;
        return n;
    };

    std::size_t cell_index = 0;
    for (double speed : speeds) {
        for (double interval : intervals) {
            BatchCell cell;
            cell.speed = speed;
            cell.interval_s = interval;
            cell.trials = trials_per_cell;

            const double lead_in = 2.0;
            const double gap = 2.0 * interval + 1.0;
            const double duration =
                lead_in + static_cast<double>(tampers_per_trial) * gap + interval + 2.0;

            Scenario base;
            base.name = "batch";
            base.vehicle.nominal_speed = speed;
            base.vehicle.stop_sign_time = -1.0;
            base.duration = duration;
            base.sample_rate = 10.0;
            base.schedule = SchedulePolicy::fixed(interval);
            base.detector.enabled = false;
            base.coordinator.enabled = true;
            base.restore_duration_s = 0.002;

            // Control trial: no attacks, so any detection is a false one.
            Scenario control = base;
            control.seed = Rng(seed).fork(cell_index * 0x1000).seed();
            const ScenarioReport control_report = run_scenario(control, work_dir);
            cell.control_false_detections = count_detections(control_report);

            std::vector<double> latencies;
            std::size_t successes = 0;
            for (std::size_t trial = 0; trial < trials_per_cell; ++trial) {
                Rng trng = Rng(seed).fork(cell_index * 0x1000 + trial + 1);
                Scenario s = base;
                s.seed = trng.fork(0).seed();
                for (std::size_t k = 0; k < tampers_per_trial; ++k) {
                    TamperAttack att;
                    att.artifact_id = artifact_ids[k % artifact_ids.size()];
                    att.onset =
                        lead_in + static_cast<double>(k) * gap + trng.uniform() * interval;
                    att.mutation = "flip_bytes";
                    s.tampers.push_back(std::move(att));
                }
                const ScenarioReport r = run_scenario(s, work_dir);
                std::size_t detected = 0;
                for (const AttackLatency& lat : r.latencies) {
                    if (!lat.detected) continue;
                    ++detected;
                    if (lat.detection_latency) latencies.push_back(*lat.detection_latency);
                }
                if (detected == tampers_per_trial) ++successes;
            }
            cell.success_rate = static_cast<double>(successes) / static_cast<double>(trials_per_cell);
            if (!latencies.empty()) {
                double sum = 0.0;
                for (double l : latencies) sum += l;
                cell.mean_latency = sum / static_cast<double>(latencies.size());
                cell.max_latency = *std::max_element(latencies.begin(), latencies.end());
            }
            result.cells.push_back(cell);
            ++cell_index;
        }
    }
    return result;
}

std::string batch_to_json(const BatchResult& result) {
    ordered_json j;
    j["type"] = "batch_result";
    j["seed"] = result.seed;
    j["trials_per_cell"] = result.trials_per_cell;
    j["tampers_per_trial"] = result.tampers_per_trial;
    ordered_json cells = ordered_json::array();
    for (const auto& c : result.cells) {
        ordered_json jc;
        jc["speed"] = c.speed;
        jc["interval"] = c.interval_s;
        jc["trials"] = c.trials;
        jc["success_rate"] = c.success_rate;
        jc["mean_latency"] = c.mean_latency ? ordered_json(*c.mean_latency) : ordered_json(nullptr);
        jc["max_latency"] = c.max_latency ? ordered_json(*c.max_latency) : ordered_json(nullptr);
        jc["control_false_detections"] = c.control_false_detections;
        cells.push_back(std::move(jc));
    }
    j["cells"] = std::move(cells);
    return j.dump(2) + "\n";
}

std::string batch_to_csv(const BatchResult& result) {
    std::string out = "speed,interval,success_rate,mean_latency,max_latency\n";
    for (const auto& c : result.cells) {
        out += fmt6(c.speed);
        out += ",";
        out += fmt6(c.interval_s);
        out += ",";
        out += fmt6(c.success_rate);
        out += ",";
        out += c.mean_latency ? fmt6(*c.mean_latency) : "";
        out += ",";
        out += c.max_latency ? fmt6(*c.max_latency) : "";
        out += "\n";
    }
    return out;
}

}  // namespace avr
