// SPDX-License-Identifier: Apache-2.0
#include "avr/coordinator.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "avr/rng.hpp"

namespace avr {

using ordered_json = nlohmann::ordered_json;

const ModuleDescriptor* ModuleRegistry::find(const std::string& id) const {
    if (primary.id == id) return &primary;
    for (const auto& f : fallbacks)
        if (f.id == id) return &f;
    return nullptr;
}

const ModuleDescriptor* ModuleRegistry::first_verified_fallback() const {
    for (const auto& f : fallbacks)
        if (f.verified) return &f;
    return nullptr;
}

void check_registry(const ModuleRegistry& registry) {
    if (registry.primary.id.empty()) throw invalid_argument("registry has no primary module");
    std::set<std::string> ids{registry.primary.id};
    for (const auto& f : registry.fallbacks)
        if (f.id.empty() || !ids.insert(f.id).second)
            throw invalid_argument("registry module ids must be unique and non-empty");
    if (registry.find(registry.active_id) == nullptr)
        throw invalid_argument("active_id names no registered module: " + registry.active_id);
}

const char* to_string(CoordinatorEventKind k) {
    switch (k) {
        case CoordinatorEventKind::IntegrityMismatch: return "integrity_mismatch";
        case CoordinatorEventKind::IntegrityMatch: return "integrity_match";
        case CoordinatorEventKind::AnomalyAlert: return "anomaly_alert";
        case CoordinatorEventKind::AnomalyCleared: return "anomaly_cleared";
    }
    return "integrity_match";
}

CoordinatorEvent CoordinatorEvent::integrity_mismatch(double time,
                                                      std::vector<std::string> artifacts) {
    if (artifacts.empty()) throw invalid_argument("integrity mismatch with no artifacts");
    CoordinatorEvent e;
    e.kind = CoordinatorEventKind::IntegrityMismatch;
    e.time = time;
    e.source = "integrity-guard";
    e.artifacts = std::move(artifacts);
    return e;
}

CoordinatorEvent CoordinatorEvent::integrity_match(double time) {
    CoordinatorEvent e;
    e.kind = CoordinatorEventKind::IntegrityMatch;
    e.time = time;
    e.source = "integrity-guard";
    return e;
}

CoordinatorEvent CoordinatorEvent::anomaly_alert(double time, double score, double threshold) {
    if (!(score > threshold))
        throw invalid_argument("anomaly alert requires score strictly above threshold");
    CoordinatorEvent e;
    e.kind = CoordinatorEventKind::AnomalyAlert;
    e.time = time;
    e.source = "anomaly-ids";
    e.score = score;
    e.threshold = threshold;
    return e;
}

CoordinatorEvent CoordinatorEvent::anomaly_cleared(double time) {
    CoordinatorEvent e;
    e.kind = CoordinatorEventKind::AnomalyCleared;
    e.time = time;
    e.source = "anomaly-ids";
    return e;
}

const char* to_string(ActionKind k) {
    switch (k) {
        case ActionKind::SwitchToFallback: return "switch_to_fallback";
        case ActionKind::RestoreRequested: return "restore_requested";
        case ActionKind::SwitchToPrimary: return "switch_to_primary";
        case ActionKind::Shuffle: return "shuffle";
        case ActionKind::SafeStop: return "safe_stop";
    }
    return "safe_stop";
}

const char* to_string(CoordinatorMode m) {
    switch (m) {
        case CoordinatorMode::NormalOp: return "normal_op";
        case CoordinatorMode::FallbackActive: return "fallback_active";
        case CoordinatorMode::SafeStopped: return "safe_stopped";
    }
    return "normal_op";
}

CoordinatorMode coordinator_mode_from_string(const std::string& s) {
    if (s == "normal_op") return CoordinatorMode::NormalOp;
    if (s == "fallback_active") return CoordinatorMode::FallbackActive;
    if (s == "safe_stopped") return CoordinatorMode::SafeStopped;
    throw invalid_argument("unknown coordinator mode: " + s);
}

void ActionLog::append(Action action, const std::string& trigger) {
    if (!entries_.empty() && action.time < entries_.back().action.time)
        throw invalid_argument("action log times must be non-decreasing");
    LoggedAction la;
    la.seq = entries_.size();
    la.action = std::move(action);
    la.trigger = trigger;
    entries_.push_back(std::move(la));
}

namespace {

std::string fmt_time_6(double t) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", t);
    return buf;
}

ordered_json action_to_json(const LoggedAction& la) {
    ordered_json j;
    j["seq"] = la.seq;
    j["time"] = ordered_json::parse(fmt_time_6(la.action.time));
    j["action"] = to_string(la.action.kind);
    if (!la.action.target_id.empty()) j["target_id"] = la.action.target_id;
    if (!la.action.artifacts.empty()) j["artifacts"] = la.action.artifacts;
    if (!la.action.detail.empty()) j["detail"] = la.action.detail;
    j["trigger"] = la.trigger;
    return j;
}

ActionKind action_kind_from_string(const std::string& s) {
    if (s == "switch_to_fallback") return ActionKind::SwitchToFallback;
    if (s == "restore_requested") return ActionKind::RestoreRequested;
    if (s == "switch_to_primary") return ActionKind::SwitchToPrimary;
    if (s == "shuffle") return ActionKind::Shuffle;
    if (s == "safe_stop") return ActionKind::SafeStop;
    throw invalid_argument("unknown action kind: " + s);
}

std::string describe_event(const CoordinatorEvent& e) {
    std::string desc = std::string(to_string(e.kind)) + "@" + fmt_time_6(e.time);
    if (!e.artifacts.empty()) {
        desc += "[";
        for (std::size_t i = 0; i < e.artifacts.size(); ++i)
            desc += (i ? "," : "") + e.artifacts[i];
        desc += "]";
    }
    return desc;
}

}  // namespace

void ActionLog::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot open action log " + path.string());
    for (const auto& la : entries_) out << action_to_json(la).dump() << "\n";
}

ActionLog ActionLog::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open action log " + path.string());
    ActionLog log;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            const auto j = ordered_json::parse(line);
            Action a;
            a.kind = action_kind_from_string(j.at("action").get<std::string>());
            a.time = j.at("time").get<double>();
            a.target_id = j.value("target_id", std::string());
            a.artifacts = j.value("artifacts", std::vector<std::string>());
            a.detail = j.value("detail", std::string());
            log.append(std::move(a), j.at("trigger").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw error(std::string("action log parse failure: ") + e.what());
        }
    }
    return log;
}

bool CoordinatorState::has_cause(CompromiseCause c) const {
    return std::find(causes.begin(), causes.end(), c) != causes.end();
}

namespace {

void remove_cause(std::vector<CompromiseCause>& causes, CompromiseCause c) {
    causes.erase(std::remove(causes.begin(), causes.end(), c), causes.end());
}

// Engages the fallback (or halts when none is trustworthy) for a newly
// confirmed compromise cause.
void engage_fallback(CoordinatorState& st, std::vector<Action>& actions, double time) {
    if (st.mode != CoordinatorMode::NormalOp) return;
    const ModuleDescriptor* fb = st.registry.first_verified_fallback();
    if (fb == nullptr) {
        Action a;
        a.kind = ActionKind::SafeStop;
        a.time = time;
        a.detail = "no verified fallback available";
        actions.push_back(std::move(a));
        st.mode = CoordinatorMode::SafeStopped;
        return;
    }
    Action a;
    a.kind = ActionKind::SwitchToFallback;
    a.time = time;
    a.target_id = fb->id;
    actions.push_back(std::move(a));
    st.registry.active_id = fb->id;
    st.mode = CoordinatorMode::FallbackActive;
}

void recover_if_clear(CoordinatorState& st, std::vector<Action>& actions, double time) {
    if (st.mode != CoordinatorMode::FallbackActive || !st.causes.empty()) return;
    Action a;
    a.kind = ActionKind::SwitchToPrimary;
    a.time = time;
    a.target_id = st.registry.primary.id;
    actions.push_back(std::move(a));
    st.registry.active_id = st.registry.primary.id;
    st.mode = CoordinatorMode::NormalOp;
}

}  // namespace

TransitionResult transition(const CoordinatorState& state, const CoordinatorEvent& event) {
    if (state.any_event_seen && event.time < state.last_event_time) {
        throw invalid_argument("out-of-order event: time " + fmt_time_6(event.time) +
                               " precedes last processed " + fmt_time_6(state.last_event_time));
    }
    TransitionResult result;
    result.state = state;
    CoordinatorState& st = result.state;
    st.any_event_seen = true;
    st.last_event_time = event.time;
    st.last_event_per_source.insert_or_assign(event.source, event);

    // A halted vehicle stays halted; events are still recorded above.
    if (st.mode == CoordinatorMode::SafeStopped) return result;

    switch (event.kind) {
        case CoordinatorEventKind::IntegrityMismatch: {
            if (!st.has_cause(CompromiseCause::Integrity))
                st.causes.push_back(CompromiseCause::Integrity);
            engage_fallback(st, result.actions, event.time);
            if (st.mode == CoordinatorMode::SafeStopped) break;
            std::vector<std::string> fresh;
            for (const auto& id : event.artifacts)
                if (st.restore_pending.insert(id).second) fresh.push_back(id);
            if (!fresh.empty()) {
                Action a;
                a.kind = ActionKind::RestoreRequested;
                a.time = event.time;
                a.artifacts = std::move(fresh);
                result.actions.push_back(std::move(a));
            }
            break;
        }
        case CoordinatorEventKind::IntegrityMatch:
            st.restore_pending.clear();
            remove_cause(st.causes, CompromiseCause::Integrity);
            recover_if_clear(st, result.actions, event.time);
            break;
        case CoordinatorEventKind::AnomalyAlert:
            st.consecutive_alerts += 1;
            if (st.consecutive_alerts < st.debounce_n) break;
            if (!st.has_cause(CompromiseCause::Anomaly)) {
                st.causes.push_back(CompromiseCause::Anomaly);
                engage_fallback(st, result.actions, event.time);
            }
            break;
        case CoordinatorEventKind::AnomalyCleared:
            st.consecutive_alerts = 0;
            remove_cause(st.causes, CompromiseCause::Anomaly);
            recover_if_clear(st, result.actions, event.time);
            break;
    }
    return result;
}

ShuffleOutcome shuffle(const ModuleRegistry& registry, std::uint64_t seed, ShufflePolicy policy,
                       double interval_s, std::size_t n_offsets) {
    check_registry(registry);
    ShuffleOutcome outcome;
    outcome.registry = registry;

    if (policy == ShufflePolicy::RotateVariant) {
        // The primary was validated at registration; it always qualifies.
        std::vector<const ModuleDescriptor*> verified{&registry.primary};
        for (const auto& f : registry.fallbacks)
            if (f.verified) verified.push_back(&f);
        if (verified.size() < 2)
            throw error("rotate_variant needs at least 2 verified variants");
        std::size_t active_pos = verified.size();
        for (std::size_t i = 0; i < verified.size(); ++i)
            if (verified[i]->id == registry.active_id) active_pos = i;
        if (active_pos == verified.size())
            throw error("active module is not verified; refusing to rotate from it");
        outcome.registry.active_id = verified[(active_pos + 1) % verified.size()]->id;
        return outcome;
    }

    if (n_offsets == 0) throw invalid_argument("rerandomize_offsets needs n_offsets >= 1");
    if (!(interval_s > 0.0)) throw invalid_argument("interval must be > 0");
    Rng rng = Rng(seed).fork(0x0ff5e75);
    outcome.offsets.resize(n_offsets);
    bool distinct = false;
    while (!distinct) {
        for (auto& off : outcome.offsets) off = rng.uniform() * interval_s;
        std::vector<double> sorted = outcome.offsets;
        std::sort(sorted.begin(), sorted.end());
        distinct = std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end();
    }
    return outcome;
}

std::string safety_report_to_json(const SafetyReport& report) {
    ordered_json j;
    j["ok"] = report.ok();
    ordered_json violations = ordered_json::array();
    for (const auto& v : report.violations)
        violations.push_back({{"time", ordered_json::parse(fmt_time_6(v.time))},
                              {"active_id", v.active_id},
                              {"unresolved_event", v.unresolved_event}});
    j["violations"] = std::move(violations);
    return j.dump(2) + "\n";
}

SafetyReport audit(const ModuleRegistry& initial_registry, const ActionLog& log,
                   const std::vector<CoordinatorEvent>& events,
                   const std::vector<ProcessingRecord>& processing) {
    check_registry(initial_registry);
    for (std::size_t i = 1; i < events.size(); ++i)
        if (events[i].time < events[i - 1].time)
            throw invalid_argument("audit event history is not time-ordered");
    for (std::size_t i = 1; i < processing.size(); ++i)
        if (processing[i].time < processing[i - 1].time)
            throw invalid_argument("audit processing history is not time-ordered");

    // Merge the three streams; at equal times events land first, then the
    // coordinator's reaction, then sample processing.
    struct Item {
        double time;
        int phase;  // 0 = event, 1 = action, 2 = processing
        std::size_t index;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < events.size(); ++i) items.push_back({events[i].time, 0, i});
    for (std::size_t i = 0; i < log.entries().size(); ++i)
        items.push_back({log.entries()[i].action.time, 1, i});
    for (std::size_t i = 0; i < processing.size(); ++i)
        items.push_back({processing[i].time, 2, i});
    std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        if (a.time != b.time) return a.time < b.time;
        return a.phase < b.phase;
    });

    SafetyReport report;
    std::string active = initial_registry.active_id;
    bool halted = false;
    // A compromise signal opens a violation window against the module active
    // at that instant. Further signals of an already-open cause belong to the
    // same episode and open nothing new (repeated alerts while the fallback is
    // active do not indict the fallback). A window closes when control leaves
    // the flagged module or when the matching clear signal arrives.
    struct Window {
        CoordinatorEventKind kind;
        std::string module_id;
        std::string description;
    };
    std::vector<Window> windows;
    std::set<CoordinatorEventKind> open_causes;

    const auto close_kind = [&](CoordinatorEventKind signal_kind) {
        open_causes.erase(signal_kind);
        std::erase_if(windows, [signal_kind](const Window& w) { return w.kind == signal_kind; });
    };

    for (const Item& item : items) {
        if (item.phase == 0) {
            const CoordinatorEvent& e = events[item.index];
            switch (e.kind) {
                case CoordinatorEventKind::IntegrityMismatch:
                case CoordinatorEventKind::AnomalyAlert:
                    if (open_causes.insert(e.kind).second)
                        windows.push_back({e.kind, active, describe_event(e)});
                    break;
                case CoordinatorEventKind::IntegrityMatch:
                    close_kind(CoordinatorEventKind::IntegrityMismatch);
                    break;
                case CoordinatorEventKind::AnomalyCleared:
                    close_kind(CoordinatorEventKind::AnomalyAlert);
                    break;
            }
        } else if (item.phase == 1) {
            const LoggedAction& la = log.entries()[item.index];
            switch (la.action.kind) {
                case ActionKind::SwitchToFallback:
                case ActionKind::SwitchToPrimary:
                case ActionKind::Shuffle: {
                    if (!la.action.target_id.empty()) {
                        if (initial_registry.find(la.action.target_id) == nullptr) {
                            report.violations.push_back(
                                {la.action.time, la.action.target_id, "switch to unregistered module"});
                        } else {
                            active = la.action.target_id;
                            std::erase_if(windows, [&active](const Window& w) {
                                return w.module_id != active;
                            });
                        }
                    }
                    break;
                }
                case ActionKind::SafeStop:
                    halted = true;
                    break;
                case ActionKind::RestoreRequested:
                    break;
            }
        } else {
            const ProcessingRecord& rec = processing[item.index];
            if (halted) {
                report.violations.push_back(
                    {rec.time, rec.module_id, "processing after safe-stop"});
                continue;
            }
            if (rec.module_id != active) {
                report.violations.push_back(
                    {rec.time, rec.module_id, "processing by a non-active module"});
                continue;
            }
            for (const Window& w : windows) {
                if (w.module_id == rec.module_id) {
                    report.violations.push_back({rec.time, rec.module_id, w.description});
                    break;
                }
            }
        }
    }
    return report;
}

Coordinator::Coordinator(ModuleRegistry registry, int debounce_n) {
    check_registry(registry);
    if (debounce_n < 1) throw invalid_argument("debounce must be >= 1");
    state_.registry = std::move(registry);
    state_.debounce_n = debounce_n;
}

std::vector<Action> Coordinator::on_event(const CoordinatorEvent& event) {
    TransitionResult result = transition(state_, event);
    state_ = std::move(result.state);
    events_.push_back(event);
    for (const Action& a : result.actions) log_.append(a, describe_event(event));
    return result.actions;
}

ShuffleOutcome Coordinator::apply_shuffle(std::uint64_t seed, ShufflePolicy policy, double time,
                                          double interval_s, std::size_t n_offsets) {
    if (state_.mode == CoordinatorMode::FallbackActive)
        throw error("shuffle forbidden while a fallback episode is in progress");
    if (state_.mode == CoordinatorMode::SafeStopped)
        throw error("shuffle forbidden after safe-stop");
    ShuffleOutcome outcome = shuffle(state_.registry, seed, policy, interval_s, n_offsets);
    state_.registry = outcome.registry;
    Action a;
    a.kind = ActionKind::Shuffle;
    a.time = time;
    a.target_id = outcome.registry.active_id;
    a.detail = policy == ShufflePolicy::RotateVariant ? "rotate_variant" : "rerandomize_offsets";
    log_.append(std::move(a), "shuffle@" + fmt_time_6(time));
    return outcome;
}

}  // namespace avr
