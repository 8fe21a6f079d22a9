// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "avr/types.hpp"

namespace avr {

struct ModuleDescriptor {
    std::string id;
    std::string variant_tag;
    bool verified = false;
};

struct ModuleRegistry {
    ModuleDescriptor primary;
    std::vector<ModuleDescriptor> fallbacks;
    std::string active_id;

    const ModuleDescriptor* find(const std::string& id) const;
    const ModuleDescriptor* first_verified_fallback() const;
    bool primary_active() const { return active_id == primary.id; }
};

// Throws on duplicate ids or an active_id naming no registered module.
void check_registry(const ModuleRegistry& registry);

enum class CoordinatorEventKind : unsigned char {
    IntegrityMismatch,
    IntegrityMatch,
    AnomalyAlert,
    AnomalyCleared,
};
const char* to_string(CoordinatorEventKind k);

struct CoordinatorEvent {
    CoordinatorEventKind kind = CoordinatorEventKind::IntegrityMatch;
    double time = 0.0;
    std::string source;                  // "integrity-guard" or "anomaly-ids"
    std::vector<std::string> artifacts;  // IntegrityMismatch only
    double score = 0.0;                  // AnomalyAlert only
    double threshold = 0.0;              // AnomalyAlert only

    static CoordinatorEvent integrity_mismatch(double time, std::vector<std::string> artifacts);
    static CoordinatorEvent integrity_match(double time);
    // Throws unless score > threshold; an alert asserts a strict exceedance.
    static CoordinatorEvent anomaly_alert(double time, double score, double threshold);
    static CoordinatorEvent anomaly_cleared(double time);
};

enum class ActionKind : unsigned char {
    SwitchToFallback,
    RestoreRequested,
    SwitchToPrimary,
    Shuffle,
    SafeStop,
};
const char* to_string(ActionKind k);

struct Action {
    ActionKind kind = ActionKind::SwitchToFallback;
    double time = 0.0;
    std::string target_id;               // switch target / shuffle activation
    std::vector<std::string> artifacts;  // RestoreRequested
    std::string detail;
};

struct LoggedAction {
    std::uint64_t seq = 0;
    Action action;
    std::string trigger;  // description of the triggering event
};

class ActionLog {
public:
    // Times must be non-decreasing; (time, seq) is strictly increasing.
    void append(Action action, const std::string& trigger);
    const std::vector<LoggedAction>& entries() const { return entries_; }

    void save(const std::filesystem::path& path) const;  // newline-delimited JSON
    static ActionLog load(const std::filesystem::path& path);

private:
    std::vector<LoggedAction> entries_;
};

enum class CoordinatorMode : unsigned char { NormalOp, FallbackActive, SafeStopped };
const char* to_string(CoordinatorMode m);
CoordinatorMode coordinator_mode_from_string(const std::string& s);

enum class CompromiseCause : unsigned char { Integrity, Anomaly };

struct CoordinatorState {
    CoordinatorMode mode = CoordinatorMode::NormalOp;
    ModuleRegistry registry;
    std::vector<CompromiseCause> causes;  // unresolved causes; recovery needs all cleared
    std::set<std::string> restore_pending;
    std::map<std::string, CoordinatorEvent> last_event_per_source;
    double last_event_time = 0.0;
    bool any_event_seen = false;
    int consecutive_alerts = 0;  // debounce counter for anomaly alerts
    int debounce_n = 1;

    bool has_cause(CompromiseCause c) const;
};

struct TransitionResult {
    CoordinatorState state;
    std::vector<Action> actions;
};

// Pure state-machine step. Rejects events older than the last processed one.
TransitionResult transition(const CoordinatorState& state, const CoordinatorEvent& event);

enum class ShufflePolicy : unsigned char { RotateVariant, RerandomizeOffsets };

struct ShuffleOutcome {
    ModuleRegistry registry;
    std::vector<double> offsets;  // RerandomizeOffsets only
};

// rotate_variant: activates the next verified module in registration order
// (the primary counts as verified). rerandomize_offsets: fresh distinct
// staggered offsets in [0, interval).
ShuffleOutcome shuffle(const ModuleRegistry& registry, std::uint64_t seed, ShufflePolicy policy,
                       double interval_s = 1.0, std::size_t n_offsets = 0);

struct ProcessingRecord {
    double time = 0.0;
    std::string module_id;
};

struct SafetyViolation {
    double time = 0.0;
    std::string active_id;
    std::string unresolved_event;
};

struct SafetyReport {
    std::vector<SafetyViolation> violations;
    bool ok() const { return violations.empty(); }
};

std::string safety_report_to_json(const SafetyReport& report);

// Replays log + events against the processing history and flags every sample
// processed by a module with an unresolved compromise signal.
SafetyReport audit(const ModuleRegistry& initial_registry, const ActionLog& log,
                   const std::vector<CoordinatorEvent>& events,
                   const std::vector<ProcessingRecord>& processing);

// Stateful wrapper: applies transitions and maintains the action log.
class Coordinator {
public:
    explicit Coordinator(ModuleRegistry registry, int debounce_n = 1);

    std::vector<Action> on_event(const CoordinatorEvent& event);
    // Shuffles are forbidden while a fallback episode is in progress.
    ShuffleOutcome apply_shuffle(std::uint64_t seed, ShufflePolicy policy, double time,
                                 double interval_s = 1.0, std::size_t n_offsets = 0);

    const CoordinatorState& state() const { return state_; }
    const ActionLog& log() const { return log_; }
    const std::vector<CoordinatorEvent>& events_seen() const { return events_; }

private:
    CoordinatorState state_;
    ActionLog log_;
    std::vector<CoordinatorEvent> events_;
};

}  // namespace avr
