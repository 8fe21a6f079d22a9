// SPDX-License-Identifier: Apache-2.0
#include "avr/schedule.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace avr {

namespace {
constexpr double kTimeEps = 1e-9;
}

const char* to_string(ScheduleMode m) {
    switch (m) {
        case ScheduleMode::FixedInterval: return "fixed";
        case ScheduleMode::Staggered: return "staggered";
        case ScheduleMode::EventDriven: return "event";
    }
    return "fixed";
}

ScheduleMode schedule_mode_from_string(const std::string& s) {
    if (s == "fixed" || s == "fixed_interval") return ScheduleMode::FixedInterval;
    if (s == "staggered") return ScheduleMode::Staggered;
    if (s == "event" || s == "event_driven") return ScheduleMode::EventDriven;
    throw invalid_argument("unknown schedule mode: " + s);
}

const char* to_string(Trigger t) {
    switch (t) {
        case Trigger::OnUpdate: return "on-update";
        case Trigger::OnRestart: return "on-restart";
        case Trigger::OnCheckpoint: return "on-checkpoint";
    }
    return "on-update";
}

Trigger trigger_from_string(const std::string& s) {
    if (s == "on-update") return Trigger::OnUpdate;
    if (s == "on-restart") return Trigger::OnRestart;
    if (s == "on-checkpoint") return Trigger::OnCheckpoint;
    throw invalid_argument("unknown trigger: " + s);
}

SchedulePolicy SchedulePolicy::fixed(double interval_s) {
    SchedulePolicy p;
    p.mode = ScheduleMode::FixedInterval;
    p.interval_s = interval_s;
    return p;
}

SchedulePolicy SchedulePolicy::staggered(double interval_s, std::vector<double> offsets) {
    SchedulePolicy p;
    p.mode = ScheduleMode::Staggered;
    p.interval_s = interval_s;
    p.offsets = std::move(offsets);
    return p;
}

SchedulePolicy SchedulePolicy::staggered_even(double interval_s, std::size_t n_artifacts) {
    std::vector<double> offsets(n_artifacts);
    for (std::size_t i = 0; i < n_artifacts; ++i)
        offsets[i] = interval_s * static_cast<double>(i) / static_cast<double>(n_artifacts);
    return staggered(interval_s, std::move(offsets));
}

SchedulePolicy SchedulePolicy::event_driven(std::set<Trigger> triggers) {
    SchedulePolicy p;
    p.mode = ScheduleMode::EventDriven;
    p.triggers = std::move(triggers);
    return p;
}

void check_policy(const SchedulePolicy& policy, std::size_t n_artifacts) {
    switch (policy.mode) {
        case ScheduleMode::FixedInterval:
            if (!(policy.interval_s > 0.0)) throw invalid_argument("interval must be > 0");
            break;
        case ScheduleMode::Staggered:
            if (!(policy.interval_s > 0.0)) throw invalid_argument("interval must be > 0");
            if (policy.offsets.size() != n_artifacts)
                throw invalid_argument("staggered policy needs one offset per artifact (" +
                                       std::to_string(n_artifacts) + " artifacts, " +
                                       std::to_string(policy.offsets.size()) + " offsets)");
            for (double off : policy.offsets)
                if (!(off >= 0.0 && off < policy.interval_s))
                    throw invalid_argument("staggered offsets must lie in [0, interval)");
            break;
        case ScheduleMode::EventDriven:
            if (policy.triggers.empty())
                throw invalid_argument("event-driven policy needs at least one trigger");
            break;
    }
}

std::vector<ValidationTick> enumerate_ticks(const SchedulePolicy& policy,
                                            const std::vector<std::string>& artifact_ids,
                                            double t0, double until) {
    check_policy(policy, artifact_ids.size());
    if (until < t0) throw invalid_argument("schedule end precedes start");

    std::vector<ValidationTick> ticks;
    if (policy.mode == ScheduleMode::FixedInterval) {
        for (std::uint64_t n = 1;; ++n) {
            const double t = t0 + static_cast<double>(n) * policy.interval_s;
            if (t > until + kTimeEps) break;
            ticks.push_back({t, {}});
        }
        return ticks;
    }
    if (policy.mode == ScheduleMode::EventDriven) return ticks;

    // Staggered: same-instant checks merge into one tick, keeping the event
    // stream strictly time-ordered even with colliding offsets.
    std::map<double, std::vector<std::string>> by_time;
    for (std::size_t i = 0; i < artifact_ids.size(); ++i) {
        for (std::uint64_t n = 0;; ++n) {
            const double t = t0 + policy.offsets[i] + static_cast<double>(n) * policy.interval_s;
            if (t > until + kTimeEps) break;
            if (t > t0) by_time[t].push_back(artifact_ids[i]);
        }
    }
    for (auto& [t, ids] : by_time) ticks.push_back({t, std::move(ids)});
    return ticks;
}

std::vector<ValidationEvent> run_schedule(const ArtifactManifest& manifest,
                                          const TrustedBaseline& baseline,
                                          const SchedulePolicy& policy, double t0, double until) {
    std::vector<std::string> ids;
    for (const auto& e : manifest.entries) ids.push_back(e.artifact_id);
    std::vector<ValidationEvent> events;
    for (const ValidationTick& tick : enumerate_ticks(policy, ids, t0, until))
        events.push_back(validate_once(manifest, baseline, tick.time, tick.artifact_ids));
    return events;
}

ScheduledValidator::ScheduledValidator(const ArtifactManifest& manifest,
                                       const TrustedBaseline& baseline, SchedulePolicy policy,
                                       Clock& clock, EventChannel<ValidationEvent>& channel)
    : manifest_(manifest),
      baseline_(baseline),
      policy_(std::move(policy)),
      clock_(clock),
      channel_(channel) {
    check_manifest(manifest_);
    check_policy(policy_, manifest_.entries.size());
    worker_ = std::jthread([this](std::stop_token token) { run_loop(token); });
}

ScheduledValidator::~ScheduledValidator() { stop(); }

void ScheduledValidator::stop() {
    if (worker_.joinable()) {
        worker_.request_stop();
        worker_.join();
    }
    channel_.close();
}

std::string ScheduledValidator::fatal_error() const {
    std::lock_guard lock(state_mutex_);
    return fatal_;
}

void ScheduledValidator::emit(ValidationEvent event) {
    std::lock_guard lock(state_mutex_);
    // Nudge forward so the delivered stream stays strictly ordered even when
    // two validations complete within clock resolution.
    if (event.time <= last_emit_time_) event.time = last_emit_time_ + 1e-9;
    last_emit_time_ = event.time;
    channel_.push(std::move(event));
}

void ScheduledValidator::trigger(Trigger t) {
    {
        std::lock_guard lock(state_mutex_);
        if (!fatal_.empty()) throw error(fatal_);
    }
    if (policy_.mode != ScheduleMode::EventDriven || policy_.triggers.count(t) == 0) return;
    emit(validate_once(manifest_, baseline_, clock_.now()));
}

void ScheduledValidator::run_loop(std::stop_token token) {
    try {
        double last_seen = clock_.now();
        auto read_clock = [&] {
            const double t = clock_.now();
            if (t < last_seen) throw error("scheduler clock went backwards");
            last_seen = t;
            return t;
        };

        struct Train {
            double next;
            std::vector<std::string> ids;  // empty = all artifacts
        };
        std::vector<Train> trains;
        const double t0 = last_seen;
        if (policy_.mode == ScheduleMode::FixedInterval) {
            trains.push_back({t0 + policy_.interval_s, {}});
        } else if (policy_.mode == ScheduleMode::Staggered) {
            for (std::size_t i = 0; i < manifest_.entries.size(); ++i) {
                const double off = policy_.offsets[i];
                trains.push_back({off > 0.0 ? t0 + off : t0 + policy_.interval_s,
                                  {manifest_.entries[i].artifact_id}});
            }
        }

        while (!token.stop_requested()) {
            if (trains.empty()) {  // event-driven: periodic work is all trigger()-initiated
                std::this_thread::sleep_for(std::chrono::milliseconds(1));
                read_clock();
                continue;
            }
            auto next = std::min_element(trains.begin(), trains.end(),
                                         [](const Train& a, const Train& b) { return a.next < b.next; });
            const double now = read_clock();
            if (now < next->next) {
                std::this_thread::sleep_for(std::chrono::microseconds(200));
                continue;
            }
            emit(validate_once(manifest_, baseline_, now, next->ids));
            next->next += policy_.interval_s;
        }
    } catch (const std::exception& e) {
        {
            std::lock_guard lock(state_mutex_);
            fatal_ = e.what();
        }
        channel_.close();
    }
}

IntegrityMonitor::Signal IntegrityMonitor::observe(const ValidationEvent& event) {
    const bool was_compromised = !compromised_.empty();
    bool newly_bad = false;
    for (const ObservedDigest& obs : event.observed) {
        if (obs.matched) compromised_.erase(obs.artifact_id);
        else newly_bad |= compromised_.insert(obs.artifact_id).second;
    }
    if (newly_bad) return Signal::Mismatch;
    if (was_compromised && compromised_.empty()) return Signal::AllClear;
    return Signal::None;
}

void append_event_log(const std::filesystem::path& path, const ValidationEvent& event) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw error("cannot open event log " + path.string());
    out << validation_event_to_json(event) << "\n";
}

std::vector<ValidationEvent> read_event_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open event log " + path.string());
    std::vector<ValidationEvent> events;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        events.push_back(validation_event_from_json(line));
    }
    return events;
}

}  // namespace avr
