// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "avr/clock.hpp"
#include "avr/integrity.hpp"

namespace avr {

enum class ScheduleMode : unsigned char { FixedInterval, Staggered, EventDriven };
const char* to_string(ScheduleMode m);
ScheduleMode schedule_mode_from_string(const std::string& s);

enum class Trigger : unsigned char { OnUpdate, OnRestart, OnCheckpoint };
const char* to_string(Trigger t);
Trigger trigger_from_string(const std::string& s);

struct SchedulePolicy {
    ScheduleMode mode = ScheduleMode::FixedInterval;
    double interval_s = 1.0;             // fixed_interval and staggered
    std::vector<double> offsets;         // staggered: one per artifact, each in [0, interval)
    std::set<Trigger> triggers;          // event_driven

    static SchedulePolicy fixed(double interval_s);
    static SchedulePolicy staggered(double interval_s, std::vector<double> offsets);
    // Evenly spaced offsets interval*i/n.
    static SchedulePolicy staggered_even(double interval_s, std::size_t n_artifacts);
    static SchedulePolicy event_driven(std::set<Trigger> triggers);
};

// Throws unless interval > 0, offsets lie in [0, interval) and match the
// artifact count, and event_driven policies name at least one trigger.
void check_policy(const SchedulePolicy& policy, std::size_t n_artifacts);

struct ValidationTick {
    double time = 0.0;
    std::vector<std::string> artifact_ids;  // empty means every artifact
};

// All validation instants in (t0, until], strictly ordered. Ticks that land
// on the same instant are merged. Event-driven policies produce no ticks.
std::vector<ValidationTick> enumerate_ticks(const SchedulePolicy& policy,
                                            const std::vector<std::string>& artifact_ids,
                                            double t0, double until);

// Runs every tick against the current on-disk state using a virtual clock.
std::vector<ValidationEvent> run_schedule(const ArtifactManifest& manifest,
                                          const TrustedBaseline& baseline,
                                          const SchedulePolicy& policy, double t0, double until);

// Ordered, lossless single-consumer channel.
template <typename T>
class EventChannel {
public:
    void push(T value) {
        {
            std::lock_guard lock(mutex_);
            if (closed_) throw error("push on closed channel");
            queue_.push_back(std::move(value));
        }
        cv_.notify_one();
    }

    // Blocks until a value or close; nullopt signals a drained, closed channel.
    std::optional<T> pop() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return !queue_.empty() || closed_; });
        if (queue_.empty()) return std::nullopt;
        T value = std::move(queue_.front());
        queue_.pop_front();
        return value;
    }

    std::optional<T> try_pop() {
        std::lock_guard lock(mutex_);
        if (queue_.empty()) return std::nullopt;
        T value = std::move(queue_.front());
        queue_.pop_front();
        return value;
    }

    void close() {
        {
            std::lock_guard lock(mutex_);
            closed_ = true;
        }
        cv_.notify_all();
    }

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<T> queue_;
    bool closed_ = false;
};

// Wall-clock scheduler: validates on its own thread and delivers events over
// the channel in strict time order. A backwards clock reading is fatal.
class ScheduledValidator {
public:
    ScheduledValidator(const ArtifactManifest& manifest, const TrustedBaseline& baseline,
                       SchedulePolicy policy, Clock& clock,
                       EventChannel<ValidationEvent>& channel);
    ~ScheduledValidator();

    ScheduledValidator(const ScheduledValidator&) = delete;
    ScheduledValidator& operator=(const ScheduledValidator&) = delete;

    // Event-driven entry point; also valid alongside periodic modes.
    void trigger(Trigger t);
    void stop();
    // Empty when the scheduler is healthy.
    std::string fatal_error() const;

private:
    void run_loop(std::stop_token token);
    void emit(ValidationEvent event);

    const ArtifactManifest& manifest_;
    const TrustedBaseline& baseline_;
    SchedulePolicy policy_;
    Clock& clock_;
    EventChannel<ValidationEvent>& channel_;
    mutable std::mutex state_mutex_;
    double last_emit_time_ = -1.0;
    std::string fatal_;
    std::jthread worker_;
};

// Folds a stream of possibly partial validation events into a whole-store
// view, so one clean artifact cannot clear a compromise recorded on another.
class IntegrityMonitor {
public:
    enum class Signal : unsigned char { None, Mismatch, AllClear };

    Signal observe(const ValidationEvent& event);
    const std::set<std::string>& compromised() const { return compromised_; }

private:
    std::set<std::string> compromised_;
};

void append_event_log(const std::filesystem::path& path, const ValidationEvent& event);
std::vector<ValidationEvent> read_event_log(const std::filesystem::path& path);

}  // namespace avr
