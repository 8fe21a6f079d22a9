// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include <avr/clock.hpp>
#include <avr/integrity.hpp>
#include <avr/schedule.hpp>

#include "testutil.hpp"

using namespace avr;

namespace {

struct Store {
    avrtest::TempDir dir;
    ArtifactManifest manifest;
    TrustedBaseline baseline;

    Store() {
        avrtest::write_file(dir / "store/a.bin", "alpha bytes");
        avrtest::write_file(dir / "store/b.bin", "bravo bytes");
        avrtest::write_file(dir / "store/c.bin", "charlie bytes");
        manifest.base_dir = dir.path();
        manifest.entries.push_back({"a", "store/a.bin", Criticality::SafetyCritical});
        manifest.entries.push_back({"b", "store/b.bin", Criticality::SafetyCritical});
        manifest.entries.push_back({"c", "store/c.bin", Criticality::Standard});
        baseline = create_baseline(manifest, "backups", "1970-01-01T00:00:00Z");
    }

    std::vector<std::string> ids() const { return {"a", "b", "c"}; }
};

ValidationEvent match_of(double time, const std::vector<std::string>& ids) {
    ValidationEvent e;
    e.time = time;
    e.result = ValidationResult::Match;
    for (const auto& id : ids) e.observed.push_back({id, "00", true});
    return e;
}

ValidationEvent mismatch_of(double time, const std::vector<std::string>& ids) {
    ValidationEvent e;
    e.time = time;
    e.result = ValidationResult::Mismatch;
    e.mismatched = ids;
    for (const auto& id : ids) e.observed.push_back({id, "", false});
    return e;
}

// Clock whose readings move backwards; any scheduler reading it must abort.
class BackwardsClock : public Clock {
public:
    double now() override {
        t_ -= 0.5;
        return t_;
    }

private:
    double t_ = 1000.0;
};

}  // namespace

TEST_CASE("fixed-interval ticks cover (t0, until] at every multiple") {
    const SchedulePolicy policy = SchedulePolicy::fixed(1.0);
    const auto ticks = enumerate_ticks(policy, {"a", "b"}, 0.0, 10.0);
    REQUIRE(ticks.size() == 10);
    for (std::size_t i = 0; i < ticks.size(); ++i) {
        CHECK(ticks[i].time == doctest::Approx(static_cast<double>(i + 1)).epsilon(1e-12));
        CHECK(ticks[i].artifact_ids.empty());  // empty = validate everything
    }
    // t0 itself is excluded: nothing fires at 0.
    CHECK(ticks.front().time > 0.0);
}

TEST_CASE("fixed ticks with a fractional interval") {
    const auto ticks = enumerate_ticks(SchedulePolicy::fixed(0.25), {"a"}, 0.0, 1.0);
    REQUIRE(ticks.size() == 4);
    CHECK(ticks[0].time == doctest::Approx(0.25));
    CHECK(ticks[3].time == doctest::Approx(1.0));
}

TEST_CASE("staggered ticks interleave per-artifact offsets") {
    const SchedulePolicy policy = SchedulePolicy::staggered(1.0, {0.0, 0.33, 0.66});
    const auto ticks = enumerate_ticks(policy, {"a", "b", "c"}, 0.0, 2.0);

    // a fires at 1.0, 2.0 (offset 0 never fires at t0); b at 0.33, 1.33; c at 0.66, 1.66.
    REQUIRE(ticks.size() == 6);
    const double times[6] = {0.33, 0.66, 1.0, 1.33, 1.66, 2.0};
    const char* owners[6] = {"b", "c", "a", "b", "c", "a"};
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(ticks[i].time == doctest::Approx(times[i]).epsilon(1e-12));
        REQUIRE(ticks[i].artifact_ids.size() == 1);
        CHECK(ticks[i].artifact_ids[0] == owners[i]);
        if (i > 0) CHECK(ticks[i].time > ticks[i - 1].time);
    }
}

TEST_CASE("coincident staggered offsets merge into one tick") {
    const SchedulePolicy policy = SchedulePolicy::staggered(1.0, {0.5, 0.5, 0.25});
    const auto ticks = enumerate_ticks(policy, {"a", "b", "c"}, 0.0, 1.5);
    REQUIRE(ticks.size() == 4);
    CHECK(ticks[0].time == doctest::Approx(0.25));
    CHECK(ticks[0].artifact_ids == std::vector<std::string>{"c"});
    CHECK(ticks[1].time == doctest::Approx(0.5));
    CHECK(ticks[1].artifact_ids == std::vector<std::string>{"a", "b"});
    CHECK(ticks[2].time == doctest::Approx(1.25));
    CHECK(ticks[2].artifact_ids == std::vector<std::string>{"c"});
    CHECK(ticks[3].time == doctest::Approx(1.5));
    CHECK(ticks[3].artifact_ids == std::vector<std::string>{"a", "b"});
}

TEST_CASE("even staggering spreads offsets uniformly") {
    const SchedulePolicy policy = SchedulePolicy::staggered_even(1.0, 3);
    REQUIRE(policy.offsets.size() == 3);
    CHECK(policy.offsets[0] == 0.0);
    CHECK(policy.offsets[1] == doctest::Approx(1.0 / 3.0));
    CHECK(policy.offsets[2] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("event-driven policies produce no periodic ticks") {
    const SchedulePolicy policy = SchedulePolicy::event_driven({Trigger::OnUpdate});
    CHECK(enumerate_ticks(policy, {"a"}, 0.0, 100.0).empty());
}

TEST_CASE("policy validation") {
    CHECK_THROWS_AS(check_policy(SchedulePolicy::fixed(0.0), 1), invalid_argument);
    CHECK_THROWS_AS(check_policy(SchedulePolicy::fixed(-1.0), 1), invalid_argument);
    // Offset outside [0, interval).
    CHECK_THROWS_AS(check_policy(SchedulePolicy::staggered(1.0, {0.0, 1.0}), 2), invalid_argument);
    // Offset count must match the artifact count.
    CHECK_THROWS_AS(check_policy(SchedulePolicy::staggered(1.0, {0.0}), 2), invalid_argument);
    // Event-driven needs at least one trigger.
    CHECK_THROWS_AS(check_policy(SchedulePolicy::event_driven({}), 1), invalid_argument);
    CHECK_NOTHROW(check_policy(SchedulePolicy::staggered(1.0, {0.0, 0.5}), 2));
}

TEST_CASE("schedule mode and trigger strings round trip") {
    for (ScheduleMode m : {ScheduleMode::FixedInterval, ScheduleMode::Staggered, ScheduleMode::EventDriven})
        CHECK(schedule_mode_from_string(to_string(m)) == m);
    CHECK_THROWS_AS(schedule_mode_from_string("sometimes"), invalid_argument);
    for (Trigger t : {Trigger::OnUpdate, Trigger::OnRestart, Trigger::OnCheckpoint})
        CHECK(trigger_from_string(to_string(t)) == t);
    CHECK_THROWS_AS(trigger_from_string("on-demand"), invalid_argument);
}

TEST_CASE("run_schedule validates the store at every tick") {
    Store s;
    const auto events = run_schedule(s.manifest, s.baseline, SchedulePolicy::fixed(1.0), 0.0, 3.0);
    REQUIRE(events.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(events[i].time == doctest::Approx(static_cast<double>(i + 1)));
        CHECK(events[i].result == ValidationResult::Match);
        CHECK(events[i].observed.size() == 3);
    }

    // Replays are identical.
    const auto again = run_schedule(s.manifest, s.baseline, SchedulePolicy::fixed(1.0), 0.0, 3.0);
    REQUIRE(again.size() == events.size());
    for (std::size_t i = 0; i < events.size(); ++i)
        CHECK(validation_event_to_json(again[i]) == validation_event_to_json(events[i]));
}

TEST_CASE("a tamper lands at the next covering tick, within one interval") {
    Store s;
    const SchedulePolicy policy = SchedulePolicy::staggered(1.0, {0.0, 0.33, 0.66});
    const auto ticks = enumerate_ticks(policy, s.ids(), 0.0, 13.0);

    const double onset = 10.0;
    bool tampered = false;
    IntegrityMonitor monitor;
    double detected_at = -1.0;
    for (const auto& tick : ticks) {
        if (!tampered && tick.time > onset) {
            avrtest::write_file(s.dir / "store/c.bin", "tampered");
            tampered = true;
        }
        const auto event = validate_once(s.manifest, s.baseline, tick.time, tick.artifact_ids);
        const auto signal = monitor.observe(event);
        if (signal == IntegrityMonitor::Signal::Mismatch && detected_at < 0.0) detected_at = tick.time;
    }
    // c is validated at offset 0.66 of each interval; first chance after 10.0
    // is 10.66, well within one interval of the onset.
    CHECK(detected_at == doctest::Approx(10.66));
    CHECK(detected_at - onset <= 1.0);
    CHECK(monitor.compromised() == std::set<std::string>{"c"});
}

TEST_CASE("monitor signals mismatch once, stays quiet, and clears only when all clean") {
    IntegrityMonitor monitor;
    using Signal = IntegrityMonitor::Signal;

    CHECK(monitor.observe(match_of(1.0, {"a", "b", "c"})) == Signal::None);
    CHECK(monitor.observe(mismatch_of(2.0, {"a"})) == Signal::Mismatch);
    // The same compromise seen again is not news.
    CHECK(monitor.observe(mismatch_of(3.0, {"a"})) == Signal::None);
    // A clean report about some other artifact clears nothing.
    CHECK(monitor.observe(match_of(4.0, {"b"})) == Signal::None);
    CHECK(monitor.compromised() == std::set<std::string>{"a"});
    // A second bad artifact is a fresh mismatch.
    CHECK(monitor.observe(mismatch_of(5.0, {"b"})) == Signal::Mismatch);
    // Repairing only one of two keeps the alarm raised.
    CHECK(monitor.observe(match_of(6.0, {"a"})) == Signal::None);
    // Repairing the last one clears the store.
    CHECK(monitor.observe(match_of(7.0, {"b"})) == Signal::AllClear);
    CHECK(monitor.compromised().empty());
    // All-clear fires only on the transition, not on every clean pass.
    CHECK(monitor.observe(match_of(8.0, {"a", "b", "c"})) == Signal::None);
}

TEST_CASE("event log appends newline-delimited json and reads back in order") {
    Store s;
    const auto path = s.dir / "events.ndjson";
    const auto e1 = validate_once(s.manifest, s.baseline, 1.0);
    avrtest::write_file(s.dir / "store/a.bin", "bad");
    const auto e2 = validate_once(s.manifest, s.baseline, 2.0);
    append_event_log(path, e1);
    append_event_log(path, e2);

    const auto events = read_event_log(path);
    REQUIRE(events.size() == 2);
    CHECK(validation_event_to_json(events[0]) == validation_event_to_json(e1));
    CHECK(validation_event_to_json(events[1]) == validation_event_to_json(e2));
    CHECK(events[1].mismatched == std::vector<std::string>{"a"});

    CHECK_THROWS_AS(read_event_log(s.dir / "absent.ndjson"), avr::error);
}

TEST_CASE("wall-clock validator delivers ordered periodic events") {
    Store s;
    WallClock clock;
    EventChannel<ValidationEvent> channel;
    SchedulePolicy policy = SchedulePolicy::fixed(0.05);
    {
        ScheduledValidator validator(s.manifest, s.baseline, policy, clock, channel);
        std::this_thread::sleep_for(std::chrono::milliseconds(300));
        CHECK(validator.fatal_error().empty());
        validator.stop();
    }

    std::vector<ValidationEvent> events;
    while (auto e = channel.try_pop()) events.push_back(*e);
    CHECK(events.size() >= 3);
    for (std::size_t i = 0; i < events.size(); ++i) {
        CHECK(events[i].result == ValidationResult::Match);
        if (i > 0) CHECK(events[i].time > events[i - 1].time);
    }
}

TEST_CASE("wall-clock validator reports a mid-run tamper") {
    Store s;
    WallClock clock;
    EventChannel<ValidationEvent> channel;
    ScheduledValidator validator(s.manifest, s.baseline, SchedulePolicy::fixed(0.05), clock, channel);

    std::this_thread::sleep_for(std::chrono::milliseconds(120));
    avrtest::write_file(s.dir / "store/b.bin", "tampered");

    bool saw_mismatch = false;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
    while (std::chrono::steady_clock::now() < deadline) {
        auto e = channel.try_pop();
        if (!e) {
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
            continue;
        }
        if (e->result == ValidationResult::Mismatch) {
            CHECK(e->mismatched == std::vector<std::string>{"b"});
            saw_mismatch = true;
            break;
        }
    }
    validator.stop();
    CHECK(saw_mismatch);
}

TEST_CASE("event-driven validator fires only on subscribed triggers") {
    Store s;
    WallClock clock;
    EventChannel<ValidationEvent> channel;
    ScheduledValidator validator(s.manifest, s.baseline,
                                 SchedulePolicy::event_driven({Trigger::OnCheckpoint}), clock, channel);

    // No periodic work.
    std::this_thread::sleep_for(std::chrono::milliseconds(120));
    CHECK_FALSE(channel.try_pop().has_value());

    validator.trigger(Trigger::OnCheckpoint);
    auto e = channel.try_pop();
    for (int i = 0; i < 100 && !e; ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        e = channel.try_pop();
    }
    REQUIRE(e.has_value());
    CHECK(e->result == ValidationResult::Match);

    // An unsubscribed trigger is ignored.
    validator.trigger(Trigger::OnUpdate);
    std::this_thread::sleep_for(std::chrono::milliseconds(60));
    CHECK_FALSE(channel.try_pop().has_value());
    validator.stop();
}

TEST_CASE("a clock that runs backwards is fatal") {
    Store s;
    BackwardsClock clock;
    EventChannel<ValidationEvent> channel;
    ScheduledValidator validator(s.manifest, s.baseline, SchedulePolicy::fixed(0.05), clock, channel);

    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
    while (validator.fatal_error().empty() && std::chrono::steady_clock::now() < deadline)
        std::this_thread::sleep_for(std::chrono::milliseconds(5));

    CHECK_FALSE(validator.fatal_error().empty());
    CHECK_THROWS_AS(validator.trigger(Trigger::OnCheckpoint), avr::error);
    // The channel was closed; a blocking pop drains to nullopt.
    while (channel.pop().has_value()) {
    }
}

TEST_CASE("virtual clock refuses to move backwards") {
    VirtualClock clock(5.0);
    CHECK(clock.now() == 5.0);
    clock.advance_to(6.5);
    CHECK(clock.now() == 6.5);
    CHECK_THROWS_AS(clock.advance_to(6.0), avr::error);
    clock.advance_by(0.5);
    CHECK(clock.now() == 7.0);
}

TEST_CASE("event channel close wakes a blocked consumer") {
    EventChannel<int> channel;
    channel.push(1);
    channel.push(2);
    CHECK(*channel.pop() == 1);
    CHECK(*channel.pop() == 2);

    std::jthread closer([&channel] {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        channel.close();
    });
    CHECK_FALSE(channel.pop().has_value());  // blocks until closed, then drains
    CHECK_THROWS_AS(channel.push(3), avr::error);
}
