#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoflow/common/time.hpp"
#include "protoflow/sched/clock.hpp"

namespace protoflow::sched {

/// Fires every day at `time` in `timezone`.
struct DailyAt {
    LocalTime time;
    std::string timezone;

    bool operator==(const DailyAt&) const = default;
};

struct TimedEvent {
    std::string participant_id;
    std::string timer_id;
    Instant due_at{};
    std::string payload;  // trigger key delivered when the timer fires
    std::uint64_t enqueue_seq = 0;
    std::optional<DailyAt> recurrence;

    bool operator==(const TimedEvent&) const = default;
};

nlohmann::json to_json(const TimedEvent& e);
TimedEvent timed_event_from_json(const nlohmann::json& j);

/// First daily occurrence strictly after `after`. Gap times resolve to the
/// first valid instant after the gap.
Instant next_daily(const DailyAt& rule, Instant after);

struct ScheduleResult {
    TimedEvent event;
    std::optional<TimedEvent> replaced;
};

/// Timer queue ordered by (due_at, enqueue_seq). At most one active timer per
/// (participant, timer id); scheduling again replaces it.
class Scheduler {
public:
    ScheduleResult schedule_at(const std::string& participant_id, const std::string& timer_id, Instant due_at,
                               std::string payload, std::optional<DailyAt> recurrence = std::nullopt);

    /// Schedules the next occurrence of `rule` after `now`.
    ScheduleResult schedule_daily(const std::string& participant_id, const std::string& timer_id, const DailyAt& rule,
                                  Instant now, std::string payload);

    bool cancel(const std::string& participant_id, const std::string& timer_id);
    std::size_t cancel_all(const std::string& participant_id);

    /// Pops every event due at or before `now`, in (due_at, enqueue_seq)
    /// order, re-enqueueing recurrences. Recurrences re-enqueued here can fire
    /// again within the same call when they fall due before `now`.
    /// Throws ClockRegression if `now` precedes an earlier tick.
    std::vector<TimedEvent> tick(Instant now);

    /// Single-step form of tick(): the earliest event due at or before `now`.
    std::optional<TimedEvent> pop_due(Instant now);

    std::optional<Instant> next_due() const;
    std::optional<TimedEvent> find(const std::string& participant_id, const std::string& timer_id) const;
    /// Active events in firing order.
    std::vector<TimedEvent> active() const;
    std::size_t size() const { return by_id_.size(); }
    std::optional<Instant> last_tick() const { return last_tick_; }

    /// After downtime: each recurring timer fires once, then skips ahead to
    /// its next occurrence after the current time instead of replaying every
    /// missed period. Cleared by set_catch_up(false).
    void set_catch_up(bool on) { catch_up_ = on; }
    bool catch_up() const { return catch_up_; }

    nlohmann::json encode() const;
    static Scheduler decode(const nlohmann::json& j);

private:
    using Key = std::pair<Instant, std::uint64_t>;
    using Id = std::pair<std::string, std::string>;

    void check_monotone(Instant now);

    std::map<Key, TimedEvent> queue_;
    std::map<Id, Key> by_id_;
    std::uint64_t next_seq_ = 1;
    std::optional<Instant> last_tick_;
    bool catch_up_ = false;
};

} // namespace protoflow::sched
