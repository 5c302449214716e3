#include "protoflow/sched/scheduler.hpp"

namespace protoflow::sched {

nlohmann::json to_json(const TimedEvent& e) {
    nlohmann::json j{{"participant_id", e.participant_id},
                     {"timer_id", e.timer_id},
                     {"due_at", format_rfc3339(e.due_at)},
                     {"payload", e.payload},
                     {"enqueue_seq", e.enqueue_seq}};
    if (e.recurrence) {
        j["recurrence"] = {{"daily_at", format_local_time(e.recurrence->time)}, {"timezone", e.recurrence->timezone}};
    } else {
        j["recurrence"] = nullptr;
    }
    return j;
}

TimedEvent timed_event_from_json(const nlohmann::json& j) {
    TimedEvent e;
    e.participant_id = j.at("participant_id").get<std::string>();
    e.timer_id = j.at("timer_id").get<std::string>();
    e.due_at = parse_rfc3339(j.at("due_at").get<std::string>());
    e.payload = j.at("payload").get<std::string>();
    e.enqueue_seq = j.at("enqueue_seq").get<std::uint64_t>();
    if (const auto& r = j.at("recurrence"); !r.is_null()) {
        auto t = parse_local_time(r.at("daily_at").get<std::string>());
        if (!t) throw std::invalid_argument("bad daily_at in timer " + e.timer_id);
        e.recurrence = DailyAt{*t, r.at("timezone").get<std::string>()};
    }
    return e;
}

Instant next_daily(const DailyAt& rule, Instant after) {
    const auto tz = TimeZone::load(rule.timezone);
    auto day = tz.local_date(after);
    auto candidate = tz.at(day, rule.time);
    while (candidate <= after) {
        ++day;
        candidate = tz.at(day, rule.time);
    }
    return candidate;
}

ScheduleResult Scheduler::schedule_at(const std::string& participant_id, const std::string& timer_id, Instant due_at,
                                      std::string payload, std::optional<DailyAt> recurrence) {
    if (recurrence) TimeZone::load(recurrence->timezone);  // fail before mutating
    ScheduleResult out;
    Id id{participant_id, timer_id};
    if (auto it = by_id_.find(id); it != by_id_.end()) {
        auto q = queue_.find(it->second);
        out.replaced = q->second;
        queue_.erase(q);
        by_id_.erase(it);
    }
    TimedEvent e{participant_id, timer_id, due_at, std::move(payload), next_seq_++, std::move(recurrence)};
    Key key{e.due_at, e.enqueue_seq};
    queue_.emplace(key, e);
    by_id_.emplace(std::move(id), key);
    out.event = std::move(e);
    return out;
}

ScheduleResult Scheduler::schedule_daily(const std::string& participant_id, const std::string& timer_id,
                                         const DailyAt& rule, Instant now, std::string payload) {
    return schedule_at(participant_id, timer_id, next_daily(rule, now), std::move(payload), rule);
}

bool Scheduler::cancel(const std::string& participant_id, const std::string& timer_id) {
    auto it = by_id_.find({participant_id, timer_id});
    if (it == by_id_.end()) return false;
    queue_.erase(it->second);
    by_id_.erase(it);
    return true;
}

std::size_t Scheduler::cancel_all(const std::string& participant_id) {
    std::size_t n = 0;
    for (auto it = by_id_.lower_bound({participant_id, ""}); it != by_id_.end() && it->first.first == participant_id;) {
        queue_.erase(it->second);
        it = by_id_.erase(it);
        ++n;
    }
    return n;
}

void Scheduler::check_monotone(Instant now) {
    if (last_tick_ && now < *last_tick_) {
        throw ClockRegression("scheduler tick at " + format_rfc3339(now) + " precedes previous tick at " +
                              format_rfc3339(*last_tick_));
    }
    last_tick_ = now;
}

std::optional<TimedEvent> Scheduler::pop_due(Instant now) {
    check_monotone(now);
    if (queue_.empty() || queue_.begin()->first.first > now) return std::nullopt;
    auto fired = queue_.begin()->second;
    queue_.erase(queue_.begin());
    by_id_.erase({fired.participant_id, fired.timer_id});
    if (fired.recurrence) {
        const auto next = next_daily(*fired.recurrence, catch_up_ ? std::max(now, fired.due_at) : fired.due_at);
        schedule_at(fired.participant_id, fired.timer_id, next, fired.payload, fired.recurrence);
    }
    return fired;
}

std::vector<TimedEvent> Scheduler::tick(Instant now) {
    check_monotone(now);
    std::vector<TimedEvent> out;
    while (auto e = pop_due(now)) out.push_back(std::move(*e));
    return out;
}

std::optional<Instant> Scheduler::next_due() const {
    if (queue_.empty()) return std::nullopt;
    return queue_.begin()->first.first;
}

std::optional<TimedEvent> Scheduler::find(const std::string& participant_id, const std::string& timer_id) const {
    auto it = by_id_.find({participant_id, timer_id});
    if (it == by_id_.end()) return std::nullopt;
    return queue_.at(it->second);
}

std::vector<TimedEvent> Scheduler::active() const {
    std::vector<TimedEvent> out;
    out.reserve(queue_.size());
    for (const auto& [_, e] : queue_) out.push_back(e);
    return out;
}

nlohmann::json Scheduler::encode() const {
    auto events = nlohmann::json::array();
    for (const auto& [_, e] : queue_) events.push_back(to_json(e));
    return {{"events", std::move(events)},
            {"next_seq", next_seq_},
            {"last_tick", last_tick_ ? nlohmann::json(format_rfc3339(*last_tick_)) : nlohmann::json()}};
}

Scheduler Scheduler::decode(const nlohmann::json& j) {
    Scheduler s;
    for (const auto& ej : j.at("events")) {
        auto e = timed_event_from_json(ej);
        Key key{e.due_at, e.enqueue_seq};
        s.by_id_.emplace(Id{e.participant_id, e.timer_id}, key);
        s.queue_.emplace(key, std::move(e));
    }
    s.next_seq_ = j.at("next_seq").get<std::uint64_t>();
    if (const auto& t = j.at("last_tick"); !t.is_null()) s.last_tick_ = parse_rfc3339(t.get<std::string>());
    return s;
}

} // namespace protoflow::sched
