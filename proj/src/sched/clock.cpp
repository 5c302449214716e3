#include "protoflow/sched/clock.hpp"

namespace protoflow::sched {

Instant SystemClock::now() const {
    const auto t = std::chrono::time_point_cast<Duration>(std::chrono::system_clock::now()).time_since_epoch().count();
    auto prev = last_.load();
    while (t > prev && !last_.compare_exchange_weak(prev, t)) {
    }
    return Instant{Duration{std::max(t, prev)}};
}

void VirtualClock::advance(Duration d) {
    if (d < Duration::zero()) throw ClockRegression("virtual clock cannot advance by a negative duration");
    now_ += d.count();
}

void VirtualClock::set(Instant t) {
    if (t < now()) throw ClockRegression("virtual clock cannot move from " + format_rfc3339(now()) + " back to " + format_rfc3339(t));
    now_ = t.time_since_epoch().count();
}

} // namespace protoflow::sched
