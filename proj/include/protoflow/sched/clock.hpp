#pragma once

#include <atomic>
#include <stdexcept>

#include "protoflow/common/time.hpp"

namespace protoflow::sched {

class Clock {
public:
    virtual ~Clock() = default;
    virtual Instant now() const = 0;
};

/// Wall clock truncated to milliseconds. Never goes backwards even if the
/// system clock is stepped.
class SystemClock final : public Clock {
public:
    Instant now() const override;

private:
    mutable std::atomic<std::int64_t> last_{0};
};

class ClockRegression : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Manually driven clock for simulations and tests.
class VirtualClock final : public Clock {
public:
    explicit VirtualClock(Instant start) : now_(start.time_since_epoch().count()) {}

    Instant now() const override { return Instant{Duration{now_.load()}}; }
    void advance(Duration d);
    /// Throws ClockRegression when `t` is before now().
    void set(Instant t);

private:
    std::atomic<std::int64_t> now_;
};

} // namespace protoflow::sched
