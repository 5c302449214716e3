#pragma once

#include <chrono>
#include <compare>
#include <optional>
#include <string>
#include <string_view>

#include <absl/time/civil_time.h>
#include <absl/time/time.h>

namespace protoflow {

using Duration = std::chrono::milliseconds;
using Instant = std::chrono::sys_time<std::chrono::milliseconds>;

/// Parses "YYYY-MM-DDTHH:MM:SS[.fff]Z" (offsets like +02:00 are accepted too).
/// Throws std::invalid_argument on malformed input.
Instant parse_rfc3339(std::string_view text);

/// Always UTC; milliseconds are emitted only when non-zero.
std::string format_rfc3339(Instant t);

std::optional<Instant> try_parse_rfc3339(std::string_view text);

/// Compact duration literal as used by the protocol language: "90s", "15m", "11h", "2d".
/// Picks the largest unit that divides the value exactly.
std::string format_duration(Duration d);

/// Parses "<integer><unit>" with unit in {s, m, h, d}.
std::optional<Duration> parse_duration(std::string_view text);

/// Wall-clock time of day, 24-hour.
struct LocalTime {
    int hour = 0;
    int minute = 0;

    auto operator<=>(const LocalTime&) const = default;
    int minutes_since_midnight() const { return hour * 60 + minute; }
};

std::string format_local_time(LocalTime t);          // "HH:MM"
std::optional<LocalTime> parse_local_time(std::string_view text);

/// IANA time zone wrapper. Loading is cached process-wide.
class TimeZone {
public:
    /// Throws std::invalid_argument for unknown zone names.
    static TimeZone load(const std::string& name);
    static TimeZone utc();

    const std::string& name() const { return name_; }

    absl::CivilDay local_date(Instant t) const;
    absl::CivilSecond local_civil(Instant t) const;
    LocalTime local_time_of_day(Instant t) const;

    /// Instant of a civil time in this zone. A time falling in a
    /// spring-forward gap maps to the first valid instant after the gap;
    /// a repeated (fall-back) time maps to its first occurrence.
    Instant at(absl::CivilDay day, LocalTime time) const;
    Instant at(absl::CivilSecond civil) const;

private:
    TimeZone(std::string name, absl::TimeZone tz) : name_(std::move(name)), tz_(tz) {}

    std::string name_;
    absl::TimeZone tz_;
};

inline absl::Time to_absl(Instant t) { return absl::FromUnixMillis(t.time_since_epoch().count()); }
inline Instant from_absl(absl::Time t) { return Instant{Duration{absl::ToUnixMillis(t)}}; }

std::string format_civil_day(absl::CivilDay day);   // "YYYY-MM-DD"
std::optional<absl::CivilDay> parse_civil_day(std::string_view text);

} // namespace protoflow
